//! Residual rows as CSV: `seed,name,value`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub seed: u64,
    pub name: String,
    pub value: f64,
}

impl ResidualRow {
    pub fn new(seed: u64, name: impl Into<String>, value: f64) -> Self {
        Self { seed, name: name.into(), value }
    }
}

pub fn write_residual_csv<W: Write>(out: W, rows: &[ResidualRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_through_csv() {
        let rows = vec![ResidualRow::new(1, "critic_identity", 1e-13), ResidualRow::new(2, "bellman", 0.0)];
        let mut buf = Vec::new();
        write_residual_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("seed,name,value\n"));
        let back: Vec<ResidualRow> =
            csv::Reader::from_reader(text.as_bytes()).deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(back, rows);
    }
}
