//! Flat parameter storage and checkpoints.
//!
//! The flat view of `xi = (theta, nu, phi)` is `theta ++ nu ++ phi`: master
//! policy, then every intra-option policy in option order, then every
//! termination function in option order.
//!
//! Checkpoints hold named sections of scalars in order. Text format:
//!
//! ```text
//! optionkit-params 1
//! section theta 3
//! 0.1
//! -2
//! 0.5
//! section nu 0
//! ...
//! ```
//!
//! Binary format (little endian): magic `OKPV`, `u32` version 1, `u32`
//! section count, then per section a `u32` name length, the UTF-8 name, a
//! `u64` value count and that many `f64` values.

use std::io::{Read, Write};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    data: Vec<T>,
    theta_len: usize,
    nu_len: usize,
}

impl<T: Real> ParamVector<T> {
    pub fn zeros(theta_len: usize, nu_len: usize, phi_len: usize) -> Self {
        Self { data: vec![T::zero(); theta_len + nu_len + phi_len], theta_len, nu_len }
    }

    pub fn pack(theta: &[T], nu: &[T], phi: &[T]) -> Self {
        let mut data = Vec::with_capacity(theta.len() + nu.len() + phi.len());
        data.extend_from_slice(theta);
        data.extend_from_slice(nu);
        data.extend_from_slice(phi);
        Self { data, theta_len: theta.len(), nu_len: nu.len() }
    }

    pub fn unpack(&self) -> (Vec<T>, Vec<T>, Vec<T>) {
        (self.theta().to_vec(), self.nu().to_vec(), self.phi().to_vec())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn theta_range(&self) -> Range<usize> {
        0..self.theta_len
    }

    pub fn nu_range(&self) -> Range<usize> {
        self.theta_len..self.theta_len + self.nu_len
    }

    pub fn phi_range(&self) -> Range<usize> {
        self.theta_len + self.nu_len..self.data.len()
    }

    pub fn theta(&self) -> &[T] {
        &self.data[self.theta_range()]
    }

    pub fn nu(&self) -> &[T] {
        &self.data[self.nu_range()]
    }

    pub fn phi(&self) -> &[T] {
        &self.data[self.phi_range()]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let cast = |xs: &[T]| xs.iter().map(|x| x.as_f64()).collect();
        Checkpoint {
            sections: vec![
                ("theta".into(), cast(self.theta())),
                ("nu".into(), cast(self.nu())),
                ("phi".into(), cast(self.phi())),
            ],
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let get = |name: &str| -> Result<Vec<T>> {
            Ok(ckpt.section(name)?.iter().map(|&x| T::lit(x)).collect())
        };
        Ok(Self::pack(&get("theta")?, &get("nu")?, &get("phi")?))
    }
}

/// Named sections of scalars, stored as `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub sections: Vec<(String, Vec<f64>)>,
}

const TEXT_MAGIC: &str = "optionkit-params 1";
const BINARY_MAGIC: &[u8; 4] = b"OKPV";

impl Checkpoint {
    pub fn section(&self, name: &str) -> Result<&[f64]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Parse(format!("checkpoint has no `{name}` section")))
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.sections.push((name.into(), values));
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TEXT_MAGIC}")?;
        for (name, values) in &self.sections {
            writeln!(out, "section {name} {}", values.len())?;
            for v in values {
                // `{}` prints the shortest representation that reads back exactly
                writeln!(out, "{v}")?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(TEXT_MAGIC) {
            return Err(Error::Parse("not an optionkit text checkpoint".into()));
        }
        let mut ckpt = Checkpoint::default();
        while let Some(line) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [kw, name, count] = parts[..] else {
                return Err(Error::Parse(format!("bad section header `{line}`")));
            };
            if kw != "section" {
                return Err(Error::Parse(format!("bad section header `{line}`")));
            }
            let count: usize = count.parse().map_err(|_| Error::Parse(format!("bad count in `{line}`")))?;
            let values = (0..count)
                .map(|_| {
                    let l = lines.next().ok_or_else(|| Error::Parse(format!("section `{name}` is truncated")))?;
                    l.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad value `{l}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            ckpt.push(name, values);
        }
        Ok(ckpt)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(self.sections.len() as u32).to_le_bytes())?;
        for (name, values) in &self.sections {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(values.len() as u64).to_le_bytes())?;
            for v in values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)?;
            Ok(buf)
        }
        if &take::<4, _>(&mut input)? != BINARY_MAGIC {
            return Err(Error::Parse("not an optionkit binary checkpoint".into()));
        }
        let version = u32::from_le_bytes(take(&mut input)?);
        if version != 1 {
            return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
        }
        let n_sections = u32::from_le_bytes(take(&mut input)?);
        let mut ckpt = Checkpoint::default();
        for _ in 0..n_sections {
            let name_len = u32::from_le_bytes(take(&mut input)?) as usize;
            let mut name = vec![0u8; name_len];
            input.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::Parse(e.to_string()))?;
            let count = u64::from_le_bytes(take(&mut input)?) as usize;
            let values = (0..count)
                .map(|_| Ok(f64::from_le_bytes(take(&mut input)?)))
                .collect::<Result<Vec<_>>>()?;
            ckpt.push(name, values);
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pack_unpack_round_trips(
            theta in prop::collection::vec(-1e3f64..1e3, 0..8),
            nu in prop::collection::vec(-1e3f64..1e3, 0..8),
            phi in prop::collection::vec(-1e3f64..1e3, 0..8),
        ) {
            let p = ParamVector::pack(&theta, &nu, &phi);
            let (t, n, f) = p.unpack();
            prop_assert_eq!((t, n, f), (theta, nu, phi));
        }

        #[test]
        fn checkpoints_round_trip_exactly(values in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..20)) {
            let p = ParamVector::pack(&values, &[1.0], &values);
            let ckpt = p.to_checkpoint();
            let mut text = Vec::new();
            ckpt.write_text(&mut text).unwrap();
            prop_assert_eq!(&Checkpoint::read_text(text.as_slice()).unwrap(), &ckpt);
            let mut bin = Vec::new();
            ckpt.write_binary(&mut bin).unwrap();
            let back = Checkpoint::read_binary(bin.as_slice()).unwrap();
            prop_assert_eq!(ParamVector::<f64>::from_checkpoint(&back).unwrap(), p);
        }
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(Checkpoint::read_text("hello\n".as_bytes()).is_err());
        assert!(Checkpoint::read_binary(&b"NOPE"[..]).is_err());
    }
}
