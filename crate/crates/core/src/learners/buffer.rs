//! Per-worker rollout storage.

/// A record that can be told, after the fact, that its episode ended.
pub trait SegmentStep {
    /// True when the episode ended after this step (terminal or not).
    fn is_cut(&self) -> bool;
    /// Marks the step as an episode end at a live state.
    fn cut(&mut self);
}

/// One sequence of records per worker, filled in lock step.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer<S> {
    horizon: usize,
    workers: Vec<Vec<S>>,
}

impl<S: SegmentStep> RolloutBuffer<S> {
    pub fn new(n_workers: usize, horizon: usize) -> Self {
        Self { horizon, workers: (0..n_workers).map(|_| Vec::with_capacity(horizon)).collect() }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn push(&mut self, w: usize, step: S) {
        self.workers[w].push(step);
    }

    /// Every worker holds `horizon` records.
    pub fn is_full(&self) -> bool {
        self.workers.iter().all(|s| s.len() >= self.horizon)
    }

    pub fn len(&self) -> usize {
        self.workers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn worker(&self, w: usize) -> &[S] {
        &self.workers[w]
    }

    pub fn worker_mut(&mut self, w: usize) -> &mut [S] {
        &mut self.workers[w]
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    /// Called when worker `w` restarted without its last step knowing (an
    /// environment switch): the segment must not bootstrap across.
    pub fn cut_last(&mut self, w: usize) {
        if let Some(last) = self.workers[w].last_mut() {
            if !last.is_cut() {
                last.cut();
            }
        }
    }

    pub fn clear(&mut self) {
        self.workers.iter_mut().for_each(Vec::clear);
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.workers.iter().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq)]
    struct Rec(bool);

    impl SegmentStep for Rec {
        fn is_cut(&self) -> bool {
            self.0
        }
        fn cut(&mut self) {
            self.0 = true;
        }
    }

    #[test]
    fn fills_in_lock_step() {
        let mut b = RolloutBuffer::new(2, 2);
        b.push(0, Rec(false));
        b.push(1, Rec(false));
        b.push(0, Rec(false));
        assert!(!b.is_full());
        b.push(1, Rec(false));
        assert!(b.is_full());
        b.cut_last(1);
        assert_eq!(b.worker(1)[1], Rec(true));
        b.clear();
        assert!(b.is_empty());
    }
}
