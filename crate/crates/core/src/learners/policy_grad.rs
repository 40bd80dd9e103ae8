//! Clipped-surrogate and vanilla policy gradients over any policy that can
//! score its own samples, plus a regression critic.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::funcapprox::{Adam, AdamConfig, ArchitectureSpec, Head, Obs};
use crate::scalar::Real;

/// A differentiable policy whose parameters live in one flat vector.
pub trait StochasticPolicy<T: Real> {
    type Sample;

    fn params(&self) -> &[T];
    fn params_mut(&mut self) -> &mut [T];
    fn log_prob(&self, sample: &Self::Sample) -> Result<T>;
    /// Accumulates `scale * grad log pi(sample)`; returns `log pi(sample)`.
    fn grad_log_prob(&self, sample: &Self::Sample, scale: T, grad: &mut [T]) -> Result<T>;
    /// Accumulates `scale * grad H` of the regularised distribution at the
    /// sample's state; returns `H`.
    fn grad_entropy(&self, sample: &Self::Sample, scale: T, grad: &mut [T]) -> Result<T>;
}

/// One policy-gradient sample with the behaviour log-probability and its
/// advantage.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<S, T> {
    pub sample: S,
    pub old_log_prob: T,
    pub advantage: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SurrogateStats<T> {
    /// Fraction of samples whose ratio sat outside the clip range on the
    /// side that zeroes their gradient.
    pub clip_fraction: T,
    pub mean_ratio: T,
    pub entropy: T,
    pub objective: T,
}

/// Ascent direction of
/// `mean_t min(r_t A_t, clip(r_t, 1-eps, 1+eps) A_t) + c * mean_t H_t`,
/// accumulated into `grad`. `clip = None` is the unclipped ratio objective.
pub fn surrogate_gradient<T: Real, P: StochasticPolicy<T>>(
    policy: &P,
    batch: &[Scored<P::Sample, T>],
    clip: Option<T>,
    entropy_coef: T,
    grad: &mut [T],
) -> Result<SurrogateStats<T>> {
    if batch.is_empty() {
        return Ok(SurrogateStats::default());
    }
    let n = T::lit(batch.len() as f64);
    let mut stats = SurrogateStats::default();
    let mut clipped = 0usize;
    for item in batch {
        let ratio = (policy.log_prob(&item.sample)? - item.old_log_prob).exp();
        let a = item.advantage;
        let inactive = match clip {
            Some(eps) => (a > T::zero() && ratio > T::one() + eps) || (a < T::zero() && ratio < T::one() - eps),
            None => false,
        };
        let bounded = match clip {
            Some(eps) => ratio.max(T::one() - eps).min(T::one() + eps),
            None => ratio,
        };
        stats.objective += (ratio * a).min(bounded * a) / n;
        stats.mean_ratio += ratio / n;
        if inactive {
            clipped += 1;
        } else if a != T::zero() {
            policy.grad_log_prob(&item.sample, a * ratio / n, grad)?;
        }
        if entropy_coef != T::zero() {
            let h = policy.grad_entropy(&item.sample, entropy_coef / n, grad)?;
            stats.entropy += h / n;
        }
    }
    stats.clip_fraction = T::lit(clipped as f64) / n;
    stats.objective += entropy_coef * stats.entropy;
    if !stats.objective.is_finite() {
        return Err(Error::NonFinite(format!("surrogate objective {}", stats.objective)));
    }
    Ok(stats)
}

/// `mean_t A_t grad log pi(a_t|s_t)` at the current parameters.
pub fn vanilla_policy_gradient<T: Real, P: StochasticPolicy<T>>(
    policy: &P,
    batch: &[Scored<P::Sample, T>],
    grad: &mut [T],
) -> Result<()> {
    let n = T::lit(batch.len().max(1) as f64);
    for item in batch {
        if item.advantage != T::zero() {
            policy.grad_log_prob(&item.sample, item.advantage / n, grad)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig<T> {
    pub clip: T,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoDiagnostics<T> {
    pub updates: usize,
    /// Clip fraction and entropy averaged over minibatches.
    pub clip_fraction: T,
    pub entropy: T,
    pub last_mean_ratio: T,
}

fn ascend<T: Real>(optimizer: &mut Adam<T>, params: &mut [T], mut grad: Vec<T>) -> Result<()> {
    grad.iter_mut().for_each(|g| *g = -*g);
    optimizer.step(params, &grad)
}

/// Minibatched epochs of the clipped surrogate. A non-finite objective or
/// gradient aborts the update; parameters keep the last finite step.
pub fn ppo_update<T: Real, P: StochasticPolicy<T>, R: Rng + ?Sized>(
    policy: &mut P,
    optimizer: &mut Adam<T>,
    batch: &[Scored<P::Sample, T>],
    config: &PpoConfig<T>,
    rng: &mut R,
) -> Result<PpoDiagnostics<T>>
where
    P::Sample: Clone,
{
    let mut diag = PpoDiagnostics::default();
    if batch.is_empty() {
        return Ok(diag);
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let size = config.minibatch.max(1);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(size) {
            let mb: Vec<Scored<P::Sample, T>> = chunk.iter().map(|&i| batch[i].clone()).collect();
            let mut grad = vec![T::zero(); policy.params().len()];
            let stats = surrogate_gradient(&*policy, &mb, Some(config.clip), config.entropy_coef, &mut grad)?;
            ascend(optimizer, policy.params_mut(), grad)?;
            diag.updates += 1;
            diag.clip_fraction += stats.clip_fraction;
            diag.entropy += stats.entropy;
            diag.last_mean_ratio = stats.mean_ratio;
        }
    }
    let k = T::lit(diag.updates as f64);
    diag.clip_fraction /= k;
    diag.entropy /= k;
    Ok(diag)
}

/// One full-batch step on the unclipped objective at the sampling
/// parameters.
pub fn a2c_update<T: Real, P: StochasticPolicy<T>>(
    policy: &mut P,
    optimizer: &mut Adam<T>,
    batch: &[Scored<P::Sample, T>],
    entropy_coef: T,
) -> Result<SurrogateStats<T>> {
    let mut grad = vec![T::zero(); policy.params().len()];
    let stats = surrogate_gradient(&*policy, batch, None, entropy_coef, &mut grad)?;
    ascend(optimizer, policy.params_mut(), grad)?;
    Ok(stats)
}

/// Regression target for one output of a value head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueTarget<T> {
    pub state: usize,
    pub output: usize,
    pub target: T,
}

/// State-indexed value head with its own optimizer, fit by squared error on
/// raw discounted targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic<T> {
    head: Head,
    pub params: Vec<T>,
    optimizer: Adam<T>,
}

impl<T: Real> Critic<T> {
    pub fn new<R: Rng + ?Sized>(
        spec: &ArchitectureSpec,
        n_states: usize,
        n_outputs: usize,
        config: AdamConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let head = spec.value_head(n_states, n_outputs)?;
        let mut params = vec![T::zero(); head.n_params()];
        head.init(rng, &mut params);
        let optimizer = Adam::new(config, params.len());
        Ok(Self { head, params, optimizer })
    }

    pub fn n_outputs(&self) -> usize {
        self.head.network.n_outputs()
    }

    pub fn values(&self, s: usize) -> Result<Vec<T>> {
        self.head.values(&self.params, Obs::Index(s))
    }

    pub fn value(&self, s: usize, output: usize) -> Result<T> {
        Error::check_index("value output", output, self.n_outputs())?;
        Ok(self.values(s)?[output])
    }

    /// One optimizer step on `mean 0.5 (v - target)^2`; returns the loss.
    pub fn step(&mut self, batch: &[ValueTarget<T>]) -> Result<T> {
        if batch.is_empty() {
            return Ok(T::zero());
        }
        let n = T::lit(batch.len() as f64);
        let mut grad = vec![T::zero(); self.params.len()];
        let mut loss = T::zero();
        for t in batch {
            let v = self.head.grad_value(&self.params, Obs::Index(t.state), t.output, T::zero(), &mut grad)?;
            let err = v - t.target;
            loss += T::lit(0.5) * err * err / n;
            self.head.grad_value(&self.params, Obs::Index(t.state), t.output, err / n, &mut grad)?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("critic loss {loss}")));
        }
        self.optimizer.step(&mut self.params, &grad)?;
        Ok(loss)
    }

    /// Minibatched epochs over `targets`; returns the mean minibatch loss.
    pub fn fit<R: Rng + ?Sized>(&mut self, targets: &[ValueTarget<T>], epochs: usize, minibatch: usize, rng: &mut R) -> Result<T> {
        let mut order: Vec<usize> = (0..targets.len()).collect();
        let mut total = T::zero();
        let mut count = 0usize;
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(minibatch.max(1)) {
                let mb: Vec<ValueTarget<T>> = chunk.iter().map(|&i| targets[i]).collect();
                total += self.step(&mb)?;
                count += 1;
            }
        }
        Ok(if count == 0 { T::zero() } else { total / T::lit(count as f64) })
    }
}
