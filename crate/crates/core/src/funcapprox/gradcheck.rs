//! Central finite differences, the error measure used to compare them with
//! analytic gradients, and a sweep over every parameterization kind.

use rand::Rng;

use super::architecture::{ActionSpace, ArchitectureSpec, ParamKind};
use super::head::{Head, Outcome};
use super::network::{Activation, Obs};
use crate::error::Result;
use crate::scalar::Real;

/// Central differences of `f` at `x` with step `h`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Fourth-order central differences (five-point stencil) of `f` at `x`.
/// Truncation error is `O(h^4)`, so a larger `h` keeps round-off small.
pub fn finite_difference_fourth_order(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut at = |i: usize, d: f64| {
        probe[i] = x[i] + d;
        let v = f(&probe);
        probe[i] = x[i];
        v
    };
    (0..x.len())
        .map(|i| (at(i, -2.0 * h) - 8.0 * at(i, -h) + 8.0 * at(i, h) - at(i, 2.0 * h)) / (12.0 * h))
        .collect()
}

/// `max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|, floor)`. The floor keeps
/// the measure absolute when both gradients vanish.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(floor, f64::max);
    diff / scale
}

/// Largest relative error found for one head and quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub rel_error: f64,
}

fn head_cases(spec: &ArchitectureSpec, n_inputs: usize) -> Result<Vec<(&'static str, Head)>> {
    Ok(vec![
        ("categorical", spec.policy_head(n_inputs, ActionSpace::Discrete(3))?),
        ("bernoulli", spec.termination_head(n_inputs)?),
        ("gaussian", spec.policy_head(n_inputs, ActionSpace::Continuous(2))?),
        ("value", spec.value_head(n_inputs, 2)?),
    ])
}

enum Quantity {
    LogProb,
    Entropy,
    Value,
}

fn analytic<T: Real>(head: &Head, q: &Quantity, params: &[f64], obs: &Obs<'_, f64>, outcome: &Outcome<'_, f64>) -> Result<Vec<f64>> {
    let p: Vec<T> = params.iter().map(|&x| T::lit(x)).collect();
    let obs_t: Vec<T>;
    let obs = match *obs {
        Obs::Index(i) => Obs::Index(i),
        Obs::Vector(v) => {
            obs_t = v.iter().map(|&x| T::lit(x)).collect();
            Obs::Vector(&obs_t)
        }
    };
    let cont: Vec<T>;
    let outcome = match *outcome {
        Outcome::Index(i) => Outcome::Index(i),
        Outcome::Bool(b) => Outcome::Bool(b),
        Outcome::Continuous(x) => {
            cont = x.iter().map(|&v| T::lit(v)).collect();
            Outcome::Continuous(&cont)
        }
    };
    let mut g = vec![T::zero(); p.len()];
    match q {
        Quantity::LogProb => head.grad_log_prob(&p, obs, outcome, T::one(), &mut g)?,
        Quantity::Entropy => head.grad_entropy(&p, obs, T::one(), &mut g)?,
        Quantity::Value => head.grad_value(&p, obs, 1, T::one(), &mut g)?,
    };
    Ok(g.iter().map(|x| x.as_f64()).collect())
}

fn objective(head: &Head, q: &Quantity, params: &[f64], obs: Obs<'_, f64>, outcome: Outcome<'_, f64>) -> f64 {
    match q {
        Quantity::LogProb => head.log_prob(params, obs, outcome),
        Quantity::Entropy => head.entropy(params, obs),
        Quantity::Value => head.values(params, obs).map(|v| v[1]),
    }
    .expect("objective is defined at the probe point")
}

const KINK_MARGIN: f64 = 1e-3;

/// Checks log-probability, entropy and value gradients of every head of
/// every parameterization kind against central differences (step `1e-5`,
/// computed in `f64`) at `points` random parameter points. Analytic
/// gradients are accumulated in `T`. ReLU inputs within `1e-3` of a kink
/// are redrawn.
pub fn gradient_check_suite<T: Real, R: Rng + ?Sized>(rng: &mut R, points: usize) -> Result<Vec<GradCheck>> {
    let kinds = [
        ("softmax_tabular", ArchitectureSpec { kind: ParamKind::SoftmaxTabular, ..Default::default() }),
        ("linear_gaussian", ArchitectureSpec { kind: ParamKind::LinearGaussian, ..Default::default() }),
        ("feedforward_tanh", ArchitectureSpec { kind: ParamKind::Feedforward, ..Default::default() }),
        (
            "feedforward_relu",
            ArchitectureSpec { kind: ParamKind::Feedforward, activation: Activation::Relu, ..Default::default() },
        ),
    ];
    let n_inputs = 5;
    let mut out = Vec::new();
    for (kind_name, spec) in &kinds {
        for (head_name, head) in head_cases(spec, n_inputs)? {
            let quantities: &[(&str, Quantity)] = if head_name == "value" {
                &[("value", Quantity::Value)]
            } else {
                &[("log_prob", Quantity::LogProb), ("entropy", Quantity::Entropy)]
            };
            for (q_name, q) in quantities {
                let mut worst: f64 = 0.0;
                for _ in 0..points {
                    let mut params = vec![0.0; head.n_params()];
                    head.init(rng, &mut params);
                    if spec.kind != ParamKind::Feedforward {
                        params.iter_mut().for_each(|p| *p = rng.random_range(-1.0..1.0));
                    } else {
                        // keep the network's scale but move off the initial point
                        params.iter_mut().for_each(|p| *p += rng.random_range(-0.1..0.1));
                    }
                    let mut x: Vec<f64> = (0..n_inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
                    // differences straddling a ReLU kink measure nothing; redraw the input
                    while spec.activation == Activation::Relu
                        && head.forward(&params, Obs::Vector(&x))?.hidden_margin().is_some_and(|m| m < KINK_MARGIN)
                    {
                        x.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                    }
                    let obs = if spec.kind == ParamKind::SoftmaxTabular {
                        Obs::Index(rng.random_range(0..n_inputs))
                    } else {
                        Obs::Vector(&x)
                    };
                    let action: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..1.5)).collect();
                    let outcome = match head_name {
                        "categorical" => Outcome::Index(rng.random_range(0..3)),
                        "bernoulli" => Outcome::Bool(rng.random_bool(0.5)),
                        _ => Outcome::Continuous(&action),
                    };
                    let a = analytic::<T>(&head, q, &params, &obs, &outcome)?;
                    let fd = finite_difference(|p| objective(&head, q, p, obs, outcome), &params, 1e-5);
                    worst = worst.max(relative_error(&a, &fd, 1e-8));
                }
                out.push(GradCheck { name: format!("{kind_name}/{head_name}/{q_name}"), rel_error: worst });
            }
        }
    }
    Ok(out)
}
