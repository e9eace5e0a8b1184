//! Trainable diagonal factors: real singular values and binary ±1 (Rademacher)
//! diagonals trained through a straight-through surrogate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealDiag<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> RealDiag<T> {
    pub fn zeros(k: usize) -> Self {
        Self {
            values: vec![T::zero(); k],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn real_diag_apply<T: Scalar>(diag: &RealDiag<T>, x: &[T]) -> Result<Vec<T>> {
    if diag.len() != x.len() {
        return Err(shape_err(format!("{} entries", diag.len()), x.len()));
    }
    Ok(diag.values.iter().zip(x).map(|(&d, &v)| d * v).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RademacherMode {
    /// `+1` where `Λᵢ ≥ 0`, else `−1`.
    #[default]
    Deterministic,
    /// One draw per entry with `P(+1) = softmax([Λᵢ, −Λᵢ]/τ)₀`.
    Sampled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    /// Backward through the soft output `tanh(Λ/τ)`.
    #[default]
    StraightThrough,
    /// Second-order ReinMax correction: `2·∂π₁ − ½·∂π₀`.
    ReinMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherDiag<T> {
    pub logits: Vec<T>,
    pub temperature: T,
    pub mode: RademacherMode,
    pub estimator: Estimator,
}

impl<T: Scalar> RademacherDiag<T> {
    pub fn new(logits: Vec<T>) -> Self {
        Self {
            logits,
            temperature: T::one(),
            mode: RademacherMode::Deterministic,
            estimator: Estimator::StraightThrough,
        }
    }

    pub fn with_temperature(mut self, tau: T) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(Error::InvalidConfig(format!("temperature {tau} must be positive")));
        }
        self.temperature = tau;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    /// Probability of the `+1` class, `σ(2Λᵢ/τ)`.
    pub fn plus_probability(&self, i: usize) -> T {
        sigmoid(T::of(2.0) * self.logits[i] / self.temperature)
    }

    /// Soft surrogate output `P(+1) − P(−1) = tanh(Λ/τ)`.
    pub fn soft_forward(&self) -> Vec<T> {
        self.logits.iter().map(|&l| (l / self.temperature).tanh()).collect()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Hard ±1 forward. `rng` is only consulted in [`RademacherMode::Sampled`].
pub fn rademacher_forward<T: Scalar, R: Rng + ?Sized>(d: &RademacherDiag<T>, rng: Option<&mut R>) -> Result<Vec<T>> {
    if !(d.temperature > T::zero()) {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    match d.mode {
        RademacherMode::Deterministic => Ok(d
            .logits
            .iter()
            .map(|&l| if l >= T::zero() { T::one() } else { -T::one() })
            .collect()),
        RademacherMode::Sampled => {
            let rng = rng.ok_or_else(|| Error::InvalidConfig("sampled mode needs a random stream".into()))?;
            Ok((0..d.len())
                .map(|i| {
                    let p = d.plus_probability(i).as_f64();
                    if rng.gen::<f64>() < p {
                        T::one()
                    } else {
                        -T::one()
                    }
                })
                .collect())
        }
    }
}

/// Surrogate gradient with respect to the logits. `hard` is the forward output
/// the upstream gradient refers to (needed by the ReinMax estimator).
pub fn rademacher_vjp<T: Scalar>(d: &RademacherDiag<T>, hard: &[T], upstream: &[T]) -> Result<Vec<T>> {
    if upstream.len() != d.len() || hard.len() != d.len() {
        return Err(shape_err(format!("{} entries", d.len()), upstream.len().min(hard.len())));
    }
    let tau = d.temperature;
    let two = T::of(2.0);
    let half = T::of(0.5);
    Ok((0..d.len())
        .map(|i| match d.estimator {
            Estimator::StraightThrough => {
                let t = (d.logits[i] / tau).tanh();
                upstream[i] * (T::one() - t * t) / tau
            }
            Estimator::ReinMax => {
                // Two-class logits z = [Λ, −Λ]; one-hot D; output o = D·[1, −1].
                let l = d.logits[i];
                let p0 = sigmoid(two * l);
                let one_hot_plus = if hard[i] > T::zero() { T::one() } else { T::zero() };
                let p1 = (one_hot_plus + sigmoid(two * l / tau)) * half;
                // For two classes, Jacobian of softmax contracted with u = g·[1, −1]
                // and chained through z = [Λ, −Λ] gives 4·p(1−p)·g.
                let four = T::of(4.0);
                let j1 = four * p1 * (T::one() - p1);
                let j0 = four * p0 * (T::one() - p0);
                upstream[i] * (two * j1 - half * j0)
            }
        })
        .collect())
}
