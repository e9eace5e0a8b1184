//! Adapter composition `ΔW = (α/K)·U·Λ·Vᵀ`, the LoRA baseline, and parameter/memory accounting.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csd::{factor_for_dim, split_plan, LeafSpec, SplitPlan};
use crate::diag::{rademacher_forward, rademacher_vjp, RademacherDiag, RealDiag};
use crate::error::{shape_err, Error, Result};
use crate::lie::{Init, LieConfig, LieParams};
use crate::linalg::Mat;
use crate::maps::{LieMap, MapKind};
use crate::ortho::{OrthoFactor, Orthogonal};
use crate::pauli::{pauli_param_count, TwoDesignCircuit};
use crate::scalar::Scalar;

pub const DEFAULT_ALPHA: f64 = 32.0;
pub const DEFAULT_INIT_SCALE: f64 = 0.01;

/// Recipe for one orthogonal side of an adapter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FactorSpec {
    /// Two-design circuit; sizes that are not powers of two go through a cosine-sine tree.
    Pauli { layers: usize },
    /// Rank-`K` Lie parameters with `K'` trainable columns.
    Lie {
        kind: MapKind,
        intrinsic_rank: Option<usize>,
        init_scale: f64,
    },
}

impl FactorSpec {
    pub fn lie(kind: MapKind) -> Self {
        FactorSpec::Lie {
            kind,
            intrinsic_rank: None,
            init_scale: DEFAULT_INIT_SCALE,
        }
    }

    /// Builds an `n × n` factor of which the adapter uses the first `k` columns.
    /// Circuit and cosine-sine angles start uniform in `(−π, π)`.
    pub fn build<T: Scalar, R: Rng + ?Sized>(&self, n: usize, k: usize, rng: &mut R) -> Result<OrthoFactor<T>> {
        match *self {
            FactorSpec::Pauli { layers } => {
                let mut f = if n.is_power_of_two() && n >= 2 {
                    OrthoFactor::Pauli(TwoDesignCircuit::for_dim(n, layers)?)
                } else {
                    factor_for_dim(n, &LeafSpec::Pauli { layers })?
                };
                let angles: Vec<T> = (0..f.num_params()).map(|_| T::of(rng.gen_range(-PI..PI))).collect();
                f.set_params(&angles)?;
                Ok(f)
            }
            FactorSpec::Lie {
                kind,
                intrinsic_rank,
                init_scale,
            } => {
                let mut cfg = LieConfig::new(n, k).init(Init::Uniform(init_scale));
                if let Some(kp) = intrinsic_rank {
                    cfg = cfg.intrinsic_rank(kp);
                }
                Ok(OrthoFactor::Lie(LieMap::new(LieParams::from_config(&cfg, rng)?, kind)?))
            }
        }
    }

    /// Trainable scalars of the factor [`FactorSpec::build`] would return.
    pub fn param_count(&self, n: usize, k: usize) -> Result<u64> {
        match *self {
            FactorSpec::Pauli { layers } => Ok(pauli_tree_count(&split_plan(n)?, layers)),
            FactorSpec::Lie {
                kind, intrinsic_rank, ..
            } => {
                let kp = intrinsic_rank.unwrap_or(k);
                if n == 0 || k == 0 || k > n || kp == 0 || kp > k {
                    return Err(Error::InvalidConfig(format!("rank {k}/{kp} invalid for size {n}")));
                }
                let s = kind.support();
                Ok((0..kp).map(|c| s.column_len(n, c) as u64).sum())
            }
        }
    }
}

fn pauli_tree_count(plan: &SplitPlan, layers: usize) -> u64 {
    match plan {
        SplitPlan::Leaf(1) => 0,
        SplitPlan::Leaf(n) => pauli_param_count(n.trailing_zeros() as usize, layers) as u64,
        SplitPlan::Split { first, second } => {
            second.size() as u64 + 2 * pauli_tree_count(first, layers) + 2 * pauli_tree_count(second, layers)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Lambda<T> {
    Real(RealDiag<T>),
    Rademacher(RademacherDiag<T>),
}

impl<T: Scalar> Lambda<T> {
    pub fn len(&self) -> usize {
        match self {
            Lambda::Real(d) => d.len(),
            Lambda::Rademacher(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable values: singular values or Rademacher logits.
    pub fn params(&self) -> &[T] {
        match self {
            Lambda::Real(d) => &d.values,
            Lambda::Rademacher(d) => &d.logits,
        }
    }

    pub fn set_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.len() {
            return Err(shape_err(format!("{} diagonal entries", self.len()), values.len()));
        }
        match self {
            Lambda::Real(d) => d.values.copy_from_slice(values),
            Lambda::Rademacher(d) => d.logits.copy_from_slice(values),
        }
        Ok(())
    }

    /// Diagonal used in the forward pass (hard ±1 for Rademacher).
    pub fn effective(&self) -> Result<Vec<T>> {
        match self {
            Lambda::Real(d) => Ok(d.values.clone()),
            Lambda::Rademacher(d) => rademacher_forward::<T, rand_chacha::ChaCha8Rng>(d, None),
        }
    }

    fn vjp(&self, effective: &[T], upstream: &[T]) -> Result<Vec<T>> {
        match self {
            Lambda::Real(_) => Ok(upstream.to_vec()),
            Lambda::Rademacher(d) => rademacher_vjp(d, effective, upstream),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterSpec<T> {
    rows: usize,
    cols: usize,
    rank: usize,
    pub alpha: T,
    pub u: OrthoFactor<T>,
    pub v: OrthoFactor<T>,
    pub lambda: Lambda<T>,
}

/// Gradients of an adapter output with respect to every trainable group and the input.
#[derive(Clone, Debug)]
pub struct AdapterGrads<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub lambda: Vec<T>,
    pub x: Mat<T>,
}

impl<T: Scalar> AdapterSpec<T> {
    pub fn new(rank: usize, alpha: T, u: OrthoFactor<T>, v: OrthoFactor<T>, lambda: Lambda<T>) -> Result<Self> {
        let (rows, cols) = (u.dim(), v.dim());
        if rank == 0 || rank > rows.min(cols) {
            return Err(Error::InvalidConfig(format!("rank {rank} must lie in 1..={}", rows.min(cols))));
        }
        if lambda.len() != rank {
            return Err(shape_err(format!("{rank} diagonal entries"), lambda.len()));
        }
        Ok(Self {
            rows,
            cols,
            rank,
            alpha,
            u,
            v,
            lambda,
        })
    }

    /// `N × M` adapter with `Λ = 0` and the default `α`.
    pub fn build<R: Rng + ?Sized>(rows: usize, cols: usize, rank: usize, u: &FactorSpec, v: &FactorSpec, rng: &mut R) -> Result<Self> {
        let uf = u.build(rows, rank, rng)?;
        let vf = v.build(cols, rank, rng)?;
        Self::new(rank, T::of(DEFAULT_ALPHA), uf, vf, Lambda::Real(RealDiag::zeros(rank)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn scale(&self) -> T {
        self.alpha / T::of(self.rank as f64)
    }

    /// Trainable scalars: both orthogonal factors plus the diagonal.
    pub fn param_count(&self) -> usize {
        self.u.num_params() + self.v.num_params() + self.lambda.len()
    }

    /// Dense `ΔW = (α/K)·U_K·Λ·V_Kᵀ`.
    pub fn delta_w(&self) -> Result<Mat<T>> {
        let us = self.u.stiefel(self.rank)?;
        let vs = self.v.stiefel(self.rank)?;
        let lam = self.lambda.effective()?;
        let c = self.scale();
        let ul = Mat::from_fn(self.rows, self.rank, |i, k| us[(i, k)] * lam[k] * c);
        ul.matmul(&vs.transpose())
    }

    fn check(&self, w: &Mat<T>, x: &Mat<T>) -> Result<()> {
        if w.shape() != (self.rows, self.cols) {
            return Err(shape_err(format!("{}×{} weight", self.rows, self.cols), format!("{}×{}", w.rows(), w.cols())));
        }
        if x.rows() != self.cols {
            return Err(shape_err(format!("{} input rows", self.cols), x.rows()));
        }
        Ok(())
    }

    /// `Λ·(Vᵀx)[..K]`, the padded `N × b` operand of `U`, and the effective diagonal.
    fn inner(&self, x: &Mat<T>) -> Result<(Mat<T>, Mat<T>, Vec<T>)> {
        let z = self.v.apply_transpose(x)?;
        let lam = self.lambda.effective()?;
        let mut p = Mat::zeros(self.rows, x.cols());
        for k in 0..self.rank {
            let (src, dst) = (z.row(k), p.row_mut(k));
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = lam[k] * s;
            }
        }
        Ok((z, p, lam))
    }

    /// `(W + ΔW)·x`, matrix-free. A zero diagonal returns `W·x` unchanged.
    pub fn forward(&self, w: &Mat<T>, x: &Mat<T>) -> Result<Mat<T>> {
        self.check(w, x)?;
        let base = w.matmul(x)?;
        if matches!(&self.lambda, Lambda::Real(d) if d.values.iter().all(|v| *v == T::zero())) {
            return Ok(base);
        }
        let (_, p, _) = self.inner(x)?;
        let mut y = base;
        y.axpy(self.scale(), &self.u.apply(&p)?)?;
        Ok(y)
    }

    /// Reverse pass of [`AdapterSpec::forward`] for upstream `∂L/∂y`.
    pub fn vjp(&self, w: &Mat<T>, x: &Mat<T>, upstream: &Mat<T>) -> Result<AdapterGrads<T>> {
        self.check(w, x)?;
        if upstream.shape() != (self.rows, x.cols()) {
            return Err(shape_err(format!("{}×{} upstream", self.rows, x.cols()), format!("{}×{}", upstream.rows(), upstream.cols())));
        }
        let (z, p, lam) = self.inner(x)?;
        let (du, dp) = self.u.apply_vjp(&p, &upstream.scaled(self.scale()))?;
        let mut dlam_eff = vec![T::zero(); self.rank];
        let mut dz = Mat::zeros(self.cols, x.cols());
        for k in 0..self.rank {
            for j in 0..x.cols() {
                dlam_eff[k] += dp[(k, j)] * z[(k, j)];
                dz[(k, j)] = lam[k] * dp[(k, j)];
            }
        }
        let (dv, dx_v) = self.v.apply_transpose_vjp(x, &dz)?;
        let mut dx = w.t_matmul(upstream)?;
        dx.axpy(T::one(), &dx_v)?;
        Ok(AdapterGrads {
            u: du,
            v: dv,
            lambda: self.lambda.vjp(&lam, &dlam_eff)?,
            x: dx,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub name: String,
    pub matrices: Vec<AdaptedMatrix>,
}

pub const PRESETS: [&str; 2] = ["deberta-v3-base", "llama-3.1-405b"];

impl ModelGeometry {
    /// Square `hidden × hidden` projections in every layer.
    pub fn transformer(name: &str, hidden: usize, layers: usize, projections: &[&str]) -> Result<Self> {
        if hidden == 0 || layers == 0 || projections.is_empty() {
            return Err(Error::InvalidConfig("geometry needs hidden size, layers and projections".into()));
        }
        let matrices = (0..layers)
            .flat_map(|l| {
                projections.iter().map(move |p| AdaptedMatrix {
                    name: format!("layer{l}.{p}"),
                    rows: hidden,
                    cols: hidden,
                })
            })
            .collect();
        Ok(Self {
            name: name.to_string(),
            matrices,
        })
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "deberta-v3-base" => Self::transformer(name, 768, 12, &["query", "value"]),
            "llama-3.1-405b" => Self::transformer(name, 16384, 126, &["query", "value"]),
            _ => Err(Error::InvalidConfig(format!("unknown geometry preset {name:?} (known: {})", PRESETS.join(", ")))),
        }
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

/// `Σ K·(N + M)` over the adapted matrices.
pub fn lora_param_count(geometry: &ModelGeometry, rank: usize) -> Result<u64> {
    if rank == 0 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    Ok(geometry
        .matrices
        .iter()
        .map(|m| rank as u64 * (m.rows + m.cols) as u64)
        .sum())
}

/// Trainable scalars of `U`, `V` and a length-`K` diagonal for every adapted matrix.
pub fn quantum_peft_param_count(geometry: &ModelGeometry, rank: usize, u: &FactorSpec, v: &FactorSpec) -> Result<u64> {
    geometry.matrices.iter().try_fold(0u64, |acc, m| {
        if rank == 0 || rank > m.rows.min(m.cols) {
            return Err(Error::InvalidConfig(format!("rank {rank} invalid for {}×{}", m.rows, m.cols)));
        }
        Ok(acc + u.param_count(m.rows, rank)? + v.param_count(m.cols, rank)? + rank as u64)
    })
}

/// `⌈count · bits / 8⌉`.
pub fn memory_bytes(count: u64, bits_per_param: Ratio<u64>) -> u64 {
    let bits = Ratio::from_integer(count) * bits_per_param;
    (bits / Ratio::from_integer(8)).ceil().to_integer()
}

/// Bytes expressed in MiB (`2²⁰` bytes), the unit of the memory tables.
pub fn bytes_to_mb(bytes: u64) -> f64 {
    bytes as f64 / (1u64 << 20) as f64
}

const WEIGHT_MAGIC: &[u8; 4] = b"QPW1";

/// Writes `magic, dtype tag (u8 byte width), rows (u32), cols (u32)` then row-major values.
pub fn write_weight<T: Scalar>(path: impl AsRef<Path>, w: &Mat<T>) -> Result<()> {
    let mut out = Vec::with_capacity(16 + w.as_slice().len() * T::BYTES);
    out.extend_from_slice(WEIGHT_MAGIC);
    out.push(T::BYTES as u8);
    out.extend_from_slice(&(w.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(w.cols() as u32).to_le_bytes());
    for &v in w.as_slice() {
        v.write_le(&mut out);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_weight<T: Scalar>(path: impl AsRef<Path>) -> Result<Mat<T>> {
    let buf = fs::read(path)?;
    if buf.len() < 13 || &buf[..4] != WEIGHT_MAGIC {
        return Err(Error::Format("not a weight file".into()));
    }
    if buf[4] as usize != T::BYTES {
        return Err(Error::Format(format!("weight file stores {}-byte values, expected {}", buf[4], T::BYTES)));
    }
    let rows = u32::from_le_bytes(buf[5..9].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(buf[9..13].try_into().expect("4 bytes")) as usize;
    let body = &buf[13..];
    if body.len() != rows * cols * T::BYTES {
        return Err(Error::Format(format!("weight body has {} bytes for {rows}×{cols}", body.len())));
    }
    Mat::from_vec(rows, cols, body.chunks_exact(T::BYTES).map(T::read_le).collect())
}
