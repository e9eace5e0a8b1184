//! Common interface of every orthogonal parameterization, plus the closed enum
//! the adapter engine composes.

use serde::{Deserialize, Serialize};

use crate::csd::CsdNode;
use crate::error::{shape_err, Result};
use crate::linalg::{Mat, OpCounter};
use crate::maps::LieMap;
use crate::pauli::TwoDesignCircuit;
use crate::scalar::Scalar;

/// An `N × N` orthogonal operator defined by a flat vector of trainable scalars.
///
/// Operands are `N × b` batches (one vector per column).
pub trait Orthogonal<T: Scalar> {
    fn dim(&self) -> usize;

    fn num_params(&self) -> usize;

    fn params(&self) -> Vec<T>;

    fn set_params(&mut self, values: &[T]) -> Result<()>;

    fn apply_counted(&self, x: &Mat<T>, ops: &mut OpCounter) -> Result<Mat<T>>;

    fn apply_transpose(&self, x: &Mat<T>) -> Result<Mat<T>>;

    /// For `Y = Q·X` and upstream `∂L/∂Y`, returns `(∂L/∂params, ∂L/∂X)`.
    fn apply_vjp(&self, x: &Mat<T>, upstream: &Mat<T>) -> Result<(Vec<T>, Mat<T>)>;

    fn apply(&self, x: &Mat<T>) -> Result<Mat<T>> {
        self.apply_counted(x, &mut OpCounter::new())
    }

    /// VJP of `Y = Qᵀ·X`. Uses `⟨Ȳ, QᵀX⟩ = ⟨X, QȲ⟩`.
    fn apply_transpose_vjp(&self, x: &Mat<T>, upstream: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
        let (dparams, _) = self.apply_vjp(upstream, x)?;
        Ok((dparams, self.apply(upstream)?))
    }

    fn materialize(&self) -> Result<Mat<T>> {
        self.apply(&Mat::identity(self.dim()))
    }

    /// First `k` columns, `Q·E_k`.
    fn stiefel(&self, k: usize) -> Result<Mat<T>> {
        if k == 0 || k > self.dim() {
            return Err(shape_err(format!("rank in 1..={}", self.dim()), k));
        }
        self.apply(&Mat::eye(self.dim(), k))
    }
}

/// Concrete orthogonal factor used by adapters and cosine-sine trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum OrthoFactor<T> {
    /// Parameter-free identity (the trivial group of size one, or a fixed factor).
    Identity { dim: usize },
    Pauli(TwoDesignCircuit<T>),
    Lie(LieMap<T>),
    Csd(Box<CsdNode<T>>),
}

impl<T: Scalar> OrthoFactor<T> {
    pub fn identity(dim: usize) -> Self {
        OrthoFactor::Identity { dim }
    }
}

macro_rules! dispatch {
    ($self:expr, $f:ident => $body:expr, $id:pat => $idbody:expr) => {
        match $self {
            OrthoFactor::Identity { dim: $id } => $idbody,
            OrthoFactor::Pauli($f) => $body,
            OrthoFactor::Lie($f) => $body,
            OrthoFactor::Csd($f) => $body,
        }
    };
}

impl<T: Scalar> Orthogonal<T> for OrthoFactor<T> {
    fn dim(&self) -> usize {
        dispatch!(self, f => Orthogonal::dim(f), d => *d)
    }

    fn num_params(&self) -> usize {
        dispatch!(self, f => Orthogonal::num_params(f), _d => 0)
    }

    fn params(&self) -> Vec<T> {
        dispatch!(self, f => Orthogonal::params(f), _d => Vec::new())
    }

    fn set_params(&mut self, values: &[T]) -> Result<()> {
        dispatch!(self, f => Orthogonal::set_params(f, values), _d => {
            if values.is_empty() { Ok(()) } else { Err(shape_err("0 parameters", values.len())) }
        })
    }

    fn apply_counted(&self, x: &Mat<T>, ops: &mut OpCounter) -> Result<Mat<T>> {
        dispatch!(self, f => Orthogonal::apply_counted(f, x, ops), d => check_identity(*d, x).map(|_| x.clone()))
    }

    fn apply_transpose(&self, x: &Mat<T>) -> Result<Mat<T>> {
        dispatch!(self, f => Orthogonal::apply_transpose(f, x), d => check_identity(*d, x).map(|_| x.clone()))
    }

    fn apply_vjp(&self, x: &Mat<T>, upstream: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
        dispatch!(self, f => Orthogonal::apply_vjp(f, x, upstream), d => {
            check_identity(*d, x)?;
            upstream.check_same_shape(x)?;
            Ok((Vec::new(), upstream.clone()))
        })
    }
}

fn check_identity<T: Scalar>(dim: usize, x: &Mat<T>) -> Result<()> {
    if x.rows() != dim {
        return Err(shape_err(format!("{dim} rows"), x.rows()));
    }
    Ok(())
}

impl<T: Scalar, O: Orthogonal<T> + ?Sized> Orthogonal<T> for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn num_params(&self) -> usize {
        (**self).num_params()
    }

    fn params(&self) -> Vec<T> {
        (**self).params()
    }

    fn set_params(&mut self, values: &[T]) -> Result<()> {
        (**self).set_params(values)
    }

    fn apply_counted(&self, x: &Mat<T>, ops: &mut OpCounter) -> Result<Mat<T>> {
        (**self).apply_counted(x, ops)
    }

    fn apply_transpose(&self, x: &Mat<T>) -> Result<Mat<T>> {
        (**self).apply_transpose(x)
    }

    fn apply_vjp(&self, x: &Mat<T>, upstream: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
        (**self).apply_vjp(x, upstream)
    }
}
