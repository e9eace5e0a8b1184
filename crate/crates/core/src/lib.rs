//! Orthogonal low-rank adapters from Lie-algebra and circuit parameterizations.
//!
//! Every numeric type is generic over [`Scalar`] (`f32`, `f64`); the aliases below
//! fix the precision for common use.

pub mod adapter;
pub mod csd;
pub mod diag;
pub mod error;
pub mod grad;
pub mod lie;
pub mod linalg;
pub mod maps;
pub mod ortho;
pub mod pauli;
pub mod quant;
pub mod scalar;
pub mod store;

pub use adapter::{
    bytes_to_mb, lora_param_count, memory_bytes, quantum_peft_param_count, AdapterSpec, FactorSpec, Lambda,
    ModelGeometry,
};
pub use csd::{split_plan, CsdNode, LeafSpec, SplitPlan};
pub use diag::{RademacherDiag, RealDiag};
pub use error::{Error, Result};
pub use grad::{gradcheck, sgd_step, GradTape, Gradients, Var};
pub use lie::{skew_assemble, LieConfig, LieParams, SkewMatrix, Support};
pub use linalg::{Mat, OpCounter};
pub use maps::{contracted_apply, unitarity_error, LieMap, MapKind};
pub use ortho::{OrthoFactor, Orthogonal};
pub use pauli::{pauli_param_count, TwoDesignCircuit};
pub use quant::{bits_per_param, QuantConfig};
pub use scalar::Scalar;
pub use store::ParamStore;

pub type Mat64 = Mat<f64>;
pub type Mat32 = Mat<f32>;
pub type LieParams64 = LieParams<f64>;
pub type LieParams32 = LieParams<f32>;
pub type LieMap64 = LieMap<f64>;
pub type LieMap32 = LieMap<f32>;
pub type Circuit64 = TwoDesignCircuit<f64>;
pub type Circuit32 = TwoDesignCircuit<f32>;
pub type OrthoFactor64 = OrthoFactor<f64>;
pub type OrthoFactor32 = OrthoFactor<f32>;
pub type AdapterSpec64 = AdapterSpec<f64>;
pub type AdapterSpec32 = AdapterSpec<f32>;
pub type GradTape64 = GradTape<f64>;
pub type ParamStore64 = ParamStore<f64>;
/// Exact bits-per-parameter arithmetic.
pub type Rational = num_rational::Ratio<u64>;
