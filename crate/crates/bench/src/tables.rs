//! Parameter/memory tables, quantization tables and cosine-sine plans.

use qpeft_core::adapter::{bytes_to_mb, lora_param_count, memory_bytes, quantum_peft_param_count, FactorSpec, ModelGeometry};
use qpeft_core::csd::split_plan;
use qpeft_core::lie::{Init, LieConfig, LieParams};
use qpeft_core::maps::{unitarity_error, LieMap, MapKind};
use qpeft_core::quant::{bits_per_param, dequantize, quantize, QuantConfig};
use qpeft_core::{Mat, Orthogonal, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, BenchResult};
use crate::exec::point_rng;

pub const FP32_BITS: u64 = 32;
pub const SCALE_BITS: u32 = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsRow {
    pub geometry: String,
    pub method: String,
    pub rank: usize,
    pub params: u64,
    pub bytes: u64,
    pub mb: f64,
}

/// LoRA and circuit-adapter rows at FP32 for every rank.
pub fn params_table(geometry: &ModelGeometry, ranks: &[usize], layers: usize) -> BenchResult<Vec<ParamsRow>> {
    if ranks.is_empty() {
        return Err(BenchError::Usage("no ranks given".into()));
    }
    let pauli = FactorSpec::Pauli { layers };
    let fp32 = Rational::from_integer(FP32_BITS);
    let mut rows = Vec::new();
    for &k in ranks {
        for (method, count) in [
            ("lora".to_string(), lora_param_count(geometry, k)?),
            (format!("quantum-peft-pauli-l{layers}"), quantum_peft_param_count(geometry, k, &pauli, &pauli)?),
        ] {
            let bytes = memory_bytes(count, fp32);
            rows.push(ParamsRow {
                geometry: geometry.name.clone(),
                method,
                rank: k,
                params: count,
                bytes,
                mb: bytes_to_mb(bytes),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct QuantTableConfig {
    pub bits: Vec<u32>,
    pub group: usize,
    pub kappa: Option<f64>,
    pub size: usize,
    pub rank: usize,
    pub init_scale: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantRow {
    pub bits: u32,
    pub group: usize,
    pub adaptive: bool,
    /// Exact rational, e.g. `33/4`.
    pub bits_per_param: String,
    pub bits_per_param_value: f64,
    pub param_max_error: f64,
    /// `max |Q(θ_q)·E_K − Q(θ)·E_K|` under the exponential map.
    pub map_shift: f64,
    pub unitarity_error: f64,
}

pub fn quant_table(cfg: &QuantTableConfig) -> BenchResult<Vec<QuantRow>> {
    if cfg.bits.is_empty() {
        return Err(BenchError::Usage("no bit widths given".into()));
    }
    let mut rng = point_rng(cfg.seed, 0);
    let lie = LieParams::from_config(&LieConfig::new(cfg.size, cfg.rank).init(Init::Uniform(cfg.init_scale)), &mut rng)?;
    let reference: LieMap<f64> = LieMap::new(lie, MapKind::Exponential)?;
    let e = Mat::eye(cfg.size, cfg.rank);
    let q_ref = reference.apply(&e)?;
    let theta = reference.params();
    let mut rows = Vec::new();
    for &n in &cfg.bits {
        let qc = match cfg.kappa {
            Some(kappa) => QuantConfig::adaptive(n, cfg.group, kappa),
            None => QuantConfig::uniform(n, cfg.group),
        };
        let groups = quantize(&theta, &qc)?;
        let bpp = if qc.adaptive {
            let code_bits: u64 = groups.iter().map(|g| g.bits as u64 * g.len as u64).sum();
            Rational::new(code_bits + 2 * SCALE_BITS as u64 * groups.len() as u64, theta.len() as u64)
        } else {
            bits_per_param(n, cfg.group, SCALE_BITS)?
        };
        let deq = dequantize(&groups);
        let mut map = reference.clone();
        map.set_params(&deq)?;
        let q = map.apply(&e)?;
        rows.push(QuantRow {
            bits: n,
            group: cfg.group,
            adaptive: qc.adaptive,
            bits_per_param: bpp.to_string(),
            bits_per_param_value: *bpp.numer() as f64 / *bpp.denom() as f64,
            param_max_error: deq.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            map_shift: q.sub(&q_ref)?.max_abs(),
            unitarity_error: unitarity_error(&q),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsdPlanRow {
    pub n: usize,
    pub plan: String,
    /// Leaf sizes separated by `+`.
    pub leaves: String,
    pub depth: usize,
}

pub fn csd_plans(sizes: &[usize]) -> BenchResult<Vec<CsdPlanRow>> {
    sizes
        .iter()
        .map(|&n| {
            let p = split_plan(n)?;
            Ok(CsdPlanRow {
                n,
                plan: p.to_string(),
                leaves: p.leaves().iter().map(|l| l.to_string()).collect::<Vec<_>>().join("+"),
                depth: p.depth(),
            })
        })
        .collect()
}
