//! Unitarity-error sweep over parameterizations and sizes.

use qpeft_core::maps::unitarity_error;
use qpeft_core::{Mat, Orthogonal};
use serde::{Deserialize, Serialize};

use crate::error::BenchResult;
use crate::exec::{par_map, point_rng};
use crate::kind::BenchKind;

#[derive(Clone, Debug)]
pub struct UnitarityConfig {
    pub kinds: Vec<BenchKind>,
    pub sizes: Vec<usize>,
    pub rank: usize,
    pub layers: usize,
    pub seeds: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for UnitarityConfig {
    fn default() -> Self {
        Self {
            kinds: Vec::new(),
            sizes: Vec::new(),
            rank: 4,
            layers: 1,
            seeds: 10,
            init_scale: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitarityRow {
    pub kind: String,
    pub n: usize,
    pub k: usize,
    pub seeds: usize,
    pub mean_error: f64,
    pub max_error: f64,
}

/// Error of one random instance: `max|QQᵀ − I|` for materialized kinds, `max|QᵀQ − I_K|` on `Q·E_K` otherwise.
pub fn instance_error(kind: BenchKind, n: usize, rank: usize, layers: usize, init_scale: f64, rng: &mut rand_chacha::ChaCha8Rng) -> BenchResult<(usize, f64)> {
    let f = kind.build(n, rank, layers, init_scale, rng)?;
    if kind.materializes() {
        Ok((n, unitarity_error(&f.materialize()?)))
    } else {
        let k = rank.min(n.saturating_sub(1)).max(1);
        Ok((k, unitarity_error(&f.apply(&Mat::eye(n, k))?)))
    }
}

pub fn bench_unitarity(cfg: &UnitarityConfig) -> BenchResult<Vec<UnitarityRow>> {
    let points: Vec<(BenchKind, usize)> = cfg
        .kinds
        .iter()
        .flat_map(|&k| cfg.sizes.iter().map(move |&n| (k, n)))
        .collect();
    par_map(&points, |idx, &(kind, n)| {
        let mut rng = point_rng(cfg.seed, idx as u64);
        let mut errs = Vec::with_capacity(cfg.seeds);
        let mut k = 0;
        for _ in 0..cfg.seeds {
            let (kk, e) = instance_error(kind, n, cfg.rank, cfg.layers, cfg.init_scale, &mut rng)?;
            k = kk;
            errs.push(e);
        }
        Ok(UnitarityRow {
            kind: kind.to_string(),
            n,
            k,
            seeds: cfg.seeds,
            mean_error: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
            max_error: errs.iter().copied().fold(0.0, f64::max),
        })
    })
    .into_iter()
    .collect()
}
