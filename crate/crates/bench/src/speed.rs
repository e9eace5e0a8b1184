//! Forward/backward timing with machine-independent operation counts.

use qpeft_core::{Mat, OpCounter, Orthogonal};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::BenchResult;
use crate::exec::{median_ms, point_rng};
use crate::kind::BenchKind;

/// Largest size for which the dense baseline is materialized and timed.
pub const MAX_TIMED_DENSE: usize = 4096;

#[derive(Clone, Debug)]
pub struct SpeedConfig {
    pub kinds: Vec<BenchKind>,
    pub sizes: Vec<usize>,
    pub rank: usize,
    pub layers: usize,
    pub batch: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Skip wall-clock measurement and report counts only.
    pub counts_only: bool,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        Self {
            kinds: Vec::new(),
            sizes: Vec::new(),
            rank: 4,
            layers: 1,
            batch: 32,
            init_scale: 0.01,
            seed: 0,
            counts_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub kind: String,
    pub n: usize,
    pub batch: usize,
    pub forward_ops: u64,
    pub forward_ms: Option<f64>,
    pub backward_ms: Option<f64>,
}

/// Multiply-add count of a dense `N × N` apply to `b` vectors, as counted by the matrix product.
pub fn dense_apply_ops(n: usize, batch: usize) -> u64 {
    2 * (n as u64) * (n as u64) * batch as u64
}

/// Points run sequentially so timings do not contend.
pub fn bench_speed(cfg: &SpeedConfig) -> BenchResult<Vec<SpeedRow>> {
    let mut rows = Vec::new();
    let mut idx = 0u64;
    for &kind in &cfg.kinds {
        for &n in &cfg.sizes {
            let mut rng = point_rng(cfg.seed, idx);
            idx += 1;
            let x = Mat::from_fn(n, cfg.batch, |_, _| rng.gen_range(-1.0..1.0));
            if kind == BenchKind::Dense {
                rows.push(dense_row(n, &x, cfg)?);
                continue;
            }
            let f = kind.build(n, cfg.rank, cfg.layers, cfg.init_scale, &mut rng)?;
            let mut ops = OpCounter::new();
            let y = f.apply_counted(&x, &mut ops)?;
            let (fwd, bwd) = if cfg.counts_only {
                (None, None)
            } else {
                let fwd = median_ms(|| {
                    std::hint::black_box(f.apply(&x).expect("apply"));
                });
                let bwd = median_ms(|| {
                    std::hint::black_box(f.apply_vjp(&x, &y).expect("vjp"));
                });
                (Some(fwd), Some(bwd))
            };
            rows.push(SpeedRow {
                kind: kind.to_string(),
                n,
                batch: cfg.batch,
                forward_ops: ops.flops,
                forward_ms: fwd,
                backward_ms: bwd,
            });
        }
    }
    Ok(rows)
}

fn dense_row(n: usize, x: &Mat<f64>, cfg: &SpeedConfig) -> BenchResult<SpeedRow> {
    let (fwd, bwd) = if cfg.counts_only || n > MAX_TIMED_DENSE {
        (None, None)
    } else {
        let q = Mat::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 97) as f64 / 97.0);
        let fwd = median_ms(|| {
            std::hint::black_box(q.matmul(x).expect("shapes"));
        });
        let bwd = median_ms(|| {
            std::hint::black_box(q.t_matmul(x).expect("shapes"));
        });
        (Some(fwd), Some(bwd))
    };
    Ok(SpeedRow {
        kind: BenchKind::Dense.to_string(),
        n,
        batch: cfg.batch,
        forward_ops: dense_apply_ops(n, cfg.batch),
        forward_ms: fwd,
        backward_ms: bwd,
    })
}
