//! Fitting a low-rank target with an orthogonal adapter by plain gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use qpeft_core::adapter::FactorSpec;
use qpeft_core::grad::GradTape;
use qpeft_core::maps::MapKind;
use qpeft_core::quant::QuantConfig;
use qpeft_core::{Mat, OrthoFactor, Orthogonal, Result};

pub const TOY_LRS: [f64; 3] = [0.3, 0.1, 0.03];

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub target_rank: usize,
    pub factor: FactorSpec,
    pub alpha: f64,
    pub steps: usize,
    pub lrs: Vec<f64>,
    pub qat: Option<QuantConfig>,
    pub seed: u64,
    /// `false` gives the all-zero target.
    pub nonzero_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 32,
            rank: 4,
            target_rank: 4,
            factor: FactorSpec::lie(MapKind::Taylor { order: 6 }),
            alpha: 32.0,
            steps: 2000,
            lrs: TOY_LRS.to_vec(),
            qat: None,
            seed: 0,
            nonzero_target: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub lr: f64,
    /// Relative residual `‖ΔW − T‖_F / ‖T‖_F` before each step, then after the last.
    pub curve: Vec<f64>,
    pub final_residual: f64,
    pub diverged_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub runs: Vec<TrainRun>,
    pub best: usize,
}

impl TrainReport {
    pub fn best_run(&self) -> &TrainRun {
        &self.runs[self.best]
    }
}

struct Problem {
    u: OrthoFactor<f64>,
    v: OrthoFactor<f64>,
    target: Mat<f64>,
    target_norm2: f64,
}

impl Problem {
    fn residual(&self, sq_err: f64) -> f64 {
        if self.target_norm2 > 0.0 {
            (sq_err / self.target_norm2).sqrt()
        } else {
            sq_err.sqrt()
        }
    }
}

fn setup(cfg: &TrainConfig) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // unit-variance factors scaled so target entries have unit variance
    let s3 = 3f64.sqrt();
    let a = Mat::from_fn(cfg.rows, cfg.target_rank, |_, _| rng.gen_range(-s3..s3));
    let b = Mat::from_fn(cfg.cols, cfg.target_rank, |_, _| rng.gen_range(-s3..s3));
    let scale = if cfg.nonzero_target { 1.0 / (cfg.target_rank as f64).sqrt() } else { 0.0 };
    let target = a.matmul(&b.transpose())?.scaled(scale);
    let u = cfg.factor.build(cfg.rows, cfg.rank, &mut rng)?;
    let v = cfg.factor.build(cfg.cols, cfg.rank, &mut rng)?;
    let n2 = target.as_slice().iter().map(|x| x * x).sum::<f64>();
    Ok(Problem {
        u,
        v,
        target,
        target_norm2: n2,
    })
}

/// Squared error of `ΔW − T` averaged over the `M` input columns, and its gradient.
fn loss_and_grad(p: &Problem, cfg: &TrainConfig, theta: &[Vec<f64>; 3]) -> Result<(f64, [Vec<f64>; 3])> {
    let mut t = GradTape::new();
    let mut pu = t.param("0u", Mat::column(&theta[0]));
    let mut pv = t.param("1v", Mat::column(&theta[1]));
    let lam = t.param("2l", Mat::column(&theta[2]));
    if let Some(q) = &cfg.qat {
        pu = t.quantize_ste(pu, q)?;
        pv = t.quantize_ste(pv, q)?;
    }
    let eu = t.constant(Mat::eye(cfg.rows, cfg.rank));
    let ev = t.constant(Mat::eye(cfg.cols, cfg.rank));
    let us = t.ortho_apply(&p.u, pu, eu)?;
    let vs = t.ortho_apply(&p.v, pv, ev)?;
    let ul = t.scale_cols(us, lam)?;
    let vt = t.transpose(vs);
    let prod = t.matmul(ul, vt)?;
    let dw = t.scale(prod, cfg.alpha / cfg.rank as f64);
    let tv = t.constant(p.target.clone());
    let r = t.sub(dw, tv)?;
    let ss = t.sum_squares(r);
    let loss = t.scale(ss, 1.0 / cfg.cols as f64);
    let value = t.value(loss)[(0, 0)];
    let g = t.backward(loss, None)?;
    let get = |k: &str| g.get(k).map(|m| m.as_slice().to_vec()).unwrap_or_default();
    Ok((value, [get("0u"), get("1v"), get("2l")]))
}

fn run_one(p: &Problem, cfg: &TrainConfig, lr: f64) -> Result<TrainRun> {
    let mut theta = [p.u.params(), p.v.params(), vec![0.0; cfg.rank]];
    let mut curve = Vec::with_capacity(cfg.steps + 1);
    let mut diverged_at = None;
    for step in 0..=cfg.steps {
        let (loss, grad) = loss_and_grad(p, cfg, &theta)?;
        if !loss.is_finite() {
            diverged_at = Some(step);
            break;
        }
        curve.push(p.residual(loss * cfg.cols as f64));
        if step == cfg.steps {
            break;
        }
        for (th, g) in theta.iter_mut().zip(&grad) {
            for (a, b) in th.iter_mut().zip(g) {
                *a -= lr * b;
            }
        }
    }
    let final_residual = if diverged_at.is_some() { f64::NAN } else { *curve.last().expect("non-empty curve") };
    Ok(TrainRun {
        lr,
        curve,
        final_residual,
        diverged_at,
    })
}

/// Runs every learning rate from the same initialization and keeps the lowest final residual.
pub fn train_toy(cfg: &TrainConfig) -> Result<TrainReport> {
    let p = setup(cfg)?;
    let runs = cfg.lrs.iter().map(|&lr| run_one(&p, cfg, lr)).collect::<Result<Vec<_>>>()?;
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.final_residual.is_finite())
        .min_by(|a, b| a.1.final_residual.total_cmp(&b.1.final_residual))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(TrainReport { runs, best })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummaryRow {
    pub lr: f64,
    pub qat_bits: u32,
    pub steps: usize,
    pub final_residual: f64,
    pub diverged_at: Option<usize>,
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainCurveRow {
    pub lr: f64,
    pub step: usize,
    pub residual: f64,
}

impl TrainReport {
    pub fn summary(&self, cfg: &TrainConfig) -> Vec<TrainSummaryRow> {
        self.runs
            .iter()
            .enumerate()
            .map(|(i, r)| TrainSummaryRow {
                lr: r.lr,
                qat_bits: cfg.qat.map_or(0, |q| q.bits),
                steps: cfg.steps,
                final_residual: r.final_residual,
                diverged_at: r.diverged_at,
                best: i == self.best,
            })
            .collect()
    }

    pub fn curves(&self) -> Vec<TrainCurveRow> {
        self.runs
            .iter()
            .flat_map(|r| {
                r.curve.iter().enumerate().map(move |(step, &residual)| TrainCurveRow {
                    lr: r.lr,
                    step,
                    residual,
                })
            })
            .collect()
    }
}
