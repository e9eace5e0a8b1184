use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qpeft_bench::checks::{check_speed, check_unitarity, CheckOutcome, QAT_RESIDUAL_FACTOR, TOY_RESIDUAL_MAX};
use qpeft_bench::kind::BenchKind;
use qpeft_bench::report::{render, Format};
use qpeft_bench::speed::{bench_speed, SpeedConfig};
use qpeft_bench::tables::{csd_plans, params_table, quant_table, QuantTableConfig};
use qpeft_bench::train::{train_toy, TrainConfig};
use qpeft_bench::unitarity::{bench_unitarity, UnitarityConfig};
use qpeft_bench::{BenchError, BenchResult};
use qpeft_core::adapter::{FactorSpec, ModelGeometry};
use qpeft_core::QuantConfig;

/// Orthogonal adapter benchmark harness
#[derive(Parser, Debug)]
#[command(name = "bench", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Unitarity error per map kind and size
    Unitarity,
    /// Forward/backward timing and operation counts
    Speed,
    /// LoRA vs circuit-adapter parameter and memory table
    ParamsTable,
    /// Bits per parameter and quantization error of Lie parameters
    QuantTable,
    /// Fit a random low-rank target by gradient descent
    TrainToy,
    /// Cosine-sine recursion plan per size
    CsdPlan,
}

#[derive(Args, Debug)]
struct Opts {
    /// Comma-separated kinds: exp, taylor[:P], cayley, neumann[:P], householder, givens, pauli, csd, dense
    #[arg(long, global = true)]
    maps: Option<String>,

    /// Comma-separated sizes N
    #[arg(long, global = true, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,

    /// Rank K (comma-separated list for params-table)
    #[arg(long, global = true, value_delimiter = ',')]
    rank: Option<Vec<usize>>,

    /// Circuit layers L
    #[arg(long, global = true, default_value_t = 1)]
    layers: usize,

    /// Series order P for taylor/neumann kinds given without one
    #[arg(long, global = true)]
    order: Option<usize>,

    /// Geometry preset: deberta-v3-base, llama-3.1-405b
    #[arg(long, global = true, default_value = "deberta-v3-base")]
    geometry: String,

    /// Comma-separated bit widths
    #[arg(long, global = true, value_delimiter = ',')]
    bits: Option<Vec<u32>>,

    /// Quantization group size g
    #[arg(long, global = true, default_value_t = 128)]
    group: usize,

    /// Adaptive bit loading exponent (enables adaptive loading)
    #[arg(long, global = true)]
    kappa: Option<f64>,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Random instances per sweep point
    #[arg(long, global = true, default_value_t = 10)]
    seeds: usize,

    #[arg(long, global = true, default_value_t = 32)]
    batch: usize,

    /// Lie parameters start uniform in ±scale
    #[arg(long, global = true, default_value_t = 0.01)]
    init_scale: f64,

    /// csv, json or md
    #[arg(long, global = true, default_value = "csv")]
    format: String,

    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    out: Option<String>,

    /// Evaluate acceptance thresholds; exit 1 if any fails
    #[arg(long, global = true)]
    check: bool,

    /// Gradient steps (train-toy)
    #[arg(long, global = true, default_value_t = 2000)]
    steps: usize,

    /// Comma-separated learning rates (train-toy)
    #[arg(long, global = true, value_delimiter = ',')]
    lrs: Option<Vec<f64>>,

    /// Quantization-aware training bit width (train-toy)
    #[arg(long, global = true)]
    qat_bits: Option<u32>,

    /// Emit per-step residuals instead of the summary (train-toy)
    #[arg(long, global = true)]
    curve: bool,

    /// Report operation counts only, no timing (speed)
    #[arg(long, global = true)]
    counts_only: bool,
}

impl Opts {
    fn kinds(&self, default: &str, default_order: usize) -> BenchResult<Vec<BenchKind>> {
        BenchKind::parse_list(self.maps.as_deref().unwrap_or(default), self.order.unwrap_or(default_order))
    }

    fn sizes(&self, default: &[usize]) -> BenchResult<Vec<usize>> {
        let s = self.sizes.clone().unwrap_or_else(|| default.to_vec());
        if s.is_empty() || s.contains(&0) {
            return Err(BenchError::Usage("sizes must be a non-empty list of positive integers".into()));
        }
        Ok(s)
    }

    fn ranks(&self, default: &[usize]) -> BenchResult<Vec<usize>> {
        let r = self.rank.clone().unwrap_or_else(|| default.to_vec());
        if r.is_empty() || r.contains(&0) {
            return Err(BenchError::Usage("rank must be positive".into()));
        }
        Ok(r)
    }
}

struct Output {
    text: String,
    checks: Vec<CheckOutcome>,
}

fn emit<R: Serialize>(rows: &[R], format: Format, checks: Vec<CheckOutcome>) -> BenchResult<Output> {
    Ok(Output {
        text: render(rows, format)?,
        checks,
    })
}

fn run(cmd: Cmd, o: &Opts) -> BenchResult<Output> {
    let format: Format = o.format.parse()?;
    match cmd {
        Cmd::Unitarity => {
            let cfg = UnitarityConfig {
                kinds: o.kinds("householder,givens,cayley,taylor:18,exp,neumann:18", 18)?,
                sizes: o.sizes(&[64, 256, 1024, 4096])?,
                rank: o.ranks(&[4])?[0],
                layers: o.layers,
                seeds: o.seeds.max(1),
                init_scale: o.init_scale,
                seed: o.seed,
            };
            let rows = bench_unitarity(&cfg)?;
            let checks = if o.check { check_unitarity(&rows, cfg.init_scale) } else { Vec::new() };
            emit(&rows, format, checks)
        }
        Cmd::Speed => {
            if o.batch == 0 {
                return Err(BenchError::Usage("batch must be positive".into()));
            }
            let cfg = SpeedConfig {
                kinds: o.kinds("pauli,dense,cayley,householder", 18)?,
                sizes: o.sizes(&[1024, 4096, 16384])?,
                rank: o.ranks(&[4])?[0],
                layers: o.layers,
                batch: o.batch,
                init_scale: o.init_scale,
                seed: o.seed,
                counts_only: o.counts_only,
            };
            let rows = bench_speed(&cfg)?;
            let checks = if o.check { check_speed(&rows) } else { Vec::new() };
            emit(&rows, format, checks)
        }
        Cmd::ParamsTable => {
            let geometry = ModelGeometry::preset(&o.geometry).map_err(|e| BenchError::Usage(e.to_string()))?;
            let rows = params_table(&geometry, &o.ranks(&[1, 16, 256])?, o.layers)?;
            emit(&rows, format, Vec::new())
        }
        Cmd::QuantTable => {
            let cfg = QuantTableConfig {
                bits: o.bits.clone().unwrap_or_else(|| vec![8, 4, 3, 2, 1]),
                group: o.group,
                kappa: o.kappa,
                size: o.sizes(&[64])?[0],
                rank: o.ranks(&[4])?[0],
                init_scale: o.init_scale,
                seed: o.seed,
            };
            let rows = quant_table(&cfg)?;
            let checks = if o.check {
                rows.iter()
                    .map(|r| {
                        CheckOutcome::new(
                            format!("quantized map unitarity n={}", r.bits),
                            r.unitarity_error <= 1e-12,
                            format!("{:.3e}", r.unitarity_error),
                        )
                    })
                    .collect()
            } else {
                Vec::new()
            };
            emit(&rows, format, checks)
        }
        Cmd::TrainToy => {
            let kind = o.kinds("taylor", 6)?;
            let factor = match kind[0] {
                BenchKind::Lie(k) => FactorSpec::lie(k),
                BenchKind::Pauli | BenchKind::Csd => FactorSpec::Pauli { layers: o.layers },
                BenchKind::Dense => return Err(BenchError::Usage("train-toy needs a parameterized factor".into())),
            };
            let n = o.sizes(&[32])?[0];
            let k = o.ranks(&[4])?[0];
            let mut cfg = TrainConfig {
                rows: n,
                cols: n,
                rank: k,
                target_rank: k,
                factor,
                steps: o.steps,
                seed: o.seed,
                ..TrainConfig::default()
            };
            if let Some(lrs) = &o.lrs {
                if lrs.is_empty() || lrs.iter().any(|l| !(*l > 0.0)) {
                    return Err(BenchError::Usage("learning rates must be positive".into()));
                }
                cfg.lrs = lrs.clone();
            }
            let fp = train_toy(&cfg)?;
            let mut checks = Vec::new();
            let report_cfg = match o.qat_bits {
                Some(bits) => {
                    let qcfg = TrainConfig {
                        qat: Some(QuantConfig::uniform(bits, o.group)),
                        ..cfg.clone()
                    };
                    let q = train_toy(&qcfg)?;
                    if o.check {
                        let (a, b) = (q.best_run().final_residual, fp.best_run().final_residual);
                        checks.push(CheckOutcome::new(
                            format!("{bits}-bit QAT residual vs FP"),
                            a <= QAT_RESIDUAL_FACTOR * b,
                            format!("{a:.3e} vs {QAT_RESIDUAL_FACTOR}x {b:.3e}"),
                        ));
                    }
                    Some((q, qcfg))
                }
                None => None,
            };
            if o.check {
                let r = fp.best_run().final_residual;
                checks.insert(
                    0,
                    CheckOutcome::new("toy residual", r <= TOY_RESIDUAL_MAX, format!("{r:.3e} (limit {TOY_RESIDUAL_MAX:e})")),
                );
            }
            let (report, rcfg) = report_cfg.unwrap_or((fp, cfg));
            if o.curve {
                emit(&report.curves(), format, checks)
            } else {
                emit(&report.summary(&rcfg), format, checks)
            }
        }
        Cmd::CsdPlan => {
            let sizes = o.sizes(&[8, 12, 28, 768])?;
            let rows = csd_plans(&sizes)?;
            emit(&rows, format, Vec::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd, &cli.opts) {
        Ok(out) => {
            let written = match &cli.opts.out {
                Some(path) => fs::write(path, &out.text),
                None => {
                    print!("{}", out.text);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            for c in &out.checks {
                eprintln!("{}", c.line());
            }
            if out.checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
