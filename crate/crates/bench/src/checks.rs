//! Pass/fail thresholds applied by `--check` and the acceptance suite.

use crate::speed::SpeedRow;
use crate::unitarity::UnitarityRow;

/// Exact reflections and rotations: `max error ≤ 64·ε·N'`.
pub const EXACT_MAP_EPS_FACTOR: f64 = 64.0;
pub const CAYLEY_TOL: f64 = 1e-10;
pub const TAYLOR18_TOL: f64 = 1e-10;
/// `TAYLOR18_TOL` applies at or below this init scale.
pub const TAYLOR18_INIT_SCALE: f64 = 0.01;
pub const PAULI_TOL: f64 = 1e-12;
pub const CSD_TOL: f64 = 1e-10;
pub const PAULI_DENSE_MIN_RATIO: f64 = 50.0;
/// Size at which the dense/circuit ratio is enforced.
pub const PAULI_DENSE_CHECK_N: usize = 1 << 14;
/// Allowed deviation of circuit op-count growth from `N log N`.
pub const PAULI_SCALING_TOL: f64 = 0.2;
/// Init scale of the size-degradation and order sweeps.
pub const DEGRADATION_INIT_SCALE: f64 = 0.1;
pub const TOY_RESIDUAL_MAX: f64 = 1e-2;
pub const QAT_RESIDUAL_FACTOR: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Threshold for a unitarity row, if its kind has one at this init scale.
pub fn unitarity_threshold(kind: &str, n: usize, init_scale: f64) -> Option<f64> {
    match kind {
        "householder" | "givens" => Some(EXACT_MAP_EPS_FACTOR * f64::EPSILON * n as f64),
        "cayley" => Some(CAYLEY_TOL),
        "taylor:18" if init_scale <= TAYLOR18_INIT_SCALE => Some(TAYLOR18_TOL),
        "pauli" => Some(PAULI_TOL),
        "csd" => Some(CSD_TOL),
        _ => None,
    }
}

pub fn check_unitarity(rows: &[UnitarityRow], init_scale: f64) -> Vec<CheckOutcome> {
    rows.iter()
        .filter_map(|r| {
            unitarity_threshold(&r.kind, r.n, init_scale).map(|tol| {
                CheckOutcome::new(
                    format!("unitarity {} N={}", r.kind, r.n),
                    r.max_error <= tol,
                    format!("max error {:.3e} over {} seeds, limit {tol:.3e}", r.max_error, r.seeds),
                )
            })
        })
        .collect()
}

/// Circuit apply must undercut the dense apply by the minimum ratio at `PAULI_DENSE_CHECK_N`,
/// and circuit op counts must grow like `N log N` between consecutive sizes.
pub fn check_speed(rows: &[SpeedRow]) -> Vec<CheckOutcome> {
    let pauli: Vec<&SpeedRow> = rows.iter().filter(|r| r.kind == "pauli").collect();
    let mut out: Vec<CheckOutcome> = pauli
        .iter()
        .filter(|p| p.n == PAULI_DENSE_CHECK_N)
        .filter_map(|p| {
            rows.iter().find(|d| d.kind == "dense" && d.n == p.n && d.batch == p.batch).map(|d| {
                let ratio = d.forward_ops as f64 / p.forward_ops as f64;
                CheckOutcome::new(
                    format!("dense/pauli op ratio N={}", p.n),
                    ratio >= PAULI_DENSE_MIN_RATIO,
                    format!("{ratio:.1}x (limit {PAULI_DENSE_MIN_RATIO}x)"),
                )
            })
        })
        .collect();
    for w in pauli.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.batch != b.batch || !a.n.is_power_of_two() || !b.n.is_power_of_two() || a.n < 2 {
            continue;
        }
        let nlogn = |n: usize| n as f64 * n.trailing_zeros() as f64;
        let expect = nlogn(b.n) / nlogn(a.n);
        let got = b.forward_ops as f64 / a.forward_ops as f64;
        out.push(CheckOutcome::new(
            format!("pauli op growth N={}..{}", a.n, b.n),
            (got / expect - 1.0).abs() <= PAULI_SCALING_TOL,
            format!("{got:.2}x vs N log N {expect:.2}x"),
        ));
    }
    out
}

/// Mean error of each listed kind must not drop as `N` grows.
pub fn check_degradation(rows: &[UnitarityRow], kinds: &[&str]) -> Vec<CheckOutcome> {
    kinds
        .iter()
        .map(|&kind| {
            let mut pts: Vec<(usize, f64)> = rows.iter().filter(|r| r.kind == kind).map(|r| (r.n, r.mean_error)).collect();
            pts.sort_by_key(|p| p.0);
            let errs: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let detail = pts.iter().map(|(n, e)| format!("{n}:{e:.2e}")).collect::<Vec<_>>().join(" ");
            CheckOutcome::new(format!("{kind} error non-decreasing in N"), errs.len() >= 2 && non_decreasing(&errs), detail)
        })
        .collect()
}

/// At every `N`, mean error must strictly decrease along the given order of kinds.
pub fn check_order(rows: &[UnitarityRow], kinds: &[&str]) -> Vec<CheckOutcome> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let errs: Vec<Option<f64>> = kinds
                .iter()
                .map(|k| rows.iter().find(|r| r.n == n && r.kind == *k).map(|r| r.mean_error))
                .collect();
            let ok = errs.iter().all(Option::is_some)
                && errs.windows(2).all(|w| w[1].unwrap() < w[0].unwrap());
            let detail = kinds
                .iter()
                .zip(&errs)
                .map(|(k, e)| format!("{k}:{}", e.map_or("-".into(), |e| format!("{e:.2e}"))))
                .collect::<Vec<_>>()
                .join(" ");
            CheckOutcome::new(format!("error decreasing in order N={n}"), ok, detail)
        })
        .collect()
}

pub fn non_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

pub fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}
