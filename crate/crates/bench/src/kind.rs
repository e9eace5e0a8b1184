//! Parameterizations selectable from the command line.

use std::fmt;
use std::str::FromStr;

use qpeft_core::csd::{factor_for_dim, LeafSpec};
use qpeft_core::lie::{Init, LieConfig, LieParams};
use qpeft_core::maps::{LieMap, MapKind};
use qpeft_core::pauli::TwoDesignCircuit;
use qpeft_core::{OrthoFactor, Orthogonal};
use rand::Rng;

use crate::error::{BenchError, BenchResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchKind {
    /// Rank-`K` Lie parameters under a map, evaluated on `Q·E_K`.
    Lie(MapKind),
    /// Two-design circuit on `N = 2^q`, materialized.
    Pauli,
    /// Cosine-sine tree with circuit leaves, any `N`, materialized.
    Csd,
    /// Explicit `N × N` matrix (apply baseline).
    Dense,
}

impl fmt::Display for BenchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchKind::Lie(k) => write!(f, "{k}"),
            BenchKind::Pauli => write!(f, "pauli"),
            BenchKind::Csd => write!(f, "csd"),
            BenchKind::Dense => write!(f, "dense"),
        }
    }
}

impl BenchKind {
    /// Parses a kind; series maps without an explicit order get `default_order`.
    pub fn parse(s: &str, default_order: usize) -> BenchResult<Self> {
        match s {
            "pauli" => Ok(BenchKind::Pauli),
            "csd" => Ok(BenchKind::Csd),
            "dense" => Ok(BenchKind::Dense),
            _ => {
                let mut k = MapKind::from_str(s).map_err(|e| BenchError::Usage(e.to_string()))?;
                if !s.contains(':') {
                    match &mut k {
                        MapKind::Taylor { order } | MapKind::Neumann { order } => *order = default_order,
                        _ => {}
                    }
                }
                Ok(BenchKind::Lie(k))
            }
        }
    }

    pub fn parse_list(s: &str, default_order: usize) -> BenchResult<Vec<Self>> {
        let v = s
            .split(',')
            .filter(|t| !t.is_empty())
            .map(|t| Self::parse(t.trim(), default_order))
            .collect::<BenchResult<Vec<_>>>()?;
        if v.is_empty() {
            return Err(BenchError::Usage("empty map list".into()));
        }
        Ok(v)
    }

    /// Random instance of size `n`. Lie kinds use rank `min(k, n − 1)` and entries uniform in `±init_scale`;
    /// circuit and cosine-sine angles are uniform in `(−π, π)`.
    pub fn build<R: Rng + ?Sized>(&self, n: usize, k: usize, layers: usize, init_scale: f64, rng: &mut R) -> BenchResult<OrthoFactor<f64>> {
        let f = match *self {
            BenchKind::Lie(kind) => {
                let k = k.min(n.saturating_sub(1)).max(1);
                let cfg = LieConfig::new(n, k).init(Init::Uniform(init_scale));
                OrthoFactor::Lie(LieMap::new(LieParams::from_config(&cfg, rng)?, kind)?)
            }
            BenchKind::Pauli => {
                if !n.is_power_of_two() || n < 2 {
                    return Err(BenchError::Usage(format!("pauli needs a power-of-two size, got {n}")));
                }
                OrthoFactor::Pauli(TwoDesignCircuit::random(n.trailing_zeros() as usize, layers, rng)?)
            }
            BenchKind::Csd | BenchKind::Dense => {
                let mut f = factor_for_dim(n, &LeafSpec::Pauli { layers })?;
                let angles: Vec<f64> = (0..f.num_params()).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
                f.set_params(&angles)?;
                f
            }
        };
        Ok(f)
    }

    /// Whether unitarity is measured on the full matrix rather than `Q·E_K`.
    pub fn materializes(&self) -> bool {
        !matches!(self, BenchKind::Lie(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_kinds() {
        assert_eq!(BenchKind::parse("taylor", 6).unwrap(), BenchKind::Lie(MapKind::Taylor { order: 6 }));
        assert_eq!(BenchKind::parse("taylor:4", 6).unwrap(), BenchKind::Lie(MapKind::Taylor { order: 4 }));
        assert_eq!(BenchKind::parse("pauli", 6).unwrap(), BenchKind::Pauli);
        assert_eq!(BenchKind::parse("bogus", 6).unwrap_err().exit_code(), 2);
        assert_eq!(BenchKind::parse_list("exp,cayley", 18).unwrap().len(), 2);
        assert_eq!(BenchKind::Lie(MapKind::Neumann { order: 18 }).to_string(), "neumann:18");
    }
}
