//! Simplified two-design ansatz: alternating RY rotations and CZ entanglers on `q`
//! qubits, applied to length-`2^q` vectors with strided per-qubit kernels.
//!
//! Layout (`brickwork-v1`): an RY on every qubit, then per layer
//! CZ on pairs (0,1),(2,3),… followed by RY on qubits `0..q-1`, then
//! CZ on pairs (1,2),(3,4),… followed by RY on qubits `1..q`.
//! Qubit 0 is the most significant bit of the state index.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{Mat, OpCounter};
use crate::ortho::Orthogonal;
use crate::scalar::Scalar;

pub const LAYOUT_TAG: &str = "brickwork-v1";

/// Largest qubit count for which a dense matrix is produced.
pub const MAX_DENSE_QUBITS: usize = 12;

/// `[[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]`.
pub fn ry<T: Scalar>(theta: T) -> [[T; 2]; 2] {
    let (s, c) = (theta * T::of(0.5)).sin_cos();
    [[c, -s], [s, c]]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RyGate<T> {
    pub angle: T,
    pub target: usize,
}

impl<T: Scalar> RyGate<T> {
    pub fn matrix(&self) -> [[T; 2]; 2] {
        ry(self.angle)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CzGate {
    pub control: usize,
    pub target: usize,
}

impl CzGate {
    pub fn matrix<T: Scalar>(&self) -> [[T; 4]; 4] {
        let mut m = [[T::zero(); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = if i == 3 { -T::one() } else { T::one() };
        }
        m
    }
}

/// One slot of the fixed gate layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateSlot {
    /// RY on `qubit` reading angle number `param`.
    Ry { qubit: usize, param: usize },
    Cz(CzGate),
}

/// Number of RY angles, `(2L+1)·q − 2L`.
pub fn pauli_param_count(qubits: usize, layers: usize) -> usize {
    (2 * layers + 1) * qubits - 2 * layers
}

/// Gate sequence in application order (first element acts first on the state).
pub fn brickwork_layout(qubits: usize, layers: usize) -> Vec<GateSlot> {
    let mut gates = Vec::new();
    let mut param = 0;
    let mut ry_range = |gates: &mut Vec<GateSlot>, range: std::ops::Range<usize>| {
        for qubit in range {
            gates.push(GateSlot::Ry { qubit, param });
            param += 1;
        }
    };
    ry_range(&mut gates, 0..qubits);
    for _ in 0..layers {
        for a in (0..qubits.saturating_sub(1)).step_by(2) {
            gates.push(GateSlot::Cz(CzGate { control: a, target: a + 1 }));
        }
        ry_range(&mut gates, 0..qubits.saturating_sub(1));
        for a in (1..qubits.saturating_sub(1)).step_by(2) {
            gates.push(GateSlot::Cz(CzGate { control: a, target: a + 1 }));
        }
        ry_range(&mut gates, 1.min(qubits)..qubits);
    }
    gates
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoDesignCircuit<T> {
    qubits: usize,
    layers: usize,
    angles: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct CircuitJson {
    layout: String,
    qubits: usize,
    layers: usize,
    angles: Vec<f64>,
}

impl<T: Scalar> TwoDesignCircuit<T> {
    /// Circuit with every angle zero.
    pub fn new(qubits: usize, layers: usize) -> Result<Self> {
        if qubits == 0 {
            return Err(Error::InvalidConfig("a circuit needs at least one qubit".into()));
        }
        if qubits >= usize::BITS as usize - 1 {
            return Err(Error::InvalidConfig(format!("{qubits} qubits overflow the state index")));
        }
        Ok(Self {
            qubits,
            layers,
            angles: vec![T::zero(); pauli_param_count(qubits, layers)],
        })
    }

    pub fn with_angles(qubits: usize, layers: usize, angles: Vec<T>) -> Result<Self> {
        let mut c = Self::new(qubits, layers)?;
        c.set_params(&angles)?;
        Ok(c)
    }

    /// Angles drawn uniformly from `(−π, π)`.
    pub fn random<R: Rng + ?Sized>(qubits: usize, layers: usize, rng: &mut R) -> Result<Self> {
        let mut c = Self::new(qubits, layers)?;
        for a in &mut c.angles {
            *a = T::of(rng.gen_range(-PI..PI));
        }
        Ok(c)
    }

    /// Circuit acting on dimension `dim`, which must be a power of two ≥ 2.
    pub fn for_dim(dim: usize, layers: usize) -> Result<Self> {
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::InvalidConfig(format!("dimension {dim} is not a power of two ≥ 2")));
        }
        Self::new(dim.trailing_zeros() as usize, layers)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn angles(&self) -> &[T] {
        &self.angles
    }

    pub fn layout(&self) -> Vec<GateSlot> {
        brickwork_layout(self.qubits, self.layers)
    }

    pub fn ry_gates(&self) -> Vec<RyGate<T>> {
        self.layout()
            .into_iter()
            .filter_map(|g| match g {
                GateSlot::Ry { qubit, param } => Some(RyGate {
                    angle: self.angles[param],
                    target: qubit,
                }),
                GateSlot::Cz(_) => None,
            })
            .collect()
    }

    fn bit(&self, qubit: usize) -> usize {
        1 << (self.qubits - 1 - qubit)
    }

    fn check_input(&self, x: &Mat<T>) -> Result<()> {
        let n = self.dim();
        if x.rows() != n {
            return Err(shape_err(format!("{n} rows"), x.rows()));
        }
        Ok(())
    }

    fn rotate(&self, x: &mut Mat<T>, qubit: usize, theta: T, ops: &mut OpCounter) {
        let bit = self.bit(qubit);
        let b = x.cols();
        let n = x.rows();
        let (s, c) = (theta * T::of(0.5)).sin_cos();
        let data = x.as_mut_slice();
        for base in (0..n).step_by(2 * bit) {
            let block = &mut data[base * b..(base + 2 * bit) * b];
            let (lo, hi) = block.split_at_mut(bit * b);
            for (a, bb) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a, *bb);
                *a = c * x0 - s * x1;
                *bb = s * x0 + c * x1;
            }
        }
        ops.add(3 * n * b);
    }

    fn entangle(&self, x: &mut Mat<T>, cz: CzGate, ops: &mut OpCounter) {
        let mask = self.bit(cz.control) | self.bit(cz.target);
        let b = x.cols();
        for i in 0..x.rows() {
            if i & mask == mask {
                x.row_mut(i).iter_mut().for_each(|v| *v = -*v);
            }
        }
        ops.add(x.rows() / 4 * b);
    }

    /// Dense `2^q × 2^q` matrix of the circuit.
    pub fn materialize_dense(&self) -> Result<Mat<T>> {
        if self.qubits > MAX_DENSE_QUBITS {
            return Err(Error::InvalidConfig(format!(
                "refusing to materialize {} qubits (limit {MAX_DENSE_QUBITS}); use apply",
                self.qubits
            )));
        }
        self.apply(&Mat::identity(self.dim()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CircuitJson {
            layout: LAYOUT_TAG.into(),
            qubits: self.qubits,
            layers: self.layers,
            angles: self.angles.iter().map(|a| a.as_f64()).collect(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: CircuitJson = serde_json::from_str(s)?;
        if j.layout != LAYOUT_TAG {
            return Err(Error::Format(format!("unsupported circuit layout {:?}", j.layout)));
        }
        Self::with_angles(j.qubits, j.layers, j.angles.into_iter().map(T::of).collect())
    }
}

impl<T: Scalar> Orthogonal<T> for TwoDesignCircuit<T> {
    fn dim(&self) -> usize {
        1 << self.qubits
    }

    fn num_params(&self) -> usize {
        self.angles.len()
    }

    fn params(&self) -> Vec<T> {
        self.angles.clone()
    }

    fn set_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.angles.len() {
            return Err(shape_err(format!("{} angles", self.angles.len()), values.len()));
        }
        self.angles.copy_from_slice(values);
        Ok(())
    }

    fn apply_counted(&self, x: &Mat<T>, ops: &mut OpCounter) -> Result<Mat<T>> {
        self.check_input(x)?;
        let mut y = x.clone();
        for slot in self.layout() {
            match slot {
                GateSlot::Ry { qubit, param } => self.rotate(&mut y, qubit, self.angles[param], ops),
                GateSlot::Cz(cz) => self.entangle(&mut y, cz, ops),
            }
        }
        Ok(y)
    }

    fn apply_transpose(&self, x: &Mat<T>) -> Result<Mat<T>> {
        self.check_input(x)?;
        let mut ops = OpCounter::new();
        let mut y = x.clone();
        for slot in self.layout().into_iter().rev() {
            match slot {
                GateSlot::Ry { qubit, param } => self.rotate(&mut y, qubit, -self.angles[param], &mut ops),
                GateSlot::Cz(cz) => self.entangle(&mut y, cz, &mut ops),
            }
        }
        Ok(y)
    }

    /// Reverse sweep that reconstructs each gate's input by undoing the gate,
    /// so no intermediate states are stored.
    fn apply_vjp(&self, x: &Mat<T>, upstream: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
        self.check_input(x)?;
        upstream.check_same_shape(x)?;
        let mut ops = OpCounter::new();
        let mut y = self.apply(x)?;
        let mut g = upstream.clone();
        let mut grads = vec![T::zero(); self.angles.len()];
        let half = T::of(0.5);
        let b = x.cols();
        for slot in self.layout().into_iter().rev() {
            match slot {
                GateSlot::Ry { qubit, param } => {
                    // y0 = c·x0 − s·x1, y1 = s·x0 + c·x1 ⇒ ∂y0/∂θ = −y1/2, ∂y1/∂θ = y0/2
                    let bit = self.bit(qubit);
                    let yd = y.as_slice();
                    let gd = g.as_slice();
                    let mut acc = T::zero();
                    for base in (0..y.rows()).step_by(2 * bit) {
                        for i in base..base + bit {
                            let (r0, r1) = (i * b, (i + bit) * b);
                            for j in 0..b {
                                acc += gd[r1 + j] * yd[r0 + j] - gd[r0 + j] * yd[r1 + j];
                            }
                        }
                    }
                    grads[param] += half * acc;
                    let theta = self.angles[param];
                    self.rotate(&mut y, qubit, -theta, &mut ops);
                    self.rotate(&mut g, qubit, -theta, &mut ops);
                }
                GateSlot::Cz(cz) => {
                    self.entangle(&mut y, cz, &mut ops);
                    self.entangle(&mut g, cz, &mut ops);
                }
            }
        }
        Ok((grads, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kron(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
        Mat::from_fn(a.rows() * b.rows(), a.cols() * b.cols(), |i, j| {
            a[(i / b.rows(), j / b.cols())] * b[(i % b.rows(), j % b.cols())]
        })
    }

    /// Gate-by-gate dense product built from Kronecker factors.
    fn dense_oracle(c: &TwoDesignCircuit<f64>) -> Mat<f64> {
        let q = c.qubits();
        let mut total = Mat::identity(1 << q);
        for slot in c.layout() {
            let (gate, first, width) = match slot {
                GateSlot::Ry { qubit, param } => {
                    let m = ry(c.angles()[param]);
                    (Mat::from_fn(2, 2, |i, j| m[i][j]), qubit, 1)
                }
                GateSlot::Cz(cz) => {
                    let m = cz.matrix::<f64>();
                    (Mat::from_fn(4, 4, |i, j| m[i][j]), cz.control, 2)
                }
            };
            let left = Mat::identity(1 << first);
            let right = Mat::identity(1 << (q - first - width));
            let full = kron(&kron(&left, &gate), &right);
            total = full.matmul(&total).unwrap();
        }
        total
    }

    #[test]
    fn ry_values() {
        assert_eq!(ry(0.0f64), [[1.0, 0.0], [0.0, 1.0]]);
        let m = ry(PI);
        assert!((m[0][0]).abs() < 1e-16 && (m[0][1] + 1.0).abs() < 1e-16 && (m[1][0] - 1.0).abs() < 1e-16);
        let m = ry(PI / 2.0);
        let h = 2f64.sqrt() / 2.0;
        assert!((m[0][0] - h).abs() < 1e-15 && (m[0][1] + h).abs() < 1e-15);
    }

    #[test]
    fn ry_is_one_parameter_subgroup() {
        for (a, b) in [(0.3f64, -1.2f64), (2.0, 2.5), (-3.0, 0.1)] {
            let (ma, mb, mab) = (ry(a), ry(b), ry(a + b));
            for i in 0..2 {
                for j in 0..2 {
                    let prod = ma[i][0] * mb[0][j] + ma[i][1] * mb[1][j];
                    assert!((prod - mab[i][j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn cz_is_diag_with_single_flip() {
        let m = CzGate { control: 0, target: 1 }.matrix::<f64>();
        assert_eq!(m[3][3], -1.0);
        assert_eq!((0..4).map(|i| m[i][i]).sum::<f64>(), 2.0);
    }

    #[test]
    fn param_counts_match_layout_enumeration() {
        assert_eq!(pauli_param_count(1, 0), 1);
        assert_eq!(pauli_param_count(3, 1), 7);
        assert_eq!(pauli_param_count(9, 1), 25);
        for q in 1..=12 {
            for l in 0..=4 {
                let n_ry = brickwork_layout(q, l)
                    .iter()
                    .filter(|g| matches!(g, GateSlot::Ry { .. }))
                    .count();
                assert_eq!(n_ry, pauli_param_count(q, l));
                assert_eq!(TwoDesignCircuit::<f64>::new(q, l).unwrap().num_params(), n_ry);
            }
        }
    }

    #[test]
    fn small_circuits_match_closed_forms() {
        let c = TwoDesignCircuit::with_angles(1, 0, vec![0.9]).unwrap();
        let m = ry(0.9);
        let q = c.materialize_dense().unwrap();
        assert_eq!(q.as_slice(), &[m[0][0], m[0][1], m[1][0], m[1][1]]);

        let (a, b) = (0.4, -1.3);
        let c = TwoDesignCircuit::with_angles(2, 0, vec![a, b]).unwrap();
        let ma = Mat::from_fn(2, 2, |i, j| ry(a)[i][j]);
        let mb = Mat::from_fn(2, 2, |i, j| ry(b)[i][j]);
        assert!(c.materialize_dense().unwrap().sub(&kron(&ma, &mb)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn materialize_matches_gate_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (q, l) in [(3, 1), (4, 2), (5, 1)] {
            let c = TwoDesignCircuit::<f64>::random(q, l, &mut rng).unwrap();
            let diff = c.materialize_dense().unwrap().sub(&dense_oracle(&c)).unwrap().max_abs();
            assert!(diff < 1e-13, "q={q} L={l}: {diff}");
        }
    }

    #[test]
    fn zero_angle_circuit_is_cz_product() {
        let c = TwoDesignCircuit::<f64>::new(4, 2).unwrap();
        let q = c.materialize_dense().unwrap();
        assert_eq!(q, dense_oracle(&c));
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    assert_eq!(q[(i, j)], 0.0);
                } else {
                    assert_eq!(q[(i, i)].abs(), 1.0);
                }
            }
        }
        let id = TwoDesignCircuit::<f64>::new(5, 0).unwrap();
        let x = Mat::column(&(0..32).map(|v| v as f64).collect::<Vec<_>>());
        assert_eq!(id.apply(&x).unwrap(), x);
    }

    #[test]
    fn dense_guard_and_length_check() {
        let c = TwoDesignCircuit::<f64>::new(13, 1).unwrap();
        assert!(matches!(c.materialize_dense(), Err(Error::InvalidConfig(_))));
        let c = TwoDesignCircuit::<f64>::new(3, 1).unwrap();
        assert!(c.apply(&Mat::zeros(7, 1)).is_err());
    }

    #[test]
    fn transpose_undoes_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = TwoDesignCircuit::<f64>::random(6, 2, &mut rng).unwrap();
        let x = Mat::from_fn(64, 3, |i, j| ((i * 3 + j) as f64).cos());
        let back = c.apply_transpose(&c.apply(&x).unwrap()).unwrap();
        assert!(back.sub(&x).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn single_qubit_vjp_matches_analytic_derivative() {
        let theta = 0.7;
        let c = TwoDesignCircuit::with_angles(1, 0, vec![theta]).unwrap();
        let x = Mat::column(&[0.3, -1.1]);
        let u = Mat::column(&[0.5, 2.0]);
        let (g, dx) = c.apply_vjp(&x, &u).unwrap();
        let (s, co) = (theta / 2.0f64).sin_cos();
        let d = [[-s / 2.0, -co / 2.0], [co / 2.0, -s / 2.0]];
        let dy = [d[0][0] * 0.3 + d[0][1] * -1.1, d[1][0] * 0.3 + d[1][1] * -1.1];
        assert!((g[0] - (0.5 * dy[0] + 2.0 * dy[1])).abs() < 1e-15);
        let m = ry(theta);
        assert!((dx[(0, 0)] - (m[0][0] * 0.5 + m[1][0] * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = TwoDesignCircuit::<f64>::random(3, 1, &mut rng).unwrap();
        let (g, dx) = c.apply_vjp(&Mat::from_fn(8, 2, |i, _| i as f64), &Mat::zeros(8, 2)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert_eq!(dx.max_abs(), 0.0);
    }

    #[test]
    fn json_roundtrip_and_layout_tag() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = TwoDesignCircuit::<f64>::random(4, 2, &mut rng).unwrap();
        let back = TwoDesignCircuit::<f64>::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let bad = c.to_json().unwrap().replace(LAYOUT_TAG, "other");
        assert!(TwoDesignCircuit::<f64>::from_json(&bad).is_err());
    }
}
