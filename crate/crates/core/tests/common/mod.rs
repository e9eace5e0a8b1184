//! Dense reference implementations written against plain nested vectors, kept
//! independent of the library's matrix code.

#![allow(dead_code)]

use qpeft_core::pauli::GateSlot;
use qpeft_core::Mat;

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

pub fn eye(n: usize) -> Dense {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn from_mat(m: &Mat<f64>) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn mul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = zeros(n, m);
    for i in 0..n {
        for p in 0..k {
            let v = a[i][p];
            if v != 0.0 {
                for j in 0..m {
                    c[i][j] += v * b[p][j];
                }
            }
        }
    }
    c
}

pub fn matvec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn add(a: &Dense, b: &Dense, cb: f64) -> Dense {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + cb * y).collect())
        .collect()
}

pub fn transpose(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn kron(a: &Dense, b: &Dense) -> Dense {
    let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let d: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
    norm(&d) / norm(want).max(1e-300)
}

/// `A = B − Bᵀ` with `B` strictly lower, column `k` of `B` taken from `entries[:, k]`.
pub fn skew(entries: &Mat<f64>) -> Dense {
    let n = entries.rows();
    let mut a = zeros(n, n);
    for k in 0..entries.cols() {
        for i in k + 1..n {
            a[i][k] += entries[(i, k)];
            a[k][i] -= entries[(i, k)];
        }
    }
    a
}

pub fn inf_norm(a: &Dense) -> f64 {
    a.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `Σ_{p=0}^{P} c_p A^p` by repeated multiplication.
pub fn series(a: &Dense, coeffs: &[f64]) -> Dense {
    let n = a.len();
    let mut out = zeros(n, n);
    let mut pow = eye(n);
    for (p, &c) in coeffs.iter().enumerate() {
        if p > 0 {
            pow = mul(&pow, a);
        }
        out = add(&out, &pow, c);
    }
    out
}

pub fn taylor(a: &Dense, order: usize) -> Dense {
    let mut c = vec![1.0];
    for p in 1..=order {
        c.push(c[p - 1] / p as f64);
    }
    series(a, &c)
}

pub fn neumann(a: &Dense, order: usize) -> Dense {
    mul(&add(&eye(a.len()), a, 1.0), &series(a, &vec![1.0; order + 1]))
}

/// Scaling and squaring with a 30-term series.
pub fn expm(a: &Dense) -> Dense {
    let mut s = 0;
    while inf_norm(a) / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let scaled: Dense = a.iter().map(|r| r.iter().map(|v| v / 2f64.powi(s)).collect()).collect();
    let mut q = taylor(&scaled, 30);
    for _ in 0..s {
        q = mul(&q, &q);
    }
    q
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a.iter().zip(eye(n)).map(|(r, e)| r.iter().cloned().chain(e).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        for v in &mut m[c] {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for j in 0..2 * n {
                        m[r][j] -= f * m[c][j];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `(I + A)(I − A)⁻¹`.
pub fn cayley(a: &Dense) -> Dense {
    let n = a.len();
    mul(&add(&eye(n), a, 1.0), &inverse(&add(&eye(n), a, -1.0)))
}

/// `H_0 H_1 ⋯ H_{K−1}`, `H_k = I − 2vvᵀ/‖v‖²` with `v` the lower part (diagonal included) of column `k`.
pub fn householder(entries: &Mat<f64>) -> Dense {
    let n = entries.rows();
    let mut q = eye(n);
    for k in 0..entries.cols() {
        let v: Vec<f64> = (0..n).map(|i| if i >= k { entries[(i, k)] } else { 0.0 }).collect();
        let nn: f64 = v.iter().map(|x| x * x).sum();
        if nn == 0.0 {
            continue;
        }
        let mut h = eye(n);
        for i in 0..n {
            for j in 0..n {
                h[i][j] -= 2.0 * v[i] * v[j] / nn;
            }
        }
        q = mul(&q, &h);
    }
    q
}

/// 2×2 rotation by `θ/2`.
pub fn ry(theta: f64) -> Dense {
    let (s, c) = (theta / 2.0).sin_cos();
    vec![vec![c, -s], vec![s, c]]
}

/// Product over columns `k` and rows `i > k` of an adjacent-pair rotation on `(i−k−1, i−k)`.
pub fn givens(entries: &Mat<f64>) -> Dense {
    let n = entries.rows();
    let mut q = eye(n);
    for k in 0..entries.cols() {
        for i in k + 1..n {
            let p = i - k - 1;
            let mut g = eye(n);
            let r = ry(entries[(i, k)]);
            g[p][p] = r[0][0];
            g[p][p + 1] = r[0][1];
            g[p + 1][p] = r[1][0];
            g[p + 1][p + 1] = r[1][1];
            q = mul(&q, &g);
        }
    }
    q
}

/// Full `2^q × 2^q` matrix of one layout slot; qubit 0 is the most significant factor.
pub fn gate_matrix(slot: &GateSlot, qubits: usize, angles: &[f64]) -> Dense {
    let mut out = vec![vec![1.0]];
    match slot {
        GateSlot::Ry { qubit, param } => {
            for q in 0..qubits {
                let f = if q == *qubit { ry(angles[*param]) } else { eye(2) };
                out = kron(&out, &f);
            }
        }
        GateSlot::Cz(cz) => {
            let n = 1usize << qubits;
            out = eye(n);
            let bit = |q: usize| 1usize << (qubits - 1 - q);
            let mask = bit(cz.control) | bit(cz.target);
            for (i, row) in out.iter_mut().enumerate() {
                if i & mask == mask {
                    row[i] = -1.0;
                }
            }
        }
    }
    out
}

/// Applies the layout gate by gate to `x`, each gate as an explicit Kronecker matrix.
pub fn circuit_apply(layout: &[GateSlot], qubits: usize, angles: &[f64], x: &[f64]) -> Vec<f64> {
    layout
        .iter()
        .fold(x.to_vec(), |v, g| matvec(&gate_matrix(g, qubits, angles), &v))
}

pub fn circuit_dense(layout: &[GateSlot], qubits: usize, angles: &[f64]) -> Dense {
    layout
        .iter()
        .fold(eye(1 << qubits), |q, g| mul(&gate_matrix(g, qubits, angles), &q))
}

/// `diag(U₁, U₂)·M·diag(V₁, V₂)` with the cosine-sine middle factor.
pub fn csd_assemble(u1: &Dense, u2: &Dense, v1: &Dense, v2: &Dense, angles: &[f64]) -> Dense {
    let (n1, n2) = (u1.len(), u2.len());
    let n = n1 + n2;
    let mut m = zeros(n, n);
    for (i, &t) in angles.iter().enumerate() {
        let (s, c) = t.sin_cos();
        m[i][i] = c;
        m[i][n2 + i] = -s;
        m[n1 + i][i] = s;
        m[n1 + i][n2 + i] = c;
    }
    for r in 0..n1 - n2 {
        m[n2 + r][2 * n2 + r] = 1.0;
    }
    let block = |a: &Dense, b: &Dense| {
        let (na, nb) = (a.len(), b.len());
        let mut d = zeros(na + nb, na + nb);
        for i in 0..na {
            d[i][..na].copy_from_slice(&a[i]);
        }
        for i in 0..nb {
            d[na + i][na..].copy_from_slice(&b[i]);
        }
        d
    };
    mul(&mul(&block(u1, u2), &m), &block(v1, v2))
}

pub fn orthogonality_error(q: &Dense) -> f64 {
    max_abs_diff(&mul(q, &transpose(q)), &eye(q.len()))
}
pub mod suites;
