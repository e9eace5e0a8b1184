//! Maps from Lie parameters to orthogonal and Stiefel matrices.
//!
//! Two routes exist for every map. The dense route works on a materialized
//! [`SkewMatrix`] and is used for small sizes and as a reference. The contracted
//! route ([`LieMap`]) never forms `A`: with `B = B_K E_Kᵀ` strictly lower triangular,
//! `A·X = B_K·X[..K] − E_K·(B_Kᵀ·X)` costs `O(N'·K)` per vector, and the Cayley
//! inverse reduces to a `2K × 2K` solve through the Woodbury identity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::lie::{LieParams, SkewMatrix, Support};
use crate::linalg::{Lu, Mat, OpCounter};
use crate::ortho::Orthogonal;
use crate::scalar::Scalar;

/// Series order used when accuracy matters.
pub const ACCURATE_ORDER: usize = 18;
/// Series order used in speed-oriented configurations.
pub const FAST_ORDER: usize = 3;

/// Taylor order of the scaled exponential kernel; with `‖A/2^s‖₁ ≤ 1/2` the
/// truncation remainder is below `1e-22`.
const EXP_KERNEL_ORDER: usize = 18;
const EXP_SCALED_NORM: f64 = 0.5;
const EXP_MAX_SQUARINGS: i32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MapKind {
    Exponential,
    Taylor { order: usize },
    Cayley,
    Neumann { order: usize },
    Householder,
    Givens,
}

impl MapKind {
    pub fn support(self) -> Support {
        match self {
            MapKind::Householder => Support::Lower,
            _ => Support::StrictLower,
        }
    }

    /// Whether the map is orthogonal in exact arithmetic.
    pub fn is_exact(self) -> bool {
        !matches!(self, MapKind::Taylor { .. } | MapKind::Neumann { .. })
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::Exponential => write!(f, "exp"),
            MapKind::Taylor { order } => write!(f, "taylor:{order}"),
            MapKind::Cayley => write!(f, "cayley"),
            MapKind::Neumann { order } => write!(f, "neumann:{order}"),
            MapKind::Householder => write!(f, "householder"),
            MapKind::Givens => write!(f, "givens"),
        }
    }
}

impl FromStr for MapKind {
    type Err = Error;

    /// Accepts `exp`, `taylor[:P]`, `cayley`, `neumann[:P]`, `householder`, `givens`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, order) = match s.split_once(':') {
            Some((n, o)) => {
                let o = o
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad series order in {s:?}")))?;
                (n, Some(o))
            }
            None => (s, None),
        };
        let order = order.unwrap_or(ACCURATE_ORDER);
        match name.to_ascii_lowercase().as_str() {
            "exp" | "exponential" => Ok(MapKind::Exponential),
            "taylor" => Ok(MapKind::Taylor { order }),
            "cayley" => Ok(MapKind::Cayley),
            "neumann" => Ok(MapKind::Neumann { order }),
            "householder" => Ok(MapKind::Householder),
            "givens" => Ok(MapKind::Givens),
            _ => Err(Error::InvalidConfig(format!("unknown map kind {s:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Dense route

fn taylor_coeffs<T: Scalar>(order: usize, scale: T) -> Vec<T> {
    let mut c = Vec::with_capacity(order + 1);
    let mut v = T::one();
    c.push(v);
    for p in 1..=order {
        v = v * scale / T::of(p as f64);
        c.push(v);
    }
    c
}

/// `(I + A)·Σ_{p=0}^{P} A^p` expanded into monomial coefficients.
fn neumann_coeffs<T: Scalar>(order: usize) -> Vec<T> {
    (0..=order + 1)
        .map(|p| T::of((usize::from(p <= order) + usize::from(p >= 1)) as f64))
        .collect()
}

/// Horner evaluation of `Σ c_p A^p` on a dense matrix.
fn dense_poly<T: Scalar>(a: &Mat<T>, coeffs: &[T]) -> Mat<T> {
    let n = a.rows();
    let last = *coeffs.last().expect("non-empty coefficients");
    let mut acc = Mat::identity(n).scaled(last);
    for &c in coeffs.iter().rev().skip(1) {
        acc = a.matmul(&acc).expect("square");
        for i in 0..n {
            acc[(i, i)] += c;
        }
    }
    acc
}

/// `exp(A)` by scaling and squaring with an order-18 Taylor kernel.
pub fn exp_map<T: Scalar>(a: &SkewMatrix<T>) -> Result<Mat<T>> {
    let m = a.as_mat();
    let s = squarings(m.norm_one())?;
    let scale = T::of(0.5f64.powi(s));
    let mut q = dense_poly(m, &taylor_coeffs(EXP_KERNEL_ORDER, scale));
    for _ in 0..s {
        q = q.matmul(&q)?;
    }
    Ok(q)
}

fn squarings<T: Scalar>(norm: T) -> Result<i32> {
    let norm = norm.as_f64();
    if !norm.is_finite() {
        return Err(Error::Numeric("non-finite generator norm".into()));
    }
    let mut s = 0;
    while norm * 0.5f64.powi(s) > EXP_SCALED_NORM {
        s += 1;
        if s > EXP_MAX_SQUARINGS {
            return Err(Error::Numeric(format!("generator norm {norm:e} too large for exp")));
        }
    }
    Ok(s)
}

/// Truncated Taylor series `Σ_{p=0}^{P} A^p / p!`.
pub fn taylor_map<T: Scalar>(a: &SkewMatrix<T>, order: usize) -> Mat<T> {
    dense_poly(a.as_mat(), &taylor_coeffs(order, T::one()))
}

/// Cayley transform `(I + A)(I − A)⁻¹`, solved as `(I − A)·Q = I + A`.
pub fn cayley_map<T: Scalar>(a: &SkewMatrix<T>) -> Result<Mat<T>> {
    let n = a.size();
    let m = a.as_mat();
    let mut plus = m.clone();
    let mut minus = m.scaled(-T::one());
    for i in 0..n {
        plus[(i, i)] += T::one();
        minus[(i, i)] += T::one();
    }
    minus.solve(&plus)
}

/// Neumann approximation `(I + A)·Σ_{p=0}^{P} A^p` of the Cayley transform.
pub fn neumann_map<T: Scalar>(a: &SkewMatrix<T>, order: usize) -> Mat<T> {
    dense_poly(a.as_mat(), &neumann_coeffs(order))
}

/// Product of Householder reflections built from the columns of `B_K`.
pub fn householder_map<T: Scalar>(params: &LieParams<T>) -> Result<Mat<T>> {
    LieMap::new(params.clone(), MapKind::Householder)?.materialize()
}

/// Product of adjacent-pair Givens rotations indexed by the strictly lower entries of `B_K`.
pub fn givens_map<T: Scalar>(params: &LieParams<T>) -> Result<Mat<T>> {
    LieMap::new(params.clone(), MapKind::Givens)?.materialize()
}

/// `N × K` matrix with orthonormal columns (up to the producing map's accuracy).
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelMatrix<T>(Mat<T>);

impl<T: Scalar> StiefelMatrix<T> {
    pub fn as_mat(&self) -> &Mat<T> {
        &self.0
    }

    pub fn into_mat(self) -> Mat<T> {
        self.0
    }

    /// `K × N` row-orthonormal form (`Q_{:K,:}` convention).
    pub fn rows_form(&self) -> Mat<T> {
        self.0.transpose()
    }
}

/// Keeps the first `k` columns of a square orthogonal matrix.
pub fn stiefel_truncate<T: Scalar>(q: &Mat<T>, k: usize) -> Result<StiefelMatrix<T>> {
    if q.rows() != q.cols() {
        return Err(shape_err("square matrix", format!("{}×{}", q.rows(), q.cols())));
    }
    if k == 0 || k > q.cols() {
        return Err(Error::InvalidConfig(format!("truncation rank {k} must lie in 1..={}", q.cols())));
    }
    Ok(StiefelMatrix(q.first_cols(k)))
}

/// `max |Q Qᵀ − I|` for square `Q`, `max |QᵀQ − I|` for tall (Stiefel) `Q`.
pub fn unitarity_error<T: Scalar>(q: &Mat<T>) -> T {
    if q.rows() == q.cols() {
        let mut g = q.matmul(&q.transpose()).expect("square");
        for i in 0..q.rows() {
            g[(i, i)] -= T::one();
        }
        g.max_abs()
    } else {
        q.gram_deviation().max_abs()
    }
}

// ---------------------------------------------------------------------------
// Contracted route

/// Low-rank action of `A = B − Bᵀ` where `B = B_L·E_Kᵀ`.
struct LowRankSkew<'a, T> {
    bl: &'a Mat<T>,
    blt: Mat<T>,
}

impl<'a, T: Scalar> LowRankSkew<'a, T> {
    fn new(bl: &'a Mat<T>) -> Self {
        Self { bl, blt: bl.transpose() }
    }

    fn k(&self) -> usize {
        self.bl.cols()
    }

    /// `A·X`.
    fn apply(&self, x: &Mat<T>, ops: &mut OpCounter) -> Mat<T> {
        let k = self.k();
        let head = x.row_block(0, k);
        let mut y = self.bl.matmul_counted(&head, ops).expect("shapes");
        let t = self.blt.matmul_counted(x, ops).expect("shapes");
        for i in 0..k {
            for (yv, &tv) in y.row_mut(i).iter_mut().zip(t.row(i)) {
                *yv -= tv;
            }
        }
        ops.add(k * x.cols());
        y
    }

    /// Accumulates `∂L/∂B_L` for a term `∂L/∂A += G·Zᵀ`.
    fn accumulate(&self, g: &Mat<T>, z: &Mat<T>, dbl: &mut Mat<T>) {
        let k = self.k();
        let zt_head = z.row_block(0, k).transpose();
        let gt_head = g.row_block(0, k).transpose();
        let a = g.matmul(&zt_head).expect("shapes");
        let b = z.matmul(&gt_head).expect("shapes");
        dbl.axpy(T::one(), &a).expect("shapes");
        dbl.axpy(-T::one(), &b).expect("shapes");
    }
}

/// Saved activations of a Horner polynomial application.
struct PolyTrace<T> {
    /// `z_1 … z_P` where `z_P = c_P X` and `z_p = c_p X + A z_{p+1}`.
    z: Vec<Mat<T>>,
}

fn poly_forward<T: Scalar>(
    op: &LowRankSkew<'_, T>,
    coeffs: &[T],
    x: &Mat<T>,
    save: bool,
    ops: &mut OpCounter,
) -> (Mat<T>, Option<PolyTrace<T>>) {
    let order = coeffs.len() - 1;
    let mut z = x.scaled(coeffs[order]);
    ops.add(x.as_slice().len());
    let mut saved = Vec::new();
    for p in (0..order).rev() {
        let az = op.apply(&z, ops);
        if save {
            saved.push(z);
        }
        let mut next = az;
        next.axpy(coeffs[p], x).expect("shapes");
        ops.add(2 * x.as_slice().len());
        z = next;
    }
    saved.reverse();
    (z, save.then_some(PolyTrace { z: saved }))
}

/// Backward of [`poly_forward`]; returns `∂L/∂X` and accumulates `∂L/∂B_L`.
fn poly_backward<T: Scalar>(
    op: &LowRankSkew<'_, T>,
    coeffs: &[T],
    trace: &PolyTrace<T>,
    upstream: &Mat<T>,
    dbl: &mut Mat<T>,
) -> Mat<T> {
    let mut ops = OpCounter::new();
    let order = coeffs.len() - 1;
    let mut g = upstream.clone();
    let mut dx = g.scaled(coeffs[0]);
    for p in 0..order {
        op.accumulate(&g, &trace.z[p], dbl);
        g = op.apply(&g, &mut ops).scaled(-T::one());
        dx.axpy(coeffs[p + 1], &g).expect("shapes");
    }
    dx
}

/// Woodbury form of `(I ∓ A)⁻¹` with `A = W·Zᵀ`, `W = [B_L, −E_K]`, `Z = [E_K, B_L]`.
struct CayleySolver<T> {
    w: Mat<T>,
    zt: Mat<T>,
    inv_minus: Lu<T>,
    inv_plus: Lu<T>,
}

impl<T: Scalar> CayleySolver<T> {
    fn new(bl: &Mat<T>) -> Result<Self> {
        let (n, k) = bl.shape();
        let neg_e = Mat::eye(n, k).scaled(-T::one());
        let w = Mat::hstack(bl, &neg_e)?;
        let z = Mat::hstack(&Mat::eye(n, k), bl)?;
        let zt = z.transpose();
        let ztw = zt.matmul(&w)?;
        let r = 2 * k;
        let mut minus = ztw.scaled(-T::one());
        let mut plus = ztw;
        for i in 0..r {
            minus[(i, i)] += T::one();
            plus[(i, i)] += T::one();
        }
        Ok(Self {
            w,
            zt,
            inv_minus: Lu::factor(&minus)?,
            inv_plus: Lu::factor(&plus)?,
        })
    }

    /// `(I − A)⁻¹·X`.
    fn solve_minus(&self, x: &Mat<T>, ops: &mut OpCounter) -> Result<Mat<T>> {
        let t = self.zt.matmul_counted(x, ops)?;
        let s = self.inv_minus.solve(&t)?;
        let mut out = x.clone();
        out.axpy(T::one(), &self.w.matmul_counted(&s, ops)?)?;
        Ok(out)
    }

    /// `(I + A)⁻¹·X`.
    fn solve_plus(&self, x: &Mat<T>, ops: &mut OpCounter) -> Result<Mat<T>> {
        let t = self.zt.matmul_counted(x, ops)?;
        let s = self.inv_plus.solve(&t)?;
        let mut out = x.clone();
        out.axpy(-T::one(), &self.w.matmul_counted(&s, ops)?)?;
        Ok(out)
    }
}

/// A [`LieParams`] store bound to a map kind; applies the orthogonal matrix to
/// vectors without materializing it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieMap<T> {
    params: LieParams<T>,
    kind: MapKind,
}

impl<T: Scalar> LieMap<T> {
    pub fn new(params: LieParams<T>, kind: MapKind) -> Result<Self> {
        if kind.support() == Support::StrictLower {
            params.check_triangle_capacity()?;
        }
        Ok(Self { params, kind })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn lie_params(&self) -> &LieParams<T> {
        &self.params
    }

    pub fn lie_params_mut(&mut self) -> &mut LieParams<T> {
        &mut self.params
    }

    fn bl(&self) -> Mat<T> {
        self.params.masked_entries(self.kind.support())
    }

    fn check_input(&self, x: &Mat<T>) -> Result<()> {
        if x.rows() != self.params.node_size() {
            return Err(shape_err(format!("{} rows", self.params.node_size()), x.rows()));
        }
        Ok(())
    }

    fn exp_plan(&self, bl: &Mat<T>) -> Result<(i32, Vec<T>)> {
        // ‖A‖₁ with A = B − Bᵀ: column c collects B[:, c] and −B[c, :].
        let n = bl.rows();
        let k = bl.cols();
        let mut norm = T::zero();
        for c in 0..n {
            let mut s: T = (0..k).map(|j| bl[(c, j)].abs()).sum();
            if c < k {
                s += (0..n).map(|i| bl[(i, c)].abs()).sum::<T>();
            }
            norm = norm.max(s);
        }
        let s = squarings(norm)?;
        Ok((s, taylor_coeffs(EXP_KERNEL_ORDER, T::of(0.5f64.powi(s)))))
    }

    /// `Q·X` when `transpose` is false, `Qᵀ·X` otherwise.
    fn run(&self, x: &Mat<T>, transpose: bool, ops: &mut OpCounter) -> Result<Mat<T>> {
        self.check_input(x)?;
        let bl = self.bl();
        match self.kind {
            MapKind::Taylor { .. } | MapKind::Neumann { .. } | MapKind::Exponential => {
                // Qᵀ(A) = Q(−A) for every polynomial in a skew generator.
                let bl = if transpose { bl.scaled(-T::one()) } else { bl };
                let op = LowRankSkew::new(&bl);
                match self.kind {
                    MapKind::Taylor { order } => Ok(poly_forward(&op, &taylor_coeffs(order, T::one()), x, false, ops).0),
                    MapKind::Neumann { order } => Ok(poly_forward(&op, &neumann_coeffs(order), x, false, ops).0),
                    _ => {
                        let (s, coeffs) = self.exp_plan(&bl)?;
                        let mut y = x.clone();
                        for _ in 0..(1usize << s) {
                            y = poly_forward(&op, &coeffs, &y, false, ops).0;
                        }
                        Ok(y)
                    }
                }
            }
            MapKind::Cayley => {
                let solver = CayleySolver::new(&bl)?;
                let op = LowRankSkew::new(&bl);
                if transpose {
                    let v = solver.solve_plus(x, ops)?;
                    let mut y = v.clone();
                    y.axpy(-T::one(), &op.apply(&v, ops))?;
                    Ok(y)
                } else {
                    let u = solver.solve_minus(x, ops)?;
                    let mut y = u.clone();
                    y.axpy(T::one(), &op.apply(&u, ops))?;
                    Ok(y)
                }
            }
            MapKind::Householder => {
                let refl = Reflectors::new(&bl);
                let mut y = x.clone();
                let order: Box<dyn Iterator<Item = usize>> = if transpose {
                    Box::new(0..refl.len())
                } else {
                    Box::new((0..refl.len()).rev())
                };
                for k in order {
                    refl.reflect(k, &mut y, ops);
                }
                Ok(y)
            }
            MapKind::Givens => {
                let mut y = x.clone();
                let seq = givens_sequence(&bl);
                if transpose {
                    for &(pair, theta) in seq.iter() {
                        rotate_pair(&mut y, pair, -theta, ops);
                    }
                } else {
                    for &(pair, theta) in seq.iter().rev() {
                        rotate_pair(&mut y, pair, theta, ops);
                    }
                }
                Ok(y)
            }
        }
    }

    fn vjp_full(&self, x: &Mat<T>, upstream: &Mat<T>) -> Result<(Mat<T>, Mat<T>)> {
        self.check_input(x)?;
        upstream.check_same_shape(x)?;
        let bl = self.bl();
        let mut dbl = Mat::zeros(bl.rows(), bl.cols());
        let mut ops = OpCounter::new();
        let dx = match self.kind {
            MapKind::Taylor { .. } | MapKind::Neumann { .. } => {
                let coeffs = match self.kind {
                    MapKind::Taylor { order } => taylor_coeffs(order, T::one()),
                    MapKind::Neumann { order } => neumann_coeffs(order),
                    _ => unreachable!(),
                };
                let op = LowRankSkew::new(&bl);
                let (_, trace) = poly_forward(&op, &coeffs, x, true, &mut ops);
                poly_backward(&op, &coeffs, &trace.expect("saved"), upstream, &mut dbl)
            }
            MapKind::Exponential => {
                let op = LowRankSkew::new(&bl);
                let (s, coeffs) = self.exp_plan(&bl)?;
                let mut traces = Vec::with_capacity(1 << s);
                let mut y = x.clone();
                for _ in 0..(1usize << s) {
                    let (next, tr) = poly_forward(&op, &coeffs, &y, true, &mut ops);
                    traces.push(tr.expect("saved"));
                    y = next;
                }
                let mut g = upstream.clone();
                for tr in traces.iter().rev() {
                    g = poly_backward(&op, &coeffs, tr, &g, &mut dbl);
                }
                g
            }
            MapKind::Cayley => {
                let solver = CayleySolver::new(&bl)?;
                let op = LowRankSkew::new(&bl);
                let u = solver.solve_minus(x, &mut ops)?;
                // x̄ = Qᵀ ȳ = (I − A)(I + A)⁻¹ ȳ
                let v = solver.solve_plus(upstream, &mut ops)?;
                let mut dx = v.clone();
                dx.axpy(-T::one(), &op.apply(&v, &mut ops))?;
                let mut g = upstream.clone();
                g.axpy(T::one(), &dx)?;
                op.accumulate(&g, &u, &mut dbl);
                dx
            }
            MapKind::Householder => {
                let refl = Reflectors::new(&bl);
                let mut y = self.run(x, false, &mut ops)?;
                let mut g = upstream.clone();
                // Q = H_0 ⋯ H_{K-1}; H_0 was applied last.
                for k in 0..refl.len() {
                    refl.reflect(k, &mut y, &mut ops);
                    refl.reflect_grad(k, &y, &g, &mut dbl);
                    refl.reflect(k, &mut g, &mut ops);
                }
                g
            }
            MapKind::Givens => {
                let seq = givens_sequence(&bl);
                let mut y = self.run(x, false, &mut ops)?;
                let mut g = upstream.clone();
                let mut grads = vec![T::zero(); seq.len()];
                for (idx, &(pair, theta)) in seq.iter().enumerate() {
                    grads[idx] = rotation_angle_grad(&y, &g, pair);
                    rotate_pair(&mut y, pair, -theta, &mut ops);
                    rotate_pair(&mut g, pair, -theta, &mut ops);
                }
                let k = bl.cols();
                let n = bl.rows();
                let mut idx = 0;
                for col in 0..k {
                    for row in col + 1..n {
                        dbl[(row, col)] = grads[idx];
                        idx += 1;
                    }
                }
                g
            }
        };
        Ok((self.restrict(dbl), dx))
    }

    fn restrict(&self, mut dbl: Mat<T>) -> Mat<T> {
        let support = self.kind.support();
        for k in 0..dbl.cols() {
            for i in 0..support.first_row(k).min(dbl.rows()) {
                dbl[(i, k)] = T::zero();
            }
        }
        dbl
    }

    /// Gradient with respect to the full `N' × K` matrix `B_K` (frozen columns included).
    pub fn vjp_entries(&self, x: &Mat<T>, upstream: &Mat<T>) -> Result<(Mat<T>, Mat<T>)> {
        self.vjp_full(x, upstream)
    }
}

impl<T: Scalar> Orthogonal<T> for LieMap<T> {
    fn dim(&self) -> usize {
        self.params.node_size()
    }

    fn num_params(&self) -> usize {
        self.params.trainable_count(self.kind.support())
    }

    fn params(&self) -> Vec<T> {
        self.params.trainable_values(self.kind.support())
    }

    fn set_params(&mut self, values: &[T]) -> Result<()> {
        self.params.set_trainable_values(self.kind.support(), values)
    }

    fn apply_counted(&self, x: &Mat<T>, ops: &mut OpCounter) -> Result<Mat<T>> {
        self.run(x, false, ops)
    }

    fn apply_transpose(&self, x: &Mat<T>) -> Result<Mat<T>> {
        self.run(x, true, &mut OpCounter::new())
    }

    fn apply_vjp(&self, x: &Mat<T>, upstream: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
        let (dbl, dx) = self.vjp_full(x, upstream)?;
        Ok((self.params.gather_gradient(self.kind.support(), &dbl)?, dx))
    }
}

/// Applies `params` under `kind` to `x` without forming the `N' × N'` matrix.
pub fn contracted_apply<T: Scalar>(params: &LieParams<T>, kind: MapKind, x: &[T]) -> Result<Vec<T>> {
    let map = LieMap::new(params.clone(), kind)?;
    Ok(map.apply(&Mat::column(x))?.into_vec())
}

/// Normalized Householder vectors; zero columns are skipped.
struct Reflectors<T> {
    /// `(first row, unit vector restricted to rows first..N, original norm)`
    vecs: Vec<Option<(usize, Vec<T>, T)>>,
}

impl<T: Scalar> Reflectors<T> {
    fn new(bl: &Mat<T>) -> Self {
        let (n, k) = bl.shape();
        let vecs = (0..k)
            .map(|col| {
                let v: Vec<T> = (col..n).map(|i| bl[(i, col)]).collect();
                let norm = v.iter().map(|&a| a * a).sum::<T>().sqrt();
                (norm > T::zero()).then(|| (col, v.iter().map(|&a| a / norm).collect(), norm))
            })
            .collect();
        Self { vecs }
    }

    fn len(&self) -> usize {
        self.vecs.len()
    }

    /// `X ← (I − 2 n nᵀ) X`.
    fn reflect(&self, k: usize, x: &mut Mat<T>, ops: &mut OpCounter) {
        let Some((start, ref nv, _)) = self.vecs[k] else { return };
        let b = x.cols();
        let mut dots = vec![T::zero(); b];
        for (off, &ni) in nv.iter().enumerate() {
            for (d, &xv) in dots.iter_mut().zip(x.row(start + off)) {
                *d += ni * xv;
            }
        }
        let two = T::of(2.0);
        for (off, &ni) in nv.iter().enumerate() {
            let f = two * ni;
            for (xv, &d) in x.row_mut(start + off).iter_mut().zip(&dots) {
                *xv -= f * d;
            }
        }
        ops.add(4 * nv.len() * b);
    }

    /// Gradient of `⟨G, H_k X⟩` with respect to the raw column, given the reflection input `X`.
    fn reflect_grad(&self, k: usize, x: &Mat<T>, g: &Mat<T>, dbl: &mut Mat<T>) {
        let Some((start, ref nv, norm)) = self.vecs[k] else { return };
        let b = x.cols();
        let m = nv.len();
        let mut nx = vec![T::zero(); b];
        let mut ng = vec![T::zero(); b];
        for (off, &ni) in nv.iter().enumerate() {
            for j in 0..b {
                nx[j] += ni * x[(start + off, j)];
                ng[j] += ni * g[(start + off, j)];
            }
        }
        // ∂/∂n of −2 Σ_j (nᵀx_j)(nᵀg_j)
        let two = T::of(2.0);
        let dn: Vec<T> = (0..m)
            .map(|off| {
                let row = start + off;
                -two * (0..b).map(|j| nx[j] * g[(row, j)] + ng[j] * x[(row, j)]).sum::<T>()
            })
            .collect();
        let proj: T = nv.iter().zip(&dn).map(|(&a, &b)| a * b).sum();
        for off in 0..m {
            dbl[(start + off, k)] += (dn[off] - nv[off] * proj) / norm;
        }
    }
}

/// Rotations in application order reversed: the list is the left-to-right product
/// `Π_k Π_{n>k} G_{n-k}(B[n,k])`, so the last entry acts first.
fn givens_sequence<T: Scalar>(bl: &Mat<T>) -> Vec<(usize, T)> {
    let (n, k) = bl.shape();
    let mut seq = Vec::new();
    for col in 0..k {
        for row in col + 1..n {
            seq.push((row - col - 1, bl[(row, col)]));
        }
    }
    seq
}

/// `RY(θ)` on coordinates `(pair, pair + 1)` of every column.
fn rotate_pair<T: Scalar>(x: &mut Mat<T>, pair: usize, theta: T, ops: &mut OpCounter) {
    let half = theta * T::of(0.5);
    let (s, c) = half.sin_cos();
    let b = x.cols();
    let data = x.as_mut_slice();
    let (lo, hi) = data[pair * b..(pair + 2) * b].split_at_mut(b);
    for (a, bb) in lo.iter_mut().zip(hi.iter_mut()) {
        let (x0, x1) = (*a, *bb);
        *a = c * x0 - s * x1;
        *bb = s * x0 + c * x1;
    }
    ops.add(6 * b);
}

/// `∂/∂θ ⟨G, RY(θ) X⟩` expressed through the rotation output `Y`.
fn rotation_angle_grad<T: Scalar>(y: &Mat<T>, g: &Mat<T>, pair: usize) -> T {
    let half = T::of(0.5);
    (0..y.cols())
        .map(|j| half * (g[(pair + 1, j)] * y[(pair, j)] - g[(pair, j)] * y[(pair + 1, j)]))
        .sum()
}
