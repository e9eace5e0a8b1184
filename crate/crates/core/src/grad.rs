//! Minimal reverse-mode tape over matrices, plus finite-difference checking and plain descent.

use std::collections::BTreeMap;

use crate::diag::{rademacher_forward, rademacher_vjp, RademacherDiag};
use crate::error::{shape_err, Error, Result};
use crate::linalg::Mat;
use crate::ortho::{OrthoFactor, Orthogonal};
use crate::quant::{fake_quantize, QuantConfig};
use crate::scalar::Scalar;
use crate::store::ParamStore;

pub const FD_STEP: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

type Backward<T> = Box<dyn Fn(&Mat<T>) -> Result<Vec<Mat<T>>>>;

struct Node<T> {
    value: Mat<T>,
    parents: Vec<usize>,
    backward: Option<Backward<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// How straight-through ops evaluate their forward value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SteMode {
    /// Hard forward (rounding, signs) with the surrogate gradient.
    #[default]
    Hard,
    /// Forward through the surrogate itself, so the tape is differentiable end to end.
    Surrogate,
}

pub struct GradTape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, usize)>,
    mode: SteMode,
    consumed: bool,
}

impl<T: Scalar> Default for GradTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Gradients<T> {
    grads: BTreeMap<String, Mat<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&Mat<T>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat<T>)> {
        self.grads.iter()
    }

    /// Gradients of every parameter concatenated in name order.
    pub fn flatten(&self) -> Vec<T> {
        self.grads.values().flat_map(|g| g.as_slice().iter().copied()).collect()
    }
}

fn mat_of<T: Scalar>(values: &[T]) -> Mat<T> {
    Mat::column(values)
}

impl<T: Scalar> GradTape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            mode: SteMode::Hard,
            consumed: false,
        }
    }

    pub fn with_mode(mode: SteMode) -> Self {
        Self { mode, ..Self::new() }
    }

    fn push(&mut self, value: Mat<T>, parents: Vec<usize>, backward: Option<Backward<T>>) -> Var {
        self.nodes.push(Node { value, parents, backward });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Named leaf whose gradient is reported by [`GradTape::backward`].
    pub fn param(&mut self, name: &str, value: Mat<T>) -> Var {
        let v = self.push(value, Vec::new(), None);
        self.params.push((name.to_string(), v.0));
        v
    }

    /// Registers every tensor of a store as a parameter, in store order.
    pub fn params_from(&mut self, store: &ParamStore<T>) -> Vec<Var> {
        store.iter().map(|p| self.param(&p.name, p.value.clone())).collect()
    }

    pub fn constant(&mut self, value: Mat<T>) -> Var {
        self.push(value, Vec::new(), None)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        let out = av.matmul(&bv)?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g| Ok(vec![g.matmul(&bv.transpose())?, av.t_matmul(g)?]))),
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, vec![a.0], Some(Box::new(|g| Ok(vec![g.transpose()]))))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, vec![a.0, b.0], Some(Box::new(|g| Ok(vec![g.clone(), g.clone()])))))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|g| Ok(vec![g.clone(), g.scaled(-T::one())]))),
        ))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).scaled(c);
        self.push(out, vec![a.0], Some(Box::new(move |g| Ok(vec![g.scaled(c)]))))
    }

    /// `diag(d)·A` for a column vector `d` with one entry per row of `A`.
    pub fn scale_rows(&mut self, a: Var, d: Var) -> Result<Var> {
        let (av, dv) = (self.value(a).clone(), self.value(d).clone());
        if dv.shape() != (av.rows(), 1) {
            return Err(shape_err(format!("{}×1 diagonal", av.rows()), format!("{}×{}", dv.rows(), dv.cols())));
        }
        let out = Mat::from_fn(av.rows(), av.cols(), |i, j| dv[(i, 0)] * av[(i, j)]);
        Ok(self.push(
            out,
            vec![a.0, d.0],
            Some(Box::new(move |g| {
                let ga = Mat::from_fn(av.rows(), av.cols(), |i, j| dv[(i, 0)] * g[(i, j)]);
                let gd = Mat::from_fn(av.rows(), 1, |i, _| (0..av.cols()).map(|j| g[(i, j)] * av[(i, j)]).sum());
                Ok(vec![ga, gd])
            })),
        ))
    }

    /// `A·diag(d)` for a column vector `d` with one entry per column of `A`.
    pub fn scale_cols(&mut self, a: Var, d: Var) -> Result<Var> {
        let at = self.transpose(a);
        let scaled = self.scale_rows(at, d)?;
        Ok(self.transpose(scaled))
    }

    /// First `k` rows.
    pub fn take_rows(&mut self, a: Var, k: usize) -> Result<Var> {
        let av = self.value(a);
        if k > av.rows() {
            return Err(shape_err(format!("at most {} rows", av.rows()), k));
        }
        let rows = av.rows();
        let out = av.row_block(0, k);
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g| {
                let mut full = Mat::zeros(rows, g.cols());
                full.set_row_block(0, g);
                Ok(vec![full])
            })),
        ))
    }

    /// Zero-pads to `n` rows.
    pub fn pad_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let av = self.value(a);
        if n < av.rows() {
            return Err(shape_err(format!("at least {} rows", av.rows()), n));
        }
        let k = av.rows();
        let mut out = Mat::zeros(n, av.cols());
        out.set_row_block(0, av);
        Ok(self.push(out, vec![a.0], Some(Box::new(move |g| Ok(vec![g.row_block(0, k)])))))
    }

    /// `Σ aᵢⱼ²` as a `1 × 1` value.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let av = self.value(a).clone();
        let s: T = av.as_slice().iter().map(|v| *v * *v).sum();
        self.push(
            Mat::column(&[s]),
            vec![a.0],
            Some(Box::new(move |g| Ok(vec![av.scaled(T::of(2.0) * g[(0, 0)])]))),
        )
    }

    /// `Q(θ)·X` where `θ` is the column vector `params` and `factor` fixes the structure.
    pub fn ortho_apply(&mut self, factor: &OrthoFactor<T>, params: Var, x: Var) -> Result<Var> {
        self.ortho(factor, params, x, false)
    }

    /// `Q(θ)ᵀ·X`.
    pub fn ortho_apply_t(&mut self, factor: &OrthoFactor<T>, params: Var, x: Var) -> Result<Var> {
        self.ortho(factor, params, x, true)
    }

    fn ortho(&mut self, factor: &OrthoFactor<T>, params: Var, x: Var, transpose: bool) -> Result<Var> {
        let mut f = factor.clone();
        f.set_params(self.value(params).as_slice())?;
        let xv = self.value(x).clone();
        let out = if transpose { f.apply_transpose(&xv)? } else { f.apply(&xv)? };
        Ok(self.push(
            out,
            vec![params.0, x.0],
            Some(Box::new(move |g| {
                let (dp, dx) = if transpose {
                    f.apply_transpose_vjp(&xv, g)?
                } else {
                    f.apply_vjp(&xv, g)?
                };
                Ok(vec![mat_of(&dp), dx])
            })),
        ))
    }

    /// ±1 diagonal from logits (column vector); straight-through / ReinMax backward.
    pub fn rademacher(&mut self, template: &RademacherDiag<T>, logits: Var) -> Result<Var> {
        let mut d = template.clone();
        d.logits = self.value(logits).as_slice().to_vec();
        if d.logits.len() != template.len() {
            return Err(shape_err(format!("{} logits", template.len()), d.logits.len()));
        }
        let hard = rademacher_forward::<T, rand_chacha::ChaCha8Rng>(&d, None)?;
        let out = match self.mode {
            SteMode::Hard => hard.clone(),
            SteMode::Surrogate => d.soft_forward(),
        };
        Ok(self.push(
            mat_of(&out),
            vec![logits.0],
            Some(Box::new(move |g| Ok(vec![mat_of(&rademacher_vjp(&d, &hard, g.as_slice())?)]))),
        ))
    }

    /// Group-wise quantize-dequantize with an identity backward.
    pub fn quantize_ste(&mut self, a: Var, cfg: &QuantConfig) -> Result<Var> {
        let av = self.value(a);
        let out = match self.mode {
            SteMode::Hard => Mat::from_vec(av.rows(), av.cols(), fake_quantize(av.as_slice(), cfg)?)?,
            SteMode::Surrogate => av.clone(),
        };
        Ok(self.push(out, vec![a.0], Some(Box::new(|g| Ok(vec![g.clone()])))))
    }

    /// Reverse sweep from `output`. `upstream` defaults to ones. A tape can be swept once.
    pub fn backward(&mut self, output: Var, upstream: Option<Mat<T>>) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        let out_shape = self.value(output).shape();
        let seed = upstream.unwrap_or_else(|| Mat::from_fn(out_shape.0, out_shape.1, |_, _| T::one()));
        if seed.shape() != out_shape {
            return Err(shape_err(format!("{}×{} upstream", out_shape.0, out_shape.1), format!("{}×{}", seed.rows(), seed.cols())));
        }
        let mut adj: Vec<Option<Mat<T>>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(bw) = &node.backward {
                let parts = bw(&g)?;
                for (&p, part) in node.parents.iter().zip(parts) {
                    match &mut adj[p] {
                        Some(acc) => acc.axpy(T::one(), &part)?,
                        slot => *slot = Some(part),
                    }
                }
            }
            adj[i] = Some(g);
        }
        let mut grads = BTreeMap::new();
        for (name, idx) in &self.params {
            let g = adj[*idx]
                .clone()
                .unwrap_or_else(|| Mat::zeros(self.nodes[*idx].value.rows(), self.nodes[*idx].value.cols()));
            match grads.get_mut(name) {
                Some(acc) => Mat::axpy(acc, T::one(), &g)?,
                None => {
                    grads.insert(name.clone(), g);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
}

impl GradcheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares `analytic` with central differences of `f` at `at`:
/// `max |a − fd| / max(1, |fd|)` with step [`FD_STEP`].
pub fn gradcheck(mut f: impl FnMut(&[f64]) -> Result<f64>, at: &[f64], analytic: &[f64]) -> Result<GradcheckReport> {
    if analytic.len() != at.len() {
        return Err(shape_err(format!("{} gradient entries", at.len()), analytic.len()));
    }
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
    };
    let mut x = at.to_vec();
    for i in 0..at.len() {
        x[i] = at[i] + FD_STEP;
        let fp = f(&x)?;
        x[i] = at[i] - FD_STEP;
        let fm = f(&x)?;
        x[i] = at[i];
        let fd = (fp - fm) / (2.0 * FD_STEP);
        let rel = (analytic[i] - fd).abs() / fd.abs().max(1.0);
        if !(rel <= report.max_rel_error) {
            report = GradcheckReport {
                max_rel_error: rel,
                worst_index: i,
            };
        }
    }
    Ok(report)
}

/// `θ ← θ − lr·(mask ⊙ g)` for every parameter of `store` that has a gradient.
pub fn sgd_step<T: Scalar>(store: &mut ParamStore<T>, grads: &Gradients<T>, lr: T) -> Result<()> {
    if !(lr > T::zero()) {
        return Err(Error::InvalidConfig(format!("learning rate {lr} must be positive")));
    }
    for p in store.iter_mut() {
        let Some(g) = grads.get(&p.name) else { continue };
        p.value.check_same_shape(g)?;
        let mask = &p.mask;
        for ((v, &gv), &m) in p.value.as_mut_slice().iter_mut().zip(g.as_slice()).zip(mask) {
            if m {
                *v -= lr * gv;
            }
        }
    }
    Ok(())
}
