//! Orthogonal matrices of arbitrary size from power-of-two blocks via recursive
//! cosine-sine composition:
//!
//! ```text
//! U = diag(U₁, U₂) · [[C, −S, 0], [0, 0, I], [S, C, 0]] · diag(V₁, V₂)
//! ```
//!
//! with `U₁, V₂` of size `N₁`, `U₂, V₁` of size `N₂`, `C = diag(cos θ)`, `S = diag(sin θ)`.
//! The middle factor has row blocks `(N₂, N₁−N₂, N₂)` and column blocks `(N₂, N₂, N₁−N₂)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::lie::{LieParams, Support};
use crate::linalg::{Mat, OpCounter};
use crate::maps::{LieMap, MapKind};
use crate::ortho::{OrthoFactor, Orthogonal};
use crate::pauli::TwoDesignCircuit;
use crate::scalar::Scalar;

/// Recursion tree of block sizes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SplitPlan {
    Leaf(usize),
    Split { first: Box<SplitPlan>, second: Box<SplitPlan> },
}

/// `N₁` is the largest power of two ≤ `N`; only `N₂ = N − N₁` is split further.
pub fn split_plan(n: usize) -> Result<SplitPlan> {
    if n == 0 {
        return Err(Error::InvalidConfig("cannot plan a zero-sized block".into()));
    }
    if n.is_power_of_two() {
        return Ok(SplitPlan::Leaf(n));
    }
    let n1 = 1usize << (usize::BITS - 1 - n.leading_zeros());
    Ok(SplitPlan::Split {
        first: Box::new(SplitPlan::Leaf(n1)),
        second: Box::new(split_plan(n - n1)?),
    })
}

impl SplitPlan {
    pub fn size(&self) -> usize {
        match self {
            SplitPlan::Leaf(n) => *n,
            SplitPlan::Split { first, second } => first.size() + second.size(),
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        match self {
            SplitPlan::Leaf(n) => vec![*n],
            SplitPlan::Split { first, second } => {
                let mut v = first.leaves();
                v.extend(second.leaves());
                v
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            SplitPlan::Leaf(_) => 0,
            SplitPlan::Split { first, second } => 1 + first.depth().max(second.depth()),
        }
    }

    fn fmt_inner(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitPlan::Leaf(n) => write!(f, "{n}"),
            SplitPlan::Split { first, second } => {
                write!(f, "(")?;
                first.fmt_inner(f)?;
                write!(f, ", ")?;
                second.fmt_inner(f)?;
                write!(f, ")")
            }
        }
    }

    /// Multi-line rendering, one block per line.
    pub fn indented(&self) -> String {
        let mut out = String::new();
        self.write_indented(0, &mut out);
        out
    }

    fn write_indented(&self, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match self {
            SplitPlan::Leaf(n) => out.push_str(&format!("{pad}leaf {n}\n")),
            SplitPlan::Split { first, second } => {
                out.push_str(&format!("{pad}csd {} = {} + {}\n", self.size(), first.size(), second.size()));
                first.write_indented(depth + 1, out);
                second.write_indented(depth + 1, out);
            }
        }
    }
}

/// `leaf(8)` for a bare leaf, otherwise nested pairs such as `(16, (8, 4))`.
impl fmt::Display for SplitPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitPlan::Leaf(n) => write!(f, "leaf({n})"),
            split => split.fmt_inner(f),
        }
    }
}

/// Parameterization used for power-of-two leaves of size ≥ 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LeafSpec {
    Pauli { layers: usize },
    /// Full-size Lie map with `rank = size − 1` (every strictly-lower entry trainable).
    Lie { kind: MapKind },
}

impl LeafSpec {
    pub fn build<T: Scalar>(&self, size: usize) -> Result<OrthoFactor<T>> {
        if size == 1 {
            return Ok(OrthoFactor::identity(1));
        }
        match *self {
            LeafSpec::Pauli { layers } => Ok(OrthoFactor::Pauli(TwoDesignCircuit::for_dim(size, layers)?)),
            LeafSpec::Lie { kind } => {
                let rank = match kind.support() {
                    Support::StrictLower => size - 1,
                    Support::Lower => size,
                };
                let p = LieParams::zeros(size, rank, rank)?;
                Ok(OrthoFactor::Lie(LieMap::new(p, kind)?))
            }
        }
    }
}

/// Builds the orthogonal factor for a plan: a leaf parameterization or a tree.
pub fn build_factor<T: Scalar>(plan: &SplitPlan, leaf: &LeafSpec) -> Result<OrthoFactor<T>> {
    match plan {
        SplitPlan::Leaf(n) => leaf.build(*n),
        SplitPlan::Split { first, second } => {
            Ok(OrthoFactor::Csd(Box::new(CsdNode::new(
                vec![T::zero(); second.size()],
                build_factor(first, leaf)?,
                build_factor(second, leaf)?,
                build_factor(second, leaf)?,
                build_factor(first, leaf)?,
            )?)))
        }
    }
}

/// Orthogonal factor of any dimension `n ≥ 1` with the given leaf parameterization.
pub fn factor_for_dim<T: Scalar>(n: usize, leaf: &LeafSpec) -> Result<OrthoFactor<T>> {
    build_factor(&split_plan(n)?, leaf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsdNode<T> {
    angles: Vec<T>,
    u1: OrthoFactor<T>,
    u2: OrthoFactor<T>,
    v1: OrthoFactor<T>,
    v2: OrthoFactor<T>,
}

impl<T: Scalar> CsdNode<T> {
    /// `u1`, `v2` have size `N₁`; `u2`, `v1` and `angles` have size `N₂ ≤ N₁`.
    pub fn new(
        angles: Vec<T>,
        u1: OrthoFactor<T>,
        u2: OrthoFactor<T>,
        v1: OrthoFactor<T>,
        v2: OrthoFactor<T>,
    ) -> Result<Self> {
        let (n1, n2) = (u1.dim(), u2.dim());
        if n2 == 0 || n1 < n2 {
            return Err(Error::InvalidConfig(format!("split ({n1}, {n2}) needs N₁ ≥ N₂ ≥ 1")));
        }
        if v2.dim() != n1 || v1.dim() != n2 {
            return Err(shape_err(
                format!("V₁ of size {n2} and V₂ of size {n1}"),
                format!("V₁ of size {} and V₂ of size {}", v1.dim(), v2.dim()),
            ));
        }
        if angles.len() != n2 {
            return Err(shape_err(format!("{n2} cosine-sine angles"), angles.len()));
        }
        Ok(Self { angles, u1, u2, v1, v2 })
    }

    pub fn split(&self) -> (usize, usize) {
        (self.u1.dim(), self.u2.dim())
    }

    pub fn angles(&self) -> &[T] {
        &self.angles
    }

    fn children(&self) -> [&OrthoFactor<T>; 4] {
        [&self.u1, &self.u2, &self.v1, &self.v2]
    }

    fn children_mut(&mut self) -> [&mut OrthoFactor<T>; 4] {
        [&mut self.u1, &mut self.u2, &mut self.v1, &mut self.v2]
    }

    fn check_input(&self, x: &Mat<T>) -> Result<()> {
        if x.rows() != self.dim() {
            return Err(shape_err(format!("{} rows", self.dim()), x.rows()));
        }
        Ok(())
    }

    /// `M·Z` (`transpose = false`) or `Mᵀ·Z`.
    fn middle(&self, z: &Mat<T>, transpose: bool, ops: &mut OpCounter) -> Mat<T> {
        let (n1, n2) = self.split();
        let b = z.cols();
        let mut w = Mat::zeros(n1 + n2, b);
        for i in 0..n2 {
            let (s, c) = self.angles[i].sin_cos();
            for j in 0..b {
                if transpose {
                    let (za, zc) = (z[(i, j)], z[(n1 + i, j)]);
                    w[(i, j)] = c * za + s * zc;
                    w[(n2 + i, j)] = -s * za + c * zc;
                } else {
                    let (a, bb) = (z[(i, j)], z[(n2 + i, j)]);
                    w[(i, j)] = c * a - s * bb;
                    w[(n1 + i, j)] = s * a + c * bb;
                }
            }
        }
        for i in n2..n1 {
            let (src, dst) = if transpose { (i, n2 + i) } else { (n2 + i, i) };
            w.row_mut(dst).copy_from_slice(z.row(src));
        }
        ops.add(6 * n2 * b);
        w
    }

    fn blocks(
        a: &OrthoFactor<T>,
        b: &OrthoFactor<T>,
        x: &Mat<T>,
        mut f: impl FnMut(&OrthoFactor<T>, &Mat<T>) -> Result<Mat<T>>,
    ) -> Result<Mat<T>> {
        let top = f(a, &x.row_block(0, a.dim()))?;
        let bottom = f(b, &x.row_block(a.dim(), a.dim() + b.dim()))?;
        Mat::vstack(&top, &bottom)
    }
}

impl<T: Scalar> Orthogonal<T> for CsdNode<T> {
    fn dim(&self) -> usize {
        self.u1.dim() + self.u2.dim()
    }

    fn num_params(&self) -> usize {
        self.angles.len() + self.children().iter().map(|c| c.num_params()).sum::<usize>()
    }

    fn params(&self) -> Vec<T> {
        let mut p = self.angles.clone();
        for c in self.children() {
            p.extend(c.params());
        }
        p
    }

    fn set_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(shape_err(format!("{} parameters", self.num_params()), values.len()));
        }
        let n2 = self.angles.len();
        self.angles.copy_from_slice(&values[..n2]);
        let mut offset = n2;
        for c in self.children_mut() {
            let k = c.num_params();
            c.set_params(&values[offset..offset + k])?;
            offset += k;
        }
        Ok(())
    }

    fn apply_counted(&self, x: &Mat<T>, ops: &mut OpCounter) -> Result<Mat<T>> {
        self.check_input(x)?;
        let z = Self::blocks(&self.v1, &self.v2, x, |f, blk| f.apply_counted(blk, ops))?;
        let w = self.middle(&z, false, ops);
        Self::blocks(&self.u1, &self.u2, &w, |f, blk| f.apply_counted(blk, ops))
    }

    fn apply_transpose(&self, x: &Mat<T>) -> Result<Mat<T>> {
        self.check_input(x)?;
        let w = Self::blocks(&self.u1, &self.u2, x, |f, blk| f.apply_transpose(blk))?;
        let z = self.middle(&w, true, &mut OpCounter::new());
        Self::blocks(&self.v1, &self.v2, &z, |f, blk| f.apply_transpose(blk))
    }

    fn apply_vjp(&self, x: &Mat<T>, upstream: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
        self.check_input(x)?;
        upstream.check_same_shape(x)?;
        let (n1, n2) = self.split();
        let n = n1 + n2;
        let b = x.cols();
        let mut ops = OpCounter::new();

        let z = Self::blocks(&self.v1, &self.v2, x, |f, blk| f.apply(blk))?;
        let w = self.middle(&z, false, &mut ops);

        let (gu1, gw_top) = self.u1.apply_vjp(&w.row_block(0, n1), &upstream.row_block(0, n1))?;
        let (gu2, gw_bot) = self.u2.apply_vjp(&w.row_block(n1, n), &upstream.row_block(n1, n))?;
        let gw = Mat::vstack(&gw_top, &gw_bot)?;

        let mut gangles = vec![T::zero(); n2];
        for (i, ga) in gangles.iter_mut().enumerate() {
            let (s, c) = self.angles[i].sin_cos();
            for j in 0..b {
                let (a, bb) = (z[(i, j)], z[(n2 + i, j)]);
                *ga += gw[(i, j)] * (-s * a - c * bb) + gw[(n1 + i, j)] * (c * a - s * bb);
            }
        }
        let gz = self.middle(&gw, true, &mut ops);

        let (gv1, gx_top) = self.v1.apply_vjp(&x.row_block(0, n2), &gz.row_block(0, n2))?;
        let (gv2, gx_bot) = self.v2.apply_vjp(&x.row_block(n2, n), &gz.row_block(n2, n))?;

        let mut grads = gangles;
        grads.extend(gu1);
        grads.extend(gu2);
        grads.extend(gv1);
        grads.extend(gv2);
        Ok((grads, Mat::vstack(&gx_top, &gx_bot)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::unitarity_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randomize(f: &mut OrthoFactor<f64>, rng: &mut ChaCha8Rng) {
        let p: Vec<f64> = (0..f.num_params()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        f.set_params(&p).unwrap();
    }

    /// Explicit block matrices multiplied densely.
    fn triple_product(node: &CsdNode<f64>) -> Mat<f64> {
        let (n1, n2) = node.split();
        let n = n1 + n2;
        let blkdiag = |a: &Mat<f64>, b: &Mat<f64>| {
            Mat::from_fn(n, n, |i, j| {
                let s = a.rows();
                if i < s && j < s {
                    a[(i, j)]
                } else if i >= s && j >= s {
                    b[(i - s, j - s)]
                } else {
                    0.0
                }
            })
        };
        let left = blkdiag(&node.u1.materialize().unwrap(), &node.u2.materialize().unwrap());
        let right = blkdiag(&node.v1.materialize().unwrap(), &node.v2.materialize().unwrap());
        let mut m = Mat::zeros(n, n);
        for i in 0..n2 {
            let (s, c) = node.angles[i].sin_cos();
            m[(i, i)] = c;
            m[(i, n2 + i)] = -s;
            m[(n1 + i, i)] = s;
            m[(n1 + i, n2 + i)] = c;
        }
        for r in n2..n1 {
            m[(r, n2 + r)] = 1.0;
        }
        left.matmul(&m).unwrap().matmul(&right).unwrap()
    }

    #[test]
    fn split_plans_follow_power_of_two_rule() {
        assert_eq!(split_plan(12).unwrap().to_string(), "(8, 4)");
        assert_eq!(split_plan(28).unwrap().to_string(), "(16, (8, 4))");
        assert_eq!(split_plan(8).unwrap().to_string(), "leaf(8)");
        assert!(split_plan(0).is_err());
        for n in 1..300 {
            let p = split_plan(n).unwrap();
            let leaves = p.leaves();
            assert_eq!(leaves.iter().sum::<usize>(), n);
            assert!(leaves.iter().all(|l| l.is_power_of_two()));
            let ceil_log = (usize::BITS - (n - 1).leading_zeros()) as usize;
            assert!(p.depth() <= ceil_log);
        }
        assert_eq!(split_plan(28).unwrap().indented(), "csd 28 = 16 + 12\n  leaf 16\n  csd 12 = 8 + 4\n    leaf 8\n    leaf 4\n");
    }

    #[test]
    fn identity_children_at_zero_angle() {
        let node = CsdNode::<f64>::new(
            vec![0.0; 4],
            OrthoFactor::identity(4),
            OrthoFactor::identity(4),
            OrthoFactor::identity(4),
            OrthoFactor::identity(4),
        )
        .unwrap();
        assert_eq!(node.materialize().unwrap(), Mat::identity(8));
        let e1 = Mat::eye(8, 1);
        assert_eq!(node.apply(&e1).unwrap(), e1);
    }

    #[test]
    fn unequal_split_at_zero_angle_is_fixed_permutation() {
        let node = CsdNode::<f64>::new(
            vec![0.0; 2],
            OrthoFactor::identity(5),
            OrthoFactor::identity(2),
            OrthoFactor::identity(2),
            OrthoFactor::identity(5),
        )
        .unwrap();
        let q = node.materialize().unwrap();
        assert_eq!(q, triple_product(&node));
        for i in 0..7 {
            let row: Vec<f64> = q.row(i).to_vec();
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), 6);
        }
        assert_ne!(q, Mat::identity(7));
    }

    #[test]
    fn random_tree_matches_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in [3, 5, 7, 12, 28] {
            let mut f = factor_for_dim::<f64>(n, &LeafSpec::Pauli { layers: 1 }).unwrap();
            randomize(&mut f, &mut rng);
            let OrthoFactor::Csd(node) = &f else { panic!("expected tree for {n}") };
            let q = f.materialize().unwrap();
            assert!(q.sub(&triple_product(node)).unwrap().max_abs() < 1e-13);
            assert!(unitarity_error(&q) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn lie_leaves_compose_too() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut f = factor_for_dim::<f64>(12, &LeafSpec::Lie { kind: MapKind::Cayley }).unwrap();
        randomize(&mut f, &mut rng);
        assert!(unitarity_error(&f.materialize().unwrap()) < 1e-12);
    }

    #[test]
    fn mismatched_children_are_rejected() {
        let r = CsdNode::<f64>::new(
            vec![0.0; 2],
            OrthoFactor::identity(4),
            OrthoFactor::identity(2),
            OrthoFactor::identity(4),
            OrthoFactor::identity(2),
        );
        assert!(r.is_err());
        let f = factor_for_dim::<f64>(12, &LeafSpec::Pauli { layers: 1 }).unwrap();
        assert!(f.apply(&Mat::zeros(11, 1)).is_err());
    }

    #[test]
    fn trainable_count_is_leaves_plus_angles() {
        let f = factor_for_dim::<f64>(28, &LeafSpec::Pauli { layers: 1 }).unwrap();
        // (16, (8, 4)): root angles 12; U1,V2 size 16 (q=4: 10 each);
        // U2,V1 size 12 = (8,4): 4 angles + 2·(q=3: 7) + 2·(q=2: 4) = 26 each.
        assert_eq!(f.num_params(), 12 + 2 * 10 + 2 * 26);
    }
}
