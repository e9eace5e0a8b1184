//! Lie-algebra parameters `B_K` and the skew-symmetric generators built from them.
//!
//! `B_K` is an `N' × K` matrix. Column `k` (0-based) fills the sub-diagonal entries
//! `(k+1..N', k)` of a strictly lower-triangular `N' × N'` matrix `B`, and the
//! generator is `A = B − Bᵀ`. Entries of `B_K` at or above the diagonal never reach
//! `A`; Householder reflections additionally read the diagonal entry (see [`Support`]).
//!
//! Only the first `K'` (intrinsic rank) columns are trainable. The remaining columns
//! keep their initial value, which is zero unless [`FrozenInit::Random`] is chosen.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Which entries of a `B_K` column a parameterization reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    /// Rows `k+1..N'` of column `k`: generators of `A = B − Bᵀ` and Givens angles.
    StrictLower,
    /// Rows `k..N'` of column `k`: Householder vectors in canonical coset form.
    Lower,
}

impl Support {
    #[inline]
    pub fn first_row(self, col: usize) -> usize {
        match self {
            Support::StrictLower => col + 1,
            Support::Lower => col,
        }
    }

    pub fn column_len(self, node_size: usize, col: usize) -> usize {
        node_size.saturating_sub(self.first_row(col))
    }
}

/// Initial values of the trainable columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Zeros,
    Uniform(f64),
}

/// Values held by the frozen columns `K'..K`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrozenInit {
    #[default]
    Zero,
    /// Same distribution as the trainable columns, then never updated.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieConfig {
    pub node_size: usize,
    pub rank: usize,
    pub intrinsic_rank: Option<usize>,
    pub init: Init,
    pub frozen: FrozenInit,
}

impl LieConfig {
    pub fn new(node_size: usize, rank: usize) -> Self {
        Self {
            node_size,
            rank,
            intrinsic_rank: None,
            init: Init::Uniform(0.01),
            frozen: FrozenInit::Zero,
        }
    }

    pub fn intrinsic_rank(mut self, k: usize) -> Self {
        self.intrinsic_rank = Some(k);
        self
    }

    pub fn init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn frozen(mut self, frozen: FrozenInit) -> Self {
        self.frozen = frozen;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieParams<T> {
    entries: Mat<T>,
    intrinsic_rank: usize,
}

impl<T: Scalar> LieParams<T> {
    /// All-zero parameters (every map evaluates to the identity).
    pub fn zeros(node_size: usize, rank: usize, intrinsic_rank: usize) -> Result<Self> {
        validate(node_size, rank, intrinsic_rank)?;
        Ok(Self {
            entries: Mat::zeros(node_size, rank),
            intrinsic_rank,
        })
    }

    pub fn from_config<R: Rng + ?Sized>(cfg: &LieConfig, rng: &mut R) -> Result<Self> {
        let k_prime = cfg.intrinsic_rank.unwrap_or(cfg.rank);
        let mut p = Self::zeros(cfg.node_size, cfg.rank, k_prime)?;
        if let Init::Uniform(scale) = cfg.init {
            if !(scale >= 0.0) {
                return Err(Error::InvalidConfig(format!("init scale {scale} must be non-negative")));
            }
            let cols = match cfg.frozen {
                FrozenInit::Zero => k_prime,
                FrozenInit::Random => cfg.rank,
            };
            for i in 0..cfg.node_size {
                for k in 0..cols {
                    let v: f64 = if scale > 0.0 { rng.gen_range(-scale..scale) } else { 0.0 };
                    p.entries[(i, k)] = T::of(v);
                }
            }
        }
        Ok(p)
    }

    pub fn from_entries(entries: Mat<T>, intrinsic_rank: usize) -> Result<Self> {
        validate(entries.rows(), entries.cols(), intrinsic_rank)?;
        Ok(Self {
            entries,
            intrinsic_rank,
        })
    }

    pub fn node_size(&self) -> usize {
        self.entries.rows()
    }

    pub fn rank(&self) -> usize {
        self.entries.cols()
    }

    pub fn intrinsic_rank(&self) -> usize {
        self.intrinsic_rank
    }

    pub fn entries(&self) -> &Mat<T> {
        &self.entries
    }

    pub fn trainable_mask(&self) -> Vec<bool> {
        (0..self.rank()).map(|k| k < self.intrinsic_rank).collect()
    }

    /// Whether the columns fit into a strictly lower triangle.
    pub fn check_triangle_capacity(&self) -> Result<()> {
        let n = self.node_size();
        let capacity = n * n.saturating_sub(1) / 2;
        if self.rank() > capacity {
            return Err(Error::InvalidConfig(format!(
                "rank {} exceeds strictly-lower-triangle capacity {capacity} of a {n}×{n} generator",
                self.rank()
            )));
        }
        Ok(())
    }

    /// `B_K` with every entry outside `support` zeroed.
    pub fn masked_entries(&self, support: Support) -> Mat<T> {
        Mat::from_fn(self.node_size(), self.rank(), |i, k| {
            if i >= support.first_row(k) {
                self.entries[(i, k)]
            } else {
                T::zero()
            }
        })
    }

    /// Number of trainable scalars under `support`.
    pub fn trainable_count(&self, support: Support) -> usize {
        (0..self.intrinsic_rank)
            .map(|k| support.column_len(self.node_size(), k))
            .sum()
    }

    /// Trainable entries flattened column by column.
    pub fn trainable_values(&self, support: Support) -> Vec<T> {
        let mut out = Vec::with_capacity(self.trainable_count(support));
        for k in 0..self.intrinsic_rank {
            for i in support.first_row(k)..self.node_size() {
                out.push(self.entries[(i, k)]);
            }
        }
        out
    }

    pub fn set_trainable_values(&mut self, support: Support, values: &[T]) -> Result<()> {
        let expected = self.trainable_count(support);
        if values.len() != expected {
            return Err(shape_err(format!("{expected} trainable values"), values.len()));
        }
        let mut it = values.iter();
        for k in 0..self.intrinsic_rank {
            for i in support.first_row(k)..self.node_size() {
                self.entries[(i, k)] = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Gathers a full `N' × K` gradient into the flat trainable layout.
    pub fn gather_gradient(&self, support: Support, grad: &Mat<T>) -> Result<Vec<T>> {
        let masked = self.mask_gradient(grad)?;
        let mut out = Vec::with_capacity(self.trainable_count(support));
        for k in 0..self.intrinsic_rank {
            for i in support.first_row(k)..self.node_size() {
                out.push(masked[(i, k)]);
            }
        }
        Ok(out)
    }

    /// Zeroes gradient columns that are not trainable.
    pub fn mask_gradient(&self, grad: &Mat<T>) -> Result<Mat<T>> {
        if grad.shape() != self.entries.shape() {
            return Err(shape_err(
                format!("{}×{}", self.node_size(), self.rank()),
                format!("{}×{}", grad.rows(), grad.cols()),
            ));
        }
        Ok(Mat::from_fn(grad.rows(), grad.cols(), |i, k| {
            if k < self.intrinsic_rank {
                grad[(i, k)]
            } else {
                T::zero()
            }
        }))
    }

    /// One plain gradient-descent step on the full `N' × K` layout; frozen columns are untouched.
    pub fn descend(&mut self, grad: &Mat<T>, lr: T) -> Result<()> {
        let g = self.mask_gradient(grad)?;
        for i in 0..self.node_size() {
            for k in 0..self.intrinsic_rank {
                self.entries[(i, k)] -= lr * g[(i, k)];
            }
        }
        Ok(())
    }
}

fn validate(node_size: usize, rank: usize, intrinsic_rank: usize) -> Result<()> {
    if node_size == 0 {
        return Err(Error::InvalidConfig("node size must be positive".into()));
    }
    if rank == 0 || rank > node_size {
        return Err(Error::InvalidConfig(format!("rank {rank} must lie in 1..={node_size}")));
    }
    if intrinsic_rank == 0 || intrinsic_rank > rank {
        return Err(Error::InvalidConfig(format!(
            "intrinsic rank {intrinsic_rank} must lie in 1..={rank}"
        )));
    }
    Ok(())
}

/// Dense skew-symmetric matrix. Only constructible from lower-triangle values, so
/// `A = −Aᵀ` holds bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewMatrix<T> {
    dense: Mat<T>,
}

impl<T: Scalar> SkewMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { dense: Mat::zeros(n, n) }
    }

    /// Builds `A` with `A[i][j] = f(i, j)` and `A[j][i] = −f(i, j)` for `i > j`.
    pub fn from_lower(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut dense = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = f(i, j);
                dense[(i, j)] = v;
                dense[(j, i)] = -v;
            }
        }
        Self { dense }
    }

    pub fn size(&self) -> usize {
        self.dense.rows()
    }

    pub fn as_mat(&self) -> &Mat<T> {
        &self.dense
    }

    pub fn neg(&self) -> Self {
        Self {
            dense: self.dense.scaled(-T::one()),
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            dense: self.dense.scaled(c),
        }
    }
}

/// Embeds `B_K` as a strictly lower-triangular `B` and returns `A = B − Bᵀ`.
pub fn skew_assemble<T: Scalar>(params: &LieParams<T>) -> Result<SkewMatrix<T>> {
    params.check_triangle_capacity()?;
    let rank = params.rank();
    let b = params.entries();
    Ok(SkewMatrix::from_lower(params.node_size(), |i, j| {
        if j < rank {
            b[(i, j)]
        } else {
            T::zero()
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_give_zero_generator() {
        let p = LieParams::<f64>::zeros(5, 3, 3).unwrap();
        assert_eq!(skew_assemble(&p).unwrap().as_mat().max_abs(), 0.0);
    }

    #[test]
    fn so2_generator() {
        let b = Mat::from_vec(2, 1, vec![0.0, 0.7]).unwrap();
        let p = LieParams::from_entries(b, 1).unwrap();
        let a = skew_assemble(&p).unwrap();
        assert_eq!(a.as_mat().as_slice(), &[0.0, -0.7, 0.7, 0.0]);
    }

    #[test]
    fn random_generator_matches_loop_fill_and_is_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LieParams::<f64>::from_config(&LieConfig::new(4, 3).init(Init::Uniform(1.0)), &mut rng).unwrap();
        let a = skew_assemble(&p).unwrap();
        let mut oracle = [[0.0f64; 4]; 4];
        for col in 0..3 {
            for row in (col + 1)..4 {
                oracle[row][col] += p.entries()[(row, col)];
                oracle[col][row] -= p.entries()[(row, col)];
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.as_mat()[(i, j)], oracle[i][j]);
                assert_eq!(a.as_mat()[(i, j)] + a.as_mat()[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn rank_beyond_triangle_capacity_is_rejected() {
        let p = LieParams::<f64>::zeros(1, 1, 1).unwrap();
        assert!(matches!(skew_assemble(&p), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn intrinsic_rank_bounds() {
        assert!(LieParams::<f64>::zeros(4, 2, 0).is_err());
        assert!(LieParams::<f64>::zeros(4, 2, 3).is_err());
        assert!(LieParams::<f64>::zeros(4, 5, 1).is_err());
    }

    #[test]
    fn mask_zeroes_frozen_columns() {
        let p = LieParams::<f64>::zeros(6, 4, 2).unwrap();
        let g = p.mask_gradient(&Mat::from_fn(6, 4, |_, _| 1.0)).unwrap();
        for i in 0..6 {
            assert_eq!(g.row(i), &[1.0, 1.0, 0.0, 0.0]);
        }
        let full = LieParams::<f64>::zeros(6, 4, 4).unwrap();
        let ones = Mat::from_fn(6, 4, |_, _| 1.0);
        assert_eq!(full.mask_gradient(&ones).unwrap(), ones);
        assert!(p.mask_gradient(&Mat::zeros(4, 6)).is_err());
    }

    #[test]
    fn trainable_count_matches_enumeration() {
        for n in 2..9 {
            for k in 1..=n.min(4) {
                for kp in 1..=k {
                    let p = LieParams::<f64>::zeros(n, k, kp).unwrap();
                    let mut strict = 0;
                    let mut lower = 0;
                    for col in 0..kp {
                        for row in 0..n {
                            strict += usize::from(row > col);
                            lower += usize::from(row >= col);
                        }
                    }
                    assert_eq!(p.trainable_count(Support::StrictLower), strict);
                    assert_eq!(p.trainable_count(Support::Lower), lower);
                    assert_eq!(p.trainable_values(Support::StrictLower).len(), strict);
                }
            }
        }
    }

    #[test]
    fn frozen_columns_survive_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = LieConfig::new(8, 4).intrinsic_rank(2).frozen(FrozenInit::Random);
        let mut p = LieParams::<f64>::from_config(&cfg, &mut rng).unwrap();
        let before = p.entries().clone();
        for step in 0..100 {
            let g = Mat::from_fn(8, 4, |i, k| ((i * 7 + k * 3 + step) as f64).sin());
            p.descend(&g, 0.05).unwrap();
        }
        for i in 0..8 {
            for k in 2..4 {
                assert_eq!(p.entries()[(i, k)].to_bits(), before[(i, k)].to_bits());
            }
            assert_ne!(p.entries()[(i, 0)], before[(i, 0)]);
        }
    }

    #[test]
    fn zero_frozen_mode_leaves_frozen_columns_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LieParams::<f64>::from_config(&LieConfig::new(5, 3).intrinsic_rank(1), &mut rng).unwrap();
        for i in 0..5 {
            assert!(p.entries()[(i, 0)].abs() < 0.01);
            assert_eq!(p.entries()[(i, 1)], 0.0);
            assert_eq!(p.entries()[(i, 2)], 0.0);
        }
    }
}
