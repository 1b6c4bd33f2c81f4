//! Basic kernels on low-dimensional variable subsets.
//!
//! A basic kernel is an isotropic Gaussian kernel restricted to a small,
//! ordered subset of the input dimensions. The candidate set for kernel
//! learning is the Cartesian product of dimension subsets with a grid of
//! inverse-squared-lengthscale values.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Radial family of a basic kernel. Only the isotropic Gaussian is
/// implemented; the tag leaves room for other radial families without
/// changing the surrounding machinery.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    #[default]
    Gaussian,
}

/// One basic kernel: an ordered subset of input dimensions plus an
/// inverse-squared-lengthscale `theta` (inputs are assumed scaled to [0,1]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// 1-based input-dimension indices, strictly increasing.
    dims: Vec<usize>,
    theta: f64,
    #[serde(default)]
    family: KernelFamily,
}

impl KernelSpec {
    pub fn new(dims: Vec<usize>, theta: f64) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpec("dims must be non-empty".into()));
        }
        if dims[0] == 0 {
            return Err(Error::InvalidSpec("dims are 1-based; got index 0".into()));
        }
        if dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec(format!(
                "dims must be strictly increasing, got {dims:?}"
            )));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "theta must be positive and finite, got {theta}"
            )));
        }
        Ok(Self {
            dims,
            theta,
            family: KernelFamily::Gaussian,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Largest dimension index referenced by this kernel.
    pub fn max_dim(&self) -> usize {
        *self.dims.last().expect("dims non-empty")
    }

    /// Kernel value at the given squared distance on the restricted subset.
    #[inline]
    fn radial(&self, sq_dist: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-self.theta * sq_dist).exp(),
        }
    }

    /// Evaluation without bounds checking. Callers validate point length
    /// once up front.
    #[inline]
    fn eval_unchecked(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let mut sq = 0.0;
        for &j in &self.dims {
            let d = x1[j - 1] - x2[j - 1];
            sq += d * d;
        }
        self.radial(sq)
    }

    /// Evaluate the kernel at a pair of points in [0,1]^d.
    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        let need = self.max_dim();
        if x1.len() < need || x2.len() < need {
            return Err(Error::InvalidSpec(format!(
                "kernel references dimension {need} but points have {} and {} coordinates",
                x1.len(),
                x2.len()
            )));
        }
        Ok(self.eval_unchecked(x1, x2))
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "K(dims=")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "; theta={})", self.theta)
    }
}

/// The grid Θ of candidate inverse-squared-lengthscales.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    values: Vec<f64>,
}

impl ThetaGrid {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("theta grid must be non-empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig(
                "theta grid values must be positive and finite".into(),
            ));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        Ok(Self { values })
    }

    /// Default grid {a * 10^b : a in {1,3,5,7,9}, b in {-2..2}}, M = 25,
    /// for inputs standardized to [0,1].
    pub fn default_grid() -> Self {
        let mut values = Vec::with_capacity(25);
        for b in -2i32..=2 {
            for a in [1.0, 3.0, 5.0, 7.0, 9.0] {
                values.push(a * 10f64.powi(b));
            }
        }
        Self::new(values).expect("default grid is valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Validate that every row of `x` has at least `spec.max_dim()` columns.
fn check_points(spec: &KernelSpec, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() < spec.max_dim() {
        return Err(Error::InvalidSpec(format!(
            "kernel references dimension {} but points have {} columns",
            spec.max_dim(),
            x.ncols()
        )));
    }
    Ok(())
}

/// n x n kernel matrix of `spec` over the rows of `x`.
///
/// Only the upper triangle is computed; the lower triangle mirrors it, so the
/// result is bitwise symmetric with a unit diagonal.
pub fn kernel_matrix(spec: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_points(spec, x)?;
    let n = x.nrows();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let mut sq = 0.0;
            for &dim in spec.dims() {
                let d = x[(i, dim - 1)] - x[(j, dim - 1)];
                sq += d * d;
            }
            let v = spec.radial(sq);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Kernel evaluations between one query point and every row of `x`.
pub fn kernel_cross(spec: &KernelSpec, x: &DMatrix<f64>, query: &[f64]) -> Result<Vec<f64>> {
    check_points(spec, x)?;
    if query.len() < spec.max_dim() {
        return Err(Error::InvalidInput(format!(
            "query has {} coordinates but the kernel references dimension {}",
            query.len(),
            spec.max_dim()
        )));
    }
    let n = x.nrows();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut sq = 0.0;
        for &dim in spec.dims() {
            let d = x[(i, dim - 1)] - query[dim - 1];
            sq += d * d;
        }
        out.push(spec.radial(sq));
    }
    Ok(out)
}

/// Cartesian product of dimension subsets with the theta grid, in
/// deterministic order: subsets in the given order, theta ascending.
pub fn candidate_grid(dim_subsets: &[Vec<usize>], grid: &ThetaGrid) -> Result<Vec<KernelSpec>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("theta grid must be non-empty".into()));
    }
    let mut out = Vec::with_capacity(dim_subsets.len() * grid.len());
    for subset in dim_subsets {
        for &theta in grid.values() {
            out.push(KernelSpec::new(subset.clone(), theta)?);
        }
    }
    Ok(out)
}

/// All singleton dimension subsets {1}, ..., {d}.
pub fn one_dim_subsets(d: usize) -> Vec<Vec<usize>> {
    (1..=d).map(|j| vec![j]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.gen::<f64>())
    }

    #[test]
    fn eval_same_point_is_one() {
        let spec = KernelSpec::new(vec![1], 1.0).unwrap();
        let x = [0.3, 0.9];
        assert_eq!(spec.eval(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn eval_unit_distance() {
        let spec = KernelSpec::new(vec![1], 1.0).unwrap();
        let v = spec.eval(&[0.0, 0.5], &[1.0, 0.5]).unwrap();
        assert!((v - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn eval_two_dims_small_theta() {
        let spec = KernelSpec::new(vec![1, 2], 0.01).unwrap();
        let v = spec.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - 0.9801986733067553).abs() < 1e-15);
    }

    #[test]
    fn eval_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = KernelSpec::new(vec![1, 3], 2.5).unwrap();
        for _ in 0..50 {
            let a: [f64; 3] = rng.gen();
            let b: [f64; 3] = rng.gen();
            let v1 = spec.eval(&a, &b).unwrap();
            let v2 = spec.eval(&b, &a).unwrap();
            assert_eq!(v1, v2);
            assert!(v1 > 0.0 && v1 <= 1.0);
            // equality to 1 only when the restricted coordinates coincide
            if v1 == 1.0 {
                assert_eq!(a[0], b[0]);
                assert_eq!(a[2], b[2]);
            }
        }
    }

    #[test]
    fn eval_rejects_out_of_range_dim() {
        let spec = KernelSpec::new(vec![3], 1.0).unwrap();
        assert!(spec.eval(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::new(vec![], 1.0).is_err());
        assert!(KernelSpec::new(vec![0], 1.0).is_err());
        assert!(KernelSpec::new(vec![2, 2], 1.0).is_err());
        assert!(KernelSpec::new(vec![3, 1], 1.0).is_err());
        assert!(KernelSpec::new(vec![1], 0.0).is_err());
        assert!(KernelSpec::new(vec![1], f64::NAN).is_err());
        assert!(KernelSpec::new(vec![1], f64::INFINITY).is_err());
    }

    #[test]
    fn matrix_single_point() {
        let spec = KernelSpec::new(vec![1], 1.0).unwrap();
        let x = DMatrix::from_row_slice(1, 1, &[0.4]);
        let k = kernel_matrix(&spec, &x).unwrap();
        assert_eq!(k.nrows(), 1);
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn matrix_unit_diagonal_and_bitwise_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_points(&mut rng, 8, 4);
        let spec = KernelSpec::new(vec![2, 4], 0.7).unwrap();
        let k = kernel_matrix(&spec, &x).unwrap();
        for i in 0..8 {
            assert_eq!(k[(i, i)], 1.0);
            for j in 0..8 {
                assert_eq!(k[(i, j)].to_bits(), k[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn matrix_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_points(&mut rng, 5, 3);
        let spec = KernelSpec::new(vec![2], 3.0).unwrap();
        let k = kernel_matrix(&spec, &x).unwrap();
        // independent elementwise oracle
        for i in 0..5 {
            for j in 0..5 {
                let d = x[(i, 1)] - x[(j, 1)];
                let expected = (-3.0 * d * d).exp();
                assert!((k[(i, j)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matrix_is_psd_up_to_roundoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &n in &[5usize, 20, 50] {
            let x = random_points(&mut rng, n, 3);
            let spec = KernelSpec::new(vec![1, 2, 3], 4.0).unwrap();
            let k = kernel_matrix(&spec, &x).unwrap();
            let eig = k.symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-8 * n as f64, "min eigenvalue {min} for n={n}");
        }
    }

    #[test]
    fn grid_counts() {
        let grid = ThetaGrid::default_grid();
        assert_eq!(grid.len(), 25);
        let specs = candidate_grid(&[vec![1], vec![2]], &grid).unwrap();
        assert_eq!(specs.len(), 50);

        // p = 6: all 1-dim plus all 2-dim subsets
        let mut subsets = one_dim_subsets(6);
        for j in 1..=6usize {
            for k in (j + 1)..=6 {
                subsets.push(vec![j, k]);
            }
        }
        let specs = candidate_grid(&subsets, &grid).unwrap();
        assert_eq!(specs.len(), 6 * 25 + 15 * 25);
    }

    #[test]
    fn grid_rejects_empty_theta() {
        assert!(ThetaGrid::new(vec![]).is_err());
        assert!(ThetaGrid::new(vec![-1.0]).is_err());
    }

    #[test]
    fn grid_ordering_is_deterministic() {
        let grid = ThetaGrid::default_grid();
        let a = candidate_grid(&[vec![1], vec![1, 2]], &grid).unwrap();
        let b = candidate_grid(&[vec![1], vec![1, 2]], &grid).unwrap();
        assert_eq!(a, b);
        // subsets in given order, theta ascending within a subset
        assert_eq!(a[0].dims(), &[1]);
        assert_eq!(a[0].theta(), 0.01);
        assert!(a[..25].windows(2).all(|w| w[0].theta() < w[1].theta()));
        assert_eq!(a[25].dims(), &[1, 2]);
    }
}
