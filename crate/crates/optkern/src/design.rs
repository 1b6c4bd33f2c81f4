//! Designs over basic kernels and the regularized loss they induce.
//!
//! A design is a discrete probability measure on basic kernels; its mixture
//! kernel matrix is the weight-averaged sum of the per-kernel matrices. All
//! selection and weight-update steps run off one shared solve per design:
//! a = (K + eta I)^-1 y.

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// A convex combination of basic kernels: support specs plus simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    support: Vec<KernelSpec>,
    weights: Vec<f64>,
}

impl Design {
    pub fn new(support: Vec<KernelSpec>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "support/weight length mismatch: {} vs {}",
                support.len(),
                weights.len()
            )));
        }
        for i in 0..support.len() {
            for j in (i + 1)..support.len() {
                if support[i] == support[j] {
                    return Err(Error::InvalidInput(format!(
                        "duplicate support kernel {}",
                        support[i]
                    )));
                }
            }
        }
        if weights
            .iter()
            .any(|w| !(w.is_finite() && *w > 0.0 && *w <= 1.0))
        {
            return Err(Error::InvalidInput("weights must lie in (0,1]".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { support, weights })
    }

    /// Design with a single support kernel carrying all the mass.
    pub fn singleton(spec: KernelSpec) -> Self {
        Self {
            support: vec![spec],
            weights: vec![1.0],
        }
    }

    pub fn support(&self) -> &[KernelSpec] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Mixture kernel value at a pair of points.
    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        let mut v = 0.0;
        for (spec, &w) in self.support.iter().zip(&self.weights) {
            v += w * spec.eval(x1, x2)?;
        }
        Ok(v)
    }
}

/// Weighted sum of per-support kernel matrices.
pub fn mixture_matrix(
    weights: &[f64],
    bases: &[impl std::borrow::Borrow<DMatrix<f64>>],
) -> Result<DMatrix<f64>> {
    if bases.is_empty() || bases.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "mixture of {} matrices with {} weights",
            bases.len(),
            weights.len()
        )));
    }
    let n = bases[0].borrow().nrows();
    if bases
        .iter()
        .any(|b| b.borrow().nrows() != n || b.borrow().ncols() != n)
    {
        return Err(Error::InvalidInput(
            "base kernel matrices have mismatched shapes".into(),
        ));
    }
    let mut k = DMatrix::zeros(n, n);
    for (b, &w) in bases.iter().zip(weights) {
        k.zip_apply(b.borrow(), |acc, v| *acc += w * v);
    }
    Ok(k)
}

/// Cached per-design solve: the mixture matrix, its regularized Cholesky
/// factor, the coefficient vector a = (K + eta I)^-1 y, and the loss value.
pub struct SolveState {
    pub kmix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    pub a: DVector<f64>,
    pub q_value: f64,
    pub eta: f64,
    /// a' K a for the mixture matrix; both the loss and every directional
    /// derivative reuse it.
    pub d_mix: f64,
}

impl SolveState {
    /// Factor K + eta I and evaluate the regularized loss
    /// Q = (y - K a)'(y - K a) + eta a' K a.
    ///
    /// On factorization failure, diagonal jitter is added starting at 1e-10
    /// and escalating tenfold up to 1e-6 before giving up.
    pub fn new(kmix: DMatrix<f64>, y: &DVector<f64>, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eta must be positive, got {eta}"
            )));
        }
        if kmix.nrows() != y.len() {
            return Err(Error::InvalidInput(format!(
                "kernel matrix is {}x{} but y has {} entries",
                kmix.nrows(),
                kmix.ncols(),
                y.len()
            )));
        }
        let n = kmix.nrows();
        let mut regularized = kmix.clone();
        for i in 0..n {
            regularized[(i, i)] += eta;
        }
        let factor = factor_with_jitter(regularized)?;
        let a = factor.solve(y);
        let residual = y - &kmix * &a;
        // same summation path as d_value so that the self-derivative is
        // exactly zero
        let d_mix = quad_form(&a, &kmix);
        let q_value = residual.dot(&residual) + eta * d_mix;
        if !q_value.is_finite() {
            return Err(Error::NumericalSingularity(
                "loss evaluated to a non-finite value".into(),
            ));
        }
        Ok(Self {
            kmix,
            factor,
            a,
            q_value,
            eta,
            d_mix,
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Solve (K + eta I) x = b with the cached factor.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    /// Dense inverse of K + eta I (used by the leave-one-out shortcut).
    pub fn inverse(&self) -> DMatrix<f64> {
        self.factor.inverse()
    }
}

fn factor_with_jitter(mut m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    let mut jitter = 1e-10;
    let mut applied = 0.0;
    while jitter <= 1e-6 {
        let add = jitter - applied;
        for i in 0..n {
            m[(i, i)] += add;
        }
        applied = jitter;
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::NumericalSingularity(
        "Cholesky factorization failed after jitter escalation to 1e-6".into(),
    ))
}

/// Regularized loss of a design given its cached base matrices.
pub fn loss_q(
    design: &Design,
    bases: &[impl std::borrow::Borrow<DMatrix<f64>>],
    y: &DVector<f64>,
    eta: f64,
) -> Result<SolveState> {
    let kmix = mixture_matrix(design.weights(), bases)?;
    SolveState::new(kmix, y, eta)
}

/// d(K', design) = a' K' a, the quadratic form driving both the candidate
/// scan and the multiplicative weight update.
pub fn d_value(state: &SolveState, k_target: &DMatrix<f64>) -> f64 {
    quad_form(&state.a, k_target)
}

#[inline]
fn quad_form(a: &DVector<f64>, k: &DMatrix<f64>) -> f64 {
    let n = a.len();
    debug_assert_eq!(k.nrows(), n);
    // a' K a exploiting symmetry: diagonal once, off-diagonal doubled.
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..n {
        diag += a[i] * a[i] * k[(i, i)];
        for j in (i + 1)..n {
            off += a[i] * a[j] * k[(i, j)];
        }
    }
    diag + 2.0 * off
}

/// Directional derivative of the loss at the design toward the kernel whose
/// matrix is `k_target`: -eta (a' K' a - a' K a). Negative values mean the
/// target improves the design.
pub fn dir_derivative(state: &SolveState, k_target: &DMatrix<f64>) -> f64 {
    dir_derivative_from_d(state, d_value(state, k_target))
}

/// Same as [`dir_derivative`] for a precomputed d-value.
#[inline]
pub fn dir_derivative_from_d(state: &SolveState, d_target: f64) -> f64 {
    -state.eta * (d_target - state.d_mix)
}
