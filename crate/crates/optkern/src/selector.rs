//! Forward stepwise kernel selection.
//!
//! Starting from a single kernel, each iteration scans the remaining
//! candidates for the steepest-descent directional derivative, adds the
//! minimizer when it is negative, and re-optimizes the simplex weights over
//! the enlarged support. An optional final delete step drops support kernels
//! whose weight fell below a threshold and rescales the rest.

use crate::design::{d_value, dir_derivative_from_d, loss_q, Design, SolveState};
use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, KernelSpec};
use crate::weights::{optimize_weights, optimize_weights_from, WeightConfig};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// How the first support kernel is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitRule {
    /// Uniform random choice from the candidate list, driven by the seed.
    Random,
    /// The candidate with the smallest single-kernel loss (ties broken by
    /// candidate order). Deterministic regardless of seed.
    BestSingle,
}

/// Settings for one selection run. Defaults follow the reference tuning:
/// DEL = 0.05, Tol = 0.005, MaxIter = 1000.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorConfig {
    pub eta: f64,
    pub del_threshold: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub init: InitRule,
}

impl SelectorConfig {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            del_threshold: 0.05,
            tol: 0.005,
            max_iter: 1000,
            seed: 0,
            init: InitRule::Random,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.del_threshold.is_nan() || self.del_threshold < 0.0 || self.del_threshold >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "delete threshold must be in [0,1), got {}",
                self.del_threshold
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why the selection loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// No remaining candidate has a negative directional derivative.
    Optimal,
    /// Relative loss change dropped below the tolerance.
    Converged,
    /// Iteration budget exhausted.
    MaxIter,
    /// Support reached min(n + 2, number of candidates).
    SupportCap,
    /// Every candidate is already in the support.
    Exhausted,
    /// Response is identically zero; any kernel is optimal.
    DegenerateResponse,
}

/// One accepted addition during the loop.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub added: KernelSpec,
    pub phi: f64,
    pub q_after: f64,
    pub support_size: usize,
}

/// Diagnostics for a selection run.
#[derive(Debug, Clone)]
pub struct SelectionTrace {
    pub initial_support: Vec<KernelSpec>,
    pub initial_q: f64,
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Optimality certificate evaluated before the delete step: every
    /// candidate direction is non-improving and every carried support kernel
    /// sits at a stationary derivative, both within 10 * tol * max(1, Q).
    pub ge_certificate: bool,
    pub q_before_delete: f64,
    pub q_after_delete: f64,
    pub deleted: usize,
}

/// Cache of candidate kernel matrices keyed by spec, with a byte budget.
/// Least-recently-used matrices are evicted once the budget is exceeded and
/// recomputed on demand.
pub struct KernelCache {
    budget_bytes: usize,
    inner: Mutex<CacheInner>,
}

struct CacheInner {
    map: HashMap<CacheKey, CacheEntry>,
    tick: u64,
    bytes: usize,
}

struct CacheEntry {
    matrix: Arc<DMatrix<f64>>,
    last_used: u64,
}

#[derive(PartialEq, Eq, Hash, Clone)]
struct CacheKey {
    dims: Vec<usize>,
    theta_bits: u64,
}

impl CacheKey {
    fn of(spec: &KernelSpec) -> Self {
        Self {
            dims: spec.dims().to_vec(),
            theta_bits: spec.theta().to_bits(),
        }
    }
}

impl KernelCache {
    /// Default budget: 2 GiB of cached matrices.
    pub fn new() -> Self {
        Self::with_budget(2 * 1024 * 1024 * 1024)
    }

    pub fn with_budget(budget_bytes: usize) -> Self {
        Self {
            budget_bytes,
            inner: Mutex::new(CacheInner {
                map: HashMap::new(),
                tick: 0,
                bytes: 0,
            }),
        }
    }

    pub fn get_or_build(&self, spec: &KernelSpec, x: &DMatrix<f64>) -> Result<Arc<DMatrix<f64>>> {
        let key = CacheKey::of(spec);
        {
            let mut inner = self.inner.lock().unwrap();
            inner.tick += 1;
            let tick = inner.tick;
            if let Some(entry) = inner.map.get_mut(&key) {
                entry.last_used = tick;
                return Ok(entry.matrix.clone());
            }
        }
        // compute outside the lock; concurrent duplicate builds are idempotent
        let matrix = Arc::new(kernel_matrix(spec, x)?);
        let size = matrix.len() * std::mem::size_of::<f64>();
        let mut inner = self.inner.lock().unwrap();
        inner.tick += 1;
        let tick = inner.tick;
        if size <= self.budget_bytes {
            inner.bytes += size;
            inner.map.insert(
                key,
                CacheEntry {
                    matrix: matrix.clone(),
                    last_used: tick,
                },
            );
            while inner.bytes > self.budget_bytes && inner.map.len() > 1 {
                let oldest = inner
                    .map
                    .iter()
                    .min_by_key(|(_, e)| e.last_used)
                    .map(|(k, _)| k.clone())
                    .expect("cache non-empty");
                if let Some(evicted) = inner.map.remove(&oldest) {
                    inner.bytes -= evicted.matrix.len() * std::mem::size_of::<f64>();
                }
            }
        }
        Ok(matrix)
    }
}

impl Default for KernelCache {
    fn default() -> Self {
        Self::new()
    }
}

/// Scan candidates for the one minimizing the directional derivative.
/// Returns the winning index into `candidates` and its derivative value.
/// Ties break toward the lowest index.
pub fn argmin_phi_scan(
    candidates: &[KernelSpec],
    state: &SolveState,
    x: &DMatrix<f64>,
    cache: &KernelCache,
) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput(
            "candidate scan needs at least one kernel".into(),
        ));
    }
    let phis: Vec<f64> = candidates
        .par_iter()
        .map(|spec| -> Result<f64> {
            let k = cache.get_or_build(spec, x)?;
            Ok(dir_derivative_from_d(state, d_value(state, &k)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, phi) in phis.iter().enumerate() {
        if !phi.is_finite() {
            return Err(Error::NumericalSingularity(
                "non-finite directional derivative in scan".into(),
            ));
        }
        if *phi < phis[best] {
            best = i;
        }
    }
    Ok((best, phis[best]))
}

/// Run the forward stepwise selection over the candidate list.
///
/// `initial` resumes from a previous design (its kernels need not be in
/// `candidates`); otherwise the run starts from one kernel chosen by the
/// configured init rule.
pub fn select_kernels(
    candidates: &[KernelSpec],
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &SelectorConfig,
    weight_cfg: &WeightConfig,
    initial: Option<&Design>,
) -> Result<(Design, SelectionTrace)> {
    let cache = KernelCache::new();
    select_kernels_with_cache(candidates, x, y, cfg, weight_cfg, initial, &cache)
}

pub fn select_kernels_with_cache(
    candidates: &[KernelSpec],
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &SelectorConfig,
    weight_cfg: &WeightConfig,
    initial: Option<&Design>,
    cache: &KernelCache,
) -> Result<(Design, SelectionTrace)> {
    cfg.validate()?;
    weight_cfg.validate()?;
    if candidates.is_empty() {
        return Err(Error::InvalidConfig(
            "candidate set must be non-empty".into(),
        ));
    }
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 training points, got {n}"
        )));
    }
    if y.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} points but {} responses",
            n,
            y.len()
        )));
    }

    // initial support
    let mut support: Vec<KernelSpec> = match initial {
        Some(d) => d.support().to_vec(),
        None => {
            let idx = match cfg.init {
                InitRule::Random => {
                    use rand::{Rng, SeedableRng};
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.gen_range(0..candidates.len())
                }
                InitRule::BestSingle => best_single_index(candidates, x, y, cfg.eta, cache)?,
            };
            vec![candidates[idx].clone()]
        }
    };
    let mut weights: Vec<f64> = match initial {
        Some(d) => d.weights().to_vec(),
        None => vec![1.0],
    };

    // degenerate response: every design attains Q = 0
    if y.iter().all(|v| *v == 0.0) {
        let design = Design::new(support.clone(), weights)?;
        let trace = SelectionTrace {
            initial_support: support,
            initial_q: 0.0,
            records: Vec::new(),
            stop: StopReason::DegenerateResponse,
            ge_certificate: true,
            q_before_delete: 0.0,
            q_after_delete: 0.0,
            deleted: 0,
        };
        return Ok((design, trace));
    }

    let mut bases: Vec<Arc<DMatrix<f64>>> = support
        .iter()
        .map(|s| cache.get_or_build(s, x))
        .collect::<Result<_>>()?;

    let design0 = Design::new(support.clone(), weights.clone())?;
    let mut state = loss_q(&design0, &bases, y, cfg.eta)?;
    let mut q = state.q_value;

    let pool_size = candidates.iter().filter(|c| !support.contains(c)).count() + support.len();
    let cap = (n + 2).min(pool_size);

    let mut trace = SelectionTrace {
        initial_support: support.clone(),
        initial_q: q,
        records: Vec::new(),
        stop: StopReason::MaxIter,
        ge_certificate: false,
        q_before_delete: q,
        q_after_delete: q,
        deleted: 0,
    };

    let mut change = f64::INFINITY;
    let mut iter = 0;
    loop {
        if change <= cfg.tol {
            trace.stop = StopReason::Converged;
            break;
        }
        if iter >= cfg.max_iter {
            trace.stop = StopReason::MaxIter;
            break;
        }
        if support.len() >= cap {
            trace.stop = StopReason::SupportCap;
            break;
        }

        let remaining: Vec<KernelSpec> = candidates
            .iter()
            .filter(|c| !support.contains(c))
            .cloned()
            .collect();
        if remaining.is_empty() {
            trace.stop = StopReason::Exhausted;
            break;
        }

        let (best_idx, best_phi) = argmin_phi_scan(&remaining, &state, x, cache)?;
        if best_phi >= 0.0 {
            trace.stop = StopReason::Optimal;
            break;
        }

        let added = remaining[best_idx].clone();
        support.push(added.clone());
        bases.push(cache.get_or_build(&added, x)?);

        // re-optimize all weights from the uniform start of the
        // multiplicative procedure
        let mut result = optimize_weights(&bases, y, cfg.eta, weight_cfg)?;
        if result.q_value > q * (1.0 + 1e-12) {
            // the loosely-converged uniform restart landed above the previous
            // design; retry warm-started from the previous weights with a
            // small mass on the new kernel, which descends from a dominating
            // point
            let eps = 0.01;
            let mut warm: Vec<f64> = weights.iter().map(|w| w * (1.0 - eps)).collect();
            warm.push(eps);
            let retry = optimize_weights_from(&bases, y, cfg.eta, weight_cfg, &warm)?;
            if retry.q_value < result.q_value {
                result = retry;
            }
        }
        weights = result.weights;
        state = result.state;
        let q_new = result.q_value;

        change = if q == 0.0 {
            0.0
        } else {
            ((q_new - q) / q).abs()
        };
        q = q_new;
        iter += 1;
        trace.records.push(IterationRecord {
            added,
            phi: best_phi,
            q_after: q,
            support_size: support.len(),
        });
    }

    trace.q_before_delete = q;
    trace.ge_certificate = certificate_holds(
        candidates,
        &support,
        &weights,
        &state,
        x,
        cache,
        cfg.tol,
        cfg.del_threshold,
        q,
    )?;

    // delete step: drop tiny weights, rescale the remainder
    let mut kept_support = Vec::with_capacity(support.len());
    let mut kept_weights = Vec::with_capacity(weights.len());
    for (s, &w) in support.iter().zip(&weights) {
        if w >= cfg.del_threshold {
            kept_support.push(s.clone());
            kept_weights.push(w);
        }
    }
    if kept_support.is_empty() {
        // every weight fell under the threshold; keep the heaviest kernel
        let (argmax, _) =
            weights
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc },
                );
        kept_support.push(support[argmax].clone());
        kept_weights.push(1.0);
    }
    trace.deleted = support.len() - kept_support.len();
    let sum: f64 = kept_weights.iter().sum();
    for w in &mut kept_weights {
        *w /= sum;
    }

    let design = Design::new(kept_support, kept_weights)?;
    trace.q_after_delete = if trace.deleted == 0 {
        q
    } else {
        let kept_bases: Vec<Arc<DMatrix<f64>>> = design
            .support()
            .iter()
            .map(|s| cache.get_or_build(s, x))
            .collect::<Result<_>>()?;
        loss_q(&design, &kept_bases, y, cfg.eta)?.q_value
    };

    Ok((design, trace))
}

fn best_single_index(
    candidates: &[KernelSpec],
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    eta: f64,
    cache: &KernelCache,
) -> Result<usize> {
    let qs: Vec<f64> = candidates
        .par_iter()
        .map(|spec| -> Result<f64> {
            let k = cache.get_or_build(spec, x)?;
            Ok(SolveState::new(k.as_ref().clone(), y, eta)?.q_value)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, q) in qs.iter().enumerate() {
        if *q < qs[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Optimality certificate on the pre-delete design. Every candidate
/// direction must be non-improving within the band, every positive-weight
/// support kernel likewise, and every support kernel heavy enough to survive
/// deletion must sit at a stationary derivative (two-sided). Weights still
/// decaying toward the simplex boundary are transient, not support of the
/// optimum, so only the one-sided condition applies to them.
#[allow(clippy::too_many_arguments)]
fn certificate_holds(
    candidates: &[KernelSpec],
    support: &[KernelSpec],
    weights: &[f64],
    state: &SolveState,
    x: &DMatrix<f64>,
    cache: &KernelCache,
    tol: f64,
    del_threshold: f64,
    q: f64,
) -> Result<bool> {
    let eps = 10.0 * tol * q.max(1.0);
    for spec in candidates {
        let k = cache.get_or_build(spec, x)?;
        let phi = dir_derivative_from_d(state, d_value(state, &k));
        if phi < -eps {
            return Ok(false);
        }
    }
    let stationary_floor = del_threshold.max(1e-6);
    for (spec, &w) in support.iter().zip(weights) {
        if w <= 1e-6 {
            continue;
        }
        let k = cache.get_or_build(spec, x)?;
        let phi = dir_derivative_from_d(state, d_value(state, &k));
        if phi < -eps {
            return Ok(false);
        }
        if w >= stationary_floor && phi.abs() > eps {
            return Ok(false);
        }
    }
    Ok(true)
}
