//! Stage-wise kernel learning with heredity-driven candidate expansion.
//!
//! Stage 1 selects over all one-dimensional kernels. Each later stage reads
//! the active variables off the current design, generates the next-dimension
//! candidates allowed by the heredity rule, and resumes the stepwise
//! selection with the previous design and its weights kept in place.

use crate::design::{loss_q, Design};
use crate::error::{Error, Result};
use crate::kernel::{candidate_grid, one_dim_subsets, KernelSpec, ThetaGrid};
use crate::selector::{select_kernels_with_cache, KernelCache, SelectionTrace, SelectorConfig};
use crate::weights::WeightConfig;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeSet;

/// Candidate-construction rule for interaction kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeredityMode {
    /// Every dimension of an interaction kernel must already be active.
    Strong,
    /// At least one dimension must be active; the rest may be inactive.
    Weak,
}

impl std::str::FromStr for HeredityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(Self::Strong),
            "weak" => Ok(Self::Weak),
            other => Err(Error::InvalidConfig(format!(
                "heredity must be 'strong' or 'weak', got '{other}'"
            ))),
        }
    }
}

/// Configuration for the full stagewise fit.
#[derive(Debug, Clone)]
pub struct StageConfig {
    /// Largest kernel dimension considered. Default 4.
    pub max_dim: usize,
    pub heredity: HeredityMode,
    pub selector: SelectorConfig,
    pub weights: WeightConfig,
    pub theta_grid: ThetaGrid,
    /// Byte budget for cached candidate matrices.
    pub cache_budget: usize,
}

impl StageConfig {
    pub fn new(eta: f64) -> Self {
        Self {
            max_dim: 4,
            heredity: HeredityMode::Strong,
            selector: SelectorConfig::new(eta),
            weights: WeightConfig::default(),
            theta_grid: ThetaGrid::default_grid(),
            cache_budget: 2 * 1024 * 1024 * 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_dim == 0 {
            return Err(Error::InvalidConfig("max_dim must be at least 1".into()));
        }
        self.selector.validate()?;
        self.weights.validate()
    }
}

/// Per-stage diagnostics.
#[derive(Debug, Clone)]
pub struct StageTrace {
    /// Kernel dimension introduced at this stage (1 for the first stage).
    pub dim: usize,
    /// Number of candidates added to the pool at this stage.
    pub candidates_added: usize,
    pub selection: SelectionTrace,
    pub actives: BTreeSet<usize>,
    /// Loss of the stage's returned design (after its delete step).
    pub q: f64,
}

/// Union of dimensions over all support kernels.
pub fn active_variables(design: &Design) -> BTreeSet<usize> {
    design
        .support()
        .iter()
        .flat_map(|s| s.dims().iter().copied())
        .collect()
}

/// Candidate kernels of dimension `next_dim` allowed by the heredity rule.
///
/// Strong heredity draws every subset entirely from `active`; weak heredity
/// requires at least one active member, filling the rest from all of `1..=d`.
/// The result may be empty when `active` is too small under strong heredity.
pub fn expand_candidates(
    active: &BTreeSet<usize>,
    d: usize,
    next_dim: usize,
    mode: HeredityMode,
    grid: &ThetaGrid,
) -> Result<Vec<KernelSpec>> {
    if next_dim < 2 {
        return Err(Error::InvalidConfig(
            "expansion applies to dimension 2 and above".into(),
        ));
    }
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    let mut current = Vec::with_capacity(next_dim);
    collect_subsets(1, d, next_dim, &mut current, &mut subsets);
    let allowed: Vec<Vec<usize>> = subsets
        .into_iter()
        .filter(|s| match mode {
            HeredityMode::Strong => s.iter().all(|j| active.contains(j)),
            HeredityMode::Weak => s.iter().any(|j| active.contains(j)),
        })
        .collect();
    if allowed.is_empty() {
        return Ok(Vec::new());
    }
    candidate_grid(&allowed, grid)
}

fn collect_subsets(
    start: usize,
    d: usize,
    size: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if current.len() == size {
        out.push(current.clone());
        return;
    }
    for j in start..=d {
        current.push(j);
        collect_subsets(j + 1, d, size, current, out);
        current.pop();
    }
}

/// Run the full stagewise fit on pre-scaled inputs and a centered response.
///
/// Returns the final design, its loss, and one trace per executed stage.
pub fn fit_stagewise(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &StageConfig,
) -> Result<(Design, f64, Vec<StageTrace>)> {
    cfg.validate()?;
    let d = x.ncols();
    if d == 0 {
        return Err(Error::InvalidInput(
            "inputs must have at least one column".into(),
        ));
    }

    let cache = KernelCache::with_budget(cfg.cache_budget);
    let mut pool = candidate_grid(&one_dim_subsets(d), &cfg.theta_grid)?;
    let stage1_count = pool.len();

    let (mut design, trace1) =
        select_kernels_with_cache(&pool, x, y, &cfg.selector, &cfg.weights, None, &cache)?;
    let mut q = trace1.q_after_delete;
    let mut traces = vec![StageTrace {
        dim: 1,
        candidates_added: stage1_count,
        selection: trace1,
        actives: active_variables(&design),
        q,
    }];

    if q == 0.0 {
        return Ok((design, q, traces));
    }

    for dim in 2..=cfg.max_dim {
        let actives = active_variables(&design);
        let expansion = expand_candidates(&actives, d, dim, cfg.heredity, &cfg.theta_grid)?;
        if expansion.is_empty() {
            break;
        }
        let added = expansion.len();
        pool.extend(expansion);

        let (next, trace) = select_kernels_with_cache(
            &pool,
            x,
            y,
            &cfg.selector,
            &cfg.weights,
            Some(&design),
            &cache,
        )?;
        let q_next = trace.q_after_delete;
        design = next;
        traces.push(StageTrace {
            dim,
            candidates_added: added,
            selection: trace,
            actives: active_variables(&design),
            q: q_next,
        });

        let change = if q == 0.0 {
            0.0
        } else {
            ((q_next - q) / q).abs()
        };
        q = q_next;
        if change <= cfg.selector.tol {
            break;
        }
    }

    Ok((design, q, traces))
}

/// Recompute the loss of a finished design (used when a caller needs the
/// solve state alongside the design, e.g. for coefficient extraction).
pub fn design_loss(
    design: &Design,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    eta: f64,
) -> Result<crate::design::SolveState> {
    let bases: Vec<DMatrix<f64>> = design
        .support()
        .iter()
        .map(|s| crate::kernel::kernel_matrix(s, x))
        .collect::<Result<_>>()?;
    let refs: Vec<&DMatrix<f64>> = bases.iter().collect();
    loss_q(design, &refs, y, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::select_kernels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stratified_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, d);
        for j in 0..d {
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let k = rng.gen_range(0..=i);
                idx.swap(i, k);
            }
            for i in 0..n {
                m[(i, j)] = (idx[i] as f64 + rng.gen::<f64>()) / n as f64;
            }
        }
        m
    }

    #[test]
    fn active_variables_union() {
        let a = KernelSpec::new(vec![2], 1.0).unwrap();
        let design = Design::singleton(a);
        assert_eq!(active_variables(&design), BTreeSet::from([2]));

        let b = KernelSpec::new(vec![1], 1.0).unwrap();
        let c = KernelSpec::new(vec![1, 3], 1.0).unwrap();
        let design = Design::new(vec![b, c], vec![0.5, 0.5]).unwrap();
        assert_eq!(active_variables(&design), BTreeSet::from([1, 3]));
    }

    #[test]
    fn expansion_counts_strong_and_weak() {
        let grid = ThetaGrid::default_grid();
        let active = BTreeSet::from([1, 2]);

        let strong = expand_candidates(&active, 4, 2, HeredityMode::Strong, &grid).unwrap();
        assert_eq!(strong.len(), 25); // only {1,2}

        let weak = expand_candidates(&active, 4, 2, HeredityMode::Weak, &grid).unwrap();
        assert_eq!(weak.len(), 5 * 25); // {1,2},{1,3},{1,4},{2,3},{2,4}

        let lone = BTreeSet::from([1]);
        let none = expand_candidates(&lone, 4, 2, HeredityMode::Strong, &grid).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn expansion_respects_heredity_structurally() {
        let grid = ThetaGrid::new(vec![1.0]).unwrap();
        let active = BTreeSet::from([2, 5]);
        for spec in expand_candidates(&active, 6, 3, HeredityMode::Strong, &grid).unwrap() {
            assert!(spec.dims().iter().all(|j| active.contains(j)));
        }
        for spec in expand_candidates(&active, 6, 3, HeredityMode::Weak, &grid).unwrap() {
            assert!(spec.dims().iter().any(|j| active.contains(j)));
        }
    }

    #[test]
    fn max_dim_one_matches_single_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 20;
        let x = stratified_points(&mut rng, n, 3);
        let y = DVector::from_fn(n, |i, _| (5.0 * x[(i, 0)]).sin());

        let mut cfg = StageConfig::new(0.01);
        cfg.max_dim = 1;
        cfg.selector.seed = 3;
        let (design, _, traces) = fit_stagewise(&x, &y, &cfg).unwrap();
        assert_eq!(traces.len(), 1);

        let pool = candidate_grid(&one_dim_subsets(3), &cfg.theta_grid).unwrap();
        let (expected, _) =
            select_kernels(&pool, &x, &y, &cfg.selector, &cfg.weights, None).unwrap();
        assert_eq!(design, expected);
    }

    #[test]
    fn constant_response_stops_after_stage_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = stratified_points(&mut rng, 10, 2);
        let y = DVector::zeros(10); // centered constant
        let cfg = StageConfig::new(0.05);
        let (design, q, traces) = fit_stagewise(&x, &y, &cfg).unwrap();
        assert_eq!(q, 0.0);
        assert_eq!(traces.len(), 1);
        assert_eq!(design.len(), 1);
    }

    #[test]
    fn stage_one_covers_every_dimension_m_times() {
        let d = 5;
        let grid = ThetaGrid::default_grid();
        let pool = candidate_grid(&one_dim_subsets(d), &grid).unwrap();
        for j in 1..=d {
            let count = pool.iter().filter(|s| s.dims() == [j]).count();
            assert_eq!(count, grid.len());
        }
    }

    #[test]
    fn q_non_increasing_across_stages_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 40;
        let x = stratified_points(&mut rng, n, 4);
        let y = DVector::from_fn(n, |i, _| {
            (6.0 * x[(i, 0)]).sin() + 2.0 * x[(i, 1)] * (4.0 * x[(i, 0)]).cos()
        });
        let mut cfg = StageConfig::new(0.01);
        cfg.max_dim = 2;
        cfg.selector.seed = 11;

        let (d1, q1, t1) = fit_stagewise(&x, &y, &cfg).unwrap();
        // each resumed stage starts from the previous returned design, so its
        // pre-delete loss cannot exceed the previous stage's loss
        for w in t1.windows(2) {
            assert!(
                w[1].selection.q_before_delete <= w[0].q + 1e-10,
                "stage loss rose: {} -> {}",
                w[0].q,
                w[1].selection.q_before_delete
            );
        }
        let (d2, q2, _) = fit_stagewise(&x, &y, &cfg).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(q1.to_bits(), q2.to_bits());
    }
}
