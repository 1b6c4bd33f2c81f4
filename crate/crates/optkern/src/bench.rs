//! Benchmark harness: Latin hypercube designs, test functions,
//! irrelevant-dimension padding, metrics, and replication management.

use crate::error::{Error, Result};
use crate::model::{select_eta, EtaPoint};
use crate::stagewise::StageConfig;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::time::Instant;

/// sum_j sin(x_j) sin^{2k}(j x_j^2 / pi) on [0, pi]^p.
pub fn michalewicz(x: &[f64], k: u32) -> f64 {
    let mut total = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        let s = ((j as f64 + 1.0) * xj * xj / std::f64::consts::PI).sin();
        total += xj.sin() * s.powi(2 * k as i32);
    }
    total
}

/// Water flow rate (m^3/yr) through a borehole; expects the 8 physical
/// inputs in the order (r_w, r, T_u, H_u, T_l, H_l, L, K_w).
pub fn borehole(x: &[f64]) -> Result<f64> {
    if x.len() != 8 {
        return Err(Error::InvalidInput(format!(
            "borehole takes 8 inputs, got {}",
            x.len()
        )));
    }
    let (rw, r, tu, hu, tl, hl, l, kw) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]);
    if r <= rw {
        return Err(Error::InvalidInput(format!(
            "radius of influence {r} must exceed borehole radius {rw}"
        )));
    }
    let lnr = (r / rw).ln();
    let denom = lnr * (1.0 + 2.0 * l * tu / (lnr * rw * rw * kw) + tu / tl);
    Ok(2.0 * std::f64::consts::PI * tu * (hu - hl) / denom)
}

/// Physical ranges of the borehole inputs, in the same order the function
/// takes them.
pub const BOREHOLE_RANGES: [(f64, f64); 8] = [
    (0.05, 0.15),        // r_w
    (100.0, 50000.0),    // r
    (63070.0, 115600.0), // T_u
    (990.0, 1110.0),     // H_u
    (63.1, 116.0),       // T_l
    (700.0, 820.0),      // H_l
    (1120.0, 1680.0),    // L
    (9855.0, 12045.0),   // K_w
];

/// Names of the borehole inputs (for reporting identified columns).
pub const BOREHOLE_NAMES: [&str; 8] = ["r_w", "r", "T_u", "H_u", "T_l", "H_l", "L", "K_w"];

/// Latin hypercube flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LhsKind {
    /// Stratified sampling with independently shuffled columns.
    Random,
    /// Random start improved by swap hill-climbing on the minimum pairwise
    /// distance.
    Maximin,
}

/// n x d Latin hypercube design in [0,1]^d. Every column places exactly one
/// point in each interval [(i-1)/n, i/n).
pub fn lhs(n: usize, d: usize, seed: u64, kind: LhsKind, maximin_iters: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, d);
    for j in 0..d {
        let mut bins: Vec<usize> = (0..n).collect();
        bins.shuffle(&mut rng);
        for i in 0..n {
            x[(i, j)] = (bins[i] as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    if kind == LhsKind::Maximin && n > 1 && d > 0 {
        maximin_improve(&mut x, &mut rng, maximin_iters);
    }
    x
}

/// Swap hill-climbing: propose exchanging two entries within one column and
/// keep the swap only when the minimum pairwise distance improves. Swapping
/// within a column preserves the stratification.
fn maximin_improve(x: &mut DMatrix<f64>, rng: &mut ChaCha8Rng, iters: usize) {
    let n = x.nrows();
    let d = x.ncols();
    let mut dist2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for c in 0..d {
                let diff = x[(i, c)] - x[(j, c)];
                s += diff * diff;
            }
            dist2[(i, j)] = s;
            dist2[(j, i)] = s;
        }
    }
    let min_of = |m: &DMatrix<f64>| {
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                if m[(i, j)] < best {
                    best = m[(i, j)];
                }
            }
        }
        best
    };
    let mut current_min = min_of(&dist2);

    for _ in 0..iters {
        let c = rng.gen_range(0..d);
        let r1 = rng.gen_range(0..n);
        let mut r2 = rng.gen_range(0..n);
        if r1 == r2 {
            r2 = (r2 + 1) % n;
        }
        let (v1, v2) = (x[(r1, c)], x[(r2, c)]);
        x[(r1, c)] = v2;
        x[(r2, c)] = v1;

        let mut updates: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * n);
        for &r in &[r1, r2] {
            for other in 0..n {
                if other == r || (r == r2 && other == r1) {
                    continue;
                }
                let mut s = 0.0;
                for cc in 0..d {
                    let diff = x[(r, cc)] - x[(other, cc)];
                    s += diff * diff;
                }
                updates.push((r, other, s));
            }
        }
        let saved: Vec<(usize, usize, f64)> = updates
            .iter()
            .map(|&(i, j, _)| (i, j, dist2[(i, j)]))
            .collect();
        for &(i, j, s) in &updates {
            dist2[(i, j)] = s;
            dist2[(j, i)] = s;
        }
        let new_min = min_of(&dist2);
        if new_min > current_min {
            current_min = new_min;
        } else {
            // revert
            x[(r1, c)] = v1;
            x[(r2, c)] = v2;
            for &(i, j, s) in &saved {
                dist2[(i, j)] = s;
                dist2[(j, i)] = s;
            }
        }
    }
}

/// Minimum pairwise Euclidean distance of the design rows.
pub fn min_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for c in 0..x.ncols() {
                let diff = x[(i, c)] - x[(j, c)];
                s += diff * diff;
            }
            best = best.min(s);
        }
    }
    best.sqrt()
}

/// Test RMSE divided by the RMSE of the constant-mean predictor.
pub fn standard_rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    let m = y_true.len();
    if m < 2 || y_pred.len() != m {
        return Err(Error::InvalidInput(format!(
            "standardized RMSE needs matching vectors of length >= 2, got {} and {}",
            m,
            y_pred.len()
        )));
    }
    let mean = y_true.iter().sum::<f64>() / m as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, p) in y_true.iter().zip(y_pred) {
        num += (t - p) * (t - p);
        den += (t - mean) * (t - mean);
    }
    if den == 0.0 {
        return Err(Error::InvalidInput(
            "response is constant; baseline RMSE is zero".into(),
        ));
    }
    Ok((num / m as f64).sqrt() / (den / m as f64).sqrt())
}

/// False positives (identified but not true) and false negatives (true but
/// missed).
pub fn fp_fn(identified: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> (usize, usize) {
    let fp = identified.difference(truth).count();
    let fn_ = truth.difference(identified).count();
    (fp, fn_)
}

/// The test function driving a synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum BenchFunction {
    /// Additive sine product on [0, pi]^p with steepness exponent 2k.
    Michalewicz { k: u32 },
    /// The 8-input water-flow model on its physical ranges.
    Borehole,
    /// Sum of the active coordinates on [0,1]^p; a smoke-test target.
    Linear,
}

impl BenchFunction {
    /// Native range of active column `i`.
    fn range(&self, i: usize) -> (f64, f64) {
        match self {
            BenchFunction::Michalewicz { .. } => (0.0, std::f64::consts::PI),
            BenchFunction::Borehole => BOREHOLE_RANGES[i],
            BenchFunction::Linear => (0.0, 1.0),
        }
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            BenchFunction::Michalewicz { k } => Ok(michalewicz(x, *k)),
            BenchFunction::Borehole => borehole(x),
            BenchFunction::Linear => Ok(x.iter().sum()),
        }
    }

    fn check_p(&self, p: usize) -> Result<()> {
        match self {
            BenchFunction::Borehole if p != 8 => Err(Error::InvalidConfig(format!(
                "the borehole function has exactly 8 active inputs, got p={p}"
            ))),
            _ if p == 0 => Err(Error::InvalidConfig("p must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

/// Configuration of one synthetic benchmark experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub function: BenchFunction,
    /// Total input dimension; the d - p unused columns act as irrelevant
    /// variables.
    pub d: usize,
    /// Number of active columns.
    pub p: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub replications: usize,
    pub seed: u64,
    pub stage: StageConfig,
    pub eta_grid: Vec<f64>,
    pub maximin_iters: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.function.check_p(self.p)?;
        if self.p > self.d {
            return Err(Error::InvalidConfig(format!(
                "p={} exceeds d={}",
                self.p, self.d
            )));
        }
        if self.n_train < 2 {
            return Err(Error::InvalidConfig("n_train must be at least 2".into()));
        }
        if self.n_test < 2 {
            return Err(Error::InvalidConfig("n_test must be at least 2".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "replications must be at least 1".into(),
            ));
        }
        if self.eta_grid.is_empty() {
            return Err(Error::InvalidConfig("eta grid must be non-empty".into()));
        }
        self.stage.validate()
    }
}

/// Metrics from one successful replication.
#[derive(Debug, Clone)]
pub struct RepMetrics {
    pub srmse: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub best_eta: f64,
    pub active_columns: BTreeSet<usize>,
    /// Columns carrying the test function in this replication (1-based).
    pub true_columns: BTreeSet<usize>,
    /// Column (1-based) assigned to each function slot, in slot order.
    pub slot_columns: Vec<usize>,
    pub seconds: f64,
}

/// Per-replication outcomes plus aggregates over the successful ones.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub reps: Vec<std::result::Result<RepMetrics, String>>,
    pub srmse_mean: f64,
    pub srmse_sd: f64,
    pub srmse_median: f64,
    pub fp_mean: f64,
    pub fn_mean: f64,
    pub failures: usize,
    pub total_seconds: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Stream-separating seed derivation so designs, column choice, and the
/// selector each get independent deterministic randomness.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Run the replicated experiment: per replication, build a maximin-LHS
/// training design and a random-LHS test design in [0,1]^d, pick p active
/// columns at random, scale them to the function's native ranges, evaluate
/// the response, fit with nugget selection, and score.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricsReport> {
    spec.validate()?;
    let started = Instant::now();
    let reps: Vec<std::result::Result<RepMetrics, String>> = (0..spec.replications)
        .into_par_iter()
        .map(|b| run_replication(spec, b as u64).map_err(|e| e.to_string()))
        .collect();

    let good: Vec<&RepMetrics> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    let srmses: Vec<f64> = good.iter().map(|r| r.srmse).collect();
    let (srmse_mean, srmse_sd) = mean_sd(&srmses);
    let fp_mean = if good.is_empty() {
        f64::NAN
    } else {
        good.iter().map(|r| r.false_positives as f64).sum::<f64>() / good.len() as f64
    };
    let fn_mean = if good.is_empty() {
        f64::NAN
    } else {
        good.iter().map(|r| r.false_negatives as f64).sum::<f64>() / good.len() as f64
    };
    Ok(MetricsReport {
        failures: reps.iter().filter(|r| r.is_err()).count(),
        srmse_mean,
        srmse_sd,
        srmse_median: median(&srmses),
        fp_mean,
        fn_mean,
        reps,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

fn run_replication(spec: &ExperimentSpec, b: u64) -> Result<RepMetrics> {
    let rep_started = Instant::now();
    let seed_b = derive_seed(spec.seed, b);
    let train = lhs(
        spec.n_train,
        spec.d,
        derive_seed(seed_b, 1),
        LhsKind::Maximin,
        spec.maximin_iters,
    );
    let test = lhs(
        spec.n_test,
        spec.d,
        derive_seed(seed_b, 2),
        LhsKind::Random,
        0,
    );

    // choose the active columns (1-based for reporting)
    let mut cols: Vec<usize> = (0..spec.d).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed_b, 3));
    cols.shuffle(&mut rng);
    let active: Vec<usize> = cols[..spec.p].to_vec();
    let truth: BTreeSet<usize> = active.iter().map(|c| c + 1).collect();

    let eval_rows = |x: &DMatrix<f64>| -> Result<DVector<f64>> {
        let mut y = DVector::zeros(x.nrows());
        for i in 0..x.nrows() {
            let phys: Vec<f64> = active
                .iter()
                .enumerate()
                .map(|(slot, &c)| {
                    let (lo, hi) = spec.function.range(slot);
                    lo + x[(i, c)] * (hi - lo)
                })
                .collect();
            y[i] = spec.function.eval(&phys)?;
        }
        Ok(y)
    };
    let y_train = eval_rows(&train)?;
    let y_test = eval_rows(&test)?;

    let mut stage = spec.stage.clone();
    stage.selector.seed = derive_seed(seed_b, 4);
    let selection = select_eta(&train, &y_train, &spec.eta_grid, &stage)?;
    let model = selection.best_model;

    let preds = model.predict_rows(&test)?;
    let pred_means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    let y_true: Vec<f64> = y_test.iter().copied().collect();
    let srmse = standard_rmse(&y_true, &pred_means)?;

    let identified = model.active_variables();
    let (fp, fn_) = fp_fn(&identified, &truth);

    Ok(RepMetrics {
        srmse,
        false_positives: fp,
        false_negatives: fn_,
        best_eta: selection.best_eta,
        active_columns: identified,
        true_columns: truth,
        slot_columns: active.iter().map(|c| c + 1).collect(),
        seconds: rep_started.elapsed().as_secs_f64(),
    })
}

/// Dataset-driven experiment: sample train/test rows from a CSV-backed
/// dataset, append irrelevant uniform columns, and score recovery of the
/// original columns.
#[derive(Debug, Clone)]
pub struct CsvExperimentSpec {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub n_train: usize,
    pub n_test: usize,
    /// Extra irrelevant columns appended to the inputs.
    pub pad_dims: usize,
    pub replications: usize,
    pub seed: u64,
    pub stage: StageConfig,
    pub eta_grid: Vec<f64>,
}

pub fn run_csv_experiment(spec: &CsvExperimentSpec) -> Result<MetricsReport> {
    let rows = spec.x.nrows();
    if spec.n_train + spec.n_test > rows {
        return Err(Error::InvalidConfig(format!(
            "n_train + n_test = {} exceeds the {} dataset rows",
            spec.n_train + spec.n_test,
            rows
        )));
    }
    if spec.n_train < 2 || spec.n_test < 2 {
        return Err(Error::InvalidConfig(
            "train and test sizes must be at least 2".into(),
        ));
    }
    if spec.replications == 0 {
        return Err(Error::InvalidConfig(
            "replications must be at least 1".into(),
        ));
    }
    spec.stage.validate()?;
    let started = Instant::now();

    let d_orig = spec.x.ncols();
    let truth: BTreeSet<usize> = (1..=d_orig).collect();
    let reps: Vec<std::result::Result<RepMetrics, String>> = (0..spec.replications)
        .into_par_iter()
        .map(|b| -> std::result::Result<RepMetrics, String> {
            let rep_started = Instant::now();
            let seed_b = derive_seed(spec.seed, b as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed_b);
            let mut idx: Vec<usize> = (0..rows).collect();
            idx.shuffle(&mut rng);
            let train_idx = &idx[..spec.n_train];
            let test_idx = &idx[spec.n_train..spec.n_train + spec.n_test];

            let d_total = d_orig + spec.pad_dims;
            let build = |sel: &[usize], rng: &mut ChaCha8Rng| {
                let mut m = DMatrix::zeros(sel.len(), d_total);
                for (i, &r) in sel.iter().enumerate() {
                    for j in 0..d_orig {
                        m[(i, j)] = spec.x[(r, j)];
                    }
                    for j in d_orig..d_total {
                        m[(i, j)] = rng.gen::<f64>();
                    }
                }
                m
            };
            let x_train = build(train_idx, &mut rng);
            let x_test = build(test_idx, &mut rng);
            let y_train = DVector::from_fn(spec.n_train, |i, _| spec.y[train_idx[i]]);
            let y_test: Vec<f64> = test_idx.iter().map(|&r| spec.y[r]).collect();

            let mut stage = spec.stage.clone();
            stage.selector.seed = derive_seed(seed_b, 4);
            let selection = select_eta(&x_train, &y_train, &spec.eta_grid, &stage)
                .map_err(|e| e.to_string())?;
            let model = selection.best_model;
            let preds = model.predict_rows(&x_test).map_err(|e| e.to_string())?;
            let pred_means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
            let srmse = standard_rmse(&y_test, &pred_means).map_err(|e| e.to_string())?;
            let identified = model.active_variables();
            let (fp, fn_) = fp_fn(&identified, &truth);
            Ok(RepMetrics {
                srmse,
                false_positives: fp,
                false_negatives: fn_,
                best_eta: selection.best_eta,
                active_columns: identified,
                true_columns: truth.clone(),
                slot_columns: (1..=d_orig).collect(),
                seconds: rep_started.elapsed().as_secs_f64(),
            })
        })
        .collect();

    let good: Vec<&RepMetrics> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    let srmses: Vec<f64> = good.iter().map(|r| r.srmse).collect();
    let (srmse_mean, srmse_sd) = mean_sd(&srmses);
    let fp_mean = if good.is_empty() {
        f64::NAN
    } else {
        good.iter().map(|r| r.false_positives as f64).sum::<f64>() / good.len() as f64
    };
    let fn_mean = if good.is_empty() {
        f64::NAN
    } else {
        good.iter().map(|r| r.false_negatives as f64).sum::<f64>() / good.len() as f64
    };
    Ok(MetricsReport {
        failures: reps.iter().filter(|r| r.is_err()).count(),
        srmse_mean,
        srmse_sd,
        srmse_median: median(&srmses),
        fp_mean,
        fn_mean,
        reps,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Format the leave-one-out curve as a two-column table with the winning row
/// marked; failed grid points are labeled.
pub fn format_eta_curve(curve: &[EtaPoint], best_eta: f64) -> String {
    let mut out = String::from("eta\tloo_error\tbest\n");
    for point in curve {
        match &point.loo {
            Ok(loo) => {
                let marker = if point.eta == best_eta { "*" } else { "" };
                out.push_str(&format!("{}\t{}\t{}\n", point.eta, loo, marker));
            }
            Err(_) => {
                out.push_str(&format!("{}\tfailed\t\n", point.eta));
            }
        }
    }
    out
}

/// One record per replication plus an aggregate block, in the tab-separated
/// layout used by the comparison tables.
pub fn format_report(report: &MetricsReport, method: &str) -> String {
    let mut out = String::from("rep\tsrmse\tfp\tfn\tbest_eta\tactive\tseconds\n");
    for (i, rep) in report.reps.iter().enumerate() {
        match rep {
            Ok(m) => {
                let active: Vec<String> = m.active_columns.iter().map(|c| c.to_string()).collect();
                out.push_str(&format!(
                    "{}\t{:.6}\t{}\t{}\t{}\t{}\t{:.2}\n",
                    i + 1,
                    m.srmse,
                    m.false_positives,
                    m.false_negatives,
                    m.best_eta,
                    active.join(","),
                    m.seconds
                ));
            }
            Err(msg) => {
                out.push_str(&format!("{}\tfailed: {}\n", i + 1, msg));
            }
        }
    }
    out.push_str(&format!(
        "\nmethod\tRMSE(sd)\tFP\tFN\n{}\t{:.4}({:.4})\t{:.2}\t{:.2}\n",
        method, report.srmse_mean, report.srmse_sd, report.fp_mean, report.fn_mean
    ));
    if report.failures > 0 {
        out.push_str(&format!(
            "warning: {} failed replication(s) excluded\n",
            report.failures
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn michalewicz_analytic_points() {
        // p = 1 at pi/2: sin(pi/2) * sin^20(pi/4) = 2^-10
        let v = michalewicz(&[std::f64::consts::FRAC_PI_2], 10);
        assert!((v - 0.0009765625).abs() < 1e-15);
        assert_eq!(michalewicz(&[0.0, 0.0, 0.0], 10), 0.0);
        // frozen value from an independent straight-line evaluation
        let v = michalewicz(&[2.20, 1.57], 10);
        assert!((v - 1.801140718473825).abs() < 1e-12);
    }

    #[test]
    fn borehole_monotone_in_heads() {
        let mid: Vec<f64> = BOREHOLE_RANGES.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let base = borehole(&mid).unwrap();

        let mut up = mid.clone();
        up[3] += 10.0; // raise H_u
        assert!(borehole(&up).unwrap() > base);

        let mut down = mid.clone();
        down[5] -= 10.0; // lower H_l
        assert!(borehole(&down).unwrap() > base);
    }

    #[test]
    fn borehole_midpoint_matches_independent_oracle() {
        let mid: Vec<f64> = BOREHOLE_RANGES.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let v = borehole(&mid).unwrap();
        assert!((v - 70.87291263681894).abs() < 1e-10);
    }

    #[test]
    fn borehole_rejects_bad_radius() {
        let mut mid: Vec<f64> = BOREHOLE_RANGES.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        mid[1] = mid[0]; // r == r_w
        assert!(borehole(&mid).is_err());
        assert!(borehole(&[1.0; 7]).is_err());
    }

    #[test]
    fn lhs_single_point() {
        let x = lhs(1, 3, 7, LhsKind::Random, 0);
        for j in 0..3 {
            assert!(x[(0, j)] >= 0.0 && x[(0, j)] < 1.0);
        }
    }

    #[test]
    fn lhs_stratification_exact() {
        for kind in [LhsKind::Random, LhsKind::Maximin] {
            let n = 17;
            let x = lhs(n, 4, 99, kind, 500);
            for j in 0..4 {
                let mut bins: Vec<usize> =
                    (0..n).map(|i| (x[(i, j)] * n as f64) as usize).collect();
                bins.sort_unstable();
                let expected: Vec<usize> = (0..n).collect();
                assert_eq!(bins, expected, "column {j} broke stratification");
            }
        }
    }

    #[test]
    fn maximin_improves_on_random_start() {
        let n = 10;
        let seed = 5;
        let random = lhs(n, 2, seed, LhsKind::Random, 0);
        let improved = lhs(n, 2, seed, LhsKind::Maximin, 5000);
        assert!(min_pairwise_distance(&improved) >= min_pairwise_distance(&random));
    }

    #[test]
    fn srmse_basics() {
        let y = [0.0, 1.0, 2.0];
        assert_eq!(standard_rmse(&y, &y).unwrap(), 0.0);
        let mean = [1.0, 1.0, 1.0];
        assert!((standard_rmse(&y, &mean).unwrap() - 1.0).abs() < 1e-15);
        let pred = [0.0, 1.0, 1.0];
        assert!((standard_rmse(&y, &pred).unwrap() - 0.7071067811865475).abs() < 1e-13);
        assert!(standard_rmse(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn srmse_scale_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..20 {
            let y: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let p: Vec<f64> = y.iter().map(|v| v + rng.gen::<f64>() * 0.5).collect();
            let base = standard_rmse(&y, &p).unwrap();
            let a = 3.7;
            let bshift = -1.9;
            let ys: Vec<f64> = y.iter().map(|v| a * v + bshift).collect();
            let ps: Vec<f64> = p.iter().map(|v| a * v + bshift).collect();
            let scaled = standard_rmse(&ys, &ps).unwrap();
            assert!((base - scaled).abs() <= 1e-12, "{base} vs {scaled}");
        }
    }

    #[test]
    fn fp_fn_set_arithmetic() {
        let t: BTreeSet<usize> = [1, 2, 3].into();
        assert_eq!(fp_fn(&t, &t), (0, 0));
        assert_eq!(fp_fn(&BTreeSet::new(), &t), (0, 3));
        let ident: BTreeSet<usize> = [1, 2, 9].into();
        assert_eq!(fp_fn(&ident, &t), (1, 1));
    }

    #[test]
    fn functions_match_independent_oracles_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..100 {
            // straight-line michalewicz oracle
            let p = 1 + rng.gen_range(0..4);
            let x: Vec<f64> = (0..p)
                .map(|_| rng.gen::<f64>() * std::f64::consts::PI)
                .collect();
            let mut oracle = 0.0;
            for j in 1..=p {
                let xj = x[j - 1];
                let inner = (j as f64 * xj * xj / std::f64::consts::PI).sin();
                let mut pow = 1.0;
                for _ in 0..20 {
                    pow *= inner;
                }
                oracle += xj.sin() * pow;
            }
            let v = michalewicz(&x, 10);
            assert!((v - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));

            // term-by-term borehole oracle
            let phys: Vec<f64> = BOREHOLE_RANGES
                .iter()
                .map(|(a, b)| a + rng.gen::<f64>() * (b - a))
                .collect();
            let lnr = (phys[1] / phys[0]).ln();
            let term = 2.0 * phys[6] * phys[2] / (lnr * phys[0] * phys[0] * phys[7]);
            let oracle = 2.0 * std::f64::consts::PI * phys[2] * (phys[3] - phys[5])
                / (lnr * (1.0 + term + phys[2] / phys[4]));
            let v = borehole(&phys).unwrap();
            assert!((v - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn smoke_experiment_linear_function() {
        let mut stage = StageConfig::new(0.01);
        stage.max_dim = 1;
        let spec = ExperimentSpec {
            function: BenchFunction::Linear,
            d: 3,
            p: 1,
            n_train: 50,
            n_test: 100,
            replications: 1,
            seed: 7,
            stage,
            eta_grid: vec![0.005, 0.05],
            maximin_iters: 200,
        };
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.failures, 0);
        let rep = report.reps[0].as_ref().unwrap();
        assert!(rep.srmse <= 0.05, "srmse {}", rep.srmse);
        assert_eq!(rep.false_positives, 0);
        assert_eq!(rep.false_negatives, 0);
    }

    #[test]
    fn experiment_is_bit_reproducible() {
        let mut stage = StageConfig::new(0.05);
        stage.max_dim = 1;
        let spec = ExperimentSpec {
            function: BenchFunction::Linear,
            d: 3,
            p: 1,
            n_train: 20,
            n_test: 30,
            replications: 2,
            seed: 13,
            stage,
            eta_grid: vec![0.05],
            maximin_iters: 50,
        };
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        for (ra, rb) in a.reps.iter().zip(&b.reps) {
            let (ra, rb) = (ra.as_ref().unwrap(), rb.as_ref().unwrap());
            assert_eq!(ra.srmse.to_bits(), rb.srmse.to_bits());
            assert_eq!(ra.false_positives, rb.false_positives);
            assert_eq!(ra.false_negatives, rb.false_negatives);
            assert_eq!(ra.true_columns, rb.true_columns);
            assert_eq!(ra.active_columns, rb.active_columns);
        }
    }

    #[test]
    fn spec_validation_rejects_bad_configs() {
        let stage = StageConfig::new(0.05);
        let mut spec = ExperimentSpec {
            function: BenchFunction::Borehole,
            d: 20,
            p: 8,
            n_train: 50,
            n_test: 50,
            replications: 1,
            seed: 0,
            stage,
            eta_grid: vec![0.05],
            maximin_iters: 10,
        };
        assert!(spec.validate().is_ok());
        spec.p = 7;
        assert!(
            spec.validate().is_err(),
            "borehole with p != 8 must be rejected"
        );
        spec.p = 8;
        spec.replications = 0;
        assert!(spec.validate().is_err());
    }
}
