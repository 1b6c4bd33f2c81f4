//! Fitted models: conditional mean/variance prediction, leave-one-out
//! cross-validation, nugget selection, and persistence.
//!
//! The fitting entry points here own the data transforms: inputs are mapped
//! affinely to [0,1] per dimension and the response is centered by its
//! training mean. The stagewise learner below them always sees transformed
//! data.

use crate::design::{Design, SolveState};
use crate::error::{Error, Result};
use crate::kernel::{kernel_cross, KernelSpec};
use crate::stagewise::{design_loss, fit_stagewise, StageConfig, StageTrace};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Per-dimension affine map of raw inputs onto [0,1], fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScale {
    pub mins: Vec<f64>,
    pub ranges: Vec<f64>,
}

impl InputScale {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let d = x.ncols();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for j in 0..d {
            for i in 0..x.nrows() {
                mins[j] = mins[j].min(x[(i, j)]);
                maxs[j] = maxs[j].max(x[(i, j)]);
            }
        }
        let ranges = mins
            .iter()
            .zip(&maxs)
            .map(|(lo, hi)| {
                let r = hi - lo;
                if r > 0.0 {
                    r
                } else {
                    1.0
                } // constant column maps to 0
            })
            .collect();
        Self { mins, ranges }
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} input columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for j in 0..self.dim() {
            for i in 0..x.nrows() {
                out[(i, j)] = (x[(i, j)] - self.mins[j]) / self.ranges[j];
            }
        }
        Ok(out)
    }

    pub fn apply_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} coordinates, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(x.iter()
            .zip(self.mins.iter().zip(&self.ranges))
            .map(|(v, (lo, r))| (v - lo) / r)
            .collect())
    }
}

/// A prediction at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    /// True when the scaled query fell outside [0,1] in some dimension
    /// (extrapolation beyond the training hull).
    pub extrapolated: bool,
}

/// The persisted prediction artifact: design, coefficients, nugget, scale
/// estimate, and the training transforms.
#[derive(Debug, Clone)]
pub struct FittedModel {
    design: Design,
    coefficients: DVector<f64>,
    eta: f64,
    tau2_hat: f64,
    /// Training inputs already mapped to [0,1].
    train_points: DMatrix<f64>,
    input_scale: InputScale,
    y_center: f64,
}

impl FittedModel {
    /// Assemble a model from a finished design and its solve state.
    pub fn from_parts(
        design: Design,
        state: &SolveState,
        x_scaled: DMatrix<f64>,
        y_centered: &DVector<f64>,
        input_scale: InputScale,
        y_center: f64,
    ) -> Result<Self> {
        let n = x_scaled.nrows();
        if state.n() != n || y_centered.len() != n {
            return Err(Error::InvalidInput(
                "model parts have mismatched sizes".into(),
            ));
        }
        let tau2_hat = y_centered.dot(&state.a) / n as f64;
        Ok(Self {
            design,
            coefficients: state.a.clone(),
            eta: state.eta,
            tau2_hat: tau2_hat.max(0.0),
            train_points: x_scaled,
            input_scale,
            y_center,
        })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tau2_hat(&self) -> f64 {
        self.tau2_hat
    }

    pub fn input_scale(&self) -> &InputScale {
        &self.input_scale
    }

    pub fn y_center(&self) -> f64 {
        self.y_center
    }

    pub fn train_points(&self) -> &DMatrix<f64> {
        &self.train_points
    }

    pub fn dim(&self) -> usize {
        self.input_scale.dim()
    }

    /// Active variables: every dimension referenced by a support kernel.
    pub fn active_variables(&self) -> std::collections::BTreeSet<usize> {
        crate::stagewise::active_variables(&self.design)
    }

    /// Mixture kernel correlations between a scaled query and the training
    /// points.
    fn cross_correlations(&self, q: &[f64]) -> Result<DVector<f64>> {
        let n = self.train_points.nrows();
        let mut k = DVector::zeros(n);
        for (spec, &w) in self.design.support().iter().zip(self.design.weights()) {
            let col = kernel_cross(spec, &self.train_points, q)?;
            for i in 0..n {
                k[i] += w * col[i];
            }
        }
        Ok(k)
    }

    /// Conditional mean and variance at a raw-unit query point.
    pub fn predict(&self, x_raw: &[f64]) -> Result<Prediction> {
        if x_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "query point has non-finite coordinates".into(),
            ));
        }
        let q = self.input_scale.apply_point(x_raw)?;
        let extrapolated = q.iter().any(|v| *v < 0.0 || *v > 1.0);
        let k = self.cross_correlations(&q)?;
        let mean = self.y_center + k.dot(&self.coefficients);

        // variance needs (K + eta I)^-1 k; rebuild the regularized solve
        let state = self.solve_state()?;
        let sol = state.solve(&k);
        let variance = (self.tau2_hat * (1.0 - k.dot(&sol))).max(0.0);
        Ok(Prediction {
            mean,
            variance,
            extrapolated,
        })
    }

    pub fn predict_mean(&self, x_raw: &[f64]) -> Result<f64> {
        if x_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "query point has non-finite coordinates".into(),
            ));
        }
        let q = self.input_scale.apply_point(x_raw)?;
        let k = self.cross_correlations(&q)?;
        Ok(self.y_center + k.dot(&self.coefficients))
    }

    pub fn predict_variance(&self, x_raw: &[f64]) -> Result<f64> {
        Ok(self.predict(x_raw)?.variance)
    }

    /// Mean predictions for many query rows; the regularized factor is built
    /// once.
    pub fn predict_rows(&self, x_raw: &DMatrix<f64>) -> Result<Vec<Prediction>> {
        let state = self.solve_state()?;
        (0..x_raw.nrows())
            .map(|i| {
                let row: Vec<f64> = x_raw.row(i).iter().copied().collect();
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "row {} has non-finite values",
                        i + 1
                    )));
                }
                let q = self.input_scale.apply_point(&row)?;
                let extrapolated = q.iter().any(|v| *v < 0.0 || *v > 1.0);
                let k = self.cross_correlations(&q)?;
                let mean = self.y_center + k.dot(&self.coefficients);
                let sol = state.solve(&k);
                let variance = (self.tau2_hat * (1.0 - k.dot(&sol))).max(0.0);
                Ok(Prediction {
                    mean,
                    variance,
                    extrapolated,
                })
            })
            .collect()
    }

    /// Factor K + eta I for the variance term. The response plays no role
    /// here, so the state is built against a zero vector.
    fn solve_state(&self) -> Result<SolveState> {
        let zero = DVector::zeros(self.train_points.nrows());
        design_loss(&self.design, &self.train_points, &zero, self.eta)
    }
}

/// Fit on raw data at a fixed nugget: scales inputs, centers the response,
/// runs the stagewise learner, and assembles the model.
pub fn fit(
    x_raw: &DMatrix<f64>,
    y_raw: &DVector<f64>,
    cfg: &StageConfig,
) -> Result<(FittedModel, Vec<StageTrace>)> {
    if x_raw.nrows() != y_raw.len() {
        return Err(Error::InvalidInput(format!(
            "{} input rows but {} responses",
            x_raw.nrows(),
            y_raw.len()
        )));
    }
    if x_raw.nrows() < 2 {
        return Err(Error::InvalidInput("need at least 2 training rows".into()));
    }
    if x_raw.iter().any(|v| !v.is_finite()) || y_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "training data contains non-finite values".into(),
        ));
    }
    let scale = InputScale::fit(x_raw);
    let x = scale.apply_matrix(x_raw)?;
    let y_center = y_raw.mean();
    let y = y_raw.map(|v| v - y_center);

    let (design, _, traces) = fit_stagewise(&x, &y, cfg)?;
    let state = design_loss(&design, &x, &y, cfg.selector.eta)?;
    let model = FittedModel::from_parts(design, &state, x, &y, scale, y_center)?;
    Ok((model, traces))
}

/// Per-point leave-one-out residuals of a design at a given nugget, via the
/// closed-form shortcut e_i = a_i / [(K + eta I)^-1]_ii from a single
/// factorization.
pub fn loo_residuals(
    design: &Design,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    eta: f64,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "leave-one-out needs at least 3 rows, got {n}"
        )));
    }
    let state = design_loss(design, x, y, eta)?;
    let inv = state.inverse();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let dii = inv[(i, i)];
        if dii <= 0.0 || !dii.is_finite() {
            return Err(Error::NumericalSingularity(format!(
                "non-positive diagonal {dii} in the inverse at row {i}"
            )));
        }
        out.push(state.a[i] / dii);
    }
    Ok(out)
}

/// Mean squared leave-one-out residual.
pub fn loo_cv_error(design: &Design, x: &DMatrix<f64>, y: &DVector<f64>, eta: f64) -> Result<f64> {
    let residuals = loo_residuals(design, x, y, eta)?;
    Ok(residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64)
}

/// One grid point of the nugget-selection curve.
#[derive(Debug, Clone)]
pub struct EtaPoint {
    pub eta: f64,
    /// Leave-one-out error, or the failure message for this grid point.
    pub loo: std::result::Result<f64, String>,
}

/// Result of nugget selection over a grid.
pub struct EtaSelection {
    pub best_eta: f64,
    pub curve: Vec<EtaPoint>,
    pub best_model: FittedModel,
    pub best_traces: Vec<StageTrace>,
}

/// The default nugget grid used for cross-validation.
pub fn default_eta_grid() -> Vec<f64> {
    vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.5]
}

/// Refit the whole stagewise pipeline at every nugget in the grid, score each
/// by leave-one-out error, and return the argmin (ties toward the smaller
/// nugget). Failed grid points are recorded and skipped.
pub fn select_eta(
    x_raw: &DMatrix<f64>,
    y_raw: &DVector<f64>,
    eta_grid: &[f64],
    cfg: &StageConfig,
) -> Result<EtaSelection> {
    if eta_grid.is_empty() {
        return Err(Error::InvalidConfig("eta grid must be non-empty".into()));
    }
    let mut grid = eta_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

    type FitOutcome = std::result::Result<(FittedModel, Vec<StageTrace>, f64), String>;
    let outcomes: Vec<FitOutcome> = grid
        .par_iter()
        .map(|&eta| {
            let mut c = cfg.clone();
            c.selector.eta = eta;
            let fitted = fit(x_raw, y_raw, &c).map_err(|e| e.to_string())?;
            let scale = fitted.0.input_scale().clone();
            let x = scale.apply_matrix(x_raw).map_err(|e| e.to_string())?;
            let y = y_raw.map(|v| v - fitted.0.y_center());
            let loo = loo_cv_error(fitted.0.design(), &x, &y, eta).map_err(|e| e.to_string())?;
            Ok((fitted.0, fitted.1, loo))
        })
        .collect();

    let mut curve = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    let mut models: Vec<Option<(FittedModel, Vec<StageTrace>)>> = Vec::with_capacity(grid.len());
    for (i, (eta, outcome)) in grid.iter().zip(outcomes).enumerate() {
        match outcome {
            Ok((model, traces, loo)) => {
                curve.push(EtaPoint {
                    eta: *eta,
                    loo: Ok(loo),
                });
                models.push(Some((model, traces)));
                // strict comparison plus ascending grid order break ties
                // toward the smaller eta
                if best.is_none_or(|(_, b)| loo < b) {
                    best = Some((i, loo));
                }
            }
            Err(msg) => {
                curve.push(EtaPoint {
                    eta: *eta,
                    loo: Err(msg),
                });
                models.push(None);
            }
        }
    }

    let (idx, _) = best
        .ok_or_else(|| Error::NumericalSingularity("every eta grid point failed to fit".into()))?;
    let (best_model, best_traces) = models[idx].take().expect("winning grid point has a model");
    Ok(EtaSelection {
        best_eta: grid[idx],
        curve,
        best_model,
        best_traces,
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Current model document version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SupportEntry {
    dims: Vec<usize>,
    theta: f64,
    weight: f64,
}

/// On-disk layout of a fitted model. JSON keeps every float bit-faithful
/// through a save/load round trip.
#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    input_scale: InputScale,
    y_center: f64,
    eta: f64,
    tau2_hat: f64,
    support: Vec<SupportEntry>,
    train_points: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
}

impl FittedModel {
    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            input_scale: self.input_scale.clone(),
            y_center: self.y_center,
            eta: self.eta,
            tau2_hat: self.tau2_hat,
            support: self
                .design
                .support()
                .iter()
                .zip(self.design.weights())
                .map(|(s, &w)| SupportEntry {
                    dims: s.dims().to_vec(),
                    theta: s.theta(),
                    weight: w,
                })
                .collect(),
            train_points: (0..self.train_points.nrows())
                .map(|i| self.train_points.row(i).iter().copied().collect())
                .collect(),
            coefficients: self.coefficients.iter().copied().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    /// Parse and validate a model document. Never panics on malformed input.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)
            .map_err(|e| Error::ModelDoc(format!("parse failure: {e}")))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelDoc(format!(
                "unsupported format version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let d = doc.input_scale.mins.len();
        if doc.input_scale.ranges.len() != d || d == 0 {
            return Err(Error::ModelDoc("inconsistent input scale".into()));
        }
        if doc
            .input_scale
            .ranges
            .iter()
            .any(|r| !(r.is_finite() && *r > 0.0))
            || doc.input_scale.mins.iter().any(|m| !m.is_finite())
        {
            return Err(Error::ModelDoc(
                "input scale values must be finite with positive ranges".into(),
            ));
        }
        if !(doc.y_center.is_finite() && doc.eta.is_finite() && doc.eta > 0.0) {
            return Err(Error::ModelDoc(
                "center and eta must be finite (eta positive)".into(),
            ));
        }
        if !(doc.tau2_hat.is_finite() && doc.tau2_hat >= 0.0) {
            return Err(Error::ModelDoc(
                "tau2 must be finite and nonnegative".into(),
            ));
        }
        if doc.support.is_empty() {
            return Err(Error::ModelDoc("support must be non-empty".into()));
        }
        let mut specs = Vec::with_capacity(doc.support.len());
        let mut weights = Vec::with_capacity(doc.support.len());
        for entry in &doc.support {
            let spec = KernelSpec::new(entry.dims.clone(), entry.theta)
                .map_err(|e| Error::ModelDoc(format!("bad support kernel: {e}")))?;
            if spec.max_dim() > d {
                return Err(Error::ModelDoc(format!(
                    "support kernel references dimension {} beyond input dimension {d}",
                    spec.max_dim()
                )));
            }
            specs.push(spec);
            weights.push(entry.weight);
        }
        let design =
            Design::new(specs, weights).map_err(|e| Error::ModelDoc(format!("bad design: {e}")))?;

        let n = doc.train_points.len();
        if n == 0 || doc.coefficients.len() != n {
            return Err(Error::ModelDoc(format!(
                "{} training points with {} coefficients",
                n,
                doc.coefficients.len()
            )));
        }
        if doc.train_points.iter().any(|row| row.len() != d) {
            return Err(Error::ModelDoc("ragged training point rows".into()));
        }
        if doc.train_points.iter().flatten().any(|v| !v.is_finite())
            || doc.coefficients.iter().any(|v| !v.is_finite())
        {
            return Err(Error::ModelDoc(
                "non-finite numbers in training points or coefficients".into(),
            ));
        }
        let train_points = DMatrix::from_fn(n, d, |i, j| doc.train_points[i][j]);
        Ok(Self {
            design,
            coefficients: DVector::from_vec(doc.coefficients),
            eta: doc.eta,
            tau2_hat: doc.tau2_hat,
            train_points,
            input_scale: doc.input_scale,
            y_center: doc.y_center,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
