//! Sampled verification of the three structural assumptions behind the
//! Krasovskii passivity construction:
//!
//! * **A1** contraction of the drift: `M df/dx + df/dx^T M` negative definite,
//! * **A2** the left annihilator of `g` also annihilates `(dg/dx) w` for every direction `w`,
//! * **A3** every column of `M g(x)` is a gradient field (symmetric Jacobian).
//!
//! Checks are evaluated on a seeded uniform sample of the model's state box,
//! so a report is reproducible from `(model, seed, tolerances)`. Samples are
//! evaluated in parallel; reductions are done in sample order.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{drift_jacobian, eval_input_matrix, g_time_derivative, ControlAffineModel, StateBox};

/// Relative singular-value threshold below which `g` counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub samples: usize,
    pub probes: usize,
    pub tolerance: f64,
    pub margin_a1: f64,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            samples: 1000,
            probes: 8,
            tolerance: 1e-8,
            margin_a1: 0.0,
            seed: 0,
        }
    }
}

/// Deterministic uniform sample of a state box.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub seed: u64,
    pub points: Vec<DVector<f64>>,
}

impl SampleSet {
    pub fn new(domain: &StateBox, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..count).map(|_| domain.sample(&mut rng)).collect();
        SampleSet { seed, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `probes` random unit directions per sample, drawn from a stream
    /// independent of the sample points.
    fn probe_directions(&self, n: usize, probes: usize) -> Vec<Vec<DVector<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let sphere = StateBox::uniform(n, -1.0, 1.0).expect("unit box");
        self.points
            .iter()
            .map(|_| {
                (0..probes)
                    .map(|_| loop {
                        let w = sphere.sample(&mut rng);
                        let norm = w.norm();
                        if norm > 1e-3 {
                            break w / norm;
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Report {
    pub pass: bool,
    /// Largest eigenvalue of `M df/dx + df/dx^T M` over the samples.
    pub worst_eig: Option<f64>,
    pub at: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2Report {
    pub pass: bool,
    /// Largest `|g_perp (dg/dx) w|` entry over samples and probe directions.
    pub worst_residual: Option<f64>,
    pub at: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A3Report {
    pub pass: bool,
    /// Largest `|J - J^T|` entry over samples and columns of `M g`.
    pub worst_asymmetry: Option<f64>,
    pub at: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub a1: A1Report,
    pub a2: A2Report,
    pub a3: A3Report,
    pub seed: u64,
    pub samples: usize,
    pub domain: StateBox,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.a1.pass && self.a2.pass && self.a3.pass
    }

    pub fn has_errors(&self) -> bool {
        self.a1.error.is_some() || self.a2.error.is_some() || self.a3.error.is_some()
    }
}

/// Evaluates `score` at every sample (in parallel) and returns the largest
/// value with its sample index; ties go to the lowest index.
fn worst_over<F>(samples: &SampleSet, score: F) -> Result<Option<(f64, usize)>>
where
    F: Fn(usize, &DVector<f64>) -> Result<f64> + Sync,
{
    let scores: Vec<Result<f64>> = samples
        .points
        .par_iter()
        .enumerate()
        .map(|(i, x)| score(i, x).map_err(|e| e.at_sample(x)))
        .collect();
    let mut worst: Option<(f64, usize)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if worst.is_none_or(|(w, _)| s > w) {
            worst = Some((s, i));
        }
    }
    Ok(worst)
}

fn point(samples: &SampleSet, idx: usize) -> Vec<f64> {
    samples.points[idx].iter().copied().collect()
}

/// `M df/dx + df/dx^T M` at `x`.
pub fn symmetrized_drift_jacobian<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let jac = drift_jacobian(model, x)?;
    let mj = model.metric().matrix() * jac;
    Ok(&mj + mj.transpose())
}

/// A1: passes iff the largest eigenvalue of `M df/dx + df/dx^T M` is below
/// `-margin` at every sample.
pub fn check_a1<M: ControlAffineModel + ?Sized>(
    model: &M,
    samples: &SampleSet,
    margin: f64,
) -> Result<A1Report> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("A1 check needs at least one sample".into()));
    }
    if !(margin >= 0.0) {
        return Err(Error::InvalidParameter(format!("A1 margin must be >= 0, got {margin}")));
    }
    let worst = worst_over(samples, |_, x| {
        let s = symmetrized_drift_jacobian(model, x)?;
        Ok(s.symmetric_eigenvalues().max())
    })?;
    let (eig, idx) = worst.expect("non-empty sample set");
    Ok(A1Report {
        pass: eig < -margin,
        worst_eig: Some(eig),
        at: Some(point(samples, idx)),
        error: None,
    })
}

/// Orthonormal basis of the left null space of `g` (`n x m`, full column rank),
/// returned as the rows of an `(n - m) x n` matrix.
///
/// Rows are sign-normalized so that each row's largest-magnitude entry is positive.
pub fn annihilator(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = g.shape();
    if m == 0 || m >= n {
        return Err(Error::InvalidParameter(format!(
            "annihilator needs an n x m matrix with 1 <= m < n, got {n} x {m}"
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation { what: "input matrix", coordinate: 0 });
    }
    // Zero-pad to square so the SVD returns a complete left basis.
    let mut square = DMatrix::zeros(n, n);
    square.columns_mut(0, m).copy_from(g);
    let svd = square.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma_max = svd.singular_values[order[0]];
    let sigma_m = svd.singular_values[order[m - 1]];
    let ratio = if sigma_max > 0.0 { sigma_m / sigma_max } else { 0.0 };
    if ratio < RANK_TOLERANCE {
        return Err(Error::SingularInputMatrix { ratio, at: Vec::new() });
    }
    let mut perp = DMatrix::zeros(n - m, n);
    for (row, &col) in order[m..].iter().enumerate() {
        let mut v = u.column(col).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |acc, e| if e.abs() > acc.abs() { e } else { acc });
        if lead < 0.0 {
            v = -v;
        }
        perp.set_row(row, &v.transpose());
    }
    Ok(perp)
}

/// A2: passes iff `max |g_perp(x) (dg/dx) w| < tolerance` over samples and
/// `probes` random unit directions per sample.
pub fn check_a2<M: ControlAffineModel + ?Sized>(
    model: &M,
    samples: &SampleSet,
    probes: usize,
    tolerance: f64,
) -> Result<A2Report> {
    if samples.is_empty() || probes == 0 {
        return Err(Error::InvalidParameter("A2 check needs samples and probe directions".into()));
    }
    let directions = samples.probe_directions(model.state_dim(), probes);
    let worst = worst_over(samples, |i, x| {
        let g = eval_input_matrix(model, x)?;
        let perp = annihilator(&g)?;
        let mut worst = 0.0f64;
        for w in &directions[i] {
            let dg = g_time_derivative(model, x, w)?;
            worst = worst.max((&perp * dg).amax());
        }
        Ok(worst)
    })?;
    let (res, idx) = worst.expect("non-empty sample set");
    Ok(A2Report {
        pass: res < tolerance,
        worst_residual: Some(res),
        at: Some(point(samples, idx)),
        error: None,
    })
}

/// Jacobian of column `j` of `M g(x)`, for every `j`.
pub fn metric_input_jacobians<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let (n, m) = (model.state_dim(), model.input_dim());
    let metric = model.metric().matrix();
    let mut jacobians = vec![DMatrix::zeros(n, n); m];
    for k in 0..n {
        let dg = g_time_derivative(model, x, &DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }))?;
        let mdg = metric * dg;
        for (j, jac) in jacobians.iter_mut().enumerate() {
            jac.set_column(k, &mdg.column(j));
        }
    }
    Ok(jacobians)
}

/// A3: passes iff every column of `M g` has a symmetric Jacobian (within
/// `tolerance`) at every sample, i.e. each column is locally a gradient.
pub fn check_a3<M: ControlAffineModel + ?Sized>(
    model: &M,
    samples: &SampleSet,
    tolerance: f64,
) -> Result<A3Report> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("A3 check needs at least one sample".into()));
    }
    let worst = worst_over(samples, |_, x| {
        let asym = metric_input_jacobians(model, x)?
            .iter()
            .map(|j| (j - j.transpose()).amax())
            .fold(0.0f64, f64::max);
        Ok(asym)
    })?;
    let (asym, idx) = worst.expect("non-empty sample set");
    Ok(A3Report {
        pass: asym < tolerance,
        worst_asymmetry: Some(asym),
        at: Some(point(samples, idx)),
        error: None,
    })
}

/// Runs A1, A2 and A3 on one shared sample set. An evaluation error in one
/// check is recorded in its sub-report and does not stop the others.
pub fn check_all<M: ControlAffineModel + ?Sized>(model: &M, config: &CheckConfig) -> AssumptionReport {
    let samples = SampleSet::new(model.domain(), config.samples, config.seed);
    let a1 = check_a1(model, &samples, config.margin_a1).unwrap_or_else(|e| A1Report {
        pass: false,
        worst_eig: None,
        at: None,
        error: Some(e.to_string()),
    });
    let a2 = check_a2(model, &samples, config.probes, config.tolerance).unwrap_or_else(|e| A2Report {
        pass: false,
        worst_residual: None,
        at: None,
        error: Some(e.to_string()),
    });
    let a3 = check_a3(model, &samples, config.tolerance).unwrap_or_else(|e| A3Report {
        pass: false,
        worst_asymmetry: None,
        at: None,
        error: Some(e.to_string()),
    });
    AssumptionReport {
        a1,
        a2,
        a3,
        seed: config.seed,
        samples: samples.len(),
        domain: model.domain().clone(),
    }
}
