//! Cross-validation harness, metrics, sweeps and cross-fold significance maps.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{common_shape, SubjectRecord};
use crate::error::{Error, Result};
use crate::mesh::GraphLaplacian;
use crate::representation::{fit_representation, FittedRepresentation, RepresentationSpec};
use crate::trace::{fit_mfista, BetaMap, FistaConfig, RegressionDataset, RegularizationConfig};

/// Seeded partition of subject indices into folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub n_subjects: usize,
    pub seed: u64,
    /// Test indices of every fold, each sorted ascending.
    pub folds: Vec<Vec<usize>>,
}

/// Shuffles `0..n` with `seed` and deals it round-robin into `k` folds, so
/// fold sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<CvPlan> {
    if k < 2 {
        return Err(Error::config("folds", "need at least 2 folds"));
    }
    if k > n {
        return Err(Error::config("folds", format!("{k} folds for {n} subjects")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(CvPlan { n_subjects: n, seed, folds })
}

impl CvPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let test = &self.folds[fold];
        (0..self.n_subjects).filter(|i| test.binary_search(i).is_err()).collect()
    }
}

/// Mean squared error.
pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape("prediction count", y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::Undefined("mse of an empty set".into()));
    }
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y_true.len() as f64)
}

/// `1 − Σ(y − ŷ)² / Σ(y − ȳ)²`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape("prediction count", y_true.len(), y_pred.len()));
    }
    if y_true.len() < 2 {
        return Err(Error::Undefined("r² needs at least 2 observations".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let sst: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Undefined("r² of a constant target".into()));
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Arithmetic mean and standard error (`sd / √k`, `n − 1` denominator).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvOptions {
    /// Center latents (per vertex and feature) and scores with training-fold
    /// means before the regression.
    pub center: bool,
    /// Divide every latent feature by its training-fold standard deviation
    /// (pooled over subjects and vertices) so one `(alpha, eta)` suits
    /// representations of different scale.
    pub scale: bool,
    /// Worker threads for folds and grid points.
    pub jobs: usize,
    /// When nonempty, `(alpha, eta)` is picked per outer fold by an inner CV
    /// over the training subjects' latents.
    pub inner_grid: Vec<RegularizationConfig>,
    pub inner_folds: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            center: true,
            scale: true,
            jobs: 1,
            inner_grid: Vec::new(),
            inner_folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold_id: usize,
    pub test_indices: Vec<usize>,
    pub predictions: Vec<f64>,
    pub mse: f64,
    pub r2: f64,
    pub beta: BetaMap,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub regularization: RegularizationConfig,
    pub representation: FittedRepresentation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean_mse: f64,
    pub se_mse: f64,
    pub mean_r2: f64,
    pub se_r2: f64,
}

impl CvReport {
    fn from_folds(folds: Vec<FoldResult>) -> Self {
        let (mean_mse, se_mse) = mean_and_se(&folds.iter().map(|f| f.mse).collect::<Vec<_>>());
        let (mean_r2, se_r2) = mean_and_se(&folds.iter().map(|f| f.r2).collect::<Vec<_>>());
        CvReport {
            folds,
            mean_mse,
            se_mse,
            mean_r2,
            se_r2,
        }
    }

    pub fn betas(&self) -> Vec<BetaMap> {
        self.folds.iter().map(|f| f.beta.clone()).collect()
    }
}

/// Seed for fold `fold` of a plan seeded with `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training-fold affine map applied to latents and scores.
struct Centering {
    latent: Array2<f64>,
    /// per latent feature
    scale: Array1<f64>,
    score: f64,
}

impl Centering {
    fn fit(latents: &[Array2<f64>], scores: &[f64], options: &CvOptions) -> Self {
        let (m, d) = latents[0].dim();
        let mut latent = Array2::zeros((m, d));
        let mut score = 0.0;
        if options.center {
            for z in latents {
                latent += z;
            }
            latent /= latents.len() as f64;
            score = scores.iter().sum::<f64>() / scores.len() as f64;
        }
        let mut scale = Array1::ones(d);
        if options.scale {
            let mut sum_sq = Array1::<f64>::zeros(d);
            for z in latents {
                let c = z - &latent;
                sum_sq += &(&c * &c).sum_axis(Axis(0));
            }
            let count = (latents.len() * m) as f64;
            scale = sum_sq.mapv(|s| if s > 0.0 { (s / count).sqrt() } else { 1.0 });
        }
        Centering { latent, scale, score }
    }

    fn apply(&self, z: &Array2<f64>) -> Array2<f64> {
        (z - &self.latent) / &self.scale
    }
}

fn choose_regularization(
    latents: &[Array2<f64>],
    scores: &[f64],
    laplacian: &GraphLaplacian,
    fista: &FistaConfig,
    options: &CvOptions,
    seed: u64,
) -> Result<RegularizationConfig> {
    let plan = make_folds(scores.len(), options.inner_folds.min(scores.len()), seed)?;
    let mut best: Option<(f64, RegularizationConfig)> = None;
    for reg in &options.inner_grid {
        let mut errors = Vec::with_capacity(plan.n_folds());
        for (f, test) in plan.folds.iter().enumerate() {
            let train = plan.train_indices(f);
            let ds = RegressionDataset::new(
                train.iter().map(|&i| latents[i].view()),
                &train.iter().map(|&i| scores[i]).collect::<Vec<_>>(),
                laplacian,
            )?;
            let fit = fit_mfista(&ds, reg, fista, None)?;
            let pred: Vec<f64> = test
                .iter()
                .map(|&i| (fit.beta.values() * &latents[i]).sum())
                .collect();
            errors.push(mse(&test.iter().map(|&i| scores[i]).collect::<Vec<_>>(), &pred)?);
        }
        let avg = errors.iter().sum::<f64>() / errors.len() as f64;
        if best.as_ref().map_or(true, |(b, _)| avg < *b) {
            best = Some((avg, *reg));
        }
    }
    best.map(|(_, r)| r)
        .ok_or_else(|| Error::config("inner_grid", "empty"))
}

/// One outer fold: fit the representation on training subjects, encode
/// everyone, fit the regression on the training fold, score the test fold.
pub fn run_fold(
    subjects: &[SubjectRecord],
    laplacian: &GraphLaplacian,
    spec: &RepresentationSpec,
    reg: &RegularizationConfig,
    fista: &FistaConfig,
    plan: &CvPlan,
    fold: usize,
    options: &CvOptions,
) -> Result<FoldResult> {
    let seed = fold_seed(plan.seed, fold);
    let train = plan.train_indices(fold);
    let test = &plan.folds[fold];
    let train_subjects: Vec<&SubjectRecord> = train.iter().map(|&i| &subjects[i]).collect();
    let representation = fit_representation(spec, &train_subjects, seed)?;

    let train_latents = train_subjects
        .iter()
        .map(|s| representation.encode_subject(s))
        .collect::<Result<Vec<_>>>()?;
    let train_scores: Vec<f64> = train_subjects.iter().map(|s| s.score).collect();
    let c = Centering::fit(&train_latents, &train_scores, options);
    let centred: Vec<Array2<f64>> = train_latents.iter().map(|z| c.apply(z)).collect();
    let centred_scores: Vec<f64> = train_scores.iter().map(|y| y - c.score).collect();

    let reg = if options.inner_grid.is_empty() {
        *reg
    } else {
        choose_regularization(&centred, &centred_scores, laplacian, fista, options, seed)?
    };
    let ds = RegressionDataset::new(centred.iter().map(|z| z.view()), &centred_scores, laplacian)?;
    let fit = fit_mfista(&ds, &reg, &FistaConfig { seed, ..*fista }, None)?;

    let predictions = test
        .iter()
        .map(|&i| {
            let z = c.apply(&representation.encode_subject(&subjects[i])?);
            Ok(c.score + (fit.beta.values() * &z).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    let truth: Vec<f64> = test.iter().map(|&i| subjects[i].score).collect();
    Ok(FoldResult {
        fold_id: fold,
        test_indices: test.clone(),
        mse: mse(&truth, &predictions)?,
        r2: r_squared(&truth, &predictions)?,
        predictions,
        beta: fit.beta,
        objective_trace: fit.objective_trace,
        converged: fit.converged,
        regularization: reg,
        representation,
    })
}

fn check_inputs(subjects: &[SubjectRecord], laplacian: &GraphLaplacian, plan: &CvPlan) -> Result<()> {
    let (m, _, _) = common_shape(subjects)?;
    if m != laplacian.dim() {
        return Err(Error::shape("subject rows vs laplacian", laplacian.dim(), m));
    }
    if plan.n_subjects != subjects.len() {
        return Err(Error::shape("cv plan subject count", subjects.len(), plan.n_subjects));
    }
    Ok(())
}

fn run_parallel<T: Send, F>(count: usize, jobs: usize, task: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if jobs <= 1 {
        return (0..count).map(task).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    // collect keeps index order, so results do not depend on scheduling
    pool.install(|| (0..count).into_par_iter().map(task).collect())
}

/// Full cross-validation of one configuration.
pub fn run_cv(
    subjects: &[SubjectRecord],
    laplacian: &GraphLaplacian,
    spec: &RepresentationSpec,
    reg: &RegularizationConfig,
    fista: &FistaConfig,
    plan: &CvPlan,
    options: &CvOptions,
) -> Result<CvReport> {
    check_inputs(subjects, laplacian, plan)?;
    let folds = run_parallel(plan.n_folds(), options.jobs, |f| {
        log::info!("fold {}/{}", f + 1, plan.n_folds());
        run_fold(subjects, laplacian, spec, reg, fista, plan, f, options)
    })?;
    Ok(CvReport::from_folds(folds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    pub representation: RepresentationSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub point: GridPoint,
    pub report: CvReport,
}

/// `run_cv` for every grid point; all (point, fold) jobs share one pool.
pub fn sweep(
    grid: &[GridPoint],
    subjects: &[SubjectRecord],
    laplacian: &GraphLaplacian,
    reg: &RegularizationConfig,
    fista: &FistaConfig,
    plan: &CvPlan,
    options: &CvOptions,
) -> Result<Vec<SweepEntry>> {
    if grid.is_empty() {
        return Err(Error::config("grid", "sweep grid is empty"));
    }
    check_inputs(subjects, laplacian, plan)?;
    grid.iter().try_for_each(|p| p.representation.validate())?;
    let k = plan.n_folds();
    let mut results = run_parallel(grid.len() * k, options.jobs, |job| {
        let (g, f) = (job / k, job % k);
        log::info!("grid point {} ({}), fold {}/{k}", g + 1, grid[g].label, f + 1);
        run_fold(subjects, laplacian, &grid[g].representation, reg, fista, plan, f, options)
    })?
    .into_iter();
    Ok(grid
        .iter()
        .map(|point| SweepEntry {
            point: point.clone(),
            report: CvReport::from_folds(results.by_ref().take(k).collect()),
        })
        .collect())
}

fn split_fields(spec: &RepresentationSpec) -> (String, String) {
    match spec.enc_split() {
        Some((t, r)) => (t.to_string(), r.to_string()),
        None => (String::new(), String::new()),
    }
}

/// `config,enc,enc_t,enc_r,fold,mse,r2`, one row per (entry, fold).
pub fn results_csv(entries: &[SweepEntry]) -> String {
    let mut out = String::from("config,enc,enc_t,enc_r,fold,mse,r2\n");
    for e in entries {
        let (t, r) = split_fields(&e.point.representation);
        let enc = e.point.representation.latent_dim();
        for f in &e.report.folds {
            writeln!(out, "{},{enc},{t},{r},{},{:?},{:?}", e.point.label, f.fold_id, f.mse, f.r2).unwrap();
        }
    }
    out
}

/// Per-entry mean and standard error of the fold metrics.
pub fn summary_csv(entries: &[SweepEntry]) -> String {
    let mut out = String::from("config,enc,enc_t,enc_r,folds,mse_mean,mse_se,r2_mean,r2_se\n");
    for e in entries {
        let (t, r) = split_fields(&e.point.representation);
        let rep = &e.report;
        writeln!(
            out,
            "{},{},{t},{r},{},{:?},{:?},{:?},{:?}",
            e.point.label,
            e.point.representation.latent_dim(),
            rep.folds.len(),
            rep.mean_mse,
            rep.se_mse,
            rep.mean_r2,
            rep.se_r2
        )
        .unwrap();
    }
    out
}

/// Vertices whose row is nonzero (`‖β_j‖₂ > tol`) in at least
/// `min_fraction` of the fold maps.
pub fn stable_support(betas: &[BetaMap], tol: f64, min_fraction: f64) -> Vec<usize> {
    let Some(first) = betas.first() else {
        return Vec::new();
    };
    let mut count = vec![0usize; first.shape().0];
    for b in betas {
        for j in b.support(tol) {
            count[j] += 1;
        }
    }
    let need = min_fraction * betas.len() as f64;
    (0..count.len()).filter(|&j| count[j] as f64 >= need).collect()
}

/// F1 of an estimated vertex set against the true one. Two empty sets score 1.
pub fn support_f1(estimated: &[usize], truth: &[usize]) -> f64 {
    if estimated.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let hits = estimated.iter().filter(|v| truth.contains(v)).count() as f64;
    2.0 * hits / (estimated.len() + truth.len()) as f64
}

/// How a fold's `d`-vector at one vertex is reduced to the scalar that is
/// t-tested across folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapReduction {
    /// `‖β_j‖₂ · sign(mean entry)`; a zero mean counts as positive.
    #[default]
    SignedNorm,
    Mean,
    /// The entry of largest magnitude, with its sign.
    MaxAbs,
}

pub const DEFAULT_T_CRIT: f64 = 2.45;

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceMap {
    pub t: Vec<f64>,
    pub threshold: f64,
    /// `|t| > threshold`
    pub mask: Vec<bool>,
}

impl SignificanceMap {
    pub fn significant_vertices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect()
    }

    /// `vertex,t,significant`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,t,significant\n");
        for (j, (t, s)) in self.t.iter().zip(&self.mask).enumerate() {
            writeln!(out, "{j},{t:?},{}", u8::from(*s)).unwrap();
        }
        out
    }

    /// `m × 1` matrix of t values.
    pub fn t_matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.t.len(), 1), self.t.clone()).expect("column vector")
    }
}

fn reduce_row(row: ndarray::ArrayView1<f64>, reduction: MapReduction) -> f64 {
    match reduction {
        MapReduction::SignedNorm => {
            let norm = row.dot(&row).sqrt();
            if row.sum() < 0.0 { -norm } else { norm }
        }
        MapReduction::Mean => row.mean().unwrap_or(0.0),
        MapReduction::MaxAbs => row.iter().copied().fold(0.0, |b, v| if v.abs() > b.abs() { v } else { b }),
    }
}

/// Per-vertex one-sample t-test of the reduced fold maps.
///
/// Zero cross-fold variance gives `t = ±∞` (sign of the mean) or `0` when the
/// mean is zero too. Scalars are sorted before summation, so the result does
/// not depend on fold order.
pub fn significance_map(betas: &[BetaMap], t_crit: f64, reduction: MapReduction) -> Result<SignificanceMap> {
    if betas.len() < 2 {
        return Err(Error::invalid("fold maps", format!("need at least 2, got {}", betas.len())));
    }
    let shape = betas[0].shape();
    if let Some(b) = betas.iter().find(|b| b.shape() != shape) {
        return Err(Error::shape("fold map", format!("{shape:?}"), format!("{:?}", b.shape())));
    }
    let k = betas.len() as f64;
    let t: Vec<f64> = (0..shape.0)
        .map(|j| {
            let mut s: Vec<f64> = betas
                .iter()
                .map(|b| reduce_row(b.values().index_axis(Axis(0), j), reduction))
                .collect();
            s.sort_by(f64::total_cmp);
            let mean = s.iter().sum::<f64>() / k;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            if var > 0.0 {
                mean / (var.sqrt() / k.sqrt())
            } else if mean == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(mean)
            }
        })
        .collect();
    let mask = t.iter().map(|v| v.abs() > t_crit).collect();
    Ok(SignificanceMap {
        t,
        threshold: t_crit,
        mask,
    })
}
