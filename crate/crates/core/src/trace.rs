//! Trace regression `y = tr(βᵀZ) + ε` with Laplacian smoothing and
//! vertex-wise group sparsity.
//!
//! The estimator minimizes
//!
//! ```text
//! F(β) = Σ_i (y_i − tr(βᵀZ_i))²  +  (η/2)·tr(βᵀLβ)  +  α·Σ_j ‖β_j‖₂
//! ```
//!
//! where `β_j` is row `j` of `β` (the coefficients of vertex `j`). The first
//! two terms form the smooth part `f`; the group penalty is handled by its
//! proximal operator (block soft-thresholding). The solver is monotone FISTA.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::GraphLaplacian;

/// Regression coefficients, one row per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaMap(Array2<f64>);

impl BetaMap {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("beta map", "non-finite entry"));
        }
        Ok(BetaMap(values))
    }

    pub fn zeros(m: usize, d: usize) -> Self {
        BetaMap(Array2::zeros((m, d)))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// Euclidean norm of every vertex row.
    pub fn row_norms(&self) -> Array1<f64> {
        self.0.map_axis(Axis(1), |r| r.dot(&r).sqrt())
    }

    /// Vertices whose row norm exceeds `tolerance`.
    pub fn support(&self, tolerance: f64) -> Vec<usize> {
        self.row_norms()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > tolerance)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Form of the vertex-wise penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupPenalty {
    /// `α·Σ_j ‖β_j‖₂` (group lasso, sparsifying).
    #[default]
    Norm,
    /// `α·Σ_j ‖β_j‖₂²` (ridge-like, not sparsifying).
    SquaredNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationConfig {
    pub alpha: f64,
    pub eta: f64,
    #[serde(default)]
    pub penalty: GroupPenalty,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            alpha: 5e-4,
            eta: 1e-3,
            penalty: GroupPenalty::Norm,
        }
    }
}

impl RegularizationConfig {
    pub fn new(alpha: f64, eta: f64) -> Self {
        RegularizationConfig {
            alpha,
            eta,
            penalty: GroupPenalty::Norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be finite and nonnegative"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config("eta", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepPolicy {
    /// `1/L_f` from a power-iteration estimate of the smooth part's Lipschitz constant.
    #[default]
    FixedFromLipschitz,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FistaConfig {
    pub max_iters: usize,
    /// Stop once the objective decreased by less than this (relative) over
    /// the last `window` iterations.
    pub rel_tolerance: f64,
    pub window: usize,
    pub step_policy: StepPolicy,
    pub backtracking_growth: f64,
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for FistaConfig {
    fn default() -> Self {
        FistaConfig {
            max_iters: 2000,
            rel_tolerance: 1e-8,
            window: 10,
            step_policy: StepPolicy::FixedFromLipschitz,
            backtracking_growth: 2.0,
            power_iterations: 50,
            seed: 0,
        }
    }
}

impl FistaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::config("rel_tolerance", "must be positive"));
        }
        if self.window == 0 {
            return Err(Error::config("window", "must be at least 1"));
        }
        if !(self.backtracking_growth > 1.0) {
            return Err(Error::config("backtracking_growth", "must exceed 1"));
        }
        Ok(())
    }
}

/// Subjects' latent matrices (flattened into a design matrix), scores and the
/// mesh Laplacian.
#[derive(Debug, Clone)]
pub struct RegressionDataset<'a> {
    /// `n × (m·d)`; row `i` is `vec(Z_i)` in row-major order.
    design: Array2<f64>,
    scores: Array1<f64>,
    laplacian: &'a GraphLaplacian,
    m: usize,
    d: usize,
}

impl<'a> RegressionDataset<'a> {
    pub fn new<'z, I>(latents: I, scores: &[f64], laplacian: &'a GraphLaplacian) -> Result<Self>
    where
        I: IntoIterator<Item = ArrayView2<'z, f64>>,
    {
        let latents: Vec<ArrayView2<f64>> = latents.into_iter().collect();
        let first = latents
            .first()
            .ok_or_else(|| Error::invalid("regression dataset", "no subjects"))?;
        let (m, d) = first.dim();
        if latents.len() != scores.len() {
            return Err(Error::shape("score count", latents.len(), scores.len()));
        }
        if m != laplacian.dim() {
            return Err(Error::shape("latent rows vs laplacian", laplacian.dim(), m));
        }
        if d == 0 {
            return Err(Error::invalid("regression dataset", "latent dimension is zero"));
        }
        let mut design = Array2::zeros((latents.len(), m * d));
        for (i, z) in latents.iter().enumerate() {
            if z.dim() != (m, d) {
                return Err(Error::shape("latent matrix", format!("{m}×{d}"), format!("{:?}", z.dim())));
            }
            design
                .row_mut(i)
                .iter_mut()
                .zip(z.iter())
                .for_each(|(dst, &src)| *dst = src);
        }
        if design.iter().chain(scores).any(|v| !v.is_finite()) {
            return Err(Error::invalid("regression dataset", "non-finite input"));
        }
        Ok(RegressionDataset {
            design,
            scores: Array1::from(scores.to_vec()),
            laplacian,
            m,
            d,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.scores.len()
    }

    /// `(m, d)`
    pub fn latent_shape(&self) -> (usize, usize) {
        (self.m, self.d)
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn scores(&self) -> &Array1<f64> {
        &self.scores
    }

    pub fn laplacian(&self) -> &GraphLaplacian {
        self.laplacian
    }

    fn check_beta(&self, beta: &ArrayView2<f64>) -> Result<()> {
        if beta.dim() != (self.m, self.d) {
            return Err(Error::shape(
                "beta map",
                format!("{}×{}", self.m, self.d),
                format!("{:?}", beta.dim()),
            ));
        }
        Ok(())
    }

    fn flat<'b>(&self, beta: &'b ArrayView2<f64>) -> ndarray::CowArray<'b, f64, ndarray::Ix1> {
        let flat: ndarray::CowArray<f64, ndarray::Ix2> = beta.as_standard_layout();
        let len = flat.len();
        flat.into_shape_with_order(len).expect("standard layout")
    }

    /// `y − Xβ`
    fn residuals(&self, beta: &ArrayView2<f64>) -> Array1<f64> {
        &self.scores - &self.design.dot(&self.flat(beta))
    }

    /// Predicted scores for every subject in the dataset.
    pub fn predictions(&self, beta: &BetaMap) -> Result<Array1<f64>> {
        let view = beta.values().view();
        self.check_beta(&view)?;
        Ok(self.design.dot(&self.flat(&view)))
    }
}

/// `tr(βᵀZ) = Σ_{j,k} β[j,k]·Z[j,k]`.
pub fn predict(beta: &BetaMap, z: ArrayView2<f64>) -> Result<f64> {
    if beta.shape() != z.dim() {
        return Err(Error::shape(
            "latent matrix",
            format!("{:?}", beta.shape()),
            format!("{:?}", z.dim()),
        ));
    }
    Ok(Zip::from(beta.values()).and(&z).fold(0.0, |acc, &b, &x| acc + b * x))
}

fn penalty_value(beta: &ArrayView2<f64>, reg: &RegularizationConfig) -> f64 {
    if reg.alpha == 0.0 {
        return 0.0;
    }
    let sum: f64 = beta
        .rows()
        .into_iter()
        .map(|r| {
            let sq = r.dot(&r);
            match reg.penalty {
                GroupPenalty::Norm => sq.sqrt(),
                GroupPenalty::SquaredNorm => sq,
            }
        })
        .sum();
    reg.alpha * sum
}

fn smooth_value(ds: &RegressionDataset, beta: &ArrayView2<f64>, eta: f64) -> Result<f64> {
    let r = ds.residuals(beta);
    let mut value = r.dot(&r);
    if eta != 0.0 {
        value += 0.5 * eta * ds.laplacian.quadratic_form(beta.view())?;
    }
    Ok(value)
}

/// `F(β)` including the group penalty.
pub fn objective(beta: &BetaMap, ds: &RegressionDataset, reg: &RegularizationConfig) -> Result<f64> {
    let view = beta.values().view();
    ds.check_beta(&view)?;
    Ok(smooth_value(ds, &view, reg.eta)? + penalty_value(&view, reg))
}

fn gradient_of(ds: &RegressionDataset, beta: &ArrayView2<f64>, eta: f64) -> Result<Array2<f64>> {
    let r = ds.residuals(beta);
    let g = ds.design.t().dot(&r) * -2.0;
    let mut g = g
        .into_shape_with_order((ds.m, ds.d))
        .expect("design width is m·d");
    if eta != 0.0 {
        g.scaled_add(eta, &ds.laplacian.mul_mat(beta.view())?);
    }
    Ok(g)
}

/// `∇f(β) = −2·Σ_i (y_i − tr(βᵀZ_i))·Z_i + η·Lβ`.
pub fn smooth_gradient(beta: &BetaMap, ds: &RegressionDataset, eta: f64) -> Result<Array2<f64>> {
    let view = beta.values().view();
    ds.check_beta(&view)?;
    gradient_of(ds, &view, eta)
}

/// Row-wise block soft-thresholding:
/// `row_j ← row_j · max(0, 1 − threshold/‖row_j‖₂)`.
pub fn prox_group(beta: ArrayView2<f64>, threshold: f64) -> Array2<f64> {
    let mut out = beta.to_owned();
    if threshold <= 0.0 {
        return out;
    }
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm <= threshold {
            row.fill(0.0);
        } else {
            row *= 1.0 - threshold / norm;
        }
    }
    out
}

/// Proximal map of `step·α·penalty`.
fn prox_penalty(v: ArrayView2<f64>, reg: &RegularizationConfig, step: f64) -> Array2<f64> {
    match reg.penalty {
        GroupPenalty::Norm => prox_group(v, step * reg.alpha),
        GroupPenalty::SquaredNorm => v.to_owned() / (1.0 + 2.0 * step * reg.alpha),
    }
}

fn power_iteration<F: Fn(&Array1<f64>) -> Array1<f64>>(
    dim: usize,
    apply: F,
    iterations: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut v: Array1<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            break;
        }
        v /= norm;
        let w = apply(&v);
        lambda = v.dot(&w);
        v = w;
    }
    lambda
}

/// Lipschitz constant of `∇f`: `2·λ_max(Σ_i vec(Z_i)vec(Z_i)ᵀ) + η·λ_max(L)`.
///
/// `λ_max(XᵀX)` is taken from the `n × n` Gram matrix `XXᵀ`, which shares its
/// nonzero spectrum.
pub fn lipschitz_constant(ds: &RegressionDataset, eta: f64, iterations: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gram = ds.design.dot(&ds.design.t());
    let data = power_iteration(gram.nrows(), |v| gram.dot(v), iterations, &mut rng);
    let lap = if eta != 0.0 {
        ds.laplacian.lambda_max(iterations, rng.gen())
    } else {
        0.0
    };
    2.0 * data + eta * lap
}

/// Result of a regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: BetaMap,
    /// `F` at the starting point followed by `F` after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// `false` when `max_iters` ran out before the stopping rule fired.
    pub converged: bool,
    /// Final Lipschitz estimate (step is its inverse).
    pub lipschitz: f64,
}

fn window_converged(trace: &[f64], window: usize, tolerance: f64) -> bool {
    let k = trace.len() - 1;
    let last = trace[k];
    if last == 0.0 {
        return true;
    }
    if k < window {
        return false;
    }
    (trace[k - window] - last) <= tolerance * last.abs()
}

fn check_init(ds: &RegressionDataset, init: Option<&BetaMap>) -> Result<Array2<f64>> {
    match init {
        Some(b) => {
            ds.check_beta(&b.values().view())?;
            Ok(b.values().clone())
        }
        None => Ok(Array2::zeros((ds.m, ds.d))),
    }
}

/// Monotone FISTA. Starts from `init` (zero matrix when `None`).
///
/// Each iteration takes a proximal-gradient step from the momentum point.
/// The candidate replaces the incumbent only if it does not increase `F`;
/// the momentum point is updated from the candidate either way, so the
/// objective sequence is nonincreasing.
pub fn fit_mfista(
    ds: &RegressionDataset,
    reg: &RegularizationConfig,
    fista: &FistaConfig,
    init: Option<&BetaMap>,
) -> Result<FitResult> {
    reg.validate()?;
    fista.validate()?;
    let mut x = check_init(ds, init)?;
    let mut momentum = x.clone();
    let mut t = 1.0f64;
    let mut f_x = smooth_value(ds, &x.view(), reg.eta)? + penalty_value(&x.view(), reg);
    if !f_x.is_finite() {
        return Err(Error::Diverged {
            iteration: 0,
            value: f_x,
        });
    }
    let mut lipschitz = match fista.step_policy {
        StepPolicy::FixedFromLipschitz => {
            lipschitz_constant(ds, reg.eta, fista.power_iterations, fista.seed)
        }
        StepPolicy::Backtracking => 1.0,
    };
    if lipschitz <= 0.0 {
        // f is constant (all-zero design, no smoothing): the prox step alone
        // solves the problem with any step size.
        lipschitz = 1.0;
    }
    let mut trace = vec![f_x];
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=fista.max_iters {
        iterations = k;
        let grad = gradient_of(ds, &momentum.view(), reg.eta)?;
        let candidate = match fista.step_policy {
            StepPolicy::FixedFromLipschitz => {
                prox_penalty((&momentum - &(&grad / lipschitz)).view(), reg, 1.0 / lipschitz)
            }
            StepPolicy::Backtracking => {
                let f_y = smooth_value(ds, &momentum.view(), reg.eta)?;
                loop {
                    let p = prox_penalty((&momentum - &(&grad / lipschitz)).view(), reg, 1.0 / lipschitz);
                    let diff = &p - &momentum;
                    let model = f_y + (&diff * &grad).sum() + 0.5 * lipschitz * diff.iter().map(|v| v * v).sum::<f64>();
                    let f_p = smooth_value(ds, &p.view(), reg.eta)?;
                    if !f_p.is_finite() {
                        return Err(Error::Diverged { iteration: k, value: f_p });
                    }
                    if f_p <= model + 1e-12 * model.abs().max(1.0) {
                        break p;
                    }
                    lipschitz *= fista.backtracking_growth;
                }
            }
        };
        let f_candidate = smooth_value(ds, &candidate.view(), reg.eta)? + penalty_value(&candidate.view(), reg);
        if !f_candidate.is_finite() {
            return Err(Error::Diverged {
                iteration: k,
                value: f_candidate,
            });
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let x_prev = x.clone();
        if f_candidate <= f_x {
            x = candidate.clone();
            f_x = f_candidate;
        }
        // y = x_k + (t_k/t_{k+1})(z_k − x_k) + ((t_k − 1)/t_{k+1})(x_k − x_{k−1})
        momentum = &x + &((&candidate - &x) * (t / t_next)) + &((&x - &x_prev) * ((t - 1.0) / t_next));
        t = t_next;
        trace.push(f_x);
        if window_converged(&trace, fista.window, fista.rel_tolerance) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "mfista: reached max_iters={} before the stopping rule (objective {f_x:.6e})",
            fista.max_iters
        );
    }
    Ok(FitResult {
        beta: BetaMap(x),
        objective_trace: trace,
        iterations,
        converged,
        lipschitz,
    })
}

/// Plain proximal gradient (ISTA) with fixed step `1/L_f`: no momentum, same
/// stopping rule as [`fit_mfista`].
pub fn fit_proximal_gradient(
    ds: &RegressionDataset,
    reg: &RegularizationConfig,
    fista: &FistaConfig,
    init: Option<&BetaMap>,
) -> Result<FitResult> {
    reg.validate()?;
    fista.validate()?;
    let mut x = check_init(ds, init)?;
    let mut lipschitz = lipschitz_constant(ds, reg.eta, fista.power_iterations, fista.seed);
    if lipschitz <= 0.0 {
        lipschitz = 1.0;
    }
    let mut f_x = smooth_value(ds, &x.view(), reg.eta)? + penalty_value(&x.view(), reg);
    let mut trace = vec![f_x];
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=fista.max_iters {
        iterations = k;
        let grad = gradient_of(ds, &x.view(), reg.eta)?;
        x = prox_penalty((&x - &(&grad / lipschitz)).view(), reg, 1.0 / lipschitz);
        f_x = smooth_value(ds, &x.view(), reg.eta)? + penalty_value(&x.view(), reg);
        if !f_x.is_finite() {
            return Err(Error::Diverged {
                iteration: k,
                value: f_x,
            });
        }
        trace.push(f_x);
        if window_converged(&trace, fista.window, fista.rel_tolerance) {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        beta: BetaMap(x),
        objective_trace: trace,
        iterations,
        converged,
        lipschitz,
    })
}

/// `‖prox(β − ∇f(β)/L) − β‖_∞`: zero exactly at a minimizer.
pub fn fixed_point_residual(
    beta: &BetaMap,
    ds: &RegressionDataset,
    reg: &RegularizationConfig,
    lipschitz: f64,
) -> Result<f64> {
    let grad = smooth_gradient(beta, ds, reg.eta)?;
    let step = 1.0 / lipschitz;
    let next = prox_penalty((beta.values() - &(&grad * step)).view(), reg, step);
    Ok((&next - beta.values()).iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_laplacian, Mesh};
    use ndarray::array;
    use rand_distr::StandardNormal;

    fn random_instance(m_rows: usize, cols: usize, n: usize, seed: u64) -> (GraphLaplacian, Vec<Array2<f64>>, Vec<f64>) {
        let mesh = Mesh::grid(2, m_rows / 2).unwrap();
        let lap = build_laplacian(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zs: Vec<Array2<f64>> = (0..n)
            .map(|_| Array2::from_shape_simple_fn((lap.dim(), cols), || rng.sample(StandardNormal)))
            .collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (lap, zs, ys)
    }

    #[test]
    fn predict_examples() {
        let z = array![[3.0, 9.0], [7.0, 5.0]];
        assert_eq!(predict(&BetaMap::zeros(2, 2), z.view()).unwrap(), 0.0);
        assert_eq!(predict(&BetaMap::new(z.clone()).unwrap(), z.view()).unwrap(), 9.0 + 81.0 + 49.0 + 25.0);
        assert_eq!(predict(&BetaMap::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap(), z.view()).unwrap(), 8.0);
        assert!(predict(&BetaMap::zeros(3, 2), z.view()).is_err());
    }

    #[test]
    fn beta_rejects_non_finite() {
        assert!(BetaMap::new(array![[f64::NAN]]).is_err());
    }

    #[test]
    fn objective_examples() {
        let (lap, zs, ys) = random_instance(4, 2, 5, 1);
        let reg = RegularizationConfig::new(0.3, 0.7);
        let zero = BetaMap::zeros(4, 2);
        let ds = RegressionDataset::new(zs.iter().map(|z| z.view()), &ys, &lap).unwrap();
        let sum_sq: f64 = ys.iter().map(|y| y * y).sum();
        assert!((objective(&zero, &ds, &reg).unwrap() - sum_sq).abs() < 1e-12);
        let ds0 = RegressionDataset::new(zs.iter().map(|z| z.view()), &[0.0; 5], &lap).unwrap();
        assert_eq!(objective(&zero, &ds0, &reg).unwrap(), 0.0);
    }

    #[test]
    fn prox_examples() {
        let out = prox_group(array![[3.0, 4.0], [0.3, 0.4], [0.0, 0.0]].view(), 2.5);
        assert_eq!(out, array![[1.5, 2.0], [0.0, 0.0], [0.0, 0.0]]);
        let v = array![[1.0, -2.0], [0.1, 0.0]];
        assert_eq!(prox_group(v.view(), 0.0), v);
    }

    #[test]
    fn laplacian_part_vanishes_on_constant_rows() {
        let (lap, zs, ys) = random_instance(6, 3, 2, 2);
        let ds = RegressionDataset::new(zs.iter().map(|z| z.view()), &ys, &lap).unwrap();
        let beta = BetaMap::new(Array2::from_shape_fn((6, 3), |(_, k)| k as f64 + 0.5)).unwrap();
        let with = smooth_gradient(&beta, &ds, 5.0).unwrap();
        let without = smooth_gradient(&beta, &ds, 0.0).unwrap();
        assert!((&with - &without).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dataset_shape_errors() {
        let (lap, zs, ys) = random_instance(4, 2, 3, 3);
        assert!(RegressionDataset::new(zs.iter().map(|z| z.view()), &ys[..2], &lap).is_err());
        let bad = [Array2::zeros((4, 2)), Array2::zeros((4, 3))];
        assert!(RegressionDataset::new(bad.iter().map(|z| z.view()), &[0.0, 0.0], &lap).is_err());
        let wrong_m = [Array2::zeros((5, 2))];
        assert!(RegressionDataset::new(wrong_m.iter().map(|z| z.view()), &[0.0], &lap).is_err());
        let ds = RegressionDataset::new(zs.iter().map(|z| z.view()), &ys, &lap).unwrap();
        assert!(objective(&BetaMap::zeros(4, 3), &ds, &RegularizationConfig::default()).is_err());
    }

    #[test]
    fn single_subject_and_scalar_latent() {
        let (lap, zs, ys) = random_instance(6, 1, 1, 4);
        let ds = RegressionDataset::new(zs.iter().map(|z| z.view()), &ys, &lap).unwrap();
        let fit = fit_mfista(&ds, &RegularizationConfig::new(0.01, 0.1), &FistaConfig::default(), None).unwrap();
        assert_eq!(fit.beta.shape(), (6, 1));
        assert!(fit.objective_trace.last().unwrap() < &fit.objective_trace[0]);
    }

    #[test]
    fn squared_penalty_variant() {
        let (lap, zs, ys) = random_instance(6, 2, 8, 5);
        let ds = RegressionDataset::new(zs.iter().map(|z| z.view()), &ys, &lap).unwrap();
        let reg = RegularizationConfig {
            alpha: 0.5,
            eta: 0.1,
            penalty: GroupPenalty::SquaredNorm,
        };
        let fista = FistaConfig {
            max_iters: 20_000,
            rel_tolerance: 1e-15,
            ..Default::default()
        };
        let fit = fit_mfista(&ds, &reg, &fista, None).unwrap();
        // smooth problem: gradient of the full objective vanishes
        let g = smooth_gradient(&fit.beta, &ds, reg.eta).unwrap() + fit.beta.values() * (2.0 * reg.alpha);
        assert!(g.iter().all(|v| v.abs() < 1e-6), "{g}");
        // ridge-like penalty keeps every row
        assert_eq!(fit.beta.support(0.0).len(), 6);
    }

    #[test]
    fn backtracking_matches_fixed_step() {
        let (lap, zs, ys) = random_instance(8, 2, 12, 6);
        let ds = RegressionDataset::new(zs.iter().map(|z| z.view()), &ys, &lap).unwrap();
        let reg = RegularizationConfig::new(0.5, 0.2);
        let tight = FistaConfig {
            max_iters: 20_000,
            rel_tolerance: 1e-15,
            ..Default::default()
        };
        let a = fit_mfista(&ds, &reg, &tight, None).unwrap();
        let b = fit_mfista(
            &ds,
            &reg,
            &FistaConfig {
                step_policy: StepPolicy::Backtracking,
                ..tight
            },
            None,
        )
        .unwrap();
        let (fa, fb) = (a.objective_trace.last().unwrap(), b.objective_trace.last().unwrap());
        assert!((fa - fb).abs() <= 1e-9 * fa.abs());
        assert!(b.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn max_iters_flagged_not_error() {
        let (lap, zs, ys) = random_instance(8, 2, 12, 7);
        let ds = RegressionDataset::new(zs.iter().map(|z| z.view()), &ys, &lap).unwrap();
        let fit = fit_mfista(
            &ds,
            &RegularizationConfig::default(),
            &FistaConfig {
                max_iters: 3,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 3);
        assert_eq!(fit.objective_trace.len(), 4);
    }

    #[test]
    fn warm_start_at_solution_stays() {
        let (lap, zs, ys) = random_instance(8, 2, 12, 8);
        let ds = RegressionDataset::new(zs.iter().map(|z| z.view()), &ys, &lap).unwrap();
        let reg = RegularizationConfig::new(1.0, 0.5);
        let tight = FistaConfig {
            max_iters: 50_000,
            rel_tolerance: 1e-15,
            ..Default::default()
        };
        let fit = fit_mfista(&ds, &reg, &tight, None).unwrap();
        let again = fit_mfista(&ds, &reg, &tight, Some(&fit.beta)).unwrap();
        let f0 = fit.objective_trace.last().unwrap();
        assert!((again.objective_trace.last().unwrap() - f0).abs() <= 1e-12 * f0);
        assert!(fixed_point_residual(&fit.beta, &ds, &reg, fit.lipschitz).unwrap() < 1e-7);
    }

    #[test]
    fn config_validation() {
        assert!(RegularizationConfig::new(-1.0, 0.0).validate().is_err());
        assert!(RegularizationConfig::new(0.0, f64::NAN).validate().is_err());
        assert!(FistaConfig { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(FistaConfig { rel_tolerance: 0.0, ..Default::default() }.validate().is_err());
    }
}
