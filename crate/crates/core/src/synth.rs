//! Synthetic multi-view datasets with a planted trace-regression model.
//!
//! Every subject gets a spatially smooth latent field `H_i ∈ R^{m×k}` (white
//! noise passed once through `(I + L)⁻¹`). Both views are noisy linear
//! read-outs of the same field, `X_t = H·A_tᵀ + σE`, `X_r = H·A_rᵀ + σE'`,
//! and the score is `tr(β*ᵀH_i) + σε`, z-scored across subjects.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::matrix_io::{read_matrix, write_matrix};
use crate::mesh::{build_laplacian, GraphLaplacian, Mesh};

const SMOOTHING: f64 = 1.0;
const CG_TOLERANCE: f64 = 1e-8;

/// `icosphere-<level>` or `grid-<rows>x<cols>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MeshSpec {
    Icosphere(u32),
    Grid(usize, usize),
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            MeshSpec::Icosphere(level) => Ok(Mesh::icosphere(level)),
            MeshSpec::Grid(r, c) => Mesh::grid(r, c),
        }
    }
}

impl FromStr for MeshSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("mesh", format!("{s:?} is not icosphere-<k> or grid-<r>x<c>"));
        if let Some(level) = s.strip_prefix("icosphere-") {
            let level: u32 = level.parse().map_err(|_| bad())?;
            if level > 6 {
                return Err(Error::config("mesh", "icosphere level above 6"));
            }
            return Ok(MeshSpec::Icosphere(level));
        }
        if let Some(dims) = s.strip_prefix("grid-") {
            let (r, c) = dims.split_once(['x', '×']).ok_or_else(bad)?;
            let (r, c) = (r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?);
            if r < 2 || c < 2 {
                return Err(Error::config("mesh", "grid needs at least 2x2 vertices"));
            }
            return Ok(MeshSpec::Grid(r, c));
        }
        Err(bad())
    }
}

impl TryFrom<String> for MeshSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MeshSpec> for String {
    fn from(spec: MeshSpec) -> String {
        spec.to_string()
    }
}

impl std::fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeshSpec::Icosphere(level) => write!(f, "icosphere-{level}"),
            MeshSpec::Grid(r, c) => write!(f, "grid-{r}x{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_subjects: usize,
    pub mesh: MeshSpec,
    pub d_task: usize,
    pub d_rest: usize,
    pub k_true: usize,
    pub clusters: usize,
    pub cluster_size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_subjects: 40,
            mesh: MeshSpec::Icosphere(2),
            d_task: 24,
            d_rest: 30,
            k_true: 4,
            clusters: 3,
            cluster_size: 8,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(Error::config("n_subjects", "need at least 2 subjects"));
        }
        if self.d_task == 0 || self.d_rest == 0 {
            return Err(Error::config("d_task", "view dimensions must be positive"));
        }
        if self.k_true == 0 || self.k_true > self.d_task.min(self.d_rest) {
            return Err(Error::config("k_true", "must be in [1, min(d_task, d_rest)]"));
        }
        if self.clusters == 0 || self.cluster_size == 0 {
            return Err(Error::config("clusters", "need at least one nonempty cluster"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// The planted model. Scores on disk are `(raw − score_center) / score_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `m × k_true`; nonzero rows exactly on the clusters.
    pub beta_true: Array2<f64>,
    pub clusters: Vec<Vec<usize>>,
    /// `d_task × k_true`
    pub loadings_task: Array2<f64>,
    /// `d_rest × k_true`
    pub loadings_rest: Array2<f64>,
    pub score_center: f64,
    pub score_scale: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreTransform {
    score_center: f64,
    score_scale: f64,
}

impl GroundTruth {
    /// Planted vertices, ascending.
    pub fn support(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.clusters.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref().join("ground_truth");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_matrix(dir.join("beta_true.mvrl"), &self.beta_true)?;
        write_matrix(dir.join("loadings_task.mvrl"), &self.loadings_task)?;
        write_matrix(dir.join("loadings_rest.mvrl"), &self.loadings_rest)?;
        let mut csv = String::from("vertex,cluster\n");
        let mut rows: Vec<(usize, usize)> = self
            .clusters
            .iter()
            .enumerate()
            .flat_map(|(c, vs)| vs.iter().map(move |&v| (v, c)))
            .collect();
        rows.sort_unstable();
        for (v, c) in rows {
            writeln!(csv, "{v},{c}").unwrap();
        }
        let path = dir.join("support.csv");
        fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        let transform = ScoreTransform {
            score_center: self.score_center,
            score_scale: self.score_scale,
        };
        let path = dir.join("score.json");
        fs::write(&path, serde_json::to_string_pretty(&transform)?).map_err(|e| Error::io(&path, e))
    }

    /// Reads `<dataset>/ground_truth/`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().join("ground_truth");
        let beta_true = read_matrix(dir.join("beta_true.mvrl"))?;
        let loadings_task = read_matrix(dir.join("loadings_task.mvrl"))?;
        let loadings_rest = read_matrix(dir.join("loadings_rest.mvrl"))?;
        let path = dir.join("support.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("support.csv line {}: {line:?}", i + 1)))
            };
            let (v, c) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("support.csv line {}: {line:?}", i + 1)))?;
            let (v, c) = (parse(v)?, parse(c)?);
            if v >= beta_true.nrows() {
                return Err(Error::invalid("support.csv", format!("vertex {v} out of range")));
            }
            if clusters.len() <= c {
                clusters.resize(c + 1, Vec::new());
            }
            clusters[c].push(v);
        }
        let path = dir.join("score.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let t: ScoreTransform = serde_json::from_str(&text)?;
        Ok(GroundTruth {
            beta_true,
            clusters,
            loadings_task,
            loadings_rest,
            score_center: t.score_center,
            score_scale: t.score_scale,
        })
    }
}

/// Output of [`generate`]; `latents` and `raw_scores` are kept in memory only.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    /// Per subject, `m × k_true`.
    pub latents: Vec<Array2<f64>>,
    /// Scores before z-scoring.
    pub raw_scores: Vec<f64>,
}

impl SyntheticData {
    /// Writes the dataset directory plus `ground_truth/`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.dataset.save(dir.as_ref())?;
        self.truth.save(dir.as_ref())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.sample(StandardNormal))
}

/// One pass of `(I + L)⁻¹` over each column of white noise.
fn smooth_field(lap: &GraphLaplacian, noise: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(noise.dim());
    for (k, col) in noise.axis_iter(Axis(1)).enumerate() {
        let b: Vec<f64> = col.to_vec();
        out.column_mut(k).assign(&lap.solve_shifted(SMOOTHING, &b, CG_TOLERANCE));
    }
    out
}

/// Grows `count` disjoint, mutually non-adjacent clusters of `size`
/// vertices by breadth-first search from random seeds.
fn plant_clusters(lap: &GraphLaplacian, count: usize, size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let m = lap.dim();
    if count * size > m {
        return Err(Error::config("clusters", format!("{count}×{size} vertices exceed mesh size {m}")));
    }
    // free[v]: v is neither in nor adjacent to an existing cluster
    let mut free = vec![true; m];
    let mut clusters = Vec::with_capacity(count);
    for _ in 0..count {
        let mut candidates: Vec<usize> = (0..m).filter(|&v| free[v]).collect();
        candidates.shuffle(rng);
        let grown = candidates.iter().find_map(|&seed| {
            let mut cluster = Vec::with_capacity(size);
            let mut seen = vec![false; m];
            let mut queue = VecDeque::from([seed]);
            seen[seed] = true;
            while let Some(v) = queue.pop_front() {
                cluster.push(v);
                if cluster.len() == size {
                    return Some(cluster);
                }
                for &u in lap.neighbors(v) {
                    if free[u] && !seen[u] {
                        seen[u] = true;
                        queue.push_back(u);
                    }
                }
            }
            None
        });
        let cluster = grown.ok_or_else(|| {
            Error::config("cluster_size", format!("no room for another cluster of {size} vertices"))
        })?;
        for &v in &cluster {
            free[v] = false;
            for &u in lap.neighbors(v) {
                free[u] = false;
            }
        }
        clusters.push(cluster);
    }
    Ok(clusters)
}

/// Draws a dataset and its ground truth; bit-identical for a fixed config.
///
/// `β*` is constant within each cluster and scaled so that the noiseless
/// score `tr(β*ᵀH)` has unit variance.
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mesh = config.mesh.build()?;
    let lap = build_laplacian(&mesh);
    let m = lap.dim();
    let k = config.k_true;
    let sigma = config.noise_sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let clusters = plant_clusters(&lap, config.clusters, config.cluster_size, &mut rng)?;
    let mut beta = Array2::zeros((m, k));
    for cluster in &clusters {
        let row: Array1<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        for &v in cluster {
            beta.row_mut(v).assign(&row);
        }
    }
    // Var tr(βᵀH) = Σ_k ‖Sβ_k‖² with S = (I + L)⁻¹ and unit white noise.
    let model_variance: f64 = smooth_field(&lap, &beta).iter().map(|v| v * v).sum();
    beta /= model_variance.sqrt();

    let scale = 1.0 / (k as f64).sqrt();
    let loadings_task = gaussian(&mut rng, (config.d_task, k)) * scale;
    let loadings_rest = gaussian(&mut rng, (config.d_rest, k)) * scale;

    let mut latents = Vec::with_capacity(config.n_subjects);
    let mut views = Vec::with_capacity(config.n_subjects);
    let mut raw_scores = Vec::with_capacity(config.n_subjects);
    for _ in 0..config.n_subjects {
        let h = smooth_field(&lap, &gaussian(&mut rng, (m, k)));
        let task = h.dot(&loadings_task.t()) + gaussian(&mut rng, (m, config.d_task)) * sigma;
        let rest = h.dot(&loadings_rest.t()) + gaussian(&mut rng, (m, config.d_rest)) * sigma;
        let noise: f64 = rng.sample(StandardNormal);
        raw_scores.push((&beta * &h).sum() + sigma * noise);
        latents.push(h);
        views.push((task, rest));
    }
    let n = raw_scores.len() as f64;
    let center = raw_scores.iter().sum::<f64>() / n;
    let var = raw_scores.iter().map(|y| (y - center).powi(2)).sum::<f64>() / (n - 1.0);
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };

    let width = (config.n_subjects - 1).to_string().len().max(2);
    let subjects = views
        .into_iter()
        .zip(&raw_scores)
        .enumerate()
        .map(|(i, ((task, rest), y))| SubjectRecord::new(format!("s{i:0width$}"), task, rest, (y - center) / scale))
        .collect::<Result<Vec<_>>>()?;

    Ok(SyntheticData {
        dataset: Dataset { mesh, subjects },
        truth: GroundTruth {
            beta_true: beta,
            clusters,
            loadings_task,
            loadings_rest,
            score_center: center,
            score_scale: scale,
        },
        latents,
        raw_scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewSelector {
    Neither,
    Task,
    Rest,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    /// Permute the view's matrices across subjects.
    Shuffle,
    /// Replace the view with Gaussian noise of matching per-feature mean and sd.
    Noise,
}

fn corrupt_one(
    subjects: &mut [SubjectRecord],
    pick: fn(&mut SubjectRecord) -> &mut Array2<f64>,
    mode: Corruption,
    rng: &mut ChaCha8Rng,
) {
    match mode {
        Corruption::Shuffle => {
            let mut order: Vec<usize> = (0..subjects.len()).collect();
            order.shuffle(rng);
            let mut taken: Vec<Array2<f64>> = subjects.iter_mut().map(|s| std::mem::take(pick(s))).collect();
            for (s, &src) in subjects.iter_mut().zip(&order) {
                *pick(s) = std::mem::take(&mut taken[src]);
            }
        }
        Corruption::Noise => {
            let d = pick(&mut subjects[0]).ncols();
            let mut sum = vec![0.0; d];
            let mut sum_sq = vec![0.0; d];
            let mut count = 0usize;
            for s in subjects.iter_mut() {
                for row in pick(s).rows() {
                    for (j, &v) in row.iter().enumerate() {
                        sum[j] += v;
                        sum_sq[j] += v * v;
                    }
                    count += 1;
                }
            }
            let c = count as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
            let sd: Vec<f64> = sum_sq
                .iter()
                .zip(&mean)
                .map(|(sq, mu)| ((sq / c - mu * mu) * c / (c - 1.0).max(1.0)).max(0.0).sqrt())
                .collect();
            for s in subjects.iter_mut() {
                let view = pick(s);
                for mut row in view.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = mean[j] + sd[j] * z;
                    }
                }
            }
        }
    }
}

/// Destroys the information in the selected view(s) while keeping marginals.
pub fn corrupt_view(subjects: &[SubjectRecord], which: ViewSelector, mode: Corruption, seed: u64) -> Vec<SubjectRecord> {
    let mut out = subjects.to_vec();
    if out.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if matches!(which, ViewSelector::Task | ViewSelector::Both) {
        corrupt_one(&mut out, |s| &mut s.task, mode, &mut rng);
    }
    if matches!(which, ViewSelector::Rest | ViewSelector::Both) {
        corrupt_one(&mut out, |s| &mut s.rest, mode, &mut rng);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n_subjects: 12,
            mesh: MeshSpec::Icosphere(1),
            d_task: 6,
            d_rest: 5,
            k_true: 3,
            clusters: 2,
            cluster_size: 4,
            noise_sigma: 0.2,
            seed: 3,
        }
    }

    #[test]
    fn mesh_spec_parsing() {
        assert_eq!("icosphere-2".parse::<MeshSpec>().unwrap(), MeshSpec::Icosphere(2));
        assert_eq!("grid-4x5".parse::<MeshSpec>().unwrap(), MeshSpec::Grid(4, 5));
        for bad in ["sphere", "grid-4", "grid-1x9", "icosphere-x"] {
            match bad.parse::<MeshSpec>() {
                Err(Error::Config { field, .. }) => assert_eq!(field, "mesh"),
                other => panic!("{bad}: {other:?}"),
            }
        }
        let json = serde_json::to_string(&GeneratorConfig::default()).unwrap();
        assert!(json.contains("\"icosphere-2\""));
        let back: GeneratorConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, GeneratorConfig::default());
    }

    #[test]
    fn default_desk_shape() {
        let data = generate(&GeneratorConfig::default()).unwrap();
        assert_eq!(data.dataset.subjects.len(), 40);
        assert_eq!(data.dataset.mesh.vertex_count(), 162);
        let s = &data.dataset.subjects[0];
        assert_eq!((s.task.dim(), s.rest.dim()), ((162, 24), (162, 30)));
        assert_eq!(data.truth.support().len(), 24);
    }

    #[test]
    fn support_rows_exact() {
        let data = generate(&small()).unwrap();
        let support = data.truth.support();
        for (j, row) in data.truth.beta_true.rows().into_iter().enumerate() {
            let nonzero = row.iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, support.binary_search(&j).is_ok(), "vertex {j}");
        }
        // clusters are disjoint and not adjacent to each other
        let lap = build_laplacian(&data.dataset.mesh);
        let owner: std::collections::HashMap<usize, usize> = data
            .truth
            .clusters
            .iter()
            .enumerate()
            .flat_map(|(c, vs)| vs.iter().map(move |&v| (v, c)))
            .collect();
        assert_eq!(owner.len(), 8);
        for (&v, &c) in &owner {
            for u in lap.neighbors(v) {
                assert!(owner.get(u).map_or(true, |&c2| c2 == c));
            }
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.dataset.subjects, b.dataset.subjects);
        assert_eq!(a.truth, b.truth);
        let c = generate(&GeneratorConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(a.dataset.subjects, c.dataset.subjects);
    }

    #[test]
    fn scores_are_z_scored_and_follow_rule() {
        let cfg = GeneratorConfig { noise_sigma: 0.0, ..small() };
        let data = generate(&cfg).unwrap();
        let ys: Vec<f64> = data.dataset.subjects.iter().map(|s| s.score).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        let t = &data.truth;
        for (s, h) in data.dataset.subjects.iter().zip(&data.latents) {
            let rule = (&t.beta_true * h).sum();
            assert!(((rule - t.score_center) / t.score_scale - s.score).abs() < 1e-12);
            // noiseless views are exact read-outs of the latent field
            assert!((h.dot(&t.loadings_task.t()) - &s.task).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn score_variance_matches_model_plus_noise() {
        let sigma = 0.5;
        let cfg = GeneratorConfig {
            n_subjects: 10_000,
            mesh: MeshSpec::Icosphere(1),
            d_task: 2,
            d_rest: 2,
            k_true: 2,
            clusters: 2,
            cluster_size: 4,
            noise_sigma: sigma,
            seed: 11,
        };
        let data = generate(&cfg).unwrap();
        let y = &data.raw_scores;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = 1.0 + sigma * sigma;
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn latent_is_smoother_than_white_noise() {
        let data = generate(&small()).unwrap();
        let lap = build_laplacian(&data.dataset.mesh);
        let energy = |x: &Array2<f64>| {
            let var = x.iter().map(|v| v * v).sum::<f64>();
            lap.quadratic_form(x.view()).unwrap() / var
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let white = gaussian(&mut rng, (lap.dim(), 3));
        let smooth: f64 = data.latents.iter().map(energy).sum::<f64>() / data.latents.len() as f64;
        assert!(smooth < energy(&white));
    }

    #[test]
    fn corrupt_modes() {
        let data = generate(&small()).unwrap();
        let subjects = &data.dataset.subjects;
        assert_eq!(&corrupt_view(subjects, ViewSelector::Neither, Corruption::Noise, 1), subjects);

        let shuffled = corrupt_view(subjects, ViewSelector::Rest, Corruption::Shuffle, 1);
        for (a, b) in shuffled.iter().zip(subjects) {
            assert_eq!(a.task, b.task);
            assert_eq!(a.score, b.score);
            assert!(subjects.iter().any(|s| s.rest == a.rest));
        }
        assert!(shuffled.iter().zip(subjects).any(|(a, b)| a.rest != b.rest));

        let noised = corrupt_view(subjects, ViewSelector::Both, Corruption::Noise, 2);
        let stack = |ss: &[SubjectRecord]| crate::data::stack_views(&ss.iter().collect::<Vec<_>>()).unwrap().0;
        let (orig, new) = (stack(subjects), stack(&noised));
        for j in 0..orig.ncols() {
            let (a, b) = (orig.column(j), new.column(j));
            assert!((a.mean().unwrap() - b.mean().unwrap()).abs() < 0.15);
            assert!((a.std(1.0) / b.std(1.0) - 1.0).abs() < 0.15);
        }
        assert_ne!(noised[0].rest, subjects[0].rest);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&GeneratorConfig { k_true: 7, ..small() }).is_err());
        assert!(generate(&GeneratorConfig { clusters: 50, ..small() }).is_err());
        assert!(generate(&GeneratorConfig { n_subjects: 1, ..small() }).is_err());
        assert!(generate(&GeneratorConfig { noise_sigma: -1.0, ..small() }).is_err());
    }

    #[test]
    fn save_load_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&small()).unwrap();
        data.save(dir.path()).unwrap();
        let truth = GroundTruth::load(dir.path()).unwrap();
        assert_eq!(truth.beta_true, data.truth.beta_true);
        assert_eq!(truth.support(), data.truth.support());
        assert_eq!(truth.score_center, data.truth.score_center);
        let ds = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.subjects, data.dataset.subjects);
    }
}
