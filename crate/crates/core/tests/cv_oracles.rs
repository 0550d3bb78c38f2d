use mvtrace::autoencoder::{ArchitectureConfig, TrainingConfig};
use mvtrace::data::SubjectRecord;
use mvtrace::eval::*;
use mvtrace::mesh::{build_laplacian, GraphLaplacian};
use mvtrace::representation::{FittedRepresentation, RepresentationSpec};
use mvtrace::synth::*;
use mvtrace::trace::{BetaMap, FistaConfig, RegularizationConfig};
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Noiseless data whose score depends on one small cluster.
fn sparse_truth(seed: u64) -> SyntheticData {
    generate(&GeneratorConfig {
        noise_sigma: 0.0,
        clusters: 1,
        cluster_size: 2,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn oracle_reg() -> RegularizationConfig {
    RegularizationConfig::new(0.1, 0.0)
}

/// `P` with `A·P = I` for a tall full-rank loading matrix `A`.
fn left_inverse_t(loadings: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = loadings.dim();
    let a = DMatrix::from_fn(rows, cols, |i, j| loadings[[i, j]]);
    let pinv = a.pseudo_inverse(1e-12).unwrap();
    // X = H·Aᵀ, so H = X·(A⁺)ᵀ
    Array2::from_shape_fn((rows, cols), |(i, j)| pinv[(j, i)])
}

fn cv(subjects: &[SubjectRecord], lap: &GraphLaplacian, spec: &RepresentationSpec, reg: &RegularizationConfig, seed: u64) -> CvReport {
    let plan = make_folds(subjects.len(), 10, seed).unwrap();
    run_cv(subjects, lap, spec, reg, &FistaConfig::default(), &plan, &CvOptions::default()).unwrap()
}

#[test]
fn passthrough_oracle_reaches_high_r2() {
    let data = sparse_truth(3);
    // The views replaced by the latent factors themselves: passthrough is the
    // exact representation the score was built from.
    let subjects: Vec<SubjectRecord> = data
        .dataset
        .subjects
        .iter()
        .zip(&data.latents)
        .map(|(s, h)| SubjectRecord::new(s.id.clone(), h.clone(), Array2::zeros((h.nrows(), 1)), s.score).unwrap())
        .collect();
    let lap = build_laplacian(&data.dataset.mesh);
    let spec = RepresentationSpec::Passthrough { columns: 4, standardize: false };
    let report = cv(&subjects, &lap, &spec, &oracle_reg(), 3);
    assert!(report.mean_r2 > 0.95, "mean R² {}", report.mean_r2);

    let mse: Vec<f64> = report.folds.iter().map(|f| f.mse).collect();
    let r2: Vec<f64> = report.folds.iter().map(|f| f.r2).collect();
    assert_eq!(report.mean_mse, mse.iter().sum::<f64>() / 10.0);
    assert_eq!(report.mean_r2, r2.iter().sum::<f64>() / 10.0);
    assert!(report.folds.iter().all(|f| f.predictions.len() == f.test_indices.len()));
}

#[test]
fn pseudo_inverse_readout_reaches_high_r2() {
    let data = sparse_truth(4);
    let lap = build_laplacian(&data.dataset.mesh);
    let task = left_inverse_t(&data.truth.loadings_task);
    let rest = Array2::zeros((data.truth.loadings_rest.nrows(), task.ncols()));
    let spec = RepresentationSpec::Projection { task, rest };
    let report = cv(&data.dataset.subjects, &lap, &spec, &oracle_reg(), 4);
    assert!(report.mean_r2 > 0.99, "mean R² {}", report.mean_r2);
}

#[test]
fn corrupting_both_views_removes_the_signal() {
    let data = sparse_truth(5);
    let lap = build_laplacian(&data.dataset.mesh);
    let task = left_inverse_t(&data.truth.loadings_task) * 0.5;
    let rest = left_inverse_t(&data.truth.loadings_rest) * 0.5;
    let spec = RepresentationSpec::Projection { task, rest };
    for mode in [Corruption::Shuffle, Corruption::Noise] {
        let broken = corrupt_view(&data.dataset.subjects, ViewSelector::Both, mode, 9);
        let report = cv(&broken, &lap, &spec, &oracle_reg(), 5);
        assert!(report.mean_r2 <= 0.1, "{mode:?}: mean R² {}", report.mean_r2);
    }
}

#[test]
fn corrupting_the_minor_view_costs_little() {
    let data = sparse_truth(6);
    let lap = build_laplacian(&data.dataset.mesh);
    // Task-dominant readout of the shared factors.
    let task = left_inverse_t(&data.truth.loadings_task) * 0.9;
    let rest = left_inverse_t(&data.truth.loadings_rest) * 0.1;
    let spec = RepresentationSpec::Projection { task, rest };
    let baseline = cv(&data.dataset.subjects, &lap, &spec, &oracle_reg(), 6).mean_r2;
    let broken = corrupt_view(&data.dataset.subjects, ViewSelector::Rest, Corruption::Shuffle, 10);
    let degraded = cv(&broken, &lap, &spec, &oracle_reg(), 6).mean_r2;
    assert!(baseline > 0.9, "baseline R² {baseline}");
    assert!(baseline - degraded <= 0.2 * baseline, "R² {baseline} -> {degraded}");
}

#[test]
fn permuted_scores_carry_no_signal() {
    let reg = RegularizationConfig::new(0.1, 0.1);
    for seed in 0..5 {
        let data = generate(&GeneratorConfig { seed, ..GeneratorConfig::default() }).unwrap();
        let lap = build_laplacian(&data.dataset.mesh);
        let mut scores: Vec<f64> = data.dataset.subjects.iter().map(|s| s.score).collect();
        scores.shuffle(&mut ChaCha8Rng::seed_from_u64(100 + seed));
        let subjects: Vec<SubjectRecord> = data
            .dataset
            .subjects
            .iter()
            .zip(scores)
            .map(|(s, y)| SubjectRecord { score: y, ..s.clone() })
            .collect();
        let report = cv(&subjects, &lap, &RepresentationSpec::Pca { enc: 4 }, &reg, seed);
        assert!(report.mean_r2 <= 0.1, "seed {seed}: mean R² {}", report.mean_r2);
    }
}

fn noisy_test_fold(subjects: &[SubjectRecord], test: &[usize], seed: u64) -> Vec<SubjectRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = subjects.to_vec();
    for &i in test {
        let s = &mut out[i];
        s.task.mapv_inplace(|_| rng.sample(StandardNormal));
        s.rest.mapv_inplace(|_| rng.sample(StandardNormal));
        s.score = rng.sample(StandardNormal);
    }
    out
}

fn model_bytes(rep: &FittedRepresentation) -> Option<Vec<u8>> {
    rep.to_bytes().map(|b| b.unwrap())
}

#[test]
fn test_subjects_never_touch_training_artifacts() {
    let data = generate(&GeneratorConfig {
        n_subjects: 12,
        mesh: MeshSpec::Icosphere(1),
        ..GeneratorConfig::default()
    })
    .unwrap();
    let lap = build_laplacian(&data.dataset.mesh);
    let plan = make_folds(12, 4, 1).unwrap();
    let fold = 2;
    let noisy = noisy_test_fold(&data.dataset.subjects, &plan.folds[fold], 77);
    let specs = [
        RepresentationSpec::Pca { enc: 3 },
        RepresentationSpec::Autoencoder {
            arch: ArchitectureConfig::mdae(vec![6], 2, 2),
            training: TrainingConfig { epochs: 3, ..TrainingConfig::default() },
        },
        RepresentationSpec::Autoencoder {
            arch: ArchitectureConfig::concat_ae(vec![6], 3),
            training: TrainingConfig { epochs: 3, ..TrainingConfig::default() },
        },
    ];
    let reg = RegularizationConfig::new(0.1, 0.1);
    for spec in &specs {
        let run = |subjects: &[SubjectRecord]| {
            run_fold(subjects, &lap, spec, &reg, &FistaConfig::default(), &plan, fold, &CvOptions::default()).unwrap()
        };
        let (clean, dirty) = (run(&data.dataset.subjects), run(&noisy));
        assert_eq!(model_bytes(&clean.representation), model_bytes(&dirty.representation));
        assert_eq!(clean.beta, dirty.beta);
        assert_eq!(clean.objective_trace, dirty.objective_trace);
    }
}

#[test]
fn jobs_do_not_change_results() {
    let data = generate(&GeneratorConfig {
        n_subjects: 10,
        mesh: MeshSpec::Icosphere(1),
        ..GeneratorConfig::default()
    })
    .unwrap();
    let lap = build_laplacian(&data.dataset.mesh);
    let plan = make_folds(10, 5, 2).unwrap();
    let spec = RepresentationSpec::Pca { enc: 3 };
    let reg = RegularizationConfig::new(0.1, 0.1);
    let run = |jobs| {
        let options = CvOptions { jobs, ..CvOptions::default() };
        run_cv(&data.dataset.subjects, &lap, &spec, &reg, &FistaConfig::default(), &plan, &options).unwrap()
    };
    let (one, three) = (run(1), run(3));
    assert_eq!(one.mean_mse.to_bits(), three.mean_mse.to_bits());
    assert_eq!(one.betas(), three.betas());
}

fn random_maps(k: usize, m: usize, d: usize, seed: u64) -> Vec<BetaMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            BetaMap::new(Array2::from_shape_fn((m, d), |(j, _)| {
                // rows 0 and 1 carry a consistent effect
                let shift = [3.0, -3.0].get(j).copied().unwrap_or(0.0);
                shift + rng.sample::<f64, _>(StandardNormal)
            }))
            .unwrap()
        })
        .collect()
}

#[test]
fn significance_detects_both_signs() {
    let map = significance_map(&random_maps(10, 30, 3, 1), DEFAULT_T_CRIT, MapReduction::SignedNorm).unwrap();
    assert!(map.t[0] > DEFAULT_T_CRIT && map.t[1] < -DEFAULT_T_CRIT);
    assert!(map.mask[0] && map.mask[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn r_squared_is_affine_invariant(
        y in prop::collection::vec(-10.0f64..10.0, 3..20),
        noise in prop::collection::vec(-1.0f64..1.0, 20),
        a in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
        b in -10.0f64..10.0,
    ) {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        prop_assume!(y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() > 1e-3);
        let pred: Vec<f64> = y.iter().zip(&noise).map(|(v, e)| v + e).collect();
        let base = r_squared(&y, &pred).unwrap();
        let ty: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let tp: Vec<f64> = pred.iter().map(|v| a * v + b).collect();
        let moved = r_squared(&ty, &tp).unwrap();
        prop_assert!((base - moved).abs() < 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn significance_ignores_fold_order(seed in 0u64..1000, shuffle_seed in 0u64..1000) {
        let maps = random_maps(10, 12, 2, seed);
        let mut shuffled = maps.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        for reduction in [MapReduction::SignedNorm, MapReduction::Mean, MapReduction::MaxAbs] {
            let a = significance_map(&maps, DEFAULT_T_CRIT, reduction).unwrap();
            let b = significance_map(&shuffled, DEFAULT_T_CRIT, reduction).unwrap();
            prop_assert_eq!(&a.mask, &b.mask);
            prop_assert!(a.t.iter().zip(&b.t).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
