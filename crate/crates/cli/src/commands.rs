//! Subcommand implementations over the on-disk dataset contract.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mvtrace::data::{common_shape, Dataset};
use mvtrace::eval::{
    fold_seed, make_folds, results_csv, run_cv, significance_map, summary_csv, sweep, CvReport, GridPoint,
    MapReduction, SignificanceMap, SweepEntry,
};
use mvtrace::matrix_io::{read_header, read_matrix, write_matrix};
use mvtrace::mesh::build_laplacian;
use mvtrace::nn::decode_container;
use mvtrace::synth::{generate, GeneratorConfig};
use mvtrace::trace::BetaMap;
use mvtrace::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_json, run_label, ArchOverrides, RunConfig, SweepConfig};

pub const MANIFEST_VERSION: u32 = 1;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_owned(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn manifest<C: Serialize>(command: &str, config: &C, extra: Value) -> Result<String> {
    let mut value = json!({
        "manifest_version": MANIFEST_VERSION,
        "tool": "mvtrace",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    if let (Value::Object(map), Value::Object(more)) = (&mut value, extra) {
        map.extend(more);
    }
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// `generate`: writes a synthetic dataset directory.
pub fn cmd_generate(args: &GlobalArgs) -> Result<Value> {
    let mut config: GeneratorConfig = load_json(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("data/desk"));
    let data = generate(&config)?;
    data.save(&out)?;
    write_text(&out.join("generator.json"), &(serde_json::to_string_pretty(&config)? + "\n"))?;
    log::info!("wrote {} subjects to {}", data.dataset.subjects.len(), out.display());
    Ok(json!({
        "out": out,
        "subjects": data.dataset.subjects.len(),
        "vertices": data.dataset.mesh.vertex_count(),
        "support": data.truth.support().len(),
    }))
}

fn resolve_run(args: &GlobalArgs, overrides: &ArchOverrides, config: &mut RunConfig) -> Result<()> {
    if let Some(seed) = args.seed {
        config.cv.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.cv.jobs = jobs;
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    overrides.apply(&mut config.representation)?;
    if config.cv.jobs == 0 {
        return Err(Error::config("jobs", "must be at least 1"));
    }
    config.representation.validate()?;
    config.regularization.validate()?;
    config.fista.validate()?;
    if !(config.significance.t_crit >= 0.0) {
        return Err(Error::config("t_crit", "must be nonnegative"));
    }
    if !config.dataset.is_dir() {
        return Err(Error::config(
            "dataset",
            format!("{} is not a directory", config.dataset.display()),
        ));
    }
    Ok(())
}

fn dataset_info(dataset: &Dataset) -> Result<Value> {
    let (m, d_task, d_rest) = common_shape(&dataset.subjects)?;
    Ok(json!({ "subjects": dataset.subjects.len(), "vertices": m, "d_task": d_task, "d_rest": d_rest }))
}

fn fold_name(fold: usize) -> String {
    format!("fold_{fold:02}")
}

/// `vertex,norm` for every nonzero row.
fn nonzero_rows_csv(beta: &BetaMap) -> String {
    let mut out = String::from("vertex,norm\n");
    for (j, norm) in beta.row_norms().iter().enumerate() {
        if *norm > 0.0 {
            writeln!(out, "{j},{norm:?}").unwrap();
        }
    }
    out
}

fn write_significance(out: &Path, map: &SignificanceMap) -> Result<()> {
    write_text(&out.join("significance.csv"), &map.to_csv())?;
    write_matrix(out.join("significance_t.mvrl"), &map.t_matrix())
}

fn write_run_outputs(out: &Path, dataset: &Dataset, entry: &SweepEntry, config: &RunConfig) -> Result<SignificanceMap> {
    let report: &CvReport = &entry.report;
    let entries = std::slice::from_ref(entry);
    write_text(&out.join("folds.csv"), &results_csv(entries))?;
    write_text(&out.join("summary.csv"), &summary_csv(entries))?;

    create_dir(&out.join("betas"))?;
    let mut predictions = String::from("fold,subject_id,score,prediction\n");
    let mut convergence = String::from("fold,iterations,converged,final_objective,alpha,eta\n");
    for f in &report.folds {
        for (&i, p) in f.test_indices.iter().zip(&f.predictions) {
            let s = &dataset.subjects[i];
            writeln!(predictions, "{},{},{:?},{p:?}", f.fold_id, s.id, s.score).unwrap();
        }
        writeln!(
            convergence,
            "{},{},{},{:?},{:?},{:?}",
            f.fold_id,
            f.objective_trace.len() - 1,
            f.converged,
            f.objective_trace.last().unwrap(),
            f.regularization.alpha,
            f.regularization.eta
        )
        .unwrap();
        let name = fold_name(f.fold_id);
        write_matrix(out.join("betas").join(format!("{name}.mvrl")), f.beta.values())?;
        write_text(&out.join("betas").join(format!("{name}_rows.csv")), &nonzero_rows_csv(&f.beta))?;
        let mut trace = String::from("iteration,objective\n");
        for (k, v) in f.objective_trace.iter().enumerate() {
            writeln!(trace, "{k},{v:?}").unwrap();
        }
        write_text(&out.join("convergence").join(format!("{name}.csv")), &trace)?;
        if let Some(bytes) = f.representation.to_bytes() {
            let path = out.join("models").join(format!("{name}.mvnn"));
            create_dir(path.parent().unwrap())?;
            fs::write(&path, bytes?).map_err(|e| Error::Io { path, source: e })?;
        }
        if !f.converged {
            log::warn!("fold {}: solver stopped at max_iters", f.fold_id);
        }
    }
    write_text(&out.join("predictions.csv"), &predictions)?;
    write_text(&out.join("convergence.csv"), &convergence)?;
    let map = significance_map(&report.betas(), config.significance.t_crit, config.significance.reduction)?;
    write_significance(out, &map)?;
    Ok(map)
}

/// `run`: cross-validates one configuration and writes the results directory.
pub fn cmd_run(args: &GlobalArgs, overrides: &ArchOverrides) -> Result<Value> {
    let mut config: RunConfig = load_json(args.config.as_deref())?;
    resolve_run(args, overrides, &mut config)?;
    let dataset = Dataset::load(&config.dataset)?;
    let lap = build_laplacian(&dataset.mesh);
    let plan = make_folds(dataset.subjects.len(), config.cv.folds, config.cv.seed)?;
    let report = run_cv(
        &dataset.subjects,
        &lap,
        &config.representation,
        &config.regularization,
        &config.fista,
        &plan,
        &config.cv.options(),
    )?;
    let out = config.out.clone();
    create_dir(&out)?;
    let entry = SweepEntry {
        point: GridPoint {
            label: run_label(&config.representation),
            representation: config.representation.clone(),
        },
        report,
    };
    let map = write_run_outputs(&out, &dataset, &entry, &config)?;
    let fold_seeds: Vec<u64> = (0..plan.n_folds()).map(|f| fold_seed(plan.seed, f)).collect();
    let extra = json!({
        "dataset_info": dataset_info(&dataset)?,
        "folds": plan.folds,
        "fold_seeds": fold_seeds,
    });
    write_text(&out.join("manifest.json"), &manifest("run", &config, extra)?)?;
    let r = &entry.report;
    Ok(json!({
        "out": out,
        "config": entry.point.label,
        "mse_mean": r.mean_mse,
        "mse_se": r.se_mse,
        "r2_mean": r.mean_r2,
        "r2_se": r.se_r2,
        "significant_vertices": map.significant_vertices().len(),
    }))
}

/// `sweep`: `run` over a grid of representations; writes the results table.
pub fn cmd_sweep(args: &GlobalArgs, overrides: &ArchOverrides) -> Result<Value> {
    let mut config: SweepConfig = load_json(args.config.as_deref())?;
    resolve_run(args, overrides, &mut config.run)?;
    let grid = config.expand_grid()?;
    let run = &config.run;
    let dataset = Dataset::load(&run.dataset)?;
    let lap = build_laplacian(&dataset.mesh);
    let plan = make_folds(dataset.subjects.len(), run.cv.folds, run.cv.seed)?;
    let entries = sweep(
        &grid,
        &dataset.subjects,
        &lap,
        &run.regularization,
        &run.fista,
        &plan,
        &run.cv.options(),
    )?;
    let out = run.out.clone();
    create_dir(&out)?;
    write_text(&out.join("results.csv"), &results_csv(&entries))?;
    write_text(&out.join("summary.csv"), &summary_csv(&entries))?;
    let extra = json!({
        "dataset_info": dataset_info(&dataset)?,
        "folds": plan.folds,
        "grid": grid,
    });
    write_text(&out.join("manifest.json"), &manifest("sweep", &config, extra)?)?;
    Ok(json!({
        "out": out,
        "points": entries.iter().map(|e| json!({
            "config": e.point.label,
            "mse_mean": e.report.mean_mse,
            "r2_mean": e.report.mean_r2,
        })).collect::<Vec<_>>(),
    }))
}

/// Stored fold maps `betas/fold_*.mvrl` of a run directory, in fold order.
pub fn load_fold_betas(run_dir: &Path) -> Result<Vec<BetaMap>> {
    let dir = run_dir.join("betas");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("fold_") && name.ends_with(".mvrl")
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| BetaMap::new(read_matrix(p)?)).collect()
}

/// `map`: recomputes the significance map from a run's stored fold maps.
pub fn cmd_map(
    args: &GlobalArgs,
    run_dir: &Path,
    t_crit: Option<f64>,
    reduction: Option<MapReduction>,
) -> Result<Value> {
    // thresholds default to the run's own settings
    let stored: Option<RunConfig> = {
        let path = run_dir.join("manifest.json");
        if path.is_file() {
            Some(load_json(Some(&path))?)
        } else {
            None
        }
    };
    let section = stored.map(|c| c.significance).unwrap_or_default();
    let t_crit = t_crit.unwrap_or(section.t_crit);
    let reduction = reduction.unwrap_or(section.reduction);
    let betas = load_fold_betas(run_dir)?;
    let map = significance_map(&betas, t_crit, reduction)?;
    let out = args.out.clone().unwrap_or_else(|| run_dir.to_owned());
    create_dir(&out)?;
    write_significance(&out, &map)?;
    Ok(json!({
        "out": out,
        "folds": betas.len(),
        "t_crit": t_crit,
        "significant_vertices": map.significant_vertices(),
    }))
}

/// `inspect`: one line per path with the matrix or network header.
pub fn cmd_inspect(paths: &[PathBuf]) -> Result<Vec<String>> {
    if paths.is_empty() {
        return Err(Error::config("paths", "nothing to inspect"));
    }
    paths
        .iter()
        .map(|path| {
            let mut magic = [0u8; 4];
            let bytes = fs::read(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            magic.copy_from_slice(bytes.get(..4).ok_or_else(|| Error::Parse(format!("{}: file too short", path.display())))?);
            match &magic {
                b"MVRL" => {
                    let h = read_header(path)?;
                    Ok(format!("{}\tMVRL v{}\t{}x{}", path.display(), h.version, h.rows, h.cols))
                }
                b"MVNN" => {
                    let (header, nets) = decode_container(&bytes)?;
                    let kind = serde_json::from_str::<Value>(&header)
                        .ok()
                        .and_then(|v| v.get("kind").and_then(Value::as_str).map(str::to_owned))
                        .unwrap_or_else(|| "unknown".into());
                    let shapes: Vec<String> = nets
                        .iter()
                        .map(|n| n.dims().iter().map(usize::to_string).collect::<Vec<_>>().join("-"))
                        .collect();
                    Ok(format!("{}\tMVNN\t{kind}\t{}", path.display(), shapes.join(" ")))
                }
                _ => Err(Error::Parse(format!("{}: unknown magic {magic:?}", path.display()))),
            }
        })
        .collect()
}

/// Machine-readable error report.
pub fn error_json(err: &Error) -> String {
    json!({ "error": { "kind": err.kind(), "message": err.to_string() } }).to_string()
}
