//! JSON run and sweep configurations.

use std::fs;
use std::path::{Path, PathBuf};

use mvtrace::autoencoder::{ArchitectureConfig, ArchitectureKind, TrainingConfig};
use mvtrace::eval::{CvOptions, GridPoint, MapReduction, DEFAULT_T_CRIT};
use mvtrace::nn::Activation;
use mvtrace::representation::RepresentationSpec;
use mvtrace::trace::{FistaConfig, RegularizationConfig};
use mvtrace::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
    pub seed: u64,
    pub center: bool,
    pub scale: bool,
    pub jobs: usize,
    pub inner_grid: Vec<RegularizationConfig>,
    pub inner_folds: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        let options = CvOptions::default();
        CvSection {
            folds: 10,
            seed: 0,
            center: options.center,
            scale: options.scale,
            jobs: options.jobs,
            inner_grid: options.inner_grid,
            inner_folds: options.inner_folds,
        }
    }
}

impl CvSection {
    pub fn options(&self) -> CvOptions {
        CvOptions {
            center: self.center,
            scale: self.scale,
            jobs: self.jobs,
            inner_grid: self.inner_grid.clone(),
            inner_folds: self.inner_folds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignificanceSection {
    pub t_crit: f64,
    pub reduction: MapReduction,
}

impl Default for SignificanceSection {
    fn default() -> Self {
        SignificanceSection {
            t_crit: DEFAULT_T_CRIT,
            reduction: MapReduction::SignedNorm,
        }
    }
}

/// Hidden widths used when `--arch` switches the representation to an
/// autoencoder that the config file did not describe.
pub fn default_hidden_dims(kind: ArchitectureKind) -> Vec<usize> {
    match kind {
        ArchitectureKind::Mdae => vec![24],
        _ => vec![32],
    }
}

pub fn default_representation() -> RepresentationSpec {
    RepresentationSpec::Autoencoder {
        arch: ArchitectureConfig::mdae(default_hidden_dims(ArchitectureKind::Mdae), 8, 2),
        training: TrainingConfig::default(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub representation: RepresentationSpec,
    pub regularization: RegularizationConfig,
    pub fista: FistaConfig,
    pub cv: CvSection,
    pub significance: SignificanceSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::from("data/desk"),
            out: PathBuf::from("results/run"),
            representation: default_representation(),
            regularization: RegularizationConfig::default(),
            fista: FistaConfig::default(),
            cv: CvSection::default(),
            significance: SignificanceSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub run: RunConfig,
    /// Explicit grid points.
    pub grid: Vec<GridPoint>,
    /// The base representation at each of these latent sizes.
    pub enc_grid: Vec<usize>,
    /// The base MDAE at each `(enc_t, enc_r)`.
    pub split_grid: Vec<(usize, usize)>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            run: RunConfig {
                out: PathBuf::from("results/sweep"),
                ..RunConfig::default()
            },
            grid: Vec::new(),
            enc_grid: Vec::new(),
            split_grid: Vec::new(),
        }
    }
}

fn with_enc(spec: &RepresentationSpec, enc: usize) -> Result<RepresentationSpec> {
    Ok(match spec {
        RepresentationSpec::Passthrough { standardize, .. } => RepresentationSpec::Passthrough {
            columns: enc,
            standardize: *standardize,
        },
        RepresentationSpec::Pca { .. } => RepresentationSpec::Pca { enc },
        RepresentationSpec::Autoencoder { arch, training } => {
            let mut arch = arch.clone();
            arch.enc = enc;
            if arch.kind == ArchitectureKind::Mdae {
                // keep the task share of the base split
                let (t, r) = arch.enc_split.unwrap_or((1, 1));
                let enc_t = ((enc * t) as f64 / (t + r) as f64).round().clamp(1.0, (enc - 1) as f64) as usize;
                arch.enc_split = Some((enc_t, enc - enc_t));
            }
            RepresentationSpec::Autoencoder {
                arch,
                training: *training,
            }
        }
        RepresentationSpec::Projection { .. } => {
            return Err(Error::config("enc_grid", "a fixed projection has no latent size to vary"))
        }
    })
}

fn spec_label(spec: &RepresentationSpec) -> String {
    match spec {
        RepresentationSpec::Passthrough { columns, .. } => format!("raw-{columns}"),
        RepresentationSpec::Pca { enc } => format!("pca-{enc}"),
        RepresentationSpec::Autoencoder { arch, .. } => {
            let kind = arch.kind;
            let acts = format!("{}-{}", arch.hidden_activation, arch.output_activation);
            match arch.enc_split {
                Some((t, r)) => format!("{kind}-{acts}-{t}+{r}"),
                None => format!("{kind}-{acts}-{}", arch.enc),
            }
        }
        RepresentationSpec::Projection { task, .. } => format!("projection-{}", task.ncols()),
    }
}

impl SweepConfig {
    /// Explicit points, then the `enc_grid` points, then the `split_grid` points.
    pub fn expand_grid(&self) -> Result<Vec<GridPoint>> {
        let base = &self.run.representation;
        let mut points = self.grid.clone();
        for &enc in &self.enc_grid {
            let spec = with_enc(base, enc)?;
            points.push(GridPoint {
                label: spec_label(&spec),
                representation: spec,
            });
        }
        for &(t, r) in &self.split_grid {
            let RepresentationSpec::Autoencoder { arch, training } = base else {
                return Err(Error::config("split_grid", "needs an mdae base representation"));
            };
            if arch.kind != ArchitectureKind::Mdae {
                return Err(Error::config("split_grid", "needs an mdae base representation"));
            }
            let spec = RepresentationSpec::Autoencoder {
                arch: ArchitectureConfig::mdae(arch.hidden_dims.clone(), t, r)
                    .with_activations(arch.hidden_activation, arch.output_activation),
                training: *training,
            };
            points.push(GridPoint {
                label: spec_label(&spec),
                representation: spec,
            });
        }
        if points.is_empty() {
            return Err(Error::config("grid", "sweep grid is empty"));
        }
        Ok(points)
    }
}

/// Label used for a single run's rows in the results tables.
pub fn run_label(spec: &RepresentationSpec) -> String {
    spec_label(spec)
}

/// Command-line overrides of the representation.
#[derive(Debug, Clone, Default)]
pub struct ArchOverrides {
    pub arch: Option<ArchitectureKind>,
    pub enc: Option<usize>,
    pub enc_split: Option<(usize, usize)>,
    pub hidden_act: Option<Activation>,
    pub output_act: Option<Activation>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
}

impl ArchOverrides {
    pub fn is_empty(&self) -> bool {
        self.arch.is_none()
            && self.enc.is_none()
            && self.enc_split.is_none()
            && self.hidden_act.is_none()
            && self.output_act.is_none()
            && self.epochs.is_none()
            && self.batch.is_none()
            && self.lr.is_none()
    }

    pub fn apply(&self, spec: &mut RepresentationSpec) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        if !matches!(spec, RepresentationSpec::Autoencoder { .. }) {
            if self.arch.is_none() {
                if let (Some(enc), true) = (self.enc, self.only_enc()) {
                    *spec = with_enc(spec, enc)?;
                    return Ok(());
                }
                return Err(Error::config("arch", "autoencoder flags need an autoencoder representation or --arch"));
            }
            let kind = self.arch.unwrap();
            *spec = RepresentationSpec::Autoencoder {
                arch: ArchitectureConfig {
                    kind,
                    hidden_dims: default_hidden_dims(kind),
                    enc: 10,
                    enc_split: (kind == ArchitectureKind::Mdae).then_some((5, 5)),
                    hidden_activation: Activation::Relu,
                    output_activation: Activation::Linear,
                },
                training: TrainingConfig::default(),
            };
        }
        let RepresentationSpec::Autoencoder { arch, training } = spec else {
            unreachable!()
        };
        if let Some(kind) = self.arch {
            if kind != arch.kind {
                arch.hidden_dims = default_hidden_dims(kind);
            }
            arch.kind = kind;
            match kind {
                ArchitectureKind::Mdae if arch.enc_split.is_none() => {
                    arch.enc_split = Some((arch.enc - arch.enc / 2, arch.enc / 2));
                }
                ArchitectureKind::Mdae => {}
                _ => arch.enc_split = None,
            }
        }
        if let Some((t, r)) = self.enc_split {
            arch.enc_split = Some((t, r));
            arch.enc = t + r;
        }
        if let Some(enc) = self.enc {
            if self.enc_split.is_some() && enc != arch.enc {
                return Err(Error::config("enc", format!("--enc {enc} disagrees with --enc-split sum {}", arch.enc)));
            }
            if self.enc_split.is_none() {
                let rebuilt = with_enc(
                    &RepresentationSpec::Autoencoder {
                        arch: arch.clone(),
                        training: *training,
                    },
                    enc,
                )?;
                if let RepresentationSpec::Autoencoder { arch: a, .. } = rebuilt {
                    *arch = a;
                }
            }
        }
        if let Some(h) = self.hidden_act {
            arch.hidden_activation = h;
        }
        if let Some(o) = self.output_act {
            arch.output_activation = o;
        }
        if let Some(e) = self.epochs {
            training.epochs = e;
        }
        if let Some(b) = self.batch {
            training.batch_size = b;
        }
        if let Some(lr) = self.lr {
            training.learning_rate = lr;
        }
        spec.validate()
    }

    fn only_enc(&self) -> bool {
        self.enc_split.is_none()
            && self.hidden_act.is_none()
            && self.output_act.is_none()
            && self.epochs.is_none()
            && self.batch.is_none()
            && self.lr.is_none()
    }
}

/// Reads a JSON config. A `manifest.json` written by an earlier run is
/// accepted too; its `config` member is used.
pub fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let value = match value {
        serde_json::Value::Object(mut map) if map.contains_key("manifest_version") => {
            map.remove("config").ok_or_else(|| Error::config("config", "manifest has no config"))?
        }
        other => other,
    };
    serde_json::from_value(value).map_err(|e| Error::config(field_of(&e.to_string()), e.to_string()))
}

/// Best-effort field name from a serde error message.
fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "config".into())
}
