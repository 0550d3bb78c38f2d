//! Per-vertex latent representations fitted on training subjects and used to
//! build each subject's `Z ∈ R^{m×d}`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, ArchitectureConfig, AutoencoderModel, FeatureScaler, TrainingConfig};
use crate::data::{stack_views, SubjectRecord};
use crate::error::{Error, Result};
use crate::nn::encode_container;
use crate::pca::{fit_pca, PcaModel};

/// How to turn `(X_t, X_r)` into `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RepresentationSpec {
    /// The concatenated views `[X_t | X_r]`, truncated or zero-padded to
    /// `columns`. This is the raw-data baseline.
    Passthrough {
        columns: usize,
        #[serde(default)]
        standardize: bool,
    },
    /// PCA of the standardized concatenated views.
    Pca { enc: usize },
    Autoencoder {
        arch: ArchitectureConfig,
        #[serde(default)]
        training: TrainingConfig,
    },
    /// Fixed linear read-out `Z = X_t·task + X_r·rest`; nothing is fitted.
    Projection { task: Array2<f64>, rest: Array2<f64> },
}

impl RepresentationSpec {
    pub fn latent_dim(&self) -> usize {
        match self {
            RepresentationSpec::Passthrough { columns, .. } => *columns,
            RepresentationSpec::Pca { enc } => *enc,
            RepresentationSpec::Autoencoder { arch, .. } => arch.enc,
            RepresentationSpec::Projection { task, .. } => task.ncols(),
        }
    }

    /// `(enc_t, enc_r)` for split bottlenecks.
    pub fn enc_split(&self) -> Option<(usize, usize)> {
        match self {
            RepresentationSpec::Autoencoder { arch, .. } => arch.enc_split,
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RepresentationSpec::Passthrough { columns, .. } if *columns == 0 => {
                Err(Error::config("columns", "must be positive"))
            }
            RepresentationSpec::Pca { enc } if *enc == 0 => Err(Error::config("enc", "must be positive")),
            RepresentationSpec::Autoencoder { arch, training } => {
                arch.validate()?;
                training.validate()
            }
            RepresentationSpec::Projection { task, rest } if task.ncols() != rest.ncols() || task.ncols() == 0 => {
                Err(Error::config("projection", "task and rest maps need the same positive width"))
            }
            _ => Ok(()),
        }
    }
}

/// A representation after fitting on training subjects.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedRepresentation {
    Passthrough {
        columns: usize,
        scalers: Option<(FeatureScaler, FeatureScaler)>,
    },
    Pca {
        scalers: (FeatureScaler, FeatureScaler),
        model: PcaModel,
    },
    Autoencoder {
        model: Box<AutoencoderModel>,
        final_loss: f64,
    },
    Projection { task: Array2<f64>, rest: Array2<f64> },
}

fn standardized_concat(scalers: &(FeatureScaler, FeatureScaler), task: ArrayView2<f64>, rest: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(concatenate![Axis(1), scalers.0.standardize(task)?, scalers.1.standardize(rest)?])
}

/// Fits `spec` on the vertex samples of `training` subjects only.
pub fn fit_representation(spec: &RepresentationSpec, training: &[&SubjectRecord], seed: u64) -> Result<FittedRepresentation> {
    spec.validate()?;
    let (task, rest) = stack_views(training)?;
    let scalers = || -> Result<(FeatureScaler, FeatureScaler)> {
        Ok((FeatureScaler::fit(task.view(), false)?, FeatureScaler::fit(rest.view(), false)?))
    };
    Ok(match spec {
        RepresentationSpec::Passthrough { columns, standardize } => FittedRepresentation::Passthrough {
            columns: *columns,
            scalers: if *standardize { Some(scalers()?) } else { None },
        },
        RepresentationSpec::Pca { enc } => {
            let scalers = scalers()?;
            let x = standardized_concat(&scalers, task.view(), rest.view())?;
            let model = fit_pca(x.view(), *enc, seed)?;
            FittedRepresentation::Pca { scalers, model }
        }
        RepresentationSpec::Autoencoder { arch, training } => {
            let (model, report) = autoencoder::train(task.view(), rest.view(), arch, training, seed)?;
            FittedRepresentation::Autoencoder {
                model: Box::new(model),
                final_loss: report.epoch_loss.last().copied().unwrap_or(f64::NAN),
            }
        }
        RepresentationSpec::Projection { task: p_t, rest: p_r } => {
            if p_t.nrows() != task.ncols() || p_r.nrows() != rest.ncols() {
                return Err(Error::shape(
                    "projection rows (d_task, d_rest)",
                    format!("({}, {})", task.ncols(), rest.ncols()),
                    format!("({}, {})", p_t.nrows(), p_r.nrows()),
                ));
            }
            FittedRepresentation::Projection {
                task: p_t.clone(),
                rest: p_r.clone(),
            }
        }
    })
}

#[derive(Serialize)]
struct PcaHeader<'a> {
    kind: &'static str,
    mean: &'a Array1<f64>,
    explained_variance: &'a Array1<f64>,
    task_scaler: &'a FeatureScaler,
    rest_scaler: &'a FeatureScaler,
}

impl FittedRepresentation {
    /// `MVNN` container bytes for fitted models; `None` when nothing was
    /// learned (passthrough, projection).
    pub fn to_bytes(&self) -> Option<Result<Vec<u8>>> {
        match self {
            FittedRepresentation::Autoencoder { model, .. } => Some(model.to_bytes()),
            FittedRepresentation::Pca { scalers, model } => {
                let header = PcaHeader {
                    kind: "pca",
                    mean: &model.mean,
                    explained_variance: &model.explained_variance,
                    task_scaler: &scalers.0,
                    rest_scaler: &scalers.1,
                };
                Some(
                    serde_json::to_string(&header)
                        .map(|json| encode_container(&json, &[&model.as_network()]))
                        .map_err(Error::from),
                )
            }
            _ => None,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            FittedRepresentation::Passthrough { columns, .. } => *columns,
            FittedRepresentation::Pca { model, .. } => model.enc(),
            FittedRepresentation::Autoencoder { model, .. } => model.enc(),
            FittedRepresentation::Projection { task, .. } => task.ncols(),
        }
    }

    /// `Z` for one subject, `m × latent_dim`.
    pub fn encode_subject(&self, subject: &SubjectRecord) -> Result<Array2<f64>> {
        let (task, rest) = (subject.task.view(), subject.rest.view());
        if task.nrows() != rest.nrows() {
            return Err(Error::shape("subject vertex count", task.nrows(), rest.nrows()));
        }
        match self {
            FittedRepresentation::Passthrough { columns, scalers } => {
                let x = match scalers {
                    Some(sc) => standardized_concat(sc, task, rest)?,
                    None => concatenate![Axis(1), task, rest],
                };
                let mut z = Array2::zeros((x.nrows(), *columns));
                let keep = (*columns).min(x.ncols());
                z.slice_mut(s![.., ..keep]).assign(&x.slice(s![.., ..keep]));
                Ok(z)
            }
            FittedRepresentation::Pca { scalers, model } => {
                model.encode_batch(standardized_concat(scalers, task, rest)?.view())
            }
            FittedRepresentation::Autoencoder { model, .. } => model.encode_subject(subject),
            FittedRepresentation::Projection { task: p_t, rest: p_r } => {
                if task.ncols() != p_t.nrows() || rest.ncols() != p_r.nrows() {
                    return Err(Error::shape("subject view widths", p_t.nrows() + p_r.nrows(), task.ncols() + rest.ncols()));
                }
                Ok(task.dot(p_t) + rest.dot(p_r))
            }
        }
    }
}
