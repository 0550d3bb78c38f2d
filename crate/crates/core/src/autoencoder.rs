//! Multi-view autoencoders.
//!
//! Four architectures share one model type:
//!
//! * `mono-task` / `mono-rest`: a plain autoencoder on a single view.
//! * `concat-ae`: one autoencoder on the concatenated views `[x_t, x_r]`.
//! * `mdae`: one encoder per view; the codes are concatenated as
//!   `z = [z_t, z_r]` and fed to two decoders, one per view. Training
//!   minimizes the unweighted sum of the two per-view reconstruction MSEs.
//!
//! Inputs are standardized per feature with statistics from the training
//! samples. With a sigmoid output layer the reconstruction targets are the
//! standardized features min-max mapped to `[0, 1]`.

use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SubjectRecord;
use crate::error::{Error, Result};
use crate::nn::{decode_container, encode_container, mse_loss, mse_loss_grad, Activation, AdamState, Gradients, Mlp};

/// Feature counts of the two views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub d_task: usize,
    pub d_rest: usize,
}

impl ViewSpec {
    pub fn new(d_task: usize, d_rest: usize) -> Result<Self> {
        if d_task == 0 || d_rest == 0 {
            return Err(Error::invalid("view spec", "view dimensions must be positive"));
        }
        Ok(ViewSpec { d_task, d_rest })
    }

    pub fn d_concat(&self) -> usize {
        self.d_task + self.d_rest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchitectureKind {
    MonoTask,
    MonoRest,
    ConcatAe,
    Mdae,
}

impl std::fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::MonoTask => "mono-task",
            Self::MonoRest => "mono-rest",
            Self::ConcatAe => "concat-ae",
            Self::Mdae => "mdae",
        })
    }
}

impl std::str::FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mono-task" => Ok(Self::MonoTask),
            "mono-rest" => Ok(Self::MonoRest),
            "concat-ae" => Ok(Self::ConcatAe),
            "mdae" => Ok(Self::Mdae),
            other => Err(Error::config("arch", format!("unknown architecture {other:?}"))),
        }
    }
}

pub const MIN_ENC: usize = 2;
pub const MAX_ENC: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub kind: ArchitectureKind,
    /// Encoder hidden widths from input side to bottleneck; the decoder
    /// mirrors them. For `mdae` the same list is used for each view.
    pub hidden_dims: Vec<usize>,
    pub enc: usize,
    /// `(enc_t, enc_r)`, MDAE only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enc_split: Option<(usize, usize)>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl ArchitectureConfig {
    pub fn concat_ae(hidden_dims: Vec<usize>, enc: usize) -> Self {
        ArchitectureConfig {
            kind: ArchitectureKind::ConcatAe,
            hidden_dims,
            enc,
            enc_split: None,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
        }
    }

    pub fn mdae(hidden_dims: Vec<usize>, enc_t: usize, enc_r: usize) -> Self {
        ArchitectureConfig {
            kind: ArchitectureKind::Mdae,
            hidden_dims,
            enc: enc_t + enc_r,
            enc_split: Some((enc_t, enc_r)),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
        }
    }

    pub fn with_activations(mut self, hidden: Activation, output: Activation) -> Self {
        self.hidden_activation = hidden;
        self.output_activation = output;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_ENC..=MAX_ENC).contains(&self.enc) {
            return Err(Error::config(
                "enc",
                format!("{} is outside [{MIN_ENC}, {MAX_ENC}]", self.enc),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden_dims", "widths must be positive"));
        }
        if !matches!(self.hidden_activation, Activation::Linear | Activation::Relu) {
            return Err(Error::config("hidden_activation", "must be linear or relu"));
        }
        if !matches!(self.output_activation, Activation::Linear | Activation::Sigmoid) {
            return Err(Error::config("output_activation", "must be linear or sigmoid"));
        }
        match (self.kind, self.enc_split) {
            (ArchitectureKind::Mdae, Some((t, r))) => {
                if t == 0 || r == 0 || t + r != self.enc {
                    return Err(Error::config(
                        "enc_split",
                        format!("({t},{r}) must be positive and sum to enc={}", self.enc),
                    ));
                }
            }
            (ArchitectureKind::Mdae, None) => {
                return Err(Error::config("enc_split", "required for mdae"));
            }
            (_, Some(_)) => {
                return Err(Error::config("enc_split", "only valid for mdae"));
            }
            (_, None) => {}
        }
        Ok(())
    }

    /// Full layer widths of every network, input to output.
    pub fn layer_dims(&self, view: ViewSpec) -> Vec<Vec<usize>> {
        let stack = |input: usize, code: usize, decoder_in: usize| {
            let enc: Vec<usize> = std::iter::once(input)
                .chain(self.hidden_dims.iter().copied())
                .chain(std::iter::once(code))
                .collect();
            let dec: Vec<usize> = std::iter::once(decoder_in)
                .chain(self.hidden_dims.iter().rev().copied())
                .chain(std::iter::once(input))
                .collect();
            (enc, dec)
        };
        match self.kind {
            ArchitectureKind::MonoTask => {
                let (e, d) = stack(view.d_task, self.enc, self.enc);
                vec![e, d]
            }
            ArchitectureKind::MonoRest => {
                let (e, d) = stack(view.d_rest, self.enc, self.enc);
                vec![e, d]
            }
            ArchitectureKind::ConcatAe => {
                let (e, d) = stack(view.d_concat(), self.enc, self.enc);
                vec![e, d]
            }
            ArchitectureKind::Mdae => {
                let (t, r) = self.enc_split.unwrap_or((self.enc / 2, self.enc - self.enc / 2));
                let (et, dt) = stack(view.d_task, t, self.enc);
                let (er, dr) = stack(view.d_rest, r, self.enc);
                vec![et, er, dt, dr]
            }
        }
    }
}

/// Which inputs a catalog row reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatalogInput {
    Task,
    Rest,
    Concat,
}

/// One architecture row: `[input, hidden..., enc, hidden reversed..., input]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub input: CatalogInput,
    pub hidden_dims: Vec<usize>,
}

impl CatalogEntry {
    pub fn layer_dims(&self, view: ViewSpec, enc: usize) -> Vec<usize> {
        let d = match self.input {
            CatalogInput::Task => view.d_task,
            CatalogInput::Rest => view.d_rest,
            CatalogInput::Concat => view.d_concat(),
        };
        std::iter::once(d)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(enc))
            .chain(self.hidden_dims.iter().rev().copied())
            .chain(std::iter::once(d))
            .collect()
    }
}

/// The investigated architectures, one to three hidden layers.
pub fn catalog() -> Vec<CatalogEntry> {
    use CatalogInput::*;
    let rows: [(CatalogInput, &[usize]); 15] = [
        (Task, &[]),
        (Rest, &[]),
        (Concat, &[]),
        (Task, &[120]),
        (Task, &[130]),
        (Rest, &[120]),
        (Rest, &[130]),
        (Concat, &[150]),
        (Concat, &[200]),
        (Task, &[140, 120]),
        (Task, &[140, 130]),
        (Rest, &[140, 120]),
        (Rest, &[140, 130]),
        (Concat, &[250, 150]),
        (Concat, &[200, 130]),
    ];
    rows.into_iter()
        .map(|(input, h)| CatalogEntry {
            input,
            hidden_dims: h.to_vec(),
        })
        .collect()
}

/// The four (hidden, output) activation pairs that were compared.
pub const ACTIVATION_PAIRS: [(Activation, Activation); 4] = [
    (Activation::Linear, Activation::Linear),
    (Activation::Linear, Activation::Sigmoid),
    (Activation::Relu, Activation::Linear),
    (Activation::Relu, Activation::Sigmoid),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 300,
            batch_size: 500,
            learning_rate: 1e-3,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("lr", "must be positive and finite"));
        }
        Ok(())
    }
}

/// Per-feature standardization, optionally followed by a min-max map of the
/// reconstruction target onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_range: Option<Vec<f64>>,
}

impl FeatureScaler {
    pub fn fit(x: ArrayView2<f64>, min_max_target: bool) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::invalid("training data", "no samples"));
        }
        let mean = x.mean_axis(Axis(0)).unwrap();
        let std: Array1<f64> = x
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, &mu)| {
                let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
                // constant features are only centred
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut scaler = FeatureScaler {
            mean: mean.to_vec(),
            std: std.to_vec(),
            target_min: None,
            target_range: None,
        };
        if min_max_target {
            let z = scaler.standardize(x)?;
            let (lo, range): (Vec<f64>, Vec<f64>) = z
                .axis_iter(Axis(1))
                .map(|col| {
                    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let range = if hi > lo { hi - lo } else { 1.0 };
                    (lo, range)
                })
                .unzip();
            scaler.target_min = Some(lo);
            scaler.target_range = Some(range);
        }
        Ok(scaler)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::shape("feature scaler input", self.dim(), x.ncols()));
        }
        let mut out = x.to_owned();
        for (mut col, (&mu, &sd)) in out.axis_iter_mut(Axis(1)).zip(self.mean.iter().zip(&self.std)) {
            col.mapv_inplace(|v| (v - mu) / sd);
        }
        Ok(out)
    }

    /// Reconstruction target for raw features `x`.
    pub fn target(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = self.standardize(x)?;
        if let (Some(lo), Some(range)) = (&self.target_min, &self.target_range) {
            for (mut col, (&l, &r)) in out.axis_iter_mut(Axis(1)).zip(lo.iter().zip(range)) {
                col.mapv_inplace(|v| (v - l) / r);
            }
        }
        Ok(out)
    }
}

/// The four networks of a multi-view deep autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MdaeModel {
    pub encoder_t: Mlp,
    pub encoder_r: Mlp,
    pub decoder_t: Mlp,
    pub decoder_r: Mlp,
}

/// Losses and parameter gradients of one MDAE batch.
#[derive(Debug, Clone)]
pub struct MdaeGradients {
    pub task_loss: f64,
    pub rest_loss: f64,
    /// encoder_t, encoder_r, decoder_t, decoder_r
    pub networks: [Gradients; 4],
}

/// MSE of `decoder(encoder(x))` against `target` and the gradients of both
/// networks.
pub fn autoencoder_gradients(
    encoder: &Mlp,
    decoder: &Mlp,
    x: ArrayView2<f64>,
    target: ArrayView2<f64>,
) -> Result<(f64, Gradients, Gradients)> {
    let enc_trace = encoder.forward_trace(x)?;
    let dec_trace = decoder.forward_trace(enc_trace.output().view())?;
    let (loss, grad) = mse_loss_grad(dec_trace.output().view(), target)?;
    let (dec_grads, grad_code) = decoder.backward_trace(&dec_trace, grad)?;
    let (enc_grads, _) = encoder.backward_trace(&enc_trace, grad_code)?;
    Ok((loss, enc_grads, dec_grads))
}

impl MdaeModel {
    /// Joint loss `MSE_t + MSE_r` split into its terms, with the gradients of
    /// all four networks. Both decoders read the full code `[z_t | z_r]`.
    pub fn gradients(
        &self,
        xt: ArrayView2<f64>,
        xr: ArrayView2<f64>,
        target_t: ArrayView2<f64>,
        target_r: ArrayView2<f64>,
    ) -> Result<MdaeGradients> {
        let enc_t = self.encoder_t.output_dim();
        let et = self.encoder_t.forward_trace(xt)?;
        let er = self.encoder_r.forward_trace(xr)?;
        let z = concatenate![Axis(1), *et.output(), *er.output()];
        let dt = self.decoder_t.forward_trace(z.view())?;
        let dr = self.decoder_r.forward_trace(z.view())?;
        let (task_loss, grad_t) = mse_loss_grad(dt.output().view(), target_t)?;
        let (rest_loss, grad_r) = mse_loss_grad(dr.output().view(), target_r)?;

        let (g_dt, gz_t) = self.decoder_t.backward_trace(&dt, grad_t)?;
        let (g_dr, gz_r) = self.decoder_r.backward_trace(&dr, grad_r)?;
        let grad_z = gz_t + gz_r;
        let (g_et, _) = self
            .encoder_t
            .backward_trace(&et, grad_z.slice(s![.., ..enc_t]).to_owned())?;
        let (g_er, _) = self
            .encoder_r
            .backward_trace(&er, grad_z.slice(s![.., enc_t..]).to_owned())?;
        Ok(MdaeGradients {
            task_loss,
            rest_loss,
            networks: [g_et, g_er, g_dt, g_dr],
        })
    }

    /// Joint loss only.
    pub fn loss(
        &self,
        xt: ArrayView2<f64>,
        xr: ArrayView2<f64>,
        target_t: ArrayView2<f64>,
        target_r: ArrayView2<f64>,
    ) -> Result<f64> {
        let z = self.code(xt, xr)?;
        Ok(mse_loss(self.decoder_t.forward(z.view())?.view(), target_t)?
            + mse_loss(self.decoder_r.forward(z.view())?.view(), target_r)?)
    }

    fn code(&self, xt: ArrayView2<f64>, xr: ArrayView2<f64>) -> Result<Array2<f64>> {
        let zt = self.encoder_t.forward(xt)?;
        let zr = self.encoder_r.forward(xr)?;
        Ok(concatenate![Axis(1), zt, zr])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Networks {
    Single { encoder: Mlp, decoder: Mlp },
    Mdae(MdaeModel),
}

/// A trained autoencoder together with its input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub config: ArchitectureConfig,
    pub view: ViewSpec,
    pub task_scaler: FeatureScaler,
    pub rest_scaler: FeatureScaler,
    pub networks: Networks,
}

/// Epoch-mean training losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_loss: Vec<f64>,
    /// MDAE only: per-view components of `epoch_loss`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub task_loss: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rest_loss: Vec<f64>,
}

fn check_views(view: ViewSpec, task: &ArrayView2<f64>, rest: &ArrayView2<f64>) -> Result<()> {
    if task.ncols() != view.d_task {
        return Err(Error::shape("task view width", view.d_task, task.ncols()));
    }
    if rest.ncols() != view.d_rest {
        return Err(Error::shape("rest view width", view.d_rest, rest.ncols()));
    }
    if task.nrows() != rest.nrows() {
        return Err(Error::shape("paired sample count", task.nrows(), rest.nrows()));
    }
    Ok(())
}

struct Prepared {
    task_scaler: FeatureScaler,
    rest_scaler: FeatureScaler,
    task_in: Array2<f64>,
    rest_in: Array2<f64>,
    task_target: Array2<f64>,
    rest_target: Array2<f64>,
}

fn prepare(
    config: &ArchitectureConfig,
    task: ArrayView2<f64>,
    rest: ArrayView2<f64>,
    training: &TrainingConfig,
) -> Result<(ViewSpec, Prepared)> {
    config.validate()?;
    training.validate()?;
    if task.nrows() == 0 {
        return Err(Error::invalid("training data", "no samples"));
    }
    let view = ViewSpec::new(task.ncols(), rest.ncols())?;
    check_views(view, &task, &rest)?;
    let sigmoid = config.output_activation == Activation::Sigmoid;
    let task_scaler = FeatureScaler::fit(task, sigmoid)?;
    let rest_scaler = FeatureScaler::fit(rest, sigmoid)?;
    Ok((
        view,
        Prepared {
            task_in: task_scaler.standardize(task)?,
            rest_in: rest_scaler.standardize(rest)?,
            task_target: task_scaler.target(task)?,
            rest_target: rest_scaler.target(rest)?,
            task_scaler,
            rest_scaler,
        },
    ))
}

fn batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Trains a single-network autoencoder (`concat-ae`, `mono-task`, `mono-rest`).
///
/// `task` and `rest` hold one sample per row; monomodal kinds never read the
/// other view beyond its shape.
pub fn train_concat_ae(
    task: ArrayView2<f64>,
    rest: ArrayView2<f64>,
    config: &ArchitectureConfig,
    training: &TrainingConfig,
    seed: u64,
) -> Result<(AutoencoderModel, TrainingReport)> {
    if config.kind == ArchitectureKind::Mdae {
        return Err(Error::config("arch", "use train_mdae for mdae"));
    }
    let (view, prep) = prepare(config, task, rest, training)?;
    let (input, target) = match config.kind {
        ArchitectureKind::MonoTask => (prep.task_in.clone(), prep.task_target.clone()),
        ArchitectureKind::MonoRest => (prep.rest_in.clone(), prep.rest_target.clone()),
        _ => (
            concatenate![Axis(1), prep.task_in, prep.rest_in],
            concatenate![Axis(1), prep.task_target, prep.rest_target],
        ),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = config.layer_dims(view);
    let mut encoder = Mlp::init(&dims[0], config.hidden_activation, config.hidden_activation, &mut rng)?;
    let mut decoder = Mlp::init(&dims[1], config.hidden_activation, config.output_activation, &mut rng)?;
    let mut adam_e = AdamState::new(&encoder, training.learning_rate);
    let mut adam_d = AdamState::new(&decoder, training.learning_rate);

    let n = input.nrows();
    let mut report = TrainingReport::default();
    for epoch in 0..training.epochs {
        let mut total = 0.0;
        for idx in batches(n, training.batch_size, &mut rng) {
            let x = input.select(Axis(0), &idx);
            let t = target.select(Axis(0), &idx);
            let (loss, enc_grads, dec_grads) = autoencoder_gradients(&encoder, &decoder, x.view(), t.view())?;
            adam_d.step(&mut decoder, &dec_grads)?;
            adam_e.step(&mut encoder, &enc_grads)?;
            total += loss * idx.len() as f64;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                iteration: epoch,
                value: mean,
            });
        }
        log::debug!("{:?} epoch {epoch}: loss {mean:.6}", config.kind);
        report.epoch_loss.push(mean);
    }
    let model = AutoencoderModel {
        config: config.clone(),
        view,
        task_scaler: prep.task_scaler,
        rest_scaler: prep.rest_scaler,
        networks: Networks::Single { encoder, decoder },
    };
    Ok((model, report))
}

/// Trains the four MDAE networks jointly on the two-term loss.
pub fn train_mdae(
    task: ArrayView2<f64>,
    rest: ArrayView2<f64>,
    config: &ArchitectureConfig,
    training: &TrainingConfig,
    seed: u64,
) -> Result<(AutoencoderModel, TrainingReport)> {
    if config.kind != ArchitectureKind::Mdae {
        return Err(Error::config("arch", "train_mdae needs kind mdae"));
    }
    let (view, prep) = prepare(config, task, rest, training)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = config.layer_dims(view);
    let (h, o) = (config.hidden_activation, config.output_activation);
    let mut model = MdaeModel {
        encoder_t: Mlp::init(&dims[0], h, h, &mut rng)?,
        encoder_r: Mlp::init(&dims[1], h, h, &mut rng)?,
        decoder_t: Mlp::init(&dims[2], h, o, &mut rng)?,
        decoder_r: Mlp::init(&dims[3], h, o, &mut rng)?,
    };
    let lr = training.learning_rate;
    let mut adam = [
        AdamState::new(&model.encoder_t, lr),
        AdamState::new(&model.encoder_r, lr),
        AdamState::new(&model.decoder_t, lr),
        AdamState::new(&model.decoder_r, lr),
    ];

    let n = prep.task_in.nrows();
    let mut report = TrainingReport::default();
    for epoch in 0..training.epochs {
        let (mut total_t, mut total_r) = (0.0, 0.0);
        for idx in batches(n, training.batch_size, &mut rng) {
            let xt = prep.task_in.select(Axis(0), &idx);
            let xr = prep.rest_in.select(Axis(0), &idx);
            let tt = prep.task_target.select(Axis(0), &idx);
            let tr = prep.rest_target.select(Axis(0), &idx);

            let g = model.gradients(xt.view(), xr.view(), tt.view(), tr.view())?;
            let (loss_t, loss_r) = (g.task_loss, g.rest_loss);
            let [g_et, g_er, g_dt, g_dr] = g.networks;

            adam[0].step(&mut model.encoder_t, &g_et)?;
            adam[1].step(&mut model.encoder_r, &g_er)?;
            adam[2].step(&mut model.decoder_t, &g_dt)?;
            adam[3].step(&mut model.decoder_r, &g_dr)?;
            total_t += loss_t * idx.len() as f64;
            total_r += loss_r * idx.len() as f64;
        }
        let (mt, mr) = (total_t / n as f64, total_r / n as f64);
        if !(mt + mr).is_finite() {
            return Err(Error::Diverged {
                iteration: epoch,
                value: mt + mr,
            });
        }
        log::debug!("mdae epoch {epoch}: loss {:.6} (task {mt:.6}, rest {mr:.6})", mt + mr);
        report.epoch_loss.push(mt + mr);
        report.task_loss.push(mt);
        report.rest_loss.push(mr);
    }
    let model = AutoencoderModel {
        config: config.clone(),
        view,
        task_scaler: prep.task_scaler,
        rest_scaler: prep.rest_scaler,
        networks: Networks::Mdae(model),
    };
    Ok((model, report))
}

/// Dispatches to [`train_mdae`] or [`train_concat_ae`] by `config.kind`.
pub fn train(
    task: ArrayView2<f64>,
    rest: ArrayView2<f64>,
    config: &ArchitectureConfig,
    training: &TrainingConfig,
    seed: u64,
) -> Result<(AutoencoderModel, TrainingReport)> {
    match config.kind {
        ArchitectureKind::Mdae => train_mdae(task, rest, config, training, seed),
        _ => train_concat_ae(task, rest, config, training, seed),
    }
}

impl AutoencoderModel {
    pub fn enc(&self) -> usize {
        self.config.enc
    }

    /// Latent codes for paired samples (one per row); `N × enc`.
    pub fn encode_batch(&self, task: ArrayView2<f64>, rest: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_views(self.view, &task, &rest)?;
        match (&self.networks, self.config.kind) {
            (Networks::Mdae(m), _) => m.code(
                self.task_scaler.standardize(task)?.view(),
                self.rest_scaler.standardize(rest)?.view(),
            ),
            (Networks::Single { encoder, .. }, ArchitectureKind::MonoTask) => {
                encoder.forward(self.task_scaler.standardize(task)?.view())
            }
            (Networks::Single { encoder, .. }, ArchitectureKind::MonoRest) => {
                encoder.forward(self.rest_scaler.standardize(rest)?.view())
            }
            (Networks::Single { encoder, .. }, _) => {
                let x = concatenate![
                    Axis(1),
                    self.task_scaler.standardize(task)?,
                    self.rest_scaler.standardize(rest)?
                ];
                encoder.forward(x.view())
            }
        }
    }

    /// Latent code of one `(x_t, x_r)` pair.
    pub fn encode(&self, x_task: &[f64], x_rest: &[f64]) -> Result<Array1<f64>> {
        let t = ArrayView2::from_shape((1, x_task.len()), x_task)
            .map_err(|e| Error::shape("task sample", self.view.d_task, e))?;
        let r = ArrayView2::from_shape((1, x_rest.len()), x_rest)
            .map_err(|e| Error::shape("rest sample", self.view.d_rest, e))?;
        Ok(self.encode_batch(t, r)?.row(0).to_owned())
    }

    /// `Z ∈ R^{m×enc}`, row `j` being the code of vertex `j`.
    pub fn encode_subject(&self, subject: &SubjectRecord) -> Result<Array2<f64>> {
        if subject.task.nrows() != subject.rest.nrows() {
            return Err(Error::shape(
                "subject vertex count",
                subject.task.nrows(),
                subject.rest.nrows(),
            ));
        }
        self.encode_batch(subject.task.view(), subject.rest.view())
    }

    /// Reconstruction MSE in target space, summed over the reconstructed views
    /// for MDAE (matching its training loss).
    pub fn reconstruction_mse(&self, task: ArrayView2<f64>, rest: ArrayView2<f64>) -> Result<f64> {
        check_views(self.view, &task, &rest)?;
        let mse = crate::nn::mse_loss;
        match &self.networks {
            Networks::Mdae(m) => {
                let z = m.code(
                    self.task_scaler.standardize(task)?.view(),
                    self.rest_scaler.standardize(rest)?.view(),
                )?;
                let rt = m.decoder_t.forward(z.view())?;
                let rr = m.decoder_r.forward(z.view())?;
                Ok(mse(rt.view(), self.task_scaler.target(task)?.view())?
                    + mse(rr.view(), self.rest_scaler.target(rest)?.view())?)
            }
            Networks::Single { decoder, .. } => {
                let code = self.encode_batch(task, rest)?;
                let out = decoder.forward(code.view())?;
                let target = match self.config.kind {
                    ArchitectureKind::MonoTask => self.task_scaler.target(task)?,
                    ArchitectureKind::MonoRest => self.rest_scaler.target(rest)?,
                    _ => concatenate![
                        Axis(1),
                        self.task_scaler.target(task)?,
                        self.rest_scaler.target(rest)?
                    ],
                };
                mse(out.view(), target.view())
            }
        }
    }

    fn header(&self) -> ModelHeader {
        ModelHeader {
            kind: self.config.kind,
            view: self.view,
            config: self.config.clone(),
            enc_split: self.config.enc_split,
            task_scaler: self.task_scaler.clone(),
            rest_scaler: self.rest_scaler.clone(),
        }
    }

    /// `MVNN` container with a JSON header; networks are stored in the order
    /// encoder, decoder (single) or encoder_t, encoder_r, decoder_t, decoder_r.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_string(&self.header())?;
        let nets: Vec<&Mlp> = match &self.networks {
            Networks::Single { encoder, decoder } => vec![encoder, decoder],
            Networks::Mdae(m) => vec![&m.encoder_t, &m.encoder_r, &m.decoder_t, &m.decoder_r],
        };
        Ok(encode_container(&header, &nets))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, nets) = decode_container(bytes)?;
        let header: ModelHeader = serde_json::from_str(&header)?;
        header.config.validate()?;
        let expected: Vec<Vec<usize>> = header.config.layer_dims(header.view);
        let found: Vec<Vec<usize>> = nets.iter().map(Mlp::dims).collect();
        if expected != found {
            return Err(Error::shape(
                "autoencoder networks",
                format!("{expected:?}"),
                format!("{found:?}"),
            ));
        }
        let mut nets = nets.into_iter();
        let networks = match header.kind {
            ArchitectureKind::Mdae => Networks::Mdae(MdaeModel {
                encoder_t: nets.next().unwrap(),
                encoder_r: nets.next().unwrap(),
                decoder_t: nets.next().unwrap(),
                decoder_r: nets.next().unwrap(),
            }),
            _ => Networks::Single {
                encoder: nets.next().unwrap(),
                decoder: nets.next().unwrap(),
            },
        };
        Ok(AutoencoderModel {
            config: header.config,
            view: header.view,
            task_scaler: header.task_scaler,
            rest_scaler: header.rest_scaler,
            networks,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    kind: ArchitectureKind,
    view: ViewSpec,
    config: ArchitectureConfig,
    enc_split: Option<(usize, usize)>,
    task_scaler: FeatureScaler,
    rest_scaler: FeatureScaler,
}
