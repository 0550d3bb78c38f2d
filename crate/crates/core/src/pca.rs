//! PCA baseline via a dense thin SVD of the centred data.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Mlp};

/// Row cap above which `fit_pca` works on a seeded random subsample.
pub const PCA_ROW_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `enc × D`, orthonormal rows.
    pub components: Array2<f64>,
    /// Sample variance (`N − 1` denominator) along each component.
    pub explained_variance: Array1<f64>,
}

/// Top-`enc` principal directions of `data` (`N × D`, one sample per row).
///
/// Each component is sign-fixed so its largest-magnitude entry is positive.
pub fn fit_pca(data: ArrayView2<f64>, enc: usize, seed: u64) -> Result<PcaModel> {
    let (n, d) = data.dim();
    if n < 2 {
        return Err(Error::invalid("pca input", format!("needs at least 2 samples, got {n}")));
    }
    if enc == 0 || enc > n.min(d) {
        return Err(Error::config(
            "enc",
            format!("{enc} must be in [1, min(N, D) = {}]", n.min(d)),
        ));
    }
    let data = if n > PCA_ROW_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = sample(&mut rng, n, PCA_ROW_CAP).into_vec();
        rows.sort_unstable();
        data.select(Axis(0), &rows)
    } else {
        data.to_owned()
    };
    let n = data.nrows();
    let mean = data.mean_axis(Axis(0)).unwrap();
    let centred = &data - &mean;
    let x = DMatrix::from_row_iterator(n, d, centred.iter().copied());
    let svd = x.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut components = Array2::zeros((enc, d));
    let mut explained = Array1::zeros(enc);
    for (k, &idx) in order.iter().take(enc).enumerate() {
        let mut row: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.row_mut(k).assign(&Array1::from(row));
        let s = svd.singular_values[idx];
        explained[k] = s * s / (n - 1) as f64;
    }
    if explained.iter().any(|&v| v <= 1e-12 * explained[0].max(f64::MIN_POSITIVE)) {
        log::warn!("pca: data is rank-deficient for enc={enc}");
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
    })
}

impl PcaModel {
    pub fn enc(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `components · (x − mean)`.
    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape("pca input", self.dim(), x.len()));
        }
        Ok(self.components.dot(&(&x - &self.mean)))
    }

    pub fn encode_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::shape("pca input", self.dim(), x.ncols()));
        }
        Ok((&x - &self.mean).dot(&self.components.t()))
    }

    pub fn decode_batch(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.enc() {
            return Err(Error::shape("pca code", self.enc(), z.ncols()));
        }
        Ok(z.dot(&self.components) + &self.mean)
    }

    /// Mean squared reconstruction error over all entries.
    pub fn reconstruction_mse(&self, x: ArrayView2<f64>) -> Result<f64> {
        let rec = self.decode_batch(self.encode_batch(x)?.view())?;
        crate::nn::mse_loss(rec.view(), x)
    }

    /// The projection as a single linear layer, for `MVNN` storage.
    pub fn as_network(&self) -> Mlp {
        let weights = self.components.t().to_owned();
        let bias = -self.components.dot(&self.mean);
        Mlp::new(vec![DenseLayer::new(weights, bias, Activation::Linear).expect("consistent")])
            .expect("one layer")
    }

    /// Rebuilds a model from [`PcaModel::as_network`] plus the stored mean and
    /// variances.
    pub fn from_network(net: &Mlp, explained_variance: Array1<f64>, mean: Array1<f64>) -> Result<Self> {
        let layer = match net.layers() {
            [layer] if layer.activation == Activation::Linear => layer,
            _ => return Err(Error::invalid("pca network", "expected one linear layer")),
        };
        let components = layer.weights.t().to_owned();
        if mean.len() != components.ncols() || explained_variance.len() != components.nrows() {
            return Err(Error::shape("pca network", components.ncols(), mean.len()));
        }
        Ok(PcaModel {
            mean,
            components,
            explained_variance,
        })
    }
}
