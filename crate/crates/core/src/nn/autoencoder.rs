use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{apply_stack, Activation, DenseLayer};
use crate::error::{Error, Result};

const ARTIFACT_FORMAT: &str = "failsift-autoencoder";
const ARTIFACT_VERSION: u32 = 1;

/// Encoder layer widths `[d, h_1, …, m]`, strictly decreasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub dims: Vec<usize>,
}

impl EncoderSpec {
    /// Geometric interpolation from `d` down to `m` over `depth` layers:
    /// `dims[l] = round(d · (m/d)^(l/depth))`, clamped so every step shrinks
    /// by at least one unit.
    pub fn geometric(d: usize, m: usize, depth: usize) -> Result<Self> {
        if m == 0 || d <= m {
            return Err(Error::InvalidDims(format!("need d > m >= 1, got d = {d}, m = {m}")));
        }
        if !(2..=4).contains(&depth) {
            return Err(Error::InvalidDims(format!("depth must be 2..=4, got {depth}")));
        }
        if d - m < depth {
            return Err(Error::InvalidDims(format!(
                "cannot shrink {d} to {m} strictly over {depth} layers"
            )));
        }
        let ratio = m as f64 / d as f64;
        let mut dims = vec![d];
        for l in 1..depth {
            let raw = (d as f64 * ratio.powf(l as f64 / depth as f64)).round() as usize;
            let upper = dims[l - 1] - 1;
            let lower = m + (depth - l);
            dims.push(raw.clamp(lower, upper));
        }
        dims.push(m);
        Ok(EncoderSpec { dims })
    }

    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn bottleneck(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }
}

/// How raw features are scaled before the network sees them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputScaling {
    /// Every column to zero mean and unit variance.
    #[default]
    Column,
    /// Columns centred, then one common factor bringing the mean column
    /// variance to 1. Relative distances between rows are preserved.
    Global,
}

/// Per-column shift and scale. Constant columns map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    /// Multiplier applied after centring; 0 for constant columns.
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit_with(x: ArrayView2<f64>, scaling: InputScaling) -> Self {
        let column = Self::fit(x);
        match scaling {
            InputScaling::Column => column,
            InputScaling::Global => {
                let live: Vec<f64> = column.scale.iter().filter(|s| **s > 0.0).map(|s| 1.0 / (s * s)).collect();
                let common = if live.is_empty() {
                    0.0
                } else {
                    1.0 / (live.iter().sum::<f64>() / live.len() as f64).sqrt()
                };
                let scale = column.scale.mapv(|s| if s > 0.0 { common } else { 0.0 });
                Standardizer { mean: column.mean, scale }
            }
        }
    }

    /// Zero mean, unit variance per column.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let mut var = Array1::<f64>::zeros(x.ncols());
        for row in x.rows() {
            for (j, v) in row.iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        let scale = var.mapv(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                1.0 / sd
            } else {
                0.0
            }
        });
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        out -= &self.mean;
        out *= &self.scale;
        out
    }
}

/// Symmetric fully connected autoencoder. Hidden layers use rectifiers; the
/// bottleneck and the reconstruction are linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub spec: EncoderSpec,
    pub encoder: Vec<DenseLayer>,
    /// Mirror of the encoder: `decoder[i]` maps `dims[L-i]` to `dims[L-i-1]`.
    pub decoder: Vec<DenseLayer>,
    /// Fitted on the training data; applied by [`AutoencoderModel::encode`].
    pub standardizer: Option<Standardizer>,
}

pub fn init_autoencoder(d: usize, m: usize, depth: usize, seed: u64) -> Result<AutoencoderModel> {
    AutoencoderModel::new(EncoderSpec::geometric(d, m, depth)?, seed)
}

impl AutoencoderModel {
    pub fn new(spec: EncoderSpec, seed: u64) -> Result<Self> {
        if spec.dims.len() < 2 || spec.dims.windows(2).any(|w| w[1] >= w[0]) || spec.bottleneck() == 0 {
            return Err(Error::InvalidDims(format!("{:?} is not strictly decreasing", spec.dims)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = spec.depth();
        let encoder = (0..depth)
            .map(|l| {
                let act = if l + 1 == depth { Activation::Linear } else { Activation::Rectifier };
                DenseLayer::glorot(spec.dims[l], spec.dims[l + 1], act, &mut rng)
            })
            .collect();
        let decoder = (0..depth)
            .map(|i| {
                let (from, to) = (spec.dims[depth - i], spec.dims[depth - i - 1]);
                let act = if i + 1 == depth { Activation::Linear } else { Activation::Rectifier };
                DenseLayer::glorot(from, to, act, &mut rng)
            })
            .collect();
        Ok(AutoencoderModel {
            spec,
            encoder,
            decoder,
            standardizer: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn bottleneck(&self) -> usize {
        self.spec.bottleneck()
    }

    pub fn depth(&self) -> usize {
        self.spec.depth()
    }

    /// Index of the decoder layer paired with encoder layer `l`.
    pub fn mirror(&self, l: usize) -> usize {
        self.depth() - 1 - l
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.iter().chain(&self.decoder).all(DenseLayer::is_finite)
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Applies the stored standardizer, if any.
    pub fn prepare(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match &self.standardizer {
            Some(s) => s.transform(x),
            None => x.to_owned(),
        }
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: width,
            });
        }
        Ok(())
    }

    /// Embedding of one raw feature vector.
    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_width(x.len())?;
        let row = x.insert_axis(Axis(0));
        Ok(self.encode_batch(row)?.row(0).to_owned())
    }

    /// Embeddings of raw feature rows; rows are independent.
    pub fn encode_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(x.ncols())?;
        let prepared = self.prepare(x);
        Ok(apply_stack(&self.encoder, prepared.view()))
    }

    /// Reconstruction of already standardized rows.
    pub fn reconstruct_prepared(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let z = apply_stack(&self.encoder, x);
        apply_stack(&self.decoder, z.view())
    }

    /// Mean squared reconstruction error over standardized rows.
    pub fn reconstruction_loss(&self, x: ArrayView2<f64>) -> Result<f64> {
        self.check_width(x.ncols())?;
        let prepared = self.prepare(x);
        let recon = self.reconstruct_prepared(prepared.view());
        Ok(mse(&recon, &prepared))
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Artifact<'a> {
            format: &'a str,
            version: u32,
            model: &'a AutoencoderModel,
        }
        Ok(serde_json::to_string(&Artifact {
            format: ARTIFACT_FORMAT,
            version: ARTIFACT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Artifact {
            format: String,
            version: u32,
            model: AutoencoderModel,
        }
        let a: Artifact = serde_json::from_str(s)?;
        if a.format != ARTIFACT_FORMAT || a.version != ARTIFACT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model artifact {} v{}",
                a.format, a.version
            )));
        }
        Ok(a.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub(crate) fn mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len().max(1) as f64;
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn geometric_dims() {
        assert_eq!(EncoderSpec::geometric(64, 6, 3).unwrap().dims, vec![64, 29, 13, 6]);
        assert_eq!(EncoderSpec::geometric(40, 4, 2).unwrap().dims, vec![40, 13, 4]);
        // Clamping keeps strict decrease on narrow inputs.
        assert_eq!(EncoderSpec::geometric(8, 4, 4).unwrap().dims, vec![8, 7, 6, 5, 4]);
    }

    #[test]
    fn invalid_dims() {
        assert!(matches!(init_autoencoder(4, 4, 2, 0), Err(Error::InvalidDims(_))));
        assert!(matches!(init_autoencoder(4, 6, 2, 0), Err(Error::InvalidDims(_))));
        assert!(matches!(init_autoencoder(5, 4, 2, 0), Err(Error::InvalidDims(_))));
        assert!(matches!(init_autoencoder(64, 6, 5, 0), Err(Error::InvalidDims(_))));
    }

    #[test]
    fn decoder_mirrors_encoder() {
        let m = init_autoencoder(64, 6, 3, 1).unwrap();
        let enc: Vec<_> = m.encoder.iter().map(|l| (l.inputs(), l.outputs())).collect();
        let dec: Vec<_> = m.decoder.iter().map(|l| (l.inputs(), l.outputs())).collect();
        assert_eq!(enc, vec![(64, 29), (29, 13), (13, 6)]);
        assert_eq!(dec, vec![(6, 13), (13, 29), (29, 64)]);
        for l in 0..3 {
            assert_eq!(m.encoder[l].weight.t().shape(), m.decoder[m.mirror(l)].weight.shape());
        }
        assert_eq!(m.encoder[2].activation, Activation::Linear);
        assert_eq!(m.decoder[2].activation, Activation::Linear);
        assert_eq!(m.encoder[0].activation, Activation::Rectifier);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = init_autoencoder(30, 4, 3, 9).unwrap();
        let b = init_autoencoder(30, 4, 3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_autoencoder(30, 4, 3, 10).unwrap());
        assert!(a.encoder.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
    }

    #[test]
    fn identity_encoder() {
        let m = AutoencoderModel {
            spec: EncoderSpec { dims: vec![3, 3] },
            encoder: vec![DenseLayer {
                weight: Array2::eye(3),
                bias: Array1::zeros(3),
                activation: Activation::Linear,
            }],
            decoder: vec![],
            standardizer: None,
        };
        let x = array![1.5, -2.0, 7.0];
        assert_eq!(m.encode(x.view()).unwrap(), x);
    }

    #[test]
    fn batch_encode_equals_rowwise() {
        let m = init_autoencoder(10, 3, 2, 4).unwrap();
        let x = Array2::from_shape_fn((7, 10), |(i, j)| ((i * 3 + j) % 5) as f64 - 1.5);
        let batch = m.encode_batch(x.view()).unwrap();
        for i in 0..7 {
            let row = m.encode(x.row(i)).unwrap();
            assert_eq!(batch.row(i), row);
            assert_eq!(row.len(), 3);
        }
        assert!(matches!(m.encode(array![1.0].view()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn standardizer_zero_mean_unit_variance() {
        let x = array![[1.0, 5.0, 2.0], [3.0, 5.0, 4.0], [5.0, 5.0, 9.0]];
        let s = Standardizer::fit(x.view());
        let t = s.transform(x.view());
        for j in 0..3 {
            let col = t.column(j);
            let mean = col.sum() / 3.0;
            assert!(mean.abs() < 1e-12);
            let var = col.iter().map(|v| v * v).sum::<f64>() / 3.0;
            if j == 1 {
                assert_eq!(var, 0.0);
            } else {
                assert!((var - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn global_scaling_keeps_column_ratios() {
        let x = array![[0.0, 0.0, 1.0], [2.0, 1.0, 1.0], [4.0, 2.0, 1.0]];
        let s = Standardizer::fit_with(x.view(), InputScaling::Global);
        assert_eq!(s.scale[0], s.scale[1]);
        assert_eq!(s.scale[2], 0.0);
        let t = s.transform(x.view());
        let var = |j: usize| t.column(j).iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(((var(0) + var(1)) / 2.0 - 1.0).abs() < 1e-12);
        assert!((var(0) / var(1) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut m = init_autoencoder(12, 3, 3, 2).unwrap();
        m.standardizer = Some(Standardizer::fit(
            Array2::from_shape_fn((5, 12), |(i, j)| (i * j) as f64 / 7.0).view(),
        ));
        let back = AutoencoderModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
