//! Trainable model families with explicit forward passes and
//! backpropagation.
//!
//! Four families share one interface: predictions plus an internal feature
//! matrix. The feature surface is the last hidden layer's activations (the
//! radial or random-Fourier feature layer for the kernel-style families),
//! which is what gets compressed and fed forward between training rounds.

mod train;

pub use train::{
    gradient, train, ModelGrads, Optimizer, TrainConfig, TrainedModel, DIVERGENCE_GUARD,
};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SeededRng};
use std::fmt;
use std::str::FromStr;

/// Architecture family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    MlpTanh,
    MlpRelu,
    Rbf,
    RffLinear,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::MlpTanh => "mlp-tanh",
            Family::MlpRelu => "mlp-relu",
            Family::Rbf => "rbf",
            Family::RffLinear => "rff-linear",
        })
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mlp-tanh" => Ok(Family::MlpTanh),
            "mlp-relu" => Ok(Family::MlpRelu),
            "rbf" => Ok(Family::Rbf),
            "rff-linear" => Ok(Family::RffLinear),
            other => Err(format!(
                "unknown family {other:?} (expected mlp-tanh, mlp-relu, rbf or rff-linear)"
            )),
        }
    }
}

/// Capacity tier; maps to a hidden width unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    Small,
    Medium,
    Large,
}

impl Scale {
    pub fn width(self) -> usize {
        match self {
            Scale::Small => 8,
            Scale::Medium => 32,
            Scale::Large => 128,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Small => "small",
            Scale::Medium => "medium",
            Scale::Large => "large",
        })
    }
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "small" => Ok(Scale::Small),
            "medium" => Ok(Scale::Medium),
            "large" => Ok(Scale::Large),
            other => Err(format!(
                "unknown scale {other:?} (expected small, medium or large)"
            )),
        }
    }
}

/// Full architecture description of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub scale: Scale,
    /// Hidden widths; empty means one hidden layer of the scale's width.
    /// The kernel-style families (rbf, rff-linear) use exactly one width,
    /// the number of basis functions.
    pub hidden_layers: Vec<usize>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, scale: Scale, input_dim: usize, init_seed: u64) -> Self {
        ModelSpec {
            family,
            scale,
            hidden_layers: Vec::new(),
            input_dim,
            output_dim: 1,
            init_seed,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden_layers = hidden;
        self
    }

    /// Hidden widths after applying the scale default.
    pub fn resolved_hidden(&self) -> Vec<usize> {
        if self.hidden_layers.is_empty() {
            vec![self.scale.width()]
        } else {
            self.hidden_layers.clone()
        }
    }

    /// Width of the feature matrix this model exposes.
    pub fn feature_dim(&self) -> usize {
        *self
            .resolved_hidden()
            .last()
            .expect("resolved_hidden is never empty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::contract("input_dim must be >= 1"));
        }
        if self.output_dim == 0 {
            return Err(Error::contract("output_dim must be >= 1"));
        }
        let hidden = self.resolved_hidden();
        if hidden.contains(&0) {
            return Err(Error::contract("hidden widths must be >= 1"));
        }
        match self.family {
            Family::Rbf | Family::RffLinear => {
                if hidden.len() != 1 {
                    return Err(Error::contract(format!(
                        "{} takes exactly one hidden width, got {:?}",
                        self.family, hidden
                    )));
                }
            }
            Family::MlpTanh | Family::MlpRelu => {}
        }
        Ok(())
    }
}

/// One dense layer: `in_dim x out_dim` weights plus a bias per output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// `x * W + b`, rows broadcast over the bias.
    fn affine(&self, x: &Matrix) -> Result<Matrix> {
        let prod = x.matmul(&self.weights)?;
        let cols = prod.cols();
        let mut data = prod.data().to_vec();
        for row in data.chunks_mut(cols) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Matrix::new(prod.rows(), cols, data)
    }
}

/// Trainable (and frozen) state per family.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    /// Hidden layers followed by a linear output layer.
    Mlp { layers: Vec<DenseLayer> },
    /// Radial-basis features over trainable centers with a shared
    /// log-bandwidth, plus a linear head. Features are
    /// `exp(-gamma * |x - c_k|^2)` with `gamma = exp(log_gamma)`.
    Rbf {
        centers: Matrix,
        log_gamma: f64,
        head: DenseLayer,
    },
    /// Frozen random projection and phases; `cos(x P + phase)` features
    /// under a trainable linear head.
    Rff {
        projection: Matrix,
        phases: Vec<f64>,
        head: DenseLayer,
    },
}

fn init_dense(rng: &mut SeededRng, in_dim: usize, out_dim: usize) -> Result<DenseLayer> {
    let std = 1.0 / (in_dim as f64).sqrt();
    let data: Vec<f64> = (0..in_dim * out_dim).map(|_| std * rng.normal()).collect();
    Ok(DenseLayer {
        weights: Matrix::new(in_dim, out_dim, data)?,
        bias: vec![0.0; out_dim],
    })
}

/// Initializes parameters for a spec.
///
/// Weights come from a normal scaled by `1/sqrt(fan_in)`; biases start at
/// zero. Radial centers take Latin-hypercube positions on a uniform grid
/// over `[0, 1]` per coordinate (the raw training domain; centers are
/// trainable and migrate from there). The random-Fourier projection and
/// phases are drawn once and frozen.
pub fn init_model(spec: &ModelSpec, rng: &mut SeededRng) -> Result<ModelParams> {
    spec.validate()?;
    let hidden = spec.resolved_hidden();
    match spec.family {
        Family::MlpTanh | Family::MlpRelu => {
            let mut dims = vec![spec.input_dim];
            dims.extend_from_slice(&hidden);
            dims.push(spec.output_dim);
            let layers = dims
                .windows(2)
                .map(|w| init_dense(rng, w[0], w[1]))
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelParams::Mlp { layers })
        }
        Family::Rbf => {
            let k = hidden[0];
            let mut centers = Matrix::zeros(k, spec.input_dim);
            for dim in 0..spec.input_dim {
                let perm = rng.permutation(k);
                for (row, &slot) in perm.iter().enumerate() {
                    centers.set(row, dim, (slot as f64 + 0.5) / k as f64);
                }
            }
            // bandwidth heuristic: unit domain diameter over sqrt(2k)
            let log_gamma = (k as f64).ln();
            let head = init_dense(rng, k, spec.output_dim)?;
            Ok(ModelParams::Rbf {
                centers,
                log_gamma,
                head,
            })
        }
        Family::RffLinear => {
            let k = hidden[0];
            let std = std::f64::consts::TAU / (spec.input_dim as f64).sqrt();
            let proj: Vec<f64> = (0..spec.input_dim * k)
                .map(|_| std * rng.normal())
                .collect();
            let projection = Matrix::new(spec.input_dim, k, proj)?;
            let phases: Vec<f64> = (0..k)
                .map(|_| std::f64::consts::TAU * rng.uniform())
                .collect();
            let head = init_dense(rng, k, spec.output_dim)?;
            Ok(ModelParams::Rff {
                projection,
                phases,
                head,
            })
        }
    }
}

fn check_input(spec: &ModelSpec, x: &Matrix) -> Result<()> {
    if x.cols() != spec.input_dim {
        return Err(Error::shape(
            "forward",
            (x.rows(), x.cols()),
            (x.rows(), spec.input_dim),
        ));
    }
    Ok(())
}

/// Per-layer intermediate state kept for backpropagation.
pub(crate) struct ForwardTrace {
    /// Activations per layer, starting with the input.
    pub activations: Vec<Matrix>,
    /// Squared distances to each center (rbf only).
    pub dist_sq: Option<Matrix>,
    pub predictions: Matrix,
    pub features: Matrix,
}

pub(crate) fn forward_traced(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &Matrix,
) -> Result<ForwardTrace> {
    check_input(spec, x)?;
    match params {
        ModelParams::Mlp { layers } => {
            let mut activations = vec![x.clone()];
            for (idx, layer) in layers.iter().enumerate() {
                let z = layer.affine(activations.last().unwrap())?;
                let a = if idx + 1 == layers.len() {
                    z // linear output layer
                } else {
                    let act = match spec.family {
                        Family::MlpTanh => f64::tanh,
                        Family::MlpRelu => |v: f64| v.max(0.0),
                        _ => unreachable!(),
                    };
                    Matrix::new(
                        z.rows(),
                        z.cols(),
                        z.data().iter().map(|&v| act(v)).collect(),
                    )?
                };
                activations.push(a);
            }
            let features = activations[activations.len() - 2].clone();
            let predictions = activations.last().unwrap().clone();
            Ok(ForwardTrace {
                activations,
                dist_sq: None,
                predictions,
                features,
            })
        }
        ModelParams::Rbf {
            centers,
            log_gamma,
            head,
        } => {
            let gamma = log_gamma.exp();
            let k = centers.rows();
            let mut d2 = Matrix::zeros(x.rows(), k);
            for i in 0..x.rows() {
                let xi = x.row(i);
                for c in 0..k {
                    let mut acc = 0.0;
                    for (xv, cv) in xi.iter().zip(centers.row(c)) {
                        let d = xv - cv;
                        acc += d * d;
                    }
                    d2.set(i, c, acc);
                }
            }
            let features = Matrix::new(
                x.rows(),
                k,
                d2.data().iter().map(|&v| (-gamma * v).exp()).collect(),
            )?;
            let predictions = head.affine(&features)?;
            Ok(ForwardTrace {
                activations: vec![x.clone()],
                dist_sq: Some(d2),
                predictions,
                features,
            })
        }
        ModelParams::Rff {
            projection,
            phases,
            head,
        } => {
            let z = x.matmul(projection)?;
            let k = z.cols();
            let mut data = z.data().to_vec();
            for row in data.chunks_mut(k) {
                for (v, p) in row.iter_mut().zip(phases) {
                    *v = (*v + p).cos();
                }
            }
            let features = Matrix::new(z.rows(), k, data)?;
            let predictions = head.affine(&features)?;
            Ok(ForwardTrace {
                activations: vec![x.clone()],
                dist_sq: None,
                predictions,
                features,
            })
        }
    }
}

/// Runs the model on `x`, returning predictions and the internal feature
/// matrix. Pure: identical inputs give identical outputs.
pub fn forward(spec: &ModelSpec, params: &ModelParams, x: &Matrix) -> Result<(Matrix, Matrix)> {
    let trace = forward_traced(spec, params, x)?;
    Ok((trace.predictions, trace.features))
}

/// Prediction component of [`forward`].
pub fn predict(spec: &ModelSpec, params: &ModelParams, x: &Matrix) -> Result<Matrix> {
    Ok(forward_traced(spec, params, x)?.predictions)
}

impl ModelParams {
    /// Number of trainable scalars (frozen tensors excluded).
    pub fn trainable_len(&self) -> usize {
        match self {
            ModelParams::Mlp { layers } => layers
                .iter()
                .map(|l| l.weights.data().len() + l.bias.len())
                .sum(),
            ModelParams::Rbf { centers, head, .. } => {
                centers.data().len() + 1 + head.weights.data().len() + head.bias.len()
            }
            ModelParams::Rff { head, .. } => head.weights.data().len() + head.bias.len(),
        }
    }

    /// Flattens the trainable parameters in a fixed documented order:
    /// layer by layer, weights row-major then bias; for rbf, centers
    /// row-major, then log-bandwidth, then the head.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_len());
        match self {
            ModelParams::Mlp { layers } => {
                for l in layers {
                    out.extend_from_slice(l.weights.data());
                    out.extend_from_slice(&l.bias);
                }
            }
            ModelParams::Rbf {
                centers,
                log_gamma,
                head,
            } => {
                out.extend_from_slice(centers.data());
                out.push(*log_gamma);
                out.extend_from_slice(head.weights.data());
                out.extend_from_slice(&head.bias);
            }
            ModelParams::Rff { head, .. } => {
                out.extend_from_slice(head.weights.data());
                out.extend_from_slice(&head.bias);
            }
        }
        out
    }

    /// Writes a flat vector (in [`to_flat`](Self::to_flat) order) back into
    /// the structured parameters.
    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.trainable_len() {
            return Err(Error::contract(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                self.trainable_len()
            )));
        }
        let mut pos = 0;
        let take_matrix = |m: &mut Matrix, pos: &mut usize| -> Result<()> {
            let (r, c) = m.shape();
            let chunk = &flat[*pos..*pos + r * c];
            *m = Matrix::new(r, c, chunk.to_vec())?;
            *pos += r * c;
            Ok(())
        };
        match self {
            ModelParams::Mlp { layers } => {
                for l in layers {
                    take_matrix(&mut l.weights, &mut pos)?;
                    let len = l.bias.len();
                    l.bias.copy_from_slice(&flat[pos..pos + len]);
                    pos += len;
                }
            }
            ModelParams::Rbf {
                centers,
                log_gamma,
                head,
            } => {
                take_matrix(centers, &mut pos)?;
                *log_gamma = flat[pos];
                pos += 1;
                take_matrix(&mut head.weights, &mut pos)?;
                let len = head.bias.len();
                head.bias.copy_from_slice(&flat[pos..pos + len]);
                pos += len;
            }
            ModelParams::Rff { head, .. } => {
                take_matrix(&mut head.weights, &mut pos)?;
                let len = head.bias.len();
                head.bias.copy_from_slice(&flat[pos..pos + len]);
                pos += len;
            }
        }
        debug_assert_eq!(pos, flat.len());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: Family) -> ModelSpec {
        ModelSpec::new(family, Scale::Small, 1, 7)
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        for family in [
            Family::MlpTanh,
            Family::MlpRelu,
            Family::Rbf,
            Family::RffLinear,
        ] {
            let s = spec(family);
            let a = init_model(&s, &mut SeededRng::new(3)).unwrap();
            let b = init_model(&s, &mut SeededRng::new(3)).unwrap();
            assert_eq!(a, b, "{family}");
            let c = init_model(&s, &mut SeededRng::new(4)).unwrap();
            assert_ne!(a.to_flat(), c.to_flat(), "{family}");
        }
    }

    #[test]
    fn mlp_shapes_follow_spec() {
        let s = ModelSpec::new(Family::MlpTanh, Scale::Small, 1, 0).with_hidden(vec![4]);
        let ModelParams::Mlp { layers } = init_model(&s, &mut SeededRng::new(0)).unwrap() else {
            panic!("expected mlp params");
        };
        assert_eq!(layers.len(), 2);
        assert_eq!(layers[0].weights.shape(), (1, 4));
        assert_eq!(layers[0].bias.len(), 4);
        assert_eq!(layers[1].weights.shape(), (4, 1));
        assert_eq!(layers[1].bias.len(), 1);
    }

    #[test]
    fn zero_net_outputs_bias_and_zero_features() {
        let s = ModelSpec::new(Family::MlpTanh, Scale::Small, 1, 0).with_hidden(vec![3]);
        let params = ModelParams::Mlp {
            layers: vec![
                DenseLayer {
                    weights: Matrix::zeros(1, 3),
                    bias: vec![0.0; 3],
                },
                DenseLayer {
                    weights: Matrix::zeros(3, 1),
                    bias: vec![0.25],
                },
            ],
        };
        let x = Matrix::column(&[1.0, -2.0, 5.0]).unwrap();
        let (preds, feats) = forward(&s, &params, &x).unwrap();
        assert_eq!(feats, Matrix::zeros(3, 3));
        assert_eq!(preds, Matrix::column(&[0.25, 0.25, 0.25]).unwrap());
    }

    #[test]
    fn single_linear_neuron_by_hand() {
        // relu passes positive inputs through unchanged, so w=2, b=0 on
        // x=3 predicts 6
        let s = ModelSpec::new(Family::MlpRelu, Scale::Small, 1, 0).with_hidden(vec![1]);
        let params = ModelParams::Mlp {
            layers: vec![
                DenseLayer {
                    weights: Matrix::new(1, 1, vec![1.0]).unwrap(),
                    bias: vec![0.0],
                },
                DenseLayer {
                    weights: Matrix::new(1, 1, vec![2.0]).unwrap(),
                    bias: vec![0.0],
                },
            ],
        };
        let x = Matrix::column(&[3.0]).unwrap();
        let preds = predict(&s, &params, &x).unwrap();
        assert_eq!(preds.get(0, 0), 6.0);
    }

    #[test]
    fn forward_matches_layerwise_reevaluation() {
        // independent scalar-by-scalar recomputation of a seeded net
        let s = ModelSpec::new(Family::MlpTanh, Scale::Small, 2, 0).with_hidden(vec![3, 2]);
        let params = init_model(&s, &mut SeededRng::new(11)).unwrap();
        let ModelParams::Mlp { layers } = &params else {
            panic!()
        };
        let mut rng = SeededRng::new(99);
        let x = Matrix::new(5, 2, (0..10).map(|_| rng.normal()).collect()).unwrap();
        let (preds, feats) = forward(&s, &params, &x).unwrap();

        for i in 0..5 {
            let mut a: Vec<f64> = x.row(i).to_vec();
            for (li, layer) in layers.iter().enumerate() {
                let mut next = vec![0.0; layer.bias.len()];
                for (j, nj) in next.iter_mut().enumerate() {
                    let mut acc = layer.bias[j];
                    for (k, &av) in a.iter().enumerate() {
                        acc += av * layer.weights.get(k, j);
                    }
                    *nj = if li + 1 == layers.len() {
                        acc
                    } else {
                        acc.tanh()
                    };
                }
                a = next;
                if li + 2 == layers.len() {
                    for (j, &av) in a.iter().enumerate() {
                        assert!((feats.get(i, j) - av).abs() < 1e-12);
                    }
                }
            }
            assert!((preds.get(i, 0) - a[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_dims_are_family_and_scale_specific() {
        let mut rng = SeededRng::new(1);
        let x = Matrix::new(4, 2, (0..8).map(|_| rng.uniform()).collect()).unwrap();
        for family in [
            Family::MlpTanh,
            Family::MlpRelu,
            Family::Rbf,
            Family::RffLinear,
        ] {
            for scale in [Scale::Small, Scale::Medium, Scale::Large] {
                let s = ModelSpec::new(family, scale, 2, 5);
                let params = init_model(&s, &mut SeededRng::new(5)).unwrap();
                let (preds, feats) = forward(&s, &params, &x).unwrap();
                assert_eq!(feats.shape(), (4, scale.width()), "{family} {scale}");
                assert_eq!(preds.shape(), (4, 1));
            }
        }
    }

    #[test]
    fn input_width_mismatch_is_shape_error() {
        let s = spec(Family::MlpTanh);
        let params = init_model(&s, &mut SeededRng::new(0)).unwrap();
        let x = Matrix::zeros(3, 2);
        assert!(matches!(
            forward(&s, &params, &x),
            Err(crate::Error::Shape { .. })
        ));
    }

    #[test]
    fn flat_round_trip_preserves_params() {
        for family in [Family::MlpTanh, Family::Rbf, Family::RffLinear] {
            let s = spec(family);
            let params = init_model(&s, &mut SeededRng::new(21)).unwrap();
            let flat = params.to_flat();
            assert_eq!(flat.len(), params.trainable_len());
            let mut copy = params.clone();
            copy.assign_from_flat(&flat).unwrap();
            assert_eq!(copy, params);
        }
    }
}
