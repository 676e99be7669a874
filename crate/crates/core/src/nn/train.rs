//! Full-batch training with analytic gradients of the mean-squared-error
//! loss, plus the loss-curve bookkeeping the rest of the crate feeds on.

use super::{forward_traced, Family, ModelParams, ModelSpec};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SeededRng};
use crate::metrics;

/// Loss ceiling; a training loss above this (or a non-finite one) counts
/// as divergence. Deliberately generous so that unstable regimes remain
/// observable before the run is cut off.
pub const DIVERGENCE_GUARD: f64 = 1e12;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Plain gradient descent.
    Gd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    Adam,
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Gd => "gd",
            Optimizer::Adam => "adam",
        })
    }
}

impl std::str::FromStr for Optimizer {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gd" => Ok(Optimizer::Gd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(format!("unknown optimizer {other:?} (expected gd or adam)")),
        }
    }
}

/// Full-batch training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
}

// The stock recipe for the sine benchmark: enough epochs that good seeds
// reach the noise floor, few enough that recycled-trace distortion stays
// visible as a late error rise.
impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 110,
            learning_rate: 0.01,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::contract("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::contract(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Gradients of the MSE loss with respect to the trainable parameters,
/// mirroring the parameter layout family by family.
#[derive(Debug, Clone)]
pub enum ModelGrads {
    Mlp {
        layers: Vec<(Matrix, Vec<f64>)>,
    },
    Rbf {
        centers: Matrix,
        log_gamma: f64,
        head_weights: Matrix,
        head_bias: Vec<f64>,
    },
    Rff {
        head_weights: Matrix,
        head_bias: Vec<f64>,
    },
}

impl ModelGrads {
    /// Same flat layout as [`ModelParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            ModelGrads::Mlp { layers } => {
                let mut out = Vec::new();
                for (w, b) in layers {
                    out.extend_from_slice(w.data());
                    out.extend_from_slice(b);
                }
                out
            }
            ModelGrads::Rbf {
                centers,
                log_gamma,
                head_weights,
                head_bias,
            } => {
                let mut out = centers.data().to_vec();
                out.push(*log_gamma);
                out.extend_from_slice(head_weights.data());
                out.extend_from_slice(head_bias);
                out
            }
            ModelGrads::Rff {
                head_weights,
                head_bias,
            } => {
                let mut out = head_weights.data().to_vec();
                out.extend_from_slice(head_bias);
                out
            }
        }
    }
}

fn col_sums(m: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (s, &v) in sums.iter_mut().zip(m.row(i)) {
            *s += v;
        }
    }
    sums
}

fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    debug_assert_eq!(a.shape(), b.shape());
    Matrix::new(
        a.rows(),
        a.cols(),
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
    )
}

/// Exact analytic gradients of `L = (1/n) * sum of squared errors`.
pub fn gradient(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &Matrix,
    y: &Matrix,
) -> Result<ModelGrads> {
    if y.rows() != x.rows() {
        return Err(Error::shape("gradient targets", x.shape(), y.shape()));
    }
    let trace = forward_traced(spec, params, x)?;
    if trace.predictions.shape() != y.shape() {
        return Err(Error::shape(
            "gradient targets",
            trace.predictions.shape(),
            y.shape(),
        ));
    }
    let n = x.rows() as f64;
    // dL/dyhat
    let g = Matrix::new(
        y.rows(),
        y.cols(),
        trace
            .predictions
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, t)| 2.0 * (p - t) / n)
            .collect(),
    )?;

    match params {
        ModelParams::Mlp { layers } => {
            let acts = &trace.activations;
            let mut grads: Vec<(Matrix, Vec<f64>)> = Vec::with_capacity(layers.len());
            let mut delta = g;
            for l in (0..layers.len()).rev() {
                let dw = acts[l].transpose().matmul(&delta)?;
                let db = col_sums(&delta);
                grads.push((dw, db));
                if l > 0 {
                    let back = delta.matmul(&layers[l].weights.transpose())?;
                    // activation derivative expressed through the stored
                    // activation value
                    let a = &acts[l];
                    let deriv = match spec.family {
                        Family::MlpTanh => Matrix::new(
                            a.rows(),
                            a.cols(),
                            a.data().iter().map(|v| 1.0 - v * v).collect(),
                        )?,
                        Family::MlpRelu => Matrix::new(
                            a.rows(),
                            a.cols(),
                            a.data()
                                .iter()
                                .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                                .collect(),
                        )?,
                        _ => unreachable!(),
                    };
                    delta = hadamard(&back, &deriv)?;
                }
            }
            grads.reverse();
            Ok(ModelGrads::Mlp { layers: grads })
        }
        ModelParams::Rbf {
            centers,
            log_gamma,
            head,
        } => {
            let gamma = log_gamma.exp();
            let phi = &trace.features;
            let d2 = trace.dist_sq.as_ref().expect("rbf trace has distances");
            let head_weights = phi.transpose().matmul(&g)?;
            let head_bias = col_sums(&g);
            let dphi = g.matmul(&head.weights.transpose())?;
            let s = hadamard(&dphi, phi)?;
            // d(log_gamma): phi depends on gamma as exp(-gamma d2),
            // gamma = exp(log_gamma)
            let dlg: f64 = -gamma
                * s.data()
                    .iter()
                    .zip(d2.data())
                    .map(|(sv, dv)| sv * dv)
                    .sum::<f64>();
            // d(centers): 2 gamma (S^T X - rowsum(S) .* C)
            let stx = s.transpose().matmul(x)?;
            let ssum = col_sums(&s); // per-center totals
            let mut dc = Matrix::zeros(centers.rows(), centers.cols());
            for (kc, &total) in ssum.iter().enumerate() {
                for dim in 0..centers.cols() {
                    let v = 2.0 * gamma * (stx.get(kc, dim) - total * centers.get(kc, dim));
                    dc.set(kc, dim, v);
                }
            }
            Ok(ModelGrads::Rbf {
                centers: dc,
                log_gamma: dlg,
                head_weights,
                head_bias,
            })
        }
        ModelParams::Rff { .. } => {
            let phi = &trace.features;
            Ok(ModelGrads::Rff {
                head_weights: phi.transpose().matmul(&g)?,
                head_bias: col_sums(&g),
            })
        }
    }
}

/// One model instance after training: parameters, the full loss curve
/// (pre-training loss first, then one entry per epoch) and its AULC.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub loss_curve: Vec<f64>,
    pub aulc: f64,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

fn apply_step(
    params: &mut ModelParams,
    grads: &ModelGrads,
    config: &TrainConfig,
    adam: &mut Option<AdamState>,
) -> Result<()> {
    let mut flat = params.to_flat();
    let g = grads.to_flat();
    match config.optimizer {
        Optimizer::Gd => {
            for (p, gv) in flat.iter_mut().zip(&g) {
                *p -= config.learning_rate * gv;
            }
        }
        Optimizer::Adam => {
            let state = adam.get_or_insert_with(|| AdamState {
                m: vec![0.0; flat.len()],
                v: vec![0.0; flat.len()],
                t: 0,
            });
            state.t += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
            for i in 0..flat.len() {
                state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g[i];
                state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let mhat = state.m[i] / bc1;
                let vhat = state.v[i] / bc2;
                flat[i] -= config.learning_rate * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
    params.assign_from_flat(&flat)
}

fn training_loss(spec: &ModelSpec, params: &ModelParams, x: &Matrix, y: &Matrix) -> Result<f64> {
    let trace = forward_traced(spec, params, x)?;
    metrics::mse(&trace.predictions, y)
}

/// Trains a fresh model on `(x, y)`; initialization randomness comes from
/// `rng`. On divergence the error carries the epoch index and the last
/// state whose loss was still finite, with the loss curve padded to full
/// length using the guard value.
pub fn train(
    spec: &ModelSpec,
    x: &Matrix,
    y: &Matrix,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<TrainedModel> {
    config.validate()?;
    if x.rows() == 0 {
        return Err(Error::contract("training set is empty"));
    }
    if y.rows() != x.rows() {
        return Err(Error::shape("train targets", x.shape(), y.shape()));
    }
    let mut params = super::init_model(spec, rng)?;
    let mut curve: Vec<f64> = Vec::with_capacity(config.epochs + 1);
    let mut adam: Option<AdamState> = None;

    let diverged = |curve: &[f64], params: &ModelParams, epoch: usize| -> Error {
        let mut padded = curve.to_vec();
        padded.resize(config.epochs + 1, DIVERGENCE_GUARD);
        let aulc = metrics::aulc(&padded).unwrap_or(DIVERGENCE_GUARD);
        Error::TrainingDiverged {
            epoch,
            last_good: Box::new(TrainedModel {
                spec: spec.clone(),
                params: params.clone(),
                loss_curve: padded,
                aulc,
            }),
        }
    };

    let loss0 = match training_loss(spec, &params, x, y) {
        Ok(l) if l.is_finite() && l <= DIVERGENCE_GUARD => l,
        Ok(_) | Err(Error::Numeric(_)) => return Err(diverged(&curve, &params, 0)),
        Err(e) => return Err(e),
    };
    curve.push(loss0);

    for epoch in 1..=config.epochs {
        let prev = params.clone();
        let step = (|| -> Result<f64> {
            let grads = gradient(spec, &params, x, y)?;
            apply_step(&mut params, &grads, config, &mut adam)?;
            training_loss(spec, &params, x, y)
        })();
        let loss = match step {
            Ok(l) if l.is_finite() && l <= DIVERGENCE_GUARD => l,
            Ok(_) | Err(Error::Numeric(_)) => return Err(diverged(&curve, &prev, epoch)),
            Err(e) => return Err(e),
        };
        curve.push(loss);
    }

    let aulc = metrics::aulc(&curve)?;
    Ok(TrainedModel {
        spec: spec.clone(),
        params,
        loss_curve: curve,
        aulc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SeededRng;
    use crate::nn::{init_model, DenseLayer, Scale};

    #[test]
    fn linear_neuron_closed_form_gradient() {
        // hidden relu unit with weight 1 passes x through; head weight w=1.
        // For (x=1, y=0): dL/dw_head = 2 x (wx - y) = 2, and the same value
        // propagates to the hidden weight.
        let spec = ModelSpec::new(Family::MlpRelu, Scale::Small, 1, 0).with_hidden(vec![1]);
        let params = ModelParams::Mlp {
            layers: vec![
                DenseLayer {
                    weights: Matrix::new(1, 1, vec![1.0]).unwrap(),
                    bias: vec![0.0],
                },
                DenseLayer {
                    weights: Matrix::new(1, 1, vec![1.0]).unwrap(),
                    bias: vec![0.0],
                },
            ],
        };
        let x = Matrix::column(&[1.0]).unwrap();
        let y = Matrix::column(&[0.0]).unwrap();
        let ModelGrads::Mlp { layers } = gradient(&spec, &params, &x, &y).unwrap() else {
            panic!()
        };
        assert_eq!(layers[1].0.get(0, 0), 2.0); // head weight
        assert_eq!(layers[0].0.get(0, 0), 2.0); // hidden weight
    }

    #[test]
    fn gradient_is_zero_at_a_perfect_fit() {
        let spec = ModelSpec::new(Family::MlpTanh, Scale::Small, 1, 0).with_hidden(vec![2]);
        let params = init_model(&spec, &mut SeededRng::new(3)).unwrap();
        let x = Matrix::column(&[0.3, -0.7, 1.1]).unwrap();
        let y = crate::nn::predict(&spec, &params, &x).unwrap();
        let grads = gradient(&spec, &params, &x, &y).unwrap();
        assert!(grads.to_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn loss_curve_has_epochs_plus_one_entries() {
        let spec = ModelSpec::new(Family::RffLinear, Scale::Small, 1, 0);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let x = Matrix::column(&[0.0, 0.5, 1.0]).unwrap();
        let y = Matrix::column(&[0.0, 1.0, 0.0]).unwrap();
        let m = train(&spec, &x, &y, &cfg, &mut SeededRng::new(1)).unwrap();
        assert_eq!(m.loss_curve.len(), 2);
        assert!((m.aulc - crate::metrics::aulc(&m.loss_curve).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn zero_epochs_is_a_contract_error() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let spec = ModelSpec::new(Family::MlpTanh, Scale::Small, 1, 0).with_hidden(vec![4]);
        let cfg = TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        };
        let x = Matrix::column(&[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let y = Matrix::column(&[0.0, 1.0, 0.0, -1.0, 0.0]).unwrap();
        let a = train(&spec, &x, &y, &cfg, &mut SeededRng::new(9)).unwrap();
        let b = train(&spec, &x, &y, &cfg, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.params.to_flat(), b.params.to_flat());
    }

    #[test]
    fn rff_head_converges_on_a_linear_target() {
        // convex head; 200 adam epochs push the loss under 1e-3
        let spec = ModelSpec::new(Family::RffLinear, Scale::Medium, 1, 0);
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.05,
            optimizer: Optimizer::Adam,
        };
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let ys: Vec<f64> = xs.iter().map(|v| 2.0 * v).collect();
        let x = Matrix::column(&xs).unwrap();
        let y = Matrix::column(&ys).unwrap();
        let m = train(&spec, &x, &y, &cfg, &mut SeededRng::new(2)).unwrap();
        let last = *m.loss_curve.last().unwrap();
        assert!(last < 1e-3, "final loss {last}");
    }

    #[test]
    fn gd_on_convex_head_is_monotone() {
        let spec = ModelSpec::new(Family::RffLinear, Scale::Small, 1, 0);
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            optimizer: Optimizer::Gd,
        };
        let xs: Vec<f64> = (0..25).map(|i| i as f64 / 24.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|v| (std::f64::consts::TAU * v).sin())
            .collect();
        let m = train(
            &spec,
            &Matrix::column(&xs).unwrap(),
            &Matrix::column(&ys).unwrap(),
            &cfg,
            &mut SeededRng::new(4),
        )
        .unwrap();
        for w in m.loss_curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn divergence_carries_epoch_and_padded_state() {
        let spec = ModelSpec::new(Family::MlpRelu, Scale::Small, 1, 0).with_hidden(vec![8]);
        let cfg = TrainConfig {
            epochs: 400,
            learning_rate: 1e6,
            optimizer: Optimizer::Gd,
        };
        let x = Matrix::column(&[0.0, 0.5, 1.0, 1.5]).unwrap();
        let y = Matrix::column(&[0.0, 1.0, 0.0, -1.0]).unwrap();
        match train(&spec, &x, &y, &cfg, &mut SeededRng::new(8)) {
            Err(Error::TrainingDiverged { epoch, last_good }) => {
                assert!(epoch >= 1 && epoch <= 400);
                assert_eq!(last_good.loss_curve.len(), 401);
                assert!(last_good.loss_curve.iter().all(|l| l.is_finite()));
                assert!(last_good.aulc > 1.0);
                assert!(last_good.params.to_flat().iter().all(|p| p.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
