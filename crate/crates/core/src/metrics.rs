//! Behavioral measurements: area under the loss curve, mean squared error,
//! and detection of the point where a run's error starts climbing again.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Normalized area under a loss curve sampled at unit steps.
///
/// For a curve of length `T+1` this is the trapezoidal discretization of
/// `(1/T) * integral of L(t) dt` over `[0, T]`, exact for piecewise-linear
/// curves. Lower values mean faster, smoother convergence. The curve is
/// expected to start with the pre-training loss at t = 0.
pub fn aulc(loss_curve: &[f64]) -> Result<f64> {
    if loss_curve.len() < 2 {
        return Err(Error::contract(format!(
            "aulc needs at least 2 points, got {}",
            loss_curve.len()
        )));
    }
    if let Some(v) = loss_curve.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::contract(format!(
            "aulc needs finite non-negative losses, got {v}"
        )));
    }
    // running mean of the trapezoid midpoints; exact on constant curves
    let mut mean = 0.0;
    for (k, w) in loss_curve.windows(2).enumerate() {
        let mid = 0.5 * (w[0] + w[1]);
        mean += (mid - mean) / (k + 1) as f64;
    }
    Ok(mean)
}

/// Mean squared error between two equally shaped matrices.
pub fn mse(predictions: &Matrix, targets: &Matrix) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::shape("mse", predictions.shape(), targets.shape()));
    }
    if predictions.rows() == 0 {
        return Err(Error::contract("mse of an empty matrix"));
    }
    let n = predictions.rows() as f64;
    let sum: f64 = predictions
        .data()
        .iter()
        .zip(targets.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n)
}

/// Thresholds for flagging an error series that rises again after its
/// minimum. `factor` scales the running minimum; `window` is how many
/// consecutive elevated points are required.
#[derive(Debug, Clone, PartialEq)]
pub struct GlitchConfig {
    pub factor: f64,
    pub window: usize,
}

impl Default for GlitchConfig {
    fn default() -> Self {
        GlitchConfig {
            factor: 2.0,
            window: 3,
        }
    }
}

impl GlitchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 1.0) {
            return Err(Error::contract(format!(
                "glitch factor must be > 1, got {}",
                self.factor
            )));
        }
        if self.window < 1 {
            return Err(Error::contract("glitch window must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlitchReport {
    pub flagged: bool,
    /// First index at which the full window is elevated; present iff flagged.
    pub first_flag_index: Option<usize>,
    /// Running minimum of the series, for plotting.
    pub running_min: Vec<f64>,
}

/// Flags the first index `i` such that every point in the window ending at
/// `i` exceeds `factor` times the running minimum of the series up to that
/// point. Index 0 can never flag: a point is never above `factor > 1` times
/// a minimum that includes itself.
pub fn detect_glitch(mse_series: &[f64], config: &GlitchConfig) -> GlitchReport {
    let mut running_min = Vec::with_capacity(mse_series.len());
    let mut min = f64::INFINITY;
    let mut exceed = Vec::with_capacity(mse_series.len());
    for &v in mse_series {
        min = min.min(v);
        running_min.push(min);
        exceed.push(v > config.factor * min);
    }
    let mut streak = 0usize;
    let mut first_flag_index = None;
    for (i, &e) in exceed.iter().enumerate() {
        streak = if e { streak + 1 } else { 0 };
        if streak >= config.window {
            first_flag_index = Some(i);
            break;
        }
    }
    GlitchReport {
        flagged: first_flag_index.is_some(),
        first_flag_index,
        running_min,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aulc_constant_curve() {
        assert_eq!(aulc(&[3.5; 7]).unwrap(), 3.5);
        assert_eq!(aulc(&[0.37; 9]).unwrap(), 0.37);
        assert_eq!(aulc(&[0.37; 12]).unwrap(), 0.37);
    }

    #[test]
    fn aulc_linear_ramp_is_half_the_start() {
        for t in [1usize, 4, 10] {
            let a = 0.8;
            let curve: Vec<f64> = (0..=t).map(|i| a * (1.0 - i as f64 / t as f64)).collect();
            assert!((aulc(&curve).unwrap() - a / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn aulc_three_point_example() {
        // (1/2) * ((1.0+0.5)/2 + (0.5+0.25)/2) = 0.5625
        assert!((aulc(&[1.0, 0.5, 0.25]).unwrap() - 0.5625).abs() < 1e-12);
    }

    #[test]
    fn aulc_needs_two_points() {
        assert!(aulc(&[1.0]).is_err());
        assert!(aulc(&[]).is_err());
    }

    #[test]
    fn mse_perfect_fit_is_zero() {
        let y = Matrix::column(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn mse_hand_example() {
        let p = Matrix::column(&[1.0, 1.0]).unwrap();
        let t = Matrix::column(&[0.0, 2.0]).unwrap();
        assert_eq!(mse(&p, &t).unwrap(), 1.0);
    }

    #[test]
    fn mse_matches_two_pass_oracle() {
        let mut rng = crate::linalg::SeededRng::new(5);
        let p = Matrix::new(64, 1, (0..64).map(|_| rng.normal()).collect()).unwrap();
        let t = Matrix::new(64, 1, (0..64).map(|_| rng.normal()).collect()).unwrap();
        // independent naive two-pass summation
        let mut acc = 0.0;
        for i in 0..64 {
            let d = p.get(i, 0) - t.get(i, 0);
            acc += d * d;
        }
        let oracle = acc / 64.0;
        assert!((mse(&p, &t).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn mse_shape_mismatch() {
        let p = Matrix::zeros(2, 1);
        let t = Matrix::zeros(3, 1);
        assert!(mse(&p, &t).is_err());
    }

    #[test]
    fn glitch_monotone_series_never_flags() {
        let series = [0.9, 0.5, 0.3, 0.2, 0.15, 0.12];
        let r = detect_glitch(&series, &GlitchConfig::default());
        assert!(!r.flagged);
        assert_eq!(r.first_flag_index, None);
    }

    #[test]
    fn glitch_hand_walked_example() {
        // running min hits 0.01 at index 2; indices 3,4,5 all exceed 0.02
        let series = [0.2, 0.05, 0.01, 0.05, 0.08, 0.09];
        let r = detect_glitch(&series, &GlitchConfig::default());
        assert!(r.flagged);
        assert_eq!(r.first_flag_index, Some(5));
        assert_eq!(r.running_min, vec![0.2, 0.05, 0.01, 0.01, 0.01, 0.01]);
    }

    #[test]
    fn glitch_window_one_single_step() {
        let r = detect_glitch(
            &[0.1, 0.25],
            &GlitchConfig {
                factor: 2.0,
                window: 1,
            },
        );
        assert_eq!(r.first_flag_index, Some(1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // aulc(a * L) = a * aulc(L) for a >= 0
        #[test]
        fn aulc_is_linear(curve in proptest::collection::vec(0.0f64..10.0, 2..20), alpha in 0.0f64..5.0) {
            let scaled: Vec<f64> = curve.iter().map(|v| alpha * v).collect();
            let lhs = aulc(&scaled).unwrap();
            let rhs = alpha * aulc(&curve).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn aulc_is_bounded_by_extremes(curve in proptest::collection::vec(0.0f64..10.0, 2..20)) {
            let a = aulc(&curve).unwrap();
            let lo = curve.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = curve.iter().cloned().fold(0.0, f64::max);
            prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
        }

        // raising the factor never flags earlier, and index 0 never flags
        #[test]
        fn glitch_monotone_in_factor(series in proptest::collection::vec(0.001f64..10.0, 1..30),
                                     f1 in 1.01f64..3.0, df in 0.0f64..2.0) {
            let lo = GlitchConfig { factor: f1, window: 2 };
            let hi = GlitchConfig { factor: f1 + df, window: 2 };
            let rl = detect_glitch(&series, &lo);
            let rh = detect_glitch(&series, &hi);
            if let Some(i) = rh.first_flag_index {
                prop_assert!(rl.flagged);
                prop_assert!(rl.first_flag_index.unwrap() <= i);
            }
            prop_assert_ne!(rl.first_flag_index, Some(0));
            prop_assert_ne!(rh.first_flag_index, Some(0));
        }
    }
}
