//! Real-time forecasters.
//!
//! Two model classes drive the short-term tier: an AR(a) on the
//! drift-centered series, where the drift is supplied by the long-term
//! regression, and an AR(a) on first differences for non-stationary series.
//! Coefficients come from conditional least squares on lagged values; the
//! Yule-Walker route is kept as an independent oracle in the tests.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// AR(a) with an externally supplied drift level.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub order: usize,
    pub phi: Vec<f64>,
    /// Centering level; the long-term tier's prediction replaces it at
    /// forecast time.
    pub mu: f64,
    pub noise_var: f64,
}

/// AR(a) on first differences (integrated once back to levels when
/// forecasting).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffArModel {
    pub order: usize,
    pub phi: Vec<f64>,
    pub noise_var: f64,
}

/// Point forecast with its error variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    pub mean: f64,
    pub variance: f64,
    pub horizon: usize,
}

/// Serialized form of either real-time model
/// (`{kind, a, phi, mu?, sigma2}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RealtimeModel {
    #[serde(rename = "ar")]
    Ar {
        a: usize,
        phi: Vec<f64>,
        mu: f64,
        sigma2: f64,
    },
    #[serde(rename = "diff_ar")]
    DiffAr {
        a: usize,
        phi: Vec<f64>,
        sigma2: f64,
    },
}

impl From<&ArModel> for RealtimeModel {
    fn from(m: &ArModel) -> Self {
        RealtimeModel::Ar {
            a: m.order,
            phi: m.phi.clone(),
            mu: m.mu,
            sigma2: m.noise_var,
        }
    }
}

impl From<&DiffArModel> for RealtimeModel {
    fn from(m: &DiffArModel) -> Self {
        RealtimeModel::DiffAr {
            a: m.order,
            phi: m.phi.clone(),
            sigma2: m.noise_var,
        }
    }
}

impl RealtimeModel {
    pub fn into_ar(self) -> Option<ArModel> {
        match self {
            RealtimeModel::Ar { a, phi, mu, sigma2 } => Some(ArModel {
                order: a,
                phi,
                mu,
                noise_var: sigma2,
            }),
            RealtimeModel::DiffAr { .. } => None,
        }
    }

    pub fn into_diff_ar(self) -> Option<DiffArModel> {
        match self {
            RealtimeModel::DiffAr { a, phi, sigma2 } => Some(DiffArModel {
                order: a,
                phi,
                noise_var: sigma2,
            }),
            RealtimeModel::Ar { .. } => None,
        }
    }
}

/// True when every root of `1 − Σ φ_l z^l` lies outside the unit disk,
/// i.e. the companion polynomial's roots are all inside it.
pub fn phi_is_stationary(phi: &[f64]) -> bool {
    let a = phi.len();
    if a == 0 {
        return true;
    }
    // Companion polynomial λ^a − φ₁ λ^{a-1} − ... − φ_a, roots by
    // Durand-Kerner; degree is small so this is cheap and robust.
    let mut coeffs = Vec::with_capacity(a + 1);
    coeffs.push(Complex64::new(1.0, 0.0));
    coeffs.extend(phi.iter().map(|p| Complex64::new(-p, 0.0)));

    let eval = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &coeffs {
            acc = acc * z + c;
        }
        acc
    };

    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..a).map(|i| seed.powu(i as u32 + 1)).collect();
    for _ in 0..200 {
        let mut shift = 0.0f64;
        for i in 0..a {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..a {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex64::new(1e-12, 0.0);
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            shift = shift.max(delta.norm());
        }
        if shift < 1e-12 {
            break;
        }
    }
    roots.iter().all(|r| r.norm() < 1.0 - 1e-9)
}

impl ArModel {
    pub fn is_stationary(&self) -> bool {
        phi_is_stationary(&self.phi)
    }

    /// One-step in-sample residuals, centering by the model's own level.
    pub fn one_step_residuals(&self, series: &[f64]) -> Result<Vec<f64>> {
        let a = self.order;
        if series.len() <= a {
            return Err(Error::SeriesTooShort {
                got: series.len(),
                need: a + 1,
            });
        }
        Ok((a..series.len())
            .map(|t| {
                let pred: f64 = self.mu
                    + (1..=a)
                        .map(|l| self.phi[l - 1] * (series[t - l] - self.mu))
                        .sum::<f64>();
                series[t] - pred
            })
            .collect())
    }

    /// Max absolute residual autocorrelation over lags 1..20.
    pub fn residual_whiteness(&self, series: &[f64]) -> Result<f64> {
        Ok(max_abs_autocorrelation(
            &self.one_step_residuals(series)?,
            20,
        ))
    }
}

impl DiffArModel {
    pub fn is_stationary(&self) -> bool {
        phi_is_stationary(&self.phi)
    }

    /// Level-recursion coefficients `c` with
    /// `D(τ) = Σ_{i=1..a+1} c_i·D(τ−i) + ε`: the expanded form of the
    /// differenced model.
    pub fn level_coefficients(&self) -> Vec<f64> {
        let a = self.order;
        let mut c = Vec::with_capacity(a + 1);
        c.push(self.phi[0] + 1.0);
        for l in 2..=a {
            c.push(self.phi[l - 1] - self.phi[l - 2]);
        }
        c.push(-self.phi[a - 1]);
        c
    }

    pub fn one_step_residuals(&self, series: &[f64]) -> Result<Vec<f64>> {
        let a = self.order;
        if series.len() <= a + 1 {
            return Err(Error::SeriesTooShort {
                got: series.len(),
                need: a + 2,
            });
        }
        Ok((a + 1..series.len())
            .map(|t| {
                let f = forecast_diff_ar(self, &series[t - a - 1..t]).expect("window length");
                series[t] - f.mean
            })
            .collect())
    }

    /// Max absolute residual autocorrelation over lags 1..20.
    pub fn residual_whiteness(&self, series: &[f64]) -> Result<f64> {
        Ok(max_abs_autocorrelation(
            &self.one_step_residuals(series)?,
            20,
        ))
    }
}

/// Fits AR(a) coefficients by conditional least squares on the centered
/// series. The drift is not estimated here; it is injected at forecast time.
pub fn fit_ar(series: &[f64], a: usize) -> Result<ArModel> {
    if a == 0 {
        return Err(Error::InvalidParameter("AR order must be >= 1".into()));
    }
    if series.len() < 10 * a {
        return Err(Error::SeriesTooShort {
            got: series.len(),
            need: 10 * a,
        });
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = series.iter().map(|x| x - mean).collect();

    let var = z.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var <= f64::EPSILON * (1.0 + mean * mean) {
        return Err(Error::DegenerateSeries);
    }

    // Normal equations of the lagged-value regression.
    let mut m = vec![0.0f64; a * a];
    let mut c = vec![0.0f64; a];
    for t in a..n {
        for i in 0..a {
            c[i] += z[t] * z[t - 1 - i];
            for j in 0..a {
                m[i * a + j] += z[t - 1 - i] * z[t - 1 - j];
            }
        }
    }
    let phi = linalg::solve_spd(&m, a, &c, |k| format!("lag{}", k + 1))?;

    let mut rss = 0.0;
    for t in a..n {
        let pred: f64 = (0..a).map(|i| phi[i] * z[t - 1 - i]).sum();
        let r = z[t] - pred;
        rss += r * r;
    }

    Ok(ArModel {
        order: a,
        phi,
        mu: mean,
        noise_var: rss / (n - a) as f64,
    })
}

/// Fits AR(a) on the once-differenced series.
pub fn fit_diff_ar(series: &[f64], a: usize) -> Result<DiffArModel> {
    if series.len() < 2 {
        return Err(Error::SeriesTooShort {
            got: series.len(),
            need: 10 * a.max(1) + 1,
        });
    }
    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let ar = fit_ar(&diff, a)?;
    Ok(DiffArModel {
        order: ar.order,
        phi: ar.phi,
        noise_var: ar.noise_var,
    })
}

/// One-step forecast of the drift-centered AR model.
///
/// `history` holds the last `a` observed values, most recent last; the
/// drift estimate and its error variance come from the long-term tier.
pub fn forecast_ar_with_drift(
    model: &ArModel,
    history: &[f64],
    mu_hat: f64,
    mu_var: f64,
) -> Result<Forecast> {
    let a = model.order;
    if history.len() != a {
        return Err(Error::HistoryLength {
            got: history.len(),
            need: a,
        });
    }
    let phi_sum: f64 = model.phi.iter().sum();
    let mean: f64 = mu_hat
        + (1..=a)
            .map(|l| model.phi[l - 1] * (history[a - l] - mu_hat))
            .sum::<f64>();
    let variance = model.noise_var + (1.0 - phi_sum).powi(2) * mu_var;
    Ok(Forecast {
        mean,
        variance,
        horizon: 1,
    })
}

/// One-step forecast of the differenced model from its last `a+1` values,
/// most recent last.
///
/// Evaluated in difference form
/// `D(τ−1) + Σ φ_l·(D(τ−l) − D(τ−l−1))`, which telescopes to the expanded
/// level recursion and preserves constant histories exactly.
pub fn forecast_diff_ar(model: &DiffArModel, history: &[f64]) -> Result<Forecast> {
    let a = model.order;
    if history.len() != a + 1 {
        return Err(Error::HistoryLength {
            got: history.len(),
            need: a + 1,
        });
    }
    let n = history.len();
    let mean: f64 = history[n - 1]
        + (1..=a)
            .map(|l| model.phi[l - 1] * (history[n - l] - history[n - l - 1]))
            .sum::<f64>();
    Ok(Forecast {
        mean,
        variance: model.noise_var,
        horizon: 1,
    })
}

/// `h`-step forecast: iterate the one-step recursion feeding forecasts back,
/// accumulating variance through the recursion's impulse-response weights.
pub fn multi_step(model: &DiffArModel, history: &[f64], h: usize) -> Result<Forecast> {
    if h == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let a = model.order;
    if history.len() != a + 1 {
        return Err(Error::HistoryLength {
            got: history.len(),
            need: a + 1,
        });
    }

    let mut window = history.to_vec();
    let mut mean = window[a];
    for _ in 0..h {
        mean = forecast_diff_ar(model, &window)?.mean;
        window.rotate_left(1);
        window[a] = mean;
    }

    let c = model.level_coefficients();
    let mut psi = vec![0.0f64; h];
    psi[0] = 1.0;
    for s in 1..h {
        let mut acc = 0.0;
        for (i, ci) in c.iter().enumerate() {
            if s > i {
                acc += ci * psi[s - 1 - i];
            }
        }
        psi[s] = acc;
    }
    let variance = model.noise_var * psi.iter().map(|p| p * p).sum::<f64>();

    Ok(Forecast {
        mean,
        variance,
        horizon: h,
    })
}

/// `h`-step forecast of the drift-centered AR model.
///
/// Means iterate the one-step recursion feeding forecasts back. The variance
/// combines the noise propagated through the recursion's impulse weights
/// with the drift-estimate error scaled by the h-step mean's sensitivity to
/// the drift; at `h = 1` this reduces to [`forecast_ar_with_drift`].
pub fn multi_step_ar(
    model: &ArModel,
    history: &[f64],
    mu_hat: f64,
    mu_var: f64,
    h: usize,
) -> Result<Forecast> {
    if h == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let a = model.order;
    if history.len() != a {
        return Err(Error::HistoryLength {
            got: history.len(),
            need: a,
        });
    }
    let phi_sum: f64 = model.phi.iter().sum();

    // Centered values and their drift sensitivities; observed history has
    // sensitivity zero.
    let mut window: Vec<f64> = history.iter().map(|x| x - mu_hat).collect();
    let mut sens = vec![0.0f64; a];
    let mut mean = mu_hat;
    let mut mean_sens = 0.0;
    for _ in 0..h {
        let z: f64 = (1..=a).map(|l| model.phi[l - 1] * window[a - l]).sum();
        mean = mu_hat + z;
        mean_sens = (1.0 - phi_sum) + (1..=a).map(|l| model.phi[l - 1] * sens[a - l]).sum::<f64>();
        window.rotate_left(1);
        window[a - 1] = z;
        sens.rotate_left(1);
        sens[a - 1] = mean_sens;
    }

    let mut psi = vec![0.0f64; h];
    psi[0] = 1.0;
    for s in 1..h {
        psi[s] = (1..=a.min(s)).map(|i| model.phi[i - 1] * psi[s - i]).sum();
    }
    let variance =
        model.noise_var * psi.iter().map(|p| p * p).sum::<f64>() + mean_sens * mean_sens * mu_var;

    Ok(Forecast {
        mean,
        variance,
        horizon: h,
    })
}

/// Simulates the drift-centered AR(a) process (200-step burn-in).
pub fn simulate_ar(phi: &[f64], mu: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let len = phi.len().max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma must be non-negative");
    let burn = 200;
    let mut z = vec![0.0f64; len];
    let mut out = Vec::with_capacity(n);
    for t in 0..burn + n {
        let next: f64 =
            (0..phi.len()).map(|i| phi[i] * z[len - 1 - i]).sum::<f64>() + normal.sample(&mut rng);
        z.rotate_left(1);
        z[len - 1] = next;
        if t >= burn {
            out.push(mu + next);
        }
    }
    out
}

/// Simulates the integrated model in operator form: increments follow AR(a),
/// levels accumulate them from `start`.
pub fn simulate_diff_ar(phi: &[f64], sigma: f64, n: usize, seed: u64, start: f64) -> Vec<f64> {
    let a = phi.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma must be non-negative");
    let burn = 200;
    let mut d = vec![0.0f64; a.max(1)];
    let mut level = start;
    let mut out = Vec::with_capacity(n);
    for t in 0..burn + n {
        let next: f64 =
            (0..a).map(|i| phi[i] * d[d.len() - 1 - i]).sum::<f64>() + normal.sample(&mut rng);
        d.rotate_left(1);
        let last = d.len() - 1;
        d[last] = next;
        if t >= burn {
            level += next;
            out.push(level);
        }
    }
    out
}

fn max_abs_autocorrelation(xs: &[f64], max_lag: usize) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let gamma0: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if gamma0 <= 0.0 {
        return 0.0;
    }
    (1..=max_lag.min(n - 1))
        .map(|k| {
            let g: f64 = (k..n)
                .map(|t| (xs[t] - mean) * (xs[t - k] - mean))
                .sum::<f64>()
                / n as f64;
            (g / gamma0).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    // Independent oracle: Yule-Walker from sample autocovariances, solved by
    // a naive Gaussian elimination (separate from the CLS/Cholesky path).
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn yule_walker(series: &[f64], a: usize) -> Vec<f64> {
        let n = series.len();
        let mean = series.iter().sum::<f64>() / n as f64;
        let gamma: Vec<f64> = (0..=a)
            .map(|k| {
                (k..n)
                    .map(|t| (series[t] - mean) * (series[t - k] - mean))
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        let mut m: Vec<Vec<f64>> = (0..a)
            .map(|i| {
                let mut row: Vec<f64> = (0..a)
                    .map(|j| gamma[(i as isize - j as isize).unsigned_abs()])
                    .collect();
                row.push(gamma[i + 1]);
                row
            })
            .collect();
        for col in 0..a {
            let pivot = (col..a)
                .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
                .unwrap();
            m.swap(col, pivot);
            for r in col + 1..a {
                let f = m[r][col] / m[col][col];
                for j in col..=a {
                    m[r][j] -= f * m[col][j];
                }
            }
        }
        let mut phi = vec![0.0; a];
        for i in (0..a).rev() {
            let mut s = m[i][a];
            for j in i + 1..a {
                s -= m[i][j] * phi[j];
            }
            phi[i] = s / m[i][i];
        }
        phi
    }

    #[test]
    fn ar1_fit_recovers_coefficient() {
        let series = simulate_ar(&[0.6], 5.0, 0.1, 10_000, 11);
        let model = fit_ar(&series, 1).unwrap();
        assert!(
            model.phi[0] > 0.55 && model.phi[0] < 0.65,
            "phi {}",
            model.phi[0]
        );
        let oracle = yule_walker(&series, 1);
        assert!((model.phi[0] - oracle[0]).abs() < 0.01, "CLS vs YW");
        assert!(model.is_stationary());
        assert!((model.mu - 5.0).abs() < 0.05);
    }

    #[test]
    fn white_noise_fits_near_zero() {
        let series = simulate_ar(&[0.0], 0.0, 1.0, 10_000, 13);
        let model = fit_ar(&series, 1).unwrap();
        assert!(model.phi[0].abs() < 0.05, "phi {}", model.phi[0]);
        let oracle = yule_walker(&series, 1);
        assert!((model.phi[0] - oracle[0]).abs() < 0.01);
    }

    #[test]
    fn ar2_fit_recovers_both_coefficients() {
        let truth = [0.5, -0.3];
        let series = simulate_ar(&truth, 0.0, 1.0, 10_000, 17);
        let model = fit_ar(&series, 2).unwrap();
        for (got, want) in model.phi.iter().zip(truth) {
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
        let oracle = yule_walker(&series, 2);
        for (got, o) in model.phi.iter().zip(oracle) {
            assert!((got - o).abs() < 0.02, "CLS {got} vs YW {o}");
        }
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_ar(&[1.0; 9], 1),
            Err(Error::SeriesTooShort { .. })
        ));
        assert!(matches!(
            fit_ar(&[3.5; 100], 1),
            Err(Error::DegenerateSeries)
        ));
        assert!(matches!(
            fit_ar(&[1.0; 100], 0),
            Err(Error::InvalidParameter(_))
        ));
        // Linear ramp: increments are constant.
        let ramp: Vec<f64> = (0..200).map(|t| 5.0 * t as f64).collect();
        assert!(matches!(
            fit_diff_ar(&ramp, 1),
            Err(Error::DegenerateSeries)
        ));
    }

    #[test]
    fn drift_forecast_matches_hand_evaluation() {
        let model = ArModel {
            order: 1,
            phi: vec![0.5],
            mu: 0.0,
            noise_var: 1.0,
        };
        let f = forecast_ar_with_drift(&model, &[110.0], 100.0, 0.0).unwrap();
        assert!((f.mean - 105.0).abs() < 1e-12);

        // phi = 0 collapses to drift plus noise.
        let white = ArModel {
            order: 2,
            phi: vec![0.0, 0.0],
            mu: 0.0,
            noise_var: 2.0,
        };
        let f = forecast_ar_with_drift(&white, &[50.0, 60.0], 42.0, 3.0).unwrap();
        assert_eq!(f.mean, 42.0);
        assert_eq!(f.variance, 2.0 + 3.0);

        // History pinned at the drift is a fixed point, exactly.
        let model = ArModel {
            order: 3,
            phi: vec![0.4, -0.2, 0.1],
            mu: 0.0,
            noise_var: 1.0,
        };
        let f = forecast_ar_with_drift(&model, &[77.5; 3], 77.5, 0.25).unwrap();
        assert_eq!(f.mean, 77.5);

        assert!(matches!(
            forecast_ar_with_drift(&model, &[1.0; 2], 0.0, 0.0),
            Err(Error::HistoryLength { got: 2, need: 3 })
        ));
    }

    #[test]
    fn drift_variance_combines_noise_and_drift_error() {
        let model = ArModel {
            order: 2,
            phi: vec![0.3, 0.2],
            mu: 0.0,
            noise_var: 1.5,
        };
        let f = forecast_ar_with_drift(&model, &[1.0, 2.0], 0.0, 4.0).unwrap();
        // (1 - 0.5)^2 * 4 = 1
        assert!((f.variance - 2.5).abs() < 1e-12);
    }

    #[test]
    fn diff_forecast_hand_case_and_random_walk() {
        // Random-walk forecast repeats the last value.
        let rw = DiffArModel {
            order: 1,
            phi: vec![0.0],
            noise_var: 1.0,
        };
        let f = forecast_diff_ar(&rw, &[48.0, 50.0]).unwrap();
        assert_eq!(f.mean, 50.0);

        // Hand evaluation: 1.4*50 + (0.1-0.4)*48 - 0.1*47 = 50.9.
        let model = DiffArModel {
            order: 2,
            phi: vec![0.4, 0.1],
            noise_var: 1.0,
        };
        let f = forecast_diff_ar(&model, &[47.0, 48.0, 50.0]).unwrap();
        assert!((f.mean - 50.9).abs() < 1e-12, "mean {}", f.mean);

        assert!(matches!(
            forecast_diff_ar(&model, &[1.0, 2.0]),
            Err(Error::HistoryLength { got: 2, need: 3 })
        ));
    }

    #[test]
    fn constant_history_is_preserved_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let a = rng.gen_range(1..=6);
            let phi: Vec<f64> = (0..a).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let c: f64 = rng.gen_range(-100.0..100.0);
            let model = DiffArModel {
                order: a,
                phi,
                noise_var: 1.0,
            };
            let f = forecast_diff_ar(&model, &vec![c; a + 1]).unwrap();
            assert_eq!(
                f.mean, c,
                "constant history must be a bit-exact fixed point"
            );
        }
    }

    #[test]
    fn expanded_and_difference_forms_agree() {
        let model = DiffArModel {
            order: 3,
            phi: vec![0.4, -0.25, 0.1],
            noise_var: 1.0,
        };
        let c = model.level_coefficients();
        assert_eq!(c.len(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..100 {
            let history: Vec<f64> = (0..4).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let diff_form = forecast_diff_ar(&model, &history).unwrap().mean;
            let expanded: f64 = (1..=4).map(|i| c[i - 1] * history[4 - i]).sum();
            assert!((diff_form - expanded).abs() < 1e-9 * (1.0 + expanded.abs()));
        }
    }

    #[test]
    fn diff_fit_on_random_walk_and_arima() {
        // Random walk: phi near zero, unit noise variance.
        let walk = simulate_diff_ar(&[], 1.0, 10_000, 31, 100.0);
        let model = fit_diff_ar(&walk, 1).unwrap();
        assert!(model.phi[0].abs() < 0.05, "phi {}", model.phi[0]);
        assert!(
            model.noise_var > 0.9 && model.noise_var < 1.1,
            "noise {}",
            model.noise_var
        );

        // Integrated AR(1) with phi = 0.5.
        let series = simulate_diff_ar(&[0.5], 1.0, 10_000, 37, 100.0);
        let model = fit_diff_ar(&series, 1).unwrap();
        assert!(
            model.phi[0] > 0.45 && model.phi[0] < 0.55,
            "phi {}",
            model.phi[0]
        );
        let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
        let oracle = yule_walker(&diff, 1);
        assert!((model.phi[0] - oracle[0]).abs() < 0.01);
    }

    #[test]
    fn multi_step_variance_accumulates_impulse_weights() {
        let rw = DiffArModel {
            order: 1,
            phi: vec![0.0],
            noise_var: 0.49,
        };
        for h in [1usize, 2, 7, 50] {
            let f = multi_step(&rw, &[10.0, 10.0], h).unwrap();
            assert!(
                (f.variance - h as f64 * 0.49).abs() < 1e-12,
                "random-walk variance must be h·σ²"
            );
        }

        // psi_1 = phi_1 + 1 = 1.5 -> var(2) = sigma^2 * (1 + 2.25).
        let model = DiffArModel {
            order: 1,
            phi: vec![0.5],
            noise_var: 1.0,
        };
        let f = multi_step(&model, &[10.0, 10.0], 2).unwrap();
        assert!((f.variance - 3.25).abs() < 1e-12, "var {}", f.variance);

        // h = 1 reduces to the one-step forecast.
        let one = multi_step(&model, &[9.0, 11.0], 1).unwrap();
        let direct = forecast_diff_ar(&model, &[9.0, 11.0]).unwrap();
        assert_eq!(one.mean, direct.mean);
        assert_eq!(one.variance, direct.variance);
    }

    #[test]
    fn multi_step_ar_extends_the_one_step_form() {
        let model = ArModel {
            order: 1,
            phi: vec![0.5],
            mu: 0.0,
            noise_var: 2.0,
        };
        let one = multi_step_ar(&model, &[110.0], 100.0, 3.0, 1).unwrap();
        let direct = forecast_ar_with_drift(&model, &[110.0], 100.0, 3.0).unwrap();
        assert_eq!(one.mean, direct.mean);
        assert_eq!(one.variance, direct.variance);

        // AR(1) forecasts decay geometrically toward the drift.
        let two = multi_step_ar(&model, &[110.0], 100.0, 3.0, 2).unwrap();
        assert!((two.mean - 102.5).abs() < 1e-12);
        // Noise through psi = [1, 0.5]; drift sensitivity 1 - phi^2.
        let want = 2.0 * (1.0 + 0.25) + (1.0 - 0.25) * (1.0 - 0.25) * 3.0;
        assert!((two.variance - want).abs() < 1e-12);

        assert!(matches!(
            multi_step_ar(&model, &[1.0], 0.0, 0.0, 0),
            Err(Error::InvalidParameter(_))
        ));
        // Far horizons converge to the drift with bounded variance.
        let far = multi_step_ar(&model, &[110.0], 100.0, 3.0, 200).unwrap();
        assert!((far.mean - 100.0).abs() < 1e-9);
        assert!(far.variance <= 2.0 / (1.0 - 0.25) + 3.0 + 1e-9);
    }

    #[test]
    fn multi_step_variance_is_monotone_in_horizon() {
        let model = DiffArModel {
            order: 2,
            phi: vec![0.3, -0.4],
            noise_var: 0.7,
        };
        let history = [10.0, 12.0, 11.0];
        let mut last = 0.0;
        for h in 1..=40 {
            let f = multi_step(&model, &history, h).unwrap();
            assert!(f.variance >= last, "variance dipped at h={h}");
            last = f.variance;
        }
    }

    #[test]
    fn operator_form_equals_expanded_recursion() {
        // Drive both forms with the same innovation sequence.
        let phi = [0.5, -0.2];
        let model = DiffArModel {
            order: 2,
            phi: phi.to_vec(),
            noise_var: 1.0,
        };
        let c = model.level_coefficients();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let eps: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();

        // Operator form: AR on increments, integrate.
        let mut levels_op = vec![100.0, 100.0, 100.0];
        let mut incr = vec![0.0, 0.0];
        // Expanded form: level recursion with coefficients c.
        let mut levels_ex = levels_op.clone();

        for &e in &eps {
            let d_next = phi[0] * incr[1] + phi[1] * incr[0] + e;
            incr = vec![incr[1], d_next];
            levels_op.push(levels_op.last().unwrap() + d_next);

            let n = levels_ex.len();
            let next: f64 = (1..=3).map(|i| c[i - 1] * levels_ex[n - i]).sum::<f64>() + e;
            levels_ex.push(next);
        }
        for (a, b) in levels_op.iter().zip(&levels_ex) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn residual_whiteness_is_small_for_the_true_model() {
        let series = simulate_diff_ar(&[0.5], 1.0, 10_000, 43, 50.0);
        let model = fit_diff_ar(&series, 1).unwrap();
        let w = model.residual_whiteness(&series).unwrap();
        assert!((0.0..=1.0).contains(&w));
        assert!(w < 3.0 / (series.len() as f64).sqrt(), "whiteness {w}");

        let ar_series = simulate_ar(&[0.6], 5.0, 1.0, 10_000, 47);
        let ar = fit_ar(&ar_series, 1).unwrap();
        let w = ar.residual_whiteness(&ar_series).unwrap();
        assert!(w < 3.0 / (ar_series.len() as f64).sqrt(), "whiteness {w}");

        // A badly mis-specified model leaves structure behind.
        let bad = DiffArModel {
            order: 1,
            phi: vec![-0.9],
            noise_var: 1.0,
        };
        let w_bad = bad.residual_whiteness(&series).unwrap();
        assert!(
            w_bad > 0.2,
            "mis-specified model should fail whiteness: {w_bad}"
        );
    }

    #[test]
    fn stationarity_check_flags_explosive_coefficients() {
        assert!(phi_is_stationary(&[0.6]));
        assert!(phi_is_stationary(&[0.5, -0.3]));
        assert!(!phi_is_stationary(&[1.2]));
        assert!(!phi_is_stationary(&[0.7, 0.5]));
        assert!(phi_is_stationary(&[]));
        // AR(2) stationarity triangle corner cases.
        assert!(!phi_is_stationary(&[0.0, 1.0]));
        assert!(phi_is_stationary(&[0.0, 0.99]));
    }

    #[test]
    fn realtime_model_json_schema() {
        let ar = ArModel {
            order: 2,
            phi: vec![0.4, 0.1],
            mu: 55.0,
            noise_var: 0.81,
        };
        let json = serde_json::to_value(RealtimeModel::from(&ar)).unwrap();
        assert_eq!(json["kind"], "ar");
        assert_eq!(json["a"], 2);
        assert_eq!(json["mu"], 55.0);
        assert_eq!(json["sigma2"], 0.81);

        let diff = DiffArModel {
            order: 1,
            phi: vec![0.25],
            noise_var: 1.44,
        };
        let value = serde_json::to_value(RealtimeModel::from(&diff)).unwrap();
        assert_eq!(value["kind"], "diff_ar");
        assert!(value.get("mu").is_none());

        let parsed: RealtimeModel =
            serde_json::from_str(r#"{"kind":"diff_ar","a":1,"phi":[0.25],"sigma2":1.44}"#).unwrap();
        assert_eq!(parsed.into_diff_ar().unwrap(), diff);
    }
}
