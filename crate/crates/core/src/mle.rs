//! Long-term forecaster: per-cell maximum-likelihood linear regression.
//!
//! Each partition cell family gets a five-coefficient linear model
//! `y = β₀ + β₁·years + β₂·weeks + β₃·days + β₄·temperature + ε` fitted by
//! solving the normal equations. The noise variance estimate uses the
//! maximum-likelihood divisor `p` (not the unbiased `p − 5`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::timegrid::TrainingRow;

pub const FEATURE_COUNT: usize = 5;
pub const COLUMN_NAMES: [&str; FEATURE_COUNT] =
    ["intercept", "years", "weeks", "days", "temperature"];

/// Stacked regression inputs: `X` is p×5 row-major with a leading ones
/// column, `Y` the matching cell averages.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }
}

/// Fitted cell-family model: coefficients, ML noise variance and row count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MleFit {
    /// Partition cell family this fit belongs to.
    pub cell: String,
    /// `[intercept, years, weeks, days, temperature]`.
    pub beta: [f64; FEATURE_COUNT],
    /// ML residual variance, kW².
    pub sigma2: f64,
    /// Training rows backing the fit.
    pub p: usize,
}

/// Stacks training rows into a design matrix. Needs at least 5 rows.
pub fn build_design(rows: &[TrainingRow]) -> Result<DesignMatrix> {
    if rows.len() < FEATURE_COUNT {
        return Err(Error::TooFewRows {
            got: rows.len(),
            need: FEATURE_COUNT,
        });
    }
    let mut x = Vec::with_capacity(rows.len() * FEATURE_COUNT);
    let mut y = Vec::with_capacity(rows.len());
    for row in rows {
        x.push(1.0);
        x.extend_from_slice(&row.features());
        y.push(row.mean_kw);
    }
    Ok(DesignMatrix { x, y })
}

/// Fits `β̂ = (XᵀX)⁻¹XᵀY` and `σ̂² = ‖Y − Xβ̂‖²/p`.
///
/// Rank-deficient or ill-conditioned designs fail with an error naming the
/// offending column.
pub fn fit_mle(design: &DesignMatrix, cell: impl Into<String>) -> Result<MleFit> {
    let p = design.rows();
    let mut xtx = [0.0f64; FEATURE_COUNT * FEATURE_COUNT];
    let mut xty = [0.0f64; FEATURE_COUNT];
    for r in 0..p {
        let row = design.row(r);
        for i in 0..FEATURE_COUNT {
            for j in 0..FEATURE_COUNT {
                xtx[i * FEATURE_COUNT + j] += row[i] * row[j];
            }
            xty[i] += row[i] * design.y[r];
        }
    }
    let solution = linalg::solve_spd(&xtx, FEATURE_COUNT, &xty, |k| COLUMN_NAMES[k].to_string())?;
    let mut beta = [0.0f64; FEATURE_COUNT];
    beta.copy_from_slice(&solution);

    let mut rss = 0.0;
    for r in 0..p {
        let row = design.row(r);
        let fitted: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let res = design.y[r] - fitted;
        rss += res * res;
    }

    Ok(MleFit {
        cell: cell.into(),
        beta,
        sigma2: rss / p as f64,
        p,
    })
}

/// Point forecast for feature vector `[x1, x2, x3, x4]` with its error
/// variance (the fit's σ̂²).
pub fn predict(fit: &MleFit, x: [f64; 4]) -> (f64, f64) {
    let mean = fit.beta[0]
        + fit.beta[1] * x[0]
        + fit.beta[2] * x[1]
        + fit.beta[3] * x[2]
        + fit.beta[4] * x[3];
    (mean, fit.sigma2)
}

/// Aggregates `b` consecutive cell forecasts: means add, and so do the
/// error variances of the independent per-cell noises.
pub fn forecast_horizon(fits: &[MleFit], xs: &[[f64; 4]]) -> Result<(f64, f64)> {
    if fits.len() != xs.len() {
        return Err(Error::LengthMismatch {
            left: fits.len(),
            right: xs.len(),
        });
    }
    if fits.is_empty() {
        return Err(Error::InvalidParameter(
            "forecast_horizon needs at least one cell".into(),
        ));
    }
    let mut mean = 0.0;
    let mut variance = 0.0;
    for (fit, x) in fits.iter().zip(xs) {
        let (m, v) = predict(fit, *x);
        mean += m;
        variance += v;
    }
    Ok((mean, variance))
}

/// Training residuals `Y − Xβ̂`.
pub fn residuals(fit: &MleFit, design: &DesignMatrix) -> Result<Vec<f64>> {
    if design.rows() != fit.p {
        return Err(Error::LengthMismatch {
            left: design.rows(),
            right: fit.p,
        });
    }
    Ok((0..design.rows())
        .map(|r| {
            let fitted: f64 = design.row(r).iter().zip(fit.beta).map(|(a, b)| a * b).sum();
            design.y[r] - fitted
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn row(x: [u32; 3], temp: f64, y: f64) -> TrainingRow {
        TrainingRow {
            years_elapsed: x[0],
            weeks_into_year_part: x[1],
            days_into_week_part: x[2],
            temperature_c: temp,
            mean_kw: y,
        }
    }

    const BETA_STAR: [f64; 5] = [10.0, 1.0, -2.0, 0.5, 0.3];

    fn synthetic_design(p: usize, noise_sd: f64, seed: u64) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_sd).unwrap();
        let rows: Vec<TrainingRow> = (0..p)
            .map(|_| {
                let x1 = rng.gen_range(0..5u32);
                let x2 = rng.gen_range(0..13u32);
                let x3 = rng.gen_range(0..5u32);
                let x4: f64 = rng.gen_range(-10.0..30.0);
                let mean = BETA_STAR[0]
                    + BETA_STAR[1] * f64::from(x1)
                    + BETA_STAR[2] * f64::from(x2)
                    + BETA_STAR[3] * f64::from(x3)
                    + BETA_STAR[4] * x4;
                let eps = if noise_sd > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                row([x1, x2, x3], x4, mean + eps)
            })
            .collect();
        build_design(&rows).unwrap()
    }

    // Independent route: Gaussian elimination with partial pivoting on the
    // 5x5 normal equations, written separately from the Cholesky solver.
    #[allow(clippy::needless_range_loop)]
    fn normal_equations_ge(design: &DesignMatrix) -> [f64; 5] {
        let mut a = [[0.0f64; 6]; 5];
        for r in 0..design.rows() {
            let row = design.row(r);
            for i in 0..5 {
                for j in 0..5 {
                    a[i][j] += row[i] * row[j];
                }
                a[i][5] += row[i] * design.y[r];
            }
        }
        for col in 0..5 {
            let pivot = (col..5)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            for r in col + 1..5 {
                let f = a[r][col] / a[col][col];
                for j in col..6 {
                    a[r][j] -= f * a[col][j];
                }
            }
        }
        let mut beta = [0.0f64; 5];
        for i in (0..5).rev() {
            let mut s = a[i][5];
            for j in i + 1..5 {
                s -= a[i][j] * beta[j];
            }
            beta[i] = s / a[i][i];
        }
        beta
    }

    #[test]
    fn design_row_layout() {
        let rows = vec![
            row([2, 3, 1], 20.0, 42.0),
            row([0, 1, 0], 5.0, 1.0),
            row([1, 0, 2], -3.0, 2.0),
            row([3, 2, 4], 12.0, 3.0),
            row([4, 5, 3], 8.0, 4.0),
        ];
        let design = build_design(&rows).unwrap();
        assert_eq!(design.row(0), &[1.0, 2.0, 3.0, 1.0, 20.0]);
        assert_eq!(design.rows(), 5);
        assert_eq!(design.targets()[0], 42.0);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let rows = vec![row([0, 0, 0], 0.0, 1.0); 4];
        assert!(matches!(
            build_design(&rows),
            Err(Error::TooFewRows { got: 4, need: 5 })
        ));
    }

    #[test]
    fn design_dimensions() {
        let design = synthetic_design(200, 0.5, 1);
        assert_eq!(design.rows(), 200);
        assert_eq!(design.row(199).len(), 5);
    }

    #[test]
    fn noiseless_fit_recovers_coefficients_exactly() {
        let design = synthetic_design(40, 0.0, 2);
        let fit = fit_mle(&design, "test").unwrap();
        for (b, b_star) in fit.beta.iter().zip(BETA_STAR) {
            assert!((b - b_star).abs() < 1e-9, "{b} vs {b_star}");
        }
        assert!(fit.sigma2 < 1e-18);
        // Prediction reproduces every training target.
        for r in 0..design.rows() {
            let x = design.row(r);
            let (mean, _) = predict(&fit, [x[1], x[2], x[3], x[4]]);
            assert!((mean - design.targets()[r]).abs() < 1e-9);
        }
        // All-zero residuals.
        let res = residuals(&fit, &design).unwrap();
        assert!(res.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn constant_target_gives_pure_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<TrainingRow> = (0..30)
            .map(|_| {
                row(
                    [
                        rng.gen_range(0..4),
                        rng.gen_range(0..10),
                        rng.gen_range(0..5),
                    ],
                    rng.gen_range(-5.0..25.0),
                    7.25,
                )
            })
            .collect();
        let fit = fit_mle(&build_design(&rows).unwrap(), "const").unwrap();
        assert!((fit.beta[0] - 7.25).abs() < 1e-9);
        for b in &fit.beta[1..] {
            assert!(b.abs() < 1e-9, "slope {b} should vanish");
        }
        let (mean, var) = predict(&fit, [9.0, 9.0, 9.0, 9.0]);
        assert!((mean - 7.25).abs() < 1e-8);
        assert!((var - fit.sigma2).abs() == 0.0);
    }

    #[test]
    fn seeded_noisy_fit_matches_truth_and_oracle() {
        let design = synthetic_design(200, 0.5, 42);
        let fit = fit_mle(&design, "seeded").unwrap();

        for (b, b_star) in fit.beta.iter().zip(BETA_STAR) {
            assert!((b - b_star).abs() < 0.15, "{b} vs {b_star}");
        }
        assert!(
            fit.sigma2 > 0.2 && fit.sigma2 < 0.3,
            "sigma2 {}",
            fit.sigma2
        );

        let oracle = normal_equations_ge(&design);
        for (b, o) in fit.beta.iter().zip(oracle) {
            assert!((b - o).abs() < 1e-9, "solver {b} vs oracle {o}");
        }

        // Normal-equation orthogonality: Xᵀr ≈ 0 column by column.
        let res = residuals(&fit, &design).unwrap();
        let y_norm = design.targets().iter().map(|y| y * y).sum::<f64>().sqrt();
        for j in 0..5 {
            let dot: f64 = (0..design.rows()).map(|r| design.row(r)[j] * res[r]).sum();
            assert!(dot.abs() < 1e-6 * y_norm, "column {j} residual dot {dot}");
        }
        let mean_res: f64 = res.iter().sum::<f64>() / res.len() as f64;
        assert!(mean_res.abs() < 1e-9);
    }

    #[test]
    fn permutation_of_rows_leaves_fit_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows: Vec<TrainingRow> = (0..24)
            .map(|_| {
                row(
                    [
                        rng.gen_range(0..4),
                        rng.gen_range(0..10),
                        rng.gen_range(0..5),
                    ],
                    rng.gen_range(-5.0..25.0),
                    rng.gen_range(0.0..100.0),
                )
            })
            .collect();
        let fit_a = fit_mle(&build_design(&rows).unwrap(), "a").unwrap();
        rows.reverse();
        rows.swap(0, 10);
        let fit_b = fit_mle(&build_design(&rows).unwrap(), "b").unwrap();
        for (a, b) in fit_a.beta.iter().zip(fit_b.beta) {
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
        assert!((fit_a.sigma2 - fit_b.sigma2).abs() < 1e-10 * (1.0 + fit_a.sigma2));
    }

    #[test]
    fn ml_variance_uses_divisor_p() {
        let design = synthetic_design(50, 1.0, 9);
        let fit = fit_mle(&design, "divisor").unwrap();
        let res = residuals(&fit, &design).unwrap();
        let rss: f64 = res.iter().map(|r| r * r).sum();
        let p = design.rows() as f64;
        assert!((fit.sigma2 - rss / p).abs() < 1e-12);
        // Distinguishable from the unbiased estimator.
        assert!((fit.sigma2 - rss / (p - 5.0)).abs() > 1e-6);
    }

    #[test]
    fn scale_equivariance() {
        let design = synthetic_design(60, 0.7, 11);
        let fit = fit_mle(&design, "unit").unwrap();
        let scaled = DesignMatrix {
            x: design.x.clone(),
            y: design.y.iter().map(|v| 3.0 * v).collect(),
        };
        let fit3 = fit_mle(&scaled, "scaled").unwrap();
        for (a, b) in fit.beta.iter().zip(fit3.beta) {
            assert!((3.0 * a - b).abs() < 1e-8 * (1.0 + b.abs()));
        }
        assert!((9.0 * fit.sigma2 - fit3.sigma2).abs() < 1e-8 * (1.0 + fit3.sigma2));
    }

    #[test]
    fn predict_reproduces_fitted_values_exactly() {
        // On training rows, predict must return the fitted values Xβ̂
        // bit-for-bit even for noisy fits.
        let design = synthetic_design(80, 1.3, 19);
        let fit = fit_mle(&design, "fitted").unwrap();
        let res = residuals(&fit, &design).unwrap();
        for (r, res_r) in res.iter().enumerate() {
            let row = design.row(r);
            let (mean, _) = predict(&fit, [row[1], row[2], row[3], row[4]]);
            let fitted = design.targets()[r] - res_r;
            assert!((mean - fitted).abs() <= 1e-12 * (1.0 + fitted.abs()));
        }
    }

    #[test]
    fn collinear_design_names_the_column() {
        // weeks column duplicates the years column => singular XᵀX.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<TrainingRow> = (0..30)
            .map(|_| {
                let x1 = rng.gen_range(0..5u32);
                row(
                    [x1, x1, rng.gen_range(0..5)],
                    rng.gen_range(-5.0..25.0),
                    1.0,
                )
            })
            .collect();
        let err = fit_mle(&build_design(&rows).unwrap(), "cell").unwrap_err();
        match err {
            Error::SingularDesign { ref column, .. } => {
                assert!(
                    column == "weeks" || column == "years",
                    "offending column should be one of the duplicated pair, got {column}"
                );
            }
            other => panic!("expected SingularDesign, got {other:?}"),
        }
    }

    #[test]
    fn horizon_accumulates_means_and_variances() {
        let design = synthetic_design(40, 0.0, 2);
        let fit = fit_mle(&design, "h").unwrap();
        let x = [1.0, 2.0, 3.0, 10.0];

        let (m1, v1) = forecast_horizon(std::slice::from_ref(&fit), &[x]).unwrap();
        let (pm, pv) = predict(&fit, x);
        assert_eq!((m1, v1), (pm, pv));

        let mut fits = Vec::new();
        for (i, s2) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            let mut f = fit.clone();
            f.sigma2 = *s2;
            f.cell = format!("c{i}");
            fits.push(f);
        }
        let (_, v) = forecast_horizon(&fits, &[x; 4]).unwrap();
        assert!((v - 10.0).abs() < 1e-12);

        let mut equal = fits.clone();
        for f in &mut equal {
            f.sigma2 = 0.9;
        }
        let (_, veq) = forecast_horizon(&equal, &[x; 4]).unwrap();
        assert!((veq - 4.0 * 0.9).abs() < 1e-12);

        assert!(matches!(
            forecast_horizon(&fits, &[x; 3]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn fit_serializes_with_schema_field_names() {
        let design = synthetic_design(40, 0.0, 2);
        let fit = fit_mle(&design, "y1-j2-k1-sunny-q0").unwrap();
        let json = serde_json::to_value(&fit).unwrap();
        assert!(json.get("cell").is_some());
        assert_eq!(json.get("beta").unwrap().as_array().unwrap().len(), 5);
        assert!(json.get("sigma2").is_some());
        assert_eq!(json.get("p").unwrap().as_u64().unwrap(), 40);
    }
}
