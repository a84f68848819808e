use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};

use super::{normal_two_sided, DesignMatrix, FitResult, Link, SeKind, StatsError};

/// Thin QR pieces shared by OLS and the bootstrap.
pub(crate) struct Qr {
    pub r_inv: DMatrix<f64>,
    pub beta: DVector<f64>,
}

pub(crate) fn qr_solve(design: &DesignMatrix) -> Result<Qr, StatsError> {
    let (n, k) = (design.n(), design.k());
    if k == 0 || n < k {
        return Err(StatsError::RankDeficient {
            columns: design.labels(),
        });
    }
    let qr = design.x().qr();
    let mut qty = DVector::from_column_slice(&design.response);
    qr.q_tr_mul(&mut qty);
    let r = qr.unpack_r();
    design.check_r(&r)?;
    let beta = r
        .solve_upper_triangular(&qty.rows(0, k).into_owned())
        .ok_or_else(|| StatsError::RankDeficient {
            columns: design.labels(),
        })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("triangular factor is invertible after the rank check");
    Ok(Qr { r_inv, beta })
}

/// Least squares via Householder QR.
pub fn fit_ols(design: &DesignMatrix) -> Result<FitResult, StatsError> {
    let (n, k) = (design.n(), design.k());
    let Qr { r_inv, beta } = qr_solve(design)?;
    let y = &design.response;
    let mut fitted = vec![0.0; n];
    for (j, col) in design.columns.iter().enumerate() {
        let b = beta[j];
        for (f, v) in fitted.iter_mut().zip(&col.values) {
            *f += b * v;
        }
    }
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { (1.0 - sse / sst).max(0.0) } else { 0.0 };
    let dof = n.saturating_sub(k);
    let r2_adj = if dof > 0 {
        1.0 - (1.0 - r2) * (n as f64 - 1.0) / dof as f64
    } else {
        r2
    };
    let sigma2 = if dof > 0 { sse / dof as f64 } else { 0.0 };
    let xtx_inv = &r_inv * r_inv.transpose();
    let vcov: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| sigma2 * xtx_inv[(i, j)]).collect())
        .collect();

    let ml_var = (sse / n as f64).max(1e-300);
    let log_likelihood =
        -0.5 * n as f64 * ((2.0 * std::f64::consts::PI).ln() + ml_var.ln() + 1.0);
    let params = (k + 1) as f64;

    let labels = design.labels();
    let mut coefficients = IndexMap::new();
    let mut se = IndexMap::new();
    let mut p_raw = IndexMap::new();
    for (j, label) in labels.into_iter().enumerate() {
        let s = vcov[j][j].max(0.0).sqrt();
        let p = if s > 0.0 {
            normal_two_sided(beta[j] / s)
        } else if beta[j].abs() < 1e-12 {
            1.0
        } else {
            0.0
        };
        coefficients.insert(label.clone(), beta[j]);
        se.insert(label.clone(), s);
        p_raw.insert(label, p);
    }
    Ok(FitResult {
        model: design.model.clone(),
        estimator: "ols".into(),
        link: Link::Identity,
        coefficients,
        se,
        se_kind: SeKind::ModelBased,
        p_raw,
        p_adjusted: IndexMap::new(),
        adjust_method: None,
        vcov,
        residuals,
        fitted,
        r2,
        r2_adj,
        aic: -2.0 * log_likelihood + 2.0 * params,
        bic: -2.0 * log_likelihood + (n as f64).ln() * params,
        log_likelihood,
        n,
        bootstrap_replications: 0,
        iterations: 0,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::stats::{Column, ColumnKind};
    use proptest::prelude::*;

    pub(crate) fn col(label: &str, kind: ColumnKind, values: Vec<f64>) -> Column {
        Column {
            label: label.into(),
            kind,
            values,
            terms: vec![],
        }
    }

    pub(crate) fn design(y: Vec<f64>, cols: Vec<Column>) -> DesignMatrix {
        let n = y.len();
        DesignMatrix::new(y, cols, (0..n).collect()).unwrap()
    }

    #[test]
    fn two_group_mean_difference() {
        let d = design(
            vec![70.0, 70.0, 50.0, 70.0, 50.0, 50.0],
            vec![
                col("(intercept)", ColumnKind::Intercept, vec![1.0; 6]),
                col("b", ColumnKind::Dummy, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            ],
        );
        let f = fit_ols(&d).unwrap();
        assert!((f.coef("(intercept)").unwrap() - 190.0 / 3.0).abs() < 1e-10);
        assert!((f.coef("b").unwrap() + 20.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn constant_response() {
        let x: Vec<f64> = (0..10).map(|i| (i % 3) as f64).collect();
        let d = design(
            vec![42.0; 10],
            vec![
                col("(intercept)", ColumnKind::Intercept, vec![1.0; 10]),
                col("x", ColumnKind::Continuous, x),
            ],
        );
        let f = fit_ols(&d).unwrap();
        assert!((f.coef("(intercept)").unwrap() - 42.0).abs() < 1e-10);
        assert!(f.coef("x").unwrap().abs() < 1e-10);
        assert_eq!(f.r2, 0.0);
        assert!(f.aic.is_finite());
    }

    #[test]
    fn noiseless_recovery() {
        let n = 50;
        let x1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x2: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos() * 3.0).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.5 - 2.25 * x1[i] + 0.75 * x2[i]).collect();
        let d = design(
            y,
            vec![
                col("(intercept)", ColumnKind::Intercept, vec![1.0; n]),
                col("x1", ColumnKind::Continuous, x1),
                col("x2", ColumnKind::Continuous, x2),
            ],
        );
        let f = fit_ols(&d).unwrap();
        for (label, truth) in [("(intercept)", 1.5), ("x1", -2.25), ("x2", 0.75)] {
            assert!((f.coef(label).unwrap() - truth).abs() < 1e-8);
        }
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_information_criteria() {
        let y = vec![1.0, 2.0, 4.0, 3.0, 5.0];
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let d = design(
            y,
            vec![
                col("(intercept)", ColumnKind::Intercept, vec![1.0; 5]),
                col("x", ColumnKind::Continuous, x),
            ],
        );
        let f = fit_ols(&d).unwrap();
        // Slope 0.9, intercept 0.3, SSE 1.9 by hand.
        assert!((f.coef("x").unwrap() - 0.9).abs() < 1e-12);
        let sse: f64 = f.residuals.iter().map(|e| e * e).sum();
        assert!((sse - 1.9).abs() < 1e-12);
        let ll = -2.5 * ((2.0 * std::f64::consts::PI).ln() + (1.9f64 / 5.0).ln() + 1.0);
        assert!((f.log_likelihood - ll).abs() < 1e-12);
        assert!((f.aic - (-2.0 * ll + 6.0)).abs() < 1e-12);
        assert!((f.bic - (-2.0 * ll + 3.0 * 5f64.ln())).abs() < 1e-12);
        assert!((f.r2_adj - (1.0 - (1.0 - f.r2) * 4.0 / 3.0)).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dummy_coefficients_are_cell_mean_contrasts(
            cells in proptest::collection::vec((0usize..3, 0u8..=100), 6..100)
        ) {
            let mut groups: Vec<usize> = cells.iter().map(|c| c.0).collect();
            // Guarantee every group occurs.
            groups[0] = 0; groups[1] = 1; groups[2] = 2;
            let y: Vec<f64> = cells.iter().map(|c| c.1 as f64).collect();
            let n = y.len();
            let dummy = |g: usize| groups.iter().map(|&x| f64::from(u8::from(x == g))).collect::<Vec<_>>();
            let d = design(y.clone(), vec![
                col("(intercept)", ColumnKind::Intercept, vec![1.0; n]),
                col("g1", ColumnKind::Dummy, dummy(1)),
                col("g2", ColumnKind::Dummy, dummy(2)),
            ]);
            let f = fit_ols(&d).unwrap();
            let mean = |g: usize| {
                let v: Vec<f64> = (0..n).filter(|&i| groups[i] == g).map(|i| y[i]).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            prop_assert!((f.coef("(intercept)").unwrap() - mean(0)).abs() < 1e-8);
            prop_assert!((f.coef("g1").unwrap() - (mean(1) - mean(0))).abs() < 1e-8);
            prop_assert!((f.coef("g2").unwrap() - (mean(2) - mean(0))).abs() < 1e-8);
        }

        #[test]
        fn information_criteria_order_survives_rescaling(
            seed in 0u64..500, scale in 0.01f64..100.0, shift in -50.0f64..50.0
        ) {
            use rand::Rng;
            let mut rng = crate::digest::seeded_rng(seed, "aic");
            let n = 40;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let y: Vec<f64> = (0..n).map(|i| 2.0 * x[i] + rng.random_range(-3.0..3.0)).collect();
            let fit = |x: &[f64], z: &[f64]| {
                let small = design(y.clone(), vec![
                    col("(intercept)", ColumnKind::Intercept, vec![1.0; n]),
                    col("x", ColumnKind::Continuous, x.to_vec()),
                ]);
                let big = design(y.clone(), vec![
                    col("(intercept)", ColumnKind::Intercept, vec![1.0; n]),
                    col("x", ColumnKind::Continuous, x.to_vec()),
                    col("z", ColumnKind::Continuous, z.to_vec()),
                ]);
                let (a, b) = (fit_ols(&small).unwrap(), fit_ols(&big).unwrap());
                (a.aic < b.aic, a.bic < b.bic)
            };
            let xs: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            let zs: Vec<f64> = z.iter().map(|v| v * scale - shift).collect();
            prop_assert_eq!(fit(&x, &z), fit(&xs, &zs));
        }
    }
}
