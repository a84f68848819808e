use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ols::qr_solve;
use super::{normal_two_sided, DesignMatrix, FitResult, StatsError};
use crate::digest::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Two-sided normal tail of estimate / bootstrap SE.
    #[default]
    Normal,
    /// Share of replications whose CR1-studentised deviation exceeds the observed t.
    BootstrapT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub pvalue: PValueMethod,
}

impl BootstrapOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        BootstrapOptions {
            replications,
            seed,
            pvalue: PValueMethod::Normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub se: Vec<f64>,
    pub p_raw: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    /// One coefficient vector per replication.
    pub draws: Vec<Vec<f64>>,
    pub replications: usize,
}

/// Per-cluster pieces of the linear refit.
struct ClusterParts {
    beta: DVector<f64>,
    /// `(X'X)⁻¹`.
    xtx_inv: DMatrix<f64>,
    /// Column `g` is `X_g' e_g`.
    scores: DMatrix<f64>,
    /// Column `g` is `(X'X)⁻¹ X_g' e_g`, the coefficient shift when cluster
    /// `g`'s residuals flip sign.
    shifts: DMatrix<f64>,
}

fn cluster_parts(design: &DesignMatrix, beta: Option<&[f64]>) -> Result<ClusterParts, StatsError> {
    let (n, k, g) = (design.n(), design.k(), design.n_clusters());
    let qr = qr_solve(design)?;
    let beta = beta.map_or(qr.beta.clone(), DVector::from_column_slice);
    let mut scores = DMatrix::zeros(k, g);
    for i in 0..n {
        let mut e = design.response[i];
        for (j, c) in design.columns.iter().enumerate() {
            e -= beta[j] * c.values[i];
        }
        let cl = design.cluster_ids[i];
        for (j, c) in design.columns.iter().enumerate() {
            scores[(j, cl)] += c.values[i] * e;
        }
    }
    let xtx_inv = &qr.r_inv * qr.r_inv.transpose();
    let shifts = &xtx_inv * &scores;
    Ok(ClusterParts {
        beta,
        xtx_inv,
        scores,
        shifts,
    })
}

fn small_sample_factor(n: usize, k: usize, g: usize) -> f64 {
    (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Closed-form CR1 cluster-robust covariance of the OLS coefficients.
pub fn cr1_vcov(fit: &FitResult, design: &DesignMatrix) -> Result<Vec<Vec<f64>>, StatsError> {
    if design.n_clusters() < 2 {
        return Err(StatsError::SingleCluster);
    }
    let parts = cluster_parts(design, Some(&fit.beta()))?;
    let c = small_sample_factor(design.n(), design.k(), design.n_clusters());
    Ok(to_rows(&(&parts.shifts * parts.shifts.transpose() * c)))
}

/// Unrestricted wild cluster bootstrap with Rademacher weights.
///
/// Each replication flips the residual signs of whole clusters, rebuilds
/// `y* = ŷ + w_g e` and refits. Because OLS is linear in `y`, the refit is
/// `β* = β̂ + Σ_g w_g (X'X)⁻¹ X_g' e_g`, which is computed exactly without
/// re-solving. Replication `r` draws from its own seeded stream, so results
/// do not depend on thread scheduling.
pub fn wild_cluster_bootstrap(
    fit: &FitResult,
    design: &DesignMatrix,
    options: &BootstrapOptions,
) -> Result<BootstrapResult, StatsError> {
    let reps = options.replications;
    if reps < 100 {
        return Err(StatsError::TooFewReplications(reps));
    }
    let (k, g) = (design.k(), design.n_clusters());
    if g < 2 {
        return Err(StatsError::SingleCluster);
    }
    let parts = cluster_parts(design, Some(&fit.beta()))?;

    let weights = |r: usize| -> Vec<f64> {
        let mut rng = seeded_rng(options.seed, &format!("wild/{r}"));
        (0..g).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
    };
    let draws: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let w = DVector::from_vec(weights(r));
            let beta = &parts.beta + &parts.shifts * w;
            beta.iter().copied().collect()
        })
        .collect();

    let mean: Vec<f64> = (0..k)
        .map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / reps as f64)
        .collect();
    let mut cov = vec![vec![0.0; k]; k];
    for d in &draws {
        for a in 0..k {
            let da = d[a] - mean[a];
            for b in a..k {
                cov[a][b] += da * (d[b] - mean[b]);
            }
        }
    }
    for a in 0..k {
        for b in a..k {
            cov[a][b] /= (reps - 1) as f64;
            cov[b][a] = cov[a][b];
        }
    }
    let se: Vec<f64> = (0..k).map(|j| cov[j][j].max(0.0).sqrt()).collect();
    let beta_hat = fit.beta();

    let p_raw = match options.pvalue {
        PValueMethod::Normal => (0..k)
            .map(|j| {
                if se[j] > 0.0 {
                    normal_two_sided(beta_hat[j] / se[j])
                } else if beta_hat[j].abs() < 1e-12 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
        PValueMethod::BootstrapT => bootstrap_t(design, &parts, &draws, &beta_hat, &weights),
    };
    Ok(BootstrapResult {
        se,
        p_raw,
        vcov: cov,
        draws,
        replications: reps,
    })
}

fn bootstrap_t(
    design: &DesignMatrix,
    parts: &ClusterParts,
    draws: &[Vec<f64>],
    beta_hat: &[f64],
    weights: &(dyn Fn(usize) -> Vec<f64> + Sync),
) -> Vec<f64> {
    let (n, k, g) = (design.n(), design.k(), design.n_clusters());
    let c = small_sample_factor(n, k, g);
    // Per-cluster X_g'X_g, so replicated cluster scores are w_g s_g - X_g'X_g d.
    let mut gram = vec![DMatrix::<f64>::zeros(k, k); g];
    for i in 0..n {
        let cl = design.cluster_ids[i];
        for a in 0..k {
            let xa = design.columns[a].values[i];
            if xa == 0.0 {
                continue;
            }
            for b in 0..k {
                gram[cl][(a, b)] += xa * design.columns[b].values[i];
            }
        }
    }
    let cr1_se = |meat: &DMatrix<f64>| -> Vec<f64> {
        let v = &parts.xtx_inv * meat * &parts.xtx_inv * c;
        (0..k).map(|j| v[(j, j)].max(0.0).sqrt()).collect()
    };
    let observed = cr1_se(&(&parts.scores * parts.scores.transpose()));
    let t_obs: Vec<f64> = (0..k).map(|j| (beta_hat[j] / observed[j]).abs()).collect();

    let exceed = draws
        .par_iter()
        .enumerate()
        .map(|(r, draw)| {
            let d = DVector::from_iterator(k, (0..k).map(|j| draw[j] - beta_hat[j]));
            let w = weights(r);
            let mut meat = DMatrix::zeros(k, k);
            for cl in 0..g {
                let s = parts.scores.column(cl) * w[cl] - &gram[cl] * &d;
                meat += &s * s.transpose();
            }
            let se = cr1_se(&meat);
            (0..k)
                .map(|j| usize::from((d[j] / se[j]).abs() >= t_obs[j]))
                .collect::<Vec<_>>()
        })
        .reduce(
            || vec![0; k],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    exceed.into_iter().map(|e| e as f64 / draws.len() as f64).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::stats::ols::tests::col;
    use crate::stats::{fit_ols, ColumnKind};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand_distr::{Distribution, Normal};

    /// `clusters × size` rows: y = 1 + 0.5 x + 2 d + u_g + e with cluster
    /// effects `u_g ~ N(0, 1)` and noise `e ~ N(0, 1)`.
    pub(crate) fn clustered(seed: u64, clusters: usize, size: usize) -> DesignMatrix {
        let mut rng = seeded_rng(seed, "clustered");
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (mut y, mut x, mut d, mut ids) = (vec![], vec![], vec![], vec![]);
        for g in 0..clusters {
            let u = normal.sample(&mut rng);
            let dg = f64::from(u8::from(g % 2 == 0));
            for _ in 0..size {
                let xi: f64 = normal.sample(&mut rng) + u;
                let e: f64 = normal.sample(&mut rng);
                y.push(1.0 + 0.5 * xi + 2.0 * dg + u + e);
                x.push(xi);
                d.push(dg);
                ids.push(g);
            }
        }
        let n = y.len();
        DesignMatrix::new(
            y,
            vec![
                col("(intercept)", ColumnKind::Intercept, vec![1.0; n]),
                col("x", ColumnKind::Continuous, x),
                col("d", ColumnKind::Dummy, d),
            ],
            ids,
        )
        .unwrap()
    }

    #[test]
    fn matches_cr1_on_clustered_data() {
        let design = clustered(3, 100, 20);
        let fit = fit_ols(&design).unwrap();
        let boot = wild_cluster_bootstrap(&fit, &design, &BootstrapOptions::new(2000, 11)).unwrap();
        let cr1 = cr1_vcov(&fit, &design).unwrap();
        for j in 0..3 {
            let oracle = cr1[j][j].sqrt();
            assert!((boot.se[j] / oracle - 1.0).abs() < 0.15, "{j}: {} vs {oracle}", boot.se[j]);
        }
    }

    #[test]
    fn perfect_fit_gives_zero_se() {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.25 * v).collect();
        let design = DesignMatrix::new(
            y,
            vec![
                col("(intercept)", ColumnKind::Intercept, vec![1.0; n]),
                col("x", ColumnKind::Continuous, x),
            ],
            (0..n).map(|i| i / 4).collect(),
        )
        .unwrap();
        let fit = fit_ols(&design).unwrap();
        let boot = wild_cluster_bootstrap(&fit, &design, &BootstrapOptions::new(200, 1)).unwrap();
        assert!(boot.se.iter().all(|s| *s < 1e-10));
    }

    #[test]
    fn deterministic_and_schedule_independent() {
        let design = clustered(5, 30, 5);
        let fit = fit_ols(&design).unwrap();
        let opts = BootstrapOptions::new(500, 42);
        let a = wild_cluster_bootstrap(&fit, &design, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| wild_cluster_bootstrap(&fit, &design, &opts).unwrap());
        assert_eq!(a, b);
        let c = wild_cluster_bootstrap(&fit, &design, &BootstrapOptions::new(500, 43)).unwrap();
        assert_ne!(a.se, c.se);
    }

    #[test]
    fn each_draw_equals_an_explicit_refit() {
        let design = clustered(9, 12, 4);
        let fit = fit_ols(&design).unwrap();
        let opts = BootstrapOptions::new(100, 7);
        let boot = wild_cluster_bootstrap(&fit, &design, &opts).unwrap();
        for r in [0usize, 37, 99] {
            let mut rng = seeded_rng(7, &format!("wild/{r}"));
            let w: Vec<f64> = (0..12).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let y: Vec<f64> = (0..design.n())
                .map(|i| fit.fitted[i] + w[design.cluster_ids[i]] * fit.residuals[i])
                .collect();
            let refit = fit_ols(&design.with_response(y)).unwrap();
            for (a, b) in refit.beta().iter().zip(&boot.draws[r]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bootstrap_t_p_values_are_probabilities() {
        let design = clustered(2, 20, 5);
        let fit = fit_ols(&design).unwrap();
        let mut opts = BootstrapOptions::new(300, 3);
        opts.pvalue = PValueMethod::BootstrapT;
        let boot = wild_cluster_bootstrap(&fit, &design, &opts).unwrap();
        assert!(boot.p_raw.iter().all(|p| (0.0..=1.0).contains(p)));
        // The treatment effect of 2 is far outside the noise.
        assert!(boot.p_raw[2] < 0.05);
    }

    #[test]
    fn rejects_bad_requests() {
        let design = clustered(1, 10, 3);
        let fit = fit_ols(&design).unwrap();
        assert!(matches!(
            wild_cluster_bootstrap(&fit, &design, &BootstrapOptions::new(99, 1)),
            Err(StatsError::TooFewReplications(99))
        ));
        let single = DesignMatrix {
            cluster_ids: vec![0; design.n()],
            cluster_labels: vec!["0".into()],
            ..design.clone()
        };
        assert!(matches!(
            wild_cluster_bootstrap(&fit, &single, &BootstrapOptions::new(100, 1)),
            Err(StatsError::SingleCluster)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn draws_centre_on_the_estimate(seed in 0u64..1000) {
            let design = clustered(seed, 25, 4);
            let fit = fit_ols(&design).unwrap();
            let boot = wild_cluster_bootstrap(&fit, &design, &BootstrapOptions::new(400, seed)).unwrap();
            let beta = fit.beta();
            for j in 0..3 {
                let mean = boot.draws.iter().map(|d| d[j]).sum::<f64>() / 400.0;
                let mc_se = boot.se[j] / 400f64.sqrt();
                prop_assert!((mean - beta[j]).abs() <= 3.0 * mc_se + 1e-12);
            }
        }
    }
}
