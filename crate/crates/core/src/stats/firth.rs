use std::collections::HashMap;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{normal_two_sided, DesignMatrix, FitResult, Link, SeKind, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirthOptions {
    pub max_iterations: usize,
    /// Converged once every modified score component is below this.
    pub score_tolerance: f64,
    /// Or once the accepted step is smaller than this in every coordinate.
    pub step_tolerance: f64,
    pub max_halvings: usize,
}

impl Default for FirthOptions {
    fn default() -> Self {
        FirthOptions {
            max_iterations: 50,
            score_tolerance: 1e-8,
            step_tolerance: 1e-10,
            max_halvings: 30,
        }
    }
}

/// Rows with identical covariates collapsed into binomial patterns. Designs
/// built from factors have few distinct rows, so every iteration costs
/// `O(patterns · k²)` rather than `O(n · k²)`.
struct Patterns {
    x: DMatrix<f64>,
    trials: DVector<f64>,
    successes: DVector<f64>,
    /// Pattern of each original row.
    row_pattern: Vec<usize>,
}

fn compress(design: &DesignMatrix) -> Result<Patterns, StatsError> {
    let (n, k) = (design.n(), design.k());
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut trials = Vec::new();
    let mut successes = Vec::new();
    let mut row_pattern = Vec::with_capacity(n);
    for i in 0..n {
        let y = design.response[i];
        if y != 0.0 && y != 1.0 {
            return Err(StatsError::NonBinaryResponse(y));
        }
        let row: Vec<f64> = design.columns.iter().map(|c| c.values[i]).collect();
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let p = *index.entry(key).or_insert_with(|| {
            rows.push(row);
            trials.push(0.0);
            successes.push(0.0);
            rows.len() - 1
        });
        trials[p] += 1.0;
        successes[p] += y;
        row_pattern.push(p);
    }
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    Ok(Patterns {
        x,
        trials: DVector::from_vec(trials),
        successes: DVector::from_vec(successes),
        row_pattern,
    })
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct State {
    pi: DVector<f64>,
    information: DMatrix<f64>,
    inverse: DMatrix<f64>,
    log_likelihood: f64,
    objective: f64,
}

fn evaluate(p: &Patterns, beta: &DVector<f64>, penalised: bool) -> Option<State> {
    let eta = &p.x * beta;
    let pi = eta.map(sigmoid);
    let mut log_likelihood = 0.0;
    for j in 0..eta.len() {
        let (m, s) = (p.trials[j], p.successes[j]);
        log_likelihood -= s * softplus(-eta[j]) + (m - s) * softplus(eta[j]);
    }
    let w = DVector::from_iterator(pi.len(), (0..pi.len()).map(|j| p.trials[j] * pi[j] * (1.0 - pi[j])));
    let mut xw = p.x.clone();
    for (j, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[j];
    }
    let information = p.x.transpose() * xw;
    let chol = information.clone().cholesky()?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return None;
    }
    let inverse = chol.inverse();
    let objective = if penalised {
        log_likelihood + 0.5 * log_det
    } else {
        log_likelihood
    };
    Some(State {
        pi,
        information,
        inverse,
        log_likelihood,
        objective,
    })
}

/// Modified score `Σ x_j (s_j − m_j π_j + h_j (½ − π_j))`, where `h_j` is the
/// pattern's total hat value. Without the penalty `h` is zero.
fn score(p: &Patterns, st: &State, penalised: bool) -> DVector<f64> {
    let rows = p.x.nrows();
    let mut resid = DVector::zeros(rows);
    for j in 0..rows {
        let mut r = p.successes[j] - p.trials[j] * st.pi[j];
        if penalised {
            let x = p.x.row(j).transpose();
            let w = p.trials[j] * st.pi[j] * (1.0 - st.pi[j]);
            let h = w * (x.transpose() * &st.inverse * &x)[(0, 0)];
            r += h * (0.5 - st.pi[j]);
        }
        resid[j] = r;
    }
    p.x.transpose() * resid
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Logistic regression with the Jeffreys-prior penalty, finite under
/// complete or quasi-complete separation.
pub fn fit_firth_logit(design: &DesignMatrix) -> Result<FitResult, StatsError> {
    fit_logit(design, true, &FirthOptions::default())
}

/// Ordinary maximum-likelihood logit; fails to converge under separation.
pub fn fit_logit_mle(design: &DesignMatrix) -> Result<FitResult, StatsError> {
    fit_logit(design, false, &FirthOptions::default())
}

pub fn fit_firth_logit_with(design: &DesignMatrix, options: &FirthOptions) -> Result<FitResult, StatsError> {
    fit_logit(design, true, options)
}

struct Optimum {
    beta: DVector<f64>,
    state: State,
    iterations: usize,
    /// Objective after each accepted step, starting at zero coefficients.
    #[cfg_attr(not(test), allow(dead_code))]
    trace: Vec<f64>,
}

/// Largest number of covariate patterns for which the Newton direction is
/// tried; its Jacobian needs a dense patterns × patterns matrix.
const NEWTON_MAX_PATTERNS: usize = 2500;

/// Accepts objective changes lost in floating-point rounding as well as gains.
fn not_worse(next: f64, current: f64) -> bool {
    next >= current - 64.0 * f64::EPSILON * (1.0 + current.abs())
}

/// Jacobian of the modified score, i.e. the Hessian of the penalised
/// log-likelihood. With `Q = X I⁻¹ X'`, `q_j = Q_jj`, `c_l = w_l (1 − 2π_l)`:
/// `∂h_j/∂β = c_j q_j x_j − w_j Σ_l c_l Q_jl² x_l` and
/// `J = −I + Σ_j x_j [(½ − π_j) ∂h_j/∂β − h_j π_j (1 − π_j) x_j']`.
fn score_jacobian(p: &Patterns, st: &State, penalised: bool) -> DMatrix<f64> {
    let mut jac = -&st.information;
    if !penalised {
        return jac;
    }
    let rows = p.x.nrows();
    let q_full = &p.x * &st.inverse * p.x.transpose();
    let w = |j: usize| p.trials[j] * st.pi[j] * (1.0 - st.pi[j]);
    let c: Vec<f64> = (0..rows).map(|j| w(j) * (1.0 - 2.0 * st.pi[j])).collect();
    // dh = diag(c q) X − diag(w) (Q∘Q) diag(c) X
    let mut cx = p.x.clone();
    for (l, mut row) in cx.row_iter_mut().enumerate() {
        row *= c[l];
    }
    let q2 = q_full.map(|v| v * v);
    let mut dh = -(q2 * cx);
    for j in 0..rows {
        let wj = w(j);
        let qj = q_full[(j, j)];
        let mut row = dh.row_mut(j);
        row *= wj;
        row += p.x.row(j) * (c[j] * qj);
    }
    let mut left = p.x.clone();
    let mut right = p.x.clone();
    for j in 0..rows {
        let h = w(j) * q_full[(j, j)];
        left.row_mut(j).scale_mut(0.5 - st.pi[j]);
        right.row_mut(j).scale_mut(h * st.pi[j] * (1.0 - st.pi[j]));
    }
    jac += left.transpose() * dh - p.x.transpose() * right;
    jac
}

/// Newton direction on the modified score. The scoring step `I⁻¹ U*`
/// ignores the curvature of the penalty and converges only linearly when
/// separated cells push estimates far from zero; this restores quadratic
/// convergence. `None` when the Hessian is not negative definite.
fn newton_direction(p: &Patterns, st: &State, u: &DVector<f64>, penalised: bool) -> Option<DVector<f64>> {
    if p.x.nrows() > NEWTON_MAX_PATTERNS {
        return None;
    }
    let jac = score_jacobian(p, st, penalised);
    let neg = -(&jac + jac.transpose()) * 0.5;
    Some(neg.cholesky()?.solve(u))
}

/// Newton iterations with step-halving on the (penalised) log-likelihood.
fn optimise(
    design: &DesignMatrix,
    patterns: &Patterns,
    penalised: bool,
    options: &FirthOptions,
) -> Result<Optimum, StatsError> {
    let k = design.k();
    let mut beta = DVector::zeros(k);
    let mut state = evaluate(patterns, &beta, penalised).ok_or_else(|| StatsError::RankDeficient {
        columns: design.labels(),
    })?;
    let mut trace = vec![state.objective];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        let u = score(patterns, &state, penalised);
        if max_abs(&u) < options.score_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let scoring = &state.inverse * &u;
        let mut directions = Vec::with_capacity(2);
        if let Some(d) = newton_direction(patterns, &state, &u, penalised) {
            directions.push(d);
        }
        directions.push(scoring);

        let mut accepted = None;
        'search: for delta in &directions {
            let mut t = 1.0;
            for _ in 0..=options.max_halvings {
                let candidate = &beta + delta * t;
                if let Some(next) = evaluate(patterns, &candidate, penalised) {
                    if not_worse(next.objective, state.objective) {
                        accepted = Some((candidate, next));
                        break 'search;
                    }
                }
                t *= 0.5;
            }
        }
        match accepted {
            Some((b, next)) => {
                let step = max_abs(&(&b - &beta));
                beta = b;
                state = next;
                trace.push(state.objective);
                if step < options.step_tolerance {
                    converged = true;
                    break;
                }
            }
            None => break,
        }
    }
    if !converged {
        return Err(StatsError::NonConvergence { iterations, trace });
    }
    Ok(Optimum {
        beta,
        state,
        iterations,
        trace,
    })
}

fn fit_logit(design: &DesignMatrix, penalised: bool, options: &FirthOptions) -> Result<FitResult, StatsError> {
    let (n, k) = (design.n(), design.k());
    if k == 0 {
        return Err(StatsError::EmptyDesign);
    }
    let patterns = compress(design)?;
    let Optimum {
        beta,
        state,
        iterations,
        ..
    } = optimise(design, &patterns, penalised, options)?;

    let fitted: Vec<f64> = patterns.row_pattern.iter().map(|&p| state.pi[p]).collect();
    let residuals: Vec<f64> = design.response.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let ybar = design.response.iter().sum::<f64>() / n as f64;
    let null_ll = if ybar > 0.0 && ybar < 1.0 {
        n as f64 * (ybar * ybar.ln() + (1.0 - ybar) * (1.0 - ybar).ln())
    } else {
        0.0
    };
    let ll = state.log_likelihood;
    let (r2, r2_adj) = if null_ll < 0.0 {
        (1.0 - ll / null_ll, 1.0 - (ll - k as f64) / null_ll)
    } else {
        (0.0, 0.0)
    };
    let vcov: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| state.inverse[(i, j)]).collect()).collect();

    let mut coefficients = IndexMap::new();
    let mut se = IndexMap::new();
    let mut p_raw = IndexMap::new();
    for (j, label) in design.labels().into_iter().enumerate() {
        let s = vcov[j][j].max(0.0).sqrt();
        coefficients.insert(label.clone(), beta[j]);
        se.insert(label.clone(), s);
        p_raw.insert(label, normal_two_sided(beta[j] / s));
    }
    Ok(FitResult {
        model: design.model.clone(),
        estimator: if penalised { "firth_logit" } else { "logit" }.into(),
        link: Link::Logit,
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
        aic: -2.0 * ll + 2.0 * k as f64,
        bic: -2.0 * ll + (n as f64).ln() * k as f64,
        log_likelihood: ll,
        n,
        bootstrap_replications: 0,
        iterations,
    })
}
