//! IPCW estimating-equation fit on the stacked dataset.
//!
//! The equation is
//! `Phi(beta) = sum_ij w_ij x_ij { y_ij - g^{-1}(x_ij beta) } = 0`
//! with `x_ij` the time-expanded design row and `y_ij` the observed life lost
//! at horizon `l_j`. The identity link is linear in `beta` and solved as one
//! weighted least-squares system; the log link uses damped Newton steps.
//! Weights are held fixed when computing the sandwich variance.

mod inference;
mod link;
mod model;

use nalgebra::{DMatrix, DVector};

pub use inference::{backward_stepwise, fit_static, normal_two_sided_p, wald_table, write_wald_csv, StepwiseResult, WaldRow};
pub use link::Link;
pub use model::{Convergence, FittedModel, MODEL_FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::stacking::{column_name, power_label, StackedDataset};

/// How per-row scores enter the meat of the sandwich.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ScoreClustering {
    /// Sum each subject's scores across horizons before the outer product.
    #[default]
    Subject,
    /// Outer product of each stacked row separately (ignores within-subject correlation).
    Row,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub clustering: ScoreClustering,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, clustering: ScoreClustering::Subject }
    }
}

const MAX_HALVINGS: usize = 30;
const RANK_TOLERANCE: f64 = 1e-10;

fn linear_predictor(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// `(sum w x x' h(eta), Phi(beta))` over rows with positive weight.
fn jacobian_and_score(stacked: &StackedDataset, link: Link, beta: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let q = beta.len();
    let mut jac = DMatrix::<f64>::zeros(q, q);
    let mut phi = DVector::<f64>::zeros(q);
    for row in stacked.rows.iter().filter(|r| r.weight > 0.0) {
        let eta = linear_predictor(&row.design, beta);
        let mu = link.inverse(eta);
        let h = link.derivative(eta);
        if !mu.is_finite() || !h.is_finite() {
            return Err(Error::NonFinite(format!("g^-1 overflowed at linear predictor {eta}")));
        }
        let resid = row.weight * (row.life_lost - mu);
        let wh = row.weight * h;
        for a in 0..q {
            let xa = row.design[a];
            if xa == 0.0 {
                continue;
            }
            phi[a] += xa * resid;
            for b in a..q {
                jac[(a, b)] += wh * xa * row.design[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            jac[(a, b)] = jac[(b, a)];
        }
    }
    Ok((jac, phi))
}

fn equation_norm(phi: &DVector<f64>, n: usize) -> f64 {
    phi.amax() / n as f64
}

/// Reject Gram matrices whose correlation form has a (numerically) null
/// direction, naming the columns that load on it.
fn check_rank(gram: &DMatrix<f64>, labels: &[String]) -> Result<()> {
    let q = gram.nrows();
    let diag: Vec<f64> = (0..q).map(|i| gram[(i, i)]).collect();
    let zero: Vec<String> = (0..q).filter(|&i| !(diag[i] > 0.0)).map(|i| labels[i].clone()).collect();
    if !zero.is_empty() {
        return Err(Error::RankDeficient { columns: zero });
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let corr = DMatrix::from_fn(q, q, |i, j| gram[(i, j)] * scale[i] * scale[j]);
    let eig = corr.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let mut flagged = vec![false; q];
    let mut deficient = false;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= RANK_TOLERANCE * max {
            deficient = true;
            for (i, flag) in flagged.iter_mut().enumerate() {
                if eig.eigenvectors[(i, k)].abs() > 0.1 {
                    *flag = true;
                }
            }
        }
    }
    if deficient {
        let columns = (0..q).filter(|&i| flagged[i]).map(|i| labels[i].clone()).collect();
        return Err(Error::RankDeficient { columns });
    }
    Ok(())
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    m.clone().lu().solve(rhs).ok_or_else(|| Error::Singular("estimating-equation Jacobian".into()))
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.inverse());
    }
    m.clone().try_inverse().ok_or_else(|| Error::Singular(what.into()))
}

fn term_labels(stacked: &StackedDataset) -> Vec<String> {
    stacked
        .basis
        .active_terms()
        .iter()
        .map(|t| format!("{}:{}", column_name(&stacked.schema, t.column), power_label(t.power)))
        .collect()
}

/// Solve the IPCW estimating equation and attach the sandwich covariance.
pub fn fit(stacked: &StackedDataset, link: Link, options: FitOptions) -> Result<FittedModel> {
    let q = stacked.basis.dim();
    let n = stacked.n_subjects();
    let labels = term_labels(stacked);

    let (gram, _) = jacobian_and_score(stacked, Link::Identity, &vec![0.0; q])?;
    check_rank(&gram, &labels)?;

    let (beta, convergence) = match link {
        Link::Identity => solve_identity(stacked, n)?,
        Link::Log => solve_newton(stacked, link, n, options)?,
    };
    let covariance = sandwich_variance(stacked, link, &beta, options.clustering)?;
    Ok(FittedModel {
        schema: stacked.schema.clone(),
        basis: stacked.basis.clone(),
        grid: stacked.grid.clone(),
        link,
        coefficients: beta,
        covariance,
        n_subjects: n,
        convergence,
    })
}

fn solve_identity(stacked: &StackedDataset, n: usize) -> Result<(Vec<f64>, Convergence)> {
    let q = stacked.basis.dim();
    let (gram, rhs) = jacobian_and_score(stacked, Link::Identity, &vec![0.0; q])?;
    let mut beta = solve_spd(&gram, &rhs)?;
    // One step of iterative refinement against the exact residual equation.
    let (_, phi) = jacobian_and_score(stacked, Link::Identity, beta.as_slice())?;
    beta += solve_spd(&gram, &phi)?;
    let (_, phi) = jacobian_and_score(stacked, Link::Identity, beta.as_slice())?;
    Ok((beta.as_slice().to_vec(), Convergence { iterations: 1, equation_norm: equation_norm(&phi, n) }))
}

fn solve_newton(stacked: &StackedDataset, link: Link, n: usize, options: FitOptions) -> Result<(Vec<f64>, Convergence)> {
    let q = stacked.basis.dim();
    let (mut wsum, mut wy) = (0.0, 0.0);
    for r in stacked.rows.iter().filter(|r| r.weight > 0.0) {
        wsum += r.weight;
        wy += r.weight * r.life_lost;
    }
    if !(wy > 0.0) {
        return Err(Error::InvalidInput("log link needs a positive mean life lost".into()));
    }
    let mut beta = vec![0.0; q];
    beta[0] = link.g(wy / wsum);

    let (mut jac, mut phi) = jacobian_and_score(stacked, link, &beta)?;
    let mut norm = equation_norm(&phi, n);
    for iter in 1..=options.max_iter {
        if norm <= options.tol {
            return Ok((beta, Convergence { iterations: iter - 1, equation_norm: norm }));
        }
        let step = solve_spd(&jac, &phi)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            if let Ok((j2, p2)) = jacobian_and_score(stacked, link, &trial) {
                let n2 = equation_norm(&p2, n);
                if n2 < norm {
                    beta = trial;
                    jac = j2;
                    phi = p2;
                    norm = n2;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            if norm <= options.tol {
                break;
            }
            return Err(Error::NonConvergence { iterations: iter, norm });
        }
    }
    if norm <= options.tol {
        Ok((beta, Convergence { iterations: options.max_iter, equation_norm: norm }))
    } else {
        Err(Error::NonConvergence { iterations: options.max_iter, norm })
    }
}

/// Robust covariance `A^{-1} B A^{-1} / n` with
/// `A = (1/n) sum w x x' h(x beta)` and `B = (1/n) sum_i s_i s_i'`.
pub fn sandwich_variance(
    stacked: &StackedDataset,
    link: Link,
    beta: &[f64],
    clustering: ScoreClustering,
) -> Result<DMatrix<f64>> {
    let q = beta.len();
    let n = stacked.n_subjects() as f64;
    let (jac, _) = jacobian_and_score(stacked, link, beta)?;
    let a = jac / n;
    let mut b = DMatrix::<f64>::zeros(q, q);
    let mut add_outer = |s: &DVector<f64>| b.syger(1.0, s, s, 1.0);
    for block in stacked.by_subject() {
        let mut subject = DVector::<f64>::zeros(q);
        for row in block.iter().filter(|r| r.weight > 0.0) {
            let x = DVector::from_column_slice(&row.design);
            let eps = row.weight * (row.life_lost - link.inverse(linear_predictor(&row.design, beta)));
            match clustering {
                ScoreClustering::Subject => subject.axpy(eps, &x, 1.0),
                ScoreClustering::Row => add_outer(&(x * eps)),
            }
        }
        if clustering == ScoreClustering::Subject {
            add_outer(&subject);
        }
    }
    // syger fills the lower triangle only.
    for i in 0..q {
        for j in (i + 1)..q {
            b[(i, j)] = b[(j, i)];
        }
    }
    let b = b / n;
    let a_inv = invert(&a, "sandwich bread matrix A")?;
    let cov = &a_inv * b * &a_inv / n;
    Ok((&cov + cov.transpose()) * 0.5)
}

#[cfg(test)]
mod tests;
