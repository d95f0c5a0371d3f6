//! Per-arm ANCOVA against concurrent controls and the interim/final decision
//! rules.
//!
//! The model regresses the week-6 score on an intercept, the treatment
//! indicator and the baseline score, optionally with indicator columns for
//! the time periods present in the data (earliest period is the reference).
//! It is solved by Householder QR. Intercept, treatment and baseline enter
//! first, in that order; period columns are pivoted by remaining relative
//! norm and any whose remainder falls below `RANK_TOL` is dropped.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::model::{ArmId, Covariates};
use crate::stats::student_t_cdf;

/// Relative column-norm tolerance of the rank check.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    Interim,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisRow {
    pub week6: f64,
    pub baseline: f64,
    pub treated: bool,
    pub period_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisDataset {
    pub arm_id: ArmId,
    pub kind: AnalysisKind,
    pub rows: Vec<AnalysisRow>,
}

impl AnalysisDataset {
    pub fn n_treated(&self) -> usize {
        self.rows.iter().filter(|r| r.treated).count()
    }

    pub fn n_control(&self) -> usize {
        self.rows.len() - self.n_treated()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AncovaFit {
    pub beta_hat: f64,
    pub se_beta: f64,
    pub t_stat: f64,
    pub df: u64,
    pub p_one_sided: f64,
    pub dropped_period_levels: BTreeSet<u32>,
}

/// Columns of the design matrix, stored column-major.
struct Design {
    columns: Vec<Vec<f64>>,
    names: Vec<&'static str>,
    /// period level of each indicator column (None for the fixed columns)
    levels: Vec<Option<u32>>,
}

fn build_design(data: &AnalysisDataset, covariates: Covariates) -> Design {
    let n = data.rows.len();
    let mut columns = vec![
        vec![1.0; n],
        data.rows.iter().map(|r| if r.treated { 1.0 } else { 0.0 }).collect(),
        data.rows.iter().map(|r| r.baseline).collect(),
    ];
    let mut names = vec!["intercept", "treatment", "baseline"];
    let mut levels = vec![None, None, None];
    if covariates == Covariates::BaselinePlusPeriod {
        let present: BTreeSet<u32> = data.rows.iter().map(|r| r.period_id).collect();
        for &level in present.iter().skip(1) {
            columns.push(
                data.rows
                    .iter()
                    .map(|r| if r.period_id == level { 1.0 } else { 0.0 })
                    .collect(),
            );
            names.push("period");
            levels.push(Some(level));
        }
    }
    Design {
        columns,
        names,
        levels,
    }
}

fn norm_from(col: &[f64], start: usize) -> f64 {
    col[start..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Applies the Householder reflection that zeroes `pivot[j+1..]` to `target`.
fn reflect(v: &[f64], beta: f64, target: &mut [f64], j: usize) {
    let dot: f64 = v.iter().zip(&target[j..]).map(|(a, b)| a * b).sum();
    let s = beta * dot;
    for (t, vi) in target[j..].iter_mut().zip(v) {
        *t -= s * vi;
    }
}

/// Least-squares fit of the ANCOVA model for one arm.
pub fn fit_ancova(data: &AnalysisDataset, covariates: Covariates) -> Result<AncovaFit, AnalysisError> {
    let n_t = data.n_treated();
    if n_t == 0 || n_t == data.rows.len() {
        return Err(AnalysisError::MissingGroup);
    }
    let Design {
        mut columns,
        names,
        levels,
    } = build_design(data, covariates);
    let n = data.rows.len();
    let p = columns.len();
    if n <= 3 {
        return Err(AnalysisError::InsufficientData { rows: n, params: 3 });
    }
    let mut y: Vec<f64> = data.rows.iter().map(|r| r.week6).collect();
    let y_norm = norm_from(&y, 0);

    let original_norms: Vec<f64> = columns.iter().map(|c| norm_from(c, 0)).collect();
    // order[j] = index into the original column list of the j-th pivot
    let mut order: Vec<usize> = (0..p).collect();
    let mut diag = Vec::with_capacity(p);
    let mut rank = 0usize;

    for j in 0..p.min(n) {
        if j >= 3 {
            // choose the remaining period column with the largest relative remainder
            let (best, ratio) = (j..p)
                .map(|c| {
                    let orig = original_norms[order[c]];
                    let rem = norm_from(&columns[c], j);
                    (c, if orig > 0.0 { rem / orig } else { 0.0 })
                })
                .fold((j, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if ratio <= RANK_TOL {
                break;
            }
            columns.swap(j, best);
            order.swap(j, best);
        }
        let col = &columns[j];
        let alpha_norm = norm_from(col, j);
        if j < 3 && alpha_norm <= RANK_TOL * original_norms[j].max(f64::MIN_POSITIVE) {
            return Err(AnalysisError::RankDeficient(names[j]));
        }
        let x0 = col[j];
        let alpha = if x0 >= 0.0 { -alpha_norm } else { alpha_norm };
        let mut v: Vec<f64> = col[j..].to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|a| a * a).sum();
        if vtv > 0.0 {
            let beta = 2.0 / vtv;
            for c in columns.iter_mut().skip(j) {
                reflect(&v, beta, c, j);
            }
            reflect(&v, beta, &mut y, j);
        }
        diag.push(alpha);
        rank += 1;
    }
    if rank < 3 {
        return Err(AnalysisError::RankDeficient(names[rank]));
    }
    if n <= rank {
        return Err(AnalysisError::InsufficientData {
            rows: n,
            params: rank,
        });
    }

    // R[i][c] for the first `rank` pivots
    let r_at = |i: usize, c: usize| if i == c { diag[i] } else { columns[c][i] };

    // back substitution for the coefficients (pivoted order)
    let mut coef = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = y[i];
        for (c, value) in coef.iter().enumerate().take(rank).skip(i + 1) {
            s -= r_at(i, c) * value;
        }
        coef[i] = s / r_at(i, i);
    }
    let rss: f64 = y[rank..].iter().map(|v| v * v).sum();
    let df = (n - rank) as u64;

    // row of R^{-1} for the treatment coefficient: solve R^T z = e_1
    let mut z = vec![0.0; rank];
    for i in 0..rank {
        let mut s = if i == 1 { 1.0 } else { 0.0 };
        for (k, zk) in z.iter().enumerate().take(i) {
            s -= r_at(k, i) * zk;
        }
        z[i] = s / r_at(i, i);
    }
    let var_factor: f64 = z.iter().map(|v| v * v).sum();
    let beta_hat = coef[1];
    let sigma2 = rss / df as f64;
    let se_beta = (sigma2 * var_factor).sqrt();

    let scale = y_norm.max(1.0);
    let exact_fit = rss.sqrt() <= 1e-12 * scale;
    let (t_stat, p_one_sided) = if exact_fit {
        if beta_hat.abs() <= 1e-9 * scale {
            return Err(AnalysisError::Degenerate);
        }
        if beta_hat < 0.0 {
            (f64::NEG_INFINITY, 0.0)
        } else {
            (f64::INFINITY, 1.0)
        }
    } else {
        let t = beta_hat / se_beta;
        let p = student_t_cdf(t, df).map_err(|_| AnalysisError::Degenerate)?;
        (t, p)
    };

    let kept: BTreeSet<usize> = order[..rank].iter().copied().collect();
    let dropped_period_levels = (0..p)
        .filter(|c| !kept.contains(c))
        .filter_map(|c| levels[c])
        .collect();

    Ok(AncovaFit {
        beta_hat,
        se_beta,
        t_stat,
        df,
        p_one_sided,
        dropped_period_levels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterimDecision {
    Continue,
    StopFutility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalDecision {
    Success,
    Failure,
}

/// Stops only when the interim p-value strictly exceeds the boundary.
pub fn interim_decision(fit: &AncovaFit, futility_boundary: f64) -> InterimDecision {
    decide_interim(fit.p_one_sided, futility_boundary)
}

pub fn decide_interim(p: f64, futility_boundary: f64) -> InterimDecision {
    if p > futility_boundary {
        InterimDecision::StopFutility
    } else {
        InterimDecision::Continue
    }
}

/// Success when `p <= alpha`; no multiplicity adjustment.
pub fn final_decision(fit: &AncovaFit, alpha: f64) -> FinalDecision {
    decide_final(fit.p_one_sided, alpha)
}

pub fn decide_final(p: f64, alpha: f64) -> FinalDecision {
    if p <= alpha {
        FinalDecision::Success
    } else {
        FinalDecision::Failure
    }
}

/// Debug record of one analysis, one CSV row each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub arm_id: ArmId,
    pub kind: AnalysisKind,
    pub n_t: usize,
    pub n_c: usize,
    pub beta: f64,
    pub se: f64,
    pub p: f64,
}

impl AnalysisRecord {
    pub fn new(data: &AnalysisDataset, fit: &AncovaFit) -> Self {
        AnalysisRecord {
            arm_id: data.arm_id,
            kind: data.kind,
            n_t: data.n_treated(),
            n_c: data.n_control(),
            beta: fit.beta_hat,
            se: fit.se_beta,
            p: fit.p_one_sided,
        }
    }
}
