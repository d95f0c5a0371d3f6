//! SVD least-squares oracle for the ANCOVA fit, shared by several test targets.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use platform_sim::analysis::{AnalysisDataset, AnalysisKind, AnalysisRow};
use platform_sim::model::Covariates;
use platform_sim::stats::RngStream;

pub struct Oracle {
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub df: u64,
}

fn design(data: &AnalysisDataset, covariates: Covariates, skip_levels: &[u32]) -> DMatrix<f64> {
    let mut levels: Vec<u32> = data.rows.iter().map(|r| r.period_id).collect();
    levels.sort();
    levels.dedup();
    let extra: Vec<u32> = match covariates {
        Covariates::BaselineOnly => Vec::new(),
        Covariates::BaselinePlusPeriod => levels
            .into_iter()
            .skip(1)
            .filter(|l| !skip_levels.contains(l))
            .collect(),
    };
    let n = data.rows.len();
    DMatrix::from_fn(n, 3 + extra.len(), |i, j| {
        let r = &data.rows[i];
        match j {
            0 => 1.0,
            1 => f64::from(u8::from(r.treated)),
            2 => r.baseline,
            _ => f64::from(u8::from(r.period_id == extra[j - 3])),
        }
    })
}

pub fn oracle(data: &AnalysisDataset, covariates: Covariates, skip_levels: &[u32]) -> Oracle {
    let x = design(data, covariates, skip_levels);
    let y = DVector::from_iterator(data.rows.len(), data.rows.iter().map(|r| r.week6));
    let svd = x.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let rank = svd.rank(tol);
    let coef = svd.solve(&y, tol).unwrap();
    let resid = &y - &x * &coef;
    let df = x.nrows() - rank;
    let sigma2 = resid.norm_squared() / df as f64;
    // (X'X)^+ = V S^-2 V', without forming X'X
    let v_t = svd.v_t.as_ref().unwrap();
    let var_factor: f64 = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > tol)
        .map(|(i, s)| (v_t[(i, 1)] / s).powi(2))
        .sum();
    let se = (sigma2 * var_factor).sqrt();
    Oracle {
        beta: coef[1],
        se,
        t: coef[1] / se,
        df: df as u64,
    }
}

/// Random dataset where every period level holds at least one control.
pub fn dataset(rng: &mut RngStream) -> AnalysisDataset {
    let n_periods = 1 + rng.below(4) as u32;
    let n = (6 + rng.below(35)).max(n_periods as usize + 6);
    let effect = 3.0 * rng.standard_normal();
    let mut rows: Vec<AnalysisRow> = (0..n)
        .map(|i| {
            let period_id = if (i as u32) < n_periods { i as u32 } else { rng.below(n_periods as usize) as u32 };
            let treated = if (i as u32) < n_periods { false } else if i == n - 1 { true } else { rng.bernoulli(0.5) };
            let baseline = 32.0 + 4.0 * rng.standard_normal();
            let week6 = 10.0 + 0.3 * baseline + 1.5 * period_id as f64
                + if treated { effect } else { 0.0 }
                + 8.0 * rng.standard_normal();
            AnalysisRow { week6, baseline, treated, period_id }
        })
        .collect();
    rng.shuffle(&mut rows);
    AnalysisDataset { arm_id: 1, kind: AnalysisKind::Final, rows }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
