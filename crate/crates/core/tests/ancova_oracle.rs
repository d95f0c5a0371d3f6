//! ANCOVA fits checked against a least-squares solve through the SVD.

mod common;

use common::{close, dataset, oracle};
use platform_sim::analysis::{fit_ancova, AnalysisDataset, AnalysisKind, AnalysisRow};
use platform_sim::model::Covariates;
use platform_sim::stats::{derive_stream, student_t_cdf};

#[test]
fn matches_svd_least_squares_on_random_datasets() {
    let mut rng = derive_stream(20_240_601, 0);
    let mut checked = 0;
    for _ in 0..1000 {
        let data = dataset(&mut rng);
        for cov in [Covariates::BaselineOnly, Covariates::BaselinePlusPeriod] {
            let fit = fit_ancova(&data, cov).unwrap();
            let o = oracle(&data, cov, &[]);
            assert!(fit.dropped_period_levels.is_empty());
            assert_eq!(fit.df, o.df);
            assert!(close(fit.beta_hat, o.beta, 1e-8), "beta {} vs {}", fit.beta_hat, o.beta);
            assert!(close(fit.se_beta, o.se, 1e-8), "se {} vs {}", fit.se_beta, o.se);
            assert!(close(fit.t_stat, o.t, 1e-8), "t {} vs {}", fit.t_stat, o.t);
            let p = student_t_cdf(o.t, o.df).unwrap();
            assert!((fit.p_one_sided - p).abs() < 1e-8);
            checked += 1;
        }
    }
    assert_eq!(checked, 2000);
}

#[test]
fn change_score_gives_the_same_treatment_test() {
    let mut rng = derive_stream(77, 3);
    for _ in 0..200 {
        let data = dataset(&mut rng);
        let mut change = data.clone();
        for r in &mut change.rows {
            r.week6 -= r.baseline;
        }
        for cov in [Covariates::BaselineOnly, Covariates::BaselinePlusPeriod] {
            let a = fit_ancova(&data, cov).unwrap();
            let b = fit_ancova(&change, cov).unwrap();
            assert!(close(a.beta_hat, b.beta_hat, 1e-10));
            assert!(close(a.se_beta, b.se_beta, 1e-10));
            assert!(close(a.t_stat, b.t_stat, 1e-10));
            assert_eq!(a.df, b.df);
        }
    }
}

#[test]
fn single_period_reduces_to_baseline_only() {
    let mut rng = derive_stream(5, 9);
    for _ in 0..100 {
        let mut data = dataset(&mut rng);
        for r in &mut data.rows {
            r.period_id = 4;
        }
        let a = fit_ancova(&data, Covariates::BaselineOnly).unwrap();
        let b = fit_ancova(&data, Covariates::BaselinePlusPeriod).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn period_aliased_with_treatment_is_dropped() {
    // period 1 holds only treated patients and period 0 only controls, so the
    // period indicator duplicates the treatment column
    let mut rng = derive_stream(11, 0);
    let rows: Vec<AnalysisRow> = (0..30)
        .map(|i| {
            let treated = i % 2 == 0;
            let baseline = 30.0 + rng.standard_normal();
            AnalysisRow {
                week6: 20.0 + 0.2 * baseline - 2.0 * f64::from(u8::from(treated)) + rng.standard_normal(),
                baseline,
                treated,
                period_id: u32::from(treated),
            }
        })
        .collect();
    let data = AnalysisDataset { arm_id: 2, kind: AnalysisKind::Final, rows };
    let fit = fit_ancova(&data, Covariates::BaselinePlusPeriod).unwrap();
    assert_eq!(fit.dropped_period_levels.iter().copied().collect::<Vec<_>>(), [1]);
    let o = oracle(&data, Covariates::BaselinePlusPeriod, &[1]);
    assert_eq!(fit.df, o.df);
    assert!(close(fit.beta_hat, o.beta, 1e-8));
    assert!(close(fit.se_beta, o.se, 1e-8));
}
