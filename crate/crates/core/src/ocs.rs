//! Operating characteristics aggregated over replicates.

use serde::{Deserialize, Serialize};

use crate::engine::ReplicateResult;
use crate::error::{Error, Result};
use crate::model::{Decision, EffectSize};
use crate::stats::{summarize, SummaryStats};

/// Binomial standard error of a rate estimated from `n` comparisons.
pub fn mc_error(rate: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (rate * (1.0 - rate) / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectOc {
    pub d: f64,
    pub n_comparisons: u64,
    pub rejections: u64,
    pub success_rate: f64,
    pub failure_rate: f64,
    pub futility_rate: f64,
    pub success_mc_error: f64,
    pub failure_mc_error: f64,
    pub futility_mc_error: f64,
    /// Arms with this effect per replicate, averaged.
    pub mean_arms_per_replicate: f64,
}

impl EffectOc {
    fn from_counts(effect: EffectSize, success: u64, failure: u64, futility: u64, reps: u64) -> Self {
        let n = success + failure + futility;
        let rate = |c: u64| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        let (s, f, fut) = (rate(success), rate(failure), rate(futility));
        EffectOc {
            d: effect.value(),
            n_comparisons: n,
            rejections: success,
            success_rate: s,
            failure_rate: f,
            futility_rate: fut,
            success_mc_error: mc_error(s, n),
            failure_mc_error: mc_error(f, n),
            futility_mc_error: mc_error(fut, n),
            mean_arms_per_replicate: n as f64 / reps as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub replicates: u64,
    pub per_effect: Vec<EffectOc>,
    pub total_rejections: u64,
    pub platform_n: SummaryStats,
    pub control_n: SummaryStats,
    pub arm_n: SummaryStats,
    pub controls_interim: Option<SummaryStats>,
    pub controls_final: Option<SummaryStats>,
    pub n_arms: SummaryStats,
    pub arms_per_1000: SummaryStats,
    pub platform_duration_weeks: SummaryStats,
    pub arm_duration_weeks: SummaryStats,
}

impl OperatingCharacteristics {
    pub fn effect(&self, effect: EffectSize) -> &EffectOc {
        &self.per_effect[effect.index()]
    }

    /// Rejection rates in grid order (d = 0, 0.2, 0.35, 0.5).
    pub fn rejection_rates(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (o, e) in out.iter_mut().zip(&self.per_effect) {
            *o = e.success_rate;
        }
        out
    }
}

fn sorted_summary(mut values: Vec<f64>) -> Result<SummaryStats> {
    // sort first so the result never depends on replicate order
    values.sort_by(f64::total_cmp);
    summarize(&values)
}

fn optional_summary(values: Vec<f64>) -> Result<Option<SummaryStats>> {
    if values.is_empty() {
        Ok(None)
    } else {
        sorted_summary(values).map(Some)
    }
}

pub fn aggregate(results: &[ReplicateResult]) -> Result<OperatingCharacteristics> {
    if results.is_empty() {
        return Err(Error::Parameter("no replicate results to aggregate".into()));
    }
    let mut counts = [[0u64; 3]; 4];
    let mut arm_n = Vec::new();
    let mut controls_interim = Vec::new();
    let mut controls_final = Vec::new();
    let mut arm_duration = Vec::new();
    for r in results {
        for c in &r.comparisons {
            let slot = match c.decision {
                Decision::Success => 0,
                Decision::Failure => 1,
                Decision::StoppedFutility => 2,
            };
            counts[c.true_effect.index()][slot] += 1;
            arm_n.push(c.n_treatment as f64);
            controls_interim.extend(c.n_concurrent_controls_interim.map(f64::from));
            controls_final.extend(c.n_concurrent_controls_final.map(f64::from));
            arm_duration.push(c.duration_weeks as f64);
        }
    }
    let reps = results.len() as u64;
    let per_effect: Vec<EffectOc> = EffectSize::ALL
        .iter()
        .map(|&e| {
            let [s, f, fut] = counts[e.index()];
            EffectOc::from_counts(e, s, f, fut, reps)
        })
        .collect();
    let per_rep = |f: fn(&ReplicateResult) -> f64| results.iter().map(f).collect::<Vec<_>>();

    Ok(OperatingCharacteristics {
        replicates: reps,
        total_rejections: per_effect.iter().map(|e| e.rejections).sum(),
        per_effect,
        platform_n: sorted_summary(per_rep(|r| r.total_platform_n as f64))?,
        control_n: sorted_summary(per_rep(|r| r.total_control_n as f64))?,
        arm_n: sorted_summary(arm_n)?,
        controls_interim: optional_summary(controls_interim)?,
        controls_final: optional_summary(controls_final)?,
        n_arms: sorted_summary(per_rep(|r| r.n_arms_tested as f64))?,
        arms_per_1000: sorted_summary(per_rep(|r| r.arms_per_1000()))?,
        platform_duration_weeks: sorted_summary(per_rep(|r| r.platform_duration_weeks as f64))?,
        arm_duration_weeks: sorted_summary(arm_duration)?,
    })
}
