//! Weekly replicate loop of the platform, and the comparator mode that runs
//! a series of independent two-arm trials.
//!
//! Each week `w` of a platform replicate runs, in order:
//!
//! 1. at a month start (`w = 1 mod 4`, `w <= horizon`) arm entry attempts;
//! 2. period bookkeeping against the previous week's active set;
//! 3. recruitment of the week's arrivals, randomized one at a time over the
//!    arms that still need patients, with outcomes drawn immediately;
//! 4. interim analyses for arms that crossed the interim count this week;
//! 5. final analyses for arms that reached their target this week.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::allocation::{control_ratio, AllocationPolicy, BlockState, GeneratedBlock, Randomizer};
use crate::analysis::{
    decide_final, decide_interim, fit_ancova, AnalysisDataset, AnalysisKind, AnalysisRecord,
    AnalysisRow, FinalDecision, InterimDecision,
};
use crate::error::{ConfigError, Error, Result};
use crate::model::{
    draw_effect, AllocationKind, Arm, ArmId, ArmStatus, Assignment, ComparisonResult, Decision,
    EffectSize, Mode, PatientRecord, PeriodTracker, Randomization, ScenarioConfig, Week,
    WEEKS_PER_MONTH,
};
use crate::outcome::{generate_outcome, OutcomeCalibration, TimeTrend};
use crate::stats::RngStream;

/// Hard stop for runaway loops; no valid configuration gets close.
const MAX_WEEKS: Week = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmTrajectory {
    pub arm_id: ArmId,
    pub entry_week: Week,
    pub exit_week: Week,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: u64,
    pub comparisons: Vec<ComparisonResult>,
    pub total_platform_n: u32,
    pub total_control_n: u32,
    pub n_arms_tested: u32,
    pub platform_duration_weeks: u32,
    pub periods: u32,
    pub trajectories: Vec<ArmTrajectory>,
}

impl ReplicateResult {
    pub fn arms_per_1000(&self) -> f64 {
        if self.total_platform_n == 0 {
            0.0
        } else {
            1000.0 * self.n_arms_tested as f64 / self.total_platform_n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineEvent {
    Entered {
        week: Week,
        arm_id: ArmId,
        effect: EffectSize,
        projected_accrual: f64,
    },
    EntryBlocked {
        week: Week,
        projected_accrual: f64,
    },
    PeriodStarted {
        week: Week,
        period_id: u32,
        active: Vec<ArmId>,
    },
    Analysis {
        week: Week,
        record: AnalysisRecord,
    },
    Exited {
        week: Week,
        arm_id: ArmId,
        decision: Decision,
    },
}

impl fmt::Display for EngineEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineEvent::Entered {
                week,
                arm_id,
                effect,
                projected_accrual,
            } => write!(
                f,
                "week {week}: arm {arm_id} entered (d = {effect}, projected accrual {projected_accrual:.2})"
            ),
            EngineEvent::EntryBlocked {
                week,
                projected_accrual,
            } => write!(
                f,
                "week {week}: entry blocked (projected accrual {projected_accrual:.2})"
            ),
            EngineEvent::PeriodStarted {
                week,
                period_id,
                active,
            } => write!(f, "week {week}: period {period_id} starts, active {active:?}"),
            EngineEvent::Analysis { week, record } => write!(
                f,
                "week {week}: {:?} analysis arm {} n_t={} n_c={} beta={:.4} se={:.4} p={:.6}",
                record.kind, record.arm_id, record.n_t, record.n_c, record.beta, record.se, record.p
            ),
            EngineEvent::Exited {
                week,
                arm_id,
                decision,
            } => write!(f, "week {week}: arm {arm_id} exits ({})", decision.as_str()),
        }
    }
}

/// Full per-replicate state, kept for audits and event logs.
#[derive(Debug, Clone)]
pub struct ReplicateTrace {
    pub records: Vec<PatientRecord>,
    pub arms: Vec<Arm>,
    pub periods: PeriodTracker,
    pub events: Vec<EngineEvent>,
    /// Every analysis dataset, with the week it was run.
    pub analyses: Vec<(Week, AnalysisDataset)>,
    /// Blocks handed out by block randomization, in order.
    pub blocks: Vec<GeneratedBlock>,
}

/// Validates the parts of a scenario the engine relies on.
pub fn check_config(cfg: &ScenarioConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.allocation == AllocationKind::SqrtKCapped && cfg.control_cap >= 1.0 {
        return Err(ConfigError::invalid("control_cap", "must be below 1").into());
    }
    Ok(())
}

pub fn policy_of(cfg: &ScenarioConfig) -> Result<AllocationPolicy> {
    AllocationPolicy::new(cfg.allocation, cfg.control_cap)
}

fn trend_of(cfg: &ScenarioConfig) -> TimeTrend {
    TimeTrend {
        step_fraction: cfg.time_trend.unwrap_or(0.0),
        scale: cfg.trend_scale,
    }
}

/// Controls randomized while `arm` was enrolling, up to `through_week`.
pub fn concurrent_controls<'a>(
    records: &'a [PatientRecord],
    arm: &Arm,
    through_week: Week,
) -> impl Iterator<Item = &'a PatientRecord> + 'a {
    let last = arm.exit_week.map_or(through_week, |e| e.min(through_week));
    let first = arm.entry_week;
    records
        .iter()
        .filter(move |r| r.assignment == Assignment::Control && r.week >= first && r.week <= last)
}

fn analysis_dataset(
    records: &[PatientRecord],
    arm: &Arm,
    through_week: Week,
    kind: AnalysisKind,
) -> AnalysisDataset {
    let rows = records
        .iter()
        .filter(|r| {
            r.assignment == Assignment::Arm(arm.arm_id)
                || (r.assignment == Assignment::Control
                    && r.week >= arm.entry_week
                    && r.week <= through_week)
        })
        .map(|r| AnalysisRow {
            week6: r.week6,
            baseline: r.baseline,
            treated: r.assignment != Assignment::Control,
            period_id: r.period_id,
        })
        .collect();
    AnalysisDataset {
        arm_id: arm.arm_id,
        kind,
        rows,
    }
}

/// Expected treatment accrual of a new arm by the entry horizon, from the
/// mean weekly arrivals and the per-arm share with `k_after` active arms.
pub fn projected_accrual(
    cfg: &ScenarioConfig,
    policy: &AllocationPolicy,
    week: Week,
    k_after: usize,
) -> Result<f64> {
    let horizon = cfg.entry_horizon_week();
    if week > horizon {
        return Ok(0.0);
    }
    let remaining = (horizon - week + 1) as f64;
    let r = control_ratio(policy, k_after)?;
    Ok(remaining * cfg.recruitment.mean() * (1.0 - r) / k_after as f64)
}

fn new_block_state(keep_history: bool) -> BlockState {
    if keep_history {
        BlockState::with_history()
    } else {
        BlockState::new()
    }
}

struct Platform<'a> {
    cfg: &'a ScenarioConfig,
    cal: OutcomeCalibration,
    trend: TimeTrend,
    policy: AllocationPolicy,
    arms: Vec<Arm>,
    records: Vec<PatientRecord>,
    periods: PeriodTracker,
    randomizer: Randomizer,
    comparisons: Vec<ComparisonResult>,
    next_arm_id: ArmId,
    keep_trace: bool,
    events: Vec<EngineEvent>,
    analyses: Vec<(Week, AnalysisDataset)>,
    interim_trigger: Option<u32>,
}

impl<'a> Platform<'a> {
    fn new(cfg: &'a ScenarioConfig, keep_trace: bool) -> Result<Self> {
        let randomizer = match cfg.randomization {
            Randomization::Simple => Randomizer::Simple,
            Randomization::ModifiedBlock => Randomizer::Block(new_block_state(keep_trace)),
        };
        Ok(Platform {
            cfg,
            cal: OutcomeCalibration::new(cfg.sd_calibration),
            trend: trend_of(cfg),
            policy: policy_of(cfg)?,
            arms: Vec::new(),
            records: Vec::new(),
            periods: PeriodTracker::new(1, BTreeSet::new()),
            randomizer,
            comparisons: Vec::new(),
            next_arm_id: 1,
            keep_trace,
            events: Vec::new(),
            analyses: Vec::new(),
            interim_trigger: cfg.interim_trigger(),
        })
    }

    fn log(&mut self, event: impl FnOnce() -> EngineEvent) {
        if self.keep_trace {
            self.events.push(event());
        }
    }

    fn enrolling_ids(&self) -> Vec<ArmId> {
        self.arms
            .iter()
            .filter(|a| a.is_enrolling())
            .map(|a| a.arm_id)
            .collect()
    }

    /// Arms that can still take a patient this week.
    fn open_ids(&self) -> Vec<ArmId> {
        self.arms
            .iter()
            .filter(|a| a.is_enrolling() && a.enrolled < a.target_n)
            .map(|a| a.arm_id)
            .collect()
    }

    fn arm_index(&self, id: ArmId) -> usize {
        // ids are dense and start at 1
        (id - 1) as usize
    }

    fn add_arm(&mut self, rng: &mut RngStream, week: Week, projected: f64) -> ArmId {
        let effect = draw_effect(rng, &self.cfg.effect_distribution);
        let id = self.next_arm_id;
        self.next_arm_id += 1;
        let mut arm = Arm::new(id, week, effect, self.cfg.target_n_per_arm);
        arm.entry_period = self.periods.current_id();
        self.arms.push(arm);
        self.log(|| EngineEvent::Entered {
            week,
            arm_id: id,
            effect,
            projected_accrual: projected,
        });
        id
    }

    /// One entry attempt at a month start.
    fn try_enter_arm(&mut self, rng: &mut RngStream, week: Week) -> Result<Option<ArmId>> {
        if week > self.cfg.entry_horizon_week() || !(week - 1).is_multiple_of(WEEKS_PER_MONTH) {
            return Ok(None);
        }
        let active = self.enrolling_ids().len();
        if active >= self.cfg.max_concurrent_arms as usize {
            return Ok(None);
        }
        if !rng.bernoulli(self.cfg.entry_probability_per_month) {
            return Ok(None);
        }
        let projected = projected_accrual(self.cfg, &self.policy, week, active + 1)?;
        let needed = self.cfg.min_expected_accrual_fraction * self.cfg.target_n_per_arm as f64;
        if projected < needed {
            self.log(|| EngineEvent::EntryBlocked {
                week,
                projected_accrual: projected,
            });
            return Ok(None);
        }
        Ok(Some(self.add_arm(rng, week, projected)))
    }

    fn month_start_entries(&mut self, rng: &mut RngStream, week: Week) -> Result<()> {
        let free = (self.cfg.max_concurrent_arms as usize).saturating_sub(self.enrolling_ids().len());
        // replacement mode refills every free slot; otherwise one attempt per month
        let attempts = if self.cfg.entry_probability_per_month >= 1.0 {
            free
        } else {
            free.min(1)
        };
        for _ in 0..attempts {
            if self.try_enter_arm(rng, week)?.is_none() {
                break;
            }
        }
        Ok(())
    }

    fn observe_period(&mut self, week: Week) -> Result<()> {
        let active: BTreeSet<ArmId> = self.enrolling_ids().into_iter().collect();
        if self.periods.observe(week, &active)? {
            let period_id = self.periods.current_id();
            self.log(|| EngineEvent::PeriodStarted {
                week,
                period_id,
                active: active.iter().copied().collect(),
            });
        }
        Ok(())
    }

    fn recruit(&mut self, rng: &mut RngStream, week: Week, arrivals: u32) -> Result<()> {
        let period_id = self.periods.current_id();
        let mut open = self.open_ids();
        for _ in 0..arrivals {
            if open.is_empty() {
                break;
            }
            let assignment = self.randomizer.next(rng, &open, &self.policy)?;
            let effect = match assignment {
                Assignment::Control => None,
                Assignment::Arm(id) => Some(self.arms[self.arm_index(id)].true_effect),
            };
            let (baseline, week6) = generate_outcome(rng, effect, period_id, &self.cal, &self.trend)?;
            self.records.push(PatientRecord {
                patient_id: self.records.len() as u32,
                week,
                period_id,
                assignment,
                baseline,
                week6,
            });
            if let Assignment::Arm(id) = assignment {
                let idx = self.arm_index(id);
                let arm = &mut self.arms[idx];
                arm.enrolled += 1;
                if arm.enrolled >= arm.target_n {
                    open.retain(|&a| a != id);
                }
            }
        }
        Ok(())
    }

    fn run_analysis(&mut self, idx: usize, week: Week, kind: AnalysisKind) -> Result<(f64, u32)> {
        let data = analysis_dataset(&self.records, &self.arms[idx], week, kind);
        let fit = fit_ancova(&data, self.cfg.analysis_covariates)?;
        let n_c = data.n_control() as u32;
        if self.keep_trace {
            let record = AnalysisRecord::new(&data, &fit);
            self.events.push(EngineEvent::Analysis { week, record });
            self.analyses.push((week, data));
        }
        Ok((fit.p_one_sided, n_c))
    }

    fn finish_arm(
        &mut self,
        idx: usize,
        week: Week,
        decision: Decision,
        p_interim: Option<(f64, u32)>,
        p_final: Option<(f64, u32)>,
    ) -> Result<()> {
        let status = match decision {
            Decision::Success => ArmStatus::CompletedSuccess,
            Decision::Failure => ArmStatus::CompletedFailure,
            Decision::StoppedFutility => ArmStatus::StoppedFutility,
        };
        let arm = &mut self.arms[idx];
        arm.finish(status, week)?;
        self.comparisons.push(ComparisonResult {
            arm_id: arm.arm_id,
            true_effect: arm.true_effect,
            decision,
            p_interim: p_interim.map(|x| x.0),
            p_final: p_final.map(|x| x.0),
            n_treatment: arm.enrolled,
            n_concurrent_controls_interim: p_interim.map(|x| x.1),
            n_concurrent_controls_final: p_final.map(|x| x.1),
            entry_week: arm.entry_week,
            exit_week: week,
            duration_weeks: week - arm.entry_week + 1,
        });
        let arm_id = arm.arm_id;
        self.log(|| EngineEvent::Exited {
            week,
            arm_id,
            decision,
        });
        Ok(())
    }

    /// Interim and final analyses due at the end of `week`.
    #[allow(clippy::needless_range_loop)] // self is borrowed mutably inside
    fn analyses_due(&mut self, week: Week, interim: &mut [Option<(f64, u32)>]) -> Result<()> {
        for idx in 0..self.arms.len() {
            if !self.arms[idx].is_enrolling() {
                continue;
            }
            if let (Some(trigger), Some(boundary)) = (self.interim_trigger, self.cfg.futility_boundary) {
                let arm = &self.arms[idx];
                if !arm.interim_done && arm.enrolled >= trigger {
                    self.arms[idx].interim_done = true;
                    let result = self.run_analysis(idx, week, AnalysisKind::Interim)?;
                    interim[idx] = Some(result);
                    if decide_interim(result.0, boundary) == InterimDecision::StopFutility {
                        self.finish_arm(idx, week, Decision::StoppedFutility, Some(result), None)?;
                        continue;
                    }
                }
            }
            let arm = &self.arms[idx];
            if arm.enrolled >= arm.target_n {
                let result = self.run_analysis(idx, week, AnalysisKind::Final)?;
                let decision = match decide_final(result.0, self.cfg.alpha) {
                    FinalDecision::Success => Decision::Success,
                    FinalDecision::Failure => Decision::Failure,
                };
                self.finish_arm(idx, week, decision, interim[idx], Some(result))?;
            }
        }
        Ok(())
    }

    fn into_result(self, replicate: u64) -> (ReplicateResult, ReplicateTrace) {
        let total_platform_n = self.records.len() as u32;
        let total_control_n = self
            .records
            .iter()
            .filter(|r| r.assignment == Assignment::Control)
            .count() as u32;
        let platform_duration_weeks = self.arms.iter().filter_map(|a| a.exit_week).max().unwrap_or(0);
        let trajectories = self
            .arms
            .iter()
            .map(|a| ArmTrajectory {
                arm_id: a.arm_id,
                entry_week: a.entry_week,
                exit_week: a.exit_week.unwrap_or(0),
            })
            .collect();
        let result = ReplicateResult {
            replicate,
            n_arms_tested: self.comparisons.len() as u32,
            comparisons: self.comparisons,
            total_platform_n,
            total_control_n,
            platform_duration_weeks,
            periods: self.periods.count() as u32,
            trajectories,
        };
        let blocks = match &self.randomizer {
            Randomizer::Block(state) => state.history().to_vec(),
            Randomizer::Simple => Vec::new(),
        };
        let trace = ReplicateTrace {
            blocks,
            records: self.records,
            arms: self.arms,
            periods: self.periods,
            events: self.events,
            analyses: self.analyses,
        };
        (result, trace)
    }
}

fn simulate_platform<'a>(
    cfg: &'a ScenarioConfig,
    rng: &mut RngStream,
    keep_trace: bool,
) -> Result<Platform<'a>> {
    let mut p = Platform::new(cfg, keep_trace)?;
    let horizon = cfg.entry_horizon_week();
    for _ in 0..cfg.initial_arms {
        let projected = projected_accrual(cfg, &p.policy, 1, p.arms.len() + 1)?;
        p.add_arm(rng, 1, projected);
    }
    p.periods = PeriodTracker::new(1, p.enrolling_ids().into_iter().collect());
    let mut interim: Vec<Option<(f64, u32)>> = Vec::new();

    for week in 1..=MAX_WEEKS {
        if week > 1 {
            p.month_start_entries(rng, week)?;
            p.observe_period(week)?;
        }
        interim.resize(p.arms.len(), None);
        if !p.open_ids().is_empty() {
            let arrivals = cfg.recruitment.draw(rng);
            p.recruit(rng, week, arrivals)?;
            p.analyses_due(week, &mut interim)?;
        }
        if week >= horizon && p.enrolling_ids().is_empty() {
            return Ok(p);
        }
    }
    Err(Error::Logic(format!("platform did not finish within {MAX_WEEKS} weeks")))
}

fn simulate_two_arm_series<'a>(
    cfg: &'a ScenarioConfig,
    rng: &mut RngStream,
    keep_trace: bool,
) -> Result<Platform<'a>> {
    let mut p = Platform::new(cfg, keep_trace)?;
    // every trial is a 1:1 block-randomized comparison
    p.policy = AllocationPolicy::balanced();
    p.randomizer = Randomizer::Block(new_block_state(keep_trace));
    let horizon = cfg.entry_horizon_week();
    let n = cfg.target_n_per_arm;
    let mut current: Option<usize> = None;
    let mut controls_in_trial = 0u32;
    let mut interim: Option<(f64, u32)> = None;

    let projected = projected_accrual(cfg, &p.policy, 1, 1)?;
    p.add_arm(rng, 1, projected);
    current = current.or(Some(0));
    p.periods = PeriodTracker::new(1, p.enrolling_ids().into_iter().collect());

    for week in 1..=MAX_WEEKS {
        if week > 1 {
            if current.is_none() && p.try_enter_arm(rng, week)?.is_some() {
                current = Some(p.arms.len() - 1);
                controls_in_trial = 0;
                interim = None;
            }
            p.observe_period(week)?;
        }
        if let Some(idx) = current {
            let arm_id = p.arms[idx].arm_id;
            let period_id = p.periods.current_id();
            let arrivals = cfg.recruitment.draw(rng);
            for _ in 0..arrivals {
                if p.arms[idx].enrolled >= n && controls_in_trial >= n {
                    break;
                }
                let assignment = p.randomizer.next(rng, &[arm_id], &p.policy)?;
                let effect = match assignment {
                    Assignment::Control => None,
                    Assignment::Arm(_) => Some(p.arms[idx].true_effect),
                };
                let (baseline, week6) = generate_outcome(rng, effect, period_id, &p.cal, &p.trend)?;
                p.records.push(PatientRecord {
                    patient_id: p.records.len() as u32,
                    week,
                    period_id,
                    assignment,
                    baseline,
                    week6,
                });
                match assignment {
                    Assignment::Control => controls_in_trial += 1,
                    Assignment::Arm(_) => p.arms[idx].enrolled += 1,
                }
            }

            if let (Some(trigger), Some(boundary)) = (p.interim_trigger, cfg.futility_boundary) {
                if !p.arms[idx].interim_done && p.arms[idx].enrolled >= trigger {
                    p.arms[idx].interim_done = true;
                    let result = p.run_analysis(idx, week, AnalysisKind::Interim)?;
                    interim = Some(result);
                    if decide_interim(result.0, boundary) == InterimDecision::StopFutility {
                        p.finish_arm(idx, week, Decision::StoppedFutility, Some(result), None)?;
                        current = None;
                    }
                }
            }
            if current.is_some() && p.arms[idx].enrolled >= n && controls_in_trial >= n {
                let result = p.run_analysis(idx, week, AnalysisKind::Final)?;
                let decision = match decide_final(result.0, cfg.alpha) {
                    FinalDecision::Success => Decision::Success,
                    FinalDecision::Failure => Decision::Failure,
                };
                p.finish_arm(idx, week, decision, interim, Some(result))?;
                current = None;
            }
        }
        if week >= horizon && current.is_none() {
            return Ok(p);
        }
    }
    Err(Error::Logic(format!("trial series did not finish within {MAX_WEEKS} weeks")))
}

/// Runs one replicate of the configured mode.
pub fn run_replicate(config: &ScenarioConfig, rng: &mut RngStream) -> Result<ReplicateResult> {
    let replicate = rng.stream_id();
    let platform = match config.mode {
        Mode::Platform => simulate_platform(config, rng, false)?,
        Mode::TwoArmSeries => simulate_two_arm_series(config, rng, false)?,
    };
    Ok(platform.into_result(replicate).0)
}

/// Same as [`run_replicate`] but keeps every patient record, period, event
/// and analysis dataset.
pub fn run_replicate_traced(
    config: &ScenarioConfig,
    rng: &mut RngStream,
) -> Result<(ReplicateResult, ReplicateTrace)> {
    let replicate = rng.stream_id();
    let platform = match config.mode {
        Mode::Platform => simulate_platform(config, rng, true)?,
        Mode::TwoArmSeries => simulate_two_arm_series(config, rng, true)?,
    };
    Ok(platform.into_result(replicate))
}

/// Sequential two-arm comparator.
pub fn run_two_arm_series(config: &ScenarioConfig, rng: &mut RngStream) -> Result<ReplicateResult> {
    let replicate = rng.stream_id();
    Ok(simulate_two_arm_series(config, rng, false)?.into_result(replicate).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EffectDistribution;
    use crate::stats::derive_stream;

    #[test]
    fn entry_gate_projection() {
        let cfg = ScenarioConfig::default();
        let policy = policy_of(&cfg).unwrap();
        // last entry week: one week of accrual left with six arms
        let p = projected_accrual(&cfg, &policy, 240, 6).unwrap();
        assert!((p - 7.0 * 0.65 / 6.0).abs() < 1e-12);
        assert!(p < 16.0);
        assert_eq!(projected_accrual(&cfg, &policy, 241, 6).unwrap(), 0.0);
        let p237 = projected_accrual(&cfg, &policy, 237, 6).unwrap();
        assert!(p237 < 0.2 * 80.0);
    }

    #[test]
    fn no_entry_after_horizon() {
        let cfg = ScenarioConfig {
            initial_arms: 1,
            ..ScenarioConfig::default()
        };
        let mut p = Platform::new(&cfg, false).unwrap();
        let mut rng = derive_stream(1, 0);
        assert_eq!(p.try_enter_arm(&mut rng, 241).unwrap(), None);
        assert_eq!(p.try_enter_arm(&mut rng, 13).unwrap(), Some(1));
    }

    #[test]
    fn single_arm_k_allocation_completes_in_week_23() {
        let cfg = ScenarioConfig {
            allocation: AllocationKind::KAlloc,
            initial_arms: 1,
            max_concurrent_arms: 1,
            entry_horizon_months: 1,
            recruitment: crate::model::RecruitmentLaw {
                values: vec![7],
                probabilities: vec![1.0],
            },
            effect_distribution: EffectDistribution::new([1.0, 0.0, 0.0, 0.0]).unwrap(),
            ..ScenarioConfig::default()
        };
        for seed in 0..20 {
            let mut rng = derive_stream(seed, 0);
            let (res, trace) = run_replicate_traced(&cfg, &mut rng).unwrap();
            let first = &res.comparisons[0];
            assert_eq!(first.entry_week, 1);
            // 1:1 blocks over 7 per week: 80 treated after 159 or 160 patients
            assert!(first.exit_week == 23, "exit {}", first.exit_week);
            let n_t = trace
                .records
                .iter()
                .filter(|r| r.assignment == Assignment::Arm(1))
                .count();
            assert_eq!(n_t, 80);
        }
    }
}
