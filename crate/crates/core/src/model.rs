//! Domain types shared by the engine: effect sizes, arms, patients, time
//! periods, decisions and the scenario configuration.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::stats::RngStream;

pub type ArmId = u32;
pub type Week = u32;

/// One month of platform time.
pub const WEEKS_PER_MONTH: Week = 4;

/// Standardized effect size of a treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EffectSize {
    Null,
    Small,
    Relevant,
    Large,
}

impl EffectSize {
    pub const ALL: [EffectSize; 4] = [
        EffectSize::Null,
        EffectSize::Small,
        EffectSize::Relevant,
        EffectSize::Large,
    ];

    pub fn value(self) -> f64 {
        match self {
            EffectSize::Null => 0.0,
            EffectSize::Small => 0.2,
            EffectSize::Relevant => 0.35,
            EffectSize::Large => 0.5,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_value(d: f64) -> Result<Self> {
        EffectSize::ALL
            .into_iter()
            .find(|e| (e.value() - d).abs() < 1e-9)
            .ok_or_else(|| Error::Parameter(format!("effect size {d} is not in the grid")))
    }

    /// Short label used in CSV headers, e.g. `d0.35`.
    pub fn label(self) -> &'static str {
        match self {
            EffectSize::Null => "d0",
            EffectSize::Small => "d0.2",
            EffectSize::Relevant => "d0.35",
            EffectSize::Large => "d0.5",
        }
    }
}

impl fmt::Display for EffectSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for EffectSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for EffectSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        EffectSize::from_value(v).map_err(serde::de::Error::custom)
    }
}

/// Prior probabilities of the four effect sizes for arms entering the
/// platform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectDistribution {
    probs: [f64; 4],
}

impl EffectDistribution {
    pub const EQUAL: EffectDistribution = EffectDistribution {
        probs: [0.25, 0.25, 0.25, 0.25],
    };
    pub const PESSIMISTIC: EffectDistribution = EffectDistribution {
        probs: [0.5, 0.3, 0.1, 0.1],
    };

    pub fn new(probs: [f64; 4]) -> Result<Self, ConfigError> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ConfigError::invalid(
                "effect_distribution",
                "probabilities must lie in [0, 1]",
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ConfigError::invalid(
                "effect_distribution",
                format!("probabilities sum to {total}, expected 1"),
            ));
        }
        Ok(EffectDistribution { probs })
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.probs
    }

    pub fn name(&self) -> Option<&'static str> {
        if *self == Self::EQUAL {
            Some("equal")
        } else if *self == Self::PESSIMISTIC {
            Some("pessimistic")
        } else {
            None
        }
    }
}

impl Default for EffectDistribution {
    fn default() -> Self {
        Self::EQUAL
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EffectDistributionRepr {
    Named(String),
    Custom([f64; 4]),
}

impl Serialize for EffectDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.name() {
            Some(name) => EffectDistributionRepr::Named(name.to_string()).serialize(s),
            None => EffectDistributionRepr::Custom(self.probs).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for EffectDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match EffectDistributionRepr::deserialize(d)? {
            EffectDistributionRepr::Named(name) => match name.as_str() {
                "equal" => Ok(Self::EQUAL),
                "pessimistic" => Ok(Self::PESSIMISTIC),
                other => Err(serde::de::Error::custom(format!(
                    "unknown effect distribution `{other}` (expected `equal`, `pessimistic` or four probabilities)"
                ))),
            },
            EffectDistributionRepr::Custom(p) => {
                EffectDistribution::new(p).map_err(serde::de::Error::custom)
            }
        }
    }
}

/// Categorical draw of an entering arm's true effect.
pub fn draw_effect(rng: &mut RngStream, dist: &EffectDistribution) -> EffectSize {
    EffectSize::ALL[rng.categorical(&dist.probs)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Assignment {
    Control,
    Arm(ArmId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmStatus {
    Enrolling,
    StoppedFutility,
    CompletedSuccess,
    CompletedFailure,
}

impl ArmStatus {
    pub fn is_terminal(self) -> bool {
        self != ArmStatus::Enrolling
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub arm_id: ArmId,
    pub entry_week: Week,
    pub entry_period: u32,
    pub true_effect: EffectSize,
    pub target_n: u32,
    pub enrolled: u32,
    pub status: ArmStatus,
    pub exit_week: Option<Week>,
    pub interim_done: bool,
}

impl Arm {
    pub fn new(arm_id: ArmId, entry_week: Week, true_effect: EffectSize, target_n: u32) -> Self {
        Arm {
            arm_id,
            entry_week,
            entry_period: 0,
            true_effect,
            target_n,
            enrolled: 0,
            status: ArmStatus::Enrolling,
            exit_week: None,
            interim_done: false,
        }
    }

    pub fn is_enrolling(&self) -> bool {
        self.status == ArmStatus::Enrolling
    }

    /// Moves the arm to a terminal state. Terminal states are never left.
    pub fn finish(&mut self, status: ArmStatus, week: Week) -> Result<()> {
        if self.status.is_terminal() {
            return Err(Error::Logic(format!(
                "arm {} already finished as {:?}",
                self.arm_id, self.status
            )));
        }
        if !status.is_terminal() {
            return Err(Error::Logic("cannot finish an arm as enrolling".into()));
        }
        if week < self.entry_week {
            return Err(Error::Logic(format!(
                "arm {} cannot exit at week {week} before entry week {}",
                self.arm_id, self.entry_week
            )));
        }
        self.status = status;
        self.exit_week = Some(week);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientRecord {
    pub patient_id: u32,
    pub week: Week,
    pub period_id: u32,
    pub assignment: Assignment,
    pub baseline: f64,
    pub week6: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimePeriod {
    pub period_id: u32,
    pub start_week: Week,
    pub active_arm_ids: BTreeSet<ArmId>,
}

/// Bookkeeping of time periods: maximal runs of weeks with a fixed set of
/// enrolling arms.
#[derive(Debug, Clone)]
pub struct PeriodTracker {
    periods: Vec<TimePeriod>,
}

impl PeriodTracker {
    pub fn new(start_week: Week, active: BTreeSet<ArmId>) -> Self {
        PeriodTracker {
            periods: vec![TimePeriod {
                period_id: 0,
                start_week,
                active_arm_ids: active,
            }],
        }
    }

    pub fn current(&self) -> &TimePeriod {
        self.periods.last().expect("tracker always holds a period")
    }

    pub fn current_id(&self) -> u32 {
        self.current().period_id
    }

    pub fn periods(&self) -> &[TimePeriod] {
        &self.periods
    }

    pub fn count(&self) -> usize {
        self.periods.len()
    }

    /// Opens the next period at `week`. The active set must differ from the
    /// current one.
    pub fn advance_period(&mut self, week: Week, new_active: BTreeSet<ArmId>) -> Result<&TimePeriod> {
        let cur = self.current();
        if cur.active_arm_ids == new_active {
            return Err(Error::Logic(format!(
                "period advance at week {week} without a change of the active arm set"
            )));
        }
        if week <= cur.start_week {
            return Err(Error::Logic(format!(
                "period advance at week {week} does not follow period start {}",
                cur.start_week
            )));
        }
        let next = TimePeriod {
            period_id: cur.period_id + 1,
            start_week: week,
            active_arm_ids: new_active,
        };
        self.periods.push(next);
        Ok(self.current())
    }

    /// Advances only if the set changed. Returns whether a new period began.
    pub fn observe(&mut self, week: Week, active: &BTreeSet<ArmId>) -> Result<bool> {
        if &self.current().active_arm_ids == active {
            return Ok(false);
        }
        self.advance_period(week, active.clone())?;
        Ok(true)
    }

    /// Period covering `week`.
    pub fn period_at(&self, week: Week) -> Option<&TimePeriod> {
        self.periods.iter().rev().find(|p| p.start_week <= week)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Randomization {
    Simple,
    ModifiedBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationKind {
    Balanced,
    KAlloc,
    SqrtK,
    SqrtKCapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariates {
    BaselineOnly,
    BaselinePlusPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Platform,
    TwoArmSeries,
}

/// How the time-trend step width is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendScale {
    /// step = fraction x week-6 variance
    Variance,
    /// step = fraction x week-6 standard deviation
    Sd,
}

/// How the standard deviations of baseline and week-6 scores are obtained
/// from the published calibration (change SD and correlation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdCalibration {
    /// Baseline and week-6 share one SD chosen so that the change score has
    /// the calibrated SD.
    EqualSd,
    /// Week-6 SD equals the calibrated change SD; the baseline SD is solved
    /// so that the change score keeps that SD under the given correlation.
    Week6MatchesChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecruitmentLaw {
    pub values: Vec<u32>,
    pub probabilities: Vec<f64>,
}

impl Default for RecruitmentLaw {
    fn default() -> Self {
        RecruitmentLaw {
            values: vec![6, 7, 8],
            probabilities: vec![0.05, 0.90, 0.05],
        }
    }
}

impl RecruitmentLaw {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.values.is_empty() || self.values.len() != self.probabilities.len() {
            return Err(ConfigError::invalid(
                "recruitment",
                "values and probabilities must be non-empty and of equal length",
            ));
        }
        if self.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ConfigError::invalid("recruitment", "probabilities must lie in [0, 1]"));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ConfigError::invalid(
                "recruitment",
                format!("probabilities sum to {total}, expected 1"),
            ));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.probabilities)
            .map(|(&v, &p)| v as f64 * p)
            .sum()
    }

    pub fn draw(&self, rng: &mut RngStream) -> u32 {
        self.values[rng.categorical(&self.probabilities)]
    }
}

fn default_randomization() -> Randomization {
    Randomization::ModifiedBlock
}
fn default_allocation() -> AllocationKind {
    AllocationKind::SqrtKCapped
}
fn default_cap() -> f64 {
    0.35
}
fn default_covariates() -> Covariates {
    Covariates::BaselineOnly
}
fn default_target_n() -> u32 {
    80
}
fn default_six() -> u32 {
    6
}
fn default_entry_probability() -> f64 {
    1.0
}
fn default_horizon() -> u32 {
    60
}
fn default_accrual_fraction() -> f64 {
    0.2
}
fn default_alpha() -> f64 {
    0.05
}
fn default_replicates() -> u32 {
    10_000
}
fn default_seed() -> u64 {
    20_240_501
}
fn default_mode() -> Mode {
    Mode::Platform
}
fn default_trend_scale() -> TrendScale {
    TrendScale::Variance
}
fn default_sd_calibration() -> SdCalibration {
    SdCalibration::Week6MatchesChange
}

/// Complete description of one simulated design. Defaults reproduce the base
/// design: 6 arms at maximum capacity, n = 80 per arm, sqrt(k) allocation
/// with a 35% control floor, equal effect distribution, one-sided alpha 0.05
/// and 10,000 replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_randomization")]
    pub randomization: Randomization,
    #[serde(default = "default_allocation")]
    pub allocation: AllocationKind,
    /// Floor on the control fraction; used only by `sqrt_k_capped`.
    #[serde(default = "default_cap")]
    pub control_cap: f64,
    #[serde(default = "default_covariates")]
    pub analysis_covariates: Covariates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interim_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility_boundary: Option<f64>,
    #[serde(default = "default_target_n")]
    pub target_n_per_arm: u32,
    #[serde(default = "default_six")]
    pub initial_arms: u32,
    #[serde(default = "default_entry_probability")]
    pub entry_probability_per_month: f64,
    #[serde(default = "default_six")]
    pub max_concurrent_arms: u32,
    #[serde(default = "default_horizon")]
    pub entry_horizon_months: u32,
    #[serde(default = "default_accrual_fraction")]
    pub min_expected_accrual_fraction: f64,
    #[serde(default)]
    pub effect_distribution: EffectDistribution,
    /// Step added to the week-6 mean at every period boundary, as a
    /// fraction of the week-6 variance (or SD, see `trend_scale`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_trend: Option<f64>,
    #[serde(default = "default_trend_scale")]
    pub trend_scale: TrendScale,
    #[serde(default = "default_sd_calibration")]
    pub sd_calibration: SdCalibration,
    #[serde(default)]
    pub recruitment: RecruitmentLaw,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mode: default_mode(),
            randomization: default_randomization(),
            allocation: default_allocation(),
            control_cap: default_cap(),
            analysis_covariates: default_covariates(),
            interim_fraction: None,
            futility_boundary: None,
            target_n_per_arm: default_target_n(),
            initial_arms: default_six(),
            entry_probability_per_month: default_entry_probability(),
            max_concurrent_arms: default_six(),
            entry_horizon_months: default_horizon(),
            min_expected_accrual_fraction: default_accrual_fraction(),
            effect_distribution: EffectDistribution::EQUAL,
            time_trend: None,
            trend_scale: default_trend_scale(),
            sd_calibration: default_sd_calibration(),
            recruitment: RecruitmentLaw::default(),
            alpha: default_alpha(),
            replicates: default_replicates(),
            master_seed: default_seed(),
        }
    }
}

impl ScenarioConfig {
    /// Last week in which a new arm may enter.
    pub fn entry_horizon_week(&self) -> Week {
        self.entry_horizon_months * WEEKS_PER_MONTH
    }

    /// Treatment count that triggers the interim analysis, if any.
    pub fn interim_trigger(&self) -> Option<u32> {
        self.interim_fraction
            .map(|f| ((f * self.target_n_per_arm as f64) - 1e-9).ceil().max(1.0) as u32)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.control_cap) {
            return Err(ConfigError::invalid("control_cap", "must lie in [0, 1)"));
        }
        if let Some(f) = self.interim_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(ConfigError::invalid("interim_fraction", "must lie in (0, 1)"));
            }
        }
        if let Some(b) = self.futility_boundary {
            if self.interim_fraction.is_none() {
                return Err(ConfigError::invalid(
                    "futility_boundary",
                    "requires interim_fraction to be set",
                ));
            }
            if !(0.0..=1.0).contains(&b) {
                return Err(ConfigError::invalid("futility_boundary", "must lie in [0, 1]"));
            }
        }
        if self.master_seed > i64::MAX as u64 {
            // scenario files store integers as signed 64-bit
            return Err(ConfigError::invalid("master_seed", "must be below 2^63"));
        }
        if self.target_n_per_arm < 2 {
            return Err(ConfigError::invalid("target_n_per_arm", "must be at least 2"));
        }
        if self.initial_arms < 1 {
            return Err(ConfigError::invalid("initial_arms", "must be at least 1"));
        }
        if self.max_concurrent_arms < self.initial_arms {
            return Err(ConfigError::invalid(
                "max_concurrent_arms",
                "must be at least initial_arms",
            ));
        }
        if !(0.0..=1.0).contains(&self.entry_probability_per_month) {
            return Err(ConfigError::invalid(
                "entry_probability_per_month",
                "must lie in [0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.min_expected_accrual_fraction) {
            return Err(ConfigError::invalid(
                "min_expected_accrual_fraction",
                "must lie in [0, 1]",
            ));
        }
        if let Some(t) = self.time_trend {
            if !t.is_finite() {
                return Err(ConfigError::invalid("time_trend", "must be finite"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConfigError::invalid("alpha", "must lie in (0, 1)"));
        }
        if self.replicates < 1 {
            return Err(ConfigError::invalid("replicates", "must be at least 1"));
        }
        self.recruitment.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Success,
    Failure,
    StoppedFutility,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Success => "success",
            Decision::Failure => "failure",
            Decision::StoppedFutility => "stopped_futility",
        }
    }
}

/// Outcome of testing one arm against its concurrent controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub arm_id: ArmId,
    pub true_effect: EffectSize,
    pub decision: Decision,
    pub p_interim: Option<f64>,
    pub p_final: Option<f64>,
    pub n_treatment: u32,
    pub n_concurrent_controls_interim: Option<u32>,
    pub n_concurrent_controls_final: Option<u32>,
    pub entry_week: Week,
    pub exit_week: Week,
    pub duration_weeks: u32,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::derive_stream;

    fn set(ids: &[ArmId]) -> BTreeSet<ArmId> {
        ids.iter().copied().collect()
    }

    #[test]
    fn degenerate_distribution_always_null() {
        let dist = EffectDistribution::new([1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut rng = derive_stream(3, 0);
        assert!((0..10_000).all(|_| draw_effect(&mut rng, &dist) == EffectSize::Null));
    }

    #[test]
    fn effect_frequencies_match_distributions() {
        for dist in [EffectDistribution::EQUAL, EffectDistribution::PESSIMISTIC] {
            let mut rng = derive_stream(11, 0);
            let mut counts = [0usize; 4];
            let n = 100_000;
            for _ in 0..n {
                counts[draw_effect(&mut rng, &dist).index()] += 1;
            }
            for (c, p) in counts.iter().zip(dist.probabilities()) {
                assert!((*c as f64 / n as f64 - p).abs() < 0.01);
            }
        }
    }

    #[test]
    fn distribution_must_sum_to_one() {
        assert!(EffectDistribution::new([0.5, 0.5, 0.1, 0.0]).is_err());
    }

    #[test]
    fn period_advances_on_entry() {
        let mut t = PeriodTracker::new(1, set(&[1, 2, 3]));
        let p = t.advance_period(12, set(&[1, 2, 3, 4])).unwrap();
        assert_eq!((p.period_id, p.start_week), (1, 12));
    }

    #[test]
    fn simultaneous_entry_and_exit_is_one_period() {
        let mut t = PeriodTracker::new(1, set(&[1, 2, 3]));
        assert!(t.observe(12, &set(&[1, 3, 5])).unwrap());
        assert_eq!(t.count(), 2);
        assert!(!t.observe(13, &set(&[1, 3, 5])).unwrap());
        assert_eq!(t.count(), 2);
    }

    #[test]
    fn unchanged_set_is_a_logic_error() {
        let mut t = PeriodTracker::new(1, set(&[1, 2]));
        assert!(matches!(t.advance_period(5, set(&[1, 2])), Err(Error::Logic(_))));
    }

    #[test]
    fn quiet_platform_has_one_period() {
        let mut t = PeriodTracker::new(1, set(&[1]));
        for w in 2..=240 {
            t.observe(w, &set(&[1])).unwrap();
        }
        assert_eq!(t.count(), 1);
        assert_eq!(t.period_at(200).unwrap().period_id, 0);
    }

    #[test]
    fn terminal_status_is_final() {
        let mut arm = Arm::new(1, 1, EffectSize::Null, 80);
        arm.finish(ArmStatus::StoppedFutility, 30).unwrap();
        assert!(arm.finish(ArmStatus::CompletedSuccess, 40).is_err());
        assert_eq!(arm.exit_week, Some(30));
    }

    #[test]
    fn futility_without_interim_is_rejected() {
        let cfg = ScenarioConfig {
            futility_boundary: Some(0.5),
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::Invalid { field, .. }) if field == "futility_boundary"
        ));
    }

    #[test]
    fn interim_trigger_rounds_up() {
        let cfg = ScenarioConfig {
            interim_fraction: Some(0.5),
            target_n_per_arm: 75,
            ..ScenarioConfig::default()
        };
        assert_eq!(cfg.interim_trigger(), Some(38));
    }
}
