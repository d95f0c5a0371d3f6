//! Baseline and week-6 MADRS scores with calibrated effect sizes, baseline
//! correlation and an optional period step trend.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EffectSize, SdCalibration, TrendScale};
use crate::stats::{sample_normal_pair, RngStream};

pub const MU_BASELINE: f64 = 32.0;
pub const MU_WEEK6_CONTROL: f64 = 20.0;
pub const RHO: f64 = 0.214;
/// Absolute week-6 reduction versus control, in MADRS points, for each grid
/// effect size (d = 0, 0.2, 0.35, 0.5).
pub const DELTA_MAP: [f64; 4] = [0.0, 2.25, 4.0, 5.7];

/// SD of the change score implied by the calibration pairs: the mean of
/// `delta(d) / d` over the non-null grid points.
pub fn derive_sd_delta(delta_map: &[f64; 4]) -> f64 {
    let pairs = EffectSize::ALL.iter().zip(delta_map).skip(1);
    let ratios: Vec<f64> = pairs.map(|(e, delta)| delta / e.value()).collect();
    ratios.iter().sum::<f64>() / ratios.len() as f64
}

/// Common SD of baseline and week 6 that gives the change score an SD of
/// `sd_delta` under correlation `rho`: `Var(change) = 2 sigma^2 (1 - rho)`.
pub fn derive_sigma(delta_map: &[f64; 4], rho: f64) -> f64 {
    derive_sd_delta(delta_map) / (2.0 * (1.0 - rho)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCalibration {
    pub mu_baseline: f64,
    pub mu_week6_control: f64,
    pub rho: f64,
    pub sd_delta: f64,
    pub sd_baseline: f64,
    pub sd_week6: f64,
    pub delta_map: [f64; 4],
}

impl OutcomeCalibration {
    pub fn new(rule: SdCalibration) -> Self {
        Self::with_parameters(MU_BASELINE, MU_WEEK6_CONTROL, RHO, DELTA_MAP, rule)
            .expect("built-in calibration is valid")
    }

    pub fn with_parameters(
        mu_baseline: f64,
        mu_week6_control: f64,
        rho: f64,
        delta_map: [f64; 4],
        rule: SdCalibration,
    ) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::Parameter(format!("correlation {rho} outside (-1, 1)")));
        }
        if delta_map.windows(2).any(|w| w[1] < w[0]) || delta_map[0] != 0.0 {
            return Err(Error::Parameter(
                "delta map must start at 0 and be non-decreasing in d".into(),
            ));
        }
        let sd_delta = derive_sd_delta(&delta_map);
        let (sd_baseline, sd_week6) = match rule {
            SdCalibration::EqualSd => {
                let sigma = derive_sigma(&delta_map, rho);
                (sigma, sigma)
            }
            SdCalibration::Week6MatchesChange => {
                // sd_delta^2 = sb^2 + s6^2 - 2 rho sb s6 with s6 = sd_delta
                // has the positive root sb = 2 rho s6
                if rho <= 0.0 {
                    return Err(Error::Parameter(
                        "week6_matches_change needs a positive correlation".into(),
                    ));
                }
                (2.0 * rho * sd_delta, sd_delta)
            }
        };
        Ok(OutcomeCalibration {
            mu_baseline,
            mu_week6_control,
            rho,
            sd_delta,
            sd_baseline,
            sd_week6,
            delta_map,
        })
    }

    pub fn delta(&self, effect: EffectSize) -> f64 {
        self.delta_map[effect.index()]
    }

    /// SD of the baseline-to-week-6 change implied by the two SDs and rho.
    pub fn change_sd(&self) -> f64 {
        (self.sd_baseline.powi(2) + self.sd_week6.powi(2)
            - 2.0 * self.rho * self.sd_baseline * self.sd_week6)
            .sqrt()
    }
}

/// Step function added to every week-6 mean: `period_id * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeTrend {
    pub step_fraction: f64,
    pub scale: TrendScale,
}

impl TimeTrend {
    pub fn none() -> Self {
        TimeTrend {
            step_fraction: 0.0,
            scale: TrendScale::Variance,
        }
    }

    pub fn step_points(&self, cal: &OutcomeCalibration) -> f64 {
        match self.scale {
            TrendScale::Variance => self.step_fraction * cal.sd_week6 * cal.sd_week6,
            TrendScale::Sd => self.step_fraction * cal.sd_week6,
        }
    }

    pub fn offset(&self, period_id: u32, cal: &OutcomeCalibration) -> f64 {
        period_id as f64 * self.step_points(cal)
    }
}

/// Draws `(baseline, week6)` for one patient. `effect` is `None` for a
/// control patient.
pub fn generate_outcome(
    rng: &mut RngStream,
    effect: Option<EffectSize>,
    period_id: u32,
    cal: &OutcomeCalibration,
    trend: &TimeTrend,
) -> Result<(f64, f64)> {
    let reduction = effect.map_or(0.0, |e| cal.delta(e));
    let mean6 = cal.mu_week6_control - reduction + trend.offset(period_id, cal);
    sample_normal_pair(
        rng,
        cal.mu_baseline,
        mean6,
        cal.sd_baseline,
        cal.sd_week6,
        cal.rho,
    )
}

/// Standardized effect on the change score with equal group SDs.
pub fn standardized_effect(delta_t_minus_delta_c: f64, sd_delta: f64) -> Result<f64> {
    if sd_delta.is_nan() || sd_delta <= 0.0 {
        return Err(Error::Parameter(format!("SD of change must be positive, got {sd_delta}")));
    }
    Ok(delta_t_minus_delta_c / sd_delta)
}
