//! Whole-replicate audits of the engine: bookkeeping, block randomization and
//! the concurrent-control windows.

use std::collections::BTreeMap;

use platform_sim::engine::{run_replicate, run_replicate_traced, ReplicateTrace};
use platform_sim::model::{
    AllocationKind, Assignment, Covariates, Mode, Randomization, ScenarioConfig,
};
use platform_sim::stats::derive_stream;

fn traced(cfg: &ScenarioConfig, replicate: u64) -> (platform_sim::engine::ReplicateResult, ReplicateTrace) {
    let mut rng = derive_stream(cfg.master_seed, replicate);
    run_replicate_traced(cfg, &mut rng).unwrap()
}

fn configs() -> Vec<ScenarioConfig> {
    let base = ScenarioConfig::default();
    vec![
        base.clone(),
        ScenarioConfig {
            initial_arms: 3,
            entry_probability_per_month: 0.2,
            interim_fraction: Some(0.5),
            futility_boundary: Some(0.5),
            analysis_covariates: Covariates::BaselinePlusPeriod,
            ..base.clone()
        },
        ScenarioConfig {
            randomization: Randomization::Simple,
            allocation: AllocationKind::KAlloc,
            target_n_per_arm: 60,
            ..base.clone()
        },
        ScenarioConfig {
            mode: Mode::TwoArmSeries,
            allocation: AllocationKind::Balanced,
            target_n_per_arm: 80,
            ..base
        },
    ]
}

#[test]
fn controls_lie_inside_each_arm_window() {
    for cfg in configs() {
        for rep in 0..20 {
            let (_, trace) = traced(&cfg, rep);
            for (week, data) in &trace.analyses {
                let arm = trace.arms.iter().find(|a| a.arm_id == data.arm_id).unwrap();
                let window_end = arm.exit_week.map_or(*week, |e| e.min(*week));
                let controls: Vec<_> = trace
                    .records
                    .iter()
                    .filter(|r| r.assignment == Assignment::Control)
                    .filter(|r| r.week >= arm.entry_week && r.week <= window_end)
                    .collect();
                assert_eq!(controls.len(), data.n_control(), "arm {} week {week}", arm.arm_id);
                let treated = trace
                    .records
                    .iter()
                    .filter(|r| r.assignment == Assignment::Arm(arm.arm_id) && r.week <= *week)
                    .count();
                assert_eq!(treated, data.n_treated());
            }
        }
    }
}

#[test]
fn period_ids_follow_the_tracker() {
    for cfg in configs() {
        for rep in 0..20 {
            let (res, trace) = traced(&cfg, rep);
            let periods = trace.periods.periods();
            assert_eq!(res.periods as usize, periods.len());
            for r in &trace.records {
                let p = periods.iter().rev().find(|p| p.start_week <= r.week).unwrap();
                assert_eq!(r.period_id, p.period_id, "week {}", r.week);
                if let Assignment::Arm(a) = r.assignment {
                    assert!(p.active_arm_ids.contains(&a));
                }
            }
            for w in periods.windows(2) {
                assert_ne!(w[0].active_arm_ids, w[1].active_arm_ids);
                assert!(w[0].start_week < w[1].start_week);
            }
        }
    }
}

#[test]
fn totals_and_duration_are_consistent() {
    for cfg in configs() {
        for rep in 0..20 {
            let (res, trace) = traced(&cfg, rep);
            assert_eq!(res.total_platform_n as usize, trace.records.len());
            let controls = trace.records.iter().filter(|r| r.assignment == Assignment::Control).count();
            assert_eq!(res.total_control_n as usize, controls);
            assert_eq!(res.n_arms_tested as usize, trace.arms.len());
            assert_eq!(res.comparisons.len(), trace.arms.len());

            let mut per_arm: BTreeMap<u32, u32> = BTreeMap::new();
            for r in &trace.records {
                if let Assignment::Arm(a) = r.assignment {
                    *per_arm.entry(a).or_default() += 1;
                }
            }
            for arm in &trace.arms {
                let enrolled = per_arm.get(&arm.arm_id).copied().unwrap_or(0);
                assert_eq!(enrolled, arm.enrolled);
                assert!(enrolled <= arm.target_n);
                assert!(arm.status.is_terminal());
                let exit = arm.exit_week.unwrap();
                assert!(exit >= arm.entry_week);
            }
            let last_exit = trace.arms.iter().filter_map(|a| a.exit_week).max().unwrap();
            assert_eq!(res.platform_duration_weeks, last_exit);
            assert!(trace.records.iter().all(|r| r.week <= last_exit));
            for c in &res.comparisons {
                assert_eq!(c.duration_weeks, c.exit_week - c.entry_week + 1);
            }
        }
    }
}

#[test]
fn max_capacity_fills_every_free_slot_before_the_horizon() {
    let cfg = ScenarioConfig::default();
    for rep in 0..20 {
        let (_, trace) = traced(&cfg, rep);
        let periods = trace.periods.periods();
        assert!(periods.iter().all(|p| p.active_arm_ids.len() <= 6));
        assert_eq!(periods[0].active_arm_ids.len(), 6);
        // a slot freed before a month start is refilled at that month start
        for p in periods {
            let month_start = (p.start_week - 1) % 4 == 0;
            if month_start && p.start_week > 1 && p.start_week <= 200 {
                assert_eq!(p.active_arm_ids.len(), 6, "week {}", p.start_week);
            }
        }
    }
}

#[test]
fn replicates_are_reproducible() {
    for cfg in configs() {
        let a = run_replicate(&cfg, &mut derive_stream(99, 7)).unwrap();
        let b = run_replicate(&cfg, &mut derive_stream(99, 7)).unwrap();
        let c = run_replicate(&cfg, &mut derive_stream(99, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let (t, _) = run_replicate_traced(&cfg, &mut derive_stream(99, 7)).unwrap();
        assert_eq!(a, t);
    }
}

#[test]
fn blocks_hold_every_arm_once_and_account_for_all_assignments() {
    let base = ScenarioConfig::default();
    for allocation in [
        AllocationKind::Balanced,
        AllocationKind::KAlloc,
        AllocationKind::SqrtK,
        AllocationKind::SqrtKCapped,
    ] {
        let cfg = ScenarioConfig { allocation, ..base.clone() };
        for rep in 0..10 {
            let (_, trace) = traced(&cfg, rep);
            assert!(!trace.blocks.is_empty());
            let mut handed_out = Vec::new();
            for b in &trace.blocks {
                let mut arms: Vec<u32> = b
                    .spots
                    .iter()
                    .filter_map(|s| match s {
                        Assignment::Arm(a) => Some(*a),
                        Assignment::Control => None,
                    })
                    .collect();
                arms.sort();
                assert_eq!(arms, b.arms);
                let controls = b.spots.len() - arms.len();
                let floor = b.x.floor() as usize;
                assert!(controls == floor || controls == floor + 1, "x={} controls={controls}", b.x);
                if b.x.fract() == 0.0 {
                    assert_eq!(controls, floor);
                }
                assert!(b.consumed <= b.spots.len());
                handed_out.extend_from_slice(&b.spots[..b.consumed]);
            }
            let assigned: Vec<Assignment> = trace.records.iter().map(|r| r.assignment).collect();
            assert_eq!(handed_out, assigned);
        }
    }
}

#[test]
fn simple_randomization_generates_no_blocks() {
    let cfg = ScenarioConfig {
        randomization: Randomization::Simple,
        ..ScenarioConfig::default()
    };
    let (_, trace) = traced(&cfg, 0);
    assert!(trace.blocks.is_empty());
}

#[test]
fn staggered_arms_see_different_control_counts() {
    let cfg = ScenarioConfig::default();
    let (res, _) = traced(&cfg, 3);
    let mut n_c: Vec<u32> = res
        .comparisons
        .iter()
        .filter_map(|c| c.n_concurrent_controls_final)
        .collect();
    n_c.sort();
    n_c.dedup();
    assert!(n_c.len() > 1, "{n_c:?}");
}

#[test]
fn two_arm_series_tests_one_arm_per_160_patients() {
    let cfg = ScenarioConfig {
        mode: Mode::TwoArmSeries,
        allocation: AllocationKind::Balanced,
        target_n_per_arm: 80,
        ..ScenarioConfig::default()
    };
    for rep in 0..10 {
        let (res, trace) = traced(&cfg, rep);
        assert_eq!(res.arms_per_1000(), 6.25);
        assert_eq!(res.total_control_n, 80 * res.n_arms_tested);
        for w in trace.arms.windows(2) {
            assert!(w[1].entry_week > w[0].exit_week.unwrap());
        }
    }
}
