//! Allocation ratios for the current arm set and their realization by simple
//! or modified block randomization.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AllocationKind, ArmId, Assignment};
use crate::stats::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationPolicy {
    pub kind: AllocationKind,
    /// Minimum control fraction; only read by `SqrtKCapped`.
    pub cap: f64,
}

impl AllocationPolicy {
    pub fn new(kind: AllocationKind, cap: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&cap) {
            return Err(Error::Parameter(format!("control cap {cap} outside [0, 1)")));
        }
        Ok(AllocationPolicy { kind, cap })
    }

    pub fn balanced() -> Self {
        AllocationPolicy {
            kind: AllocationKind::Balanced,
            cap: 0.0,
        }
    }
}

/// Control spots per block of `k` treatment spots, i.e. the `x` in a
/// 1:...:1:x allocation.
pub fn control_spots_x(policy: &AllocationPolicy, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::NoArms);
    }
    let kf = k as f64;
    Ok(match policy.kind {
        AllocationKind::Balanced => 1.0,
        AllocationKind::KAlloc => kf,
        AllocationKind::SqrtK => kf.sqrt(),
        AllocationKind::SqrtKCapped => {
            // r >= cap  <=>  x >= cap k / (1 - cap)
            kf.sqrt().max(policy.cap * kf / (1.0 - policy.cap))
        }
    })
}

/// Fraction of patients randomized to control with `k` active arms. Each
/// treatment arm receives `(1 - r) / k`.
pub fn control_ratio(policy: &AllocationPolicy, k: usize) -> Result<f64> {
    let x = control_spots_x(policy, k)?;
    Ok(x / (k as f64 + x))
}

/// One permuted block: every active arm once, `floor(x)` control spots and
/// one more control spot with probability `frac(x)`.
pub fn generate_block(rng: &mut RngStream, active_arms: &[ArmId], x: f64) -> Vec<Assignment> {
    debug_assert!(x >= 0.0);
    let whole = x.floor();
    let frac = x - whole;
    let mut controls = whole as usize;
    if frac > 1e-12 && rng.bernoulli(frac) {
        controls += 1;
    }
    let mut block: Vec<Assignment> = active_arms.iter().map(|&a| Assignment::Arm(a)).collect();
    block.extend(std::iter::repeat_n(Assignment::Control, controls));
    rng.shuffle(&mut block);
    block
}

/// A generated block and how many of its spots were handed out before it
/// was exhausted or discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBlock {
    pub arms: Vec<ArmId>,
    pub x: f64,
    pub spots: Vec<Assignment>,
    pub consumed: usize,
}

/// Pending spots of the current block and the arm set it was built for.
#[derive(Debug, Clone, Default)]
pub struct BlockState {
    snapshot: Vec<ArmId>,
    pending: VecDeque<Assignment>,
    blocks_generated: u64,
    history: Option<Vec<GeneratedBlock>>,
}

impl BlockState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also keeps every generated block, for audits.
    pub fn with_history() -> Self {
        BlockState {
            history: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn history(&self) -> &[GeneratedBlock] {
        self.history.as_deref().unwrap_or(&[])
    }

    pub fn blocks_generated(&self) -> u64 {
        self.blocks_generated
    }

    pub fn pending(&self) -> impl Iterator<Item = &Assignment> {
        self.pending.iter()
    }

    /// Next assignment. `active_arms` must be sorted ascending. A partial
    /// block is discarded as soon as the arm set differs from the one it was
    /// generated for.
    pub fn next_assignment(
        &mut self,
        rng: &mut RngStream,
        active_arms: &[ArmId],
        policy: &AllocationPolicy,
    ) -> Result<Assignment> {
        if active_arms.is_empty() {
            return Err(Error::NoArms);
        }
        if self.snapshot != active_arms {
            self.pending.clear();
            self.snapshot.clear();
            self.snapshot.extend_from_slice(active_arms);
        }
        if self.pending.is_empty() {
            let x = control_spots_x(policy, active_arms.len())?;
            let block = generate_block(rng, active_arms, x);
            if let Some(h) = self.history.as_mut() {
                h.push(GeneratedBlock {
                    arms: active_arms.to_vec(),
                    x,
                    spots: block.clone(),
                    consumed: 0,
                });
            }
            self.pending.extend(block);
            self.blocks_generated += 1;
        }
        if let Some(last) = self.history.as_mut().and_then(|h| h.last_mut()) {
            last.consumed += 1;
        }
        Ok(self.pending.pop_front().expect("fresh block is never empty"))
    }
}

/// Independent draw: control with probability `r`, otherwise a uniformly
/// chosen active arm.
pub fn next_assignment_simple(
    rng: &mut RngStream,
    active_arms: &[ArmId],
    policy: &AllocationPolicy,
) -> Result<Assignment> {
    if active_arms.is_empty() {
        return Err(Error::NoArms);
    }
    let r = control_ratio(policy, active_arms.len())?;
    if rng.bernoulli(r) {
        Ok(Assignment::Control)
    } else {
        Ok(Assignment::Arm(active_arms[rng.below(active_arms.len())]))
    }
}

/// Randomizer used by the engine loop.
#[derive(Debug, Clone)]
pub enum Randomizer {
    Simple,
    Block(BlockState),
}

impl Randomizer {
    pub fn next(
        &mut self,
        rng: &mut RngStream,
        active_arms: &[ArmId],
        policy: &AllocationPolicy,
    ) -> Result<Assignment> {
        match self {
            Randomizer::Simple => next_assignment_simple(rng, active_arms, policy),
            Randomizer::Block(state) => state.next_assignment(rng, active_arms, policy),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::derive_stream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn policy(kind: AllocationKind, cap: f64) -> AllocationPolicy {
        AllocationPolicy::new(kind, cap).unwrap()
    }

    #[test]
    fn control_ratio_examples() {
        let six = |p| control_ratio(&p, 6).unwrap();
        assert_abs_diff_eq!(six(policy(AllocationKind::Balanced, 0.0)), 1.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            six(policy(AllocationKind::SqrtK, 0.0)),
            6f64.sqrt() / (6.0 + 6f64.sqrt()),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(six(policy(AllocationKind::SqrtKCapped, 0.35)), 0.35, epsilon = 1e-15);
        for k in 1..=6 {
            assert_abs_diff_eq!(
                control_ratio(&policy(AllocationKind::KAlloc, 0.0), k).unwrap(),
                0.5,
                epsilon = 1e-15
            );
        }
        assert!(matches!(
            control_ratio(&AllocationPolicy::balanced(), 0),
            Err(Error::NoArms)
        ));
    }

    #[test]
    fn cap_never_lowers_ratio() {
        // k = 1: sqrt allocation gives 0.5, above the 0.35 floor
        assert_abs_diff_eq!(
            control_ratio(&policy(AllocationKind::SqrtKCapped, 0.35), 1).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn control_spots_examples() {
        assert_abs_diff_eq!(
            control_spots_x(&policy(AllocationKind::SqrtK, 0.0), 3).unwrap(),
            1.7320508,
            epsilon = 1e-7
        );
        assert_abs_diff_eq!(
            control_spots_x(&policy(AllocationKind::SqrtKCapped, 0.35), 6).unwrap(),
            0.35 * 6.0 / 0.65,
            epsilon = 1e-12
        );
        assert_eq!(control_spots_x(&AllocationPolicy::balanced(), 4).unwrap(), 1.0);
    }

    #[test]
    fn integer_x_gives_fixed_block() {
        let mut rng = derive_stream(5, 0);
        for _ in 0..1000 {
            let block = generate_block(&mut rng, &[1, 2, 3], 3.0);
            assert_eq!(block.len(), 6);
            assert_eq!(block.iter().filter(|a| **a == Assignment::Control).count(), 3);
        }
    }

    #[test]
    fn two_spot_block_orders_are_uniform() {
        let mut rng = derive_stream(6, 0);
        let n = 10_000;
        let control_first = (0..n)
            .filter(|_| generate_block(&mut rng, &[1], 1.0)[0] == Assignment::Control)
            .count();
        assert!((control_first as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn stale_block_is_discarded_on_arm_change() {
        let mut rng = derive_stream(8, 0);
        let mut state = BlockState::new();
        let p = policy(AllocationKind::SqrtK, 0.0);
        let first = state.next_assignment(&mut rng, &[1, 2, 3], &p).unwrap();
        assert!(first == Assignment::Control || matches!(first, Assignment::Arm(1..=3)));
        // arm 2 leaves, arm 4 enters
        let _ = state.next_assignment(&mut rng, &[1, 3, 4], &p).unwrap();
        let remaining: Vec<_> = state.pending().copied().collect();
        assert!(!remaining.contains(&Assignment::Arm(2)));
        assert_eq!(state.blocks_generated(), 2);
    }

    #[test]
    fn simple_randomization_single_arm_balanced() {
        let mut rng = derive_stream(9, 0);
        let n = 10_000;
        let controls = (0..n)
            .filter(|_| {
                next_assignment_simple(&mut rng, &[1], &AllocationPolicy::balanced()).unwrap()
                    == Assignment::Control
            })
            .count();
        assert!((controls as f64 / n as f64 - 0.5).abs() < 0.015);
    }

    #[test]
    fn no_arms_is_an_error() {
        let mut rng = derive_stream(9, 1);
        let mut state = BlockState::new();
        let p = AllocationPolicy::balanced();
        assert!(matches!(state.next_assignment(&mut rng, &[], &p), Err(Error::NoArms)));
        assert!(matches!(next_assignment_simple(&mut rng, &[], &p), Err(Error::NoArms)));
    }

    fn kind_strategy() -> impl Strategy<Value = AllocationKind> {
        prop_oneof![
            Just(AllocationKind::Balanced),
            Just(AllocationKind::KAlloc),
            Just(AllocationKind::SqrtK),
            Just(AllocationKind::SqrtKCapped),
        ]
    }

    proptest! {
        #[test]
        fn ratio_and_spots_round_trip(kind in kind_strategy(), cap in 0.0f64..0.95, k in 1usize..40) {
            let p = policy(kind, cap);
            let r = control_ratio(&p, k).unwrap();
            let x = control_spots_x(&p, k).unwrap();
            prop_assert!((r - x / (k as f64 + x)).abs() < 1e-14);
            prop_assert!((x - r * k as f64 / (1.0 - r)).abs() < 1e-9 * x.max(1.0));
            if kind == AllocationKind::SqrtKCapped {
                prop_assert!(r >= cap - 1e-14);
            }
        }

        #[test]
        fn block_discrepancy_is_bounded(kind in kind_strategy(), cap in 0.0f64..0.8, k in 1usize..8,
                                        seed in any::<u64>(), n in 1usize..3000) {
            let p = policy(kind, cap);
            let arms: Vec<ArmId> = (1..=k as ArmId).collect();
            let mut rng = derive_stream(seed, 0);
            let mut state = BlockState::new();
            let mut controls = 0usize;
            for _ in 0..n {
                if state.next_assignment(&mut rng, &arms, &p).unwrap() == Assignment::Control {
                    controls += 1;
                }
            }
            let r = control_ratio(&p, k).unwrap();
            let x = control_spots_x(&p, k).unwrap();
            let bound = (x.floor() + 1.0 + k as f64) / n as f64;
            let dev = (controls as f64 / n as f64 - r).abs();
            if (x - x.round()).abs() < 1e-12 {
                prop_assert!(dev <= bound);
            } else {
                // fractional x adds the binomial wander of the Frac(x) coin flips
                let blocks = n as f64 / (k as f64 + x) + 1.0;
                let coin_sd = (blocks * 0.25).sqrt();
                prop_assert!(dev <= bound + 5.0 * coin_sd / n as f64);
            }
        }

        #[test]
        fn every_block_has_each_arm_once(k in 1usize..8, x in 0.0f64..7.0, seed in any::<u64>()) {
            let arms: Vec<ArmId> = (10..10 + k as ArmId).collect();
            let mut rng = derive_stream(seed, 3);
            let block = generate_block(&mut rng, &arms, x);
            for a in &arms {
                prop_assert_eq!(block.iter().filter(|s| **s == Assignment::Arm(*a)).count(), 1);
            }
            let c = block.iter().filter(|s| **s == Assignment::Control).count();
            prop_assert!(c == x.floor() as usize || c == x.floor() as usize + 1);
        }
    }
}
