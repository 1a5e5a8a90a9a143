//! Handcrafted per-step rewards for the Base and Full dolly-in tasks.
//!
//! Base:  `r = λ_area·ΔA − λ_steer·(Δθ̇)²`
//! Full:  `r = λ_area·ΔA − λ_steer·(Δθ̇)² − λ_cam·((Δφ̇)² + (Δψ̇)²)`
//!
//! `ΔA` is the per-step change in subject area (percent of frame) and the
//! rate deltas are successive differences of the commanded heading, pan and
//! tilt rates (rad/s).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Task;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub lambda_area: f64,
    pub lambda_steer: f64,
    pub lambda_cam: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            lambda_area: 1.0,
            lambda_steer: 0.5,
            lambda_cam: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn new(lambda_area: f64, lambda_steer: f64, lambda_cam: f64) -> Self {
        RewardWeights {
            lambda_area,
            lambda_steer,
            lambda_cam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_area, self.lambda_steer, self.lambda_cam];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(
                "reward weights must be finite and non-negative".into(),
            ))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDeltas {
    pub d_area: f64,
    pub d_steer_rate: f64,
    pub d_pan_rate: f64,
    pub d_tilt_rate: f64,
}

pub fn base_reward(d: &StepDeltas, w: &RewardWeights) -> f64 {
    w.lambda_area * d.d_area - w.lambda_steer * d.d_steer_rate.powi(2)
}

pub fn full_reward(d: &StepDeltas, w: &RewardWeights) -> f64 {
    base_reward(d, w)
        - w.lambda_cam * (d.d_pan_rate.powi(2) + d.d_tilt_rate.powi(2))
}

/// The reward matching the task variant.
pub fn task_reward(task: Task, d: &StepDeltas, w: &RewardWeights) -> f64 {
    match task {
        Task::Base => base_reward(d, w),
        Task::Full => full_reward(d, w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deltas(a: f64, s: f64, p: f64, t: f64) -> StepDeltas {
        StepDeltas {
            d_area: a,
            d_steer_rate: s,
            d_pan_rate: p,
            d_tilt_rate: t,
        }
    }

    #[test]
    fn base_examples() {
        let w = RewardWeights::new(1.0, 0.5, 0.5);
        assert_eq!(base_reward(&deltas(0.2, 0.0, 0.0, 0.0), &w), 0.2);
        assert!((base_reward(&deltas(0.0, 0.4, 0.0, 0.0), &w) + 0.08).abs() < 1e-15);
        assert_eq!(base_reward(&StepDeltas::default(), &w), 0.0);
    }

    #[test]
    fn full_example() {
        let w = RewardWeights::new(1.0, 0.5, 0.5);
        let r = full_reward(&deltas(0.1, 0.1, 0.2, 0.1), &w);
        assert!((r - 0.07).abs() < 1e-15, "{r}");
        let d = deltas(0.3, -0.2, 0.0, 0.0);
        assert_eq!(full_reward(&d, &w), base_reward(&d, &w));
    }

    #[test]
    fn weights_validation() {
        assert!(RewardWeights::default().validate().is_ok());
        assert!(RewardWeights::new(-1.0, 0.0, 0.0).validate().is_err());
        assert!(RewardWeights::new(1.0, f64::NAN, 0.0).validate().is_err());
    }

    proptest! {
        #[test]
        fn full_never_exceeds_base(a in -5.0..5.0f64, s in -5.0..5.0f64, p in -5.0..5.0f64,
                                   t in -5.0..5.0f64, la in 0.0..3.0f64, ls in 0.0..3.0f64,
                                   lc in 0.0..3.0f64) {
            let w = RewardWeights::new(la, ls, lc);
            let d = deltas(a, s, p, t);
            prop_assert!(full_reward(&d, &w) <= base_reward(&d, &w));
        }

        #[test]
        fn sign_invariance(a in -5.0..5.0f64, s in -5.0..5.0f64, p in -5.0..5.0f64, t in -5.0..5.0f64) {
            let w = RewardWeights::default();
            let d = deltas(a, s, p, t);
            let flipped = deltas(a, -s, -p, -t);
            prop_assert_eq!(full_reward(&d, &w), full_reward(&flipped, &w));
            prop_assert_eq!(base_reward(&d, &w), base_reward(&flipped, &w));
        }
    }
}
