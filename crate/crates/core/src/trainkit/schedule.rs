use serde::{Deserialize, Serialize};

use super::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Warmup, constant plateau, linear decay over the final fraction.
    Wsd,
    /// Warmup, then linear decay to zero.
    Linear,
}

impl std::str::FromStr for ScheduleKind {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wsd" => Ok(Self::Wsd),
            "linear" => Ok(Self::Linear),
            _ => Err(TrainError::Recipe(format!("unknown schedule {s:?}"))),
        }
    }
}

/// Warmup length, either absolute or as a share of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Warmup {
    Steps(usize),
    /// Resolved as `ceil(fraction · total_steps)`.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub peak_lr: f64,
    pub warmup: Warmup,
    pub total_steps: usize,
    /// Share of the run spent decaying (WSD only).
    pub decay_fraction: f64,
}

impl ScheduleSpec {
    pub const WSD_DECAY_FRACTION: f64 = 0.1;
    pub const WSD_WARMUP_FRACTION: f64 = 0.01;

    pub fn wsd(peak_lr: f64, total_steps: usize) -> Self {
        Self {
            kind: ScheduleKind::Wsd,
            peak_lr,
            warmup: Warmup::Fraction(Self::WSD_WARMUP_FRACTION),
            total_steps,
            decay_fraction: Self::WSD_DECAY_FRACTION,
        }
    }

    pub fn linear(peak_lr: f64, warmup_steps: usize, total_steps: usize) -> Self {
        Self {
            kind: ScheduleKind::Linear,
            peak_lr,
            warmup: Warmup::Steps(warmup_steps),
            total_steps,
            decay_fraction: 0.0,
        }
    }

    pub fn with_total_steps(mut self, total_steps: usize) -> Self {
        self.total_steps = total_steps;
        self
    }

    pub fn warmup_steps(&self) -> usize {
        match self.warmup {
            Warmup::Steps(n) => n,
            Warmup::Fraction(f) => (f * self.total_steps as f64).ceil() as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Recipe(m));
        if !(self.peak_lr.is_finite() && self.peak_lr >= 0.0) {
            return bad(format!("peak_lr {} must be finite and ≥ 0", self.peak_lr));
        }
        if let Warmup::Fraction(f) = self.warmup {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("warmup fraction {f} outside [0, 1)"));
            }
        }
        if self.total_steps > 0 && self.warmup_steps() >= self.total_steps {
            return bad(format!(
                "warmup {} must be shorter than the run ({} steps)",
                self.warmup_steps(),
                self.total_steps
            ));
        }
        if self.kind == ScheduleKind::Wsd && !(0.0..=1.0).contains(&self.decay_fraction) {
            return bad(format!("decay_fraction {} outside [0, 1]", self.decay_fraction));
        }
        Ok(())
    }
}

/// Learning rate at `step` (0 at step 0). Steps past the end clamp to the
/// final value.
pub fn lr_at(s: &ScheduleSpec, step: usize) -> f64 {
    let total = s.total_steps as f64;
    if s.total_steps == 0 {
        return 0.0;
    }
    let t = step.min(s.total_steps) as f64;
    let warmup = s.warmup_steps() as f64;
    let rise = if warmup > 0.0 { t / warmup } else { 1.0 };
    let fall = match s.kind {
        ScheduleKind::Wsd => {
            let decay = s.decay_fraction * total;
            if decay > 0.0 {
                (total - t) / decay
            } else if t < total {
                1.0
            } else {
                0.0
            }
        }
        ScheduleKind::Linear => (total - t) / (total - warmup),
    };
    s.peak_lr * rise.min(fall).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wsd10() -> ScheduleSpec {
        ScheduleSpec {
            warmup: Warmup::Steps(10),
            ..ScheduleSpec::wsd(1e-3, 100)
        }
    }

    #[test]
    fn starts_at_zero() {
        assert_eq!(lr_at(&wsd10(), 0), 0.0);
        assert_eq!(lr_at(&ScheduleSpec::linear(1e-4, 500, 1000), 0), 0.0);
    }

    #[test]
    fn wsd_phases() {
        let s = wsd10();
        assert_eq!(lr_at(&s, 5), 5e-4);
        assert_eq!(lr_at(&s, 50), 1e-3);
        assert_eq!(lr_at(&s, 90), 1e-3);
        assert!((lr_at(&s, 95) - 5e-4).abs() < 1e-15);
        assert_eq!(lr_at(&s, 100), 0.0);
        assert_eq!(lr_at(&s, 1000), 0.0);
    }

    #[test]
    fn linear_midpoint_of_decay() {
        let s = ScheduleSpec::linear(1e-4, 500, 1000);
        assert!((lr_at(&s, 750) - 5e-5).abs() < 1e-18);
        assert!((lr_at(&s, 250) - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn warmup_fraction_rounds_up() {
        assert_eq!(ScheduleSpec::wsd(1.0, 300).warmup_steps(), 3);
        assert_eq!(ScheduleSpec::wsd(1.0, 150).warmup_steps(), 2);
        assert_eq!(ScheduleSpec::wsd(1.0, 50).warmup_steps(), 1);
    }

    #[test]
    fn invalid_specs() {
        assert!(ScheduleSpec::linear(1.0, 10, 10).validate().is_err());
        assert!(ScheduleSpec::wsd(-1.0, 10).validate().is_err());
        assert!(ScheduleSpec::wsd(1.0, 0).validate().is_ok());
    }

    proptest! {
        #[test]
        fn bounded_and_continuous(
            warm in 0usize..50,
            extra in 1usize..500,
            wsd in any::<bool>(),
            decay in 0.0f64..1.0,
        ) {
            let total = warm + extra;
            let s = if wsd {
                ScheduleSpec { warmup: Warmup::Steps(warm), decay_fraction: decay, ..ScheduleSpec::wsd(1.0, total) }
            } else {
                ScheduleSpec::linear(1.0, warm, total)
            };
            // largest single-step change is bounded by the steepest ramp
            let steepest = 1.0 / (warm.max(1) as f64)
                .min(((decay * total as f64).max(1.0)).min((total - warm) as f64));
            let mut prev = lr_at(&s, 0);
            for t in 1..=total + 2 {
                let lr = lr_at(&s, t);
                prop_assert!((0.0..=1.0).contains(&lr));
                prop_assert!((lr - prev).abs() <= steepest + 1e-12);
                prev = lr;
            }
        }
    }
}
