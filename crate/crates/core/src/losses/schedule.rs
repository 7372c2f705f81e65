use crate::error::{Error, Result};

/// Decay of the class-wise contrastive weight over communication rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub mu_glob_start: f64,
    pub mu_glob_end: f64,
    pub rounds: usize,
    pub warmup_rounds: usize,
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rounds <= self.warmup_rounds {
            return Err(Error::InvalidArgument(format!(
                "rounds ({}) must exceed warmup rounds ({})",
                self.rounds, self.warmup_rounds
            )));
        }
        if !(self.mu_glob_end >= 0.0 && self.mu_glob_start >= self.mu_glob_end) {
            return Err(Error::InvalidArgument(format!(
                "need mu_glob_start ({}) >= mu_glob_end ({}) >= 0",
                self.mu_glob_start, self.mu_glob_end
            )));
        }
        Ok(())
    }
}

/// Weight of the class-wise term in round `t`: held at the start value for
/// the warmup rounds, then decayed linearly to the end value at round `T`.
pub fn mu_glob_at_round(t: usize, s: &ScheduleSpec) -> f64 {
    if t < s.warmup_rounds {
        return s.mu_glob_start;
    }
    if t >= s.rounds || s.rounds <= s.warmup_rounds {
        return s.mu_glob_end;
    }
    let frac = (t - s.warmup_rounds) as f64 / (s.rounds - s.warmup_rounds) as f64;
    (s.mu_glob_start - frac * (s.mu_glob_start - s.mu_glob_end)).max(s.mu_glob_end)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT: ScheduleSpec = ScheduleSpec {
        mu_glob_start: 1.0,
        mu_glob_end: 0.0001,
        rounds: 100,
        warmup_rounds: 5,
    };

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(mu_glob_at_round(0, &DEFAULT), 1.0);
        assert_eq!(mu_glob_at_round(4, &DEFAULT), 1.0);
        assert_eq!(mu_glob_at_round(5, &DEFAULT), 1.0);
        assert!((mu_glob_at_round(100, &DEFAULT) - 0.0001).abs() < 1e-15);
        let mid = 1.0 - (47.0 / 95.0) * 0.9999;
        assert!((mu_glob_at_round(52, &DEFAULT) - mid).abs() < 1e-12);
        assert!((mu_glob_at_round(52, &DEFAULT) - 0.50531).abs() < 1e-5);
    }

    #[test]
    fn clamps_past_the_end() {
        assert_eq!(mu_glob_at_round(500, &DEFAULT), 0.0001);
    }

    #[test]
    fn non_increasing() {
        let mut prev = f64::INFINITY;
        for t in 0..=120 {
            let v = mu_glob_at_round(t, &DEFAULT);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn validate_rejects_bad_specs() {
        assert!(DEFAULT.validate().is_ok());
        assert!(ScheduleSpec { warmup_rounds: 100, ..DEFAULT }.validate().is_err());
        assert!(ScheduleSpec { mu_glob_end: 2.0, ..DEFAULT }.validate().is_err());
    }
}
