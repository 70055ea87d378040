use serde::{Deserialize, Serialize};

/// A point estimate with an interval at a nominal level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl IntervalEstimate {
    /// Symmetric Wald interval `point +/- half_width`.
    pub fn wald(point: f64, half_width: f64, level: f64) -> Self {
        Self {
            point,
            lower: point - half_width,
            upper: point + half_width,
            level,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}
