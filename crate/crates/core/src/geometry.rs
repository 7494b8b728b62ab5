//! Space-time rectangles `I × J` with `I ⊂ (0, T]` and `J` an axis-aligned box.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    /// Time interval `[t_lo, t_hi]`.
    pub time: (f64, f64),
    /// Per-axis spatial intervals.
    pub space: Vec<(f64, f64)>,
}

impl Rectangle {
    pub fn new(time: (f64, f64), space: Vec<(f64, f64)>) -> Result<Self> {
        let r = Self { time, space };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.time;
        if !(a > 0.0 && b > a && b.is_finite()) {
            return domain(format!("time interval [{a}, {b}] must satisfy 0 < a < b"));
        }
        if self.space.is_empty() {
            return domain("rectangle needs at least one spatial axis");
        }
        for (i, &(lo, hi)) in self.space.iter().enumerate() {
            if !(hi > lo && lo.is_finite() && hi.is_finite()) {
                return domain(format!("spatial axis {i} interval [{lo}, {hi}] is degenerate"));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.space.len()
    }

    pub fn time_length(&self) -> f64 {
        self.time.1 - self.time.0
    }

    /// Euclidean diameter of `J`.
    pub fn space_diameter(&self) -> f64 {
        self.space.iter().map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
    }

    /// Shortest side of `J`.
    pub fn min_side(&self) -> f64 {
        self.space.iter().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        t >= self.time.0
            && t <= self.time.1
            && x.len() == self.space.len()
            && x.iter().zip(&self.space).all(|(v, (a, b))| v >= a && v <= b)
    }
}
