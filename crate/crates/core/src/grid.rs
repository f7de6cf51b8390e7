//! Uniform one-dimensional measurement grids.
//!
//! Every tensor in the pipeline lives on a uniform grid of detection points
//! `x_i = start + i·step`, `i = 0..count`. Grids are compared with a small
//! relative tolerance so that values read back from decimal files match the
//! grids they were generated on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{TomoError, TomoResult};

/// A uniform grid `x_i = start + i·step` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl Grid {
    /// Build a grid, validating `step > 0` and `count ≥ 1`.
    pub fn new(start: f64, step: f64, count: usize) -> TomoResult<Self> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
            return Err(TomoError::GridMismatch(format!(
                "grid step must be positive and finite, got start={start}, step={step}"
            )));
        }
        if count < 1 {
            return Err(TomoError::GridMismatch(
                "grid must have at least one point".into(),
            ));
        }
        Ok(Self { start, step, count })
    }

    /// Position of grid point `i`.
    pub fn position(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    /// All positions in order.
    pub fn positions(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.position(i)).collect()
    }

    /// Map a position back to its grid index, failing when it is farther than
    /// `1e-6·step` from every grid point.
    pub fn index_of(&self, x: f64) -> TomoResult<usize> {
        let raw = (x - self.start) / self.step;
        let i = raw.round();
        if (raw - i).abs() > 1e-6 || i < -0.5 || i as usize >= self.count {
            return Err(TomoError::GridMismatch(format!(
                "position {x} is not on the grid {self}"
            )));
        }
        Ok(i as usize)
    }

    /// True when two grids agree to within `1e-9` relative in start and step
    /// and have the same count.
    pub fn approx_eq(&self, other: &Grid) -> bool {
        let tol = 1e-9 * self.step.max(other.step);
        self.count == other.count
            && (self.start - other.start).abs() <= tol
            && (self.step - other.step).abs() <= tol
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.step, self.count)
    }
}

impl FromStr for Grid {
    type Err = TomoError;

    /// Parse the `start:step:count` form used on the command line.
    fn from_str(s: &str) -> TomoResult<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(TomoError::Parse {
                context: "grid specification".into(),
                detail: format!("expected start:step:count, got {s:?}"),
            });
        }
        let start: f64 = parts[0].parse().map_err(|e| TomoError::Parse {
            context: "grid start".into(),
            detail: format!("{e}"),
        })?;
        let step: f64 = parts[1].parse().map_err(|e| TomoError::Parse {
            context: "grid step".into(),
            detail: format!("{e}"),
        })?;
        let count: usize = parts[2].parse().map_err(|e| TomoError::Parse {
            context: "grid count".into(),
            detail: format!("{e}"),
        })?;
        Grid::new(start, step, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_and_index_round_trip() {
        let g = Grid::new(0.5, 0.25, 7).unwrap();
        for i in 0..g.count {
            assert_eq!(g.index_of(g.position(i)).unwrap(), i);
        }
    }

    #[test]
    fn off_grid_position_rejected() {
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        assert!(g.index_of(2.4).is_err());
        assert!(g.index_of(5.0).is_err());
        assert!(g.index_of(-1.0).is_err());
    }

    #[test]
    fn parse_round_trip() {
        let g: Grid = "0:1:30".parse().unwrap();
        assert_eq!(g, Grid::new(0.0, 1.0, 30).unwrap());
        let g2: Grid = "1.5:0.1:11".parse().unwrap();
        assert!((g2.start - 1.5).abs() < 1e-15);
        assert!((g2.step - 0.1).abs() < 1e-15);
        assert_eq!(g2.count, 11);
    }

    #[test]
    fn bad_specs_rejected() {
        assert!("0:1".parse::<Grid>().is_err());
        assert!("0:-1:5".parse::<Grid>().is_err());
        assert!("0:0:5".parse::<Grid>().is_err());
        assert!("a:b:c".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
    }
}
