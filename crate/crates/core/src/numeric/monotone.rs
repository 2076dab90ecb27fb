use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// A tabulated, strictly monotone scalar function with piecewise-linear
/// interpolation. Evaluation outside the grid clamps to the end values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
    direction: Direction,
}

impl MonotoneCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Dimension(format!(
                "curve grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::InvalidArgument("curve needs at least two points".into()));
        }
        if grid.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("monotone curve"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("curve grid must be strictly increasing".into()));
        }
        let direction = if values[1] > values[0] {
            Direction::Increasing
        } else {
            Direction::Decreasing
        };
        let strict = values.windows(2).all(|w| match direction {
            Direction::Increasing => w[1] > w[0],
            Direction::Decreasing => w[1] < w[0],
        });
        if !strict {
            return Err(Error::InvalidArgument("curve values are not strictly monotone".into()));
        }
        Ok(Self { grid, values, direction })
    }

    /// Tabulate `f` on `grid`.
    pub fn from_fn<F: FnMut(f64) -> f64>(grid: Vec<f64>, f: F) -> Result<Self> {
        let values = grid.iter().copied().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.grid[0], *self.grid.last().unwrap())
    }

    /// `(min, max)` of the stored ordinates.
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = (self.values[0], *self.values.last().unwrap());
        (a.min(b), a.max(b))
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if x <= self.grid[0] {
            return self.values[0];
        }
        if x >= self.grid[n - 1] {
            return self.values[n - 1];
        }
        let k = self.grid.partition_point(|&g| g <= x).clamp(1, n - 1);
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        let t = (x - x0) / (x1 - x0);
        y0 + t * (y1 - y0)
    }

    /// Functional inverse on the stored range.
    pub fn invert(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(y >= lo && y <= hi) {
            return Err(Error::InvalidArgument(format!(
                "inverse requested at {y:e} outside curve range [{lo:e}, {hi:e}]"
            )));
        }
        let n = self.values.len();
        // index of first ordinate past y in the direction of travel
        let k = match self.direction {
            Direction::Increasing => self.values.partition_point(|&v| v < y),
            Direction::Decreasing => self.values.partition_point(|&v| v > y),
        };
        if k == 0 {
            return Ok(self.grid[0]);
        }
        if k >= n {
            return Ok(self.grid[n - 1]);
        }
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        let t = (y - y0) / (y1 - y0);
        Ok(x0 + t * (x1 - x0))
    }

    /// Swap the roles of abscissae and ordinates. The result is again a
    /// strictly monotone curve (reordered so its grid increases).
    pub fn inverse_curve(&self) -> Self {
        let mut pairs: Vec<(f64, f64)> =
            self.values.iter().copied().zip(self.grid.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (grid, values) = pairs.into_iter().unzip();
        Self::new(grid, values).expect("inverse of a strictly monotone curve is strictly monotone")
    }
}
