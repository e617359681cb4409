use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::Error;

pub const MIN_CELLS: usize = 8;

/// Uniform cell-centered grid on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        let grid = Self { x_min, x_max, n_cells };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid spanning `center ± half_width`.
    pub fn centered(center: f64, half_width: f64, n_cells: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, n_cells)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(invalid("grid", format!("need x_max > x_min, got [{}, {}]", self.x_min, self.x_max)));
        }
        if self.n_cells < MIN_CELLS {
            return Err(Error::GridTooSmall {
                cells: self.n_cells,
                min: MIN_CELLS,
            });
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.spacing()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Cell containing `x`, if it lies on the grid.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.x_min && x < self.x_max) {
            return None;
        }
        let i = ((x - self.x_min) / self.spacing()) as usize;
        Some(i.min(self.n_cells - 1))
    }
}
