//! Balls, annuli and ball families on the periodic grid.
//!
//! Annuli follow the convention `C_1(B) = 4B`, `C_j(B) = 2^{j+1}B \ 2^j B`
//! for `j >= 2`, truncated by the torus. The admissible annulus indices of
//! a ball of radius `r` are `j <= log2(1/(4r))`, so `2^{j+1}B` always fits.

use serde::{Deserialize, Serialize};

use super::{PeriodicGrid, WeightField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Ball {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn dilate(&self, lambda: f64) -> Ball {
        Ball { center: self.center, radius: self.radius * lambda }
    }

    /// Flat indices of the cells whose centers lie in the (torus) ball.
    pub fn cells(&self, grid: &PeriodicGrid) -> Vec<usize> {
        (0..grid.total_cells())
            .filter(|&i| grid.torus_distance(grid.cell_center(i), self.center) <= self.radius)
            .collect()
    }

    pub fn cell_count(&self, grid: &PeriodicGrid) -> usize {
        self.cells(grid).len()
    }

    /// Largest admissible annulus index on the unit torus.
    pub fn max_annulus_index(&self) -> u32 {
        if self.radius <= 0.0 {
            return 0;
        }
        let cap = (1.0 / (4.0 * self.radius)).log2().floor();
        if cap < 1.0 {
            1
        } else {
            cap as u32
        }
    }

    /// Cells of `C_j(B)`.
    pub fn annulus_cells(&self, j: u32, grid: &PeriodicGrid) -> Vec<usize> {
        if j <= 1 {
            return self.dilate(4.0).cells(grid);
        }
        let outer = self.radius * 2f64.powi(j as i32 + 1);
        let inner = self.radius * 2f64.powi(j as i32);
        (0..grid.total_cells())
            .filter(|&i| {
                let d = grid.torus_distance(grid.cell_center(i), self.center);
                d <= outer && d > inner
            })
            .collect()
    }

    /// `w(B)` with cell quadrature.
    pub fn weighted_measure(&self, w: &WeightField) -> f64 {
        w.measure_of(&self.cells(w.grid()))
    }

    pub fn check_resolvable(&self, grid: &PeriodicGrid) -> Result<()> {
        if self.radius < grid.h() {
            return Err(Error::DegenerateBall { radius: self.radius, h: grid.h() });
        }
        Ok(())
    }
}

/// A ball or one of its annuli; carries the normalization convention for
/// weighted averages (annuli normalize by the enlarged ball `2^{j+1}B`).
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ball(Ball),
    Annulus(Ball, u32),
}

impl Region {
    pub fn cells(&self, grid: &PeriodicGrid) -> Vec<usize> {
        match self {
            Region::Ball(b) => b.cells(grid),
            Region::Annulus(b, j) => b.annulus_cells(*j, grid),
        }
    }

    /// Cells of the set whose weighted mass normalizes the average.
    pub fn normalization_cells(&self, grid: &PeriodicGrid) -> Vec<usize> {
        match self {
            Region::Ball(b) => b.cells(grid),
            Region::Annulus(b, j) => {
                let factor = 2f64.powi(*j.max(&1) as i32 + 1);
                b.dilate(factor).cells(grid)
            }
        }
    }
}

/// A finite family of balls over one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BallFamily {
    grid: PeriodicGrid,
    balls: Vec<Ball>,
}

impl BallFamily {
    pub fn new(grid: &PeriodicGrid, balls: Vec<Ball>) -> Self {
        BallFamily { grid: *grid, balls }
    }

    /// The default family: dyadic radii `2^{-k}` for `k = 1..log2(N/4)`,
    /// centers on a coarsened lattice, plus origin-centered balls at every
    /// radius (power-weight singularities live at the origin).
    pub fn standard(grid: &PeriodicGrid) -> Self {
        let n_axis = grid.cells_per_axis();
        let mut balls = Vec::new();
        let k_max = ((n_axis / 4) as f64).log2().floor() as i32;
        let stride = (n_axis / 8).max(1);
        let mut radii = Vec::new();
        for k in 1..=k_max.max(1) {
            radii.push(2f64.powi(-k));
        }
        for &r in &radii {
            balls.push(Ball::new([0.0, 0.0], r));
            match grid.dim() {
                1 => {
                    for i in (0..n_axis).step_by(stride) {
                        let c = grid.cell_center(i);
                        balls.push(Ball::new(c, r));
                    }
                }
                _ => {
                    for i in (0..n_axis).step_by(stride) {
                        for j in (0..n_axis).step_by(stride) {
                            let c = grid.cell_center(grid.flat_index([i, j]));
                            balls.push(Ball::new(c, r));
                        }
                    }
                }
            }
        }
        BallFamily { grid: *grid, balls }
    }

    /// Origin-centered balls only.
    pub fn origin_centered(grid: &PeriodicGrid, radii: &[f64]) -> Self {
        BallFamily {
            grid: *grid,
            balls: radii.iter().map(|&r| Ball::new([0.0, 0.0], r)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Ball> {
        self.balls.iter()
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn extend(&mut self, other: BallFamily) {
        assert_eq!(self.grid, other.grid, "ball families live on one grid");
        self.balls.extend(other.balls);
    }

    pub fn check_grid(&self, grid: &PeriodicGrid) -> Result<()> {
        if &self.grid != grid {
            return Err(Error::GridMismatch("ball family grid differs from field grid".into()));
        }
        for b in &self.balls {
            b.check_resolvable(grid)?;
        }
        Ok(())
    }
}
