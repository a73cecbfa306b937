//! Discrete geometry: periodic grids, scalar/vector/weight fields, balls
//! and annuli, weighted averages, and divergence-form operator assembly.
//!
//! The domain is the n-torus of side 1 (n = 1 or 2) with coordinates in
//! `[-1/2, 1/2)^n`. Cell centers are offset by `h/2`, so no center ever
//! coincides with the origin and power weights are evaluable everywhere.

mod balls;
mod coeffs;

pub use balls::{Ball, BallFamily, Region};
pub use coeffs::{meyers_kenig, meyers_kenig_witness, pullback_solution, CoefficientField, EllipticOperator};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A periodic grid on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    n: usize,
    cells_per_axis: usize,
}

impl PeriodicGrid {
    pub fn new(n: usize, cells_per_axis: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidArgument(format!("dimension must be 1 or 2, got {n}")));
        }
        if !cells_per_axis.is_power_of_two() || cells_per_axis < 4 {
            return Err(Error::InvalidArgument(format!(
                "cells per axis must be a power of two >= 4, got {cells_per_axis}"
            )));
        }
        Ok(PeriodicGrid { n, cells_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_axis as f64
    }

    pub fn total_cells(&self) -> usize {
        self.cells_per_axis.pow(self.n as u32)
    }

    /// Cell volume `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.n as i32)
    }

    /// Multi-index of a flat cell index (row-major; axis 0 fastest).
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.n {
            1 => [idx, 0],
            _ => [idx % self.cells_per_axis, idx / self.cells_per_axis],
        }
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        match self.n {
            1 => mi[0] % self.cells_per_axis,
            _ => (mi[0] % self.cells_per_axis) + self.cells_per_axis * (mi[1] % self.cells_per_axis),
        }
    }

    /// Center of a cell; second coordinate is 0 in dimension 1.
    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        let h = self.h();
        let coord = |i: usize| -0.5 + (i as f64 + 0.5) * h;
        match self.n {
            1 => [coord(mi[0]), 0.0],
            _ => [coord(mi[0]), coord(mi[1])],
        }
    }

    /// Flat index of the neighbor one step along `axis` (periodic).
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> usize {
        let mut mi = self.multi_index(idx);
        let m = self.cells_per_axis as isize;
        let c = (mi[axis] as isize + step).rem_euclid(m) as usize;
        mi[axis] = c;
        self.flat_index(mi)
    }

    /// Signed distance on the circle of circumference 1.
    pub fn wrap(d: f64) -> f64 {
        let mut d = d - d.round();
        if d == -0.5 {
            d = 0.5;
        }
        d
    }

    /// Torus distance between two points.
    pub fn torus_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let dx = Self::wrap(a[0] - b[0]);
        let dy = if self.n == 2 { Self::wrap(a[1] - b[1]) } else { 0.0 };
        (dx * dx + dy * dy).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// A complex scalar field sampled at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: PeriodicGrid,
    data: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Field { grid: *grid, data: vec![Complex64::ZERO; grid.total_cells()] }
    }

    pub fn constant(grid: &PeriodicGrid, c: Complex64) -> Self {
        Field { grid: *grid, data: vec![c; grid.total_cells()] }
    }

    pub fn ones(grid: &PeriodicGrid) -> Self {
        Self::constant(grid, Complex64::ONE)
    }

    pub fn from_data(grid: &PeriodicGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.total_cells() {
            return Err(Error::GridMismatch(format!(
                "field data length {} vs grid cells {}",
                data.len(),
                grid.total_cells()
            )));
        }
        Ok(Field { grid: *grid, data })
    }

    pub fn from_fn(grid: &PeriodicGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let data = (0..grid.total_cells())
            .map(|i| Complex64::new(f(grid.cell_center(i)), 0.0))
            .collect();
        Field { grid: *grid, data }
    }

    pub fn from_fn_complex(grid: &PeriodicGrid, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let data = (0..grid.total_cells()).map(|i| f(grid.cell_center(i))).collect();
        Field { grid: *grid, data }
    }

    /// Real Gaussian field from a seeded generator (Box-Muller).
    pub fn random_real(grid: &PeriodicGrid, rng: &mut impl Rng) -> Self {
        let data = (0..grid.total_cells())
            .map(|_| {
                let u: f64 = rng.gen::<f64>().max(1e-300);
                let v: f64 = rng.gen();
                Complex64::new((-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos(), 0.0)
            })
            .collect();
        Field { grid: *grid, data }
    }

    /// Random real field with the constant mode removed.
    pub fn random_mean_zero(grid: &PeriodicGrid, rng: &mut impl Rng) -> Self {
        let mut f = Self::random_real(grid, rng);
        f.project_mean_zero();
        f
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn mean(&self) -> Complex64 {
        self.data.iter().sum::<Complex64>() / self.data.len() as f64
    }

    /// Removes the constant mode; returns the removed mean.
    pub fn project_mean_zero(&mut self) -> Complex64 {
        let m = self.mean();
        for v in &mut self.data {
            *v -= m;
        }
        m
    }

    /// `<f, g> = sum f conj(g) h^n`
    pub fn inner(&self, other: &Field) -> Complex64 {
        let vol = self.grid.cell_volume();
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b.conj())
            .sum::<Complex64>()
            * vol
    }

    pub fn norm_l2(&self) -> f64 {
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// `L^p(w)` norm; `w = None` means Lebesgue measure, `p = inf` the sup.
    pub fn norm_lp(&self, p: f64, w: Option<&WeightField>) -> f64 {
        if p.is_infinite() {
            return self.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
        }
        let vol = self.grid.cell_volume();
        let s: f64 = match w {
            None => self.data.iter().map(|v| v.norm().powf(p)).sum(),
            Some(w) => self
                .data
                .iter()
                .zip(w.values())
                .map(|(v, &wv)| v.norm().powf(p) * wv)
                .sum(),
        };
        (s * vol).powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, c: Complex64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn scaled(&self, c: Complex64) -> Field {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    pub fn add_scaled(&mut self, c: Complex64, other: &Field) {
        for (v, o) in self.data.iter_mut().zip(&other.data) {
            *v += c * o;
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Field { grid: self.grid, data }
    }

    pub fn add(&self, other: &Field) -> Field {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Field { grid: self.grid, data }
    }

    /// Pointwise multiplication by a real field.
    pub fn mul_scalar_field(&self, s: &ScalarField) -> Field {
        let data = self.data.iter().zip(s.values()).map(|(a, &b)| a * b).collect();
        Field { grid: self.grid, data }
    }

    /// Forward-difference gradient, one component per axis.
    pub fn gradient(&self) -> VectorField {
        let h = self.grid.h();
        let comps = (0..self.grid.dim())
            .map(|axis| {
                let data = (0..self.grid.total_cells())
                    .map(|i| (self.data[self.grid.neighbor(i, axis, 1)] - self.data[i]) / h)
                    .collect();
                Field { grid: self.grid, data }
            })
            .collect();
        VectorField { components: comps }
    }

    /// Real part as a scalar field.
    pub fn to_scalar(&self) -> ScalarField {
        ScalarField { grid: self.grid, values: self.data.iter().map(|v| v.re).collect() }
    }
}

/// An n-component complex vector field (e.g. a discrete gradient).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub components: Vec<Field>,
}

impl VectorField {
    pub fn zeros(grid: &PeriodicGrid) -> Self {
        VectorField { components: (0..grid.dim()).map(|_| Field::zeros(grid)).collect() }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.components[0].grid()
    }

    /// Pointwise Euclidean modulus.
    pub fn modulus(&self) -> ScalarField {
        let grid = *self.grid();
        let mut values = vec![0.0; grid.total_cells()];
        for comp in &self.components {
            for (v, c) in values.iter_mut().zip(comp.data()) {
                *v += c.norm_sqr();
            }
        }
        for v in &mut values {
            *v = v.sqrt();
        }
        ScalarField { grid, values }
    }

    /// Backward-difference divergence, the exact negative adjoint of
    /// [`Field::gradient`]: `<grad f, v> = -<f, div v>`.
    pub fn divergence(&self) -> Field {
        let grid = *self.grid();
        let h = grid.h();
        let mut out = Field::zeros(&grid);
        for (axis, comp) in self.components.iter().enumerate() {
            for i in 0..grid.total_cells() {
                let prev = grid.neighbor(i, axis, -1);
                out.data[i] += (comp.data[i] - comp.data[prev]) / h;
            }
        }
        out
    }

    pub fn norm_l2(&self) -> f64 {
        self.components.iter().map(|c| c.norm_l2().powi(2)).sum::<f64>().sqrt()
    }

    /// `L^p(w)` norm of the pointwise modulus.
    pub fn norm_lp(&self, p: f64, w: Option<&WeightField>) -> f64 {
        self.modulus().to_field().norm_lp(p, w)
    }

    pub fn add_scaled(&mut self, c: Complex64, other: &VectorField) {
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.add_scaled(c, b);
        }
    }

    pub fn scale(&mut self, c: Complex64) {
        for comp in &mut self.components {
            comp.scale(c);
        }
    }
}

/// A real scalar field (BMO symbols, moduli, partitions of unity).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &PeriodicGrid) -> Self {
        ScalarField { grid: *grid, values: vec![0.0; grid.total_cells()] }
    }

    pub fn from_fn(grid: &PeriodicGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        ScalarField { grid: *grid, values: (0..grid.total_cells()).map(|i| f(grid.cell_center(i))).collect() }
    }

    pub fn from_values(grid: &PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_cells() {
            return Err(Error::GridMismatch("scalar field length mismatch".into()));
        }
        Ok(ScalarField { grid: *grid, values })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn to_field(&self) -> Field {
        Field {
            grid: self.grid,
            data: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A strictly positive weight sampled at cell centers, with an optional
/// power-law descriptor `w = |x|^alpha` kept alongside the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    grid: PeriodicGrid,
    values: Vec<f64>,
    power_alpha: Option<f64>,
}

impl WeightField {
    pub fn constant(grid: &PeriodicGrid, c: f64) -> Self {
        WeightField {
            grid: *grid,
            values: vec![c; grid.total_cells()],
            power_alpha: if c == 1.0 { Some(0.0) } else { None },
        }
    }

    /// `w(x) = |x|^alpha` (cell centers never sit at the origin).
    pub fn power(grid: &PeriodicGrid, alpha: f64) -> Self {
        let values = (0..grid.total_cells())
            .map(|i| {
                let x = grid.cell_center(i);
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                r.powf(alpha)
            })
            .collect();
        WeightField { grid: *grid, values, power_alpha: Some(alpha) }
    }

    pub fn from_fn(grid: &PeriodicGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        WeightField {
            grid: *grid,
            values: (0..grid.total_cells()).map(|i| f(grid.cell_center(i))).collect(),
            power_alpha: None,
        }
    }

    pub fn from_values(grid: &PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_cells() {
            return Err(Error::GridMismatch("weight field length mismatch".into()));
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("weights must be strictly positive and finite".into()));
        }
        Ok(WeightField { grid: *grid, values, power_alpha: None })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The exponent when this weight is a power weight `|x|^alpha`.
    pub fn power_descriptor(&self) -> Option<f64> {
        self.power_alpha
    }

    /// `w(E) = sum_{cells in E} w h^n`
    pub fn measure_of(&self, cells: &[usize]) -> f64 {
        cells.iter().map(|&c| self.values[c]).sum::<f64>() * self.grid.cell_volume()
    }

    /// Total mass of the torus.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

// ---------------------------------------------------------------------------
// Weighted averages with the annulus normalization convention
// ---------------------------------------------------------------------------

/// Weighted average over a ball or annulus. Annulus averages are
/// normalized by `w(2^{j+1} B)`, not by the annulus mass.
pub fn weighted_average(f: &Field, region: &Region, w: &WeightField) -> Result<Complex64> {
    if f.grid() != w.grid() {
        return Err(Error::GridMismatch("weighted_average: grids differ".into()));
    }
    let cells = region.cells(f.grid());
    if cells.is_empty() {
        return Err(Error::EmptyRegion(format!("{region:?}")));
    }
    let num: Complex64 = cells.iter().map(|&c| f.data()[c] * w.values()[c]).sum();
    let denom_cells = region.normalization_cells(f.grid());
    let denom: f64 = denom_cells.iter().map(|&c| w.values()[c]).sum();
    if denom <= 0.0 {
        return Err(Error::EmptyRegion("normalization set has zero mass".into()));
    }
    Ok(num / denom)
}

/// `(avg_region |f|^p dw)^{1/p}` with the same normalization convention.
pub fn weighted_lp_average(f: &Field, region: &Region, p: f64, w: &WeightField) -> Result<f64> {
    let cells = region.cells(f.grid());
    if cells.is_empty() {
        return Err(Error::EmptyRegion(format!("{region:?}")));
    }
    let denom_cells = region.normalization_cells(f.grid());
    let denom: f64 = denom_cells.iter().map(|&c| w.values()[c]).sum();
    if denom <= 0.0 {
        return Err(Error::EmptyRegion("normalization set has zero mass".into()));
    }
    if p.is_infinite() {
        return Ok(cells.iter().map(|&c| f.data()[c].norm()).fold(0.0, f64::max));
    }
    let num: f64 = cells.iter().map(|&c| f.data()[c].norm().powf(p) * w.values()[c]).sum();
    Ok((num / denom).powf(1.0 / p))
}

/// Two-exponent Poincare quotient
/// `(avg_B |f - f_{B,w}|^q dw)^{1/q} / (r(B) (avg_B |grad f|^p dw)^{1/p})`.
///
/// Returns 0 for gradient-free `f` by convention (the numerator vanishes
/// with the denominator).
pub fn poincare_ratio(f: &Field, ball: &Ball, q: f64, p: f64, w: &WeightField) -> Result<f64> {
    let region = Region::Ball(ball.clone());
    let mean = weighted_average(f, &region, w)?;
    let centered = {
        let mut c = f.clone();
        for v in c.data_mut() {
            *v -= mean;
        }
        c
    };
    let lhs = weighted_lp_average(&centered, &region, q, w)?;
    let grad_mod = f.gradient().modulus().to_field();
    let rhs = ball.radius * weighted_lp_average(&grad_mod, &region, p, w)?;
    if rhs == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs / rhs)
}

/// Single-exponent form of [`poincare_ratio`].
pub fn poincare_check(f: &Field, ball: &Ball, p: f64, w: &WeightField) -> Result<f64> {
    poincare_ratio(f, ball, p, p, w)
}

// ---------------------------------------------------------------------------
// Field dumps: `ellipfield v1 n N kind` + row-major full-precision values
// ---------------------------------------------------------------------------

fn write_header(out: &mut impl Write, grid: &PeriodicGrid, kind: &str) -> Result<()> {
    writeln!(out, "ellipfield v1 {} {} {}", grid.dim(), grid.cells_per_axis(), kind)?;
    Ok(())
}

fn parse_header(line: &str, expect_kind: &str) -> Result<PeriodicGrid> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "ellipfield" || parts[1] != "v1" {
        return Err(Error::Parse(format!("bad field header: {line:?}")));
    }
    if parts[4] != expect_kind {
        return Err(Error::Parse(format!("expected kind {expect_kind}, found {}", parts[4])));
    }
    let n: usize = parts[2].parse().map_err(|_| Error::Parse("bad dimension".into()))?;
    let cells: usize = parts[3].parse().map_err(|_| Error::Parse("bad cell count".into()))?;
    PeriodicGrid::new(n, cells)
}

fn parse_floats(line: &str, want: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
    let vals = vals.map_err(|e| Error::Parse(format!("bad value line: {e}")))?;
    if vals.len() != want {
        return Err(Error::Parse(format!("expected {want} values per line, got {}", vals.len())));
    }
    Ok(vals)
}

impl Field {
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_header(&mut out, &self.grid, "scalar")?;
        for v in &self.data {
            writeln!(out, "{:.17e} {:.17e}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty file".into()))??;
        let grid = parse_header(&header, "scalar")?;
        let mut data = Vec::with_capacity(grid.total_cells());
        for line in lines {
            let vals = parse_floats(&line?, 2)?;
            data.push(Complex64::new(vals[0], vals[1]));
        }
        Field::from_data(&grid, data)
    }
}

impl WeightField {
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_header(&mut out, &self.grid, "weight")?;
        for v in &self.values {
            writeln!(out, "{v:.17e}")?;
        }
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty file".into()))??;
        let grid = parse_header(&header, "weight")?;
        let mut values = Vec::with_capacity(grid.total_cells());
        for line in lines {
            values.push(parse_floats(&line?, 1)?[0]);
        }
        WeightField::from_values(&grid, values)
    }
}

impl VectorField {
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let grid = *self.grid();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_header(&mut out, &grid, "vector")?;
        for i in 0..grid.total_cells() {
            let mut parts = Vec::with_capacity(2 * grid.dim());
            for comp in &self.components {
                parts.push(format!("{:.17e} {:.17e}", comp.data()[i].re, comp.data()[i].im));
            }
            writeln!(out, "{}", parts.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty file".into()))??;
        let grid = parse_header(&header, "vector")?;
        let mut comps: Vec<Vec<Complex64>> = vec![Vec::with_capacity(grid.total_cells()); grid.dim()];
        for line in lines {
            let vals = parse_floats(&line?, 2 * grid.dim())?;
            for (d, chunk) in vals.chunks(2).enumerate() {
                comps[d].push(Complex64::new(chunk[0], chunk[1]));
            }
        }
        let components: Result<Vec<Field>> =
            comps.into_iter().map(|data| Field::from_data(&grid, data)).collect();
        Ok(VectorField { components: components? })
    }
}
