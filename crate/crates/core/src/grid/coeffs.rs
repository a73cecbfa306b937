//! Coefficient fields and divergence-form operator assembly.
//!
//! The operator is assembled from the sesquilinear form
//! `a(f, g) = sum_cells (A(c) Gf(c)) . conj(Gg(c)) h^n` with `G` the
//! forward-difference gradient. This keeps three structural identities
//! exact in floating point: `L 1 = 0`, `<grad f, v> = -<f, div v>`, and
//! self-adjointness plus positive semidefiniteness for Hermitian `A`.

use num_complex::Complex64;
use rand::Rng;

use super::{Field, PeriodicGrid, VectorField};
use crate::error::{Error, Result};

/// Per-cell `n x n` complex coefficient matrix with ellipticity data.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    grid: PeriodicGrid,
    /// row-major `n^2` entries per cell
    entries: Vec<Complex64>,
    lambda: f64,
    lambda_max: f64,
    theta: f64,
}

impl CoefficientField {
    pub fn identity(grid: &PeriodicGrid) -> Self {
        Self::constant(grid, &identity_matrix(grid.dim()))
    }

    pub fn constant(grid: &PeriodicGrid, matrix: &[Complex64]) -> Self {
        let n = grid.dim();
        assert_eq!(matrix.len(), n * n);
        let mut entries = Vec::with_capacity(grid.total_cells() * n * n);
        for _ in 0..grid.total_cells() {
            entries.extend_from_slice(matrix);
        }
        let mut cf = CoefficientField { grid: *grid, entries, lambda: 0.0, lambda_max: 0.0, theta: 0.0 };
        cf.recompute_bounds();
        cf
    }

    pub fn from_fn(grid: &PeriodicGrid, f: impl Fn([f64; 2]) -> Vec<Complex64>) -> Self {
        let n = grid.dim();
        let mut entries = Vec::with_capacity(grid.total_cells() * n * n);
        for i in 0..grid.total_cells() {
            let m = f(grid.cell_center(i));
            assert_eq!(m.len(), n * n);
            entries.extend_from_slice(&m);
        }
        let mut cf = CoefficientField { grid: *grid, entries, lambda: 0.0, lambda_max: 0.0, theta: 0.0 };
        cf.recompute_bounds();
        cf
    }

    pub fn from_entries(grid: &PeriodicGrid, entries: Vec<Complex64>) -> Result<Self> {
        let n = grid.dim();
        if entries.len() != grid.total_cells() * n * n {
            return Err(Error::GridMismatch("coefficient entry count mismatch".into()));
        }
        let mut cf = CoefficientField { grid: *grid, entries, lambda: 0.0, lambda_max: 0.0, theta: 0.0 };
        cf.recompute_bounds();
        Ok(cf)
    }

    /// Random real symmetric coefficients with per-cell eigenvalues drawn
    /// from `[lambda, lambda_max]`.
    pub fn random_symmetric(grid: &PeriodicGrid, lambda: f64, lambda_max: f64, rng: &mut impl Rng) -> Self {
        let n = grid.dim();
        let mut entries = Vec::with_capacity(grid.total_cells() * n * n);
        for _ in 0..grid.total_cells() {
            if n == 1 {
                let e: f64 = rng.gen_range(lambda..=lambda_max);
                entries.push(Complex64::new(e, 0.0));
            } else {
                let e1: f64 = rng.gen_range(lambda..=lambda_max);
                let e2: f64 = rng.gen_range(lambda..=lambda_max);
                let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                let (c, s) = (t.cos(), t.sin());
                let a11 = e1 * c * c + e2 * s * s;
                let a22 = e1 * s * s + e2 * c * c;
                let a12 = (e1 - e2) * c * s;
                entries.extend_from_slice(&[
                    Complex64::new(a11, 0.0),
                    Complex64::new(a12, 0.0),
                    Complex64::new(a12, 0.0),
                    Complex64::new(a22, 0.0),
                ]);
            }
        }
        let mut cf = CoefficientField { grid: *grid, entries, lambda: 0.0, lambda_max: 0.0, theta: 0.0 };
        cf.recompute_bounds();
        cf
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// `A(cell)` as a row-major slice of `n^2` entries.
    pub fn matrix_at(&self, cell: usize) -> &[Complex64] {
        let nn = self.grid.dim() * self.grid.dim();
        &self.entries[cell * nn..(cell + 1) * nn]
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Accretivity angle estimated from the per-cell numerical ranges.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_hermitian(&self) -> bool {
        let n = self.grid.dim();
        for c in 0..self.grid.total_cells() {
            let m = self.matrix_at(c);
            for i in 0..n {
                for j in 0..n {
                    if (m[i * n + j] - m[j * n + i].conj()).norm() > 1e-14 {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn is_real_symmetric(&self) -> bool {
        self.entries.iter().all(|e| e.im == 0.0) && self.is_hermitian()
    }

    fn recompute_bounds(&mut self) {
        let n = self.grid.dim();
        let mut lam = f64::INFINITY;
        let mut big = 0.0f64;
        let mut theta = 0.0f64;
        for c in 0..self.grid.total_cells() {
            let m = self.matrix_at(c);
            let (lo, hi) = hermitian_part_bounds(m, n);
            lam = lam.min(lo);
            big = big.max(operator_norm(m, n));
            theta = theta.max(numerical_range_angle(m, n));
            let _ = hi;
        }
        self.lambda = lam;
        self.lambda_max = big;
        self.theta = theta;
    }

    /// Checks the accretivity bounds cellwise, on the Hermitian-part
    /// eigenvalues and on a sampled `(xi, zeta)` set.
    pub fn validate(&self, lambda: f64, lambda_max: f64) -> Result<()> {
        let n = self.grid.dim();
        let samples = xi_samples(n);
        for c in 0..self.grid.total_cells() {
            let m = self.matrix_at(c);
            let (lo, _) = hermitian_part_bounds(m, n);
            if lo < lambda - 1e-12 {
                return Err(Error::Ellipticity { cell: c, value: lo, lambda });
            }
            if operator_norm(m, n) > lambda_max + 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "cell {c}: |A| = {} exceeds Lambda = {lambda_max}",
                    operator_norm(m, n)
                )));
            }
            for xi in &samples {
                let q = quad_form(m, xi, xi, n);
                if q.re < lambda * norm_sqr_vec(xi, n) - 1e-10 {
                    return Err(Error::Ellipticity { cell: c, value: q.re, lambda });
                }
                for zeta in &samples {
                    let b = quad_form(m, xi, zeta, n).norm();
                    let cap = lambda_max * norm_sqr_vec(xi, n).sqrt() * norm_sqr_vec(zeta, n).sqrt();
                    if b > cap + 1e-9 {
                        return Err(Error::InvalidArgument(format!(
                            "cell {c}: |A xi.zeta| = {b} exceeds Lambda |xi||zeta| = {cap}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn identity_matrix(n: usize) -> Vec<Complex64> {
    let mut m = vec![Complex64::ZERO; n * n];
    for i in 0..n {
        m[i * n + i] = Complex64::ONE;
    }
    m
}

fn quad_form(m: &[Complex64], xi: &[Complex64; 2], zeta: &[Complex64; 2], n: usize) -> Complex64 {
    // A xi . conj(zeta)
    let mut out = Complex64::ZERO;
    for i in 0..n {
        let mut row = Complex64::ZERO;
        for j in 0..n {
            row += m[i * n + j] * xi[j];
        }
        out += row * zeta[i].conj();
    }
    out
}

fn norm_sqr_vec(v: &[Complex64; 2], n: usize) -> f64 {
    v[..n].iter().map(|z| z.norm_sqr()).sum()
}

fn xi_samples(n: usize) -> Vec<[Complex64; 2]> {
    let i = Complex64::I;
    let one = Complex64::ONE;
    let zero = Complex64::ZERO;
    if n == 1 {
        vec![[one, zero], [i, zero], [(one + i) * 0.7071067811865476, zero]]
    } else {
        vec![
            [one, zero],
            [zero, one],
            [one * 0.7071067811865476, one * 0.7071067811865476],
            [one * 0.7071067811865476, -one * 0.7071067811865476],
            [one * 0.7071067811865476, i * 0.7071067811865476],
            [i * 0.6, one * 0.8],
        ]
    }
}

/// Extreme eigenvalues of the Hermitian part `(A + A*)/2`.
fn hermitian_part_bounds(m: &[Complex64], n: usize) -> (f64, f64) {
    if n == 1 {
        (m[0].re, m[0].re)
    } else {
        let h11 = m[0].re;
        let h22 = m[3].re;
        let h12 = (m[1] + m[2].conj()) * 0.5;
        let tr = h11 + h22;
        let disc = ((h11 - h22).powi(2) + 4.0 * h12.norm_sqr()).sqrt();
        (0.5 * (tr - disc), 0.5 * (tr + disc))
    }
}

/// Spectral norm of the cell matrix.
fn operator_norm(m: &[Complex64], n: usize) -> f64 {
    if n == 1 {
        m[0].norm()
    } else {
        // sqrt of the largest eigenvalue of A* A (2x2 Hermitian PSD)
        let a = m[0];
        let b = m[1];
        let c = m[2];
        let d = m[3];
        let g11 = a.norm_sqr() + c.norm_sqr();
        let g22 = b.norm_sqr() + d.norm_sqr();
        let g12 = a.conj() * b + c.conj() * d;
        let tr = g11 + g22;
        let disc = ((g11 - g22).powi(2) + 4.0 * g12.norm_sqr()).sqrt();
        (0.5 * (tr + disc)).max(0.0).sqrt()
    }
}

/// `sup |arg (A xi . conj(xi))|` over sampled directions.
fn numerical_range_angle(m: &[Complex64], n: usize) -> f64 {
    let mut theta = 0.0f64;
    for xi in xi_samples(n) {
        let q = quad_form(m, &xi, &xi, n);
        if q.norm() > 1e-300 {
            theta = theta.max(q.im.atan2(q.re).abs());
        }
    }
    theta
}

// ---------------------------------------------------------------------------
// Operator
// ---------------------------------------------------------------------------

/// The assembled divergence-form operator `L f = -div_h (A grad_h f)`.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    coeffs: CoefficientField,
}

impl EllipticOperator {
    /// Validates the coefficient invariants against the field's own bounds
    /// and assembles the operator.
    pub fn assemble(coeffs: CoefficientField) -> Result<Self> {
        let lambda = coeffs.lambda();
        if lambda <= 0.0 {
            return Err(Error::Ellipticity { cell: 0, value: lambda, lambda: 0.0 });
        }
        coeffs.validate(lambda, coeffs.lambda_max())?;
        Ok(EllipticOperator { coeffs })
    }

    pub fn laplacian(grid: &PeriodicGrid) -> Self {
        EllipticOperator { coeffs: CoefficientField::identity(grid) }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.coeffs.grid()
    }

    pub fn coeffs(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn lambda(&self) -> f64 {
        self.coeffs.lambda()
    }

    pub fn lambda_max(&self) -> f64 {
        self.coeffs.lambda_max()
    }

    /// Accretivity angle of the assembled form.
    pub fn theta(&self) -> f64 {
        self.coeffs.theta()
    }

    pub fn is_real_symmetric(&self) -> bool {
        self.coeffs.is_real_symmetric()
    }

    /// Upper bound for the spectrum: `|L| <= 4 n Lambda / h^2`.
    pub fn spectral_upper_bound(&self) -> f64 {
        let grid = self.grid();
        4.0 * grid.dim() as f64 * self.lambda_max() / (grid.h() * grid.h())
    }

    /// `A grad_h f`, cellwise.
    pub fn flux(&self, f: &Field) -> VectorField {
        let grid = *self.grid();
        let n = grid.dim();
        let grad = f.gradient();
        let mut out = VectorField::zeros(&grid);
        for c in 0..grid.total_cells() {
            let m = self.coeffs.matrix_at(c);
            for i in 0..n {
                let mut v = Complex64::ZERO;
                for j in 0..n {
                    v += m[i * n + j] * grad.components[j].data()[c];
                }
                out.components[i].data_mut()[c] = v;
            }
        }
        out
    }

    pub fn apply(&self, f: &Field) -> Field {
        let flux = self.flux(f);
        let mut out = flux.divergence();
        out.scale(Complex64::new(-1.0, 0.0));
        out
    }

    /// `<A grad f, grad f> = <L f, f>`
    pub fn energy(&self, f: &Field) -> Complex64 {
        let grad = f.gradient();
        let flux = self.flux(f);
        flux.components
            .iter()
            .zip(&grad.components)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    /// Dense real matrix representation (real-symmetric coefficients only;
    /// intended for oracle tests and the dense spectral path).
    pub fn dense_matrix(&self) -> Result<nalgebra::DMatrix<f64>> {
        if !self.is_real_symmetric() {
            return Err(Error::InvalidArgument("dense_matrix requires real symmetric coefficients".into()));
        }
        let grid = self.grid();
        let m = grid.total_cells();
        let mut mat = nalgebra::DMatrix::zeros(m, m);
        let mut basis = Field::zeros(grid);
        for j in 0..m {
            basis.data_mut()[j] = Complex64::ONE;
            let col = self.apply(&basis);
            for i in 0..m {
                mat[(i, j)] = col.data()[i].re;
            }
            basis.data_mut()[j] = Complex64::ZERO;
        }
        Ok(mat)
    }
}

// ---------------------------------------------------------------------------
// The Meyers-Kenig family
// ---------------------------------------------------------------------------

/// C^2 step: 1 for `r <= r_in`, 0 for `r >= r_out`, quintic in between.
pub(crate) fn smooth_cutoff(r: f64, r_in: f64, r_out: f64) -> f64 {
    if r <= r_in {
        1.0
    } else if r >= r_out {
        0.0
    } else {
        let t = (r - r_in) / (r_out - r_in);
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

const MK_CUTOFF_INNER: f64 = 3.0 / 16.0;
const MK_CUTOFF_OUTER: f64 = 1.0 / 4.0;

/// Coefficients of the 2-D operator pulled back from the Laplacian by the
/// quasi-conformal map `phi(x) = |x|^beta x` with `beta = -2/q`.
///
/// Writing the change of variables out gives
/// `A(x) = |det Dphi| (Dphi)^{-1} (Dphi)^{-T}`, which collapses to
/// `A(x) = (1+beta) I + (1/(1+beta) - (1+beta)) xhat xhat^T`:
/// tangential eigenvalue `1+beta`, radial eigenvalue `1/(1+beta)`,
/// independent of `|x|`. The field is blended to the identity outside
/// radius 1/4 so it is torus-periodic, and `|x|` is clamped at `h/2` on
/// the cells nearest the origin.
pub fn meyers_kenig(q: f64, grid: &PeriodicGrid) -> Result<CoefficientField> {
    if q <= 2.0 {
        return Err(Error::InvalidArgument(format!("Meyers-Kenig exponent must satisfy q > 2, got {q}")));
    }
    if grid.dim() != 2 {
        return Err(Error::InvalidArgument("the Meyers-Kenig field is two-dimensional".into()));
    }
    let beta = -2.0 / q;
    let tangential = 1.0 + beta;
    let radial = 1.0 / (1.0 + beta);
    let h = grid.h();
    Ok(CoefficientField::from_fn(grid, |x| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt().max(h / 2.0);
        let (ux, uy) = (x[0] / r, x[1] / r);
        let chi = smooth_cutoff(r, MK_CUTOFF_INNER, MK_CUTOFF_OUTER);
        let gap = radial - tangential;
        // chi * A_mk + (1 - chi) * I
        let a11 = chi * (tangential + gap * ux * ux) + (1.0 - chi);
        let a22 = chi * (tangential + gap * uy * uy) + (1.0 - chi);
        let a12 = chi * gap * ux * uy;
        vec![
            Complex64::new(a11, 0.0),
            Complex64::new(a12, 0.0),
            Complex64::new(a12, 0.0),
            Complex64::new(a22, 0.0),
        ]
    }))
}

/// First component of the pullback map, `u(x) = |x|^beta x_1`, with the
/// `h/2` clamp at the origin cells. A weak solution of the Meyers-Kenig
/// operator wherever the cutoff has not kicked in.
pub fn pullback_solution(q: f64, grid: &PeriodicGrid) -> Result<Field> {
    if q <= 2.0 {
        return Err(Error::InvalidArgument("q > 2 required".into()));
    }
    let beta = -2.0 / q;
    let h = grid.h();
    Ok(Field::from_fn(grid, |x| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt().max(h / 2.0);
        r.powf(beta) * x[0]
    }))
}

/// The unboundedness witness `v = eta . phi_1`: the pullback component
/// under a compactly supported cutoff equal to 1 near the origin. Its
/// gradient behaves like `|x|^beta` near 0.
pub fn meyers_kenig_witness(q: f64, grid: &PeriodicGrid) -> Result<Field> {
    if q <= 2.0 {
        return Err(Error::InvalidArgument("q > 2 required".into()));
    }
    let beta = -2.0 / q;
    let h = grid.h();
    Ok(Field::from_fn(grid, |x| {
        let r_true = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let r = r_true.max(h / 2.0);
        let eta = smooth_cutoff(r_true, 1.0 / 8.0, 1.0 / 4.0);
        eta * r.powf(beta) * x[0]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;

    fn fourier_mode(grid: &PeriodicGrid, k: [i64; 2]) -> Field {
        Field::from_fn_complex(grid, |x| {
            let phase = std::f64::consts::TAU * (k[0] as f64 * x[0] + k[1] as f64 * x[1]);
            Complex64::new(phase.cos(), phase.sin())
        })
    }

    fn laplace_symbol(grid: &PeriodicGrid, k: [i64; 2]) -> f64 {
        let h = grid.h();
        let mut s = 0.0;
        for d in 0..grid.dim() {
            let t = (std::f64::consts::PI * k[d] as f64 * h).sin();
            s += 4.0 * t * t / (h * h);
        }
        s
    }

    #[test]
    fn identity_coefficients_give_discrete_laplacian_symbol() {
        let grid = PeriodicGrid::new(2, 16).unwrap();
        let op = EllipticOperator::laplacian(&grid);
        for k in [[1i64, 0], [0, 3], [2, 5], [7, 7]] {
            let mode = fourier_mode(&grid, k);
            let out = op.apply(&mode);
            let sym = laplace_symbol(&grid, k);
            let err = out.sub(&mode.scaled(Complex64::new(sym, 0.0))).norm_l2() / mode.norm_l2() / sym.max(1.0);
            assert!(err < 1e-12, "symbol mismatch at k={k:?}: {err}");
        }
    }

    #[test]
    fn operator_annihilates_constants() {
        let grid = PeriodicGrid::new(2, 16).unwrap();
        let mut rng = crate::testutil::rng(2);
        let coeffs = CoefficientField::random_symmetric(&grid, 0.5, 2.0, &mut rng);
        let op = EllipticOperator::assemble(coeffs).unwrap();
        let one = Field::ones(&grid);
        assert!(op.apply(&one).max_abs() < 1e-13);
    }

    #[test]
    fn random_symmetric_operator_is_selfadjoint_psd() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let mut rng = crate::testutil::rng(4);
        let coeffs = CoefficientField::random_symmetric(&grid, 0.5, 2.0, &mut rng);
        assert!(coeffs.is_real_symmetric());
        let op = EllipticOperator::assemble(coeffs).unwrap();
        let mat = op.dense_matrix().unwrap();
        let sym_err = (&mat - mat.transpose()).abs().max();
        assert!(sym_err < 1e-12, "asymmetry {sym_err}");
        let eig = mat.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > -1e-9, "negative eigenvalue {min}");
    }

    #[test]
    fn ellipticity_violation_reports_cell() {
        let grid = PeriodicGrid::new(2, 4).unwrap();
        let mut entries = CoefficientField::identity(&grid).entries().to_vec();
        // break cell 5
        entries[5 * 4] = Complex64::new(-0.5, 0.0);
        let coeffs = CoefficientField::from_entries(&grid, entries).unwrap();
        match EllipticOperator::assemble(coeffs) {
            Err(Error::Ellipticity { cell, .. }) => assert_eq!(cell, 5),
            other => panic!("expected ellipticity error, got {other:?}"),
        }
    }

    #[test]
    fn meyers_kenig_matches_numeric_pullback() {
        // Validate the closed form A = |det Dphi| (Dphi)^{-1} (Dphi)^{-T}
        // against a finite-difference Jacobian of phi(x) = |x|^beta x.
        let q = 4.0;
        let beta = -2.0 / q;
        let phi = |x: [f64; 2]| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            [r.powf(beta) * x[0], r.powf(beta) * x[1]]
        };
        let grid = PeriodicGrid::new(2, 64).unwrap();
        let coeffs = meyers_kenig(q, &grid).unwrap();
        let eps = 1e-7;
        for &cell in &[100usize, 700, 1500] {
            let x = grid.cell_center(cell);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if r > MK_CUTOFF_INNER || r < 4.0 * grid.h() {
                continue; // compare only where the pure field is in force
            }
            let mut d = [[0.0f64; 2]; 2];
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += eps;
                xm[j] -= eps;
                let (fp, fm) = (phi(xp), phi(xm));
                for i in 0..2 {
                    d[i][j] = (fp[i] - fm[i]) / (2.0 * eps);
                }
            }
            let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
            let inv = [
                [d[1][1] / det, -d[0][1] / det],
                [-d[1][0] / det, d[0][0] / det],
            ];
            // |det| inv * inv^T
            let mut a = [[0.0f64; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        a[i][j] += det.abs() * inv[i][k] * inv[j][k];
                    }
                }
            }
            let m = coeffs.matrix_at(cell);
            for i in 0..2 {
                for j in 0..2 {
                    let got = m[i * 2 + j].re;
                    assert!(
                        (got - a[i][j]).abs() < 1e-5,
                        "cell {cell} entry ({i},{j}): closed form {got} vs numeric {}",
                        a[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn meyers_kenig_ellipticity_and_identity_limit() {
        let grid = PeriodicGrid::new(2, 32).unwrap();
        for q in [2.5, 4.0, 8.0] {
            let coeffs = meyers_kenig(q, &grid).unwrap();
            let beta: f64 = -2.0 / q;
            let lam = 1.0 + beta;
            assert!(
                coeffs.lambda() >= lam - 1e-12,
                "q={q}: lambda {} below 1+beta={lam}",
                coeffs.lambda()
            );
            assert!(coeffs.lambda_max() <= 1.0 / lam + 1e-12);
            assert!(coeffs.is_real_symmetric());
        }
        // A tends to the identity as q grows (beta -> 0), inside the cutoff.
        let near_id = meyers_kenig(2000.0, &grid).unwrap();
        let cell = grid.flat_index([18, 16]); // |x| small, inside cutoff
        let m = near_id.matrix_at(cell);
        assert!((m[0].re - 1.0).abs() < 2e-3 && (m[3].re - 1.0).abs() < 2e-3 && m[1].norm() < 2e-3);
        // ... and degenerates toward q = 2.
        let tight = meyers_kenig(2.05, &grid).unwrap();
        assert!(tight.lambda() < 0.05);
    }

    #[test]
    fn meyers_kenig_rejects_small_q() {
        let grid = PeriodicGrid::new(2, 16).unwrap();
        assert!(meyers_kenig(2.0, &grid).is_err());
        assert!(meyers_kenig(1.0, &grid).is_err());
    }

    #[test]
    fn pullback_solution_residual_shrinks_under_refinement() {
        // u = |x|^beta x_1 is L-harmonic away from the origin; the discrete
        // residual on a fixed annulus must shrink under refinement.
        let q = 4.0;
        let mut residuals = Vec::new();
        for n_axis in [64usize, 128, 256] {
            let grid = PeriodicGrid::new(2, n_axis).unwrap();
            let op = EllipticOperator::assemble(meyers_kenig(q, &grid).unwrap()).unwrap();
            let u = pullback_solution(q, &grid).unwrap();
            let lu = op.apply(&u);
            let mut worst = 0.0f64;
            for c in 0..grid.total_cells() {
                let x = grid.cell_center(c);
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                if r > 1.0 / 16.0 && r < 1.0 / 8.0 {
                    worst = worst.max(lu.data()[c].norm());
                }
            }
            residuals.push(worst);
        }
        assert!(
            residuals[1] < 0.7 * residuals[0] && residuals[2] < 0.7 * residuals[1],
            "residuals do not shrink: {residuals:?}"
        );
    }

    #[test]
    fn witness_gradient_grows_like_the_singular_profile() {
        let q = 4.0;
        let beta = -0.5;
        let grid = PeriodicGrid::new(2, 128).unwrap();
        let v = meyers_kenig_witness(q, &grid).unwrap();
        let grad = v.gradient().modulus();
        // |grad v| ~ r^beta on a sampled radius ladder near 0
        let mut prev: Option<(f64, f64)> = None;
        for &r_target in &[0.02f64, 0.04, 0.08] {
            let mut best = (f64::INFINITY, 0.0);
            for c in 0..grid.total_cells() {
                let x = grid.cell_center(c);
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                if (r - r_target).abs() < best.0 && x[0].abs() > r * 0.7 {
                    best = ((r - r_target).abs(), grad.values()[c]);
                }
            }
            if let Some((rp, gp)) = prev {
                let measured = (best.1 / gp).ln() / (r_target / rp).ln();
                assert!(
                    (measured - beta).abs() < 0.25,
                    "local slope {measured} vs beta {beta}"
                );
            }
            prev = Some((r_target, best.1));
        }
    }
}
