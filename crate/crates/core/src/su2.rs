//! Coordinates on SU(2), Haar sampling, and the control vector fields.
//!
//! Two coordinate systems are used. The quaternion form writes
//! `U = i(x1 σ1 + x2 σ2 + x3 σ3) + x4 1`, i.e.
//!
//! ```text
//! U = [  x4 + i x3   x2 + i x1 ]
//!     [ -x2 + i x1   x4 - i x3 ]
//! ```
//!
//! and the angular form is
//!
//! ```text
//! U = [  cos χ e^{-i(φ/2+ψ)}   sin χ e^{-i(φ/2-ψ)} ]
//!     [ -sin χ e^{ i(φ/2-ψ)}   cos χ e^{ i(φ/2+ψ)} ]
//! ```
//!
//! with `χ ∈ [0, π/2]`. The pair `(φ, ψ)` lives on a twisted torus:
//! `u(χ, φ + 2π, ψ) = u(χ, φ, ψ + π)` and `u(χ, φ, ψ + 2π) = u(χ, φ, ψ)`.
//! Angles returned by [`quaternion_to_angles`] lie in the canonical square
//! `φ ∈ [0, 2π)`, `ψ ∈ [0, 2π)`. On the boundary circles one phase is
//! undefined: at `χ = 0` we set `ψ = 0` and `φ ∈ [0, 4π)` carries the phase;
//! at `χ = π/2` we set `φ = 0`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accepted deviation of `|q|` from one before a state is rejected.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Below this, `sin χ` or `cos χ` is treated as exactly zero.
const BOUNDARY_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuaternionState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl QuaternionState {
    /// Checked constructor; the components must have unit norm.
    pub fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Result<Self> {
        let q = Self { x1, x2, x3, x4 };
        q.check_normalized()?;
        Ok(q)
    }

    pub fn identity() -> Self {
        Self { x1: 0.0, x2: 0.0, x3: 0.0, x4: 1.0 }
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        Self { x1: x[0], x2: x[1], x3: x[2], x4: x[3] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::from_array(self.to_array().map(|v| v / n))
    }

    pub fn check_normalized(&self) -> Result<()> {
        let n = self.norm();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Geometry(format!("quaternion not normalized: |q| = {n}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleState {
    pub chi: f64,
    pub phi: f64,
    pub psi: f64,
}

impl AngleState {
    pub fn new(chi: f64, phi: f64, psi: f64) -> Result<Self> {
        if !(0.0..=FRAC_PI_2).contains(&chi) || !phi.is_finite() || !psi.is_finite() {
            return Err(Error::Geometry(format!("invalid angles ({chi}, {phi}, {psi})")));
        }
        Ok(Self { chi, phi, psi })
    }

    /// Same group element with `(φ, ψ)` in the canonical domain.
    pub fn canonical(&self) -> Self {
        quaternion_to_angles(&angles_to_quaternion(self))
    }

    /// `φ/2 + ψ` and `φ/2 - ψ`, the phases of the diagonal and off-diagonal
    /// entries.
    pub fn torus_phases(&self) -> (f64, f64) {
        (0.5 * self.phi + self.psi, 0.5 * self.phi - self.psi)
    }
}

/// A 2×2 complex matrix, expected to lie in SU(2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitaryMatrix(pub [[Complex64; 2]; 2]);

impl UnitaryMatrix {
    pub fn identity() -> Self {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        Self([[l, o], [o, l]])
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.0[i][j]
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self(out)
    }

    /// Largest entry of `|U†U - 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.adjoint().mul(self);
        let id = Self::identity();
        max_entry_distance(&p, &id)
    }

    /// Largest entrywise distance to another matrix.
    pub fn distance(&self, other: &Self) -> f64 {
        max_entry_distance(self, other)
    }
}

fn max_entry_distance(a: &UnitaryMatrix, b: &UnitaryMatrix) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            d = d.max((a.0[i][j] - b.0[i][j]).norm());
        }
    }
    d
}

pub fn angles_to_matrix(a: &AngleState) -> UnitaryMatrix {
    let (alpha, beta) = a.torus_phases();
    let (s, c) = a.chi.sin_cos();
    let e = |theta: f64| Complex64::from_polar(1.0, theta);
    UnitaryMatrix([[c * e(-alpha), s * e(-beta)], [-s * e(beta), c * e(alpha)]])
}

pub fn quaternion_to_matrix(q: &QuaternionState) -> Result<UnitaryMatrix> {
    q.check_normalized()?;
    Ok(UnitaryMatrix([
        [Complex64::new(q.x4, q.x3), Complex64::new(q.x2, q.x1)],
        [Complex64::new(-q.x2, q.x1), Complex64::new(q.x4, -q.x3)],
    ]))
}

/// Inverse of [`quaternion_to_matrix`]; assumes `U ∈ SU(2)`.
pub fn matrix_to_quaternion(u: &UnitaryMatrix) -> QuaternionState {
    let (d, o) = (u.0[0][0], u.0[0][1]);
    QuaternionState { x1: o.im, x2: o.re, x3: d.im, x4: d.re }
}

pub fn angles_to_quaternion(a: &AngleState) -> QuaternionState {
    let (alpha, beta) = a.torus_phases();
    let (s, c) = a.chi.sin_cos();
    QuaternionState {
        x1: -s * beta.sin(),
        x2: s * beta.cos(),
        x3: -c * alpha.sin(),
        x4: c * alpha.cos(),
    }
}

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_tau(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Angles of a normalized quaternion, in the canonical domain described in
/// the module docs.
pub fn quaternion_to_angles(q: &QuaternionState) -> AngleState {
    let off = q.x1.hypot(q.x2);
    let diag = q.x3.hypot(q.x4);
    let chi = off.atan2(diag);
    // α = φ/2 + ψ = -arg(x4 + i x3), β = φ/2 - ψ = -arg(x2 + i x1)
    let alpha = wrap_tau(-q.x3.atan2(q.x4));
    let beta = wrap_tau(-q.x1.atan2(q.x2));
    if off <= BOUNDARY_EPS {
        return AngleState { chi: 0.0, phi: 2.0 * alpha, psi: 0.0 };
    }
    if diag <= BOUNDARY_EPS {
        return AngleState { chi: FRAC_PI_2, phi: 0.0, psi: wrap_tau(-beta) };
    }
    let mut phi = alpha + beta;
    let mut psi = 0.5 * (alpha - beta);
    if phi >= TAU {
        phi -= TAU;
        psi -= PI;
    }
    AngleState { chi, phi, psi: wrap_tau(psi) }
}

/// Haar-distributed group element: `sin²χ ~ U[0,1]`, `φ, ψ ~ U[0, 2π)`.
pub fn haar_sample<R: Rng + ?Sized>(rng: &mut R) -> AngleState {
    let rho: f64 = rng.random();
    AngleState {
        chi: rho.sqrt().asin(),
        phi: TAU * rng.random::<f64>(),
        psi: TAU * rng.random::<f64>(),
    }
}

pub type Vec3 = [f64; 3];

fn check_interior(a: &AngleState) -> Result<()> {
    let s = (2.0 * a.chi).sin();
    if !(s.abs() > 0.0) || a.chi <= 0.0 || a.chi >= FRAC_PI_2 {
        return Err(Error::Geometry(format!("control fields are singular at chi = {}", a.chi)));
    }
    Ok(())
}

/// The fields `b0, b1, b2` of `ẋ = b0 + κX b1 + κY b2` in `(χ, φ, ψ)`.
pub fn control_fields(a: &AngleState) -> Result<[Vec3; 3]> {
    check_interior(a)?;
    Ok(control_fields_unchecked(a.chi, a.phi))
}

fn control_fields_unchecked(chi: f64, phi: f64) -> [Vec3; 3] {
    let (sp, cp) = phi.sin_cos();
    let (s, c2) = (2.0 * chi).sin_cos();
    let cot = c2 / s;
    [
        [0.0, 1.0, 0.0],
        [sp, 2.0 * cp * cot, -cp / s],
        [cp, -2.0 * sp * cot, sp / s],
    ]
}

/// `det{b0, b1, b2}`; equals `-1/sin 2χ`.
pub fn control_determinant(a: &AngleState) -> Result<f64> {
    let [b0, b1, b2] = control_fields(a)?;
    Ok(det3(&b0, &b1, &b2))
}

fn det3(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

/// Lie bracket `[X, Y] = DY·X - DX·Y` with central-difference Jacobians.
pub fn lie_bracket_fd<F, G>(x_field: F, y_field: G, at: Vec3, h: f64) -> Vec3
where
    F: Fn(Vec3) -> Vec3,
    G: Fn(Vec3) -> Vec3,
{
    let jac = |f: &dyn Fn(Vec3) -> Vec3| {
        let mut j = [[0.0; 3]; 3];
        for col in 0..3 {
            let mut p = at;
            let mut m = at;
            p[col] += h;
            m[col] -= h;
            let (fp, fm) = (f(p), f(m));
            for row in 0..3 {
                j[row][col] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        j
    };
    let (dx, dy) = (jac(&x_field), jac(&y_field));
    let (xv, yv) = (x_field(at), y_field(at));
    let mut out = [0.0; 3];
    for row in 0..3 {
        for k in 0..3 {
            out[row] += dy[row][k] * xv[k] - dx[row][k] * yv[k];
        }
    }
    out
}

/// The three bracket residuals `[A0,A1] - A2`, `[A0,A2] + A1`,
/// `[A1,A2] - 4A0` at one point, as max-norms.
pub fn bracket_residuals(a: &AngleState, fd_step: f64) -> Result<[f64; 3]> {
    check_interior(a)?;
    let field = |i: usize| move |x: Vec3| control_fields_unchecked(x[0], x[1])[i];
    let at = [a.chi, a.phi, a.psi];
    let [b0, b1, b2] = control_fields_unchecked(a.chi, a.phi);
    let c01 = lie_bracket_fd(field(0), field(1), at, fd_step);
    let c02 = lie_bracket_fd(field(0), field(2), at, fd_step);
    let c12 = lie_bracket_fd(field(1), field(2), at, fd_step);
    let max_abs = |v: [f64; 3]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    Ok([
        max_abs([c01[0] - b2[0], c01[1] - b2[1], c01[2] - b2[2]]),
        max_abs([c02[0] + b1[0], c02[1] + b1[1], c02[2] + b1[2]]),
        max_abs([c12[0] - 4.0 * b0[0], c12[1] - 4.0 * b0[1], c12[2] - 4.0 * b0[2]]),
    ])
}

/// Largest bracket residual over `points`.
pub fn verify_brackets(points: &[AngleState], fd_step: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in points {
        let r = bracket_residuals(p, fd_step)?;
        worst = worst.max(r.into_iter().fold(0.0, f64::max));
    }
    Ok(worst)
}

/// `[A1, A2]` at a point; exposed for periodicity checks.
pub fn bracket_12(a: &AngleState, fd_step: f64) -> Result<Vec3> {
    check_interior(a)?;
    let field = |i: usize| move |x: Vec3| control_fields_unchecked(x[0], x[1])[i];
    Ok(lie_bracket_fd(field(1), field(2), [a.chi, a.phi, a.psi], fd_step))
}
