//! Galerkin discretization of the Markov generator.
//!
//! The generator acts on functions of `(Z, y, φ, ψ)`. We expand in
//! `h_n(Z) f_p(y) e^{ikφ} e^{irψ}` where `h_n` are normalized Hermite
//! polynomials for the stationary OU law and `f_p(y) = e^{iπpy}/√2` is the
//! Fourier family on `[-1, 1]`. The ψ-index `r` is conserved, so each `r` is a
//! separate block.
//!
//! In this basis `L = L₀ + κL₁` with `L₀ h_n f_p e^{ikφ} = (-nγ + ik)(·)`. The
//! coupling raises or lowers `n` by one through `Z h_n = s(√(n+1) h_{n+1} +
//! √n h_{n-1})`, `s = σ/√(2γ)`, and shifts `k` by one with `y`-matrix elements
//!
//! ```text
//! a_{q,p}    = ∫ f̄_q √(1-y²) f'_p dy
//! b_{q,p}(k) = ∫ f̄_q (k y + r/2)/√(1-y²) f_p dy
//! ```
//!
//! Both carry Chebyshev weights and are evaluated by Gauss–Chebyshev rules.
//!
//! The outermost Fourier sectors `k = ±k_max` lose one neighbour and carry
//! undamped modes at `±i k_max` that are artifacts of the cut. The physical gap
//! ignores eigenvalues with `|Im λ| > k_max - 1/2`.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::averaging::relaxation_time;
use crate::error::{Error, Result};

/// Largest matrix dimension accepted by [`build_generator`].
pub const MAX_DIM: usize = 4000;
/// Eigenvalues closer than this to 0 count as the invariant mode.
pub const ZERO_TOLERANCE: f64 = 1e-8;
/// Quadrature is accepted when doubling the rule changes no element by more.
pub const QUAD_TOLERANCE: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Truncation of the Hermite × Fourier basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GalerkinSpec {
    pub n_max: usize,
    pub p_max: usize,
    pub k_max: usize,
    #[serde(default)]
    pub r: i64,
    pub quad_points: usize,
}

impl Default for GalerkinSpec {
    fn default() -> Self {
        Self::new(6, 8, 6)
    }
}

/// Default quadrature size for a given `p_max`.
pub fn default_quad_points(p_max: usize) -> usize {
    8 * p_max + 32
}

impl GalerkinSpec {
    pub fn new(n_max: usize, p_max: usize, k_max: usize) -> Self {
        Self { n_max, p_max, k_max, r: 0, quad_points: default_quad_points(p_max) }
    }

    pub fn with_r(mut self, r: i64) -> Self {
        self.r = r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 || self.p_max < 1 || self.k_max < 1 {
            return Err(Error::Spectral(format!("truncations must be >= 1, got {self:?}")));
        }
        if self.quad_points < 4 * self.p_max {
            return Err(Error::Spectral(format!(
                "quad_points = {} below 4·p_max = {}",
                self.quad_points,
                4 * self.p_max
            )));
        }
        if self.dim() > MAX_DIM {
            return Err(Error::Spectral(format!("matrix dimension {} exceeds cap {MAX_DIM}", self.dim())));
        }
        Ok(())
    }

    pub fn n_p(&self) -> usize {
        2 * self.p_max + 1
    }

    pub fn n_k(&self) -> usize {
        2 * self.k_max + 1
    }

    pub fn dim(&self) -> usize {
        (self.n_max + 1) * self.n_p() * self.n_k()
    }

    /// Row/column of basis state `(n, p-slot, k)`.
    pub fn index(&self, n: usize, p_slot: usize, k: i64) -> usize {
        (n * self.n_p() + p_slot) * self.n_k() + (k + self.k_max as i64) as usize
    }
}

/// Fourier index stored at slot `i`: 0, 1, -1, 2, -2, ...
pub fn p_of_slot(i: usize) -> i64 {
    if i % 2 == 1 {
        i.div_ceil(2) as i64
    } else {
        -((i / 2) as i64)
    }
}

pub fn slot_of_p(p: i64) -> usize {
    if p > 0 {
        2 * p as usize - 1
    } else {
        2 * p.unsigned_abs() as usize
    }
}

/// Gauss–Chebyshev rule: `∫ g w dy ≈ Σ weights·g(nodes)`.
#[derive(Debug, Clone)]
pub struct GaussChebyshev {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussChebyshev {
    /// Weight `1/√(1-y²)`, exact for polynomials of degree `2m - 1`.
    pub fn first_kind(m: usize) -> Self {
        let nodes = (1..=m).map(|j| ((2 * j - 1) as f64 * PI / (2 * m) as f64).cos()).collect();
        Self { nodes, weights: vec![PI / m as f64; m] }
    }

    /// Weight `√(1-y²)`.
    pub fn second_kind(m: usize) -> Self {
        let h = PI / (m + 1) as f64;
        let nodes = (1..=m).map(|j| (j as f64 * h).cos()).collect();
        let weights = (1..=m).map(|j| h * (j as f64 * h).sin().powi(2)).collect();
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        self.nodes.iter().zip(&self.weights).map(|(&y, &w)| f(y) * w).sum()
    }
}

/// `f̄_q(y) f_p(y) = e^{iπ(p-q)y}/2`.
fn fourier_product(q: i64, p: i64, y: f64) -> Complex64 {
    Complex64::from_polar(0.5, PI * (p - q) as f64 * y)
}

/// Quadrature value and its change under doubling of the rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementEstimate {
    pub value: Complex64,
    pub change: f64,
    pub converged: bool,
}

impl ElementEstimate {
    fn from_pair(coarse: Complex64, fine: Complex64) -> Self {
        let change = (fine - coarse).norm();
        Self { value: fine, change, converged: change <= QUAD_TOLERANCE }
    }
}

fn a_with(q: i64, p: i64, rule: &GaussChebyshev) -> Complex64 {
    // f'_p = iπp f_p
    I * PI * p as f64 * rule.integrate(|y| fourier_product(q, p, y))
}

fn c_with(q: i64, p: i64, rule: &GaussChebyshev) -> Complex64 {
    rule.integrate(|y| y * fourier_product(q, p, y))
}

fn d_with(q: i64, p: i64, rule: &GaussChebyshev) -> Complex64 {
    rule.integrate(|y| fourier_product(q, p, y))
}

/// `a_{q,p}` with `quad` nodes, checked against `2·quad`.
pub fn matrix_element_a(q: i64, p: i64, quad: usize) -> ElementEstimate {
    ElementEstimate::from_pair(
        a_with(q, p, &GaussChebyshev::second_kind(quad)),
        a_with(q, p, &GaussChebyshev::second_kind(2 * quad)),
    )
}

/// `b_{q,p}(k, r) = k c_{q,p} + (r/2) d_{q,p}`, checked against `2·quad`.
pub fn matrix_element_b(q: i64, p: i64, k: i64, r: i64, quad: usize) -> ElementEstimate {
    let eval = |m: usize| {
        let rule = GaussChebyshev::first_kind(m);
        k as f64 * c_with(q, p, &rule) + 0.5 * r as f64 * d_with(q, p, &rule)
    };
    ElementEstimate::from_pair(eval(quad), eval(2 * quad))
}

/// Tables of `a`, `c`, `d` over the truncated Fourier family, indexed by
/// slot (`[q_slot][p_slot]`).
#[derive(Debug, Clone)]
pub struct YIntegrals {
    pub p_max: usize,
    a: Vec<Vec<Complex64>>,
    c: Vec<Vec<Complex64>>,
    d: Vec<Vec<Complex64>>,
    /// Largest change of any element when the rule is doubled.
    pub max_change: f64,
}

impl YIntegrals {
    pub fn compute(p_max: usize, quad: usize) -> Result<Self> {
        let np = 2 * p_max + 1;
        let (g1, g2) = (GaussChebyshev::first_kind(quad), GaussChebyshev::first_kind(2 * quad));
        let (h1, h2) = (GaussChebyshev::second_kind(quad), GaussChebyshev::second_kind(2 * quad));
        let mut max_change: f64 = 0.0;
        let mut table = |f: &dyn Fn(i64, i64, &GaussChebyshev) -> Complex64, lo: &GaussChebyshev, hi: &GaussChebyshev| {
            let mut out = vec![vec![Complex64::ZERO; np]; np];
            for (qs, row) in out.iter_mut().enumerate() {
                for (ps, v) in row.iter_mut().enumerate() {
                    let (q, p) = (p_of_slot(qs), p_of_slot(ps));
                    let fine = f(q, p, hi);
                    max_change = max_change.max((fine - f(q, p, lo)).norm());
                    *v = fine;
                }
            }
            out
        };
        let a = table(&a_with, &h1, &h2);
        let c = table(&c_with, &g1, &g2);
        let d = table(&d_with, &g1, &g2);
        if max_change > QUAD_TOLERANCE {
            return Err(Error::Spectral(format!(
                "quadrature not converged: doubling {quad} nodes changes an element by {max_change:.3e}"
            )));
        }
        Ok(Self { p_max, a, c, d, max_change })
    }

    pub fn a(&self, q_slot: usize, p_slot: usize) -> Complex64 {
        self.a[q_slot][p_slot]
    }

    pub fn b(&self, q_slot: usize, p_slot: usize, k: i64, r: i64) -> Complex64 {
        k as f64 * self.c[q_slot][p_slot] + 0.5 * r as f64 * self.d[q_slot][p_slot]
    }
}

/// `⟨h_m, x h_n⟩` for the normalized Hermite family of N(0, 1).
pub fn hermite_ladder(m: usize, n: usize) -> f64 {
    if m == n + 1 {
        (n as f64 + 1.0).sqrt()
    } else if m + 1 == n {
        (n as f64).sqrt()
    } else {
        0.0
    }
}

/// Generator block for sector `spec.r`.
pub fn build_generator(spec: &GalerkinSpec, gamma: f64, kappa: f64, sigma: f64) -> Result<Mat<Complex64>> {
    spec.validate()?;
    if !(gamma > 0.0 && gamma.is_finite()) || !kappa.is_finite() || !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Spectral(format!("invalid parameters γ={gamma}, κ={kappa}, σ={sigma}")));
    }
    let ints = YIntegrals::compute(spec.p_max, spec.quad_points)?;
    let dim = spec.dim();
    let (np, kk) = (spec.n_p(), spec.k_max as i64);
    let coupling = kappa * sigma / (2.0 * gamma).sqrt();
    let mut mat = Mat::<Complex64>::zeros(dim, dim);
    for n in 0..=spec.n_max {
        for ps in 0..np {
            for k in -kk..=kk {
                let col = spec.index(n, ps, k);
                mat[(col, col)] = Complex64::new(-(n as f64) * gamma, k as f64);
                if coupling == 0.0 {
                    continue;
                }
                let targets = [(n + 1, n < spec.n_max), (n.wrapping_sub(1), n > 0)];
                for (m, ok) in targets {
                    if !ok {
                        continue;
                    }
                    let ladder = coupling * hermite_ladder(m, n);
                    for (l, sign) in [(k + 1, 1.0), (k - 1, -1.0)] {
                        if l.abs() > kk {
                            continue;
                        }
                        for qs in 0..np {
                            // (a + b) into k+1, (b - a) into k-1
                            let v = ints.b(qs, ps, k, spec.r) + sign * ints.a(qs, ps);
                            mat[(spec.index(m, qs, l), col)] += -I * ladder * v;
                        }
                    }
                }
            }
        }
    }
    Ok(mat)
}

/// Eigenvalues and the gap they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Sorted by decreasing real part.
    pub eigenvalues: Vec<Complex64>,
    /// `-max Re λ` over nonzero eigenvalues, edge-sector artifacts excluded.
    pub gap: f64,
    /// Same without the edge filter.
    pub raw_gap: f64,
    /// Distance from 0 of the eigenvalue closest to it.
    pub zero_mode_error: f64,
    /// Eigenvalues within [`ZERO_TOLERANCE`] of 0.
    pub zero_count: usize,
}

impl SpectrumResult {
    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest distance from any eigenvalue to the nearest conjugate of another.
    pub fn conjugation_defect(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| self.eigenvalues.iter().map(|w| (z.conj() - w).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    }
}

/// Dense eigensolve. With `k_max` set, eigenvalues with `|Im λ| > k_max - 1/2`
/// are excluded from `gap`.
pub fn spectrum(matrix: &Mat<Complex64>, k_max: Option<usize>) -> Result<SpectrumResult> {
    if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
        return Err(Error::Spectral("spectrum needs a non-empty square matrix".into()));
    }
    for j in 0..matrix.ncols() {
        for i in 0..matrix.nrows() {
            let z = matrix[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::Spectral(format!("non-finite matrix entry at ({i}, {j})")));
            }
        }
    }
    let mut eigenvalues = matrix
        .eigenvalues()
        .map_err(|e| Error::Spectral(format!("eigensolver failed: {e:?}")))?;
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    let gap_over = |keep: &dyn Fn(&Complex64) -> bool| {
        -eigenvalues
            .iter()
            .filter(|z| z.norm() > ZERO_TOLERANCE && keep(z))
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let raw_gap = gap_over(&|_| true);
    let gap = match k_max {
        Some(k) => gap_over(&|z: &Complex64| z.im.abs() <= k as f64 - 0.5),
        None => raw_gap,
    };
    let zero_mode_error = eigenvalues.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let zero_count = eigenvalues.iter().filter(|z| z.norm() <= ZERO_TOLERANCE).count();
    Ok(SpectrumResult { eigenvalues, gap, raw_gap, zero_mode_error, zero_count })
}

/// Assemble and solve, applying the edge filter for `spec.k_max`.
pub fn generator_spectrum(spec: &GalerkinSpec, gamma: f64, kappa: f64, sigma: f64) -> Result<SpectrumResult> {
    spectrum(&build_generator(spec, gamma, kappa, sigma)?, Some(spec.k_max))
}

/// Diagonal second-order estimate of `Re λ_{0,p,k,r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbativeEstimate {
    pub value: f64,
    /// Contribution of `q_max < |q| ≤ 2 q_max`, omitted from `value`.
    pub tail: f64,
}

/// `-(κσ)²/(2(1+γ²)) Σ_{|q| ≤ q_max} (|a_{q,p} + b_{q,p}|² + |a_{q,p} - b_{q,p}|²)`.
pub fn perturbative_real_part(p: i64, k: i64, r: i64, q_max: usize, gamma: f64, kappa_sigma: f64) -> PerturbativeEstimate {
    let q_max = q_max as i64;
    let quad = default_quad_points(2 * q_max as usize + p.unsigned_abs() as usize);
    let (g1, g2) = (GaussChebyshev::first_kind(quad), GaussChebyshev::second_kind(quad));
    let term = |q: i64| {
        let a = a_with(q, p, &g2);
        let b = k as f64 * c_with(q, p, &g1) + 0.5 * r as f64 * d_with(q, p, &g1);
        (a + b).norm_sqr() + (a - b).norm_sqr()
    };
    let inner: f64 = (-q_max..=q_max).map(term).sum();
    let tail: f64 = (q_max + 1..=2 * q_max).map(|q| term(q) + term(-q)).sum();
    let pre = -kappa_sigma * kappa_sigma / (2.0 * (1.0 + gamma * gamma));
    PerturbativeEstimate { value: pre * inner, tail: pre * tail }
}

/// Second-order degenerate perturbation theory in sector `k`: eigenvalues of
/// `-(κσ)²/(2γ) [(A+B)†(A+B)/(γ-i) + (B-A)†(B-A)/(γ+i)]` on the truncated
/// Fourier family, shifted by `ik`.
pub fn degenerate_sector_eigenvalues(
    ints: &YIntegrals,
    k: i64,
    r: i64,
    gamma: f64,
    kappa_sigma: f64,
) -> Result<Vec<Complex64>> {
    let np = 2 * ints.p_max + 1;
    let plus = Mat::<Complex64>::from_fn(np, np, |q, p| ints.a(q, p) + ints.b(q, p, k, r));
    let minus = Mat::<Complex64>::from_fn(np, np, |q, p| ints.b(q, p, k, r) - ints.a(q, p));
    let pp = plus.adjoint() * &plus;
    let mm = minus.adjoint() * &minus;
    let s2 = kappa_sigma * kappa_sigma / (2.0 * gamma);
    let (wp, wm) = (Complex64::new(gamma, -1.0).inv(), Complex64::new(gamma, 1.0).inv());
    let m = Mat::<Complex64>::from_fn(np, np, |i, j| -s2 * (pp[(i, j)] * wp + mm[(i, j)] * wm));
    let ev = m.eigenvalues().map_err(|e| Error::Spectral(format!("eigensolver failed: {e:?}")))?;
    Ok(ev.into_iter().map(|z| z + I * k as f64).collect())
}

/// Smallest decay rate predicted by [`degenerate_sector_eigenvalues`] over the
/// interior sectors `|k| < k_max`.
pub fn perturbative_gap(spec: &GalerkinSpec, gamma: f64, kappa_sigma: f64) -> Result<f64> {
    spec.validate()?;
    let ints = YIntegrals::compute(spec.p_max, spec.quad_points)?;
    let kk = spec.k_max as i64;
    let mut gap = f64::INFINITY;
    for k in -(kk - 1)..kk {
        for z in degenerate_sector_eigenvalues(&ints, k, spec.r, gamma, kappa_sigma)? {
            // the invariant mode sits at exactly zero
            if z.re.abs() > 1e-14 * kappa_sigma * kappa_sigma {
                gap = gap.min(-z.re);
            }
        }
    }
    Ok(gap)
}

/// One row of a gap scaling table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub gamma: f64,
    pub kappa_sigma: f64,
    pub gap: f64,
    pub tstar: f64,
    pub gap_times_tstar: f64,
}

/// Galerkin gap for each `γ` at fixed `κσ` (κ = 1, σ = κσ).
pub fn gap_scaling_study(gammas: &[f64], kappa_sigma: f64, spec: &GalerkinSpec) -> Result<Vec<GapRow>> {
    gammas
        .iter()
        .map(|&gamma| {
            let gap = generator_spectrum(spec, gamma, 1.0, kappa_sigma)?.gap;
            let tstar = relaxation_time(gamma, kappa_sigma);
            Ok(GapRow { gamma, kappa_sigma, gap, tstar, gap_times_tstar: gap * tstar })
        })
        .collect()
}
