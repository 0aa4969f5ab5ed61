//! Complex 2×2 linear algebra.
//!
//! Everything the oscillation models need lives in two value types,
//! [`CVec2`] and [`CMat2`], plus a closed-form matrix exponential that stays
//! valid when the matrix is defective.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex = Complex64;

/// Default relative tolerance below which a discriminant counts as zero.
pub const DEFAULT_TOL_DEFECT: f64 = 1e-9;

const SINGULAR_DET: f64 = 1e-300;

#[inline]
pub fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn is_finite(z: Complex) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// A column vector in C².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CVec2 {
    pub c0: Complex,
    pub c1: Complex,
}

impl CVec2 {
    pub const fn new(c0: Complex, c1: Complex) -> Self {
        Self { c0, c1 }
    }

    pub fn real(x0: f64, x1: f64) -> Self {
        Self::new(c(x0, 0.0), c(x1, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Euclidean normalization. A zero vector is returned unchanged.
    pub fn normalize(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            *self
        } else {
            self.scale(c(1.0 / n, 0.0))
        }
    }

    pub fn scale(&self, s: Complex) -> Self {
        Self::new(self.c0 * s, self.c1 * s)
    }

    /// ⟨self|other⟩, conjugate-linear in `self`.
    pub fn dot(&self, other: &CVec2) -> Complex {
        self.c0.conj() * other.c0 + self.c1.conj() * other.c1
    }

    /// |self⟩⟨other|
    pub fn outer(&self, other: &CVec2) -> CMat2 {
        CMat2::new(
            self.c0 * other.c0.conj(),
            self.c0 * other.c1.conj(),
            self.c1 * other.c0.conj(),
            self.c1 * other.c1.conj(),
        )
    }

    pub fn conj(&self) -> Self {
        Self::new(self.c0.conj(), self.c1.conj())
    }

    pub fn is_finite(&self) -> bool {
        is_finite(self.c0) && is_finite(self.c1)
    }

    pub fn max_abs_diff(&self, other: &CVec2) -> f64 {
        (self.c0 - other.c0).norm().max((self.c1 - other.c1).norm())
    }
}

impl Add for CVec2 {
    type Output = CVec2;
    fn add(self, rhs: CVec2) -> CVec2 {
        CVec2::new(self.c0 + rhs.c0, self.c1 + rhs.c1)
    }
}

impl Sub for CVec2 {
    type Output = CVec2;
    fn sub(self, rhs: CVec2) -> CVec2 {
        CVec2::new(self.c0 - rhs.c0, self.c1 - rhs.c1)
    }
}

/// Row-major complex 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CMat2 {
    pub a: Complex,
    pub b: Complex,
    pub c: Complex,
    pub d: Complex,
}

impl CMat2 {
    pub const fn new(a: Complex, b: Complex, c: Complex, d: Complex) -> Self {
        Self { a, b, c, d }
    }

    pub fn real(a: f64, b: f64, c_: f64, d: f64) -> Self {
        Self::new(c(a, 0.0), c(b, 0.0), c(c_, 0.0), c(d, 0.0))
    }

    pub fn identity() -> Self {
        Self::real(1.0, 0.0, 0.0, 1.0)
    }

    pub fn zero() -> Self {
        Self::real(0.0, 0.0, 0.0, 0.0)
    }

    pub fn diag(d0: Complex, d1: Complex) -> Self {
        Self::new(d0, Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), d1)
    }

    pub fn from_columns(col0: CVec2, col1: CVec2) -> Self {
        Self::new(col0.c0, col1.c0, col0.c1, col1.c1)
    }

    pub fn column(&self, j: usize) -> CVec2 {
        match j {
            0 => CVec2::new(self.a, self.c),
            1 => CVec2::new(self.b, self.d),
            _ => panic!("column index {j} out of range for a 2x2 matrix"),
        }
    }

    pub fn row(&self, i: usize) -> CVec2 {
        match i {
            0 => CVec2::new(self.a, self.b),
            1 => CVec2::new(self.c, self.d),
            _ => panic!("row index {i} out of range for a 2x2 matrix"),
        }
    }

    pub fn scale(&self, s: Complex) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(c(s, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.a.conj(), self.c.conj(), self.b.conj(), self.d.conj())
    }

    /// Elementwise complex conjugate (no transpose).
    pub fn conj(&self) -> Self {
        Self::new(self.a.conj(), self.b.conj(), self.c.conj(), self.d.conj())
    }

    pub fn trace(&self) -> Complex {
        self.a + self.d
    }

    pub fn det(&self) -> Complex {
        self.a * self.d - self.b * self.c
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.norm() <= SINGULAR_DET {
            return Err(Error::Singular(det.norm()));
        }
        let inv = det.inv();
        Ok(Self::new(self.d * inv, -self.b * inv, -self.c * inv, self.a * inv))
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()).sqrt()
    }

    pub fn mul_vec(&self, v: &CVec2) -> CVec2 {
        CVec2::new(self.a * v.c0 + self.b * v.c1, self.c * v.c0 + self.d * v.c1)
    }

    /// ⟨u|self|v⟩
    pub fn sandwich(&self, u: &CVec2, v: &CVec2) -> Complex {
        u.dot(&self.mul_vec(v))
    }

    /// [self, other]
    pub fn commutator(&self, other: &CMat2) -> Self {
        *self * *other - *other * *self
    }

    /// {self, other}
    pub fn anticommutator(&self, other: &CMat2) -> Self {
        *self * *other + *other * *self
    }

    /// Traceless part `self − (tr/2)·I`.
    pub fn traceless(&self) -> Self {
        let half = self.trace() * 0.5;
        Self::new(self.a - half, self.b, self.c, self.d - half)
    }

    pub fn is_finite(&self) -> bool {
        is_finite(self.a) && is_finite(self.b) && is_finite(self.c) && is_finite(self.d)
    }

    pub fn max_abs_diff(&self, other: &CMat2) -> f64 {
        let diff = *self - *other;
        diff.a.norm().max(diff.b.norm()).max(diff.c.norm()).max(diff.d.norm())
    }

    /// Hermitian within `tol` (absolute, elementwise).
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub(crate) fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

impl Add for CMat2 {
    type Output = CMat2;
    fn add(self, r: CMat2) -> CMat2 {
        CMat2::new(self.a + r.a, self.b + r.b, self.c + r.c, self.d + r.d)
    }
}

impl Sub for CMat2 {
    type Output = CMat2;
    fn sub(self, r: CMat2) -> CMat2 {
        CMat2::new(self.a - r.a, self.b - r.b, self.c - r.c, self.d - r.d)
    }
}

impl Neg for CMat2 {
    type Output = CMat2;
    fn neg(self) -> CMat2 {
        CMat2::new(-self.a, -self.b, -self.c, -self.d)
    }
}

impl Mul for CMat2 {
    type Output = CMat2;
    fn mul(self, r: CMat2) -> CMat2 {
        CMat2::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
        )
    }
}

impl Mul<CVec2> for CMat2 {
    type Output = CVec2;
    fn mul(self, v: CVec2) -> CVec2 {
        self.mul_vec(&v)
    }
}

impl Mul<Complex> for CMat2 {
    type Output = CMat2;
    fn mul(self, s: Complex) -> CMat2 {
        self.scale(s)
    }
}

/// Eigendecomposition of a 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eig2 {
    pub lambda_plus: Complex,
    pub lambda_minus: Complex,
    pub v_plus: CVec2,
    pub v_minus: CVec2,
    pub defective: bool,
    /// (a − d)² + 4bc, the discriminant of the characteristic polynomial.
    pub discriminant: Complex,
}

/// Eigenvalues `tr/2 ± √(disc)/2` on the principal square-root branch, with
/// unit-norm eigenvectors whose largest component is real and positive.
///
/// `defective` is set when `|disc| < tol_defect·‖H‖_F²`. The discriminant has
/// the units of H², so the comparison is made against the squared norm.
/// For a defective matrix both vectors are set to the single eigenvector
/// (or to e₀, e₁ for a multiple of the identity).
pub fn eig2(h: &CMat2, tol_defect: f64) -> Result<Eig2> {
    h.check_finite("eig2 input")?;
    let half_tr = h.trace() * 0.5;
    let diff = h.a - h.d;
    let disc = diff * diff + h.b * h.c * 4.0;
    let root = disc.sqrt() * 0.5;
    let norm = h.frobenius_norm();
    let defective = disc.norm() < tol_defect * norm * norm;

    let p = diff * 0.5;
    let eigvec = |mu: Complex| -> CVec2 {
        // (H' − μ)v = 0 for H' = [[p, b], [c, −p]]; take the better conditioned row.
        let from_row0 = CVec2::new(h.b, mu - p);
        let from_row1 = CVec2::new(mu + p, h.c);
        let v = if from_row0.norm_sqr() >= from_row1.norm_sqr() {
            from_row0
        } else {
            from_row1
        };
        if v.norm_sqr() == 0.0 {
            CVec2::real(1.0, 0.0)
        } else {
            fix_phase(v.normalize())
        }
    };

    let (v_plus, v_minus) = if defective {
        let v = eigvec(Complex::new(0.0, 0.0));
        if h.b.norm() == 0.0 && h.c.norm() == 0.0 {
            (CVec2::real(1.0, 0.0), CVec2::real(0.0, 1.0))
        } else {
            (v, v)
        }
    } else {
        (eigvec(root), eigvec(-root))
    };

    Ok(Eig2 {
        lambda_plus: half_tr + root,
        lambda_minus: half_tr - root,
        v_plus,
        v_minus,
        defective,
        discriminant: disc,
    })
}

fn fix_phase(v: CVec2) -> CVec2 {
    let lead = if v.c0.norm() >= v.c1.norm() { v.c0 } else { v.c1 };
    let n = lead.norm();
    if n == 0.0 {
        v
    } else {
        v.scale(lead.conj() / n)
    }
}

/// `e^{-iHt}` written as `exp(log_scale) · matrix`, where `matrix` has
/// entries of order one even when the propagator itself grows exponentially.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledPropagator {
    pub matrix: CMat2,
    pub log_scale: f64,
}

impl ScaledPropagator {
    pub fn to_matrix(&self) -> Result<CMat2> {
        let m = self.matrix.scale_re(self.log_scale.exp());
        m.check_finite("evolution operator")?;
        Ok(m)
    }
}

/// Closed-form propagator `U(t) = e^{-iHt}`.
///
/// With `H' = H − (tr H/2)·I` and `Δ² = −det H'`,
/// `U = e^{-i(tr H/2)t} [cos(Δt)·I − i·t·sinc(Δt)·H']`. Both cos and sinc are
/// even in Δ so the square-root branch is irrelevant, and no eigenvectors are
/// needed, which keeps the formula valid at exceptional points.
pub fn evolution_operator(h: &CMat2, t: f64) -> Result<CMat2> {
    evolution_operator_scaled(h, t)?.to_matrix()
}

pub fn evolution_operator_scaled(h: &CMat2, t: f64) -> Result<ScaledPropagator> {
    h.check_finite("Hamiltonian")?;
    if !t.is_finite() {
        return Err(Error::NonFinite("time"));
    }
    let half_tr = h.trace() * 0.5;
    let hp = h.traceless();
    let delta = (-hp.det()).sqrt();
    let w = delta * t;
    let growth = w.im.abs();

    // cos(w)·e^{-|Im w|} and t·sinc(w)·e^{-|Im w|}
    let (cos_s, tsinc_s) = if w.norm() < 1e-3 {
        let w2 = w * w;
        let cosw = Complex::new(1.0, 0.0) - w2 / 2.0 + w2 * w2 / 24.0 - w2 * w2 * w2 / 720.0;
        let sinc = Complex::new(1.0, 0.0) - w2 / 6.0 + w2 * w2 / 120.0 - w2 * w2 * w2 / 5040.0;
        let damp = (-growth).exp();
        (cosw * damp, sinc * (t * damp))
    } else {
        let i = Complex::i();
        let e_pos = (i * w - growth).exp();
        let e_neg = (-i * w - growth).exp();
        ((e_pos + e_neg) * 0.5, (e_pos - e_neg) / (i * 2.0 * delta))
    };

    // global phase e^{-i(tr/2)t}: split into its modulus (into the log scale) and phase
    let phase_arg = -half_tr * t * Complex::i();
    let phase = Complex::from_polar(1.0, phase_arg.im);
    let log_scale = phase_arg.re + growth;

    let core = CMat2::identity().scale(cos_s) - hp.scale(Complex::i() * tsinc_s);
    let matrix = core.scale(phase);
    matrix.check_finite("evolution operator")?;
    Ok(ScaledPropagator { matrix, log_scale })
}
