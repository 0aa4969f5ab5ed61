//! Density-matrix evolution under a non-Hermitian Hamiltonian `H = B − iC`.
//!
//! The state obeys the trace-preserving nonlinear equation
//! `dρ/dt = −i[B, ρ] − {C, ρ} + 2 Tr(ρC) ρ`, solved by
//! `ρ(t) = e^{-iHt} ρ(0) e^{iH†t} / Tr(…)`. Flavor probabilities are
//! `P_ab = Tr(ρ_b(0) ρ_a(t))`.
//!
//! Closed forms are written in terms of `z = α + iβ` and `Γ = γ + iξ`, with
//! `tanh z = D/R`, `sech z = S/R`, `S = σ + Δm² sin 2θ`,
//! `D = −iκ sin φ + Δm² cos 2θ`, `R = √(S² + D²)` and `Γ = R/4E`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg2::{c, evolution_operator_scaled, CMat2, CVec2, Complex};
use crate::model::{build_hamiltonian, hermitian_split, HermitianSplit, OscillationParams};
use crate::quad::ProbabilityQuad;
use crate::units::UnitsMode;

/// Tolerance used when validating density matrices.
pub const DENSITY_TOL: f64 = 1e-12;

/// Numerator traces at or below this are reported as [`Error::VanishingNorm`].
pub const VANISHING_TRACE: f64 = 1e-300;

/// Hermitian, unit-trace, positive semidefinite 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    m: CMat2,
}

fn min_eigenvalue_hermitian(m: &CMat2) -> f64 {
    let half_tr = 0.5 * (m.a.re + m.d.re);
    let half_diff = 0.5 * (m.a.re - m.d.re);
    half_tr - (half_diff * half_diff + m.b.norm_sqr()).sqrt()
}

impl DensityMatrix {
    pub fn new(m: CMat2) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidDensity("non-finite entries".into()));
        }
        if !m.is_hermitian(DENSITY_TOL) {
            return Err(Error::InvalidDensity("not Hermitian".into()));
        }
        let tr = m.trace().re;
        if (tr - 1.0).abs() > DENSITY_TOL {
            return Err(Error::InvalidDensity(format!("trace {tr} differs from 1")));
        }
        let lo = min_eigenvalue_hermitian(&m);
        if lo < -DENSITY_TOL {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {lo}")));
        }
        Ok(Self { m })
    }

    /// `|ψ⟩⟨ψ|` for the normalized `ψ`.
    pub fn from_pure(psi: &CVec2) -> Result<Self> {
        let n = psi.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidDensity(format!("state norm {n}")));
        }
        let v = psi.normalize();
        Self::new(hermitize(&v.outer(&v)))
    }

    pub(crate) fn new_unchecked(m: CMat2) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &CMat2 {
        &self.m
    }

    /// Tr ρ²
    pub fn purity(&self) -> f64 {
        (self.m * self.m).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue_hermitian(&self.m)
    }
}

fn hermitize(m: &CMat2) -> CMat2 {
    (*m + m.adjoint()).scale_re(0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlavorLabel {
    A,
    B,
}

/// Which pair of vectors plays the role of the initial flavor states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateBasis {
    /// `ν_a = (−cos θ, sin θ)`, `ν_b = (sin θ, cos θ)`. The closed forms are
    /// written for this pair.
    #[default]
    Vacuum,
    /// `ν_a = (1, 0)`, `ν_b = (0, 1)`, the basis in which H is written.
    Canonical,
}

pub fn flavor_state(basis: StateBasis, theta: f64, flavor: FlavorLabel) -> CVec2 {
    let (s, co) = theta.sin_cos();
    match (basis, flavor) {
        (StateBasis::Vacuum, FlavorLabel::A) => CVec2::real(-co, s),
        (StateBasis::Vacuum, FlavorLabel::B) => CVec2::real(s, co),
        (StateBasis::Canonical, FlavorLabel::A) => CVec2::real(1.0, 0.0),
        (StateBasis::Canonical, FlavorLabel::B) => CVec2::real(0.0, 1.0),
    }
}

/// `ρ_a(0) = [[cos²θ, −sinθ cosθ], [−sinθ cosθ, sin²θ]]`,
/// `ρ_b(0) = [[sin²θ, sinθ cosθ], [sinθ cosθ, cos²θ]]`.
pub fn initial_density(theta: f64, flavor: FlavorLabel) -> DensityMatrix {
    initial_density_in(StateBasis::Vacuum, theta, flavor)
}

pub fn initial_density_in(basis: StateBasis, theta: f64, flavor: FlavorLabel) -> DensityMatrix {
    let v = flavor_state(basis, theta, flavor);
    DensityMatrix::new_unchecked(v.outer(&v))
}

/// `−i[B, ρ] − {C, ρ} + 2 Tr(ρC) ρ`
pub fn rhs_density(split: &HermitianSplit, rho: &DensityMatrix) -> CMat2 {
    rhs_matrix(split, &rho.m)
}

pub(crate) fn rhs_matrix(split: &HermitianSplit, rho: &CMat2) -> CMat2 {
    let i = Complex::i();
    let tr = (*rho * split.c).trace();
    split.b.commutator(rho).scale(-i) - split.c.anticommutator(rho) + rho.scale(tr * 2.0)
}

/// `e^{-iHt} ρ₀ e^{iH†t}` divided by its trace. The exponential growth
/// factor of the propagator is removed before forming the product, so long
/// broken-regime times do not overflow.
pub fn evolve_density(h: &CMat2, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    let u = evolution_operator_scaled(h, t)?.matrix;
    let num = u * rho0.m * u.adjoint();
    let tr = num.trace().re;
    if !(tr > VANISHING_TRACE) {
        return Err(Error::VanishingNorm(tr));
    }
    DensityMatrix::new(hermitize(&num.scale_re(1.0 / tr)))
}

pub fn evolve_density_analytic(
    p: &OscillationParams,
    rho0: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix> {
    evolve_density(&build_hamiltonian(p)?, rho0, t)
}

/// `Tr(ρ_target(0) ρ(t))`
pub fn probability_trace(rho_target0: &DensityMatrix, rho_evolved: &DensityMatrix) -> f64 {
    (rho_target0.m * rho_evolved.m).trace().re
}

/// Four channel probabilities by evolving both flavor densities under `h`.
pub fn probabilities_trace_h(
    h: &CMat2,
    theta: f64,
    t: f64,
    basis: StateBasis,
) -> Result<ProbabilityQuad> {
    let ra = initial_density_in(basis, theta, FlavorLabel::A);
    let rb = initial_density_in(basis, theta, FlavorLabel::B);
    let ra_t = evolve_density(h, &ra, t)?;
    let rb_t = evolve_density(h, &rb, t)?;
    Ok(ProbabilityQuad::new(
        probability_trace(&ra, &ra_t),
        probability_trace(&rb, &ra_t),
        probability_trace(&ra, &rb_t),
        probability_trace(&rb, &rb_t),
    ))
}

pub fn probabilities_trace(
    p: &OscillationParams,
    t: f64,
    basis: StateBasis,
) -> Result<ProbabilityQuad> {
    probabilities_trace_h(&build_hamiltonian(p)?, p.theta, t, basis)
}

/// Rescaled time `s = t‖H‖_F` and `H/‖H‖_F`; the dynamics is unchanged.
pub fn rescale(h: &CMat2, t: f64) -> (CMat2, f64) {
    let n = h.frobenius_norm();
    if n == 0.0 {
        (*h, t)
    } else {
        (h.scale_re(1.0 / n), t * n)
    }
}

/// Central difference of the analytic solution minus the master-equation
/// right-hand side, max-abs over entries, evaluated in rescaled time with step `step`.
pub fn derivative_residual(h: &CMat2, rho0: &DensityMatrix, t: f64, step: f64) -> Result<f64> {
    let (hs, s) = rescale(h, t);
    let fwd = evolve_density(&hs, rho0, s + step)?;
    let bwd = evolve_density(&hs, rho0, s - step)?;
    let mid = evolve_density(&hs, rho0, s)?;
    let fd = (fwd.m - bwd.m).scale_re(0.5 / step);
    let rhs = rhs_density(&hermitian_split(&hs)?, &mid);
    Ok(fd.max_abs_diff(&rhs))
}

/// Parameters of the closed-form density probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormParams {
    pub z: Complex,
    pub alpha: f64,
    pub beta: f64,
    /// Γ = γ + iξ
    pub gamma: Complex,
    pub gamma_r: f64,
    pub xi: f64,
    /// S = σ + Δm² sin 2θ
    pub strength: f64,
    pub energy: f64,
}

impl ClosedFormParams {
    /// Parameters for given `(α, β)`, `S` and `E`, with `Γ = S cosh z/4E`.
    pub fn from_angles(alpha: f64, beta: f64, strength: f64, energy: f64) -> Self {
        let z = c(alpha, beta);
        let gamma = z.cosh() * (strength / (4.0 * energy));
        Self {
            z,
            alpha,
            beta,
            gamma,
            gamma_r: gamma.re,
            xi: gamma.im,
            strength,
            energy,
        }
    }

    /// Traceless Hamiltonian `(S/4E)·[[−sinh z, 1], [1, sinh z]]` whose
    /// density dynamics the closed form describes.
    pub fn effective_hamiltonian(&self) -> CMat2 {
        let sh = self.z.sinh();
        let one = c(1.0, 0.0);
        CMat2::new(-sh, one, one, sh).scale_re(self.strength / (4.0 * self.energy))
    }

    /// `R = S cosh z`
    pub fn r(&self) -> Complex {
        self.z.cosh() * self.strength
    }
}

/// `z` from `sinh z = D/S` on the principal branch. This pins both
/// `tanh z = D/R` and `sech z = S/R` with `R = S cosh z`, so no separate
/// sign correction is needed.
pub fn closed_form_params(p: &OscillationParams) -> Result<ClosedFormParams> {
    p.validate()?;
    if p.chi != 0.0 {
        return Err(Error::UnsupportedChi(p.chi));
    }
    let s = p.off_diagonal_strength();
    let scale = p.sigma.abs() + p.dm2.abs() + p.kappa.abs();
    if s.abs() <= 1e-15 * scale || s == 0.0 {
        return Err(Error::DegenerateSech);
    }
    let d = c(p.dm2 * (2.0 * p.theta).cos(), -p.kappa * p.phi.sin());
    let z = asinh(d / s);
    Ok(ClosedFormParams::from_angles(z.re, z.im, s, p.energy))
}

/// Principal complex asinh. `ln(w + √(1 + w²))` cancels for Re w < 0, so
/// that half-plane goes through the odd symmetry.
fn asinh(w: Complex) -> Complex {
    if w.re < 0.0 {
        -(-w).asinh()
    } else {
        w.asinh()
    }
}

/// `(κ, φ)` with φ = π/2 that realize `(α, β)` for the given θ, Δm², σ.
///
/// The real part of `sinh z = D/S` is fixed by the vacuum terms, so only
/// pairs with `sinh α cos β = Δm² cos 2θ / S` are reachable.
pub fn invert_angles(alpha: f64, beta: f64, theta: f64, dm2: f64, sigma: f64) -> Result<(f64, f64)> {
    let s = sigma + dm2 * (2.0 * theta).sin();
    if s == 0.0 {
        return Err(Error::DegenerateSech);
    }
    let got = alpha.sinh() * beta.cos();
    let required = dm2 * (2.0 * theta).cos() / s;
    if (got - required).abs() > 1e-10 * required.abs().max(1.0) {
        return Err(Error::UnreachableAngles { got, required });
    }
    let kappa = -s * alpha.cosh() * beta.sin();
    Ok((kappa, std::f64::consts::FRAC_PI_2))
}

/// Trigonometric pieces shared by the closed forms. Every term is divided
/// by `e^{|2ξt|}`; the ratios are unchanged and nothing overflows.
struct Phases {
    c2g: f64,
    s2g: f64,
    ch: f64,
    sh: f64,
}

impl Phases {
    fn new(gamma_t: f64, xi_t: f64) -> Self {
        let x = 2.0 * xi_t;
        let w = (-x.abs()).exp();
        let w2 = w * w;
        let (s2g, c2g) = (2.0 * gamma_t).sin_cos();
        Self {
            c2g: c2g * w,
            s2g: s2g * w,
            ch: 0.5 * (1.0 + w2),
            sh: 0.5 * x.signum() * (1.0 - w2),
        }
    }
}

/// Closed-form probabilities for given `(α, β)`, phases `γt`, `ξt` and θ.
pub fn closed_form_quad(alpha: f64, beta: f64, gamma_t: f64, xi_t: f64, theta: f64) -> ProbabilityQuad {
    let Phases { c2g, s2g, ch, sh } = Phases::new(gamma_t, xi_t);
    let (s2b, c2b) = (2.0 * beta).sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sha, cha) = (alpha.sinh(), alpha.cosh());
    let ch2a = (2.0 * alpha).cosh();
    let sh2a = (2.0 * alpha).sinh();
    let (s2t, c2t) = (2.0 * theta).sin_cos();
    let (s4t, c4t) = (4.0 * theta).sin_cos();

    let a = c4t * (2.0 + c2b - ch2a) - 4.0 * cb * s4t * sha;
    let x = s2g * s2b + sh * sh2a;
    let y = s2g * sb * sha - sh * cb * cha;
    let base = 2.0 * ch * cha * cha - 2.0 * c2g * sb * sb;
    let da = 4.0 * (base - c2t * x + 2.0 * s2t * y);
    let db = 4.0 * (base + c2t * x - 2.0 * s2t * y);

    let common = (c2g - ch) * a - c2g * (2.0 - 3.0 * c2b - ch2a) + ch * (2.0 + c2b + 3.0 * ch2a);
    let cross = -4.0 * c2t * x + 8.0 * s2t * y;
    let num = (ch - c2g) * (2.0 - c2b + ch2a + a);

    ProbabilityQuad::new((common + cross) / da, num / da, num / db, (common - cross) / db)
}

/// Reduced closed form at θ = π/4.
pub fn pt_limit_quad(alpha: f64, beta: f64, gamma_t: f64, xi_t: f64) -> ProbabilityQuad {
    let Phases { c2g, s2g, ch, sh } = Phases::new(gamma_t, xi_t);
    let (sb, cb) = beta.sin_cos();
    let c2b = (2.0 * beta).cos();
    let (sha, cha) = (alpha.sinh(), alpha.cosh());
    let ch2a = (2.0 * alpha).cosh();

    let q = s2g * sb * sha - sh * cb * cha;
    let base = ch * cha * cha - c2g * sb * sb;
    let da = 4.0 * (base + q);
    let db = 4.0 * (base - q);
    let n1 = c2g * (-2.0 + c2b + ch2a) + ch * (2.0 + c2b + ch2a);
    let num = (ch - c2g) * (ch2a - c2b);
    ProbabilityQuad::new((n1 + 4.0 * q) / da, num / da, num / db, (n1 - 4.0 * q) / db)
}

pub fn probabilities_closed_form(p: &OscillationParams, t: f64) -> Result<ProbabilityQuad> {
    let cf = closed_form_params(p)?;
    Ok(closed_form_quad(cf.alpha, cf.beta, cf.gamma_r * t, cf.xi * t, p.theta))
}

pub fn probabilities_pt_limit(p: &OscillationParams, t: f64) -> Result<ProbabilityQuad> {
    if !p.is_pt_symmetric() {
        return Err(Error::NotPtSymmetric);
    }
    let cf = closed_form_params(p)?;
    Ok(pt_limit_quad(cf.alpha, cf.beta, cf.gamma_r * t, cf.xi * t))
}

/// Closed form in laboratory units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormLe {
    pub probabilities: ProbabilityQuad,
    /// Set when the rounded-mode rate `σ + Δm² sin²2θ` differs from
    /// `σ + Δm² sin 2θ`, i.e. whenever θ is not 0 or π/4 (or π/2).
    pub rate_discrepancy: bool,
}

/// Closed-form density probabilities with `2γt = 2k·cosh α cos β·rate·L/E`
/// and `2ξt = 2k·sinh α sin β·rate·L/E`. Exact mode uses
/// `rate = σ + Δm² sin 2θ`; rounded mode reproduces the laboratory-unit
/// expressions verbatim, including `rate = σ + Δm² sin²2θ`.
#[allow(clippy::too_many_arguments)]
pub fn probabilities_closed_form_le(
    alpha: f64,
    beta: f64,
    theta: f64,
    dm2_ev2: f64,
    sigma_ev2: f64,
    l_km: f64,
    e_gev: f64,
    mode: UnitsMode,
) -> ClosedFormLe {
    let s2t = (2.0 * theta).sin();
    let rate_main = sigma_ev2 + dm2_ev2 * s2t;
    let rate_rounded = sigma_ev2 + dm2_ev2 * s2t * s2t;
    let rate = match mode {
        UnitsMode::Exact => rate_main,
        UnitsMode::PaperRounded => rate_rounded,
    };
    let phase = mode.phase_factor() * rate * l_km / e_gev;
    let q = closed_form_quad(
        alpha,
        beta,
        phase * alpha.cosh() * beta.cos(),
        phase * alpha.sinh() * beta.sin(),
        theta,
    );
    let scale = rate_main.abs().max(rate_rounded.abs()).max(f64::MIN_POSITIVE);
    ClosedFormLe {
        probabilities: q,
        rate_discrepancy: mode == UnitsMode::PaperRounded
            && (rate_main - rate_rounded).abs() > 1e-12 * scale,
    }
}
