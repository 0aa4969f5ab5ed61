//! Bi-orthonormal G-metric framework for the PT-symmetric Hamiltonian
//! (θ = π/4, χ = 0).
//!
//! Right eigenvectors `u±` and left eigenvectors `v±` of H satisfy
//! `⟨v_i|u_j⟩ = δ_ij`; the metric `G = Σ|v_i⟩⟨v_i| = [Σ|u_i⟩⟨u_i|]⁻¹` maps
//! one set onto the other and defines `⟨ψ|φ⟩_G = ⟨ψ|G|φ⟩`. Transition
//! probabilities are G-normalized overlaps between the evolved flavor state
//! and the target flavor state. They are not conserved.
//!
//! In the unbroken regime `sin τ = κ sinφ/(Δm² + σ)`; in the broken regime
//! `cosh τ′ = κ sinφ/(Δm² + σ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg2::{c, CMat2, CVec2, Complex};
use crate::model::{classify_regime, OscillationParams, RegimeKind, DEFAULT_REGIME_TOL};
use crate::quad::ProbabilityQuad;
use crate::units::UnitsMode;

/// Norms at or below this are treated as zero by [`probability_g`].
pub const DEGENERATE_NORM: f64 = 1e-300;

fn require_regime(p: &OscillationParams, expected: RegimeKind) -> Result<()> {
    let regime = classify_regime(p, DEFAULT_REGIME_TOL)?;
    if regime.kind != expected {
        return Err(Error::WrongRegime {
            expected,
            found: regime.kind,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbrokenFrame {
    pub tau: f64,
    /// (σ + Δm²) cos τ / 4E. Signed, so the evolution stays exact when σ + Δm² < 0.
    pub zeta: f64,
    pub omega: f64,
    pub u_plus: CVec2,
    pub u_minus: CVec2,
    pub v_plus: CVec2,
    pub v_minus: CVec2,
    pub g: CMat2,
    pub a_inv: CMat2,
}

impl UnbrokenFrame {
    /// Real eigenvalues `(E₊, E₋) = ω ± ζ` belonging to `u±`.
    pub fn eigenvalues(&self) -> (Complex, Complex) {
        (c(self.omega + self.zeta, 0.0), c(self.omega - self.zeta, 0.0))
    }

    /// Evolved flavor states `(u_a(t), u_b(t))` in closed form.
    pub fn flavor_states(&self, t: f64) -> (CVec2, CVec2) {
        let phase = Complex::from_polar(1.0 / self.tau.cos(), -self.omega * t);
        let zt = self.zeta * t;
        let mi_sin = c(0.0, -zt.sin());
        let ua = CVec2::new(c((self.tau - zt).cos(), 0.0), mi_sin).scale(phase);
        let ub = CVec2::new(mi_sin, c((self.tau + zt).cos(), 0.0)).scale(phase);
        (ua, ub)
    }

    /// Flavor states evolved through the eigenbasis:
    /// `u_k(t) = Σ± (A⁻¹)_{k±} e^{-iE±t} u±`.
    pub fn evolve_by_expansion(&self, t: f64) -> (CVec2, CVec2) {
        let (ep, em) = self.eigenvalues();
        expand(&self.a_inv, self.u_plus, self.u_minus, ep, em, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrokenFrame {
    pub tau_p: f64,
    /// (σ + Δm²) sinh τ′ / 4E, signed like [`UnbrokenFrame::zeta`].
    pub zeta_p: f64,
    pub omega: f64,
    pub u_plus: CVec2,
    pub u_minus: CVec2,
    pub v_plus: CVec2,
    pub v_minus: CVec2,
    pub a_inv: CMat2,
}

impl BrokenFrame {
    /// Complex-conjugate eigenvalues `ω ± iζ′` belonging to `u′±`.
    pub fn eigenvalues(&self) -> (Complex, Complex) {
        (c(self.omega, self.zeta_p), c(self.omega, -self.zeta_p))
    }

    pub fn flavor_states(&self, t: f64) -> (CVec2, CVec2) {
        let phase = Complex::from_polar(1.0 / self.tau_p.sinh(), -self.omega * t);
        let zt = self.zeta_p * t;
        let mi_sinh = c(0.0, -zt.sinh());
        let ua = CVec2::new(c((self.tau_p + zt).sinh(), 0.0), mi_sinh).scale(phase);
        let ub = CVec2::new(mi_sinh, c((self.tau_p - zt).sinh(), 0.0)).scale(phase);
        (ua, ub)
    }

    pub fn evolve_by_expansion(&self, t: f64) -> (CVec2, CVec2) {
        let (ep, em) = self.eigenvalues();
        expand(&self.a_inv, self.u_plus, self.u_minus, ep, em, t)
    }

    /// Left eigenvectors carried along so that `⟨v_i(t)|u_j(t)⟩ = δ_ij` with
    /// `u_i(t) = e^{-iE_i t} u_i`, i.e. `v_i(t) = e^{-iE_i* t} v_i`.
    pub fn left_vectors_at(&self, t: f64) -> (CVec2, CVec2) {
        let (ep, em) = self.eigenvalues();
        let i = Complex::i();
        (
            self.v_plus.scale((-i * ep.conj() * t).exp()),
            self.v_minus.scale((-i * em.conj() * t).exp()),
        )
    }

    pub fn g_at(&self, t: f64) -> CMat2 {
        g_metric_time_dependent(self, t)
    }
}

fn expand(a_inv: &CMat2, up: CVec2, um: CVec2, ep: Complex, em: Complex, t: f64) -> (CVec2, CVec2) {
    let i = Complex::i();
    let up_t = up.scale((-i * ep * t).exp());
    let um_t = um.scale((-i * em * t).exp());
    let state = |row: CVec2| up_t.scale(row.c0) + um_t.scale(row.c1);
    (state(a_inv.row(0)), state(a_inv.row(1)))
}

pub fn unbroken_frame(p: &OscillationParams) -> Result<UnbrokenFrame> {
    require_regime(p, RegimeKind::Unbroken)?;
    let s = p.sigma + p.dm2;
    let tau = (p.kappa * p.phi.sin() / s).asin();
    let norm = c(1.0 / (2.0 * tau.cos()).sqrt(), 0.0);
    let e_pos = Complex::from_polar(1.0, tau / 2.0);
    let e_neg = Complex::from_polar(1.0, -tau / 2.0);

    let u_plus = CVec2::new(e_pos, e_neg).scale(norm);
    let u_minus = CVec2::new(e_neg, -e_pos).scale(norm);
    let v_plus = CVec2::new(e_neg, e_pos).scale(norm);
    let v_minus = CVec2::new(e_pos, -e_neg).scale(norm);

    let (sec, tan) = (1.0 / tau.cos(), tau.tan());
    let g = CMat2::new(c(sec, 0.0), c(0.0, -tan), c(0.0, tan), c(sec, 0.0));
    let a_inv = CMat2::new(e_pos, e_neg, e_neg, -e_pos).scale(norm);

    Ok(UnbrokenFrame {
        tau,
        zeta: s * tau.cos() / (4.0 * p.energy),
        omega: p.omega(),
        u_plus,
        u_minus,
        v_plus,
        v_minus,
        g,
        a_inv,
    })
}

pub fn broken_frame(p: &OscillationParams) -> Result<BrokenFrame> {
    require_regime(p, RegimeKind::Broken)?;
    let s = p.sigma + p.dm2;
    let ratio = p.kappa * p.phi.sin() / s;
    if ratio < 1.0 {
        return Err(Error::UnsupportedBranch(ratio));
    }
    let tau_p = ratio.acosh();
    let norm = c(1.0 / (2.0 * tau_p.sinh()).sqrt(), 0.0);
    let grow = c((tau_p / 2.0).exp(), 0.0);
    let decay = c((-tau_p / 2.0).exp(), 0.0);
    let i = Complex::i();

    let u_plus = CVec2::new(grow, -i * decay).scale(norm);
    let u_minus = CVec2::new(i * decay, grow).scale(norm);
    let v_plus = CVec2::new(grow, i * decay).scale(norm);
    let v_minus = CVec2::new(-i * decay, grow).scale(norm);
    let a_inv = CMat2::new(grow, i * decay, -i * decay, grow).scale(norm);

    Ok(BrokenFrame {
        tau_p,
        zeta_p: s * tau_p.sinh() / (4.0 * p.energy),
        omega: p.omega(),
        u_plus,
        u_minus,
        v_plus,
        v_minus,
        a_inv,
    })
}

/// `G_t = (1/sinh τ′)·[[cosh(τ′−2ζ′t), −i cosh 2ζ′t], [i cosh 2ζ′t, cosh(τ′+2ζ′t)]]`.
pub fn g_metric_time_dependent(f: &BrokenFrame, t: f64) -> CMat2 {
    let x = 2.0 * f.zeta_p * t;
    let inv = 1.0 / f.tau_p.sinh();
    CMat2::new(
        c((f.tau_p - x).cosh() * inv, 0.0),
        c(0.0, -x.cosh() * inv),
        c(0.0, x.cosh() * inv),
        c((f.tau_p + x).cosh() * inv, 0.0),
    )
}

/// `|⟨φ|G|ψ⟩|² / (⟨φ|G|φ⟩·⟨ψ|G|ψ⟩)`: probability of finding `phi` in `psi`.
pub fn probability_g(psi: &CVec2, phi_state: &CVec2, g: &CMat2) -> Result<f64> {
    let nphi = g.sandwich(phi_state, phi_state).re;
    let npsi = g.sandwich(psi, psi).re;
    if nphi <= DEGENERATE_NORM {
        return Err(Error::DegenerateNorm(nphi));
    }
    if npsi <= DEGENERATE_NORM {
        return Err(Error::DegenerateNorm(npsi));
    }
    Ok(g.sandwich(phi_state, psi).norm_sqr() / (nphi * npsi))
}

fn flavor_basis() -> (CVec2, CVec2) {
    (CVec2::real(1.0, 0.0), CVec2::real(0.0, 1.0))
}

/// Four channel probabilities from evolved states and a metric (possibly a
/// different one per time).
pub fn quad_from_states(ua_t: &CVec2, ub_t: &CVec2, g: &CMat2) -> Result<ProbabilityQuad> {
    let (ea, eb) = flavor_basis();
    Ok(ProbabilityQuad::new(
        probability_g(ua_t, &ea, g)?,
        probability_g(ua_t, &eb, g)?,
        probability_g(ub_t, &ea, g)?,
        probability_g(ub_t, &eb, g)?,
    ))
}

/// `P_aa = P_bb = cos²ζt`, `P_ab = sin²(τ − ζt)`, `P_ba = sin²(τ + ζt)`.
pub fn probabilities_unbroken(p: &OscillationParams, t: f64) -> Result<ProbabilityQuad> {
    let f = unbroken_frame(p)?;
    Ok(unbroken_closed_form(f.tau, f.zeta * t))
}

fn unbroken_closed_form(tau: f64, zt: f64) -> ProbabilityQuad {
    let same = zt.cos().powi(2);
    ProbabilityQuad::new(same, (tau - zt).sin().powi(2), (tau + zt).sin().powi(2), same)
}

/// ln cosh x without overflow.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn broken_closed_form(tau_p: f64, zt: f64) -> ProbabilityQuad {
    // cosh²(num) / (cosh τ′ · cosh(den)) evaluated in log space
    let ratio = |num: f64, den: f64| (2.0 * ln_cosh(num) - ln_cosh(tau_p) - ln_cosh(den)).exp();
    ProbabilityQuad::new(
        ratio(tau_p - zt, tau_p - 2.0 * zt),
        ratio(zt, tau_p + 2.0 * zt),
        ratio(zt, tau_p - 2.0 * zt),
        ratio(tau_p + zt, tau_p + 2.0 * zt),
    )
}

/// Broken-regime probabilities with the time-dependent metric `G_t`:
/// `P′_aa = cosh²(τ′−ζ′t) / (cosh τ′ cosh(τ′−2ζ′t))`,
/// `P′_ab = cosh²ζ′t / (cosh τ′ cosh(τ′+2ζ′t))`,
/// `P′_ba = cosh²ζ′t / (cosh τ′ cosh(τ′−2ζ′t))`,
/// `P′_bb = cosh²(τ′+ζ′t) / (cosh τ′ cosh(τ′+2ζ′t))`.
pub fn probabilities_broken(p: &OscillationParams, t: f64) -> Result<ProbabilityQuad> {
    let f = broken_frame(p)?;
    Ok(broken_closed_form(f.tau_p, f.zeta_p * t))
}

/// Choice of metric in the broken regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BrokenMetric {
    /// G_t, built from the evolved eigenvectors.
    #[default]
    TimeDependent,
    /// G at t = 0 for all times. No closed form exists for this variant.
    Static,
}

/// Unbroken-regime probabilities through the full recipe: eigenbasis
/// expansion of the flavor states, then G-normalized overlaps.
pub fn probabilities_unbroken_pipeline(p: &OscillationParams, t: f64) -> Result<ProbabilityQuad> {
    let f = unbroken_frame(p)?;
    let (ua, ub) = f.evolve_by_expansion(t);
    quad_from_states(&ua, &ub, &f.g)
}

/// Broken-regime probabilities by the overlap recipe, with the metric used
/// in its factorized form `G = Σ_i |v_i⟩⟨v_i|`.
///
/// For `G_t`, `⟨v_i(t)|u_k(t)⟩ = (A⁻¹)_{ki}` exactly, so neither overlap is
/// formed from the exponentially large entries of `G_t` itself. Expanding
/// `⟨ψ|G_t|ψ⟩` entrywise loses about `4ζ′t/ln 10` digits.
pub fn probabilities_broken_pipeline(
    p: &OscillationParams,
    t: f64,
    metric: BrokenMetric,
) -> Result<ProbabilityQuad> {
    let f = broken_frame(p)?;
    let (ep, em) = f.eigenvalues();
    let i = Complex::i();
    let (vp, vm, phase_p, phase_m) = match metric {
        BrokenMetric::TimeDependent => {
            let (vp, vm) = f.left_vectors_at(t);
            (vp, vm, c(1.0, 0.0), c(1.0, 0.0))
        }
        BrokenMetric::Static => (f.v_plus, f.v_minus, (-i * ep * t).exp(), (-i * em * t).exp()),
    };
    // components ⟨v_i|ψ⟩ of the evolved flavor states
    let coeff = |k: usize| {
        let row = f.a_inv.row(k);
        CVec2::new(row.c0 * phase_p, row.c1 * phase_m)
    };
    // components ⟨v_i|e_j⟩ of the target flavor states
    let target = |j: usize| {
        let pick = |v: &CVec2| if j == 0 { v.c0.conj() } else { v.c1.conj() };
        CVec2::new(pick(&vp), pick(&vm))
    };
    let prob = |k: usize, j: usize| -> Result<f64> {
        let (w_psi, w_phi) = (coeff(k), target(j));
        let (n_psi, n_phi) = (w_psi.norm_sqr(), w_phi.norm_sqr());
        if n_psi <= DEGENERATE_NORM {
            return Err(Error::DegenerateNorm(n_psi));
        }
        if n_phi <= DEGENERATE_NORM {
            return Err(Error::DegenerateNorm(n_phi));
        }
        Ok(w_phi.dot(&w_psi).norm_sqr() / (n_psi * n_phi))
    };
    Ok(ProbabilityQuad::new(prob(0, 0)?, prob(0, 1)?, prob(1, 0)?, prob(1, 1)?))
}

/// G-metric probabilities for any PT-symmetric point off the exceptional
/// boundary, dispatching on the regime.
pub fn probabilities(p: &OscillationParams, t: f64, metric: BrokenMetric) -> Result<ProbabilityQuad> {
    match classify_regime(p, DEFAULT_REGIME_TOL)?.kind {
        RegimeKind::Unbroken => probabilities_unbroken(p, t),
        RegimeKind::Broken => match metric {
            BrokenMetric::TimeDependent => probabilities_broken(p, t),
            BrokenMetric::Static => probabilities_broken_pipeline(p, t, metric),
        },
        RegimeKind::Exceptional => Err(Error::WrongRegime {
            expected: RegimeKind::Unbroken,
            found: RegimeKind::Exceptional,
        }),
    }
}

/// Unbroken-regime probabilities in laboratory units, phase
/// `k·cos τ·(Δm² + σ)[eV²]·L[km]/E[GeV]` with k = 1.27 or 1/(4ħc).
pub fn probabilities_unbroken_le(
    dm2_ev2: f64,
    sigma_ev2: f64,
    tau: f64,
    l_km: f64,
    e_gev: f64,
    mode: UnitsMode,
) -> ProbabilityQuad {
    let phase = mode.phase_factor() * tau.cos() * (dm2_ev2 + sigma_ev2) * l_km / e_gev;
    unbroken_closed_form(tau, phase)
}

/// Broken-regime probabilities in laboratory units; the doubled phase
/// carries the 2.54 factor in rounded mode.
pub fn probabilities_broken_le(
    dm2_ev2: f64,
    sigma_ev2: f64,
    tau_p: f64,
    l_km: f64,
    e_gev: f64,
    mode: UnitsMode,
) -> ProbabilityQuad {
    let phase = mode.phase_factor() * tau_p.sinh() * (dm2_ev2 + sigma_ev2) * l_km / e_gev;
    broken_closed_form(tau_p, phase)
}

/// κ that puts the unbroken frame at angle τ: `κ = (Δm² + σ) sin τ / sin φ`.
pub fn kappa_for_tau(dm2: f64, sigma: f64, phi: f64, tau: f64) -> f64 {
    (dm2 + sigma) * tau.sin() / phi.sin()
}

/// κ that puts the broken frame at τ′: `κ = (Δm² + σ) cosh τ′ / sin φ`.
pub fn kappa_for_tau_prime(dm2: f64, sigma: f64, phi: f64, tau_p: f64) -> f64 {
    (dm2 + sigma) * tau_p.cosh() / phi.sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg2::evolution_operator;
    use crate::model::build_hamiltonian;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6};

    const DM2: f64 = 2.5e-21;

    fn unbroken_at(tau: f64) -> OscillationParams {
        OscillationParams::pt_symmetric(1.0, DM2, kappa_for_tau(DM2, 0.0, FRAC_PI_2, tau), 0.0, FRAC_PI_2)
    }

    fn broken_at(tau_p: f64) -> OscillationParams {
        OscillationParams::pt_symmetric(
            1.0,
            DM2,
            kappa_for_tau_prime(DM2, 0.0, FRAC_PI_2, tau_p),
            0.0,
            FRAC_PI_2,
        )
    }

    #[test]
    fn hermitian_limit_frame() {
        let f = unbroken_frame(&OscillationParams::pt_symmetric(1.0, DM2, 0.0, 0.0, 0.3)).unwrap();
        assert_eq!(f.tau, 0.0);
        assert!(f.g.max_abs_diff(&CMat2::identity()) < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(f.u_plus.max_abs_diff(&CVec2::real(r, r)) < 1e-15);
        assert!(f.u_minus.max_abs_diff(&CVec2::real(r, -r)) < 1e-15);
    }

    #[test]
    fn metric_at_tau_pi_over_6() {
        let f = unbroken_frame(&unbroken_at(FRAC_PI_6)).unwrap();
        let s3 = 3f64.sqrt();
        let expect = CMat2::new(c(2.0 / s3, 0.0), c(0.0, -1.0 / s3), c(0.0, 1.0 / s3), c(2.0 / s3, 0.0));
        assert!(f.g.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn metric_is_inverse_of_right_projector_sum() {
        let f = unbroken_frame(&unbroken_at(0.4)).unwrap();
        let sum = f.u_plus.outer(&f.u_plus) + f.u_minus.outer(&f.u_minus);
        assert!(f.g.max_abs_diff(&sum.inverse().unwrap()) < 1e-12);
        assert!(f.g.mul_vec(&f.u_plus).max_abs_diff(&f.v_plus) < 1e-12);
        assert!(f.g.mul_vec(&f.u_minus).max_abs_diff(&f.v_minus) < 1e-12);
    }

    #[test]
    fn frames_reject_wrong_regime() {
        assert_eq!(
            unbroken_frame(&broken_at(0.5)).unwrap_err(),
            Error::WrongRegime {
                expected: RegimeKind::Unbroken,
                found: RegimeKind::Broken
            }
        );
        assert!(matches!(broken_frame(&unbroken_at(0.5)), Err(Error::WrongRegime { .. })));
        let mut p = unbroken_at(0.5);
        p.theta = FRAC_PI_3;
        assert_eq!(unbroken_frame(&p).unwrap_err(), Error::NotPtSymmetric);
    }

    #[test]
    fn broken_frame_rejects_negative_branch() {
        let p = OscillationParams::pt_symmetric(1.0, DM2, -3.0 * DM2, 0.0, FRAC_PI_2);
        assert!(matches!(broken_frame(&p), Err(Error::UnsupportedBranch(_))));
    }

    #[test]
    fn tau_prime_for_cosh_two() {
        let f = broken_frame(&broken_at(2f64.acosh())).unwrap();
        assert!((f.tau_p - 1.316_957_896_924_816_6).abs() < 1e-12);
    }

    #[test]
    fn broken_a_inv_columns_are_right_vectors() {
        let f = broken_frame(&broken_at(0.8)).unwrap();
        assert!(f.a_inv.column(0).max_abs_diff(&f.u_plus) < 1e-15);
        assert!(f.a_inv.column(1).max_abs_diff(&f.u_minus) < 1e-15);
    }

    #[test]
    fn time_dependent_metric_at_zero_and_hermitian() {
        let f = broken_frame(&broken_at(0.7)).unwrap();
        let sh = 0.7f64.sinh();
        let expect = CMat2::new(
            c(0.7f64.cosh() / sh, 0.0),
            c(0.0, -1.0 / sh),
            c(0.0, 1.0 / sh),
            c(0.7f64.cosh() / sh, 0.0),
        );
        assert!(g_metric_time_dependent(&f, 0.0).max_abs_diff(&expect) < 1e-15);
        for t in [1e20, 5e20, 2e21] {
            let g = g_metric_time_dependent(&f, t);
            assert!(g.is_hermitian(1e-14 * g.frobenius_norm()));
        }
    }

    #[test]
    fn time_dependent_metric_from_evolved_left_vectors() {
        let f = broken_frame(&broken_at(0.9)).unwrap();
        for t in [0.0, 3e20, 1.1e21] {
            let (vp, vm) = f.left_vectors_at(t);
            let built = vp.outer(&vp) + vm.outer(&vm);
            let g = g_metric_time_dependent(&f, t);
            assert!(built.max_abs_diff(&g) < 1e-11 * g.frobenius_norm());
        }
    }

    #[test]
    fn probability_g_basics() {
        let g = CMat2::new(c(1.3, 0.0), c(0.2, -0.4), c(0.2, 0.4), c(0.9, 0.0));
        let psi = CVec2::new(c(0.3, 0.1), c(-0.5, 0.7));
        assert!((probability_g(&psi, &psi, &g).unwrap() - 1.0).abs() < 1e-15);
        let id = CMat2::identity();
        let p0 = probability_g(&CVec2::real(1.0, 0.0), &CVec2::real(0.0, 1.0), &id).unwrap();
        assert_eq!(p0, 0.0);
        let zero = CVec2::real(0.0, 0.0);
        assert!(matches!(probability_g(&zero, &psi, &id), Err(Error::DegenerateNorm(_))));
    }

    #[test]
    fn unbroken_examples() {
        let p = unbroken_at(FRAC_PI_6);
        let q0 = probabilities_unbroken(&p, 0.0).unwrap();
        assert_eq!(q0.p_aa, 1.0);
        assert!((q0.p_ab - 0.25).abs() < 1e-15 && (q0.p_ba - 0.25).abs() < 1e-15);

        // ζt = π/6
        let f = unbroken_frame(&p).unwrap();
        let q = probabilities_unbroken(&p, FRAC_PI_6 / f.zeta).unwrap();
        assert!(q.p_ab.abs() < 1e-15);
        assert!((q.p_ba - 0.75).abs() < 1e-14);
        assert!((q.p_aa - 0.75).abs() < 1e-14);
        assert!((q.sum_a() - 0.75).abs() < 1e-14);
    }

    #[test]
    fn hermitian_limit_restores_conservation() {
        let p = OscillationParams::pt_symmetric(1.0, DM2, 0.0, 0.4 * DM2, 0.3);
        for t in [0.0, 1e20, 7e20, 3e21] {
            let q = probabilities_unbroken(&p, t).unwrap();
            assert!((q.sum_a() - 1.0).abs() < 1e-12);
            let expect = ((p.dm2 + p.sigma) * t / 4.0).sin().powi(2);
            assert!((q.p_ab - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn flavor_states_match_propagator() {
        for p in [unbroken_at(0.45), broken_at(0.6)] {
            let h = build_hamiltonian(&p).unwrap();
            for t in [0.0, 2e20, 9e20] {
                let u = evolution_operator(&h, t).unwrap();
                let (ua, ub) = match unbroken_frame(&p) {
                    Ok(f) => f.flavor_states(t),
                    Err(_) => broken_frame(&p).unwrap().flavor_states(t),
                };
                let scale = ua.norm().max(1.0);
                assert!(ua.max_abs_diff(&u.column(0)) < 1e-11 * scale);
                assert!(ub.max_abs_diff(&u.column(1)) < 1e-11 * scale);
            }
        }
    }

    #[test]
    fn broken_examples() {
        let tau_p = FRAC_PI_6;
        let p = broken_at(tau_p);
        let q0 = probabilities_broken(&p, 0.0).unwrap();
        assert!((q0.p_aa - 1.0).abs() < 1e-15 && (q0.p_bb - 1.0).abs() < 1e-15);
        let sech2 = 1.0 / tau_p.cosh().powi(2);
        assert!((q0.p_ab - sech2).abs() < 1e-15 && (q0.p_ba - sech2).abs() < 1e-15);

        let f = broken_frame(&p).unwrap();
        let q = probabilities_broken(&p, 20.0 / f.zeta_p).unwrap();
        let limit = (-tau_p).exp() / (2.0 * tau_p.cosh());
        assert!((q.p_ab - limit).abs() < 1e-8);
        assert!((q.p_aa - limit).abs() < 1e-8);

        // far beyond the point where cosh would overflow
        let q = probabilities_broken(&p, 2000.0 / f.zeta_p).unwrap();
        assert!(q.is_finite());
    }

    #[test]
    fn broken_closed_form_matches_pipeline() {
        let p = broken_at(FRAC_PI_6);
        for t in [0.0, 1e20, 6e20, 2e21] {
            let a = probabilities_broken(&p, t).unwrap();
            let b = probabilities_broken_pipeline(&p, t, BrokenMetric::TimeDependent).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-11, "t = {t}: {a:?} vs {b:?}");
        }
        // static metric agrees only at t = 0
        let s = probabilities_broken_pipeline(&p, 0.0, BrokenMetric::Static).unwrap();
        assert!(s.max_abs_diff(&probabilities_broken(&p, 0.0).unwrap()) < 1e-12);
    }

    #[test]
    fn factorized_metric_matches_explicit_metric() {
        let p = broken_at(0.8);
        let f = broken_frame(&p).unwrap();
        for zt in [0.0, 0.3, 1.0, 2.0] {
            let t = zt / f.zeta_p;
            let (ua, ub) = f.evolve_by_expansion(t);
            for (metric, g) in [
                (BrokenMetric::TimeDependent, g_metric_time_dependent(&f, t)),
                (BrokenMetric::Static, g_metric_time_dependent(&f, 0.0)),
            ] {
                let explicit = quad_from_states(&ua, &ub, &g).unwrap();
                let factored = probabilities_broken_pipeline(&p, t, metric).unwrap();
                assert!(explicit.max_abs_diff(&factored) < 1e-11);
            }
        }
    }

    #[test]
    fn broken_pipeline_stays_accurate_at_long_times() {
        let p = broken_at(1.2);
        let f = broken_frame(&p).unwrap();
        for zt in [10.0, 40.0, 150.0] {
            let t = zt / f.zeta_p;
            let a = probabilities_broken(&p, t).unwrap();
            let b = probabilities_broken_pipeline(&p, t, BrokenMetric::TimeDependent).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-11, "zt = {zt}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn le_forms() {
        let q = probabilities_unbroken_le(2.5e-3, 0.0, FRAC_PI_6, 0.0, 1.0, UnitsMode::PaperRounded);
        assert_eq!(q.p_aa, 1.0);

        // 1.27 cos τ Δm² L/E = π/2 ⇒ P_aa = 0
        let l = FRAC_PI_2 / (1.27 * FRAC_PI_6.cos() * 2.5e-3);
        let q = probabilities_unbroken_le(2.5e-3, 0.0, FRAC_PI_6, l, 1.0, UnitsMode::PaperRounded);
        assert!(q.p_aa < 1e-28);

        let qb = probabilities_broken_le(2.5e-3, 0.0, 0.5, 0.0, 1.0, UnitsMode::Exact);
        assert!((qb.p_aa - 1.0).abs() < 1e-15);
    }

    #[test]
    fn le_forms_agree_with_natural_units() {
        let le = 700.0;
        let pu = unbroken_at(0.35);
        let t = UnitsMode::Exact.km_to_time(le);
        let a = probabilities_unbroken(&pu, t).unwrap();
        let b = probabilities_unbroken_le(2.5e-3, 0.0, 0.35, le, 1.0, UnitsMode::Exact);
        assert!(a.max_abs_diff(&b) < 1e-12);

        let pb = broken_at(0.35);
        let a = probabilities_broken(&pb, t).unwrap();
        let b = probabilities_broken_le(2.5e-3, 0.0, 0.35, le, 1.0, UnitsMode::Exact);
        assert!(a.max_abs_diff(&b) < 1e-12);
    }
}
