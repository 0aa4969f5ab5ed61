//! The non-Hermitian two-flavor Hamiltonian, its spectrum and PT regimes.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg2::{c, CMat2, Complex};

/// Tolerance on θ = π/4 and χ = 0 when deciding PT symmetry.
pub const PT_ANGLE_TOL: f64 = 1e-12;

/// Default relative tolerance for regime classification.
pub const DEFAULT_REGIME_TOL: f64 = 1e-9;

/// Physical parameters in natural units: GeV for `energy`, GeV² for the
/// mass-squared-like couplings, radians for angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationParams {
    pub energy: f64,
    pub dm2: f64,
    #[serde(default)]
    pub mbar2: f64,
    pub theta: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub chi: f64,
}

impl OscillationParams {
    /// Hermitian vacuum parameters (κ = σ = 0, m̄² = 0).
    pub fn vacuum(energy: f64, dm2: f64, theta: f64) -> Self {
        Self {
            energy,
            dm2,
            mbar2: 0.0,
            theta,
            kappa: 0.0,
            sigma: 0.0,
            phi: 0.0,
            chi: 0.0,
        }
    }

    /// PT-symmetric parameters (θ = π/4, χ = 0).
    pub fn pt_symmetric(energy: f64, dm2: f64, kappa: f64, sigma: f64, phi: f64) -> Self {
        Self {
            kappa,
            sigma,
            phi,
            ..Self::vacuum(energy, dm2, FRAC_PI_4)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.energy,
            self.dm2,
            self.mbar2,
            self.theta,
            self.kappa,
            self.sigma,
            self.phi,
            self.chi,
        ];
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.energy <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "energy must be positive, got {}",
                self.energy
            )));
        }
        if self.theta < -PT_ANGLE_TOL || self.theta > std::f64::consts::FRAC_PI_2 + PT_ANGLE_TOL {
            return Err(Error::InvalidParams(format!(
                "theta must lie in [0, pi/2], got {}",
                self.theta
            )));
        }
        Ok(())
    }

    pub fn is_pt_symmetric(&self) -> bool {
        (self.theta - FRAC_PI_4).abs() <= PT_ANGLE_TOL && self.chi.abs() <= PT_ANGLE_TOL
    }

    /// σ + Δm² sin 2θ, the off-diagonal strength.
    pub fn off_diagonal_strength(&self) -> f64 {
        self.sigma + self.dm2 * (2.0 * self.theta).sin()
    }

    /// ω = (κ cos φ + m̄²)/4E, the rate of the global phase.
    pub fn omega(&self) -> f64 {
        (self.kappa * self.phi.cos() + self.mbar2) / (4.0 * self.energy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeKind {
    Unbroken,
    Broken,
    Exceptional,
}

impl std::fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegimeKind::Unbroken => "unbroken",
            RegimeKind::Broken => "broken",
            RegimeKind::Exceptional => "exceptional",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: RegimeKind,
    /// (σ + Δm²)² − κ² sin²φ
    pub discriminant: f64,
}

/// `H = B − iC` with `B` and `C` Hermitian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianSplit {
    pub b: CMat2,
    pub c: CMat2,
}

impl HermitianSplit {
    pub fn reconstruct(&self) -> CMat2 {
        self.b - self.c.scale(Complex::i())
    }
}

/// `H = (1/4E)·(vacuum + [[κe^{iφ}, σe^{iχ}], [σe^{-iχ}, κe^{-iφ}]])`.
pub fn build_hamiltonian(p: &OscillationParams) -> Result<CMat2> {
    p.validate()?;
    let (s2, c2) = (2.0 * p.theta).sin_cos();
    let vacuum = CMat2::real(
        p.mbar2 - p.dm2 * c2,
        p.dm2 * s2,
        p.dm2 * s2,
        p.mbar2 + p.dm2 * c2,
    );
    let non_hermitian = CMat2::new(
        Complex::from_polar(p.kappa, p.phi),
        Complex::from_polar(p.sigma, p.chi),
        Complex::from_polar(p.sigma, -p.chi),
        Complex::from_polar(p.kappa, -p.phi),
    );
    Ok((vacuum + non_hermitian).scale_re(1.0 / (4.0 * p.energy)))
}

pub fn hermitian_split(h: &CMat2) -> Result<HermitianSplit> {
    h.check_finite("Hamiltonian")?;
    let adj = h.adjoint();
    Ok(HermitianSplit {
        b: (*h + adj).scale_re(0.5),
        c: (*h - adj).scale(c(0.0, 0.5)),
    })
}

/// Closed-form eigenvalues `E± = (κcosφ + m̄² ± √[(σ+Δm²sin2θ)² + (−iκsinφ + Δm²cos2θ)²])/4E`.
///
/// The expression carries no χ and is exact only for χ = 0, so other values
/// are rejected.
pub fn eigenvalues_general(p: &OscillationParams) -> Result<(Complex, Complex)> {
    p.validate()?;
    if p.chi != 0.0 {
        return Err(Error::UnsupportedChi(p.chi));
    }
    let (s2, c2) = (2.0 * p.theta).sin_cos();
    let s = c(p.sigma + p.dm2 * s2, 0.0);
    let d = c(p.dm2 * c2, -p.kappa * p.phi.sin());
    let root = (s * s + d * d).sqrt();
    let centre = c(p.kappa * p.phi.cos() + p.mbar2, 0.0);
    let scale = 1.0 / (4.0 * p.energy);
    Ok(((centre + root) * scale, (centre - root) * scale))
}

/// `(σ + Δm²)² − κ² sin²φ` together with the magnitude `(σ + Δm²)² + κ² sin²φ`
/// it is compared against.
pub fn pt_discriminant(p: &OscillationParams) -> (f64, f64) {
    let s = p.sigma + p.dm2;
    let k = p.kappa * p.phi.sin();
    (s * s - k * k, s * s + k * k)
}

pub fn classify_regime(p: &OscillationParams, tol: f64) -> Result<Regime> {
    p.validate()?;
    if !p.is_pt_symmetric() {
        return Err(Error::NotPtSymmetric);
    }
    let (disc, scale) = pt_discriminant(p);
    let kind = if disc > tol * scale {
        RegimeKind::Unbroken
    } else if disc < -tol * scale {
        RegimeKind::Broken
    } else {
        RegimeKind::Exceptional
    };
    Ok(Regime {
        kind,
        discriminant: disc,
    })
}

/// The two (P, T) pairs under which the θ = π/4, χ = 0 Hamiltonian commutes
/// with PT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PtChoice {
    /// P = σ_x, T = K
    SigmaXK,
    /// P = σ_z, T = iσ_y K
    SigmaZISigmaYK,
}

impl PtChoice {
    /// Linear part M of the antiunitary PT = M·K.
    pub fn linear_part(self) -> CMat2 {
        let sigma_x = CMat2::real(0.0, 1.0, 1.0, 0.0);
        match self {
            PtChoice::SigmaXK => sigma_x,
            PtChoice::SigmaZISigmaYK => {
                let sigma_z = CMat2::real(1.0, 0.0, 0.0, -1.0);
                let i_sigma_y = CMat2::real(0.0, 1.0, -1.0, 0.0);
                sigma_z * i_sigma_y
            }
        }
    }
}

/// `‖H·(PT) − (PT)·H‖_F`. Acting on ψ, `H M ψ* − M (Hψ)* = (H M − M H*) ψ*`.
pub fn pt_commutator_check(p: &OscillationParams, choice: PtChoice) -> Result<f64> {
    let h = build_hamiltonian(p)?;
    let m = choice.linear_part();
    Ok((h * m - m * h.conj()).frobenius_norm())
}
