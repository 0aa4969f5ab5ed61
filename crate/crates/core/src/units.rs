//! Natural-unit conversions.
//!
//! Internally mass-squared values are GeV², energies GeV and times GeV⁻¹.
//! User-facing inputs are eV², GeV and km.

use serde::{Deserialize, Serialize};

/// ħc in GeV·km.
pub const HBAR_C_GEV_KM: f64 = 1.973_269_804e-19;

/// 1 km expressed in GeV⁻¹.
pub const KM_TO_INV_GEV: f64 = 1.0 / HBAR_C_GEV_KM;

/// 1/(4ħc) in GeV·eV⁻²·km⁻¹: the coefficient of Δm²[eV²]·L[km]/E[GeV].
pub const PHASE_FACTOR_EXACT: f64 = 1e-18 / (4.0 * HBAR_C_GEV_KM);

/// The customary rounded value of [`PHASE_FACTOR_EXACT`].
pub const PHASE_FACTOR_ROUNDED: f64 = 1.27;

pub const EV2_TO_GEV2: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitsMode {
    /// Phases built from the rounded 1.27 / 2.54 factors.
    #[serde(rename = "rounded", alias = "paper-rounded")]
    PaperRounded,
    /// Phases from ħc.
    #[default]
    Exact,
}

impl UnitsMode {
    /// Coefficient `k` in `phase = k · Δm²[eV²] · L[km] / E[GeV]`.
    pub fn phase_factor(self) -> f64 {
        match self {
            UnitsMode::PaperRounded => PHASE_FACTOR_ROUNDED,
            UnitsMode::Exact => PHASE_FACTOR_EXACT,
        }
    }

    /// Baseline in km → propagation time in GeV⁻¹. In rounded mode the
    /// conversion is chosen so that `Δm² t / 4E = 1.27 Δm² L / E`.
    pub fn km_to_time(self, l_km: f64) -> f64 {
        l_km * 4.0 * self.phase_factor() / EV2_TO_GEV2
    }
}

pub fn ev2_to_gev2(x: f64) -> f64 {
    x * EV2_TO_GEV2
}

pub fn gev2_to_ev2(x: f64) -> f64 {
    x / EV2_TO_GEV2
}
