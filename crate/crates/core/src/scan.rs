//! Parameter scans in laboratory units: regime maps over the κ–σ plane and
//! probabilities over L or L/E.
//!
//! User-facing values are eV² for mass-squared couplings, GeV for energies
//! and km for baselines. Angles accept decimals or fractions of π such as
//! `"pi/6"` or `"2pi/3"`.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::brodygraefe::{
    closed_form_params, closed_form_quad, probabilities_closed_form_le, probabilities_trace_h,
    ClosedFormParams, StateBasis,
};
use crate::error::{Error, Result};
use crate::gmetric::{kappa_for_tau, kappa_for_tau_prime, probabilities as gmetric_probabilities, BrokenMetric};
use crate::linalg2::CMat2;
use crate::model::{build_hamiltonian, classify_regime, OscillationParams, RegimeKind, DEFAULT_REGIME_TOL};
use crate::oracle::{probabilities_rk4_h, IntegrationConfig};
use crate::quad::ProbabilityQuad;
use crate::units::{ev2_to_gev2, UnitsMode};

/// An angle in radians, parsed from a number or a π fraction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Angle(pub f64);

impl FromStr for Angle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("cannot parse angle {s:?}"));
        let norm = s.trim().to_lowercase().replace('π', "pi").replace(' ', "");
        let Some(idx) = norm.find("pi") else {
            return norm.parse::<f64>().map(Angle).map_err(|_| bad());
        };
        let coef = norm[..idx].trim_end_matches('*');
        let coef = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            x => x.parse::<f64>().map_err(|_| bad())?,
        };
        let rest = &norm[idx + 2..];
        let denom = if rest.is_empty() {
            1.0
        } else {
            rest.strip_prefix('/')
                .ok_or_else(bad)?
                .parse::<f64>()
                .map_err(|_| bad())?
        };
        let v = coef * std::f64::consts::PI / denom;
        if v.is_finite() {
            Ok(Angle(v))
        } else {
            Err(bad())
        }
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Angle(x)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// G-metric closed forms (PT-symmetric parameters only).
    GMetric,
    /// Closed-form density-matrix probabilities.
    DensityAnalytic,
    /// Normalized propagator conjugation plus trace overlaps.
    #[default]
    DensityTrace,
    /// RK4 integration of the master equation plus trace overlaps.
    DensityRk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScanVariable {
    #[default]
    #[serde(rename = "L", alias = "l")]
    L,
    #[serde(rename = "LE", alias = "le", alias = "L_over_E")]
    LOverE,
    #[serde(rename = "kappa-sigma", alias = "kappa_sigma")]
    KappaSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Everything a scan needs. Also the schema of the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub scan: ScanVariable,
    /// GeV
    pub energy: f64,
    /// eV²
    pub dm2: f64,
    pub mbar2: f64,
    pub theta: Angle,
    pub kappa: f64,
    pub sigma: f64,
    pub phi: Angle,
    pub chi: Angle,
    /// Solve κ from the unbroken-frame angle instead of giving it.
    pub tau: Option<Angle>,
    /// Solve κ from the broken-frame parameter instead of giving it.
    pub tau_p: Option<f64>,
    /// Closed-form angles used as given; density methods then evolve under
    /// the effective Hamiltonian they describe.
    pub alpha: Option<Angle>,
    pub beta: Option<Angle>,
    /// Range of L (km) or L/E (km/GeV).
    pub start: f64,
    pub end: f64,
    pub samples: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub kappa_samples: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_samples: usize,
    /// For L/E scans: vary E at fixed L instead of L at E = 1 GeV.
    pub vary_energy: bool,
    pub fixed_l_km: f64,
    pub units_mode: UnitsMode,
    pub basis: StateBasis,
    pub broken_metric: BrokenMetric,
    pub rk4_steps_per_period: usize,
    pub out: Option<String>,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::default(),
            scan: ScanVariable::default(),
            energy: 1.0,
            dm2: 2.5e-3,
            mbar2: 0.0,
            theta: Angle(std::f64::consts::FRAC_PI_4),
            kappa: 0.0,
            sigma: 0.0,
            phi: Angle(std::f64::consts::FRAC_PI_2),
            chi: Angle(0.0),
            tau: None,
            tau_p: None,
            alpha: None,
            beta: None,
            start: 0.0,
            end: 3000.0,
            samples: 301,
            kappa_min: 0.0,
            kappa_max: 0.02,
            kappa_samples: 200,
            sigma_min: -0.01,
            sigma_max: 0.01,
            sigma_samples: 200,
            vary_energy: false,
            fixed_l_km: 1000.0,
            units_mode: UnitsMode::default(),
            basis: StateBasis::default(),
            broken_metric: BrokenMetric::default(),
            rk4_steps_per_period: IntegrationConfig::default().steps_per_period,
            out: None,
            format: OutputFormat::default(),
        }
    }
}

fn check_range(name: &str, lo: f64, hi: f64, samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(Error::EmptyGrid);
    }
    if samples < 2 {
        return Err(Error::InvalidConfig(format!("{name}: need at least 2 samples")));
    }
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidConfig(format!(
            "{name}: range must be finite and increasing, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Natural-unit parameters plus, when closed-form angles were given, the
/// effective Hamiltonian they describe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub params: OscillationParams,
    pub angles: Option<ClosedFormParams>,
}

impl Resolved {
    pub fn hamiltonian(&self) -> Result<CMat2> {
        match &self.angles {
            Some(cf) => Ok(cf.effective_hamiltonian()),
            None => build_hamiltonian(&self.params),
        }
    }
}

impl RunConfig {
    /// Parameters in natural units at energy `energy` (GeV).
    pub fn resolve_at(&self, energy: f64) -> Result<Resolved> {
        let (phi, sigma) = (self.phi.0, self.sigma);
        let given = [self.tau.is_some(), self.tau_p.is_some()];
        if given.iter().filter(|x| **x).count() > 1 || (self.kappa != 0.0 && given.contains(&true)) {
            return Err(Error::InvalidConfig("give at most one of kappa, tau, tau_p".into()));
        }
        let kappa = if let Some(tau) = self.tau {
            kappa_for_tau(self.dm2, sigma, phi, tau.0)
        } else if let Some(tp) = self.tau_p {
            kappa_for_tau_prime(self.dm2, sigma, phi, tp)
        } else {
            self.kappa
        };
        let params = OscillationParams {
            energy,
            dm2: ev2_to_gev2(self.dm2),
            mbar2: ev2_to_gev2(self.mbar2),
            theta: self.theta.0,
            kappa: ev2_to_gev2(kappa),
            sigma: ev2_to_gev2(sigma),
            phi,
            chi: self.chi.0,
        };
        params.validate()?;
        let angles = match (self.alpha, self.beta) {
            (None, None) => None,
            (Some(a), Some(b)) => {
                if self.tau.is_some() || self.tau_p.is_some() || self.kappa != 0.0 {
                    return Err(Error::InvalidConfig("alpha/beta replace kappa, tau and tau_p".into()));
                }
                Some(ClosedFormParams::from_angles(a.0, b.0, params.off_diagonal_strength(), energy))
            }
            _ => return Err(Error::InvalidConfig("alpha and beta must be given together".into())),
        };
        Ok(Resolved { params, angles })
    }

    pub fn validate(&self) -> Result<()> {
        match self.scan {
            ScanVariable::KappaSigma => {
                check_range("kappa", self.kappa_min, self.kappa_max, self.kappa_samples)?;
                check_range("sigma", self.sigma_min, self.sigma_max, self.sigma_samples)?;
            }
            _ => {
                check_range("scan", self.start, self.end, self.samples)?;
                if self.start < 0.0 {
                    return Err(Error::InvalidConfig("baselines must be non-negative".into()));
                }
            }
        }
        if self.vary_energy && !(self.fixed_l_km > 0.0 && self.fixed_l_km.is_finite()) {
            return Err(Error::InvalidConfig("fixed_l_km must be positive".into()));
        }
        IntegrationConfig {
            steps_per_period: self.rk4_steps_per_period,
            renormalize_each_step: true,
        }
        .validate()?;
        self.resolve_at(self.energy)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub x: f64,
    pub p_aa: f64,
    pub p_ab: f64,
    pub p_ba: f64,
    pub p_bb: f64,
    pub sum_a: f64,
    pub sum_b: f64,
    /// Regime kind for PT-symmetric parameters, `"none"` otherwise.
    pub regime: String,
    /// Empty unless the point could not be evaluated.
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    /// eV²
    pub kappa: f64,
    /// eV²
    pub sigma: f64,
    pub regime: RegimeKind,
    /// (σ + Δm²)² − κ² sin²φ in eV⁴
    pub discriminant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutput {
    pub rows: Vec<ScanRow>,
    pub warnings: Vec<String>,
}

fn regime_label(p: &OscillationParams, angles: bool) -> String {
    if angles || !p.is_pt_symmetric() {
        return "none".into();
    }
    match classify_regime(p, DEFAULT_REGIME_TOL) {
        Ok(r) => r.kind.to_string(),
        Err(_) => "none".into(),
    }
}

/// Probabilities at one scan point.
pub fn evaluate(cfg: &RunConfig, l_km: f64, energy: f64) -> Result<ProbabilityQuad> {
    let r = cfg.resolve_at(energy)?;
    let t = cfg.units_mode.km_to_time(l_km);
    match cfg.method {
        Method::GMetric => {
            if r.angles.is_some() {
                return Err(Error::InvalidConfig("g-metric takes kappa, tau or tau_p, not alpha/beta".into()));
            }
            gmetric_probabilities(&r.params, t, cfg.broken_metric)
        }
        Method::DensityAnalytic => {
            let cf = match r.angles {
                Some(cf) => cf,
                None => closed_form_params(&r.params)?,
            };
            match cfg.units_mode {
                UnitsMode::PaperRounded => Ok(probabilities_closed_form_le(
                    cf.alpha,
                    cf.beta,
                    cfg.theta.0,
                    cfg.dm2,
                    cfg.sigma,
                    l_km,
                    energy,
                    cfg.units_mode,
                )
                .probabilities),
                UnitsMode::Exact => Ok(closed_form_quad(cf.alpha, cf.beta, cf.gamma_r * t, cf.xi * t, cfg.theta.0)),
            }
        }
        Method::DensityTrace => probabilities_trace_h(&r.hamiltonian()?, cfg.theta.0, t, cfg.basis),
        Method::DensityRk4 => {
            let ic = IntegrationConfig {
                steps_per_period: cfg.rk4_steps_per_period,
                renormalize_each_step: true,
            };
            probabilities_rk4_h(&r.hamiltonian()?, cfg.theta.0, t, cfg.basis, &ic)
        }
    }
}

/// Probability rows over L (km) at fixed E, or over L/E (km/GeV).
pub fn probability_scan(cfg: &RunConfig) -> Result<ScanOutput> {
    if cfg.scan == ScanVariable::KappaSigma {
        return Err(Error::InvalidConfig("probability scans need scan = L or LE".into()));
    }
    cfg.validate()?;
    if cfg.method == Method::GMetric {
        let r = cfg.resolve_at(cfg.energy)?;
        if !r.params.is_pt_symmetric() {
            return Err(Error::NotPtSymmetric);
        }
    }
    let mut warnings = Vec::new();
    if cfg.method == Method::DensityAnalytic && cfg.units_mode == UnitsMode::PaperRounded {
        let le = probabilities_closed_form_le(0.0, 0.0, cfg.theta.0, cfg.dm2, cfg.sigma, 0.0, 1.0, cfg.units_mode);
        if le.rate_discrepancy {
            warnings.push(
                "rounded-units closed form uses the rate sigma + dm2 sin^2(2 theta), which differs \
                 from sigma + dm2 sin(2 theta) at this theta"
                    .into(),
            );
        }
    }
    let xs = linspace(cfg.start, cfg.end, cfg.samples);
    let rows = xs
        .par_iter()
        .map(|&x| {
            let (l_km, energy) = match (cfg.scan, cfg.vary_energy) {
                (ScanVariable::LOverE, true) => (cfg.fixed_l_km, cfg.fixed_l_km / x),
                (ScanVariable::LOverE, false) => (x, 1.0),
                _ => (x, cfg.energy),
            };
            let regime = cfg
                .resolve_at(if energy.is_finite() { energy } else { cfg.energy })
                .map(|r| regime_label(&r.params, r.angles.is_some()))
                .unwrap_or_else(|_| "none".into());
            let result = if energy.is_finite() && energy > 0.0 {
                evaluate(cfg, l_km, energy)
            } else {
                Err(Error::InvalidParams(format!("energy {energy} at L/E = {x}")))
            };
            match result {
                Ok(q) => ScanRow {
                    x,
                    p_aa: q.p_aa,
                    p_ab: q.p_ab,
                    p_ba: q.p_ba,
                    p_bb: q.p_bb,
                    sum_a: q.sum_a(),
                    sum_b: q.sum_b(),
                    regime,
                    error: String::new(),
                },
                Err(e) => ScanRow {
                    x,
                    p_aa: f64::NAN,
                    p_ab: f64::NAN,
                    p_ba: f64::NAN,
                    p_bb: f64::NAN,
                    sum_a: f64::NAN,
                    sum_b: f64::NAN,
                    regime,
                    error: e.to_string(),
                },
            }
        })
        .collect();
    Ok(ScanOutput { rows, warnings })
}

/// Regime classification over the κ–σ grid at θ = π/4, χ = 0. Rows run
/// over σ fastest.
pub fn phase_map(cfg: &RunConfig) -> Result<Vec<PhaseRow>> {
    check_range("kappa", cfg.kappa_min, cfg.kappa_max, cfg.kappa_samples)?;
    check_range("sigma", cfg.sigma_min, cfg.sigma_max, cfg.sigma_samples)?;
    let ks = linspace(cfg.kappa_min, cfg.kappa_max, cfg.kappa_samples);
    let ss = linspace(cfg.sigma_min, cfg.sigma_max, cfg.sigma_samples);
    let phi = cfg.phi.0;
    let mut rows = Vec::with_capacity(ks.len() * ss.len());
    for &k in &ks {
        for &s in &ss {
            let p = OscillationParams::pt_symmetric(cfg.energy, ev2_to_gev2(cfg.dm2), ev2_to_gev2(k), ev2_to_gev2(s), phi);
            p.validate()?;
            let regime = classify_regime(&p, DEFAULT_REGIME_TOL)?;
            let ksin = k * phi.sin();
            rows.push(PhaseRow {
                kappa: k,
                sigma: s,
                regime: regime.kind,
                discriminant: (s + cfg.dm2).powi(2) - ksin * ksin,
            });
        }
    }
    Ok(rows)
}

/// Upper Unbroken/Broken boundary of a phase map: for each κ column the
/// midpoint of the highest σ step where the regime changes.
pub fn upper_boundary(rows: &[PhaseRow]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let k = rows[i].kappa;
        let mut j = i;
        while j < rows.len() && rows[j].kappa == k {
            j += 1;
        }
        let col = &rows[i..j];
        if let Some(w) = col.windows(2).rev().find(|w| w[0].regime != w[1].regime) {
            out.push((k, 0.5 * (w[0].sigma + w[1].sigma)));
        }
        i = j;
    }
    out
}

/// Least-squares line `y = slope·x + intercept`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn rows_to_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from("x,p_aa,p_ab,p_ba,p_bb,sum_a,sum_b,regime,error\n");
    for r in rows {
        let nums = [r.x, r.p_aa, r.p_ab, r.p_ba, r.p_bb, r.sum_a, r.sum_b].map(fmt_num);
        let _ = writeln!(out, "{},{},{}", nums.join(","), csv_field(&r.regime), csv_field(&r.error));
    }
    out
}

pub fn phase_rows_to_csv(rows: &[PhaseRow]) -> String {
    let mut out = String::from("kappa,sigma,regime,discriminant\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_num(r.kappa),
            fmt_num(r.sigma),
            r.regime,
            fmt_num(r.discriminant)
        );
    }
    out
}

/// JSON cannot hold NaN, so error rows carry `null` probabilities.
pub fn scan_to_json(out: &ScanOutput) -> String {
    serde_json::to_string_pretty(out).expect("scan output serializes")
}

pub fn phase_rows_to_json(rows: &[PhaseRow]) -> String {
    serde_json::to_string_pretty(rows).expect("phase map serializes")
}
