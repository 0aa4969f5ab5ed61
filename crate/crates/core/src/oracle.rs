//! Independent reference computations: a Taylor-series matrix exponential,
//! a fixed-step RK4 integrator for the density master equation, and a
//! harness comparing every evaluation path on a parameter grid.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brodygraefe::{
    closed_form_params, initial_density_in, probabilities_closed_form, probabilities_pt_limit,
    probabilities_trace_h, probability_trace, rhs_matrix, DensityMatrix, FlavorLabel, StateBasis,
};
use crate::error::{Error, Result};
use crate::gmetric::{
    probabilities_broken, probabilities_broken_pipeline, probabilities_unbroken,
    probabilities_unbroken_pipeline, BrokenMetric,
};
use crate::linalg2::{CMat2, Complex};
use crate::model::{build_hamiltonian, classify_regime, hermitian_split, OscillationParams, RegimeKind, DEFAULT_REGIME_TOL};
use crate::quad::ProbabilityQuad;

/// `e^{-iHt}` from a truncated Taylor series with scaling and squaring.
pub fn expm_taylor(h: &CMat2, t: f64, terms: usize) -> CMat2 {
    let a = h.scale(Complex::new(0.0, -t));
    let n = a.frobenius_norm();
    let squarings = if n > 0.5 { (n / 0.5).log2().ceil() as u32 } else { 0 };
    let a = a.scale_re(0.5f64.powi(squarings as i32));
    let mut sum = CMat2::identity();
    let mut term = CMat2::identity();
    for k in 1..=terms {
        term = (term * a).scale_re(1.0 / k as f64);
        sum = sum + term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub steps_per_period: usize,
    pub renormalize_each_step: bool,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            steps_per_period: 2000,
            renormalize_each_step: true,
        }
    }
}

pub const MIN_STEPS_PER_PERIOD: usize = 16;

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < MIN_STEPS_PER_PERIOD {
            return Err(Error::InvalidConfig(format!(
                "steps_per_period must be at least {MIN_STEPS_PER_PERIOD}, got {}",
                self.steps_per_period
            )));
        }
        Ok(())
    }

    /// Number of steps for evolving `h` over `t_end`. The frequency scale is
    /// `‖H − (tr H/2)I‖_F`, which bounds both the oscillation and the damping
    /// rates and stays nonzero at an exceptional point.
    pub fn steps_for(&self, h: &CMat2, t_end: f64) -> usize {
        let rate = h.traceless().frobenius_norm();
        let periods = rate * t_end.abs() / std::f64::consts::TAU;
        let n = (periods * self.steps_per_period as f64).ceil();
        (n as usize).max(MIN_STEPS_PER_PERIOD)
    }
}

/// Classical RK4 on the master equation with a fixed step.
pub fn integrate_density_rk4(
    p: &OscillationParams,
    rho0: &DensityMatrix,
    t_end: f64,
    cfg: &IntegrationConfig,
) -> Result<DensityMatrix> {
    integrate_density_rk4_h(&build_hamiltonian(p)?, rho0, t_end, cfg)
}

pub fn integrate_density_rk4_h(
    h: &CMat2,
    rho0: &DensityMatrix,
    t_end: f64,
    cfg: &IntegrationConfig,
) -> Result<DensityMatrix> {
    cfg.validate()?;
    integrate_steps(h, rho0, t_end, cfg.steps_for(h, t_end), cfg.renormalize_each_step)
}

/// RK4 with an explicit number of steps.
pub fn integrate_steps(
    h: &CMat2,
    rho0: &DensityMatrix,
    t_end: f64,
    steps: usize,
    renormalize: bool,
) -> Result<DensityMatrix> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParams(format!("t_end must be finite and non-negative, got {t_end}")));
    }
    if t_end == 0.0 {
        return Ok(*rho0);
    }
    let split = hermitian_split(h)?;
    let dt = t_end / steps as f64;
    let f = |r: &CMat2| rhs_matrix(&split, r);
    let mut rho = *rho0.matrix();
    for _ in 0..steps {
        let k1 = f(&rho);
        let k2 = f(&(rho + k1.scale_re(0.5 * dt)));
        let k3 = f(&(rho + k2.scale_re(0.5 * dt)));
        let k4 = f(&(rho + k3.scale_re(dt)));
        rho = rho + (k1 + k2.scale_re(2.0) + k3.scale_re(2.0) + k4).scale_re(dt / 6.0);
        if renormalize {
            rho = rho.scale_re(1.0 / rho.trace().re);
        }
        if !rho.is_finite() {
            return Err(Error::NonFinite("RK4 state"));
        }
    }
    Ok(DensityMatrix::new_unchecked((rho + rho.adjoint()).scale_re(0.5)))
}

/// Four channel probabilities from RK4-evolved flavor densities.
pub fn probabilities_rk4_h(
    h: &CMat2,
    theta: f64,
    t: f64,
    basis: StateBasis,
    cfg: &IntegrationConfig,
) -> Result<ProbabilityQuad> {
    let ra = initial_density_in(basis, theta, FlavorLabel::A);
    let rb = initial_density_in(basis, theta, FlavorLabel::B);
    let ra_t = integrate_density_rk4_h(h, &ra, t, cfg)?;
    let rb_t = integrate_density_rk4_h(h, &rb, t, cfg)?;
    Ok(ProbabilityQuad::new(
        probability_trace(&ra, &ra_t),
        probability_trace(&rb, &ra_t),
        probability_trace(&ra, &rb_t),
        probability_trace(&rb, &rb_t),
    ))
}

pub fn probabilities_rk4(
    p: &OscillationParams,
    t: f64,
    basis: StateBasis,
    cfg: &IntegrationConfig,
) -> Result<ProbabilityQuad> {
    probabilities_rk4_h(&build_hamiltonian(p)?, p.theta, t, basis, cfg)
}

/// Names of the compared method pairs and their tolerances.
pub const PAIR_CLOSED_PIPELINE: &str = "closed-form vs trace-pipeline";
pub const PAIR_PIPELINE_RK4: &str = "trace-pipeline vs rk4";
pub const PAIR_CLOSED_RK4: &str = "closed-form vs rk4";
pub const PAIR_PT_LIMIT: &str = "pt-limit vs closed-form";
pub const PAIR_GMETRIC_UNBROKEN: &str = "g-metric unbroken closed-form vs pipeline";
pub const PAIR_GMETRIC_BROKEN: &str = "g-metric broken closed-form vs pipeline";
pub const PAIR_CONSERVATION_CLOSED: &str = "closed-form conservation";
pub const PAIR_CONSERVATION_PIPELINE: &str = "trace-pipeline conservation";

pub fn tolerance(pair: &str) -> f64 {
    match pair {
        PAIR_CLOSED_PIPELINE => 1e-9,
        PAIR_PIPELINE_RK4 | PAIR_CLOSED_RK4 => 1e-8,
        PAIR_PT_LIMIT | PAIR_GMETRIC_UNBROKEN => 1e-12,
        PAIR_GMETRIC_BROKEN => 1e-11,
        PAIR_CONSERVATION_CLOSED | PAIR_CONSERVATION_PIPELINE => 1e-10,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub params: OscillationParams,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub max_abs_dev: f64,
    pub worst_point: Option<GridPoint>,
    pub tolerance: f64,
    pub samples: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub point: GridPoint,
    pub method: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub point: GridPoint,
    pub method: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pairs: BTreeMap<String, PairStats>,
    pub skips: Vec<Skip>,
    pub failures: Vec<PointFailure>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Combines two reports; per-pair maxima and sample counts accumulate.
    pub fn merge(&mut self, other: ValidationReport) {
        for (name, s) in other.pairs {
            match self.pairs.get_mut(&name) {
                Some(mine) => {
                    if s.max_abs_dev > mine.max_abs_dev {
                        mine.max_abs_dev = s.max_abs_dev;
                        mine.worst_point = s.worst_point;
                    }
                    mine.samples += s.samples;
                    mine.pass = mine.max_abs_dev <= mine.tolerance;
                }
                None => {
                    self.pairs.insert(name, s);
                }
            }
        }
        self.skips.extend(other.skips);
        self.failures.extend(other.failures);
        self.pass = self.failures.is_empty() && self.pairs.values().all(|s| s.pass);
    }

    pub fn failed_pairs(&self) -> Vec<&str> {
        self.pairs
            .iter()
            .filter(|(_, s)| !s.pass)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossValidateOptions {
    /// `None` leaves RK4 out of the comparison.
    pub rk4: Option<IntegrationConfig>,
    pub basis: StateBasis,
    /// Added to the closed-form P_ab at every point. Used to check that the
    /// harness notices a broken formula.
    pub fault: Option<f64>,
}

impl Default for CrossValidateOptions {
    fn default() -> Self {
        Self {
            rk4: Some(IntegrationConfig::default()),
            basis: StateBasis::Vacuum,
            fault: None,
        }
    }
}

#[derive(Default)]
struct PointOutcome {
    devs: Vec<(&'static str, f64)>,
    skips: Vec<Skip>,
    failures: Vec<PointFailure>,
}

pub fn cross_validate(p_grid: &[OscillationParams], t_grid: &[f64]) -> Result<ValidationReport> {
    cross_validate_with(p_grid, t_grid, &CrossValidateOptions::default())
}

/// Evaluates every available method at each `(p, t)` and records pairwise
/// deviations. Per-point errors become recorded failures; closed forms are
/// skipped at exceptional points.
pub fn cross_validate_with(
    p_grid: &[OscillationParams],
    t_grid: &[f64],
    opts: &CrossValidateOptions,
) -> Result<ValidationReport> {
    if p_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(cfg) = &opts.rk4 {
        cfg.validate()?;
    }
    let points: Vec<GridPoint> = p_grid
        .iter()
        .flat_map(|p| t_grid.iter().map(move |&t| GridPoint { params: *p, t }))
        .collect();
    let outcomes: Vec<PointOutcome> = points.par_iter().map(|pt| evaluate_point(pt, opts)).collect();

    let mut pairs: BTreeMap<String, PairStats> = BTreeMap::new();
    let mut skips = Vec::new();
    let mut failures = Vec::new();
    for (pt, out) in points.iter().zip(outcomes) {
        for (name, dev) in out.devs {
            let entry = pairs.entry(name.to_string()).or_insert(PairStats {
                max_abs_dev: 0.0,
                worst_point: None,
                tolerance: tolerance(name),
                samples: 0,
                pass: true,
            });
            entry.samples += 1;
            if dev > entry.max_abs_dev || dev.is_nan() {
                entry.max_abs_dev = if dev.is_nan() { f64::INFINITY } else { dev };
                entry.worst_point = Some(*pt);
            }
        }
        skips.extend(out.skips);
        failures.extend(out.failures);
    }
    for s in pairs.values_mut() {
        s.pass = s.max_abs_dev <= s.tolerance;
    }
    let pass = failures.is_empty() && pairs.values().all(|s| s.pass);
    Ok(ValidationReport {
        pairs,
        skips,
        failures,
        pass,
    })
}

fn conservation_dev(q: &ProbabilityQuad) -> f64 {
    (q.sum_a() - 1.0).abs().max((q.sum_b() - 1.0).abs())
}

fn evaluate_point(pt: &GridPoint, opts: &CrossValidateOptions) -> PointOutcome {
    let mut out = PointOutcome::default();
    let (p, t) = (&pt.params, pt.t);
    let fail = |out: &mut PointOutcome, method: &str, e: Error| {
        out.failures.push(PointFailure {
            point: *pt,
            method: method.to_string(),
            error: e.to_string(),
        })
    };
    let skip = |out: &mut PointOutcome, method: &str, reason: String| {
        out.skips.push(Skip {
            point: *pt,
            method: method.to_string(),
            reason,
        })
    };

    let h = match build_hamiltonian(p) {
        Ok(h) => h,
        Err(e) => {
            fail(&mut out, "hamiltonian", e);
            return out;
        }
    };

    let regime = if p.is_pt_symmetric() {
        classify_regime(p, DEFAULT_REGIME_TOL).ok().map(|r| r.kind)
    } else {
        None
    };
    let at_ep = regime == Some(RegimeKind::Exceptional);

    let pipeline = match probabilities_trace_h(&h, p.theta, t, opts.basis) {
        Ok(q) => {
            out.devs.push((PAIR_CONSERVATION_PIPELINE, conservation_dev(&q)));
            Some(q)
        }
        Err(e) => {
            fail(&mut out, "trace-pipeline", e);
            None
        }
    };

    // closed forms are written for the vacuum pair of initial states
    let closed = if opts.basis != StateBasis::Vacuum {
        skip(&mut out, "closed-form", "closed form requires the vacuum state basis".into());
        None
    } else if at_ep {
        skip(&mut out, "closed-form", "exceptional point".into());
        None
    } else if p.chi != 0.0 {
        skip(&mut out, "closed-form", "chi != 0".into());
        None
    } else {
        match probabilities_closed_form(p, t) {
            Ok(mut q) => {
                if let Some(f) = opts.fault {
                    q.p_ab += f;
                }
                out.devs.push((PAIR_CONSERVATION_CLOSED, conservation_dev(&q)));
                Some(q)
            }
            Err(Error::DegenerateSech) => {
                skip(&mut out, "closed-form", Error::DegenerateSech.to_string());
                None
            }
            Err(e) => {
                fail(&mut out, "closed-form", e);
                None
            }
        }
    };

    let rk4 = opts.rk4.as_ref().and_then(|cfg| {
        match probabilities_rk4_h(&h, p.theta, t, opts.basis, cfg) {
            Ok(q) => Some(q),
            Err(e) => {
                fail(&mut out, "rk4", e);
                None
            }
        }
    });

    if let (Some(a), Some(b)) = (&closed, &pipeline) {
        out.devs.push((PAIR_CLOSED_PIPELINE, a.max_abs_diff(b)));
    }
    if let (Some(a), Some(b)) = (&pipeline, &rk4) {
        out.devs.push((PAIR_PIPELINE_RK4, a.max_abs_diff(b)));
    }
    if let (Some(a), Some(b)) = (&closed, &rk4) {
        out.devs.push((PAIR_CLOSED_RK4, a.max_abs_diff(b)));
    }

    if let Some(kind) = regime {
        if let Some(a) = &closed {
            match probabilities_pt_limit(p, t) {
                Ok(b) => out.devs.push((PAIR_PT_LIMIT, a.max_abs_diff(&b))),
                Err(e) => fail(&mut out, "pt-limit", e),
            }
        }
        let gm = match kind {
            RegimeKind::Unbroken => Some((
                PAIR_GMETRIC_UNBROKEN,
                probabilities_unbroken(p, t).and_then(|a| Ok((a, probabilities_unbroken_pipeline(p, t)?))),
            )),
            RegimeKind::Broken => Some((
                PAIR_GMETRIC_BROKEN,
                probabilities_broken(p, t)
                    .and_then(|a| Ok((a, probabilities_broken_pipeline(p, t, BrokenMetric::TimeDependent)?))),
            )),
            RegimeKind::Exceptional => {
                skip(&mut out, "g-metric", "exceptional point".into());
                None
            }
        };
        match gm {
            Some((name, Ok((a, b)))) => out.devs.push((name, a.max_abs_diff(&b))),
            Some((_, Err(Error::UnsupportedBranch(r)))) => {
                skip(&mut out, "g-metric", Error::UnsupportedBranch(r).to_string())
            }
            Some((name, Err(e))) => fail(&mut out, name, e),
            None => {}
        }
    }
    out
}

/// Seeded random parameter draws in natural units around the atmospheric
/// scale: two thirds general (χ = 0), one third PT-symmetric.
pub fn random_grid(seed: u64, n: usize) -> Vec<OscillationParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dm2 = 2.5e-21;
    (0..n)
        .map(|i| {
            let energy = rng.gen_range(0.5..3.0);
            let d = rng.gen_range(0.5..2.0) * dm2;
            let kappa = rng.gen_range(-3.0..3.0) * dm2;
            let sigma = rng.gen_range(-0.8..0.8) * d;
            let phi = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let mbar2 = rng.gen_range(0.0..2.0) * dm2;
            if i % 3 == 2 {
                OscillationParams {
                    mbar2,
                    ..OscillationParams::pt_symmetric(energy, d, kappa, sigma, phi)
                }
            } else {
                OscillationParams {
                    energy,
                    dm2: d,
                    mbar2,
                    theta: rng.gen_range(0.0..std::f64::consts::FRAC_PI_2),
                    kappa,
                    sigma,
                    phi,
                    chi: 0.0,
                }
            }
        })
        .collect()
}

/// Evenly spaced times covering baselines `0..=l_max_km` in exact units.
pub fn baseline_times(l_max_km: f64, n: usize) -> Vec<f64> {
    let mode = crate::units::UnitsMode::Exact;
    if n <= 1 {
        return vec![mode.km_to_time(l_max_km)];
    }
    (0..n)
        .map(|i| mode.km_to_time(l_max_km * i as f64 / (n - 1) as f64))
        .collect()
}

/// True when closed-form parameters exist for `p`.
pub fn has_closed_form(p: &OscillationParams) -> bool {
    closed_form_params(p).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brodygraefe::{evolve_density, initial_density};
    use crate::linalg2::{c, evolution_operator};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    const DM2: f64 = 2.5e-21;

    #[test]
    fn taylor_of_diagonal_and_zero() {
        let h = CMat2::real(1.0, 0.0, 0.0, -2.0);
        let u = expm_taylor(&h, 0.3, 30);
        let expect = CMat2::diag(Complex::from_polar(1.0, -0.3), Complex::from_polar(1.0, 0.6));
        assert!(u.max_abs_diff(&expect) < 1e-14);
        assert!(expm_taylor(&h, 0.0, 30).max_abs_diff(&CMat2::identity()) < 1e-16);
    }

    #[test]
    fn taylor_handles_large_norm() {
        let h = CMat2::new(c(3.0, -1.0), c(2.0, 0.5), c(-1.0, 0.2), c(-4.0, 0.7));
        let u = expm_taylor(&h, 2.0, 30);
        let v = evolution_operator(&h, 2.0).unwrap();
        assert!(u.max_abs_diff(&v) < 1e-11 * v.frobenius_norm());
    }

    #[test]
    fn config_validation() {
        let cfg = IntegrationConfig {
            steps_per_period: 8,
            renormalize_each_step: true,
        };
        assert!(cfg.validate().is_err());
        assert!(IntegrationConfig::default().validate().is_ok());
    }

    #[test]
    fn rk4_zero_time_is_identity() {
        let p = OscillationParams::pt_symmetric(1.0, DM2, DM2, 0.0, 0.4);
        let rho = initial_density(p.theta, FlavorLabel::A);
        let r = integrate_density_rk4(&p, &rho, 0.0, &IntegrationConfig::default()).unwrap();
        assert_eq!(r, rho);
    }

    #[test]
    fn rk4_hermitian_full_period() {
        let p = OscillationParams::vacuum(1.0, DM2, 0.4);
        let h = build_hamiltonian(&p).unwrap();
        // eigenvalue splitting Δm²/2E, period 2π·2E/Δm²
        let period = std::f64::consts::TAU * 2.0 / DM2;
        let rho = initial_density_in(StateBasis::Canonical, p.theta, FlavorLabel::A);
        let r = integrate_density_rk4_h(&h, &rho, period, &IntegrationConfig::default()).unwrap();
        assert!(r.matrix().max_abs_diff(rho.matrix()) < 1e-9);
    }

    #[test]
    fn rk4_matches_analytic() {
        let p = OscillationParams::pt_symmetric(1.0, DM2, 1e-21, 0.0, FRAC_PI_6);
        let h = build_hamiltonian(&p).unwrap();
        let rho = initial_density(p.theta, FlavorLabel::A);
        let a = evolve_density(&h, &rho, 1e21).unwrap();
        let b = integrate_density_rk4_h(&h, &rho, 1e21, &IntegrationConfig::default()).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-8);
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let p = OscillationParams::pt_symmetric(1.0, DM2, 1.5 * DM2, 0.2 * DM2, 0.7);
        let h = build_hamiltonian(&p).unwrap();
        let rho = initial_density_in(StateBasis::Canonical, p.theta, FlavorLabel::A);
        let t = 4e21;
        let exact = evolve_density(&h, &rho, t).unwrap();
        let err = |n: usize| {
            let r = integrate_steps(&h, &rho, t, n, false).unwrap();
            r.matrix().max_abs_diff(exact.matrix())
        };
        let (e1, e2) = (err(60), err(120));
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} ({e1}, {e2})");
    }

    #[test]
    fn renormalized_and_plain_rk4_agree() {
        let p = OscillationParams {
            chi: 0.3,
            ..OscillationParams::pt_symmetric(1.0, DM2, 2.0 * DM2, 0.5 * DM2, 1.1)
        };
        let h = build_hamiltonian(&p).unwrap();
        let rho = initial_density(0.4, FlavorLabel::B);
        let cfg = IntegrationConfig::default();
        let plain = IntegrationConfig {
            renormalize_each_step: false,
            ..cfg
        };
        let a = integrate_density_rk4_h(&h, &rho, 3e21, &cfg).unwrap();
        let b = integrate_density_rk4_h(&h, &rho, 3e21, &plain).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-9);
    }

    #[test]
    fn cross_validate_hermitian_point() {
        let p = OscillationParams::vacuum(1.0, DM2, 0.5);
        let r = cross_validate(&[p], &baseline_times(1000.0, 5)).unwrap();
        assert!(r.pass, "{}", r.to_json());
        for s in r.pairs.values() {
            assert!(s.max_abs_dev < 1e-10);
        }
    }

    #[test]
    fn cross_validate_across_exceptional_point() {
        let d = DM2;
        // κ sin(π/6) = Δm² at κ = 2Δm²
        let grid: Vec<_> = [1.8, 2.0, 2.2]
            .iter()
            .map(|k| OscillationParams::pt_symmetric(1.0, d, k * d, 0.0, FRAC_PI_6))
            .collect();
        let r = cross_validate(&grid, &baseline_times(2000.0, 4)).unwrap();
        assert!(r.pass, "{}", r.to_json());
        let ep_skips = r.skips.iter().filter(|s| s.reason == "exceptional point").count();
        assert_eq!(ep_skips, 2 * 4);
        assert!(r.pairs[PAIR_CLOSED_PIPELINE].samples == 2 * 4);
        assert!(r.pairs[PAIR_GMETRIC_UNBROKEN].samples == 4);
        assert!(r.pairs[PAIR_GMETRIC_BROKEN].samples == 4);
    }

    #[test]
    fn cross_validate_random_grid() {
        let grid = random_grid(7, 60);
        let r = cross_validate(&grid, &baseline_times(3000.0, 4)).unwrap();
        assert!(r.pass, "{}", r.to_json());
    }

    #[test]
    fn injected_fault_is_detected() {
        let p = OscillationParams::pt_symmetric(1.0, DM2, 0.5 * DM2, 0.0, FRAC_PI_2);
        let opts = CrossValidateOptions {
            fault: Some(1e-3),
            rk4: None,
            ..Default::default()
        };
        let r = cross_validate_with(&[p], &baseline_times(500.0, 3), &opts).unwrap();
        assert!(!r.pass);
        assert!(r.failed_pairs().contains(&PAIR_CLOSED_PIPELINE));
    }

    #[test]
    fn merge_keeps_worst_deviation() {
        let p = OscillationParams::vacuum(1.0, DM2, 0.5);
        let opts = CrossValidateOptions { rk4: None, ..Default::default() };
        let mut a = cross_validate_with(&[p], &[1e21], &opts).unwrap();
        let faulty = CrossValidateOptions { fault: Some(1e-3), ..opts };
        let b = cross_validate_with(&[p], &[2e21], &faulty).unwrap();
        a.merge(b);
        assert!(!a.pass);
        assert_eq!(a.pairs[PAIR_CLOSED_PIPELINE].samples, 2);
        assert!(a.pairs[PAIR_CLOSED_PIPELINE].max_abs_dev >= 1e-3 - 1e-12);
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert_eq!(cross_validate(&[], &[1.0]).unwrap_err(), Error::EmptyGrid);
        let p = OscillationParams::vacuum(1.0, DM2, 0.5);
        assert_eq!(cross_validate(&[p], &[]).unwrap_err(), Error::EmptyGrid);
    }

    #[test]
    fn report_round_trips_through_json() {
        let p = OscillationParams::vacuum(1.0, DM2, 0.5);
        let r = cross_validate(&[p], &[1e21]).unwrap();
        let back: ValidationReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
