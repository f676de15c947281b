//! Cycle-averaged photon currents.
//!
//! The right-lead current is the sum of three energy integrals:
//!
//! ```text
//! term1 = ∫_{ω_p}^{∞} T(ε, ε−ω_p) [n_L(ε) − n_R(ε−ω_p)] dε      (down-conversion L → R)
//! term2 = ∫_{ω_p}^{∞} T(ε−ω_p, ε) [n_L(ε−ω_p) − n_R(ε)] dε      (up-conversion L → R)
//! term3 = ∫_0^{ω_p}   T(ε, ω_p−ε) [n_L(ε) + n_R(ω_p−ε) + 1] dε  (pair creation)
//! ```
//!
//! The left current is the mirror image with the roles of the leads
//! exchanged, integrated independently. `J_N = (J_R − J_L)/2` is the
//! particle-conserving transport part and `J_A = (J_R + J_L)/2` the
//! anomalous (pair) part, which equals the golden-rule difference
//! `R_c − R_a`.
//!
//! [`current_right`], [`current_left`] and [`golden_rule_rates`] return raw
//! estimates with a `converged` flag; [`breakdown`] is the checked entry
//! point and reports non-convergence as [`CurrentError::NotConverged`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{integrate, Estimate, Tolerance};
use crate::spectra::{bose_occupation, BathState, EnergyGrid, PumpDrive, Side, SpectraError};
use crate::transmission::{TransmissionError, TransmissionKernel};

/// An integrand that grows by more than this factor between the coarsest
/// and finest infrared sample is treated as unbounded.
const IR_GROWTH_LIMIT: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurrentError {
    #[error("invalid transport problem: {0}")]
    Config(String),
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
    #[error("quadrature did not converge (best J_R = {:e}, J_L = {:e})", .0.j_right, .0.j_left)]
    NotConverged(Box<CurrentBreakdown>),
}

impl From<SpectraError> for CurrentError {
    fn from(e: SpectraError) -> Self {
        CurrentError::Transmission(e.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    pub kernel: TransmissionKernel,
    pub left_bath: BathState,
    pub right_bath: BathState,
    pub pump: PumpDrive,
    pub tolerance: Tolerance,
}

impl TransportProblem {
    pub fn new(kernel: TransmissionKernel, left_bath: BathState, right_bath: BathState, pump: PumpDrive) -> Self {
        TransportProblem { kernel, left_bath, right_bath, pump, tolerance: Tolerance::default() }
    }

    pub fn with_tolerance(mut self, tolerance: Tolerance) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn bath(&self, side: Side) -> &BathState {
        match side {
            Side::Left => &self.left_bath,
            Side::Right => &self.right_bath,
        }
    }

    pub fn energy_grid(&self) -> EnergyGrid {
        EnergyGrid::for_problem(
            &[self.kernel.left().band(), self.kernel.right().band()],
            &[self.left_bath.temperature(), self.right_bath.temperature()],
            self.pump.frequency(),
        )
    }

    fn validate(&self) -> Result<(), CurrentError> {
        if !self.tolerance.is_valid() {
            return Err(CurrentError::Config(format!("tolerances must be > 0: {:?}", self.tolerance)));
        }
        Ok(())
    }
}

/// One lead's current and its three contributions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DirectionalCurrent {
    pub value: f64,
    pub terms: [Estimate; 3],
    pub error: f64,
    pub converged: bool,
}

impl DirectionalCurrent {
    fn from_terms(terms: [Estimate; 3]) -> Self {
        DirectionalCurrent {
            value: terms.iter().map(|t| t.value).sum(),
            error: terms.iter().map(|t| t.error).sum(),
            converged: terms.iter().all(|t| t.converged),
            terms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GoldenRuleRates {
    pub creation: Estimate,
    pub annihilation: Estimate,
}

impl GoldenRuleRates {
    pub fn net(&self) -> f64 {
        self.creation.value - self.annihilation.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurrentBreakdown {
    pub j_right: f64,
    pub j_left: f64,
    pub j_normal: f64,
    pub j_anomalous: f64,
    /// The three contributions to `j_right`.
    pub terms: [Estimate; 3],
    pub rate_creation: f64,
    pub rate_annihilation: f64,
    pub right_error: f64,
    pub left_error: f64,
    pub rate_creation_error: f64,
    pub rate_annihilation_error: f64,
    pub converged: bool,
}

impl CurrentBreakdown {
    fn assemble(right: &DirectionalCurrent, left: &DirectionalCurrent, rates: &GoldenRuleRates) -> Self {
        CurrentBreakdown {
            j_right: right.value,
            j_left: left.value,
            j_normal: 0.5 * (right.value - left.value),
            j_anomalous: 0.5 * (right.value + left.value),
            terms: right.terms,
            rate_creation: rates.creation.value,
            rate_annihilation: rates.annihilation.value,
            right_error: right.error,
            left_error: left.error,
            rate_creation_error: rates.creation.error,
            rate_annihilation_error: rates.annihilation.error,
            converged: right.converged && left.converged && rates.creation.converged && rates.annihilation.converged,
        }
    }

    /// Combined error bound on `j_right + j_left`.
    pub fn total_error(&self) -> f64 {
        self.right_error + self.left_error
    }
}

/// `e = slope·ε + offset`, `slope = ±1`.
#[derive(Debug, Clone, Copy)]
struct Affine {
    slope: f64,
    offset: f64,
}

impl Affine {
    const IDENTITY: Affine = Affine { slope: 1.0, offset: 0.0 };

    fn shifted(offset: f64) -> Self {
        Affine { slope: 1.0, offset }
    }

    fn reflected(offset: f64) -> Self {
        Affine { slope: -1.0, offset }
    }

    fn at(&self, x: f64) -> f64 {
        self.slope * x + self.offset
    }

    /// `{ε : lo ≤ e(ε) ≤ hi}`.
    fn preimage(&self, lo: f64, hi: f64) -> (f64, f64) {
        if self.slope > 0.0 {
            (lo - self.offset, hi - self.offset)
        } else {
            (self.offset - hi, self.offset - lo)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Weight {
    /// `n_plus − n_minus`.
    Difference { plus: Side },
    /// `n_L + n_R + 1`.
    PairSum,
    /// `(n_L + 1)(n_R + 1)`.
    Creation,
    /// `n_L·n_R`.
    Annihilation,
}

#[derive(Debug, Clone, Copy)]
struct Term {
    left: Affine,
    right: Affine,
    weight: Weight,
    range: (f64, f64),
}

impl Term {
    fn eval(&self, p: &TransportProblem, x: f64) -> Result<f64, CurrentError> {
        let (e_l, e_r) = (self.left.at(x), self.right.at(x));
        let t = p.kernel.eval(e_l, e_r)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let n_l = bose_occupation(e_l, &p.left_bath)?;
        let n_r = bose_occupation(e_r, &p.right_bath)?;
        let w = match self.weight {
            Weight::Difference { plus: Side::Left } => n_l - n_r,
            Weight::Difference { plus: Side::Right } => n_r - n_l,
            Weight::PairSum => n_l + n_r + 1.0,
            Weight::Creation => (n_l + 1.0) * (n_r + 1.0),
            Weight::Annihilation => n_l * n_r,
        };
        Ok(t * w)
    }

    fn support(&self, p: &TransportProblem, cutoff: Option<f64>) -> (f64, f64) {
        let clip = |b: crate::spectra::Band| match cutoff {
            Some(c) => (b.min, b.upper(c)),
            None => (b.min, b.max),
        };
        let (l_lo, l_hi) = clip(p.kernel.left().band());
        let (r_lo, r_hi) = clip(p.kernel.right().band());
        let (a0, a1) = self.left.preimage(l_lo, l_hi);
        let (b0, b1) = self.right.preimage(r_lo, r_hi);
        (self.range.0.max(a0).max(b0), self.range.1.min(a1).min(b1))
    }

    fn touches_zero_energy(&self, x: f64, scale: f64) -> bool {
        let tiny = 1e-12 * scale.max(1.0);
        self.left.at(x) <= tiny || self.right.at(x) <= tiny
    }

    /// Samples toward an endpoint where a lead energy reaches zero and
    /// rejects integrands that blow up there.
    fn check_infrared(&self, p: &TransportProblem, lo: f64, hi: f64) -> Result<(), CurrentError> {
        let width = hi - lo;
        for (end, dir) in [(lo, 1.0), (hi, -1.0)] {
            if !self.touches_zero_energy(end, width) {
                continue;
            }
            let coarse = self.eval(p, end + dir * 1e-3 * width)?.abs();
            let fine = self.eval(p, end + dir * 1e-9 * width)?.abs();
            if !fine.is_finite() || fine > IR_GROWTH_LIMIT * coarse.max(f64::MIN_POSITIVE) && fine > 1e-300 {
                return Err(CurrentError::Config(format!(
                    "integrand unbounded as a lead energy approaches zero (|f| = {coarse:e} -> {fine:e}); \
                     enable infrared regularization (ε² density of states) on leads touching zero"
                )));
            }
        }
        Ok(())
    }

    fn integrate(&self, p: &TransportProblem) -> Result<Estimate, CurrentError> {
        let grid = p.energy_grid();
        let (lo, hi) = self.support(p, Some(grid.cutoff()));
        if !(hi > lo) {
            return Ok(Estimate::ZERO);
        }
        self.check_infrared(p, lo, hi)?;
        let mut est = integrate(|x| self.eval(p, x), lo, hi, &p.tolerance)?;
        let (_, hi_full) = self.support(p, None);
        if hi_full > hi {
            // Neglected tail decays at least like the Bose factor.
            let t_max = p.left_bath.temperature().max(p.right_bath.temperature());
            est.error += self.eval(p, hi)?.abs() * t_max;
            est.converged &= est.error <= p.tolerance.target(est.value);
        }
        Ok(est)
    }
}

fn right_terms(w: f64) -> [Term; 3] {
    let tail = (w, f64::INFINITY);
    let diff = Weight::Difference { plus: Side::Left };
    [
        Term { left: Affine::IDENTITY, right: Affine::shifted(-w), weight: diff, range: tail },
        Term { left: Affine::shifted(-w), right: Affine::IDENTITY, weight: diff, range: tail },
        Term { left: Affine::IDENTITY, right: Affine::reflected(w), weight: Weight::PairSum, range: (0.0, w) },
    ]
}

/// Right terms with the roles of the leads exchanged; the integration
/// variable is the right-lead energy in the first and third terms.
fn left_terms(w: f64) -> [Term; 3] {
    let tail = (w, f64::INFINITY);
    let diff = Weight::Difference { plus: Side::Right };
    [
        Term { right: Affine::IDENTITY, left: Affine::shifted(-w), weight: diff, range: tail },
        Term { right: Affine::shifted(-w), left: Affine::IDENTITY, weight: diff, range: tail },
        Term { right: Affine::IDENTITY, left: Affine::reflected(w), weight: Weight::PairSum, range: (0.0, w) },
    ]
}

fn directional(p: &TransportProblem, terms: [Term; 3]) -> Result<DirectionalCurrent, CurrentError> {
    p.validate()?;
    let mut out = [Estimate::ZERO; 3];
    for (slot, term) in out.iter_mut().zip(terms.iter()) {
        *slot = term.integrate(p)?;
    }
    Ok(DirectionalCurrent::from_terms(out))
}

/// Photon current into the right lead, `J_R = term1 + term2 + term3`.
pub fn current_right(p: &TransportProblem) -> Result<DirectionalCurrent, CurrentError> {
    directional(p, right_terms(p.pump.frequency()))
}

/// Photon current into the left lead (mirror of [`current_right`]).
pub fn current_left(p: &TransportProblem) -> Result<DirectionalCurrent, CurrentError> {
    directional(p, left_terms(p.pump.frequency()))
}

/// Pair creation and annihilation rates.
pub fn golden_rule_rates(p: &TransportProblem) -> Result<GoldenRuleRates, CurrentError> {
    p.validate()?;
    let w = p.pump.frequency();
    let term = |weight| Term { left: Affine::IDENTITY, right: Affine::reflected(w), weight, range: (0.0, w) };
    Ok(GoldenRuleRates {
        creation: term(Weight::Creation).integrate(p)?,
        annihilation: term(Weight::Annihilation).integrate(p)?,
    })
}

/// Full current breakdown; fails with the best estimate attached when any
/// integral misses its tolerance.
pub fn breakdown(p: &TransportProblem) -> Result<CurrentBreakdown, CurrentError> {
    let right = current_right(p)?;
    let left = current_left(p)?;
    let rates = golden_rule_rates(p)?;
    let b = CurrentBreakdown::assemble(&right, &left, &rates);
    if b.converged {
        Ok(b)
    } else {
        Err(CurrentError::NotConverged(Box::new(b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PumpFrequency,
    /// Sets both bath temperatures.
    Temperature,
    CouplingScale,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PumpFrequency => "pump_frequency",
            SweepAxis::Temperature => "temperature",
            SweepAxis::CouplingScale => "coupling_scale",
        }
    }

    /// Copy of `p` with the axis set to `value`.
    pub fn apply(self, p: &TransportProblem, value: f64) -> Result<TransportProblem, CurrentError> {
        let mut q = p.clone();
        match self {
            SweepAxis::PumpFrequency => q.pump = PumpDrive::new(value)?,
            SweepAxis::Temperature => {
                q.left_bath = BathState::new(value)?;
                q.right_bath = BathState::new(value)?;
            }
            SweepAxis::CouplingScale => {
                if !value.is_finite() {
                    return Err(CurrentError::Config(format!("coupling scale {value} must be finite")));
                }
                q.kernel = q.kernel.with_coupling_scale(value);
            }
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub result: Result<CurrentBreakdown, CurrentError>,
}

/// Evaluates the breakdown at every grid value, in grid order. Points are
/// independent; a failing point does not abort the sweep.
pub fn sweep(p: &TransportProblem, axis: SweepAxis, grid: &[f64]) -> Result<Vec<SweepPoint>, CurrentError> {
    if grid.is_empty() {
        return Err(CurrentError::Config("sweep grid is empty".into()));
    }
    Ok(grid
        .par_iter()
        .map(|&value| SweepPoint { value, result: axis.apply(p, value).and_then(|q| breakdown(&q)) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{Band, CouplingModel, DosModel, LeadSpectrum};
    use approx::assert_relative_eq;

    fn flat(side: Side, lo: f64, hi: f64, rho: f64, lambda: f64) -> LeadSpectrum {
        LeadSpectrum::new(side, Band::new(lo, hi).unwrap(), DosModel::Constant { rho0: rho }, CouplingModel::constant(lambda))
            .unwrap()
    }

    fn problem(l: LeadSpectrum, r: LeadSpectrum, w: f64, tl: f64, tr: f64) -> TransportProblem {
        TransportProblem::new(
            TransmissionKernel::trivial(l, r).unwrap(),
            BathState::new(tl).unwrap(),
            BathState::new(tr).unwrap(),
            PumpDrive::new(w).unwrap(),
        )
    }

    fn gapped(w: f64, t: f64) -> TransportProblem {
        problem(flat(Side::Left, 0.5, 1.5, 1.0, 0.1), flat(Side::Right, 2.0, 3.0, 1.0, 1.0), w, t, t)
    }

    #[test]
    fn zero_bias_equal_temperature_is_null() {
        let p = problem(flat(Side::Left, 0.2, 3.0, 1.0, 0.5), flat(Side::Right, 0.5, 4.0, 2.0, 1.0), 0.0, 0.7, 0.7);
        let b = breakdown(&p).unwrap();
        assert!(b.j_right.abs() <= p.tolerance.abs_tol);
        assert_eq!(b.terms[2], Estimate::ZERO);
    }

    #[test]
    fn zero_coupling_is_exactly_zero() {
        let p = problem(flat(Side::Left, 0.2, 3.0, 1.0, 0.0), flat(Side::Right, 0.5, 4.0, 2.0, 1.0), 1.0, 0.7, 0.3);
        let b = breakdown(&p).unwrap();
        assert_eq!(b.j_right, 0.0);
        assert_eq!(b.j_left, 0.0);
        assert_eq!(b.rate_creation, 0.0);
        assert_eq!(b.rate_annihilation, 0.0);
    }

    #[test]
    fn gapped_setup_conserves_particles() {
        let b = breakdown(&gapped(1.6, 0.5)).unwrap();
        assert_eq!(b.terms[2], Estimate::ZERO);
        assert_eq!(b.terms[0], Estimate::ZERO);
        assert!(b.j_right > 0.0);
        assert!((b.j_right + b.j_left).abs() <= 2.0 * b.total_error());
        assert_eq!(b.rate_creation, 0.0);
    }

    #[test]
    fn anomalous_part_matches_rates() {
        let p = problem(flat(Side::Left, 0.1, 3.0, 1.0, 0.3), flat(Side::Right, 0.2, 2.5, 1.5, 1.0), 2.0, 1.0, 1.0);
        let b = breakdown(&p).unwrap();
        assert!(b.j_anomalous > 0.0);
        let net = b.rate_creation - b.rate_annihilation;
        assert_relative_eq!(b.terms[2].value, net, max_relative = 1e-8);
        assert_relative_eq!(b.j_anomalous, b.terms[2].value, max_relative = 1e-8);
        assert_relative_eq!(b.j_normal, b.terms[0].value + b.terms[1].value, max_relative = 1e-8, epsilon = 1e-14);
    }

    #[test]
    fn semi_infinite_band_is_truncated() {
        let l = flat(Side::Left, 0.5, f64::INFINITY, 1.0, 0.2);
        let r = flat(Side::Right, 0.5, f64::INFINITY, 1.0, 1.0);
        let p = problem(l, r, 0.7, 1.0, 0.5);
        let b = breakdown(&p).unwrap();
        assert!(b.j_right.is_finite() && b.j_right != 0.0);
        assert!(b.right_error < 1e-8);
    }

    #[test]
    fn infrared_divergence_is_a_config_error() {
        let band = Band::new(0.0, 2.0).unwrap();
        let bad = LeadSpectrum::new_unregularized(Side::Left, band, DosModel::Constant { rho0: 1.0 }, CouplingModel::constant(0.1))
            .unwrap();
        let p = problem(bad, flat(Side::Right, 0.5, 3.0, 1.0, 1.0), 1.0, 0.5, 0.5);
        assert!(matches!(breakdown(&p), Err(CurrentError::Config(_))));

        let good = LeadSpectrum::flat(Side::Left, band, 1.0, CouplingModel::constant(0.1)).unwrap();
        let p = problem(good, flat(Side::Right, 0.5, 3.0, 1.0, 1.0), 1.0, 0.5, 0.5);
        assert!(breakdown(&p).is_ok());
    }

    #[test]
    fn convergence_failure_carries_best_estimate() {
        let p = gapped(1.6, 0.5).with_tolerance(Tolerance { abs_tol: 1e-300, rel_tol: 1e-300, max_subdivisions: 1 });
        match breakdown(&p) {
            Err(CurrentError::NotConverged(best)) => {
                assert!(!best.converged);
                assert!(best.j_right > 0.0);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn invalid_tolerance_rejected() {
        let p = gapped(1.6, 0.5).with_tolerance(Tolerance::new(0.0, 1e-8));
        assert!(matches!(breakdown(&p), Err(CurrentError::Config(_))));
    }

    #[test]
    fn sweep_preserves_order_and_reports_point_errors() {
        let p = gapped(1.6, 0.5);
        let pts = sweep(&p, SweepAxis::Temperature, &[0.5, -1.0, 0.3]).unwrap();
        assert_eq!(pts.iter().map(|x| x.value).collect::<Vec<_>>(), vec![0.5, -1.0, 0.3]);
        assert!(pts[0].result.is_ok() && pts[1].result.is_err() && pts[2].result.is_ok());
        assert!(sweep(&p, SweepAxis::PumpFrequency, &[]).is_err());
    }

    #[test]
    fn sweep_below_gap_threshold_is_zero() {
        let pts = sweep(&gapped(0.0, 0.5), SweepAxis::PumpFrequency, &[0.0, 0.2, 0.45]).unwrap();
        for pt in pts {
            let b = pt.result.unwrap();
            assert_eq!(b.j_right, 0.0);
        }
    }

    #[test]
    fn coupling_scale_sweep_is_quadratic() {
        let pts = sweep(&gapped(1.6, 0.5), SweepAxis::CouplingScale, &[1.0, 2.0, 4.0]).unwrap();
        let j: Vec<f64> = pts.iter().map(|p| p.result.as_ref().unwrap().j_right).collect();
        assert_relative_eq!(j[1] / j[0], 4.0, max_relative = 1e-10);
        assert_relative_eq!(j[2] / j[0], 16.0, max_relative = 1e-10);
    }
}
