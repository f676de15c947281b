//! Brute-force time-domain validator.
//!
//! The leads (and the center, if any) are discretized into finitely many
//! harmonic modes, giving `H = ½pᵀp + ½uᵀK(t)u` with
//! `K(t) = D + f(t)·cos(ω_p t)·V_pumped + V_static`. Since the dynamics is
//! quadratic, a Gaussian state stays Gaussian and is fully described by the
//! symmetrized covariance matrix `C = ⟨x xᵀ⟩_sym` of `x = (u, p)`, which obeys
//! `Ċ = A C + C Aᵀ` with `A = [[0, I], [−K, 0]]`. The photon number of a
//! lead is read off the diagonal of `C` and its cycle-averaged slope is the
//! measured current.
//!
//! Continuum-to-discrete map: a lead band is cut into `N` equal cells of
//! width `Δε`, one mode at each cell midpoint, and a mode's coupling
//! amplitude is `λ(ε)·√(ρ(ε)Δε)`. The discrete model then represents the
//! continuum density `1/Δε` with per-mode amplitude `λ·√(ρΔε)`, whose
//! transmission function coincides with the original problem's.
//!
//! Pumped couplings are switched on with `f(t) = sin²(πt/2t_ramp)`. The
//! photon numbers are sampled stroboscopically once per pump period, so the
//! oscillating parts of the current drop out of the fitted slope.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::current::{breakdown, CurrentError, TransportProblem};
use crate::spectra::{bose_occupation, BathState, LeadSpectrum, PairCoupling, PumpDrive, Side, SpectraError};
use crate::transmission::Scatterer;

/// Tolerance on the smallest eigenvalue of `C + (i/2)Ω`.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-9;
/// Minimum number of steps per shortest oscillation period.
pub const STEPS_PER_PERIOD: f64 = 20.0;
pub const MIN_RAMP_CYCLES: usize = 10;
pub const MIN_WINDOW_CYCLES: usize = 5;
pub const MAX_WINDOW_CYCLES: usize = 20;
/// Growth of the free-mode energy beyond this factor counts as a blow-up.
const GROWTH_LIMIT: f64 = 1e8;
/// Deviations are measured relative to `max(|analytic|, DEVIATION_FLOOR)`.
const DEVIATION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid oracle setup: {0}")]
    Config(String),
    #[error("time step {dt} exceeds the resolution limit {limit}")]
    Resolution { dt: f64, limit: f64 },
    #[error("covariance integration unstable at t = {time}")]
    Unstable { time: f64 },
    #[error("covariance lost physicality at t = {time}: smallest eigenvalue {min_eigenvalue:e}")]
    Unphysical { time: f64, min_eigenvalue: f64 },
    #[error(transparent)]
    Current(#[from] CurrentError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

impl OracleError {
    /// Failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            OracleError::Resolution { .. } | OracleError::Unstable { .. } | OracleError::Unphysical { .. } => true,
            OracleError::Current(CurrentError::Config(_)) | OracleError::Config(_) | OracleError::Spectra(_) => false,
            OracleError::Current(CurrentError::Transmission(crate::transmission::TransmissionError::Spectra(_))) => false,
            OracleError::Current(_) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    Left,
    Right,
    Center,
}

impl From<Side> for ModeTag {
    fn from(side: Side) -> Self {
        match side {
            Side::Left => ModeTag::Left,
            Side::Right => ModeTag::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub frequency: f64,
    pub tag: ModeTag,
}

/// Symmetric rank-2 contribution `a bᵀ + b aᵀ` to the coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTerm {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    /// Multiplied by `f(t)·cos(ω_p t)` when set; static otherwise.
    pub pumped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classic fourth-order Runge–Kutta on `Ċ = AC + CAᵀ`. Not symplectic:
    /// near-vacuum states drift across the uncertainty bound over long runs.
    Rk4,
    /// Strang splitting: exact free rotation, coupling kick in between.
    /// Every step is a symplectic congruence, so physicality is kept to
    /// rounding error.
    #[default]
    Splitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Discretization {
    pub modes_per_lead: usize,
    pub ramp_cycles: usize,
    pub window_cycles: usize,
    pub steps_per_cycle: usize,
    pub integrator: Integrator,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization {
            modes_per_lead: 40,
            ramp_cycles: MIN_RAMP_CYCLES,
            window_cycles: MAX_WINDOW_CYCLES,
            steps_per_cycle: 64,
            integrator: Integrator::Splitting,
        }
    }
}

impl Discretization {
    fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::Config(m));
        if self.modes_per_lead == 0 {
            return bad("modes_per_lead must be > 0".into());
        }
        if self.ramp_cycles < MIN_RAMP_CYCLES {
            return bad(format!("ramp_cycles {} < {MIN_RAMP_CYCLES}", self.ramp_cycles));
        }
        if !(MIN_WINDOW_CYCLES..=MAX_WINDOW_CYCLES).contains(&self.window_cycles) {
            return bad(format!(
                "window_cycles {} outside [{MIN_WINDOW_CYCLES}, {MAX_WINDOW_CYCLES}]",
                self.window_cycles
            ));
        }
        if self.steps_per_cycle == 0 {
            return bad("steps_per_cycle must be > 0".into());
        }
        Ok(())
    }
}

/// Discretized quadratic model plus its time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSystem {
    modes: Vec<Mode>,
    couplings: Vec<CouplingTerm>,
    pump: PumpDrive,
    /// Stroboscopic sampling period: the pump period, or the shortest mode
    /// period when the pump is static.
    cycle: f64,
    ramp_time: f64,
    dt: f64,
    end_time: f64,
    integrator: Integrator,
    /// Largest mode spacing of either lead; sets the recurrence time.
    lead_spacing: f64,
}

impl OracleSystem {
    pub fn new(
        modes: Vec<Mode>,
        couplings: Vec<CouplingTerm>,
        pump: PumpDrive,
        disc: &Discretization,
        lead_spacing: f64,
    ) -> Result<Self, OracleError> {
        disc.validate()?;
        if modes.is_empty() || modes.iter().any(|m| !(m.frequency > 0.0) || !m.frequency.is_finite()) {
            return Err(OracleError::Config("all mode frequencies must be finite and > 0".into()));
        }
        let n = modes.len();
        if couplings.iter().any(|c| c.a.len() != n || c.b.len() != n) {
            return Err(OracleError::Config("coupling vectors must span all modes".into()));
        }
        let couplings: Vec<CouplingTerm> =
            couplings.into_iter().filter(|c| c.a.iter().any(|&x| x != 0.0) && c.b.iter().any(|&x| x != 0.0)).collect();
        let w_max = modes.iter().map(|m| m.frequency).fold(0.0, f64::max);
        let cycle = if pump.frequency() > 0.0 { 2.0 * PI / pump.frequency() } else { 2.0 * PI / w_max };
        let dt = cycle / disc.steps_per_cycle as f64;
        let ramp_time = disc.ramp_cycles as f64 * cycle;
        let end_time = ramp_time + disc.window_cycles as f64 * cycle;
        let sys = OracleSystem {
            modes,
            couplings,
            pump,
            cycle,
            ramp_time,
            dt,
            end_time,
            integrator: disc.integrator,
            lead_spacing,
        };
        sys.check_stability()?;
        Ok(sys)
    }

    /// Discretizes a transport problem with separable couplings.
    pub fn discretize(p: &TransportProblem, disc: &Discretization) -> Result<Self, OracleError> {
        disc.validate()?;
        let cutoff = p.energy_grid().cutoff();
        let scale = p.kernel.coupling_scale();
        let left = LeadGrid::new(p.kernel.left(), disc.modes_per_lead, cutoff)?;
        let right = LeadGrid::new(p.kernel.right(), disc.modes_per_lead, cutoff)?;
        let n_leads = left.len() + right.len();
        let mut modes: Vec<Mode> = left.modes(ModeTag::Left).chain(right.modes(ModeTag::Right)).collect();
        let mut couplings = Vec::new();

        match p.kernel.scatterer() {
            Scatterer::Direct(PairCoupling::Tabulated(_)) => {
                return Err(OracleError::Config("tabulated pair coupling is not separable; the oracle needs λ_L(ε)·λ_R(ε)".into()));
            }
            Scatterer::Direct(PairCoupling::Separable) => {
                let mut a = DVector::zeros(n_leads);
                let mut b = DVector::zeros(n_leads);
                for (i, (e, w)) in left.cells().enumerate() {
                    a[i] = scale * p.kernel.left().coupling(e)? * w;
                }
                for (j, (e, w)) in right.cells().enumerate() {
                    b[left.len() + j] = p.kernel.right().coupling(e)? * w;
                }
                couplings.push(CouplingTerm { a, b, pumped: true });
            }
            Scatterer::Center(center) => {
                // Work in the normal-mode basis of K_C so that D stays diagonal.
                let eig = SymmetricEigen::new(center.frequency_squared().clone());
                let nc = center.modes();
                let total = n_leads + nc;
                for k in 0..nc {
                    modes.push(Mode { frequency: eig.eigenvalues[k].sqrt(), tag: ModeTag::Center });
                }
                let q = &eig.eigenvectors;
                for k in 0..nc {
                    let mut unit = DVector::zeros(total);
                    unit[n_leads + k] = 1.0;
                    let mut to_left = DVector::zeros(total);
                    for (i, (e, w)) in left.cells().enumerate() {
                        let lam = center.coupling_vector(Side::Left, e)?;
                        to_left[i] = scale * q.column(k).dot(&lam) * w;
                    }
                    let mut to_right = DVector::zeros(total);
                    for (j, (e, w)) in right.cells().enumerate() {
                        let lam = center.coupling_vector(Side::Right, e)?;
                        to_right[left.len() + j] = scale * q.column(k).dot(&lam) * w;
                    }
                    couplings.push(CouplingTerm { a: unit.clone(), b: to_left, pumped: true });
                    couplings.push(CouplingTerm { a: unit, b: to_right, pumped: false });
                }
            }
        }
        let lead_spacing = left.spacing.max(right.spacing);
        Self::new(modes, couplings, p.pump, disc, lead_spacing)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn couplings(&self) -> &[CouplingTerm] {
        &self.couplings
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cycle(&self) -> f64 {
        self.cycle
    }

    pub fn ramp_time(&self) -> f64 {
        self.ramp_time
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    /// `2π/Δε`: beyond this a finite lead stops looking like a continuum.
    pub fn recurrence_time(&self) -> f64 {
        if self.lead_spacing > 0.0 {
            2.0 * PI / self.lead_spacing
        } else {
            f64::INFINITY
        }
    }

    /// `dt ≤ (1/20)·2π/max(ω_i, ω_p)`.
    pub fn resolution_limit(&self) -> f64 {
        let w = self.modes.iter().map(|m| m.frequency).fold(self.pump.frequency(), f64::max);
        2.0 * PI / (STEPS_PER_PERIOD * w)
    }

    fn ramp(&self, t: f64) -> f64 {
        if t >= self.ramp_time {
            1.0
        } else if t <= 0.0 {
            0.0
        } else {
            (0.5 * PI * t / self.ramp_time).sin().powi(2)
        }
    }

    fn coefficient(&self, term: &CouplingTerm, t: f64) -> f64 {
        if term.pumped {
            self.ramp(t) * (self.pump.frequency() * t).cos()
        } else {
            1.0
        }
    }

    /// Dense `K` with the pumped blocks multiplied by `s`.
    fn spring_matrix(&self, s: f64) -> DMatrix<f64> {
        let n = self.modes.len();
        let mut k = DMatrix::from_diagonal(&DVector::from_iterator(n, self.modes.iter().map(|m| m.frequency.powi(2))));
        for term in &self.couplings {
            let c = if term.pumped { s } else { 1.0 };
            k.ger(c, &term.a, &term.b, 1.0);
            k.ger(c, &term.b, &term.a, 1.0);
        }
        k
    }

    /// `K(t)` must stay positive definite over the whole drive range; the
    /// set of admissible drive values is an interval so its ends suffice.
    fn check_stability(&self) -> Result<(), OracleError> {
        for s in [-1.0, 1.0] {
            let min = self.spring_matrix(s).symmetric_eigenvalues().min();
            if !(min > 0.0) {
                return Err(OracleError::Config(format!(
                    "spring matrix not positive definite at drive extreme {s:+} (smallest eigenvalue {min:e}); couplings too strong"
                )));
            }
        }
        Ok(())
    }

    fn n(&self) -> usize {
        self.modes.len()
    }

    /// `V(t)·M` for the coupling part only.
    fn apply_coupling(&self, t: f64, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for term in &self.couplings {
            let s = self.coefficient(term, t);
            if s == 0.0 {
                continue;
            }
            let bm = m.tr_mul(&term.b);
            let am = m.tr_mul(&term.a);
            out.ger(s, &term.a, &bm, 1.0);
            out.ger(s, &term.b, &am, 1.0);
        }
        out
    }

    fn derivative(&self, t: f64, c: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n();
        let u_rows = c.rows(0, n).into_owned();
        let mut km = self.apply_coupling(t, &u_rows);
        for (i, mode) in self.modes.iter().enumerate() {
            let w2 = mode.frequency * mode.frequency;
            let mut row = km.row_mut(i);
            row += u_rows.row(i) * w2;
        }
        let mut x = DMatrix::zeros(2 * n, 2 * n);
        x.rows_mut(0, n).copy_from(&c.rows(n, n));
        x.rows_mut(n, n).copy_from(&(-km));
        let xt = x.transpose();
        x + xt
    }

    fn rk4_step(&self, t: f64, c: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let k1 = self.derivative(t, c);
        let k2 = self.derivative(t + 0.5 * h, &(c + &k1 * (0.5 * h)));
        let k3 = self.derivative(t + 0.5 * h, &(c + &k2 * (0.5 * h)));
        let k4 = self.derivative(t + h, &(c + &k3 * h));
        c + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    /// Applies the row operation `x ← S x`, then the same to the columns.
    fn conjugate(c: &mut DMatrix<f64>, mut rows: impl FnMut(&mut DMatrix<f64>)) {
        rows(c);
        c.transpose_mut();
        rows(c);
    }

    fn rotate(&self, c: &mut DMatrix<f64>, h: f64) {
        let n = self.n();
        Self::conjugate(c, |m| {
            for (i, mode) in self.modes.iter().enumerate() {
                let w = mode.frequency;
                let (s, co) = (w * h).sin_cos();
                let u = m.row(i).into_owned();
                let p = m.row(n + i).into_owned();
                m.row_mut(i).copy_from(&(&u * co + &p * (s / w)));
                m.row_mut(n + i).copy_from(&(&u * (-w * s) + &p * co));
            }
        });
    }

    fn kick(&self, c: &mut DMatrix<f64>, t: f64, h: f64) {
        let n = self.n();
        Self::conjugate(c, |m| {
            let dv = self.apply_coupling(t, &m.rows(0, n).into_owned());
            let mut p = m.rows_mut(n, n);
            p -= dv * h;
        });
    }

    fn splitting_step(&self, t: f64, c: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let mut next = c.clone();
        self.rotate(&mut next, 0.5 * h);
        self.kick(&mut next, t + 0.5 * h, h);
        self.rotate(&mut next, 0.5 * h);
        next
    }

    fn step(&self, t: f64, c: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let next = match self.integrator {
            Integrator::Rk4 => self.rk4_step(t, c, h),
            Integrator::Splitting => self.splitting_step(t, c, h),
        };
        (&next + next.transpose()) * 0.5
    }

    /// Free-mode energy `Σ_i (⟨p_i²⟩ + ω_i²⟨u_i²⟩)/2`.
    fn free_energy(&self, c: &DMatrix<f64>) -> f64 {
        let n = self.n();
        self.modes
            .iter()
            .enumerate()
            .map(|(i, m)| 0.5 * (c[(n + i, n + i)] + m.frequency.powi(2) * c[(i, i)]))
            .sum()
    }

    /// Photon number `Σ (⟨p²⟩/(2ω) + ω⟨u²⟩/2 − 1/2)` of the tagged modes.
    pub fn photon_number(&self, state: &CovarianceState, tag: ModeTag) -> f64 {
        self.mode_occupations(state)
            .into_iter()
            .zip(&self.modes)
            .filter(|(_, m)| m.tag == tag)
            .map(|(n, _)| n)
            .sum()
    }

    pub fn mode_occupations(&self, state: &CovarianceState) -> Vec<f64> {
        let n = self.n();
        let c = &state.matrix;
        self.modes
            .iter()
            .enumerate()
            .map(|(i, m)| c[(n + i, n + i)] / (2.0 * m.frequency) + 0.5 * m.frequency * c[(i, i)] - 0.5)
            .collect()
    }
}

/// Midpoint grid over one lead band.
struct LeadGrid {
    energies: Vec<f64>,
    weights: Vec<f64>,
    spacing: f64,
}

impl LeadGrid {
    fn new(lead: &LeadSpectrum, cells: usize, cutoff: f64) -> Result<Self, OracleError> {
        let band = lead.band();
        let (lo, hi) = (band.min, band.upper(cutoff));
        let spacing = (hi - lo) / cells as f64;
        let energies: Vec<f64> = (0..cells).map(|i| lo + (i as f64 + 0.5) * spacing).collect();
        let weights = energies
            .iter()
            .map(|&e| Ok((lead.dos(e)? * spacing).sqrt()))
            .collect::<Result<Vec<f64>, SpectraError>>()?;
        Ok(LeadGrid { energies, weights, spacing })
    }

    fn len(&self) -> usize {
        self.energies.len()
    }

    fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.energies.iter().copied().zip(self.weights.iter().copied())
    }

    fn modes(&self, tag: ModeTag) -> impl Iterator<Item = Mode> + '_ {
        self.energies.iter().map(move |&frequency| Mode { frequency, tag })
    }
}

/// Symmetrized second moments of `x = (u, p)` at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub matrix: DMatrix<f64>,
    pub time: f64,
}

impl CovarianceState {
    /// Smallest eigenvalue of the Hermitian matrix `C + (i/2)Ω`; negative
    /// values violate the uncertainty principle.
    pub fn physicality_margin(&self) -> f64 {
        let dim = self.matrix.nrows();
        let n = dim / 2;
        let mut h = self.matrix.map(Complex64::from);
        for i in 0..n {
            h[(i, n + i)] += Complex64::new(0.0, 0.5);
            h[(n + i, i)] -= Complex64::new(0.0, 0.5);
        }
        SymmetricEigen::new(h).eigenvalues.min()
    }
}

/// Initial temperatures for each kind of mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeBaths {
    pub left: BathState,
    pub right: BathState,
    pub center: BathState,
}

impl ModeBaths {
    /// Center modes start at the right-lead temperature.
    pub fn from_problem(p: &TransportProblem) -> Self {
        ModeBaths { left: p.left_bath, right: p.right_bath, center: p.right_bath }
    }

    fn for_tag(&self, tag: ModeTag) -> &BathState {
        match tag {
            ModeTag::Left => &self.left,
            ModeTag::Right => &self.right,
            ModeTag::Center => &self.center,
        }
    }
}

/// Product of thermal states: `⟨u²⟩ = (2n+1)/(2ω)`, `⟨p²⟩ = ω(2n+1)/2`.
pub fn initial_covariance(sys: &OracleSystem, baths: &ModeBaths) -> Result<CovarianceState, OracleError> {
    let n = sys.n();
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    for (i, m) in sys.modes.iter().enumerate() {
        let occ = bose_occupation(m.frequency, baths.for_tag(m.tag))?;
        let s = 2.0 * occ + 1.0;
        c[(i, i)] = s / (2.0 * m.frequency);
        c[(n + i, n + i)] = 0.5 * m.frequency * s;
    }
    Ok(CovarianceState { matrix: c, time: 0.0 })
}

/// Advances `state` to `t_final` with the system's step size (the last
/// step is shortened to land on `t_final`).
pub fn propagate(state: &CovarianceState, sys: &OracleSystem, t_final: f64) -> Result<CovarianceState, OracleError> {
    if t_final < state.time {
        return Err(OracleError::Config(format!("cannot propagate backwards from {} to {t_final}", state.time)));
    }
    if sys.dt > sys.resolution_limit() * (1.0 + 1e-12) {
        return Err(OracleError::Resolution { dt: sys.dt, limit: sys.resolution_limit() });
    }
    let bound = GROWTH_LIMIT * sys.free_energy(&state.matrix).max(1.0);
    let mut c = state.matrix.clone();
    let mut t = state.time;
    let eps = 1e-9 * sys.dt;
    while t_final - t > eps {
        let h = sys.dt.min(t_final - t);
        c = sys.step(t, &c, h);
        t += h;
        let e = sys.free_energy(&c);
        if !e.is_finite() || e > bound || c.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::Unstable { time: t });
        }
    }
    Ok(CovarianceState { matrix: c, time: t_final })
}

/// Photon numbers at one stroboscopic sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub left: f64,
    pub right: f64,
}

impl Sample {
    pub fn side(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Smallest physicality margin seen at any sample.
    pub min_physicality: f64,
    pub final_state: CovarianceState,
}

/// Runs from `initial` to the end of the measurement window, sampling once
/// per cycle and checking physicality at every sample.
pub fn run(sys: &OracleSystem, initial: CovarianceState) -> Result<Trajectory, OracleError> {
    let cycles = (sys.end_time / sys.cycle).round() as usize;
    let mut state = initial;
    let mut samples = Vec::with_capacity(cycles + 1);
    let mut min_physicality = f64::INFINITY;
    for k in 0..=cycles {
        if k > 0 {
            state = propagate(&state, sys, k as f64 * sys.cycle)?;
        }
        let margin = state.physicality_margin();
        min_physicality = min_physicality.min(margin);
        if margin < -PHYSICALITY_TOLERANCE {
            return Err(OracleError::Unphysical { time: state.time, min_eigenvalue: margin });
        }
        samples.push(Sample {
            time: state.time,
            left: sys.photon_number(&state, ModeTag::Left),
            right: sys.photon_number(&state, ModeTag::Right),
        });
    }
    Ok(Trajectory { samples, min_physicality, final_state: state })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCurrent {
    /// Least-squares slope of the photon number.
    pub value: f64,
    /// Standard error of the slope.
    pub uncertainty: f64,
    pub samples: usize,
}

/// Fits the photon number of `side` over the post-ramp samples.
pub fn measure_current(history: &[Sample], sys: &OracleSystem, side: Side) -> Result<MeasuredCurrent, OracleError> {
    let start = sys.ramp_time - 1e-9 * sys.cycle;
    let window: Vec<(f64, f64)> = history.iter().filter(|s| s.time >= start).map(|s| (s.time, s.side(side))).collect();
    let span = match (window.first(), window.last()) {
        (Some(a), Some(b)) => b.0 - a.0,
        _ => 0.0,
    };
    if span < (MIN_WINDOW_CYCLES as f64 - 1e-9) * sys.cycle || window.len() < 3 {
        return Err(OracleError::Config(format!(
            "measurement window spans {:.3} cycles; need at least {MIN_WINDOW_CYCLES}",
            span / sys.cycle
        )));
    }
    let m = window.len() as f64;
    let t_mean = window.iter().map(|w| w.0).sum::<f64>() / m;
    let y_mean = window.iter().map(|w| w.1).sum::<f64>() / m;
    let sxx: f64 = window.iter().map(|w| (w.0 - t_mean).powi(2)).sum();
    let sxy: f64 = window.iter().map(|w| (w.0 - t_mean) * (w.1 - y_mean)).sum();
    let slope = sxy / sxx;
    let rss: f64 = window.iter().map(|w| (w.1 - y_mean - slope * (w.0 - t_mean)).powi(2)).sum();
    Ok(MeasuredCurrent { value: slope, uncertainty: (rss / (m - 2.0) / sxx).sqrt(), samples: window.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParameters {
    pub modes_per_lead: usize,
    pub total_modes: usize,
    pub dt: f64,
    pub ramp_time: f64,
    pub end_time: f64,
    pub window_cycles: usize,
    pub lead_spacing: f64,
    pub recurrence_time: f64,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub analytic: f64,
    pub simulated: f64,
    pub relative_deviation: f64,
    pub simulated_uncertainty: f64,
    pub analytic_left: f64,
    pub simulated_left: f64,
    pub analytic_anomalous: f64,
    pub simulated_anomalous: f64,
    pub min_physicality: f64,
    pub recurrence_window_exceeded: bool,
    pub parameters: OracleParameters,
}

fn relative_deviation(simulated: f64, analytic: f64) -> f64 {
    (simulated - analytic).abs() / analytic.abs().max(DEVIATION_FLOOR)
}

/// Runs the analytic formula and the time-domain simulation on the same
/// problem and reports the right-lead currents side by side.
pub fn compare(p: &TransportProblem, disc: &Discretization) -> Result<ComparisonReport, OracleError> {
    let analytic = breakdown(p)?;
    let sys = OracleSystem::discretize(p, disc)?;
    let initial = initial_covariance(&sys, &ModeBaths::from_problem(p))?;
    let traj = run(&sys, initial)?;
    let right = measure_current(&traj.samples, &sys, Side::Right)?;
    let left = measure_current(&traj.samples, &sys, Side::Left)?;
    Ok(ComparisonReport {
        analytic: analytic.j_right,
        simulated: right.value,
        relative_deviation: relative_deviation(right.value, analytic.j_right),
        simulated_uncertainty: right.uncertainty,
        analytic_left: analytic.j_left,
        simulated_left: left.value,
        analytic_anomalous: analytic.j_anomalous,
        simulated_anomalous: 0.5 * (right.value + left.value),
        min_physicality: traj.min_physicality,
        recurrence_window_exceeded: sys.end_time > sys.recurrence_time(),
        parameters: OracleParameters {
            modes_per_lead: disc.modes_per_lead,
            total_modes: sys.n(),
            dt: sys.dt,
            ramp_time: sys.ramp_time,
            end_time: sys.end_time,
            window_cycles: disc.window_cycles,
            lead_spacing: sys.lead_spacing,
            recurrence_time: sys.recurrence_time(),
            integrator: disc.integrator,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bath(t: f64) -> BathState {
        BathState::new(t).unwrap()
    }

    fn two_mode(w: [f64; 2], coupling: f64, pumped: bool, pump: f64, disc: &Discretization) -> OracleSystem {
        let modes = vec![Mode { frequency: w[0], tag: ModeTag::Left }, Mode { frequency: w[1], tag: ModeTag::Right }];
        let a = DVector::from_vec(vec![coupling, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        OracleSystem::new(modes, vec![CouplingTerm { a, b, pumped }], PumpDrive::new(pump).unwrap(), disc, 0.0).unwrap()
    }

    fn baths(tl: f64, tr: f64) -> ModeBaths {
        ModeBaths { left: bath(tl), right: bath(tr), center: bath(tr) }
    }

    #[test]
    fn vacuum_and_thermal_initial_state() {
        let disc = Discretization::default();
        let sys = two_mode([2.0, 1.0], 0.0, true, 1.0, &disc);
        let c = initial_covariance(&sys, &baths(1e-3, 1.0)).unwrap();
        assert_relative_eq!(c.matrix[(0, 0)], 0.25, max_relative = 1e-12);
        assert_relative_eq!(c.matrix[(2, 2)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.matrix[(1, 1)], 1.081_976_7, epsilon = 1e-7);
        for (i, j) in [(0, 1), (0, 3), (1, 2), (2, 3), (0, 2)] {
            assert_eq!(c.matrix[(i, j)], 0.0);
            assert_eq!(c.matrix[(j, i)], 0.0);
        }
        assert!(c.physicality_margin() > -1e-12);
        assert!(c.physicality_margin() < 1e-9, "vacuum mode saturates the bound");
    }

    #[test]
    fn free_evolution_is_stationary() {
        let disc = Discretization::default();
        let sys = two_mode([1.3, 2.1], 0.0, true, 1.0, &disc);
        let c0 = initial_covariance(&sys, &baths(0.8, 0.3)).unwrap();
        let c1 = propagate(&c0, &sys, 25.0).unwrap();
        let n0 = sys.mode_occupations(&c0);
        let n1 = sys.mode_occupations(&c1);
        for (a, b) in n0.iter().zip(&n1) {
            assert!((a - b).abs() < 1e-10 * 25.0);
        }
    }

    #[test]
    fn propagation_rejects_coarse_steps_and_backwards_time() {
        let disc = Discretization { steps_per_cycle: 2, ..Default::default() };
        let sys = two_mode([1.0, 3.0], 0.01, true, 1.0, &disc);
        let c0 = initial_covariance(&sys, &baths(1.0, 1.0)).unwrap();
        assert!(matches!(propagate(&c0, &sys, 10.0), Err(OracleError::Resolution { .. })));
        let ok = two_mode([1.0, 3.0], 0.01, true, 1.0, &Discretization::default());
        let later = propagate(&c0, &ok, 1.0).unwrap();
        assert!(propagate(&later, &ok, 0.5).is_err());
    }

    #[test]
    fn unstable_spring_matrix_is_rejected() {
        let modes = vec![Mode { frequency: 0.5, tag: ModeTag::Left }, Mode { frequency: 0.5, tag: ModeTag::Right }];
        let term = CouplingTerm { a: DVector::from_vec(vec![1.0, 0.0]), b: DVector::from_vec(vec![0.0, 1.0]), pumped: true };
        let r = OracleSystem::new(modes, vec![term], PumpDrive::new(1.0).unwrap(), &Discretization::default(), 0.0);
        assert!(matches!(r, Err(OracleError::Config(_))));
    }

    #[test]
    fn discretization_limits() {
        let disc = Discretization { window_cycles: 4, ..Default::default() };
        assert!(disc.validate().is_err());
        let disc = Discretization { window_cycles: 21, ..Default::default() };
        assert!(disc.validate().is_err());
        let disc = Discretization { ramp_cycles: 9, ..Default::default() };
        assert!(disc.validate().is_err());
    }

    #[test]
    fn short_window_is_rejected() {
        let sys = two_mode([1.0, 2.0], 0.0, true, 1.0, &Discretization::default());
        let history: Vec<Sample> = (0..14)
            .map(|k| Sample { time: k as f64 * sys.cycle(), left: 0.0, right: 0.0 })
            .collect();
        assert!(matches!(measure_current(&history, &sys, Side::Right), Err(OracleError::Config(_))));
    }

    #[test]
    fn slope_fit_recovers_linear_growth() {
        let sys = two_mode([1.0, 2.0], 0.0, true, 1.0, &Discretization::default());
        let history: Vec<Sample> = (0..=30)
            .map(|k| {
                let t = k as f64 * sys.cycle();
                Sample { time: t, left: 1.0 - 0.25 * t, right: 3.0 + 0.5 * t }
            })
            .collect();
        let m = measure_current(&history, &sys, Side::Right).unwrap();
        assert_relative_eq!(m.value, 0.5, max_relative = 1e-12);
        assert!(m.uncertainty < 1e-10);
        assert_eq!(m.samples, 21);
        assert_relative_eq!(measure_current(&history, &sys, Side::Left).unwrap().value, -0.25, max_relative = 1e-12);
    }

    /// Exact propagator of a static quadratic system from the normal modes
    /// of `K`.
    fn exact_covariance(k: &DMatrix<f64>, c0: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        let n = k.nrows();
        let eig = SymmetricEigen::new(k.clone());
        let q = &eig.eigenvectors;
        let mut rot = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            let w = eig.eigenvalues[j].sqrt();
            let (s, c) = (w * t).sin_cos();
            rot[(j, j)] = c;
            rot[(j, n + j)] = s / w;
            rot[(n + j, j)] = -w * s;
            rot[(n + j, n + j)] = c;
        }
        let mut big_q = DMatrix::zeros(2 * n, 2 * n);
        big_q.view_mut((0, 0), (n, n)).copy_from(q);
        big_q.view_mut((n, n), (n, n)).copy_from(q);
        let m = &big_q * rot * big_q.transpose();
        &m * c0 * m.transpose()
    }

    #[test]
    fn static_coupling_matches_exact_propagator() {
        for integrator in [Integrator::Rk4, Integrator::Splitting] {
            let disc = Discretization { steps_per_cycle: 800, integrator, ..Default::default() };
            let sys = two_mode([1.0, 1.2], 0.01, false, 1.0, &disc);
            let c0 = initial_covariance(&sys, &baths(2.0, 0.1)).unwrap();
            let k = sys.spring_matrix(1.0);
            for t in [3.0, 17.5, 40.0] {
                let got = propagate(&c0, &sys, t).unwrap();
                let want = exact_covariance(&k, &c0.matrix, t);
                let err = (&got.matrix - &want).amax() / want.amax();
                let bound = if integrator == Integrator::Rk4 { 1e-9 } else { 1e-5 };
                assert!(err < bound, "{integrator:?} t={t}: {err:e}");
            }
        }
    }

    #[test]
    fn single_mode_rotation_identities() {
        let w = 1.7;
        let modes = vec![Mode { frequency: w, tag: ModeTag::Left }];
        let disc = Discretization { steps_per_cycle: 800, ..Default::default() };
        let sys = OracleSystem::new(modes, vec![], PumpDrive::new(0.0).unwrap(), &disc, 0.0).unwrap();
        let c0 = CovarianceState { matrix: DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.4]), time: 0.0 };
        let quarter = propagate(&c0, &sys, 0.5 * PI / w).unwrap();
        assert_relative_eq!(quarter.matrix[(0, 0)], 0.4 / (w * w), max_relative = 1e-8);
        assert_relative_eq!(quarter.matrix[(1, 1)], 0.9 * w * w, max_relative = 1e-8);
        let half = propagate(&c0, &sys, PI / w).unwrap();
        assert!((&half.matrix - &c0.matrix).amax() < 1e-8);
    }

    #[test]
    fn splitting_matches_rk4() {
        let rk = Discretization { steps_per_cycle: 200, integrator: Integrator::Rk4, ..Default::default() };
        let sp = Discretization { integrator: Integrator::Splitting, ..rk };
        let a = two_mode([1.0, 1.7], 0.05, true, 0.7, &rk);
        let b = two_mode([1.0, 1.7], 0.05, true, 0.7, &sp);
        let c0 = initial_covariance(&a, &baths(0.6, 0.2)).unwrap();
        let ca = propagate(&c0, &a, 30.0).unwrap();
        let cb = propagate(&c0, &b, 30.0).unwrap();
        let err = (&ca.matrix - &cb.matrix).amax() / ca.matrix.amax();
        assert!(err < 1e-5, "{err:e}");
    }
}
