//! Transmission functions for the direct parametric contact and for a
//! non-interacting center region.
//!
//! Both kernels take the left-lead energy first: `T(ε_α, ε_β)` with `ε_α`
//! in the left band and `ε_β` in the right band. The center kernel
//! evaluates the center propagator at the right-lead energy `ε_β` only.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectra::{CouplingModel, LeadSpectrum, PairCoupling, Side, SpectraError};

/// π/8: the golden-rule prefactor in ħ = 1 units.
pub const PREFACTOR: f64 = PI / 8.0;

pub const DEFAULT_BROADENING: f64 = 1e-6;

/// Reciprocal condition number below which `(ω+iη)² − K_C` counts as singular.
const MIN_RCOND: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransmissionError {
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error("center propagator singular at ω = {energy} (broadening too small near a center resonance)")]
    Singular { energy: f64 },
    #[error("invalid center model: {0}")]
    InvalidCenter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreensMode {
    /// `[(ω + iη)² − K_C]⁻¹`.
    #[default]
    Bare,
    /// Bare propagator plus the imaginary part of the right-lead retarded
    /// self-energy, `−i(π/2)Λ_R(ω)`. No principal-value shift.
    Dressed,
}

/// Harmonic center region in the displacement basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterModel {
    frequency_squared: DMatrix<f64>,
    left: Vec<CouplingModel>,
    right: Vec<CouplingModel>,
    broadening: f64,
    greens: GreensMode,
}

impl CenterModel {
    pub fn new(
        frequency_squared: DMatrix<f64>,
        left: Vec<CouplingModel>,
        right: Vec<CouplingModel>,
        broadening: f64,
    ) -> Result<Self, TransmissionError> {
        let n = frequency_squared.nrows();
        let invalid = |m: String| Err(TransmissionError::InvalidCenter(m));
        if n == 0 || frequency_squared.ncols() != n {
            return invalid(format!("K_C must be square and non-empty, got {}x{}", n, frequency_squared.ncols()));
        }
        if left.len() != n || right.len() != n {
            return invalid(format!("need {n} couplings per side, got {} and {}", left.len(), right.len()));
        }
        if frequency_squared.iter().any(|v| !v.is_finite()) {
            return invalid("K_C entries must be finite".into());
        }
        let asym = (&frequency_squared - frequency_squared.transpose()).amax();
        if asym > 1e-12 * frequency_squared.amax().max(1.0) {
            return invalid(format!("K_C not symmetric (max asymmetry {asym:e})"));
        }
        let min_eig = frequency_squared.clone().symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return invalid(format!("K_C must be positive definite, smallest eigenvalue {min_eig}"));
        }
        if !(broadening > 0.0) || !broadening.is_finite() {
            return invalid(format!("broadening {broadening} must be finite and > 0"));
        }
        Ok(CenterModel { frequency_squared, left, right, broadening, greens: GreensMode::Bare })
    }

    /// Uncoupled modes of the given frequencies.
    pub fn diagonal(
        frequencies: &[f64],
        left: Vec<CouplingModel>,
        right: Vec<CouplingModel>,
        broadening: f64,
    ) -> Result<Self, TransmissionError> {
        let k = DMatrix::from_diagonal(&DVector::from_iterator(frequencies.len(), frequencies.iter().map(|w| w * w)));
        Self::new(k, left, right, broadening)
    }

    pub fn with_greens_mode(mut self, greens: GreensMode) -> Self {
        self.greens = greens;
        self
    }

    pub fn with_broadening(mut self, broadening: f64) -> Result<Self, TransmissionError> {
        if !(broadening > 0.0) {
            return Err(TransmissionError::InvalidCenter(format!("broadening {broadening} must be > 0")));
        }
        self.broadening = broadening;
        Ok(self)
    }

    pub fn modes(&self) -> usize {
        self.frequency_squared.nrows()
    }

    pub fn frequency_squared(&self) -> &DMatrix<f64> {
        &self.frequency_squared
    }

    pub fn broadening(&self) -> f64 {
        self.broadening
    }

    pub fn greens_mode(&self) -> GreensMode {
        self.greens
    }

    pub fn couplings(&self, side: Side) -> &[CouplingModel] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// `(λ_γ(ε))_γ` for the requested side.
    pub fn coupling_vector(&self, side: Side, energy: f64) -> Result<DVector<f64>, SpectraError> {
        let models = self.couplings(side);
        let mut v = DVector::zeros(models.len());
        for (slot, m) in v.iter_mut().zip(models) {
            *slot = m.eval(energy)?;
        }
        Ok(v)
    }
}

fn invert(m: DMatrix<Complex64>, energy: f64) -> Result<DMatrix<Complex64>, TransmissionError> {
    let norm1 = |a: &DMatrix<Complex64>| {
        a.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
    };
    let m_norm = norm1(&m);
    let inv = m.lu().try_inverse().ok_or(TransmissionError::Singular { energy })?;
    let rcond = 1.0 / (m_norm * norm1(&inv));
    if !(rcond > MIN_RCOND) {
        return Err(TransmissionError::Singular { energy });
    }
    Ok(inv)
}

/// Bare retarded center propagator `g_c^r(ω) = [(ω + iη)²·I − K_C]⁻¹`.
/// The advanced function is its conjugate transpose.
pub fn center_greens_retarded(omega: f64, center: &CenterModel) -> Result<DMatrix<Complex64>, TransmissionError> {
    let z = Complex64::new(omega, center.broadening).powi(2);
    let n = center.modes();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
        diag - center.frequency_squared[(i, j)]
    });
    invert(m, omega)
}

/// `[Λ(ε)]_{γγ'} = ρ(ε)·λ_γ(ε)·λ_γ'(ε)/ε` for the lead's side; zero outside
/// the lead band.
pub fn lambda_matrix(energy: f64, lead: &LeadSpectrum, center: &CenterModel) -> Result<DMatrix<f64>, TransmissionError> {
    lambda_matrix_scaled(energy, lead, center, 1.0)
}

fn lambda_matrix_scaled(
    energy: f64,
    lead: &LeadSpectrum,
    center: &CenterModel,
    coupling_scale: f64,
) -> Result<DMatrix<f64>, TransmissionError> {
    if !(energy > 0.0) {
        return Err(SpectraError::Domain { what: "level-width matrix", energy }.into());
    }
    let n = center.modes();
    if !lead.band().contains(energy) {
        return Ok(DMatrix::zeros(n, n));
    }
    let rho = lead.dos(energy)?;
    let v = center.coupling_vector(lead.side(), energy)? * coupling_scale;
    Ok(&v * v.transpose() * (rho / energy))
}

/// Direct-contact transmission
/// `T(ε₁, ε₂) = (π/8)·λ_L(ε₁)²λ_R(ε₂)²·ρ_L(ε₁)ρ_R(ε₂)/(ε₁ε₂)`.
pub fn transmission_trivial(e1: f64, e2: f64, left: &LeadSpectrum, right: &LeadSpectrum) -> Result<f64, TransmissionError> {
    direct(e1, e2, left, right, &PairCoupling::Separable, 1.0)
}

fn check_energies(e_alpha: f64, e_beta: f64) -> Result<(), SpectraError> {
    for e in [e_alpha, e_beta] {
        if !(e > 0.0) {
            return Err(SpectraError::Domain { what: "transmission function", energy: e });
        }
    }
    Ok(())
}

fn direct(
    e1: f64,
    e2: f64,
    left: &LeadSpectrum,
    right: &LeadSpectrum,
    pair: &PairCoupling,
    coupling_scale: f64,
) -> Result<f64, TransmissionError> {
    check_energies(e1, e2)?;
    if !left.band().contains(e1) || !right.band().contains(e2) {
        return Ok(0.0);
    }
    let lambda = match pair {
        PairCoupling::Separable => left.coupling(e1)? * right.coupling(e2)?,
        PairCoupling::Tabulated(t) => t.eval(e1, e2)?,
    } * coupling_scale;
    Ok(PREFACTOR * lambda * lambda * left.dos(e1)? * right.dos(e2)? / (e1 * e2))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scatterer {
    /// Leads coupled directly through the pumped contact.
    Direct(PairCoupling),
    /// Leads coupled through a harmonic center; the pump sits on the
    /// center–left bond.
    Center(CenterModel),
}

/// Everything needed to evaluate `T(ε_α, ε_β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionKernel {
    left: LeadSpectrum,
    right: LeadSpectrum,
    scatterer: Scatterer,
    coupling_scale: f64,
}

impl TransmissionKernel {
    pub fn new(left: LeadSpectrum, right: LeadSpectrum, scatterer: Scatterer) -> Result<Self, TransmissionError> {
        if left.side() != Side::Left || right.side() != Side::Right {
            return Err(SpectraError::Invalid {
                what: "transmission kernel",
                reason: "leads must be tagged left and right respectively".into(),
            }
            .into());
        }
        Ok(TransmissionKernel { left, right, scatterer, coupling_scale: 1.0 })
    }

    pub fn trivial(left: LeadSpectrum, right: LeadSpectrum) -> Result<Self, TransmissionError> {
        Self::new(left, right, Scatterer::Direct(PairCoupling::Separable))
    }

    pub fn center(left: LeadSpectrum, right: LeadSpectrum, center: CenterModel) -> Result<Self, TransmissionError> {
        Self::new(left, right, Scatterer::Center(center))
    }

    /// Multiplies every coupling amplitude by `s`: the direct kernel scales
    /// as s², the center kernel as s⁴.
    pub fn with_coupling_scale(mut self, s: f64) -> Self {
        self.coupling_scale = s;
        self
    }

    pub fn coupling_scale(&self) -> f64 {
        self.coupling_scale
    }

    pub fn left(&self) -> &LeadSpectrum {
        &self.left
    }

    pub fn right(&self) -> &LeadSpectrum {
        &self.right
    }

    pub fn lead(&self, side: Side) -> &LeadSpectrum {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn scatterer(&self) -> &Scatterer {
        &self.scatterer
    }

    /// Whether every coupling amplitude vanishes identically.
    pub fn is_decoupled(&self) -> bool {
        if self.coupling_scale == 0.0 {
            return true;
        }
        match &self.scatterer {
            Scatterer::Direct(PairCoupling::Separable) => {
                self.left.coupling_model().is_zero() || self.right.coupling_model().is_zero()
            }
            Scatterer::Direct(PairCoupling::Tabulated(_)) => false,
            Scatterer::Center(c) => {
                c.couplings(Side::Left).iter().all(CouplingModel::is_zero)
                    || c.couplings(Side::Right).iter().all(CouplingModel::is_zero)
            }
        }
    }

    /// `T(ε_α, ε_β)`, left energy first.
    pub fn eval(&self, e_alpha: f64, e_beta: f64) -> Result<f64, TransmissionError> {
        match &self.scatterer {
            Scatterer::Direct(pair) => direct(e_alpha, e_beta, &self.left, &self.right, pair, self.coupling_scale),
            Scatterer::Center(_) => transmission_center(e_alpha, e_beta, self),
        }
    }

    /// Center propagator used by the kernel at `ω`, honoring the Green's
    /// function mode. `None` for the direct kernel.
    pub fn center_greens(&self, omega: f64) -> Option<Result<DMatrix<Complex64>, TransmissionError>> {
        let Scatterer::Center(c) = &self.scatterer else { return None };
        Some(match c.greens {
            GreensMode::Bare => center_greens_retarded(omega, c),
            GreensMode::Dressed => self.dressed_greens(omega, c),
        })
    }

    fn dressed_greens(&self, omega: f64, c: &CenterModel) -> Result<DMatrix<Complex64>, TransmissionError> {
        let z = Complex64::new(omega, c.broadening).powi(2);
        let width = if omega > 0.0 {
            lambda_matrix_scaled(omega, &self.right, c, self.coupling_scale)?
        } else {
            DMatrix::zeros(c.modes(), c.modes())
        };
        let n = c.modes();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
            diag - c.frequency_squared[(i, j)] + Complex64::new(0.0, 0.5 * PI * width[(i, j)])
        });
        invert(m, omega)
    }
}

/// Center transmission
/// `T_C(ε_α, ε_β) = (π/8)·Tr[g^r(ε_β) Λ_R(ε_β) g^a(ε_β) Λ_L(ε_α)]`.
pub fn transmission_center(e_alpha: f64, e_beta: f64, kernel: &TransmissionKernel) -> Result<f64, TransmissionError> {
    check_energies(e_alpha, e_beta)?;
    let Scatterer::Center(c) = &kernel.scatterer else {
        return Err(TransmissionError::InvalidCenter("kernel has no center region".into()));
    };
    if !kernel.left.band().contains(e_alpha) || !kernel.right.band().contains(e_beta) {
        return Ok(0.0);
    }
    let lambda_l = lambda_matrix_scaled(e_alpha, &kernel.left, c, kernel.coupling_scale)?.map(Complex64::from);
    let lambda_r = lambda_matrix_scaled(e_beta, &kernel.right, c, kernel.coupling_scale)?.map(Complex64::from);
    let g_r = kernel.center_greens(e_beta).expect("center kernel")?;
    let g_a = g_r.adjoint();
    let trace = (g_r * lambda_r * g_a * lambda_l).trace();
    debug_assert!(
        trace.im.abs() <= 1e-10 * trace.norm().max(f64::MIN_POSITIVE),
        "trace not real: {trace}"
    );
    Ok(PREFACTOR * trace.re.max(0.0))
}
