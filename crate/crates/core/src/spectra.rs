//! Lead spectra, thermal occupations and unit conventions.
//!
//! Everything is in natural units: ħ = k_B = 1 and energies are measured
//! in multiples of a reference energy Ω₀ = 1. Frequencies and energies are
//! therefore interchangeable, and currents come out in photons per 1/Ω₀.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bose tails beyond this many temperatures are below e^{-40} < 5e-18.
pub const TAIL_TEMPERATURES: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectraError {
    #[error("energy {energy} outside the domain of {what}")]
    Domain { what: &'static str, energy: f64 },
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

impl SpectraError {
    fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        SpectraError::Invalid { what, reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitConvention {
    /// ħ = k_B = 1, energies in units of Ω₀.
    #[default]
    Natural,
}

/// Truncation of the semi-infinite energy axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyGrid {
    pub units: UnitConvention,
    cutoff: f64,
}

impl EnergyGrid {
    pub fn new(cutoff: f64) -> Result<Self, SpectraError> {
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(SpectraError::invalid("energy grid", format!("cutoff {cutoff} must be finite and > 0")));
        }
        Ok(EnergyGrid { units: UnitConvention::Natural, cutoff })
    }

    /// `ε_cut = max(finite band edges, 40·T_max + ω_p)`.
    pub fn for_problem(bands: &[Band], temperatures: &[f64], pump_frequency: f64) -> Self {
        let t_max = temperatures.iter().copied().fold(0.0_f64, f64::max);
        let edges = bands
            .iter()
            .flat_map(|b| [b.min, b.max])
            .filter(|e| e.is_finite())
            .fold(0.0_f64, f64::max);
        let cutoff = edges.max(TAIL_TEMPERATURES * t_max + pump_frequency);
        EnergyGrid { units: UnitConvention::Natural, cutoff: cutoff.max(f64::MIN_POSITIVE) }
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn contains(&self, energy: f64) -> bool {
        (0.0..=self.cutoff).contains(&energy)
    }
}

/// Closed energy interval `[min, max]`; `max` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub min: f64,
    pub max: f64,
}

impl Band {
    pub fn new(min: f64, max: f64) -> Result<Self, SpectraError> {
        if !(min >= 0.0) || !min.is_finite() || !(max > min) {
            return Err(SpectraError::invalid("band", format!("need 0 <= min < max, got [{min}, {max}]")));
        }
        Ok(Band { min, max })
    }

    pub fn contains(&self, energy: f64) -> bool {
        energy >= self.min && energy <= self.max
    }

    pub fn touches_zero(&self) -> bool {
        self.min == 0.0
    }

    /// Upper edge clipped to `cutoff` when the band is semi-infinite.
    pub fn upper(&self, cutoff: f64) -> f64 {
        if self.max.is_finite() {
            self.max
        } else {
            cutoff.max(self.min)
        }
    }
}

/// Piecewise-linear table on strictly increasing abscissae.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct Table {
    energies: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTable {
    energies: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawTable> for Table {
    type Error = SpectraError;

    fn try_from(raw: RawTable) -> Result<Self, Self::Error> {
        Table::new(raw.energies, raw.values)
    }
}

impl Table {
    pub fn new(energies: Vec<f64>, values: Vec<f64>) -> Result<Self, SpectraError> {
        if energies.len() < 2 || energies.len() != values.len() {
            return Err(SpectraError::invalid("table", "need at least two points and matching lengths"));
        }
        if energies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SpectraError::invalid("table", "energies must be strictly increasing"));
        }
        if energies.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(SpectraError::invalid("table", "entries must be finite"));
        }
        Ok(Table { energies, values })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.energies[0], *self.energies.last().unwrap())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, energy: f64, what: &'static str) -> Result<f64, SpectraError> {
        let (lo, hi) = self.support();
        if !(energy >= lo && energy <= hi) {
            return Err(SpectraError::Domain { what, energy });
        }
        let i = self.energies.partition_point(|&e| e <= energy).clamp(1, self.energies.len() - 1);
        let (e0, e1) = (self.energies[i - 1], self.energies[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        Ok(v0 + (v1 - v0) * (energy - e0) / (e1 - e0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DosModel {
    Constant { rho0: f64 },
    /// `ρ₀·ε^k` with `k ∈ {0, 1, 2}`.
    PowerLaw { rho0: f64, exponent: u32 },
    Tabulated(Table),
}

impl DosModel {
    fn validate(&self) -> Result<(), SpectraError> {
        match self {
            DosModel::Constant { rho0 } | DosModel::PowerLaw { rho0, .. } if !(*rho0 >= 0.0) || !rho0.is_finite() => {
                Err(SpectraError::invalid("density of states", format!("rho0 = {rho0} must be finite and >= 0")))
            }
            DosModel::PowerLaw { exponent, .. } if *exponent > 2 => {
                Err(SpectraError::invalid("density of states", format!("power-law exponent {exponent} not in {{0, 1, 2}}")))
            }
            DosModel::Tabulated(t) if t.values().iter().any(|v| *v < 0.0) => {
                Err(SpectraError::invalid("density of states", "tabulated values must be >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Whether the model vanishes at ε → 0 at least linearly.
    fn vanishes_at_zero(&self) -> bool {
        match self {
            DosModel::Constant { rho0 } => *rho0 == 0.0,
            DosModel::PowerLaw { rho0, exponent } => *exponent >= 1 || *rho0 == 0.0,
            DosModel::Tabulated(t) => t.support().0 == 0.0 && t.values()[0] == 0.0,
        }
    }

    fn eval(&self, energy: f64) -> Result<f64, SpectraError> {
        match self {
            DosModel::Constant { rho0 } => Ok(*rho0),
            DosModel::PowerLaw { rho0, exponent } => Ok(rho0 * energy.powi(*exponent as i32)),
            DosModel::Tabulated(t) => t.eval(energy, "tabulated density of states"),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        match self {
            DosModel::Constant { rho0 } => DosModel::Constant { rho0: rho0 * s },
            DosModel::PowerLaw { rho0, exponent } => DosModel::PowerLaw { rho0: rho0 * s, exponent: *exponent },
            DosModel::Tabulated(t) => DosModel::Tabulated(Table {
                energies: t.energies.clone(),
                values: t.values.iter().map(|v| v * s).collect(),
            }),
        }
    }
}

/// Energy-dependent coupling amplitude λ(ε).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CouplingModel {
    Constant { value: f64 },
    Tabulated(Table),
}

impl CouplingModel {
    pub fn constant(value: f64) -> Self {
        CouplingModel::Constant { value }
    }

    pub fn eval(&self, energy: f64) -> Result<f64, SpectraError> {
        match self {
            CouplingModel::Constant { value } => Ok(*value),
            CouplingModel::Tabulated(t) => t.eval(energy, "tabulated coupling"),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CouplingModel::Constant { value } => *value == 0.0,
            CouplingModel::Tabulated(t) => t.values().iter().all(|v| *v == 0.0),
        }
    }

    fn validate(&self) -> Result<(), SpectraError> {
        match self {
            CouplingModel::Constant { value } if !value.is_finite() => {
                Err(SpectraError::invalid("coupling", "constant coupling must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// One photonic lead: band, density of states and coupling amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadSpectrum {
    side: Side,
    band: Band,
    dos: DosModel,
    coupling: CouplingModel,
    ir_regularized: bool,
}

impl LeadSpectrum {
    /// Rejects a band touching ε = 0 unless the density of states vanishes
    /// there at least linearly.
    pub fn new(side: Side, band: Band, dos: DosModel, coupling: CouplingModel) -> Result<Self, SpectraError> {
        Self::build(side, band, dos, coupling, true)
    }

    /// Same as [`LeadSpectrum::new`] but skips the infrared rule. Integrals
    /// whose support reaches ε = 0 are then checked for boundedness at
    /// evaluation time instead.
    pub fn new_unregularized(
        side: Side,
        band: Band,
        dos: DosModel,
        coupling: CouplingModel,
    ) -> Result<Self, SpectraError> {
        Self::build(side, band, dos, coupling, false)
    }

    /// Flat density `rho0` with the default ε² infrared density when the
    /// band starts at zero.
    pub fn flat(side: Side, band: Band, rho0: f64, coupling: CouplingModel) -> Result<Self, SpectraError> {
        let dos = if band.touches_zero() {
            DosModel::PowerLaw { rho0, exponent: 2 }
        } else {
            DosModel::Constant { rho0 }
        };
        Self::new(side, band, dos, coupling)
    }

    fn build(
        side: Side,
        band: Band,
        dos: DosModel,
        coupling: CouplingModel,
        ir_regularized: bool,
    ) -> Result<Self, SpectraError> {
        Band::new(band.min, band.max)?;
        dos.validate()?;
        coupling.validate()?;
        if ir_regularized && band.touches_zero() && !dos.vanishes_at_zero() {
            return Err(SpectraError::invalid(
                "lead",
                "band touches zero energy but the density of states does not vanish there",
            ));
        }
        Ok(LeadSpectrum { side, band, dos, coupling, ir_regularized })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn dos_model(&self) -> &DosModel {
        &self.dos
    }

    pub fn coupling_model(&self) -> &CouplingModel {
        &self.coupling
    }

    pub fn is_ir_regularized(&self) -> bool {
        self.ir_regularized
    }

    pub fn dos(&self, energy: f64) -> Result<f64, SpectraError> {
        dos(energy, self)
    }

    /// λ(ε) inside the band, 0 outside.
    pub fn coupling(&self, energy: f64) -> Result<f64, SpectraError> {
        if !self.band.contains(energy) {
            return Ok(0.0);
        }
        self.coupling.eval(energy)
    }

    pub fn with_coupling(&self, coupling: CouplingModel) -> Self {
        LeadSpectrum { coupling, ..self.clone() }
    }

    /// Copy with the density of states multiplied by `s`.
    pub fn with_dos_scaled(&self, s: f64) -> Self {
        LeadSpectrum { dos: self.dos.scaled(s), ..self.clone() }
    }
}

/// Density of states ρ(ε); exactly 0 outside the band.
pub fn dos(energy: f64, lead: &LeadSpectrum) -> Result<f64, SpectraError> {
    if !lead.band.contains(energy) {
        return Ok(0.0);
    }
    lead.dos.eval(energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathState {
    temperature: f64,
}

impl BathState {
    pub fn new(temperature: f64) -> Result<Self, SpectraError> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(SpectraError::invalid("bath", format!("temperature {temperature} must be finite and > 0")));
        }
        Ok(BathState { temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Photons carry no conserved charge: μ = 0.
    pub fn chemical_potential(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpDrive {
    frequency: f64,
}

impl PumpDrive {
    pub fn new(frequency: f64) -> Result<Self, SpectraError> {
        if !(frequency >= 0.0) || !frequency.is_finite() {
            return Err(SpectraError::invalid("pump", format!("frequency {frequency} must be finite and >= 0")));
        }
        Ok(PumpDrive { frequency })
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }
}

/// Bose–Einstein occupation `1/(e^{(ε−μ)/T} − 1)`.
///
/// ε = 0 is the pole of the distribution at μ = 0 and is rejected.
pub fn bose_occupation(energy: f64, bath: &BathState) -> Result<f64, SpectraError> {
    if !(energy > 0.0) {
        return Err(SpectraError::Domain { what: "Bose occupation", energy });
    }
    Ok(1.0 / ((energy - bath.chemical_potential()) / bath.temperature).exp_m1())
}

/// Pair amplitude λ(ε₁, ε₂) tabulated on a rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable2d")]
pub struct Table2d {
    left_energies: Vec<f64>,
    right_energies: Vec<f64>,
    /// Row-major, `values[i][j]` at `(left_energies[i], right_energies[j])`.
    values: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawTable2d {
    left_energies: Vec<f64>,
    right_energies: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<RawTable2d> for Table2d {
    type Error = SpectraError;

    fn try_from(raw: RawTable2d) -> Result<Self, Self::Error> {
        Table2d::new(raw.left_energies, raw.right_energies, raw.values)
    }
}

impl Table2d {
    pub fn new(left_energies: Vec<f64>, right_energies: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, SpectraError> {
        let increasing = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&left_energies) || !increasing(&right_energies) {
            return Err(SpectraError::invalid("2-D table", "axes need >= 2 strictly increasing points"));
        }
        if values.len() != left_energies.len() || values.iter().any(|r| r.len() != right_energies.len()) {
            return Err(SpectraError::invalid("2-D table", "value grid shape does not match axes"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SpectraError::invalid("2-D table", "entries must be finite"));
        }
        Ok(Table2d { left_energies, right_energies, values })
    }

    pub fn eval(&self, e1: f64, e2: f64) -> Result<f64, SpectraError> {
        let locate = |axis: &[f64], e: f64| -> Result<(usize, f64), SpectraError> {
            if !(e >= axis[0] && e <= *axis.last().unwrap()) {
                return Err(SpectraError::Domain { what: "tabulated pair coupling", energy: e });
            }
            let i = axis.partition_point(|&x| x <= e).clamp(1, axis.len() - 1);
            Ok((i - 1, (e - axis[i - 1]) / (axis[i] - axis[i - 1])))
        };
        let (i, fx) = locate(&self.left_energies, e1)?;
        let (j, fy) = locate(&self.right_energies, e2)?;
        let v = &self.values;
        Ok(v[i][j] * (1.0 - fx) * (1.0 - fy)
            + v[i + 1][j] * fx * (1.0 - fy)
            + v[i][j + 1] * (1.0 - fx) * fy
            + v[i + 1][j + 1] * fx * fy)
    }
}

/// How λ(ε_α, ε_β) is formed for the direct (trivial-scatterer) kernel.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PairCoupling {
    /// `λ(ε_α, ε_β) = λ_L(ε_α)·λ_R(ε_β)` from the two leads.
    #[default]
    Separable,
    Tabulated(Table2d),
}
