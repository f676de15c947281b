#![allow(dead_code)]

use photon_landauer::{Band, BathState, CouplingModel, LeadSpectrum, PumpDrive, Side, TransmissionKernel, TransportProblem};

pub fn flat(side: Side, lo: f64, hi: f64, rho: f64, lambda: f64) -> LeadSpectrum {
    LeadSpectrum::flat(side, Band::new(lo, hi).unwrap(), rho, CouplingModel::constant(lambda)).unwrap()
}

pub fn trivial(left: LeadSpectrum, right: LeadSpectrum, pump: f64, tl: f64, tr: f64) -> TransportProblem {
    TransportProblem::new(
        TransmissionKernel::trivial(left, right).unwrap(),
        BathState::new(tl).unwrap(),
        BathState::new(tr).unwrap(),
        PumpDrive::new(pump).unwrap(),
    )
}

/// Left band [0.5, 1.5], right band [2, 3], flat unit density, λ = 0.1 split
/// as λ_L = 0.1 and λ_R = 1, pump 1.6, both baths at T = 0.5.
pub fn gapped_benchmark() -> TransportProblem {
    gapped_at(1.6)
}

pub fn gapped_at(pump: f64) -> TransportProblem {
    trivial(flat(Side::Left, 0.5, 1.5, 1.0, 0.1), flat(Side::Right, 2.0, 3.0, 1.0, 1.0), pump, 0.5, 0.5)
}

/// Both leads on [0.1, 1], λ = 0.1, pump 1.5, near-vacuum baths.
pub fn squeezing_setup() -> TransportProblem {
    trivial(flat(Side::Left, 0.1, 1.0, 1.0, 0.1), flat(Side::Right, 0.1, 1.0, 1.0, 1.0), 1.5, 1e-3, 1e-3)
}

use photon_landauer::quadrature::Tolerance;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn lead_with(side: Side, lo: f64, hi: f64, dos: DosModel, lambda: f64) -> LeadSpectrum {
    LeadSpectrum::new(side, Band::new(lo, hi).unwrap(), dos, CouplingModel::constant(lambda)).unwrap()
}

fn random_dos(rng: &mut ChaCha8Rng) -> DosModel {
    let rho0 = rng.gen_range(0.3..2.0);
    if rng.gen_bool(0.5) {
        DosModel::Constant { rho0 }
    } else {
        DosModel::PowerLaw { rho0, exponent: rng.gen_range(0..=2) }
    }
}

/// Overlapping bands with a pump inside the pair-creation window
/// `a_L + a_R < ω_p < b_L + b_R`.
pub fn random_ungapped(rng: &mut ChaCha8Rng) -> TransportProblem {
    let (al, ar): (f64, f64) = (rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5));
    let (bl, br) = (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0));
    let left = lead_with(Side::Left, al, bl, random_dos(rng), rng.gen_range(0.05..0.5));
    let right = lead_with(Side::Right, ar, br, random_dos(rng), rng.gen_range(0.05..0.5));
    let pump = rng.gen_range(al + ar + 0.2..(al + ar + 3.0).min(bl + br - 0.2));
    trivial(left, right, pump, rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0))
}

/// Random spectra with no pump and a common temperature.
pub fn random_zero_bias(rng: &mut ChaCha8Rng) -> TransportProblem {
    let t = rng.gen_range(0.1..2.0);
    let mut p = random_ungapped(rng);
    p.pump = PumpDrive::new(0.0).unwrap();
    p.left_bath = BathState::new(t).unwrap();
    p.right_bath = BathState::new(t).unwrap();
    p
}

/// Right band above the left one and `ω_p` below the pair threshold, so
/// only up-conversion contributes.
pub fn random_gapped(rng: &mut ChaCha8Rng) -> TransportProblem {
    let al: f64 = rng.gen_range(0.3..1.0);
    let bl = al + rng.gen_range(0.3..1.5);
    let ar = bl + rng.gen_range(0.1..1.0);
    let br = ar + rng.gen_range(0.3..1.5);
    // Overlap needs ω > ar − bl; no pairs needs ω < al + ar.
    let pump = rng.gen_range(ar - bl + 0.05..(al + ar).min(br - al) - 0.01);
    let left = lead_with(Side::Left, al, bl, random_dos(rng), rng.gen_range(0.05..0.5));
    let right = lead_with(Side::Right, ar, br, random_dos(rng), rng.gen_range(0.05..0.5));
    let t = rng.gen_range(0.1..2.0);
    trivial(left, right, pump, t, t)
}

pub fn tight() -> Tolerance {
    Tolerance::new(1e-16, 1e-12)
}

use photon_landauer::DosModel;
