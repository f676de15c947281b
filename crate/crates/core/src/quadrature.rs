//! Adaptive Gauss–Kronrod (7, 15) quadrature with global bisection.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate falls below `max(abs_tol, rel_tol·|I|)` or the subdivision budget
//! is exhausted. The integrand may fail; the first error aborts integration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the odd Kronrod nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs_tol: 1e-10, rel_tol: 1e-8, max_subdivisions: 500 }
    }
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Tolerance { abs_tol, rel_tol, ..Default::default() }
    }

    pub fn is_valid(&self) -> bool {
        self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.max_subdivisions > 0
    }

    pub fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { value: 0.0, error: 0.0, evaluations: 0, converged: true };
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        scaled = res_asc * (200.0 * scaled / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn kronrod15<F, E>(f: &mut F, a: f64, b: f64) -> Result<Segment, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center)?;
    let mut res_g = f_center * WG[3];
    let mut res_k = f_center * WGK[7];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let scale = half.abs();
    let error = rescale_error((res_k - res_g) * half, res_abs * scale, res_asc * scale);
    Ok(Segment { a, b, value: res_k * half, error })
}

/// Integrates `f` over `[a, b]`. An empty or reversed interval yields an
/// exact zero.
///
/// A non-converged result is returned as `Ok` with `converged == false`
/// and the best available estimate.
pub fn integrate<F, E>(mut f: F, a: f64, b: f64, tol: &Tolerance) -> Result<Estimate, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    if !(b > a) {
        return Ok(Estimate::ZERO);
    }
    let first = kronrod15(&mut f, a, b)?;
    let mut evaluations = 15;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::from([first]);
    let mut subdivisions = 1;

    while error > tol.target(value) {
        if subdivisions >= tol.max_subdivisions {
            break;
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        // Stop refining once the interval is at the resolution of f64.
        if mid <= worst.a || mid >= worst.b || (worst.b - worst.a) < 1e3 * f64::EPSILON * worst.a.abs().max(worst.b.abs()) {
            heap.push(worst);
            break;
        }
        let left = kronrod15(&mut f, worst.a, mid)?;
        let right = kronrod15(&mut f, mid, worst.b)?;
        evaluations += 30;
        subdivisions += 1;
        heap.push(left);
        heap.push(right);
        // Re-sum rather than update incrementally so the totals do not
        // accumulate cancellation error.
        value = heap.iter().map(|s| s.value).sum();
        error = heap.iter().map(|s| s.error).sum();
    }
    let converged = error <= tol.target(value);
    Ok(Estimate { value, error, evaluations, converged })
}

/// Integrates over consecutive pieces `[p0, p1], [p1, p2], …`, splitting the
/// tolerance budget evenly. Use for integrands with known discontinuities.
pub fn integrate_pieces<F, E>(mut f: F, breakpoints: &[f64], tol: &Tolerance) -> Result<Estimate, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let pieces = breakpoints.windows(2).filter(|w| w[1] > w[0]).count().max(1);
    let piece_tol = Tolerance { abs_tol: tol.abs_tol / pieces as f64, ..*tol };
    let mut total = Estimate::ZERO;
    for w in breakpoints.windows(2) {
        let part = integrate(&mut f, w[0], w[1], &piece_tol)?;
        total.value += part.value;
        total.error += part.error;
        total.evaluations += part.evaluations;
        total.converged &= part.converged;
    }
    total.converged &= total.error <= tol.target(total.value);
    Ok(total)
}
