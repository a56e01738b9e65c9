//! Special functions and quadrature used by the closed-form throughput
//! expressions: modified Bessel `K1`, exponential integral `E1`, and
//! adaptive Gauss-Kronrod integration over `(0, inf)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::SpecfunError;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Crossover between the power series and the continued fraction.
const K1_SERIES_MAX: f64 = 2.0;

/// `K1(x)`, the first-order modified Bessel function of the second kind.
///
/// Underflows to 0 for `x` beyond roughly 705.
pub fn bessel_k1(x: f64) -> Result<f64, SpecfunError> {
    check_positive("bessel_k1", x)?;
    if x <= K1_SERIES_MAX {
        Ok(k1_series(x))
    } else {
        Ok(k1_steed_scaled(x) * (-x).exp())
    }
}

/// `exp(x) K1(x)`, finite for all `x > 0`.
pub fn bessel_k1_scaled(x: f64) -> Result<f64, SpecfunError> {
    check_positive("bessel_k1_scaled", x)?;
    if x <= K1_SERIES_MAX {
        Ok(k1_series(x) * x.exp())
    } else {
        Ok(k1_steed_scaled(x))
    }
}

/// `E1(x) = int_x^inf exp(-t)/t dt`. Underflows to 0 for large `x`.
pub fn exp_integral_e1(x: f64) -> Result<f64, SpecfunError> {
    check_positive("exp_integral_e1", x)?;
    if x < 1.0 {
        Ok(e1_series(x))
    } else {
        Ok(e1_continued_fraction_scaled(x) * (-x).exp())
    }
}

/// `exp(x) E1(x)`, finite for all `x > 0`.
pub fn exp_integral_e1_scaled(x: f64) -> Result<f64, SpecfunError> {
    check_positive("exp_integral_e1_scaled", x)?;
    if x < 1.0 {
        Ok(e1_series(x) * x.exp())
    } else {
        Ok(e1_continued_fraction_scaled(x))
    }
}

/// Regularized lower incomplete gamma `P(n, x)` for integer order `n >= 1`
/// and `x >= 0`, i.e. the probability that a sum of `n` unit exponentials
/// is below `x`.
pub fn regularized_gamma_p(n: u32, x: f64) -> Result<f64, SpecfunError> {
    if n == 0 {
        return Err(SpecfunError::Domain {
            function: "regularized_gamma_p",
            x: 0.0,
        });
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(SpecfunError::Domain {
            function: "regularized_gamma_p",
            x,
        });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let nf = f64::from(n);
    if x < nf + 1.0 {
        // Tail of the Poisson series, sum_{j >= n} e^-x x^j / j!.
        let log_first = -x + nf * x.ln() - ln_factorial(n);
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = nf;
        loop {
            j += 1.0;
            term *= x / j;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        Ok((log_first.exp() * sum).min(1.0))
    } else {
        // Complement: sum_{j < n} e^-x x^j / j!.
        let mut term = (-x).exp();
        let mut q = term;
        for j in 1..n {
            term *= x / f64::from(j);
            q += term;
        }
        Ok((1.0 - q).max(0.0))
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| f64::from(k).ln()).sum()
}

fn check_positive(function: &'static str, x: f64) -> Result<(), SpecfunError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(SpecfunError::Domain { function, x })
    }
}

// K1(x) = 1/x + ln(x/2) I1(x) - (x/4) sum_k [psi(k+1) + psi(k+2)] y^k / (k! (k+1)!),
// y = x^2/4.
fn k1_series(x: f64) -> f64 {
    let y = 0.25 * x * x;
    let mut term = 1.0; // y^k / (k! (k+1)!)
    let mut psi_k1 = -EULER_GAMMA; // psi(k+1)
    let mut psi_k2 = 1.0 - EULER_GAMMA; // psi(k+2)
    let mut i1_sum = 0.0;
    let mut digamma_sum = 0.0;
    for k in 0..200 {
        i1_sum += term;
        digamma_sum += (psi_k1 + psi_k2) * term;
        let kf = k as f64;
        psi_k1 += 1.0 / (kf + 1.0);
        psi_k2 += 1.0 / (kf + 2.0);
        term *= y / ((kf + 1.0) * (kf + 2.0));
        if term < 1e-18 * i1_sum {
            break;
        }
    }
    let half = 0.5 * x;
    1.0 / x + (half.ln()) * half * i1_sum - 0.5 * half * digamma_sum
}

// Steed's continued fraction (Temme's CF2) for K0 and K1 at x >= 2, scaled
// by exp(x).
fn k1_steed_scaled(x: f64) -> f64 {
    const EPS: f64 = 1e-17;
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k0_scaled = (std::f64::consts::PI / (2.0 * x)).sqrt() / s;
    k0_scaled * (x + 0.5 - h) / x
}

fn e1_series(x: f64) -> f64 {
    // E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    let mut sum = 0.0;
    let mut fact_term = 1.0; // (-x)^k / k!
    for k in 1..100 {
        let kf = k as f64;
        fact_term *= -x / kf;
        let t = fact_term / kf;
        sum += t;
        if t.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

// Modified Lentz evaluation of the continued fraction
// exp(x) E1(x) = 1/(x+1-) 1/(x+3-) 4/(x+5-) ...
fn e1_continued_fraction_scaled(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Result of a numerical integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

/// Evaluation budget for one adaptive integration.
const MAX_EVALUATIONS: usize = 200_000;

/// `int_0^inf f(x) dx` by adaptive 15-point Gauss-Kronrod on the map
/// `x = t / (1 - t)`, `t in [0, 1)`.
///
/// Succeeds once the summed error estimate is at most `tol_rel * |value|`
/// (or 1e-300 absolute); otherwise returns
/// [`SpecfunError::NoConvergence`] with the best estimate reached.
pub fn integrate_semi_infinite<F>(f: F, tol_rel: f64) -> Result<QuadratureResult, SpecfunError>
where
    F: Fn(f64) -> f64,
{
    let mapped = |t: f64| {
        let one_minus = 1.0 - t;
        if one_minus <= 0.0 {
            // Nodes round onto t = 1 only after heavy bisection near infinity,
            // where an integrable f has vanished.
            return 0.0;
        }
        f(t / one_minus) / (one_minus * one_minus)
    };
    integrate_interval(mapped, 0.0, 1.0, tol_rel)
}

/// `int_a^b f(x) dx` on a finite interval, same rule and stopping criterion
/// as [`integrate_semi_infinite`].
pub fn integrate_interval<F>(
    f: F,
    a: f64,
    b: f64,
    tol_rel: f64,
) -> Result<QuadratureResult, SpecfunError>
where
    F: Fn(f64) -> f64,
{
    if !(tol_rel > 1e-14 && tol_rel < 1e-2) {
        return Err(SpecfunError::Tolerance(tol_rel));
    }
    let mut evaluations = 0;
    let mut heap = BinaryHeap::new();
    // A few equal pieces up front so a narrow feature cannot hide between
    // the nodes of a single rule.
    const INITIAL_PIECES: usize = 8;
    let width = (b - a) / INITIAL_PIECES as f64;
    for i in 0..INITIAL_PIECES {
        let lo = a + width * i as f64;
        let hi = if i + 1 == INITIAL_PIECES {
            b
        } else {
            lo + width
        };
        heap.push(gauss_kronrod_15(&f, lo, hi)?);
        evaluations += 15;
    }
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s: &Segment| (v + s.value, e + s.error));
        if error <= (tol_rel * value.abs()).max(1e-300) {
            return Ok(QuadratureResult {
                value,
                abs_error_estimate: error,
                evaluations,
            });
        }
        if evaluations >= MAX_EVALUATIONS {
            return Err(SpecfunError::NoConvergence {
                value,
                abs_error_estimate: error,
                evaluations,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        let scale = worst.lo.abs().max(worst.hi.abs());
        if mid <= worst.lo || mid >= worst.hi || worst.hi - worst.lo <= 64.0 * f64::EPSILON * scale
        {
            // Bisection has reached floating-point resolution; the integrand
            // is singular or not integrable here.
            return Err(SpecfunError::NoConvergence {
                value,
                abs_error_estimate: error,
                evaluations,
            });
        }
        heap.push(gauss_kronrod_15(&f, worst.lo, mid)?);
        heap.push(gauss_kronrod_15(&f, mid, worst.hi)?);
        evaluations += 30;
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
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

#[allow(clippy::excessive_precision)]
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
#[allow(clippy::excessive_precision)]
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
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Segment, SpecfunError> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(SpecfunError::NonFiniteIntegrand(x))
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut res_abs = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    // QUADPACK error rescaling.
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Segment {
        lo,
        hi,
        value,
        error,
    })
}
