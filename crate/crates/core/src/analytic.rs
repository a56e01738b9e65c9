//! Closed-form and lower-bound throughput of the four protocols, and the
//! distributions of the harvesting-pattern quantities used to derive them.
//!
//! All expressions assume unit-mean Rayleigh fading and `T = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{AnalyticError, SpecfunError};
use crate::params::{derive_constants, DerivedConstants, SystemParams};
use crate::protocols::Protocol;
use crate::specfun::{
    bessel_k1_scaled, exp_integral_e1_scaled, integrate_semi_infinite, regularized_gamma_p,
};

pub const DEFAULT_TRUNCATION_N: usize = 10;
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

/// Everything a throughput evaluator needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    pub params: SystemParams,
    pub dc: DerivedConstants,
    /// Number of series terms after the first for the DF continuous bound.
    pub truncation_n: usize,
    /// Relative tolerance of the numerical integral in the AF continuous result.
    pub quad_tol: f64,
}

impl TheoremInputs {
    pub fn new(params: SystemParams) -> Result<Self, AnalyticError> {
        let params = params.validated()?;
        let dc = derive_constants(&params)?;
        Ok(Self {
            params,
            dc,
            truncation_n: DEFAULT_TRUNCATION_N,
            quad_tol: DEFAULT_QUAD_TOL,
        })
    }

    pub fn with_truncation(mut self, n: usize) -> Result<Self, AnalyticError> {
        if n < 1 {
            return Err(AnalyticError::Input("truncation_n must be >= 1".into()));
        }
        self.truncation_n = n;
        Ok(self)
    }

    pub fn with_quad_tol(mut self, tol: f64) -> Result<Self, AnalyticError> {
        if !(tol > 1e-14 && tol < 1e-2) {
            return Err(SpecfunError::Tolerance(tol).into());
        }
        self.quad_tol = tol;
        Ok(self)
    }
}

/// Theorem value for any proposed protocol: exact for AF, a lower bound for DF.
pub fn throughput(protocol: Protocol, inputs: &TheoremInputs) -> Result<f64, AnalyticError> {
    match protocol {
        Protocol::AfContinuous => throughput_af_continuous(inputs),
        Protocol::AfDiscrete => throughput_af_discrete(inputs),
        Protocol::DfContinuous => throughput_df_continuous_lb(inputs),
        Protocol::DfDiscrete => throughput_df_discrete_lb(inputs),
        Protocol::BaselineFixed { .. } => Err(AnalyticError::NoClosedForm("baseline_fixed")),
    }
}

/// `(a d + b c) / c^2`, the inverse-argument weight of the AF integrals.
fn af_k(dc: &DerivedConstants) -> f64 {
    dc.u * dc.u / 4.0
}

/// `e^u * nu`, where
/// `nu = int_0^inf e^-(x + k/x) / (2 c eta Ps x + 2 eta Ps d + c d1^m Pr) dx`.
///
/// The exponent never drops below `u = 2 sqrt(k)`, so factoring out `e^-u`
/// keeps the integrand O(1) near its peak at `x = sqrt(k)`. The variable is
/// rescaled so the upper cutoff, near `max(1, sqrt(k))`, stays away from the
/// point at infinity of the quadrature map; small-`x` structure is resolved
/// near zero where floating point has room.
pub fn nu_scaled(inputs: &TheoremInputs) -> Result<f64, AnalyticError> {
    let p = &inputs.params;
    let dc = &inputs.dc;
    let k = af_k(dc);
    let eta_ps = p.conversion_efficiency * p.source_power;
    let slope = 2.0 * dc.c * eta_ps;
    let offset = 2.0 * eta_ps * dc.d + dc.c * p.path_loss_sr() * p.relay_power;
    let root_k = k.sqrt();
    let scale = root_k.max(1.0);
    let integrand = |y: f64| {
        if y == 0.0 {
            return 0.0;
        }
        let x = scale * y;
        // x + k/x - 2 sqrt(k) = (sqrt(x) - sqrt(k/x))^2, free of cancellation.
        let exponent = (x.sqrt() - root_k / x.sqrt()).powi(2);
        scale * (-exponent).exp() / (slope * x + offset)
    };
    Ok(integrate_semi_infinite(integrand, inputs.quad_tol)?.value)
}

/// Protocol 1, exact:
/// `tau = e^-((a+d)/c) / 2 * (u K1(u) - c d1^m Pr nu)`.
pub fn throughput_af_continuous(inputs: &TheoremInputs) -> Result<f64, AnalyticError> {
    let p = &inputs.params;
    let dc = &inputs.dc;
    let nu_s = nu_scaled(inputs)?;
    let lead = dc.u * bessel_k1_scaled(dc.u)?;
    let correction = dc.c * p.path_loss_sr() * p.relay_power * nu_s;
    let prefactor = (-(dc.a + dc.d) / dc.c - dc.u).exp() / 2.0;
    // The difference can round a hair below zero when both terms are tiny.
    Ok((prefactor * (lead - correction)).clamp(0.0, 0.5))
}

/// Theorem 1 with the integral term dropped; an upper bound on the exact value.
pub fn throughput_af_continuous_without_nu(inputs: &TheoremInputs) -> Result<f64, AnalyticError> {
    let dc = &inputs.dc;
    let lead = dc.u * bessel_k1_scaled(dc.u)?;
    Ok((-(dc.a + dc.d) / dc.c - dc.u).exp() / 2.0 * lead)
}

/// Probability that an AF block is not in outage, `e^-((a+d)/c) u K1(u)`.
pub fn af_success_probability(dc: &DerivedConstants) -> Result<f64, AnalyticError> {
    Ok((-(dc.a + dc.d) / dc.c - dc.u).exp() * dc.u * bessel_k1_scaled(dc.u)?)
}

/// Protocol 2, exact:
/// `tau = e^-((a+d)/c) u K1(u) / (2 (1 + Pr d1^m / (2 eta Ps)))`.
pub fn throughput_af_discrete(inputs: &TheoremInputs) -> Result<f64, AnalyticError> {
    let success = af_success_probability(&inputs.dc)?;
    Ok(success / (2.0 * (1.0 + inputs.params.harvest_ratio())))
}

/// Protocol 4 lower bound:
/// `eta Ps e^-(a_bar + b_bar) / (Pr d1^m e^-a_bar + 2 eta Ps)`.
pub fn throughput_df_discrete_lb(inputs: &TheoremInputs) -> Result<f64, AnalyticError> {
    let p = &inputs.params;
    let dc = &inputs.dc;
    let eta_ps = p.conversion_efficiency * p.source_power;
    let num = eta_ps * (-(dc.a_bar + dc.b_bar)).exp();
    let den = p.relay_power * p.path_loss_sr() * (-dc.a_bar).exp() + 2.0 * eta_ps;
    Ok(num / den)
}

/// Protocol 3 lower bound, `sum_{n=0}^{N} df_cont_series_term(n)`.
pub fn throughput_df_continuous_lb(inputs: &TheoremInputs) -> Result<f64, AnalyticError> {
    let mut total = 0.0;
    for n in 0..=inputs.truncation_n {
        total += df_cont_series_term(inputs, n)?;
    }
    Ok(total.clamp(0.0, 0.5))
}

/// Contribution of patterns with `n` relay-outage blocks before the
/// transmitting block to the Protocol 3 lower bound:
/// `e^-(a_bar + b_bar) / 2 * I_n`, where, with `h_1..h_n, h` iid Exp(1),
/// `S_n = h_1 + ... + h_n` and `c0 = Pr d1^m / (2 eta Ps)`,
///
/// `I_n = E[ 1{h_1..h_n < a_bar} 1{h >= a_bar} min(1, (h + S_n) / (h + c0)) ]`.
///
/// Splitting the minimum gives `I_n = e^-a_bar p^n - s J_n` with
/// `p = 1 - e^-a_bar`, `s = int_{a_bar}^inf e^-h / (h + c0) dh` and
/// `J_n = E[(c0 - S_n)^+ ; h_j < a_bar]`.
pub fn df_cont_series_term(inputs: &TheoremInputs, n: usize) -> Result<f64, AnalyticError> {
    let dc = &inputs.dc;
    let value = (-(dc.a_bar + dc.b_bar)).exp() / 2.0 * df_cont_series_integral(inputs, n)?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AnalyticError::NonFiniteTerm { index: n })
    }
}

/// `I_n` of [`df_cont_series_term`], without the outage prefactor.
pub fn df_cont_series_integral(inputs: &TheoremInputs, n: usize) -> Result<f64, AnalyticError> {
    let a_bar = inputs.dc.a_bar;
    let c0 = inputs.params.harvest_ratio();
    let tail = (-a_bar).exp();
    // e^{c0} E1(a_bar + c0) rewritten with the scaled E1 so it cannot overflow.
    let s = tail * exp_integral_e1_scaled(a_bar + c0)?;
    let p = -(-a_bar).exp_m1();
    let value = if n == 0 {
        tail - c0 * s
    } else {
        tail * p.powi(n as i32) - s * truncated_sum_mean(n, a_bar, c0, p)?
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AnalyticError::NonFiniteTerm { index: n })
    }
}

/// `J_n = E[(c0 - S_n)^+ ; h_1..h_n < a_bar]` for `n >= 1`.
fn truncated_sum_mean(n: usize, a_bar: f64, c0: f64, p: f64) -> Result<f64, AnalyticError> {
    let nf = n as f64;
    if nf * a_bar <= c0 {
        // S_n < c0 whenever every h_j < a_bar, so the positive part is inert.
        let m1 = 1.0 - (-a_bar).exp() * (1.0 + a_bar);
        return Ok(c0 * p.powi(n as i32) - nf * p.powi(n as i32 - 1) * m1);
    }
    // Inclusion-exclusion over which h_j exceed a_bar, each shifted out of
    // the box; the shifted sum is Gamma(n) distributed.
    let order =
        u32::try_from(n).map_err(|_| AnalyticError::Input("truncation too large".into()))?;
    let mut total = 0.0;
    let mut binom = 1.0;
    for k in 0..=n {
        let shift = k as f64 * a_bar;
        if shift >= c0 {
            break;
        }
        let l = c0 - shift;
        let inner = l * regularized_gamma_p(order, l)? - nf * regularized_gamma_p(order + 1, l)?;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * binom * (-shift).exp() * inner;
        binom *= (n - k) as f64 / (k + 1) as f64;
    }
    Ok(total)
}

/// Distributions describing harvest/transmit patterns of the discrete protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaDistributions {
    /// Mean energy harvested in one full block, `eta Ps / d1^m`.
    pub rho: f64,
    /// Energy of one transmission, `Pr / 2`.
    pub transmit_energy: f64,
    /// Relay outage probability `1 - e^-a_bar`.
    pub p_or: f64,
}

pub fn lemma_distributions(inputs: &TheoremInputs) -> LemmaDistributions {
    LemmaDistributions {
        rho: inputs.dc.rho,
        transmit_energy: inputs.params.transmit_energy(),
        p_or: -(-inputs.dc.a_bar).exp_m1(),
    }
}

impl LemmaDistributions {
    /// Density of the battery level at the start of a pattern, Exp with mean `rho`.
    pub fn eo_pdf(&self, eps: f64) -> Result<f64, AnalyticError> {
        if !(eps >= 0.0) {
            return Err(AnalyticError::Input(format!("E_o must be >= 0, got {eps}")));
        }
        Ok((-eps / self.rho).exp() / self.rho)
    }

    pub fn eo_cdf(&self, eps: f64) -> f64 {
        if eps <= 0.0 {
            0.0
        } else {
            -(-eps / self.rho).exp_m1()
        }
    }

    /// Poisson mean of `X - 1` given the starting battery `e_o`.
    pub fn lambda_p(&self, e_o: f64) -> f64 {
        (self.transmit_energy - e_o) / self.rho
    }

    /// PMF of `X - 1` (harvest blocks beyond the first) given `E_o < Pr/2`.
    pub fn xbar_pmf(&self, xbar: u64, e_o: f64) -> Result<f64, AnalyticError> {
        if !(e_o >= 0.0) {
            return Err(AnalyticError::Input(format!("E_o must be >= 0, got {e_o}")));
        }
        if e_o >= self.transmit_energy {
            return Err(AnalyticError::Input(
                "E_o >= Pr/2: the pattern has no harvest blocks (see x_pmf)".into(),
            ));
        }
        Ok(poisson_pmf(xbar, self.lambda_p(e_o)))
    }

    /// PMF of the number `X` of harvest blocks in a pattern given `e_o`.
    /// Degenerate at 0 when the battery already funds a transmission.
    pub fn x_pmf(&self, x: u64, e_o: f64) -> Result<f64, AnalyticError> {
        if !(e_o >= 0.0) {
            return Err(AnalyticError::Input(format!("E_o must be >= 0, got {e_o}")));
        }
        if e_o >= self.transmit_energy {
            return Ok(if x == 0 { 1.0 } else { 0.0 });
        }
        match x {
            0 => Ok(0.0),
            _ => self.xbar_pmf(x - 1, e_o),
        }
    }

    /// `E[X] = Pr d1^m / (2 eta Ps)`, averaged over `E_o`.
    pub fn expected_x(&self) -> f64 {
        self.transmit_energy / self.rho
    }

    /// Geometric PMF of relay-outage harvest blocks `Y` in Protocol 4.
    pub fn y_pmf(&self, y: u64) -> f64 {
        (1.0 - self.p_or) * self.p_or.powf(y as f64)
    }

    pub fn expected_y(&self) -> f64 {
        self.p_or / (1.0 - self.p_or)
    }
}

/// Poisson PMF evaluated in log space so large means do not overflow.
fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    let ln_fact: f64 = (2..=k).map(|j| (j as f64).ln()).sum();
    (kf * lambda.ln() - lambda - ln_fact).exp()
}
