//! Parameter sweeps, relay-power and baseline-fraction optimization, and
//! the datasets behind the throughput figures.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{throughput, TheoremInputs};
use crate::error::StudyError;
use crate::params::{db_to_linear, dbm_to_watts, watts_to_dbm, SystemParams};
use crate::protocols::Protocol;
use crate::sim::{run_parallel_with_options, SimOptions, SimResult};

/// Relay-power search range used when none is given, in dBm.
pub const DEFAULT_PR_RANGE_DBM: (f64, f64) = (-60.0, 40.0);
pub const DEFAULT_N_BLOCKS: u64 = 100_000;
const COARSE_STEP_DB: f64 = 1.0;
const FINE_STEP_DB: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    PrDbm,
    SigmaNrDbm,
    SigmaNdDbm,
    GammaODb,
}

impl Axis {
    pub fn label(&self) -> &'static str {
        match self {
            Axis::PrDbm => "pr_dbm",
            Axis::SigmaNrDbm => "sigma_nr_dbm",
            Axis::SigmaNdDbm => "sigma_nd_dbm",
            Axis::GammaODb => "gamma_o_db",
        }
    }

    /// `base` with this axis set to `value` (dBm or dB).
    pub fn apply(&self, base: &SystemParams, value: f64) -> SystemParams {
        let mut p = *base;
        match self {
            Axis::PrDbm => p.relay_power = dbm_to_watts(value),
            Axis::SigmaNrDbm => p.noise_relay = dbm_to_watts(value),
            Axis::SigmaNdDbm => p.noise_dest = dbm_to_watts(value),
            Axis::GammaODb => p.snr_threshold = db_to_linear(value),
        }
        p
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Axis::PrDbm,
            Axis::SigmaNrDbm,
            Axis::SigmaNdDbm,
            Axis::GammaODb,
        ]
        .into_iter()
        .find(|a| a.label() == s)
        .ok_or_else(|| format!("unknown axis `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Analytic,
    Simulate,
    Both,
}

impl Mode {
    pub fn analytic(&self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }

    pub fn simulate(&self) -> bool {
        matches!(self, Mode::Simulate | Mode::Both)
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(Mode::Analytic),
            "simulate" => Ok(Mode::Simulate),
            "both" => Ok(Mode::Both),
            _ => Err(format!(
                "unknown mode `{s}` (expected analytic, simulate or both)"
            )),
        }
    }
}

/// Monte Carlo settings shared by the study operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSettings {
    pub n_blocks: u64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            n_blocks: DEFAULT_N_BLOCKS,
            seed: 1,
            workers: 1,
        }
    }
}

impl SimSettings {
    fn run(&self, p: &SystemParams, protocol: Protocol) -> Result<SimResult, StudyError> {
        let quiet = SimOptions { record_eo: false };
        Ok(run_parallel_with_options(
            p,
            protocol,
            self.n_blocks,
            self.seed,
            self.workers,
            quiet,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub protocols: Vec<Protocol>,
    pub mode: Mode,
    pub sim: SimSettings,
    /// Theorem evaluator settings; `None` keeps the defaults.
    pub truncation_n: Option<usize>,
    pub quad_tol: Option<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.grid.is_empty() {
            return Err(StudyError::Spec("grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(StudyError::Spec("grid values must be finite".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(StudyError::Spec("grid must be strictly increasing".into()));
        }
        if self.protocols.is_empty() {
            return Err(StudyError::Spec("no protocols selected".into()));
        }
        if self.mode.simulate() && self.sim.n_blocks < 1000 {
            return Err(StudyError::Spec(format!(
                "n_blocks must be >= 1000 when simulating, got {}",
                self.sim.n_blocks
            )));
        }
        if self.sim.workers == 0 {
            return Err(StudyError::Spec("workers must be >= 1".into()));
        }
        Ok(())
    }

    fn inputs(&self, p: SystemParams) -> Result<TheoremInputs, StudyError> {
        theorem_inputs(p, self.truncation_n, self.quad_tol)
    }
}

fn theorem_inputs(
    p: SystemParams,
    truncation_n: Option<usize>,
    quad_tol: Option<f64>,
) -> Result<TheoremInputs, StudyError> {
    let mut inp = TheoremInputs::new(p)?;
    if let Some(n) = truncation_n {
        inp = inp.with_truncation(n)?;
    }
    if let Some(tol) = quad_tol {
        inp = inp.with_quad_tol(tol)?;
    }
    Ok(inp)
}

/// One grid point for one protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub protocol: Protocol,
    pub analytic_tau: Option<f64>,
    pub sim_tau: Option<f64>,
    pub sim_stderr: Option<f64>,
}

/// Evaluates every `(grid point, protocol)` pair, grid-major, protocols in
/// the order given. Simulations reuse `spec.sim.seed` at every point.
pub fn sweep(spec: &SweepSpec, base: &SystemParams) -> Result<Vec<SweepRow>, StudyError> {
    spec.validate()?;
    let jobs: Vec<(f64, Protocol)> = spec
        .grid
        .iter()
        .flat_map(|&v| spec.protocols.iter().map(move |&proto| (v, proto)))
        .collect();
    jobs.par_iter()
        .map(|&(value, protocol)| {
            let p = spec.axis.apply(base, value).validated()?;
            let analytic_tau = match (spec.mode.analytic(), protocol) {
                (true, Protocol::BaselineFixed { .. }) | (false, _) => None,
                (true, _) => Some(throughput(protocol, &spec.inputs(p)?)?),
            };
            let (sim_tau, sim_stderr) = if spec.mode.simulate() {
                let r = spec.sim.run(&p, protocol)?;
                (Some(r.mean_tau), Some(r.std_error))
            } else {
                (None, None)
            };
            Ok(SweepRow {
                axis_value: value,
                protocol,
                analytic_tau,
                sim_tau,
                sim_stderr,
            })
        })
        .collect()
}

/// Writes rows in long form: `<axis>,protocol,mode,tau,stderr`, one line per
/// available mode. `stderr` is empty for analytic lines.
pub fn write_csv<W: Write>(axis_name: &str, rows: &[SweepRow], out: W) -> Result<(), StudyError> {
    let csv_err = |e: csv::Error| StudyError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record([axis_name, "protocol", "mode", "tau", "stderr"])
        .map_err(csv_err)?;
    for row in rows {
        let axis = row.axis_value.to_string();
        let proto = row.protocol.to_string();
        if let Some(tau) = row.analytic_tau {
            w.write_record([axis.as_str(), &proto, "analytic", &tau.to_string(), ""])
                .map_err(csv_err)?;
        }
        if let (Some(tau), Some(se)) = (row.sim_tau, row.sim_stderr) {
            w.write_record([
                axis.as_str(),
                &proto,
                "simulate",
                &tau.to_string(),
                &se.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| StudyError::Csv(e.to_string()))
}

/// How the objective of [`optimize_pr`] is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Objective {
    Analytic {
        truncation_n: Option<usize>,
        quad_tol: Option<f64>,
    },
    /// Same seed at every candidate (common random numbers).
    Simulate(SimSettings),
}

impl Objective {
    pub fn analytic() -> Self {
        Objective::Analytic {
            truncation_n: None,
            quad_tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrOptimum {
    pub pr_opt_dbm: f64,
    pub tau_opt: f64,
    /// Standard error at the optimum in simulate mode.
    pub stderr: Option<f64>,
    /// Whether the coarse grid showed a single peak.
    pub unimodal: bool,
}

/// Maximizes throughput over the relay power in `range_dbm` (inclusive).
///
/// A 1 dB grid locates the peak, then golden-section search refines it to
/// 0.01 dB. If the grid shows several peaks, every peak bracket is scanned
/// at 0.01 dB instead. Ties go to the lowest power.
pub fn optimize_pr(
    base: &SystemParams,
    protocol: Protocol,
    range_dbm: (f64, f64),
    objective: Objective,
) -> Result<PrOptimum, StudyError> {
    let (lo, hi) = range_dbm;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(StudyError::Spec(format!(
            "bad search range [{lo}, {hi}] dBm"
        )));
    }
    if matches!(protocol, Protocol::BaselineFixed { .. }) {
        return Err(StudyError::Spec(
            "the baseline has no preset relay power".into(),
        ));
    }
    let eval = |pr_dbm: f64| -> Result<(f64, Option<f64>), StudyError> {
        let p = Axis::PrDbm.apply(base, pr_dbm).validated()?;
        match objective {
            Objective::Analytic {
                truncation_n,
                quad_tol,
            } => Ok((
                throughput(protocol, &theorem_inputs(p, truncation_n, quad_tol)?)?,
                None,
            )),
            Objective::Simulate(sim) => {
                let r = sim.run(&p, protocol)?;
                Ok((r.mean_tau, Some(r.std_error)))
            }
        }
    };

    let steps = ((hi - lo) / COARSE_STEP_DB).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps)
        .map(|i| lo + COARSE_STEP_DB * i as f64)
        .collect();
    if *grid.last().expect("non-empty") < hi {
        grid.push(hi);
    }
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&x| eval(x).map(|v| v.0))
        .collect::<Result<_, _>>()?;

    let peaks = local_maxima(&values);
    let best = first_argmax(&values);
    let unimodal = peaks.len() <= 1;
    let bracket = |i: usize| (grid[i.saturating_sub(1)], grid[(i + 1).min(grid.len() - 1)]);

    let mut candidates: Vec<f64> = vec![grid[best]];
    if unimodal {
        let (a, b) = bracket(best);
        if values.iter().any(|&v| v != values[best]) {
            candidates.push(golden_section_max(
                |x| eval(x).map(|v| v.0),
                a,
                b,
                FINE_STEP_DB,
            )?);
        }
    } else {
        for &i in &peaks {
            let (a, b) = bracket(i);
            let n = ((b - a) / FINE_STEP_DB).round() as usize;
            candidates.extend((0..=n).map(|k| a + (b - a) * k as f64 / n.max(1) as f64));
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let scored: Vec<(f64, f64, Option<f64>)> = candidates
        .par_iter()
        .map(|&x| eval(x).map(|(t, se)| (x, t, se)))
        .collect::<Result<_, _>>()?;
    // Candidates are sorted, so a strict comparison keeps the lowest power on ties.
    let (pr_opt_dbm, tau_opt, stderr) = scored
        .into_iter()
        .fold(None, |acc: Option<(f64, f64, Option<f64>)>, c| match acc {
            Some(a) if a.1 >= c.1 => Some(a),
            _ => Some(c),
        })
        .expect("at least one candidate");
    Ok(PrOptimum {
        pr_opt_dbm,
        tau_opt,
        stderr,
        unimodal,
    })
}

/// Indices that beat both neighbours (a plateau counts once, at its left end).
fn local_maxima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        let left_ok = i == 0 || v[i - 1] < v[i];
        let right_ok = j + 1 == n || v[j + 1] < v[i];
        let flat_everywhere = i == 0 && j + 1 == n;
        if left_ok && right_ok && !flat_everywhere {
            peaks.push(i);
        }
        i = j + 1;
    }
    peaks
}

fn first_argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

/// Golden-section search for a maximum of `f` on `[a, b]`, stopping when the
/// bracket is narrower than `tol`.
pub fn golden_section_max<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64, StudyError>
where
    F: Fn(f64) -> Result<f64, StudyError>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { c } else { d })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaOptimum {
    pub alpha_opt: f64,
    pub tau_opt: f64,
    pub stderr: f64,
}

/// Default harvesting fractions tried for the baseline, 0.05 to 0.95.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Best fixed harvesting fraction of the baseline by simulation at every
/// grid value (same seed throughout); ties go to the lowest fraction.
pub fn optimize_baseline_alpha(
    base: &SystemParams,
    grid: &[f64],
    sim: SimSettings,
) -> Result<AlphaOptimum, StudyError> {
    if grid.is_empty() || grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(StudyError::Spec(
            "alpha grid must be non-empty and inside (0, 1)".into(),
        ));
    }
    let p = base.validated()?;
    let results: Vec<SimResult> = grid
        .par_iter()
        .map(|&alpha| sim.run(&p, Protocol::BaselineFixed { alpha }))
        .collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| grid[i].total_cmp(&grid[j]));
    let best = order
        .into_iter()
        .fold(None, |acc: Option<usize>, i| match acc {
            Some(b) if results[b].mean_tau >= results[i].mean_tau => Some(b),
            _ => Some(i),
        })
        .expect("non-empty grid");
    Ok(AlphaOptimum {
        alpha_opt: grid[best],
        tau_opt: results[best].mean_tau,
        stderr: results[best].std_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    /// AF throughput against relay power.
    Fig1,
    /// DF throughput against relay power.
    Fig2,
    /// Optimal throughput against relay noise.
    Fig3,
    /// Optimal throughput against destination noise.
    Fig4,
    /// Optimal throughput against the SNR threshold, with the baseline.
    Fig6,
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig6" => Ok(Figure::Fig6),
            _ => Err(format!(
                "unknown figure `{s}` (expected fig1, fig2, fig3, fig4 or fig6)"
            )),
        }
    }
}

fn inclusive_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

impl Figure {
    pub fn axis(&self) -> Axis {
        match self {
            Figure::Fig1 | Figure::Fig2 => Axis::PrDbm,
            Figure::Fig3 => Axis::SigmaNrDbm,
            Figure::Fig4 => Axis::SigmaNdDbm,
            Figure::Fig6 => Axis::GammaODb,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        match self {
            Figure::Fig1 | Figure::Fig2 => inclusive_grid(0.0, 40.0, 1.0),
            Figure::Fig3 => inclusive_grid(-100.0, -40.0, 5.0),
            Figure::Fig4 => inclusive_grid(-120.0, -60.0, 5.0),
            Figure::Fig6 => inclusive_grid(10.0, 80.0, 5.0),
        }
    }
}

/// Rows for one figure. Figures 1 and 2 sweep the relay power directly.
/// Figures 3, 4 and 6 use, at each grid point and for each protocol, the
/// relay power that maximizes the theorem value, and simulate there; the
/// Figure 6 baseline uses its best fixed fraction from
/// [`default_alpha_grid`].
pub fn figure_bundle(
    fig: Figure,
    base: &SystemParams,
    sim: SimSettings,
) -> Result<Vec<SweepRow>, StudyError> {
    let axis = fig.axis();
    let grid = fig.grid();
    match fig {
        Figure::Fig1 | Figure::Fig2 => {
            let protocols = if fig == Figure::Fig1 {
                vec![Protocol::AfContinuous, Protocol::AfDiscrete]
            } else {
                vec![Protocol::DfContinuous, Protocol::DfDiscrete]
            };
            let spec = SweepSpec {
                axis,
                grid,
                protocols,
                mode: Mode::Both,
                sim,
                truncation_n: None,
                quad_tol: None,
            };
            sweep(&spec, base)
        }
        Figure::Fig3 | Figure::Fig4 | Figure::Fig6 => {
            let mut jobs: Vec<(f64, Option<Protocol>)> = Vec::new();
            for &v in &grid {
                jobs.extend(Protocol::PROPOSED.iter().map(|&p| (v, Some(p))));
                if fig == Figure::Fig6 {
                    jobs.push((v, None));
                }
            }
            jobs.par_iter()
                .map(|&(value, protocol)| {
                    let p = axis.apply(base, value).validated()?;
                    match protocol {
                        Some(protocol) => optimal_point(&p, protocol, sim, value),
                        None => {
                            let best = optimize_baseline_alpha(&p, &default_alpha_grid(), sim)?;
                            Ok(SweepRow {
                                axis_value: value,
                                protocol: Protocol::BaselineFixed {
                                    alpha: best.alpha_opt,
                                },
                                analytic_tau: None,
                                sim_tau: Some(best.tau_opt),
                                sim_stderr: Some(best.stderr),
                            })
                        }
                    }
                })
                .collect()
        }
    }
}

/// Analytic optimum of `protocol` at `p`, plus a simulation at that power.
pub fn optimal_point(
    p: &SystemParams,
    protocol: Protocol,
    sim: SimSettings,
    axis_value: f64,
) -> Result<SweepRow, StudyError> {
    let opt = optimize_pr(p, protocol, DEFAULT_PR_RANGE_DBM, Objective::analytic())?;
    let at_opt = Axis::PrDbm.apply(p, opt.pr_opt_dbm);
    let r = sim.run(&at_opt, protocol)?;
    Ok(SweepRow {
        axis_value,
        protocol,
        analytic_tau: Some(opt.tau_opt),
        sim_tau: Some(r.mean_tau),
        sim_stderr: Some(r.std_error),
    })
}

/// Relay power of `p` in dBm.
pub fn relay_power_dbm(p: &SystemParams) -> f64 {
    watts_to_dbm(p.relay_power)
}
