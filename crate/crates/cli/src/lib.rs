//! Command-line front end: parses arguments, builds parameters from defaults,
//! an optional JSON config and flag overrides, then dispatches to the core
//! crate. JSON goes to stdout, CSV to `--out` (or stdout without it).
// Negated comparisons deliberately reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use ehrelay_core::analytic::{throughput, TheoremInputs, DEFAULT_QUAD_TOL, DEFAULT_TRUNCATION_N};
use ehrelay_core::params::{default_db_config, from_db_config, to_db_config, ConfigFile};
use ehrelay_core::sim::run_parallel;
use ehrelay_core::study::{
    default_alpha_grid, figure_bundle, optimize_baseline_alpha, optimize_pr, sweep, write_csv,
    Axis, Figure, Mode, Objective, SimSettings, SweepSpec, DEFAULT_PR_RANGE_DBM,
};
use ehrelay_core::{Protocol, SystemParams};

const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "ehrelay",
    version,
    about = "Energy-harvesting relay throughput: theory, simulation, sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form throughput (exact for AF, lower bound for DF).
    Analytic {
        #[command(flatten)]
        params: ParamArgs,
        /// af_cont, af_disc, df_cont, df_disc or all.
        #[arg(long, default_value = "all")]
        protocol: String,
        #[command(flatten)]
        theorem: TheoremArgs,
    },
    /// Monte Carlo throughput of one protocol (or all).
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        /// af_cont, af_disc, df_cont, df_disc, baseline_fixed:<alpha> or all.
        #[arg(long, default_value = "all")]
        protocol: String,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Compare simulation with theory; exits 1 if any tolerance fails.
    Validate {
        #[command(flatten)]
        params: ParamArgs,
        /// af_cont, af_disc, df_cont, df_disc or all.
        #[arg(long, default_value = "all")]
        protocol: String,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        theorem: TheoremArgs,
    },
    /// Sweep one parameter and write CSV.
    Sweep {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated protocols, or all.
        #[arg(long, default_value = "all")]
        protocol: String,
        /// pr_dbm, sigma_nr_dbm, sigma_nd_dbm or gamma_o_db.
        #[arg(long, default_value = "pr_dbm")]
        axis: String,
        /// `start:stop:step` or a comma-separated list; defaults to the figure grid of the axis.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// analytic, simulate or both.
        #[arg(long, default_value = "both")]
        mode: String,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        theorem: TheoremArgs,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal relay power of a protocol, or optimal fraction of the baseline.
    Optimize {
        #[command(flatten)]
        params: ParamArgs,
        /// af_cont, af_disc, df_cont, df_disc, baseline_fixed or all.
        #[arg(long, default_value = "all")]
        protocol: String,
        /// analytic or simulate (the baseline is always simulated).
        #[arg(long, default_value = "analytic")]
        mode: String,
        /// Lower end of the relay-power search range (dBm).
        #[arg(long, default_value_t = DEFAULT_PR_RANGE_DBM.0, allow_negative_numbers = true)]
        pr_min_dbm: f64,
        /// Upper end of the relay-power search range (dBm).
        #[arg(long, default_value_t = DEFAULT_PR_RANGE_DBM.1, allow_negative_numbers = true)]
        pr_max_dbm: f64,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        theorem: TheoremArgs,
    },
    /// Data behind one throughput figure, as CSV.
    Figures {
        #[command(flatten)]
        params: ParamArgs,
        /// fig1, fig2, fig3, fig4 or fig6.
        #[arg(long)]
        fig: String,
        #[command(flatten)]
        sim: SimArgs,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// System parameters: built-in defaults, then `--config`, then these flags.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// JSON object with any of ps_dbm, pr_dbm, eta, m, d1_m, d2_m,
    /// sigma_nr_dbm, sigma_nd_dbm, gamma_o_db, seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Relay transmit power in dBm [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    pub pr_dbm: Option<f64>,
    /// Detection threshold SNR in dB [default: 60].
    #[arg(long, allow_negative_numbers = true)]
    pub gamma_o_db: Option<f64>,
    /// Relay noise power in dBm [default: -70].
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_nr_dbm: Option<f64>,
    /// Destination noise power in dBm [default: -100].
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_nd_dbm: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Fading blocks per simulation.
    #[arg(long, default_value_t = 100_000)]
    pub n_blocks: u64,
    /// RNG seed [default: config `seed`, else 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel substreams per simulation.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TheoremArgs {
    /// Series terms for the DF continuous bound.
    #[arg(long, default_value_t = DEFAULT_TRUNCATION_N)]
    pub truncation_n: usize,
    /// Relative tolerance of the AF continuous integral.
    #[arg(long, default_value_t = DEFAULT_QUAD_TOL)]
    pub quad_tol: f64,
}

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad input (malformed arguments, unreadable config): exit 2.
    Usage(anyhow::Error),
    /// Numeric or validation failure: exit 1.
    Failure(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failure(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

struct Resolved {
    params: SystemParams,
    seed: u64,
}

impl ParamArgs {
    fn resolve(&self, seed_flag: Option<u64>) -> Result<Resolved, CliError> {
        let mut map: BTreeMap<String, f64> = default_db_config();
        let mut seed = DEFAULT_SEED;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))
                .map_err(usage)?;
            let cfg = ConfigFile::from_json_str(&text)
                .with_context(|| format!("bad config {}", path.display()))
                .map_err(usage)?;
            map = cfg.merged_over(&map);
            seed = cfg.seed.unwrap_or(seed);
        }
        let overrides = [
            ("pr_dbm", self.pr_dbm),
            ("gamma_o_db", self.gamma_o_db),
            ("sigma_nr_dbm", self.sigma_nr_dbm),
            ("sigma_nd_dbm", self.sigma_nd_dbm),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        }
        let params = from_db_config(&map).context("invalid parameters")?;
        Ok(Resolved {
            params,
            seed: seed_flag.unwrap_or(seed),
        })
    }
}

impl TheoremArgs {
    fn inputs(&self, p: SystemParams) -> anyhow::Result<TheoremInputs> {
        Ok(TheoremInputs::new(p)?
            .with_truncation(self.truncation_n)?
            .with_quad_tol(self.quad_tol)?)
    }
}

impl SimArgs {
    fn settings(&self, seed: u64) -> SimSettings {
        SimSettings {
            n_blocks: self.n_blocks,
            seed,
            workers: self.workers,
        }
    }
}

fn parse_protocols(s: &str, allow_baseline: bool) -> Result<Vec<Protocol>, CliError> {
    if s == "all" {
        return Ok(Protocol::PROPOSED.to_vec());
    }
    let list = s
        .split(',')
        .map(|item| {
            item.trim()
                .parse::<Protocol>()
                .map_err(|e| usage(anyhow!(e)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if !allow_baseline
        && list
            .iter()
            .any(|p| matches!(p, Protocol::BaselineFixed { .. }))
    {
        return Err(usage(anyhow!(
            "baseline_fixed has no closed-form throughput here"
        )));
    }
    Ok(list)
}

/// Parses `start:stop:step` (inclusive) or `v1,v2,...`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad number `{t}`: {e}"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(format!("bad range `{s}`: need start <= stop and step > 0"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + step * i as f64).collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(format!(
            "bad grid `{s}`: use start:stop:step or a comma-separated list"
        )),
    }
}

fn emit_json(out: &mut dyn Write, value: &impl Serialize) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn emit_csv(
    out: &mut dyn Write,
    path: Option<&PathBuf>,
    axis: &str,
    rows: &[ehrelay_core::SweepRow],
) -> Result<(), CliError> {
    match path {
        Some(path) => {
            let file = File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))
                .map_err(usage)?;
            let mut w = BufWriter::new(file);
            write_csv(axis, rows, &mut w).map_err(anyhow::Error::from)?;
            w.flush().map_err(anyhow::Error::from)?;
            Ok(())
        }
        None => Ok(write_csv(axis, rows, out).map_err(anyhow::Error::from)?),
    }
}

fn theorem_kind(p: Protocol) -> &'static str {
    if p.has_exact_theorem() {
        "exact"
    } else {
        "lower_bound"
    }
}

/// Runs one invocation. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes printed to stdout.
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{rendered}")
            } else {
                write!(out, "{rendered}")
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let (CliError::Usage(inner) | CliError::Failure(inner)) = &e;
            let _ = writeln!(err, "error: {inner:#}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Analytic {
            params,
            protocol,
            theorem,
        } => {
            let r = params.resolve(None)?;
            let inputs = theorem.inputs(r.params)?;
            let mut results = Vec::new();
            for proto in parse_protocols(&protocol, false)? {
                let tau = throughput(proto, &inputs).map_err(anyhow::Error::from)?;
                results.push(json!({
                    "protocol": proto.label(),
                    "tau": tau,
                    "kind": theorem_kind(proto),
                }));
            }
            let body = json!({ "params": to_db_config(&r.params), "results": results });
            emit_json(out, &single_or_all(body, &protocol))?;
            Ok(0)
        }
        Command::Simulate {
            params,
            protocol,
            sim,
        } => {
            let r = params.resolve(sim.seed)?;
            let mut results = Vec::new();
            for proto in parse_protocols(&protocol, true)? {
                let res = run_parallel(&r.params, proto, sim.n_blocks, r.seed, sim.workers)
                    .map_err(anyhow::Error::from)?;
                results.push(json!({
                    "protocol": proto.to_string(),
                    "mean_tau": res.mean_tau,
                    "std_error": res.std_error,
                    "n_blocks": res.n_blocks,
                    "tallies": res.summary(),
                }));
            }
            let body = json!({
                "params": to_db_config(&r.params),
                "seed": r.seed,
                "workers": sim.workers,
                "results": results,
            });
            emit_json(out, &single_or_all(body, &protocol))?;
            Ok(0)
        }
        Command::Validate {
            params,
            protocol,
            sim,
            theorem,
        } => {
            let r = params.resolve(sim.seed)?;
            let inputs = theorem.inputs(r.params)?;
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            for proto in parse_protocols(&protocol, false)? {
                let analytic = throughput(proto, &inputs).map_err(anyhow::Error::from)?;
                let res = run_parallel(&r.params, proto, sim.n_blocks, r.seed, sim.workers)
                    .map_err(anyhow::Error::from)?;
                let (rule, pass) = if proto.has_exact_theorem() {
                    (
                        "|sim - analytic| <= 4 stderr",
                        (res.mean_tau - analytic).abs() <= 4.0 * res.std_error,
                    )
                } else {
                    (
                        "analytic <= sim + 3 stderr",
                        analytic <= res.mean_tau + 3.0 * res.std_error,
                    )
                };
                if !pass {
                    failures.push(format!("{}: {rule}", proto.label()));
                }
                rows.push(json!({
                    "protocol": proto.label(),
                    "analytic": analytic,
                    "simulated": res.mean_tau,
                    "std_error": res.std_error,
                    "rule": rule,
                    "pass": pass,
                }));
            }
            emit_json(
                out,
                &json!({
                    "params": to_db_config(&r.params),
                    "seed": r.seed,
                    "n_blocks": sim.n_blocks,
                    "results": rows,
                    "pass": failures.is_empty(),
                }),
            )?;
            if failures.is_empty() {
                Ok(0)
            } else {
                Err(CliError::Failure(anyhow!(
                    "validation failed: {}",
                    failures.join("; ")
                )))
            }
        }
        Command::Sweep {
            params,
            protocol,
            axis,
            grid,
            mode,
            sim,
            theorem,
            out: path,
        } => {
            let r = params.resolve(sim.seed)?;
            let axis: Axis = axis.parse().map_err(|e: String| usage(anyhow!(e)))?;
            let mode: Mode = mode.parse().map_err(|e: String| usage(anyhow!(e)))?;
            let grid = match grid {
                Some(g) => parse_grid(&g).map_err(|e| usage(anyhow!(e)))?,
                None => default_grid(axis),
            };
            let spec = SweepSpec {
                axis,
                grid,
                protocols: parse_protocols(&protocol, true)?,
                mode,
                sim: sim.settings(r.seed),
                truncation_n: Some(theorem.truncation_n),
                quad_tol: Some(theorem.quad_tol),
            };
            let rows = sweep(&spec, &r.params).map_err(anyhow::Error::from)?;
            emit_csv(out, path.as_ref(), axis.label(), &rows)?;
            Ok(0)
        }
        Command::Optimize {
            params,
            protocol,
            mode,
            pr_min_dbm,
            pr_max_dbm,
            sim,
            theorem,
        } => {
            let r = params.resolve(sim.seed)?;
            let simulate = match mode.as_str() {
                "analytic" => false,
                "simulate" => true,
                other => {
                    return Err(usage(anyhow!(
                        "unknown mode `{other}` (expected analytic or simulate)"
                    )))
                }
            };
            let objective = if simulate {
                Objective::Simulate(sim.settings(r.seed))
            } else {
                Objective::Analytic {
                    truncation_n: Some(theorem.truncation_n),
                    quad_tol: Some(theorem.quad_tol),
                }
            };
            let mut results = Vec::new();
            let protocols = if protocol == "baseline_fixed" {
                Vec::new()
            } else {
                parse_protocols(&protocol, false)?
            };
            for proto in &protocols {
                let opt = optimize_pr(&r.params, *proto, (pr_min_dbm, pr_max_dbm), objective)
                    .map_err(anyhow::Error::from)?;
                results.push(json!({
                    "protocol": proto.label(),
                    "pr_opt_dbm": opt.pr_opt_dbm,
                    "tau_opt": opt.tau_opt,
                    "stderr": opt.stderr,
                    "unimodal": opt.unimodal,
                }));
            }
            if protocol == "baseline_fixed" || protocol == "all" {
                let best =
                    optimize_baseline_alpha(&r.params, &default_alpha_grid(), sim.settings(r.seed))
                        .map_err(anyhow::Error::from)?;
                results.push(json!({
                    "protocol": "baseline_fixed",
                    "alpha_opt": best.alpha_opt,
                    "tau_opt": best.tau_opt,
                    "stderr": best.stderr,
                }));
            }
            let body = json!({
                "params": to_db_config(&r.params),
                "mode": mode,
                "seed": r.seed,
                "results": results,
            });
            emit_json(out, &single_or_all(body, &protocol))?;
            Ok(0)
        }
        Command::Figures {
            params,
            fig,
            sim,
            out: path,
        } => {
            let r = params.resolve(sim.seed)?;
            let fig: Figure = fig.parse().map_err(|e: String| usage(anyhow!(e)))?;
            let rows =
                figure_bundle(fig, &r.params, sim.settings(r.seed)).map_err(anyhow::Error::from)?;
            emit_csv(out, path.as_ref(), fig.axis().label(), &rows)?;
            Ok(0)
        }
    }
}

/// A single requested protocol flattens `results` into the top-level object.
fn single_or_all(mut body: serde_json::Value, protocol: &str) -> serde_json::Value {
    if protocol == "all" || protocol.contains(',') {
        return body;
    }
    let obj = body.as_object_mut().expect("object");
    if let Some(serde_json::Value::Array(mut results)) = obj.remove("results") {
        if let Some(serde_json::Value::Object(only)) = results.pop() {
            obj.extend(only);
        }
    }
    body
}

fn default_grid(axis: Axis) -> Vec<f64> {
    match axis {
        Axis::PrDbm => Figure::Fig1.grid(),
        Axis::SigmaNrDbm => Figure::Fig3.grid(),
        Axis::SigmaNdDbm => Figure::Fig4.grid(),
        Axis::GammaODb => Figure::Fig6.grid(),
    }
}
