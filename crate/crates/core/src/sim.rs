//! Monte Carlo engine: drive a protocol over `N` fading blocks and average
//! the block throughput.
//!
//! A harvest/transmit pattern is a run of blocks without transmission
//! closed by a block that transmits. Pattern statistics (`X` harvest blocks
//! with a short battery, `Y` harvest blocks forced by relay outage, battery
//! `E_o` at the start) are tallied for the distributional checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{split_stream, FadingStream};
use crate::error::ParamsError;
use crate::params::{derive_constants, SystemParams};
use crate::protocols::{step, BlockKind, Protocol, RelayState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Keep the starting battery of every pattern after the first.
    pub record_eo: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { record_eo: true }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }

    fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.carry);
    }
}

/// Counters accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tallies {
    pub blocks: u64,
    /// Blocks that carried information.
    pub it_blocks: u64,
    pub relay_outage_blocks: u64,
    pub dest_outage_blocks: u64,
    /// Completed patterns.
    pub patterns: u64,
    pub x_histogram: Vec<u64>,
    pub y_histogram: Vec<u64>,
    pub eo_samples: Vec<f64>,
    pub harvested: CompensatedSum,
    pub consumed: CompensatedSum,
    /// Battery left over at the end of each worker's stream, summed.
    pub final_battery: f64,
    /// Largest per-block violation of `out = in + harvested - consumed`,
    /// relative to the energies involved.
    pub max_block_ledger_error: f64,
}

fn bump(hist: &mut Vec<u64>, value: usize) {
    if hist.len() <= value {
        hist.resize(value + 1, 0);
    }
    hist[value] += 1;
}

fn merge_hist(into: &mut Vec<u64>, from: &[u64]) {
    if into.len() < from.len() {
        into.resize(from.len(), 0);
    }
    for (a, b) in into.iter_mut().zip(from) {
        *a += b;
    }
}

fn hist_mean(hist: &[u64]) -> f64 {
    let (n, s) = hist
        .iter()
        .enumerate()
        .fold((0u64, 0.0), |(n, s), (v, &c)| {
            (n + c, s + v as f64 * c as f64)
        });
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl Tallies {
    pub fn it_block_fraction(&self) -> f64 {
        self.it_blocks as f64 / self.blocks as f64
    }

    pub fn relay_outage_rate(&self) -> f64 {
        self.relay_outage_blocks as f64 / self.blocks as f64
    }

    pub fn dest_outage_rate(&self) -> f64 {
        self.dest_outage_blocks as f64 / self.blocks as f64
    }

    /// Mean harvest blocks per pattern; NaN without completed patterns.
    pub fn mean_x(&self) -> f64 {
        hist_mean(&self.x_histogram)
    }

    pub fn mean_y(&self) -> f64 {
        hist_mean(&self.y_histogram)
    }

    /// Relative mismatch between the final battery and harvested minus consumed.
    pub fn ledger_error(&self) -> f64 {
        let h = self.harvested.value();
        let c = self.consumed.value();
        let scale = h.max(c).max(f64::MIN_POSITIVE);
        (self.final_battery - (h - c)).abs() / scale
    }

    fn merge(&mut self, other: &Tallies) {
        self.blocks += other.blocks;
        self.it_blocks += other.it_blocks;
        self.relay_outage_blocks += other.relay_outage_blocks;
        self.dest_outage_blocks += other.dest_outage_blocks;
        self.patterns += other.patterns;
        merge_hist(&mut self.x_histogram, &other.x_histogram);
        merge_hist(&mut self.y_histogram, &other.y_histogram);
        self.eo_samples.extend_from_slice(&other.eo_samples);
        self.harvested.merge(&other.harvested);
        self.consumed.merge(&other.consumed);
        self.final_battery += other.final_battery;
        self.max_block_ledger_error = self
            .max_block_ledger_error
            .max(other.max_block_ledger_error);
    }
}

/// Compact view of [`Tallies`] for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TallySummary {
    pub it_block_fraction: f64,
    pub relay_outage_rate: f64,
    pub dest_outage_rate: f64,
    pub patterns: u64,
    pub mean_x: Option<f64>,
    pub mean_y: Option<f64>,
    pub eo_samples: usize,
    pub ledger_error: f64,
}

impl From<&Tallies> for TallySummary {
    fn from(t: &Tallies) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            it_block_fraction: t.it_block_fraction(),
            relay_outage_rate: t.relay_outage_rate(),
            dest_outage_rate: t.dest_outage_rate(),
            patterns: t.patterns,
            mean_x: finite(t.mean_x()),
            mean_y: finite(t.mean_y()),
            eo_samples: t.eo_samples.len(),
            ledger_error: t.ledger_error(),
        }
    }
}

/// Welford accumulator for the block throughput.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_tau: f64,
    /// Sample standard deviation of the block throughput over `sqrt(N)`.
    pub std_error: f64,
    pub n_blocks: u64,
    pub tallies: Tallies,
}

impl SimResult {
    pub fn summary(&self) -> TallySummary {
        TallySummary::from(&self.tallies)
    }
}

/// Runs `protocol` for `n_blocks` on stream 0 of `seed`, starting from an
/// empty battery.
pub fn run(
    p: &SystemParams,
    protocol: Protocol,
    n_blocks: u64,
    seed: u64,
) -> Result<SimResult, ParamsError> {
    run_with_options(p, protocol, n_blocks, seed, SimOptions::default())
}

pub fn run_with_options(
    p: &SystemParams,
    protocol: Protocol,
    n_blocks: u64,
    seed: u64,
    options: SimOptions,
) -> Result<SimResult, ParamsError> {
    check_blocks(n_blocks)?;
    let p = p.validated()?;
    let (moments, tallies) = run_stream(&p, protocol, n_blocks, FadingStream::new(seed), options)?;
    Ok(finish(moments, tallies))
}

/// Splits the run over `workers` independent substreams (the remainder of
/// `n_blocks / workers` goes to the last one) and pools the results in
/// worker order. Each worker starts with an empty battery. `workers = 1`
/// reproduces [`run`] exactly.
pub fn run_parallel(
    p: &SystemParams,
    protocol: Protocol,
    n_blocks: u64,
    seed: u64,
    workers: usize,
) -> Result<SimResult, ParamsError> {
    run_parallel_with_options(p, protocol, n_blocks, seed, workers, SimOptions::default())
}

pub fn run_parallel_with_options(
    p: &SystemParams,
    protocol: Protocol,
    n_blocks: u64,
    seed: u64,
    workers: usize,
    options: SimOptions,
) -> Result<SimResult, ParamsError> {
    check_blocks(n_blocks)?;
    if workers == 0 {
        return Err(ParamsError::Invariant("workers must be >= 1".into()));
    }
    let w = workers as u64;
    if n_blocks < w {
        return Err(ParamsError::Invariant(format!(
            "n_blocks ({n_blocks}) must be at least the number of workers ({workers})"
        )));
    }
    let p = p.validated()?;
    let chunk = n_blocks / w;
    let parts: Vec<_> = (0..w)
        .into_par_iter()
        .map(|i| {
            let len = if i + 1 == w {
                n_blocks - chunk * (w - 1)
            } else {
                chunk
            };
            run_stream(&p, protocol, len, split_stream(seed, i), options)
        })
        .collect::<Result<_, _>>()?;
    let mut parts = parts.into_iter();
    let (mut moments, mut tallies) = parts.next().expect("at least one worker");
    for (m, t) in parts {
        moments.merge(&m);
        tallies.merge(&t);
    }
    Ok(finish(moments, tallies))
}

fn check_blocks(n_blocks: u64) -> Result<(), ParamsError> {
    if n_blocks == 0 {
        Err(ParamsError::Invariant("n_blocks must be >= 1".into()))
    } else {
        Ok(())
    }
}

fn finish(moments: Moments, tallies: Tallies) -> SimResult {
    SimResult {
        mean_tau: moments.mean,
        std_error: moments.std_error(),
        n_blocks: moments.n,
        tallies,
    }
}

fn run_stream(
    p: &SystemParams,
    protocol: Protocol,
    n_blocks: u64,
    mut stream: FadingStream,
    options: SimOptions,
) -> Result<(Moments, Tallies), ParamsError> {
    let dc = derive_constants(p)?;
    let keeps_battery = !matches!(
        protocol,
        Protocol::AfContinuous | Protocol::BaselineFixed { .. }
    );
    let record_eo = options.record_eo && keeps_battery;
    let mut state = RelayState::empty(protocol);
    let mut moments = Moments::default();
    let mut t = Tallies::default();
    let (mut x, mut y) = (0usize, 0usize);
    for _ in 0..n_blocks {
        let blk = stream.draw_block();
        let (o, next) = step(p, &dc, &blk, state);
        moments.push(o.tau);
        t.blocks += 1;
        t.it_blocks += u64::from(o.transmits());
        t.relay_outage_blocks += u64::from(o.relay_outage);
        t.dest_outage_blocks += u64::from(o.outage);
        t.harvested.add(o.harvested);
        t.consumed.add(o.consumed);
        let scale = o
            .energy_in
            .max(o.harvested)
            .max(o.consumed)
            .max(f64::MIN_POSITIVE);
        let err = (o.energy_out - (o.energy_in + o.harvested - o.consumed)).abs() / scale;
        t.max_block_ledger_error = t.max_block_ledger_error.max(err);
        match o.kind {
            BlockKind::Harvest => x += 1,
            BlockKind::OutageHarvest => y += 1,
            BlockKind::Transmit | BlockKind::HarvestThenTransmit => {
                bump(&mut t.x_histogram, x);
                bump(&mut t.y_histogram, y);
                t.patterns += 1;
                (x, y) = (0, 0);
                if record_eo {
                    t.eo_samples.push(next.battery);
                }
            }
        }
        state = next;
    }
    // The sample taken after the last transmission starts a pattern that
    // never completes inside this run; it is still a valid E_o draw.
    t.final_battery = state.battery;
    Ok((moments, t))
}
