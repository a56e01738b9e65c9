//! Per-block energy-harvesting / information-transmission decisions.
//!
//! Every step function takes the relay state by value and returns the next
//! state together with a [`BlockOutcome`]. The block time is normalized, so
//! energies are expressed in joules per unit block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelBlock;
use crate::params::{DerivedConstants, SystemParams};

/// Relaying protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Protocol {
    /// Amplify-and-forward, harvest exactly what each block needs.
    AfContinuous,
    /// Amplify-and-forward, whole blocks are either harvest or transmit.
    AfDiscrete,
    /// Decode-and-forward, continuous harvesting time.
    DfContinuous,
    /// Decode-and-forward, whole-block harvesting.
    DfDiscrete,
    /// Amplify-and-forward with a fixed harvesting fraction and a per-block
    /// relay power set by the harvested energy.
    BaselineFixed { alpha: f64 },
}

impl Protocol {
    pub const PROPOSED: [Protocol; 4] = [
        Protocol::AfContinuous,
        Protocol::AfDiscrete,
        Protocol::DfContinuous,
        Protocol::DfDiscrete,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Protocol::AfContinuous => "af_cont",
            Protocol::AfDiscrete => "af_disc",
            Protocol::DfContinuous => "df_cont",
            Protocol::DfDiscrete => "df_disc",
            Protocol::BaselineFixed { .. } => "baseline_fixed",
        }
    }

    pub fn is_df(&self) -> bool {
        matches!(self, Protocol::DfContinuous | Protocol::DfDiscrete)
    }

    /// Whether the closed-form result is exact (AF) rather than a lower bound (DF).
    pub fn has_exact_theorem(&self) -> bool {
        matches!(self, Protocol::AfContinuous | Protocol::AfDiscrete)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::BaselineFixed { alpha } => write!(f, "baseline_fixed:{alpha}"),
            other => f.write_str(other.label()),
        }
    }
}

impl FromStr for Protocol {
    type Err = String;

    /// Accepts the labels of [`Protocol::label`]; the baseline takes its
    /// harvesting fraction as `baseline_fixed:<alpha>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "af_cont" => Ok(Protocol::AfContinuous),
            "af_disc" => Ok(Protocol::AfDiscrete),
            "df_cont" => Ok(Protocol::DfContinuous),
            "df_disc" => Ok(Protocol::DfDiscrete),
            other => {
                let alpha = other
                    .strip_prefix("baseline_fixed:")
                    .ok_or_else(|| format!("unknown protocol `{other}`"))?
                    .parse::<f64>()
                    .map_err(|e| format!("bad baseline alpha: {e}"))?;
                if alpha > 0.0 && alpha < 1.0 {
                    Ok(Protocol::BaselineFixed { alpha })
                } else {
                    Err(format!("baseline alpha must lie in (0, 1), got {alpha}"))
                }
            }
        }
    }
}

/// Battery carried from one block to the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayState {
    pub battery: f64,
    pub protocol: Protocol,
}

impl RelayState {
    pub fn empty(protocol: Protocol) -> Self {
        Self {
            battery: 0.0,
            protocol,
        }
    }
}

/// What the relay did in a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Whole block harvested because the battery was short.
    Harvest,
    /// Whole block harvested because the source-relay link was in outage (DF).
    OutageHarvest,
    /// Harvest until the battery funds the transmission, then transmit.
    HarvestThenTransmit,
    /// Whole block spent on information transmission.
    Transmit,
}

/// Per-block record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    /// Fraction of the block spent harvesting.
    pub alpha: f64,
    /// Destination outage indicator for this block's channel.
    pub outage: bool,
    /// Block throughput `(1 - outage)(1 - alpha)/2`.
    pub tau: f64,
    pub energy_in: f64,
    pub energy_out: f64,
    /// Source-relay SNR below threshold. Always false for AF.
    pub relay_outage: bool,
    pub harvested: f64,
    pub consumed: f64,
    pub kind: BlockKind,
}

impl BlockOutcome {
    /// Whether this block carried information (it ends an EH-IT pattern).
    pub fn transmits(&self) -> bool {
        matches!(
            self.kind,
            BlockKind::Transmit | BlockKind::HarvestThenTransmit
        )
    }
}

fn block_tau(outage: bool, alpha: f64) -> f64 {
    if outage {
        0.0
    } else {
        (1.0 - alpha) / 2.0
    }
}

/// End-to-end SNR of an amplify-and-forward block.
pub fn af_snr(p: &SystemParams, blk: &ChannelBlock) -> f64 {
    af_snr_with_power(p, p.relay_power, blk)
}

fn af_snr_with_power(p: &SystemParams, relay_power: f64, blk: &ChannelBlock) -> f64 {
    let l1 = p.path_loss_sr();
    let l2 = p.path_loss_rd();
    let num = p.source_power * relay_power * blk.h2 * blk.g2;
    let den = relay_power * blk.g2 * l1 * p.noise_relay
        + l2 * p.noise_dest * (p.source_power * blk.h2 + l1 * p.noise_relay);
    num / den
}

/// Relay and destination SNRs of a decode-and-forward block.
pub fn df_snrs(p: &SystemParams, blk: &ChannelBlock) -> (f64, f64) {
    let gamma_r = p.source_power * blk.h2 / (p.path_loss_sr() * p.noise_relay);
    let gamma_d = p.relay_power * blk.g2 / (p.path_loss_rd() * p.noise_dest);
    (gamma_r, gamma_d)
}

fn af_outage(p: &SystemParams, blk: &ChannelBlock) -> bool {
    af_snr(p, blk) < p.snr_threshold
}

fn df_relay_outage(dc: &DerivedConstants, blk: &ChannelBlock) -> bool {
    blk.h2 < dc.a_bar
}

fn df_dest_outage(dc: &DerivedConstants, blk: &ChannelBlock) -> bool {
    blk.g2 < dc.b_bar
}

/// Harvesting fraction that exactly funds a transmission starting from
/// `battery`: solves `battery + eta Ps h2 alpha T / d1^m = Pr (1 - alpha) T / 2`.
fn balancing_alpha(p: &SystemParams, h2: f64, battery: f64) -> f64 {
    let l1 = p.path_loss_sr();
    let t = p.block_time;
    (l1 * p.relay_power * t - 2.0 * battery * l1)
        / (2.0 * p.conversion_efficiency * p.source_power * h2 * t + l1 * p.relay_power * t)
}

/// AF with continuous harvesting: every block harvests for `alpha` and
/// spends everything on the transmission, so the battery stays empty.
pub fn step_af_continuous(
    p: &SystemParams,
    _dc: &DerivedConstants,
    blk: &ChannelBlock,
    state: RelayState,
) -> (BlockOutcome, RelayState) {
    debug_assert_eq!(state.protocol, Protocol::AfContinuous);
    let alpha = balancing_alpha(p, blk.h2, 0.0);
    let outage = af_outage(p, blk);
    let energy = p.relay_power * (1.0 - alpha) * p.block_time / 2.0;
    let outcome = BlockOutcome {
        alpha,
        outage,
        tau: block_tau(outage, alpha),
        energy_in: 0.0,
        energy_out: 0.0,
        relay_outage: false,
        harvested: energy,
        consumed: energy,
        kind: BlockKind::HarvestThenTransmit,
    };
    (
        outcome,
        RelayState {
            battery: 0.0,
            ..state
        },
    )
}

/// AF with whole-block harvesting.
pub fn step_af_discrete(
    p: &SystemParams,
    _dc: &DerivedConstants,
    blk: &ChannelBlock,
    state: RelayState,
) -> (BlockOutcome, RelayState) {
    debug_assert_eq!(state.protocol, Protocol::AfDiscrete);
    let outage = af_outage(p, blk);
    if state.battery >= p.transmit_energy() {
        transmit_block(p, state, outage, false)
    } else {
        harvest_block(p, blk, state, outage, false, BlockKind::Harvest)
    }
}

/// DF with continuous harvesting.
pub fn step_df_continuous(
    p: &SystemParams,
    dc: &DerivedConstants,
    blk: &ChannelBlock,
    state: RelayState,
) -> (BlockOutcome, RelayState) {
    debug_assert_eq!(state.protocol, Protocol::DfContinuous);
    let outage = df_dest_outage(dc, blk);
    if df_relay_outage(dc, blk) {
        return harvest_block(p, blk, state, outage, true, BlockKind::OutageHarvest);
    }
    if state.battery >= p.transmit_energy() {
        return transmit_block(p, state, outage, false);
    }
    let alpha = balancing_alpha(p, blk.h2, state.battery);
    let harvested = p.harvested_energy(blk.h2, alpha);
    let outcome = BlockOutcome {
        alpha,
        outage,
        tau: block_tau(outage, alpha),
        energy_in: state.battery,
        energy_out: 0.0,
        relay_outage: false,
        harvested,
        consumed: state.battery + harvested,
        kind: BlockKind::HarvestThenTransmit,
    };
    (
        outcome,
        RelayState {
            battery: 0.0,
            ..state
        },
    )
}

/// DF with whole-block harvesting. A full battery still harvests when the
/// source-relay link is in outage.
pub fn step_df_discrete(
    p: &SystemParams,
    dc: &DerivedConstants,
    blk: &ChannelBlock,
    state: RelayState,
) -> (BlockOutcome, RelayState) {
    debug_assert_eq!(state.protocol, Protocol::DfDiscrete);
    let outage = df_dest_outage(dc, blk);
    let relay_outage = df_relay_outage(dc, blk);
    if state.battery < p.transmit_energy() {
        harvest_block(p, blk, state, outage, relay_outage, BlockKind::Harvest)
    } else if relay_outage {
        harvest_block(p, blk, state, outage, true, BlockKind::OutageHarvest)
    } else {
        transmit_block(p, state, outage, false)
    }
}

/// Fixed harvesting fraction with the relay spending everything it harvested
/// in the block, i.e. transmit power
/// `2 eta Ps h2 alpha / (d1^m (1 - alpha))`.
pub fn step_baseline_fixed(p: &SystemParams, blk: &ChannelBlock, fixed_alpha: f64) -> BlockOutcome {
    let harvested = p.harvested_energy(blk.h2, fixed_alpha);
    let relay_power = 2.0 * harvested / ((1.0 - fixed_alpha) * p.block_time);
    // With no harvested power the link carries nothing; af_snr would be 0/0
    // when h2 = 0.
    let outage = relay_power <= 0.0 || af_snr_with_power(p, relay_power, blk) < p.snr_threshold;
    BlockOutcome {
        alpha: fixed_alpha,
        outage,
        tau: block_tau(outage, fixed_alpha),
        energy_in: 0.0,
        energy_out: 0.0,
        relay_outage: false,
        harvested,
        consumed: harvested,
        kind: BlockKind::HarvestThenTransmit,
    }
}

/// Dispatches to the step function of `state.protocol`.
pub fn step(
    p: &SystemParams,
    dc: &DerivedConstants,
    blk: &ChannelBlock,
    state: RelayState,
) -> (BlockOutcome, RelayState) {
    match state.protocol {
        Protocol::AfContinuous => step_af_continuous(p, dc, blk, state),
        Protocol::AfDiscrete => step_af_discrete(p, dc, blk, state),
        Protocol::DfContinuous => step_df_continuous(p, dc, blk, state),
        Protocol::DfDiscrete => step_df_discrete(p, dc, blk, state),
        Protocol::BaselineFixed { alpha } => (step_baseline_fixed(p, blk, alpha), state),
    }
}

fn harvest_block(
    p: &SystemParams,
    blk: &ChannelBlock,
    state: RelayState,
    outage: bool,
    relay_outage: bool,
    kind: BlockKind,
) -> (BlockOutcome, RelayState) {
    let harvested = p.harvested_energy(blk.h2, 1.0);
    let battery = state.battery + harvested;
    let outcome = BlockOutcome {
        alpha: 1.0,
        outage,
        tau: 0.0,
        energy_in: state.battery,
        energy_out: battery,
        relay_outage,
        harvested,
        consumed: 0.0,
        kind,
    };
    (outcome, RelayState { battery, ..state })
}

fn transmit_block(
    p: &SystemParams,
    state: RelayState,
    outage: bool,
    relay_outage: bool,
) -> (BlockOutcome, RelayState) {
    let spend = p.transmit_energy();
    let battery = state.battery - spend;
    let outcome = BlockOutcome {
        alpha: 0.0,
        outage,
        tau: block_tau(outage, 0.0),
        energy_in: state.battery,
        energy_out: battery,
        relay_outage,
        harvested: 0.0,
        consumed: spend,
        kind: BlockKind::Transmit,
    };
    (outcome, RelayState { battery, ..state })
}
