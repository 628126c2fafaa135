//! One-shot random coloring with deterministic repair of failures.
//!
//! Every node picks one uniform color from `{1, ..., ceil(1/δ)·Δ}`. Nodes
//! that collide with a neighbor form the failed set `X` and are recolored
//! properly with `Δ + 1` extra colors from an offset palette, so they can
//! never collide with the one-shot colors. Each node lands in the fair set
//! `F = V \ X` with probability at least `1 - δ`, and conditioned on no
//! conflict the colors of `F` are jointly uniform.

use super::deterministic::color_deterministic_with_target;
use super::{Coloring, ConflictGraph, TieBreakError};
use crate::engine::{
    self, tag, InMsg, InitOutcome, NodeCtx, NodeProgram, Payload, ProgramFault, StepOutcome, Tape,
    TraceMode,
};
use crate::instance::ClientId;
use crate::rational::Ratio;
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use std::collections::{BTreeMap, BTreeSet};

struct OneShotProgram {
    palette: u64,
}

struct OneShotState {
    color: u64,
    in_failed: bool,
}

/// Output of the one-shot stage: the sampled color and whether the node
/// observed a conflict.
#[derive(Clone, Copy, Debug)]
struct OneShotOutcome {
    color: u64,
    in_failed: bool,
}

impl NodeProgram for OneShotProgram {
    type Input = ();
    type State = OneShotState;
    type Output = OneShotOutcome;

    fn init(
        &self,
        ctx: &NodeCtx<'_>,
        _input: &(),
        tape: &mut Tape,
    ) -> Result<InitOutcome<OneShotState>, ProgramFault> {
        let state = OneShotState {
            color: tape.pick_1_to(self.palette),
            in_failed: false,
        };
        Ok(InitOutcome {
            state,
            halted: ctx.neighbors.is_empty(),
        })
    }

    fn step(
        &self,
        ctx: &NodeCtx<'_>,
        round: u64,
        state: &mut OneShotState,
        inbox: &[InMsg],
        tape: &mut Tape,
    ) -> Result<StepOutcome, ProgramFault> {
        let _ = tape;
        match round {
            1 => {
                // Announce the sampled color.
                let outbox = (0..ctx.neighbors.len())
                    .map(|port| (port, Payload::ints(tag::COLOR, &[state.color as i64])))
                    .collect();
                Ok(StepOutcome {
                    outbox,
                    halted: false,
                })
            }
            2 => {
                // Detect conflicts and tell the neighbors which side of the
                // split this node is on; the failed nodes then know the
                // subgraph they must recolor.
                for msg in inbox {
                    let color = msg
                        .payload
                        .int(0)
                        .ok_or_else(|| ProgramFault::new(ctx.id, "malformed color message"))?
                        as u64;
                    if color == state.color {
                        state.in_failed = true;
                    }
                }
                let membership = if state.in_failed {
                    tag::IN_FAILED_SET
                } else {
                    tag::IN_FAIR_SET
                };
                let outbox = (0..ctx.neighbors.len())
                    .map(|port| (port, Payload::new(membership)))
                    .collect();
                Ok(StepOutcome {
                    outbox,
                    halted: true,
                })
            }
            _ => unreachable!("one-shot stage halts in round 2"),
        }
    }

    fn output(&self, _ctx: &NodeCtx<'_>, state: &OneShotState) -> OneShotOutcome {
        OneShotOutcome {
            color: state.color,
            in_failed: state.in_failed,
        }
    }
}

/// Pure classification of a one-shot color assignment into the fair and
/// failed sets. The engine program computes the same split distributedly;
/// keeping this as a plain function lets tests enumerate the whole color
/// space exactly.
pub fn classify_one_shot(
    graph: &ConflictGraph,
    colors: &BTreeMap<ClientId, u64>,
) -> (BTreeSet<ClientId>, BTreeSet<ClientId>) {
    let mut failed = BTreeSet::new();
    for (u, v) in graph.edges() {
        if colors[&u] == colors[&v] {
            failed.insert(u);
            failed.insert(v);
        }
    }
    let fair = graph
        .nodes()
        .iter()
        .copied()
        .filter(|c| !failed.contains(c))
        .collect();
    (fair, failed)
}

fn ceil_recip(delta: &Ratio) -> u64 {
    let n = delta.numer();
    let d = delta.denom();
    let q: BigInt = (d + n - BigInt::from(1)) / n;
    q.to_u64().expect("1/delta fits in u64")
}

/// One-shot uniform coloring over `ceil(1/δ)·Δ` colors, with conflicted
/// nodes recolored deterministically from the offset palette
/// `{ceil(1/δ)·Δ + 1, ..., ceil(1/δ)·Δ + Δ + 1}`. A degree bound of zero is
/// treated as one so the palette is never empty.
pub fn color_with_failures(
    graph: &ConflictGraph,
    delta: &Ratio,
    seed: u64,
) -> Result<Coloring, TieBreakError> {
    if !delta.is_positive() || *delta >= Ratio::one() {
        return Err(TieBreakError::InvalidParameter(
            "failure rate delta must lie in (0, 1)".into(),
        ));
    }
    let delta_h = (graph.delta_h() as u64).max(1);
    let inv = ceil_recip(delta);
    let one_shot_palette = inv * delta_h;
    if one_shot_palette < delta_h + 1 {
        return Err(TieBreakError::InvalidParameter(format!(
            "one-shot palette {one_shot_palette} must be at least {}",
            delta_h + 1
        )));
    }
    let total_palette = one_shot_palette + delta_h + 1;
    if graph.is_empty() {
        return Ok(Coloring {
            phi: Default::default(),
            palette: total_palette,
            fair_set: Default::default(),
            failed_set: Default::default(),
            traces: Vec::new(),
        });
    }

    let network = graph.network();
    let inputs = graph
        .nodes()
        .iter()
        .map(|&c| (engine::NodeId(c.0), ()))
        .collect();
    let program = OneShotProgram {
        palette: one_shot_palette,
    };
    let result = engine::run(&network, &program, &inputs, seed, 4, TraceMode::Full)?;

    let mut phi = BTreeMap::new();
    let mut fair_set = BTreeSet::new();
    let mut failed_set = BTreeSet::new();
    for (node, outcome) in &result.outputs {
        let client = ClientId(node.0);
        if outcome.in_failed {
            failed_set.insert(client);
        } else {
            fair_set.insert(client);
            phi.insert(client, outcome.color);
        }
    }
    let mut traces = vec![result.trace];

    if !failed_set.is_empty() {
        let induced = graph.induced(&failed_set);
        let repair = color_deterministic_with_target(&induced, delta_h)?;
        for (client, color) in repair.phi {
            phi.insert(client, one_shot_palette + color);
        }
        traces.extend(repair.traces);
    }
    Ok(Coloring {
        phi,
        palette: total_palette,
        fair_set,
        failed_set,
        traces,
    })
}
