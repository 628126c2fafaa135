//! Randomized trial coloring with palette `2Δ`.
//!
//! Each round, every uncolored node proposes a uniformly random color not
//! yet held by a finalized neighbor and keeps it unless some neighbor's
//! message of the same round (a competing proposal or a finalization)
//! carried the same color. A node that keeps its color announces it once as
//! final and stops. With twice as many colors as the maximum degree, each
//! trial succeeds with constant probability, so the run finishes in
//! logarithmically many rounds with high probability.

use super::{Coloring, ConflictGraph, TieBreakError};
use crate::engine::{
    self, tag, InMsg, InitOutcome, NodeCtx, NodeProgram, Payload, ProgramFault, StepOutcome, Tape,
    TraceMode,
};
use crate::instance::ClientId;
use std::collections::BTreeSet;

struct TrialProgram {
    palette: u64,
}

struct TrialState {
    proposal: Option<u64>,
    /// Final colors of finalized neighbors.
    taken: BTreeSet<u64>,
    color: u64,
}

impl NodeProgram for TrialProgram {
    type Input = ();
    type State = TrialState;
    type Output = u64;

    fn init(
        &self,
        ctx: &NodeCtx<'_>,
        _input: &(),
        tape: &mut Tape,
    ) -> Result<InitOutcome<TrialState>, ProgramFault> {
        let mut state = TrialState {
            proposal: None,
            taken: BTreeSet::new(),
            color: 0,
        };
        if ctx.neighbors.is_empty() {
            // No one to conflict with: the first trial always succeeds.
            state.color = tape.pick_1_to(self.palette);
            return Ok(InitOutcome {
                state,
                halted: true,
            });
        }
        Ok(InitOutcome {
            state,
            halted: false,
        })
    }

    fn step(
        &self,
        ctx: &NodeCtx<'_>,
        _round: u64,
        state: &mut TrialState,
        inbox: &[InMsg],
        tape: &mut Tape,
    ) -> Result<StepOutcome, ProgramFault> {
        let mut blockers = BTreeSet::new();
        for msg in inbox {
            let color = msg
                .payload
                .int(0)
                .ok_or_else(|| ProgramFault::new(ctx.id, "malformed trial message"))?
                as u64;
            blockers.insert(color);
            if msg.payload.tag == tag::COLOR_FINAL {
                state.taken.insert(color);
            }
        }
        if let Some(mine) = state.proposal {
            if !blockers.contains(&mine) {
                state.color = mine;
                let outbox = (0..ctx.neighbors.len())
                    .map(|port| (port, Payload::ints(tag::COLOR_FINAL, &[mine as i64])))
                    .collect();
                return Ok(StepOutcome {
                    outbox,
                    halted: true,
                });
            }
        }
        let free: Vec<u64> = (1..=self.palette)
            .filter(|c| !state.taken.contains(c))
            .collect();
        if free.is_empty() {
            return Err(ProgramFault::new(ctx.id, "palette exhausted"));
        }
        let pick = free[tape.pick_index(free.len())];
        state.proposal = Some(pick);
        let outbox = (0..ctx.neighbors.len())
            .map(|port| (port, Payload::ints(tag::COLOR_PROPOSAL, &[pick as i64])))
            .collect();
        Ok(StepOutcome {
            outbox,
            halted: false,
        })
    }

    fn output(&self, _ctx: &NodeCtx<'_>, state: &TrialState) -> u64 {
        state.color
    }
}

/// Colors the conflict graph with `2 Δ_H` colors by randomized trials
/// (palette 1 when the graph has no conflicts at all).
pub fn color_luby_trial(graph: &ConflictGraph, seed: u64) -> Result<Coloring, TieBreakError> {
    let palette = (2 * graph.delta_h() as u64).max(1);
    if graph.is_empty() {
        return Ok(Coloring {
            phi: Default::default(),
            palette,
            fair_set: Default::default(),
            failed_set: Default::default(),
            traces: Vec::new(),
        });
    }
    let n = graph.len() as u64;
    let round_limit = 40 + 16 * (64 - n.leading_zeros() as u64);
    let network = graph.network();
    let inputs = graph
        .nodes()
        .iter()
        .map(|&c| (engine::NodeId(c.0), ()))
        .collect();
    let program = TrialProgram { palette };
    let result = engine::run(&network, &program, &inputs, seed, round_limit, TraceMode::Full)?;
    let phi = result
        .outputs
        .into_iter()
        .map(|(node, color)| (ClientId(node.0), color))
        .collect();
    Ok(Coloring {
        phi,
        palette,
        fair_set: Default::default(),
        failed_set: Default::default(),
        traces: vec![result.trace],
    })
}
