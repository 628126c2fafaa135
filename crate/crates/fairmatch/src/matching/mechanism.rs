//! The end-to-end mechanism: conflict discovery, coloring, deferred
//! acceptance.
//!
//! Phase boundaries are flushed — each phase starts on a fresh round with no
//! message piggybacking — so the per-phase round counts add up and stay
//! individually auditable against their bounds.

use super::common::run_common_da_with_mode;
use super::fractional::run_fractional_da_with_mode;
use super::{FractionalMatching, Matching, MatchingError};
use crate::engine::{
    self, tag, ExecutionTrace, InMsg, InitOutcome, NodeCtx, NodeId, NodeProgram, Payload,
    ProgramFault, StepOutcome, Tape, TraceMode,
};
use crate::instance::{ClientId, MatchingInstance};
use crate::rational::Ratio;
use crate::tiebreak::{
    build_conflict_graph, color_deterministic, color_luby_trial, color_with_failures,
    sample_uniform_coloring, Coloring, ConflictGraph, SamplerConfig, TieBreak,
};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Which coloring routine breaks the ties.
#[derive(Clone, Debug, PartialEq)]
pub enum Strategy {
    Deterministic,
    Luby,
    Sample { alpha: Ratio, delta: Ratio },
    Failures { delta: Ratio },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Deterministic => write!(f, "deterministic"),
            Strategy::Luby => write!(f, "luby"),
            Strategy::Sample { alpha, delta } => write!(f, "sample(alpha={alpha},delta={delta})"),
            Strategy::Failures { delta } => write!(f, "failures(delta={delta})"),
        }
    }
}

impl Strategy {
    /// Runs this strategy's coloring routine on a conflict graph. `n` is the
    /// instance size (it only enters the sampler's round count).
    pub fn run_coloring(
        &self,
        graph: &ConflictGraph,
        seed: u64,
        n: usize,
    ) -> Result<Coloring, MatchingError> {
        color(graph, self, seed, n)
    }
}

/// Phase 1: every client tells its client-side neighbors its score; the
/// conflict neighbors are exactly those answering with the same score.
struct DiscoveryProgram;

enum DiscoveryInput {
    Client { score: u32, client_ports: Vec<usize> },
    Provider,
}

struct DiscoveryState {
    score: u32,
    client_ports: Vec<usize>,
    conflicts: BTreeSet<ClientId>,
}

impl NodeProgram for DiscoveryProgram {
    type Input = DiscoveryInput;
    type State = DiscoveryState;
    type Output = BTreeSet<ClientId>;

    fn init(
        &self,
        _ctx: &NodeCtx<'_>,
        input: &DiscoveryInput,
        _tape: &mut Tape,
    ) -> Result<InitOutcome<DiscoveryState>, ProgramFault> {
        match input {
            DiscoveryInput::Client {
                score,
                client_ports,
            } => Ok(InitOutcome {
                halted: client_ports.is_empty(),
                state: DiscoveryState {
                    score: *score,
                    client_ports: client_ports.clone(),
                    conflicts: BTreeSet::new(),
                },
            }),
            DiscoveryInput::Provider => Ok(InitOutcome {
                halted: true,
                state: DiscoveryState {
                    score: 0,
                    client_ports: Vec::new(),
                    conflicts: BTreeSet::new(),
                },
            }),
        }
    }

    fn step(
        &self,
        ctx: &NodeCtx<'_>,
        round: u64,
        state: &mut DiscoveryState,
        inbox: &[InMsg],
        _tape: &mut Tape,
    ) -> Result<StepOutcome, ProgramFault> {
        match round {
            1 => {
                let msg = Payload::ints(tag::SCORE, &[state.score as i64]);
                Ok(StepOutcome {
                    outbox: state
                        .client_ports
                        .iter()
                        .map(|&p| (p, msg.clone()))
                        .collect(),
                    halted: false,
                })
            }
            2 => {
                for msg in inbox {
                    if msg.payload.tag != tag::SCORE {
                        return Err(ProgramFault::new(ctx.id, "expected score message"));
                    }
                    if msg.payload.int(0) == Some(state.score as i64) {
                        state.conflicts.insert(ClientId(ctx.neighbors[msg.port].0));
                    }
                }
                Ok(StepOutcome {
                    outbox: Vec::new(),
                    halted: true,
                })
            }
            _ => unreachable!("discovery halts in round 2"),
        }
    }

    fn output(&self, _ctx: &NodeCtx<'_>, state: &DiscoveryState) -> BTreeSet<ClientId> {
        state.conflicts.clone()
    }
}

/// Runs phase 1 on the augmented network and cross-checks the distributed
/// result against the direct construction.
fn discover_conflicts(
    inst: &MatchingInstance,
    mode: TraceMode,
) -> Result<(ConflictGraph, ExecutionTrace), MatchingError> {
    let network = engine::Network::from_instance(inst);
    let provider_ids: BTreeSet<u64> = inst.providers().iter().map(|p| p.id.0).collect();
    let mut inputs = BTreeMap::new();
    for client in inst.clients() {
        let node = NodeId(client.id.0);
        let client_ports: Vec<usize> = network
            .neighbors(node)
            .iter()
            .enumerate()
            .filter(|(_, n)| !provider_ids.contains(&n.0))
            .map(|(port, _)| port)
            .collect();
        inputs.insert(
            node,
            DiscoveryInput::Client {
                score: client.score,
                client_ports,
            },
        );
    }
    for provider in inst.providers() {
        inputs.insert(NodeId(provider.id.0), DiscoveryInput::Provider);
    }
    let result = engine::run(&network, &DiscoveryProgram, &inputs, 0, 4, mode)?;

    let graph = build_conflict_graph(inst);
    for client in inst.clients() {
        let discovered = &result.outputs[&NodeId(client.id.0)];
        let expected: BTreeSet<ClientId> = graph.neighbors(client.id).iter().copied().collect();
        if *discovered != expected {
            return Err(MatchingError::Engine(
                ProgramFault::new(
                    NodeId(client.id.0),
                    "discovered conflict set disagrees with the instance",
                )
                .into(),
            ));
        }
    }
    Ok((graph, result.trace))
}

fn color(
    graph: &ConflictGraph,
    strategy: &Strategy,
    seed: u64,
    n: usize,
) -> Result<Coloring, MatchingError> {
    let coloring = match strategy {
        Strategy::Deterministic => color_deterministic(graph)?,
        Strategy::Luby => color_luby_trial(graph, seed)?,
        Strategy::Sample { alpha, delta } => {
            let config = SamplerConfig::new(alpha.clone(), delta.clone(), graph.delta_h(), n)?;
            sample_uniform_coloring(graph, &config, seed)?
        }
        Strategy::Failures { delta } => color_with_failures(graph, delta, seed)?,
    };
    Ok(coloring)
}

/// The matching computed by phase 3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MechanismOutcome {
    Integral(Matching),
    Fractional(FractionalMatching),
}

#[derive(Debug)]
pub struct MechanismResult {
    pub tiebreak: TieBreak,
    pub conflict_delta_h: usize,
    pub outcome: MechanismOutcome,
    /// Rounds of phases 1 (discovery), 2 (coloring) and 3 (proposals).
    pub phase_rounds: [u64; 3],
    pub total_rounds: u64,
    pub discovery_trace: ExecutionTrace,
    pub coloring_traces: Vec<ExecutionTrace>,
    pub da_trace: ExecutionTrace,
}

/// Runs the full three-phase mechanism.
pub fn run_mechanism(
    inst: &MatchingInstance,
    strategy: &Strategy,
    seed: u64,
    fractional: bool,
    mode: TraceMode,
) -> Result<MechanismResult, MatchingError> {
    let (graph, discovery_trace) = discover_conflicts(inst, mode)?;
    let coloring = color(&graph, strategy, seed, inst.n())?;
    let tiebreak = TieBreak::compose(inst, &coloring)?;

    let (outcome, da_trace) = if fractional {
        let run = run_fractional_da_with_mode(inst, &tiebreak, mode)?;
        (MechanismOutcome::Fractional(run.matching), run.trace)
    } else {
        let run = run_common_da_with_mode(inst, &tiebreak, mode)?;
        (MechanismOutcome::Integral(run.matching), run.trace)
    };

    let phase_rounds = [
        discovery_trace.rounds_used,
        coloring.rounds_used(),
        da_trace.rounds_used,
    ];
    Ok(MechanismResult {
        tiebreak,
        conflict_delta_h: graph.delta_h(),
        outcome,
        phase_rounds,
        total_rounds: phase_rounds.iter().sum(),
        discovery_trace,
        coloring_traces: coloring.traces,
        da_trace,
    })
}
