//! Capacitated fractional deferred acceptance with greedy batch proposals.
//!
//! Round 1 is a capacity broadcast: every provider announces its initial
//! capacity. After that the schedule is non-adaptive: clients of composed
//! class `t` act exactly at round `2t` — they split their load greedily over
//! their preference order against the remaining capacities known to them,
//! send each nonzero share as a batch proposal, and stop. At round `2t + 1`
//! every provider that accepted load broadcasts its new remaining capacity.
//! Strictness of the composed order means no provider ever sees two
//! proposals in one round, so every proposal is accepted and the whole run
//! takes at most `2·S·c` rounds.

use super::{strict_composed, FractionalMatching, MatchingError};
use crate::engine::{
    self, tag, InMsg, InitOutcome, NodeCtx, NodeId, NodeProgram, Payload, ProgramFault,
    StepOutcome, Tape, TraceMode,
};
use crate::instance::{ClientId, MatchingInstance, ProviderId};
use crate::rational::Ratio;
use crate::tiebreak::TieBreak;
use std::collections::BTreeMap;

enum FractionalInput {
    Client {
        prefs: Vec<ProviderId>,
        class: u64,
        load: Ratio,
    },
    Provider {
        capacity: Ratio,
    },
}

enum FractionalState {
    Client(ClientState),
    Provider(ProviderState),
}

struct ClientState {
    prefs: Vec<ProviderId>,
    ports: Vec<usize>,
    /// Remaining capacities of the neighbors, in preference order.
    remaining: Vec<Ratio>,
    class: u64,
    load: Ratio,
    assigned: Vec<Ratio>,
}

struct ProviderState {
    remaining: Ratio,
    accepted: BTreeMap<ClientId, Ratio>,
    changed: bool,
}

#[derive(Clone, Debug)]
enum FractionalOutput {
    /// Per-edge loads in preference order.
    Client(Vec<(ProviderId, Ratio)>),
    Provider(Ratio),
}

struct FractionalProgram {
    total_classes: u64,
}

/// The greedy batch proposal: saturate providers in preference order until
/// the load runs out.
fn greedy_batch(load: &Ratio, remaining: &[Ratio]) -> Vec<Ratio> {
    let mut left = load.clone();
    remaining
        .iter()
        .map(|cap| {
            let share = cap.clone().min(left.clone());
            left -= &share;
            share
        })
        .collect()
}

impl NodeProgram for FractionalProgram {
    type Input = FractionalInput;
    type State = FractionalState;
    type Output = FractionalOutput;

    fn init(
        &self,
        ctx: &NodeCtx<'_>,
        input: &FractionalInput,
        _tape: &mut Tape,
    ) -> Result<InitOutcome<FractionalState>, ProgramFault> {
        match input {
            FractionalInput::Client { prefs, class, load } => {
                let ports = prefs
                    .iter()
                    .map(|p| {
                        ctx.port_of(NodeId(p.0))
                            .ok_or_else(|| ProgramFault::new(ctx.id, "provider not adjacent"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(InitOutcome {
                    halted: prefs.is_empty(),
                    state: FractionalState::Client(ClientState {
                        remaining: vec![Ratio::zero(); prefs.len()],
                        assigned: vec![Ratio::zero(); prefs.len()],
                        prefs: prefs.clone(),
                        ports,
                        class: *class,
                        load: load.clone(),
                    }),
                })
            }
            FractionalInput::Provider { capacity } => Ok(InitOutcome {
                halted: ctx.neighbors.is_empty(),
                state: FractionalState::Provider(ProviderState {
                    remaining: capacity.clone(),
                    accepted: BTreeMap::new(),
                    changed: false,
                }),
            }),
        }
    }

    fn step(
        &self,
        ctx: &NodeCtx<'_>,
        round: u64,
        state: &mut FractionalState,
        inbox: &[InMsg],
        _tape: &mut Tape,
    ) -> Result<StepOutcome, ProgramFault> {
        match state {
            FractionalState::Client(client) => {
                for msg in inbox {
                    if msg.payload.tag != tag::CAPACITY {
                        return Err(ProgramFault::new(ctx.id, "client expected capacity update"));
                    }
                    let capacity = msg
                        .payload
                        .ratio
                        .clone()
                        .ok_or_else(|| ProgramFault::new(ctx.id, "capacity without amount"))?;
                    if let Some(idx) = client.ports.iter().position(|&p| p == msg.port) {
                        client.remaining[idx] = capacity;
                    }
                }
                if round == 2 * client.class {
                    // This class's batch round: split the load greedily and
                    // stop; acceptance is guaranteed by strictness.
                    client.assigned = greedy_batch(&client.load, &client.remaining);
                    let outbox = client
                        .assigned
                        .iter()
                        .enumerate()
                        .filter(|(_, share)| !share.is_zero())
                        .map(|(idx, share)| {
                            (
                                client.ports[idx],
                                Payload::with_ratio(
                                    tag::BATCH_PROPOSAL,
                                    &[ctx.id.0 as i64],
                                    share.clone(),
                                ),
                            )
                        })
                        .collect();
                    return Ok(StepOutcome {
                        outbox,
                        halted: true,
                    });
                }
                Ok(StepOutcome::default())
            }
            FractionalState::Provider(provider) => {
                for msg in inbox {
                    if msg.payload.tag != tag::BATCH_PROPOSAL {
                        return Err(ProgramFault::new(ctx.id, "provider expected batch proposal"));
                    }
                    if inbox.len() > 1 {
                        return Err(ProgramFault::new(
                            ctx.id,
                            "two batch proposals in one round: tie-break not strict",
                        ));
                    }
                    let id = ClientId(msg.payload.int(0).unwrap_or(0) as u64);
                    let share = msg
                        .payload
                        .ratio
                        .clone()
                        .ok_or_else(|| ProgramFault::new(ctx.id, "proposal without amount"))?;
                    if share.is_negative() {
                        return Err(ProgramFault::new(ctx.id, "negative batch proposal"));
                    }
                    provider.remaining -= &share;
                    if provider.remaining.is_negative() {
                        return Err(ProgramFault::new(ctx.id, "capacity oversubscribed"));
                    }
                    provider.accepted.insert(id, share);
                    provider.changed = true;
                }
                if round > 2 * self.total_classes {
                    // All classes have proposed; the final capacity update is
                    // never needed.
                    return Ok(StepOutcome {
                        outbox: Vec::new(),
                        halted: true,
                    });
                }
                let broadcast = round == 1 || (round % 2 == 1 && provider.changed);
                if broadcast {
                    provider.changed = false;
                    let update = Payload::with_ratio(
                        tag::CAPACITY,
                        &[ctx.id.0 as i64],
                        provider.remaining.clone(),
                    );
                    let outbox = (0..ctx.neighbors.len())
                        .map(|p| (p, update.clone()))
                        .collect();
                    return Ok(StepOutcome {
                        outbox,
                        halted: false,
                    });
                }
                Ok(StepOutcome::default())
            }
        }
    }

    fn output(&self, _ctx: &NodeCtx<'_>, state: &FractionalState) -> FractionalOutput {
        match state {
            FractionalState::Client(c) => FractionalOutput::Client(
                c.prefs
                    .iter()
                    .copied()
                    .zip(c.assigned.iter().cloned())
                    .collect(),
            ),
            FractionalState::Provider(p) => FractionalOutput::Provider(p.remaining.clone()),
        }
    }
}

/// Result of one fractional deferred-acceptance run.
#[derive(Debug)]
pub struct FractionalDaRun {
    pub matching: FractionalMatching,
    pub trace: engine::ExecutionTrace,
}

/// Runs the capacitated fractional variant; every client needs a load and
/// every provider a capacity.
pub fn run_fractional_da(
    inst: &MatchingInstance,
    tiebreak: &TieBreak,
) -> Result<FractionalDaRun, MatchingError> {
    run_fractional_da_with_mode(inst, tiebreak, TraceMode::Full)
}

pub(super) fn run_fractional_da_with_mode(
    inst: &MatchingInstance,
    tiebreak: &TieBreak,
    mode: TraceMode,
) -> Result<FractionalDaRun, MatchingError> {
    let composed = strict_composed(inst, tiebreak)?;
    let total_classes = inst.s_classes() as u64 * tiebreak.c;
    let network = engine::Network::from_instance(inst);
    let mut inputs: BTreeMap<NodeId, FractionalInput> = BTreeMap::new();
    for client in inst.clients() {
        let load = client.load.clone().ok_or_else(|| {
            MatchingError::MissingLoads(format!("client {} has no load", client.id))
        })?;
        inputs.insert(
            NodeId(client.id.0),
            FractionalInput::Client {
                prefs: client.prefs.clone(),
                class: composed[&client.id],
                load,
            },
        );
    }
    for provider in inst.providers() {
        let capacity = provider.capacity.clone().ok_or_else(|| {
            MatchingError::MissingLoads(format!("provider {} has no capacity", provider.id))
        })?;
        inputs.insert(NodeId(provider.id.0), FractionalInput::Provider { capacity });
    }
    let program = FractionalProgram { total_classes };
    let result = engine::run(
        &network,
        &program,
        &inputs,
        0,
        2 * total_classes + 4,
        mode,
    )?;

    let mut edges = BTreeMap::new();
    for client in inst.clients() {
        if let FractionalOutput::Client(shares) = &result.outputs[&NodeId(client.id.0)] {
            for (provider, share) in shares {
                if !share.is_zero() {
                    edges.insert((client.id, *provider), share.clone());
                }
            }
        }
    }
    let matching = FractionalMatching::new(edges);
    // The providers' residuals must agree with the clients' view.
    for provider in inst.providers() {
        if let Some(FractionalOutput::Provider(residual)) =
            result.outputs.get(&NodeId(provider.id.0))
        {
            let consumed = matching.provider_total(provider.id);
            let capacity = provider.capacity.clone().expect("checked above");
            debug_assert_eq!(capacity - &consumed, *residual, "{}", provider.id);
        }
    }
    Ok(FractionalDaRun {
        matching,
        trace: result.trace,
    })
}
