//! Classic deferred acceptance for general strict preferences.
//!
//! The schedule: on odd rounds every unmatched client proposes to the head
//! of its remaining list (and removes it); on even rounds every provider
//! that received a proposal or changed its held client broadcasts the
//! current holder, which doubles as acceptance and rejection. A client whose
//! list runs out stops; everyone else stops at a deterministic bound of
//! `2·|C|·Δ_C + 4` rounds, after the process has long quiesced — rounds past
//! the last message do not count toward `rounds_used`.
//!
//! With `truncate_after` set, all nodes stop right after the given round
//! and report their tentative state; the truncated algorithm is the
//! almost-stable baseline that loses incentive compatibility.

use super::{Matching, MatchingError};
use crate::engine::{
    self, tag, InMsg, InitOutcome, NodeCtx, NodeId, NodeProgram, Payload, ProgramFault,
    StepOutcome, Tape, TraceMode,
};
use crate::instance::{ClientId, MatchingInstance, ProviderId};
use std::collections::{BTreeMap, VecDeque};

enum ClassicInput {
    Client { prefs: Vec<ProviderId> },
    Provider { rank: BTreeMap<ClientId, u64> },
}

enum ClassicState {
    Client(ClientState),
    Provider(ProviderState),
}

struct ClientState {
    queue: VecDeque<usize>,
    ports: Vec<usize>,
    providers: Vec<ProviderId>,
    held: Option<usize>,
    awaiting: Option<usize>,
}

struct ProviderState {
    rank: BTreeMap<ClientId, u64>,
    best: Option<(u64, ClientId)>,
    respond: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum ClassicOutput {
    Client(Option<ProviderId>),
    Provider(Option<ClientId>),
}

struct ClassicProgram {
    /// All nodes finalize at this round; the run has quiesced well before.
    bound: u64,
    /// Stop early with tentative state (the non-truthful baseline).
    truncate_after: Option<u64>,
}

impl NodeProgram for ClassicProgram {
    type Input = ClassicInput;
    type State = ClassicState;
    type Output = ClassicOutput;

    fn init(
        &self,
        ctx: &NodeCtx<'_>,
        input: &ClassicInput,
        _tape: &mut Tape,
    ) -> Result<InitOutcome<ClassicState>, ProgramFault> {
        match input {
            ClassicInput::Client { prefs } => {
                let ports = prefs
                    .iter()
                    .map(|p| {
                        ctx.port_of(NodeId(p.0))
                            .ok_or_else(|| ProgramFault::new(ctx.id, "provider not adjacent"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(InitOutcome {
                    halted: prefs.is_empty(),
                    state: ClassicState::Client(ClientState {
                        queue: (0..prefs.len()).collect(),
                        ports,
                        providers: prefs.clone(),
                        held: None,
                        awaiting: None,
                    }),
                })
            }
            ClassicInput::Provider { rank } => Ok(InitOutcome {
                halted: ctx.neighbors.is_empty(),
                state: ClassicState::Provider(ProviderState {
                    rank: rank.clone(),
                    best: None,
                    respond: false,
                }),
            }),
        }
    }

    fn step(
        &self,
        ctx: &NodeCtx<'_>,
        round: u64,
        state: &mut ClassicState,
        inbox: &[InMsg],
        _tape: &mut Tape,
    ) -> Result<StepOutcome, ProgramFault> {
        let cut = self.truncate_after.map_or(false, |r| round > r);
        match state {
            ClassicState::Client(client) => {
                for msg in inbox {
                    if msg.payload.tag != tag::ACK {
                        return Err(ProgramFault::new(ctx.id, "client expected acknowledgement"));
                    }
                    let held_id = msg.payload.int(0).unwrap_or(0) as u64;
                    let Some(idx) = client.ports.iter().position(|&p| p == msg.port) else {
                        continue;
                    };
                    if held_id == ctx.id.0 {
                        client.held = Some(idx);
                        client.awaiting = None;
                    } else {
                        if client.awaiting == Some(idx) {
                            client.awaiting = None;
                        }
                        if client.held == Some(idx) {
                            client.held = None;
                        }
                    }
                }
                if cut || round >= self.bound {
                    return Ok(StepOutcome {
                        outbox: Vec::new(),
                        halted: true,
                    });
                }
                if client.held.is_none()
                    && client.awaiting.is_none()
                    && client.queue.is_empty()
                {
                    // Exhausted list: permanently unmatched.
                    return Ok(StepOutcome {
                        outbox: Vec::new(),
                        halted: true,
                    });
                }
                if round % 2 == 1 && client.held.is_none() && client.awaiting.is_none() {
                    if let Some(idx) = client.queue.pop_front() {
                        client.awaiting = Some(idx);
                        let proposal = Payload::ints(tag::PROPOSAL, &[ctx.id.0 as i64]);
                        return Ok(StepOutcome {
                            outbox: vec![(client.ports[idx], proposal)],
                            halted: false,
                        });
                    }
                }
                Ok(StepOutcome::default())
            }
            ClassicState::Provider(provider) => {
                for msg in inbox {
                    if msg.payload.tag != tag::PROPOSAL {
                        return Err(ProgramFault::new(ctx.id, "provider expected proposal"));
                    }
                    let id = ClientId(msg.payload.int(0).unwrap_or(0) as u64);
                    let rank = *provider
                        .rank
                        .get(&id)
                        .ok_or_else(|| ProgramFault::new(ctx.id, "proposal from unranked client"))?;
                    provider.respond = true;
                    if provider.best.map_or(true, |(r, _)| rank < r) {
                        provider.best = Some((rank, id));
                    }
                }
                if cut || round >= self.bound {
                    return Ok(StepOutcome {
                        outbox: Vec::new(),
                        halted: true,
                    });
                }
                if round % 2 == 0 && provider.respond {
                    provider.respond = false;
                    if let Some((_, id)) = provider.best {
                        let ack = Payload::ints(tag::ACK, &[id.0 as i64]);
                        let outbox = (0..ctx.neighbors.len()).map(|p| (p, ack.clone())).collect();
                        return Ok(StepOutcome {
                            outbox,
                            halted: false,
                        });
                    }
                }
                Ok(StepOutcome::default())
            }
        }
    }

    fn output(&self, _ctx: &NodeCtx<'_>, state: &ClassicState) -> ClassicOutput {
        match state {
            ClassicState::Client(c) => {
                ClassicOutput::Client(c.held.map(|idx| c.providers[idx]))
            }
            ClassicState::Provider(p) => ClassicOutput::Provider(p.best.map(|(_, id)| id)),
        }
    }
}

/// Result of one classic deferred-acceptance run.
#[derive(Debug)]
pub struct ClassicDaRun {
    pub matching: Matching,
    pub trace: engine::ExecutionTrace,
}

/// Ranks each provider's neighborhood: the instance's explicit order when
/// present, ascending client id otherwise (the benchmark convention).
fn provider_ranks(
    inst: &MatchingInstance,
) -> Result<BTreeMap<ProviderId, BTreeMap<ClientId, u64>>, MatchingError> {
    let neighborhoods = inst.provider_neighbors();
    let mut out = BTreeMap::new();
    for provider in inst.providers() {
        let neighbors = &neighborhoods[&provider.id];
        let rank: BTreeMap<ClientId, u64> = match &provider.prefs {
            Some(order) => {
                let ok = order.len() == neighbors.len()
                    && neighbors.iter().all(|c| order.contains(c));
                if !ok {
                    return Err(MatchingError::BadProviderOrder(provider.id));
                }
                order
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (c, i as u64))
                    .collect()
            }
            None => neighbors.iter().map(|&c| (c, c.0)).collect(),
        };
        out.insert(provider.id, rank);
    }
    Ok(out)
}

/// Runs the general-preference baseline. Pass `truncate_after` to stop all
/// nodes right after that round with their tentative matches.
pub fn run_classic_da(
    inst: &MatchingInstance,
    truncate_after: Option<u64>,
) -> Result<ClassicDaRun, MatchingError> {
    let ranks = provider_ranks(inst)?;
    let delta_c = inst.degree_profile().delta_c as u64;
    let bound = 2 * inst.clients().len() as u64 * delta_c.max(1) + 4;
    let network = engine::Network::from_instance(inst);
    let mut inputs: BTreeMap<NodeId, ClassicInput> = BTreeMap::new();
    for client in inst.clients() {
        inputs.insert(
            NodeId(client.id.0),
            ClassicInput::Client {
                prefs: client.prefs.clone(),
            },
        );
    }
    for provider in inst.providers() {
        inputs.insert(
            NodeId(provider.id.0),
            ClassicInput::Provider {
                rank: ranks[&provider.id].clone(),
            },
        );
    }
    let program = ClassicProgram {
        bound,
        truncate_after,
    };
    let result = engine::run(&network, &program, &inputs, 0, bound + 4, TraceMode::Full)?;
    let mut pairs = BTreeMap::new();
    for client in inst.clients() {
        if let ClassicOutput::Client(Some(p)) = result.outputs[&NodeId(client.id.0)] {
            pairs.insert(client.id, p);
        }
    }
    Ok(ClassicDaRun {
        matching: Matching::new(pairs),
        trace: result.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_lowerbound_path, Client, Provider};

    fn instance(
        clients: Vec<(u64, Vec<u64>)>,
        providers: Vec<(u64, Option<Vec<u64>>)>,
    ) -> MatchingInstance {
        let clients = clients
            .into_iter()
            .map(|(id, prefs)| Client {
                id: ClientId(id),
                prefs: prefs.into_iter().map(ProviderId).collect(),
                score: 1,
                load: None,
            })
            .collect();
        let providers = providers
            .into_iter()
            .map(|(id, prefs)| Provider {
                id: ProviderId(id),
                capacity: None,
                prefs: prefs.map(|v| v.into_iter().map(ClientId).collect()),
            })
            .collect();
        MatchingInstance::new(clients, providers, 1)
    }

    #[test]
    fn one_client_one_provider() {
        let inst = instance(vec![(1, vec![10])], vec![(10, None)]);
        let run = run_classic_da(&inst, None).unwrap();
        assert!(run.matching.contains(ClientId(1), ProviderId(10)));
        assert_eq!(run.matching.len(), 1);
    }

    #[test]
    fn contested_provider_follows_its_order() {
        // Both clients want provider 10, which prefers client 1; client 2
        // falls back to provider 11.
        let inst = instance(
            vec![(1, vec![10]), (2, vec![10, 11])],
            vec![(10, Some(vec![1, 2])), (11, None)],
        );
        let run = run_classic_da(&inst, None).unwrap();
        assert!(run.matching.contains(ClientId(1), ProviderId(10)));
        assert!(run.matching.contains(ClientId(2), ProviderId(11)));
        // One proposal round, one acknowledgement round, then the rejected
        // client re-proposes: messages stop after round 4.
        assert!(run.trace.rounds_used <= 4);
    }

    #[test]
    fn two_clients_one_provider_hand_trace() {
        // Proposals in round 1, the acknowledgement in round 2, nothing after.
        let inst = instance(vec![(1, vec![10]), (2, vec![10])], vec![(10, Some(vec![1, 2]))]);
        let run = run_classic_da(&inst, None).unwrap();
        assert_eq!(run.trace.rounds_used, 2);
        assert!(run.matching.contains(ClientId(1), ProviderId(10)));
        assert_eq!(run.matching.provider_of(ClientId(2)), None);
        let proposals = run
            .trace
            .messages
            .iter()
            .filter(|m| m.round == 1 && m.payload.tag == tag::PROPOSAL)
            .count();
        assert_eq!(proposals, 2);
        let acks = run
            .trace
            .messages
            .iter()
            .filter(|m| m.round == 2 && m.payload.tag == tag::ACK)
            .count();
        assert_eq!(acks, 2);
    }

    #[test]
    fn path_cascade_takes_linearly_many_rounds() {
        let flat = run_classic_da(&generate_lowerbound_path(6, false), None).unwrap();
        let cascade = run_classic_da(&generate_lowerbound_path(6, true), None).unwrap();
        assert!(flat.trace.rounds_used <= 4);
        assert!(cascade.trace.rounds_used >= 2 * 6 - 2);
    }

    #[test]
    fn truncation_reports_tentative_state() {
        // Client 2 is rejected in round 2 and has no time to re-propose.
        let inst = instance(
            vec![(1, vec![10]), (2, vec![10, 11])],
            vec![(10, Some(vec![1, 2])), (11, None)],
        );
        let run = run_classic_da(&inst, Some(2)).unwrap();
        assert!(run.matching.contains(ClientId(1), ProviderId(10)));
        assert_eq!(run.matching.provider_of(ClientId(2)), None);
    }
}
