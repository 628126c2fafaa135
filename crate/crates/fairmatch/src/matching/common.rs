//! Deferred acceptance for common preferences with a strict tie-break.
//!
//! With composed classes `1..=K` (`K = S·c`) strict on every provider's
//! neighborhood, the schedule is: unmatched clients propose on odd rounds to
//! their best provider not yet announced as taken by a better class;
//! providers keep the best proposal and broadcast an acknowledgement
//! `(client, class)` whenever their held client changes. Because every
//! current holder was announced when acquired, a proposal is only ever
//! silently ignored in the round a better client proposed alongside it, and
//! that change is acknowledged — so clients always learn the fate of a
//! proposal one round later.
//!
//! A class-`t` client is safe at round `2t - 1`: all better classes have
//! stopped, so if it is held it finalizes, and otherwise its proposal is
//! guaranteed acceptance and it stops without waiting for the
//! acknowledgement. The last possible acknowledgement round `2K` is
//! suppressed, giving the `2·S·c - 1` round bound.

use super::{strict_composed, Matching, MatchingError};
use crate::engine::{
    self, tag, InMsg, InitOutcome, NodeCtx, NodeId, NodeProgram, Payload, ProgramFault,
    StepOutcome, Tape, TraceMode,
};
use crate::instance::{ClientId, MatchingInstance, ProviderId};
use crate::tiebreak::TieBreak;
use std::collections::BTreeMap;

pub(super) enum CommonDaInput {
    Client {
        prefs: Vec<ProviderId>,
        class: u64,
    },
    Provider,
}

pub(super) enum CommonDaState {
    Client(ClientState),
    Provider(ProviderState),
}

pub(super) struct ClientState {
    prefs: Vec<ProviderId>,
    ports: Vec<usize>,
    pruned: Vec<bool>,
    held: Option<usize>,
    class: u64,
    outcome: Option<ProviderId>,
}

pub(super) struct ProviderState {
    best: Option<(u64, ClientId)>,
    changed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(super) enum CommonDaOutput {
    Client(Option<ProviderId>),
    Provider(Option<ClientId>),
}

pub(super) struct CommonDaProgram {
    /// Total number of composed classes, `S * c`.
    pub total_classes: u64,
}

impl ClientState {
    fn head(&self) -> Option<usize> {
        (0..self.prefs.len()).find(|&i| !self.pruned[i])
    }

    fn absorb(&mut self, ctx: &NodeCtx<'_>, inbox: &[InMsg]) -> Result<(), ProgramFault> {
        for msg in inbox {
            if msg.payload.tag != tag::ACK {
                return Err(ProgramFault::new(ctx.id, "client expected acknowledgement"));
            }
            let held_id = msg.payload.int(0).unwrap_or(-1) as u64;
            let held_class = msg.payload.int(1).unwrap_or(-1) as u64;
            let Some(idx) = self.ports.iter().position(|&p| p == msg.port) else {
                return Err(ProgramFault::new(ctx.id, "acknowledgement from non-provider"));
            };
            if held_id == ctx.id.0 {
                self.held = Some(idx);
            } else {
                if self.held == Some(idx) {
                    self.held = None;
                }
                if held_class < self.class {
                    // Permanently lost: the provider only improves from here.
                    self.pruned[idx] = true;
                }
            }
        }
        Ok(())
    }
}

impl NodeProgram for CommonDaProgram {
    type Input = CommonDaInput;
    type State = CommonDaState;
    type Output = CommonDaOutput;

    fn init(
        &self,
        ctx: &NodeCtx<'_>,
        input: &CommonDaInput,
        _tape: &mut Tape,
    ) -> Result<InitOutcome<CommonDaState>, ProgramFault> {
        match input {
            CommonDaInput::Client { prefs, class } => {
                let ports = prefs
                    .iter()
                    .map(|p| {
                        ctx.port_of(NodeId(p.0))
                            .ok_or_else(|| ProgramFault::new(ctx.id, "provider not adjacent"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let halted = prefs.is_empty();
                Ok(InitOutcome {
                    state: CommonDaState::Client(ClientState {
                        pruned: vec![false; prefs.len()],
                        prefs: prefs.clone(),
                        ports,
                        held: None,
                        class: *class,
                        outcome: None,
                    }),
                    halted,
                })
            }
            CommonDaInput::Provider => Ok(InitOutcome {
                state: CommonDaState::Provider(ProviderState {
                    best: None,
                    changed: false,
                }),
                halted: ctx.neighbors.is_empty(),
            }),
        }
    }

    fn step(
        &self,
        ctx: &NodeCtx<'_>,
        round: u64,
        state: &mut CommonDaState,
        inbox: &[InMsg],
        _tape: &mut Tape,
    ) -> Result<StepOutcome, ProgramFault> {
        match state {
            CommonDaState::Client(client) => {
                client.absorb(ctx, inbox)?;
                if client.held.is_none() && client.head().is_none() {
                    // Every neighbor is taken by a better class.
                    return Ok(StepOutcome {
                        outbox: Vec::new(),
                        halted: true,
                    });
                }
                if round % 2 == 1 {
                    let turn = round.div_ceil(2);
                    if client.class == turn {
                        // Finalization round: a held client keeps its match;
                        // an unmatched one proposes with guaranteed success.
                        if let Some(idx) = client.held {
                            client.outcome = Some(client.prefs[idx]);
                            return Ok(StepOutcome {
                                outbox: Vec::new(),
                                halted: true,
                            });
                        }
                        let idx = client.head().expect("checked above");
                        client.outcome = Some(client.prefs[idx]);
                        let proposal = Payload::ints(
                            tag::PROPOSAL,
                            &[ctx.id.0 as i64, client.class as i64],
                        );
                        return Ok(StepOutcome {
                            outbox: vec![(client.ports[idx], proposal)],
                            halted: true,
                        });
                    }
                    if client.class > turn && client.held.is_none() {
                        let idx = client.head().expect("checked above");
                        let proposal = Payload::ints(
                            tag::PROPOSAL,
                            &[ctx.id.0 as i64, client.class as i64],
                        );
                        return Ok(StepOutcome {
                            outbox: vec![(client.ports[idx], proposal)],
                            halted: false,
                        });
                    }
                }
                Ok(StepOutcome::default())
            }
            CommonDaState::Provider(provider) => {
                for msg in inbox {
                    if msg.payload.tag != tag::PROPOSAL {
                        return Err(ProgramFault::new(ctx.id, "provider expected proposal"));
                    }
                    let id = ClientId(msg.payload.int(0).unwrap_or(0) as u64);
                    let class = msg.payload.int(1).unwrap_or(-1) as u64;
                    if provider.best.map_or(false, |(c, _)| c == class) {
                        return Err(ProgramFault::new(
                            ctx.id,
                            "two proposals in the same composed class: tie-break not strict",
                        ));
                    }
                    if provider.best.map_or(true, |(c, _)| class < c) {
                        provider.best = Some((class, id));
                        provider.changed = true;
                    }
                }
                if round >= 2 * self.total_classes {
                    // Final absorb; the closing acknowledgement is never
                    // needed, every client has already stopped.
                    return Ok(StepOutcome {
                        outbox: Vec::new(),
                        halted: true,
                    });
                }
                if round % 2 == 0 && provider.changed {
                    provider.changed = false;
                    let (class, id) = provider.best.expect("changed implies a held client");
                    let ack = Payload::ints(tag::ACK, &[id.0 as i64, class as i64]);
                    let outbox = (0..ctx.neighbors.len()).map(|p| (p, ack.clone())).collect();
                    return Ok(StepOutcome {
                        outbox,
                        halted: false,
                    });
                }
                Ok(StepOutcome::default())
            }
        }
    }

    fn output(&self, _ctx: &NodeCtx<'_>, state: &CommonDaState) -> CommonDaOutput {
        match state {
            CommonDaState::Client(c) => CommonDaOutput::Client(c.outcome),
            CommonDaState::Provider(p) => CommonDaOutput::Provider(p.best.map(|(_, id)| id)),
        }
    }
}

/// Result of one common-preference deferred-acceptance run.
#[derive(Debug)]
pub struct CommonDaRun {
    pub matching: Matching,
    pub trace: engine::ExecutionTrace,
}

/// Runs deferred acceptance with the provider side ordered by the composed
/// scores of `tiebreak`. Rejects tie-breaks that leave two co-neighbors in
/// the same composed class.
pub fn run_common_da(
    inst: &MatchingInstance,
    tiebreak: &TieBreak,
) -> Result<CommonDaRun, MatchingError> {
    run_common_da_with_mode(inst, tiebreak, TraceMode::Full)
}

pub(super) fn run_common_da_with_mode(
    inst: &MatchingInstance,
    tiebreak: &TieBreak,
    mode: TraceMode,
) -> Result<CommonDaRun, MatchingError> {
    let composed = strict_composed(inst, tiebreak)?;
    let total_classes = inst.s_classes() as u64 * tiebreak.c;
    let network = engine::Network::from_instance(inst);
    let mut inputs: BTreeMap<NodeId, CommonDaInput> = BTreeMap::new();
    for client in inst.clients() {
        inputs.insert(
            NodeId(client.id.0),
            CommonDaInput::Client {
                prefs: client.prefs.clone(),
                class: composed[&client.id],
            },
        );
    }
    for provider in inst.providers() {
        inputs.insert(NodeId(provider.id.0), CommonDaInput::Provider);
    }
    let program = CommonDaProgram { total_classes };
    let result = engine::run(
        &network,
        &program,
        &inputs,
        0,
        2 * total_classes + 4,
        mode,
    )?;

    let mut pairs = BTreeMap::new();
    for client in inst.clients() {
        if let CommonDaOutput::Client(Some(p)) = result.outputs[&NodeId(client.id.0)] {
            pairs.insert(client.id, p);
        }
    }
    let matching = Matching::new(pairs);
    // The providers' view must agree with the clients' view.
    for provider in inst.providers() {
        if let Some(CommonDaOutput::Provider(held)) = result.outputs.get(&NodeId(provider.id.0)) {
            debug_assert_eq!(*held, matching.client_of(provider.id), "{}", provider.id);
        }
    }
    Ok(CommonDaRun {
        matching,
        trace: result.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Client, Provider};
    use crate::tiebreak::{build_conflict_graph, color_deterministic, TieBreak};

    fn tiebreak_for(inst: &MatchingInstance) -> TieBreak {
        let graph = build_conflict_graph(inst);
        let coloring = color_deterministic(&graph).unwrap();
        TieBreak::compose(inst, &coloring).unwrap()
    }

    fn simple_instance(prefs: Vec<(u64, Vec<u64>, u32)>, providers: Vec<u64>, s: u32) -> MatchingInstance {
        let clients = prefs
            .into_iter()
            .map(|(id, ps, score)| Client {
                id: ClientId(id),
                prefs: ps.into_iter().map(ProviderId).collect(),
                score,
                load: None,
            })
            .collect();
        let providers = providers
            .into_iter()
            .map(|id| Provider {
                id: ProviderId(id),
                capacity: None,
                prefs: None,
            })
            .collect();
        MatchingInstance::new(clients, providers, s)
    }

    #[test]
    fn single_client_matches_in_one_round() {
        let inst = simple_instance(vec![(1, vec![10], 1)], vec![10], 1);
        let tb = tiebreak_for(&inst);
        assert_eq!(tb.class_count(&inst), 1);
        let run = run_common_da(&inst, &tb).unwrap();
        assert_eq!(run.trace.rounds_used, 1);
        assert!(run.matching.contains(ClientId(1), ProviderId(10)));
    }

    #[test]
    fn displacement_by_better_class() {
        // Both clients want provider 10; client 1 has score 1 and wins,
        // client 2 routes to its second choice.
        let inst = simple_instance(
            vec![(1, vec![10], 1), (2, vec![10, 11], 2)],
            vec![10, 11],
            2,
        );
        let tb = tiebreak_for(&inst);
        let run = run_common_da(&inst, &tb).unwrap();
        assert!(run.matching.contains(ClientId(1), ProviderId(10)));
        assert!(run.matching.contains(ClientId(2), ProviderId(11)));
    }

    #[test]
    fn round_bound_holds() {
        let inst = crate::instance::generate_random(7, 50, 20, 3, 4).unwrap();
        let tb = tiebreak_for(&inst);
        let run = run_common_da(&inst, &tb).unwrap();
        let bound = 2 * inst.s_classes() as u64 * tb.c - 1;
        assert!(
            run.trace.rounds_used <= bound,
            "rounds {} > bound {bound}",
            run.trace.rounds_used
        );
    }

    #[test]
    fn serial_dictatorship_on_distinct_classes() {
        // Complete bipartite 3 x 3 with all distinct scores: client i takes
        // its top choice among the providers left by earlier clients.
        let inst = simple_instance(
            vec![
                (1, vec![12, 11, 10], 1),
                (2, vec![12, 10, 11], 2),
                (3, vec![12, 10, 11], 3),
            ],
            vec![10, 11, 12],
            3,
        );
        let tb = tiebreak_for(&inst);
        let run = run_common_da(&inst, &tb).unwrap();
        assert!(run.matching.contains(ClientId(1), ProviderId(12)));
        assert!(run.matching.contains(ClientId(2), ProviderId(10)));
        assert!(run.matching.contains(ClientId(3), ProviderId(11)));
    }

    #[test]
    fn rejects_non_strict_tiebreak() {
        let inst = simple_instance(vec![(1, vec![10], 1), (2, vec![10], 1)], vec![10], 1);
        // Hand-build an improper tie-break that collides the two clients.
        let tb = TieBreak {
            c: 1,
            phi: [(ClientId(1), 1), (ClientId(2), 1)].into_iter().collect(),
            composed: [(ClientId(1), 1), (ClientId(2), 1)].into_iter().collect(),
            fair_set: Default::default(),
            failed_set: Default::default(),
        };
        assert!(matches!(
            run_common_da(&inst, &tb),
            Err(MatchingError::NonStrictTieBreak(_))
        ));
    }
}
