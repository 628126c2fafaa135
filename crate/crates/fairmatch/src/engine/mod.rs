//! Synchronous round-based executor for node programs.
//!
//! The engine runs a program lockstep over a communication network. In each
//! round every active node is stepped once: it sees the messages its
//! neighbors sent in the previous round and emits the messages it sends in
//! the current round, so a node's round-`r` messages depend on everything it
//! has heard through round `r - 1`. Delivery is synchronous with no loss and
//! no duplication, and inboxes are ordered by sender port, so the trace is
//! identical under any evaluation order of the per-node steps.
//!
//! A node that returns `halted` has its final outbox delivered and is never
//! stepped again; it sends nothing afterwards. A program may also halt a node
//! directly in `init`, before any round runs.

mod payload;
mod trace;

pub use payload::{tag, width_bigint, width_i64, Payload};
pub use trace::{assert_congest, CongestReport, ExecutionTrace, MessageRecord, RoundStats,
    TraceMode};

use crate::instance::MatchingInstance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Identifier of a node in the communication network. Clients and providers
/// share one id space, so their instance ids embed directly.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Communication network: nodes plus undirected edges, with each node's
/// neighbors numbered by port in ascending id order.
#[derive(Clone, Debug)]
pub struct Network {
    nodes: Vec<NodeId>,
    adj: Vec<Vec<usize>>,
    index: BTreeMap<NodeId, usize>,
}

impl Network {
    pub fn new(mut nodes: Vec<NodeId>, edges: &BTreeSet<(NodeId, NodeId)>) -> Network {
        nodes.sort();
        nodes.dedup();
        let index: BTreeMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut adj = vec![Vec::new(); nodes.len()];
        for &(a, b) in edges {
            assert!(a != b, "self edge");
            let (ia, ib) = (index[&a], index[&b]);
            adj[ia].push(ib);
            adj[ib].push(ia);
        }
        for (i, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            debug_assert!(!list.contains(&i));
        }
        Network { nodes, adj, index }
    }

    /// The augmented communication network of a matching instance: the
    /// matching edges plus one edge between every pair of clients that share
    /// a provider.
    pub fn from_instance(inst: &MatchingInstance) -> Network {
        let nodes: Vec<NodeId> = inst
            .clients()
            .iter()
            .map(|c| NodeId(c.id.0))
            .chain(inst.providers().iter().map(|p| NodeId(p.id.0)))
            .collect();
        let mut edges: BTreeSet<(NodeId, NodeId)> = inst
            .edges()
            .iter()
            .map(|&(c, p)| (NodeId(c.0), NodeId(p.0)))
            .collect();
        for clients in inst.provider_neighbors().values() {
            for (i, &a) in clients.iter().enumerate() {
                for &b in &clients[i + 1..] {
                    edges.insert((NodeId(a.0), NodeId(b.0)));
                }
            }
        }
        Network::new(nodes, &edges)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        self.adj[self.index[&id]]
            .iter()
            .map(|&i| self.nodes[i])
            .collect()
    }

    /// True iff `a` and `b` are joined by a communication edge.
    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&ia), Some(&ib)) => self.adj[ia].binary_search(&ib).is_ok(),
            _ => false,
        }
    }
}

/// Per-node randomness tape, derived from the global seed and the node id so
/// that adding nodes does not perturb the randomness of existing ones.
pub struct Tape {
    rng: ChaCha8Rng,
}

impl Tape {
    fn new(seed: u64, node: NodeId) -> Tape {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&node.0.to_le_bytes());
        key[16..24].copy_from_slice(b"fm-tape\0");
        Tape {
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Uniform index in `0..n`.
    pub fn pick_index(&mut self, n: usize) -> usize {
        use rand::Rng;
        self.rng.gen_range(0..n)
    }

    /// Uniform integer in `1..=n`.
    pub fn pick_1_to(&mut self, n: u64) -> u64 {
        use rand::Rng;
        self.rng.gen_range(1..=n)
    }
}

/// One inbox entry: the port of the sending neighbor and the payload.
#[derive(Clone, Debug)]
pub struct InMsg {
    pub port: usize,
    pub payload: Payload,
}

/// Static per-node context handed to program callbacks.
pub struct NodeCtx<'a> {
    pub id: NodeId,
    /// Neighbor ids in port order.
    pub neighbors: &'a [NodeId],
    /// Number of nodes in the network.
    pub n: usize,
}

impl NodeCtx<'_> {
    pub fn port_of(&self, id: NodeId) -> Option<usize> {
        self.neighbors.binary_search(&id).ok()
    }
}

pub struct InitOutcome<S> {
    pub state: S,
    pub halted: bool,
}

#[derive(Default)]
pub struct StepOutcome {
    /// Port-addressed messages to send this round.
    pub outbox: Vec<(usize, Payload)>,
    pub halted: bool,
}

/// A node program signals an internal inconsistency with a fault; the engine
/// aborts the run and reports the node.
#[derive(Debug, thiserror::Error)]
#[error("program fault at node {node}: {message}")]
pub struct ProgramFault {
    pub node: NodeId,
    pub message: String,
}

impl ProgramFault {
    pub fn new(node: NodeId, message: impl Into<String>) -> ProgramFault {
        ProgramFault {
            node,
            message: message.into(),
        }
    }
}

/// Behavioral contract for the nodes of one distributed algorithm.
///
/// `step` must be a deterministic function of its arguments (the tape is an
/// argument: it is a fixed random stream per node). The outbox returned
/// together with `halted` is still delivered; after that the node sends
/// nothing and never resumes.
pub trait NodeProgram {
    type Input;
    type State;
    type Output;

    fn init(
        &self,
        ctx: &NodeCtx<'_>,
        input: &Self::Input,
        tape: &mut Tape,
    ) -> Result<InitOutcome<Self::State>, ProgramFault>;

    fn step(
        &self,
        ctx: &NodeCtx<'_>,
        round: u64,
        state: &mut Self::State,
        inbox: &[InMsg],
        tape: &mut Tape,
    ) -> Result<StepOutcome, ProgramFault>;

    fn output(&self, ctx: &NodeCtx<'_>, state: &Self::State) -> Self::Output;
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("round limit {round_limit} exceeded")]
    RoundLimitExceeded {
        round_limit: u64,
        /// Trace of the rounds that did execute.
        trace: Box<ExecutionTrace>,
    },
    #[error(transparent)]
    Fault(#[from] ProgramFault),
}

#[derive(Debug)]
pub struct RunResult<O> {
    pub trace: ExecutionTrace,
    pub outputs: BTreeMap<NodeId, O>,
}

/// Runs `program` over `network` until every node has halted or the round
/// limit is hit. Inputs are per node; `seed` feeds the per-node tapes.
pub fn run<P: NodeProgram>(
    network: &Network,
    program: &P,
    inputs: &BTreeMap<NodeId, P::Input>,
    seed: u64,
    round_limit: u64,
    mode: TraceMode,
) -> Result<RunResult<P::Output>, EngineError> {
    let n = network.len();
    let mut trace = ExecutionTrace::new(mode);
    let mut outputs = BTreeMap::new();
    let mut states: Vec<Option<P::State>> = Vec::with_capacity(n);
    let mut tapes: Vec<Tape> = Vec::with_capacity(n);
    let mut halted = vec![false; n];
    let mut active = 0usize;

    // Neighbor id slices per node, in port order.
    let neighbor_tables: Vec<Vec<NodeId>> = (0..n)
        .map(|idx| network.adj[idx].iter().map(|&j| network.nodes[j]).collect())
        .collect();

    for (idx, &id) in network.nodes.iter().enumerate() {
        let ctx = NodeCtx {
            id,
            neighbors: &neighbor_tables[idx],
            n,
        };
        let input = inputs
            .get(&id)
            .ok_or_else(|| ProgramFault::new(id, "missing input"))?;
        let mut tape = Tape::new(seed, id);
        let outcome = program.init(&ctx, input, &mut tape)?;
        if outcome.halted {
            halted[idx] = true;
            outputs.insert(id, program.output(&ctx, &outcome.state));
        } else {
            active += 1;
        }
        states.push(Some(outcome.state));
        tapes.push(tape);
    }

    let mut inboxes: Vec<Vec<InMsg>> = vec![Vec::new(); n];
    let mut staged: Vec<Vec<InMsg>> = vec![Vec::new(); n];
    let mut round = 0u64;

    while active > 0 {
        round += 1;
        if round > round_limit {
            trace.rounds_executed = round - 1;
            return Err(EngineError::RoundLimitExceeded {
                round_limit,
                trace: Box::new(trace),
            });
        }
        let active_at_start = active;
        let mut round_messages = 0u64;
        let mut round_max_bits = 0u64;

        for idx in 0..n {
            if halted[idx] {
                inboxes[idx].clear();
                continue;
            }
            let id = network.nodes[idx];
            let ctx = NodeCtx {
                id,
                neighbors: &neighbor_tables[idx],
                n,
            };
            let mut state = states[idx].take().expect("state present for active node");
            let inbox = std::mem::take(&mut inboxes[idx]);
            let outcome = program.step(&ctx, round, &mut state, &inbox, &mut tapes[idx]);
            let outcome = match outcome {
                Ok(o) => o,
                Err(fault) => return Err(fault.into()),
            };
            for (port, payload) in outcome.outbox {
                let receiver_idx = *network.adj[idx].get(port).ok_or_else(|| {
                    ProgramFault::new(id, format!("message addressed to invalid port {port}"))
                })?;
                let receiver = network.nodes[receiver_idx];
                let bits = payload.bits();
                round_messages += 1;
                round_max_bits = round_max_bits.max(bits);
                if bits > trace.max_message_bits {
                    trace.max_message_bits = bits;
                    trace.max_bits_edge = Some((round, id, receiver));
                }
                if !trace.summarized {
                    trace.messages.push(MessageRecord {
                        round,
                        sender: id,
                        receiver,
                        payload: payload.clone(),
                        bits,
                    });
                }
                let back_port = network.adj[receiver_idx]
                    .binary_search(&idx)
                    .expect("edges are symmetric");
                staged[receiver_idx].push(InMsg {
                    port: back_port,
                    payload,
                });
            }
            if outcome.halted {
                halted[idx] = true;
                active -= 1;
                outputs.insert(id, program.output(&ctx, &state));
            }
            states[idx] = Some(state);
        }

        for msgs in staged.iter_mut() {
            msgs.sort_by_key(|m| m.port);
        }
        std::mem::swap(&mut inboxes, &mut staged);
        for msgs in staged.iter_mut() {
            msgs.clear();
        }

        trace.total_messages += round_messages;
        if round_messages > 0 {
            trace.rounds_used = round;
        }
        if !trace.summarized {
            trace.per_round.push(RoundStats {
                round,
                active_at_start,
                messages: round_messages,
                max_bits: round_max_bits,
            });
        }
    }
    trace.rounds_executed = round;
    Ok(RunResult { trace, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Client, ClientId, MatchingInstance, Provider, ProviderId};

    struct HaltInInit;

    impl NodeProgram for HaltInInit {
        type Input = ();
        type State = ();
        type Output = u64;

        fn init(
            &self,
            _ctx: &NodeCtx<'_>,
            _input: &(),
            _tape: &mut Tape,
        ) -> Result<InitOutcome<()>, ProgramFault> {
            Ok(InitOutcome {
                state: (),
                halted: true,
            })
        }

        fn step(
            &self,
            _ctx: &NodeCtx<'_>,
            _round: u64,
            _state: &mut (),
            _inbox: &[InMsg],
            _tape: &mut Tape,
        ) -> Result<StepOutcome, ProgramFault> {
            unreachable!("all nodes halt in init")
        }

        fn output(&self, ctx: &NodeCtx<'_>, _state: &()) -> u64 {
            ctx.id.0
        }
    }

    /// Sends one ping to every neighbor in round 1 and halts.
    struct PingOnce;

    impl NodeProgram for PingOnce {
        type Input = ();
        type State = ();
        type Output = ();

        fn init(
            &self,
            _ctx: &NodeCtx<'_>,
            _input: &(),
            _tape: &mut Tape,
        ) -> Result<InitOutcome<()>, ProgramFault> {
            Ok(InitOutcome {
                state: (),
                halted: false,
            })
        }

        fn step(
            &self,
            ctx: &NodeCtx<'_>,
            _round: u64,
            _state: &mut (),
            _inbox: &[InMsg],
            _tape: &mut Tape,
        ) -> Result<StepOutcome, ProgramFault> {
            let outbox = (0..ctx.neighbors.len())
                .map(|port| (port, Payload::new(tag::PING)))
                .collect();
            Ok(StepOutcome {
                outbox,
                halted: true,
            })
        }

        fn output(&self, _ctx: &NodeCtx<'_>, _state: &()) {}
    }

    /// Echoes random values for a fixed number of rounds; used to pin down
    /// trace determinism including the randomness tapes.
    struct NoisyEcho {
        rounds: u64,
    }

    impl NodeProgram for NoisyEcho {
        type Input = ();
        type State = ();
        type Output = ();

        fn init(
            &self,
            _ctx: &NodeCtx<'_>,
            _input: &(),
            _tape: &mut Tape,
        ) -> Result<InitOutcome<()>, ProgramFault> {
            Ok(InitOutcome {
                state: (),
                halted: false,
            })
        }

        fn step(
            &self,
            ctx: &NodeCtx<'_>,
            round: u64,
            _state: &mut (),
            _inbox: &[InMsg],
            tape: &mut Tape,
        ) -> Result<StepOutcome, ProgramFault> {
            let outbox = (0..ctx.neighbors.len())
                .map(|port| {
                    (
                        port,
                        Payload::ints(tag::PING, &[tape.pick_1_to(1 << 20) as i64]),
                    )
                })
                .collect();
            Ok(StepOutcome {
                outbox,
                halted: round >= self.rounds,
            })
        }

        fn output(&self, _ctx: &NodeCtx<'_>, _state: &()) {}
    }

    fn two_node_network() -> Network {
        let edges = [(NodeId(1), NodeId(2))].into_iter().collect();
        Network::new(vec![NodeId(1), NodeId(2)], &edges)
    }

    fn unit_inputs(network: &Network) -> BTreeMap<NodeId, ()> {
        network.nodes().iter().map(|&n| (n, ())).collect()
    }

    #[test]
    fn halting_in_init_uses_zero_rounds() {
        let network = two_node_network();
        let result = run(
            &network,
            &HaltInInit,
            &unit_inputs(&network),
            0,
            10,
            TraceMode::Full,
        )
        .unwrap();
        assert_eq!(result.trace.rounds_used, 0);
        assert_eq!(result.outputs[&NodeId(1)], 1);
        assert_eq!(result.outputs[&NodeId(2)], 2);
    }

    #[test]
    fn ping_once_is_one_round_two_messages() {
        let network = two_node_network();
        let result = run(
            &network,
            &PingOnce,
            &unit_inputs(&network),
            0,
            10,
            TraceMode::Full,
        )
        .unwrap();
        assert_eq!(result.trace.rounds_used, 1);
        assert_eq!(result.trace.total_messages, 2);
        assert_eq!(result.trace.messages.len(), 2);
        assert!(result
            .trace
            .messages
            .iter()
            .all(|m| m.round == 1 && m.payload.tag == tag::PING));
    }

    #[test]
    fn round_limit_error_carries_partial_trace() {
        let network = two_node_network();
        let err = run(
            &network,
            &NoisyEcho { rounds: 100 },
            &unit_inputs(&network),
            0,
            5,
            TraceMode::Full,
        )
        .unwrap_err();
        match err {
            EngineError::RoundLimitExceeded { round_limit, trace } => {
                assert_eq!(round_limit, 5);
                assert_eq!(trace.rounds_used, 5);
                assert_eq!(trace.total_messages, 10);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let edges = [
            (NodeId(1), NodeId(2)),
            (NodeId(2), NodeId(3)),
            (NodeId(1), NodeId(3)),
        ]
        .into_iter()
        .collect();
        let network = Network::new(vec![NodeId(1), NodeId(2), NodeId(3)], &edges);
        let go = |seed| {
            let r = run(
                &network,
                &NoisyEcho { rounds: 7 },
                &unit_inputs(&network),
                seed,
                100,
                TraceMode::Full,
            )
            .unwrap();
            serde_json::to_string(&r.trace.messages).unwrap()
        };
        assert_eq!(go(3), go(3));
        assert_ne!(go(3), go(4));
    }

    #[test]
    fn augmented_network_adds_exactly_the_shared_provider_pairs() {
        // Clients 1, 2 share provider 10; client 3 does not share with anyone.
        let clients = vec![
            Client {
                id: ClientId(1),
                prefs: vec![ProviderId(10)],
                score: 1,
                load: None,
            },
            Client {
                id: ClientId(2),
                prefs: vec![ProviderId(10), ProviderId(11)],
                score: 1,
                load: None,
            },
            Client {
                id: ClientId(3),
                prefs: vec![ProviderId(12)],
                score: 1,
                load: None,
            },
        ];
        let providers = (10..=12)
            .map(|i| Provider {
                id: ProviderId(i),
                capacity: None,
                prefs: None,
            })
            .collect();
        let inst = MatchingInstance::new(clients, providers, 1);
        let network = Network::from_instance(&inst);
        assert!(network.has_edge(NodeId(1), NodeId(2)));
        assert!(!network.has_edge(NodeId(1), NodeId(3)));
        assert!(!network.has_edge(NodeId(2), NodeId(3)));
        assert!(network.has_edge(NodeId(2), NodeId(11)));
        assert!(!network.has_edge(NodeId(10), NodeId(11)));
    }
}
