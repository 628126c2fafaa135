//! Tie-breaking via distributed coloring of the conflict graph.
//!
//! Two clients conflict when they share a preference class and a provider;
//! any proper coloring `phi` of that graph refines the common score function
//! into the strict-per-provider order `c * (s(v) - 1) + phi(v)`. Because the
//! coloring depends only on the conflict graph, the identifiers and the
//! seeds — never on the clients' reported preference orders — composing it
//! with the score preserves truthfulness.
//!
//! Four coloring routines are provided, all running as node programs on the
//! round engine:
//!
//! - [`color_deterministic`]: polynomial color reduction from the identifier
//!   space down to roughly `(2Δ+1)^2` colors, then a one-class-per-round
//!   sweep to `Δ + 1` colors;
//! - [`color_luby_trial`]: randomized trials with palette `2Δ`, keeping a
//!   proposed color when no neighbor tried or holds the same one;
//! - [`sample_uniform_coloring`]: fixed number of resampling rounds that
//!   converge to an almost-uniform proper coloring (palette `q > 2Δ`);
//! - [`color_with_failures`]: one uniform shot over `ceil(1/δ)·Δ` colors;
//!   nodes without a conflict form the fair set `F`, the rest are recolored
//!   deterministically from an offset palette.

mod deterministic;
mod failures;
mod luby;
mod sampler;

pub use deterministic::color_deterministic;
pub use failures::{classify_one_shot, color_with_failures};
pub use luby::color_luby_trial;
pub use sampler::{greedy_coloring_by_id, sample_uniform_coloring, SamplerConfig};

use crate::engine::{EngineError, ExecutionTrace, Network, NodeId};
use crate::instance::{ClientId, MatchingInstance};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error)]
pub enum TieBreakError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("client {0} has no color")]
    MissingColor(ClientId),
    #[error("color {color} of client {client} outside palette 1..={palette}")]
    OutOfPalette {
        client: ClientId,
        color: u64,
        palette: u64,
    },
    #[error("improper coloring: conflicting clients {0} and {1} share a color")]
    Improper(ClientId, ClientId),
}

/// The virtual conflict graph: clients are nodes, and two clients are
/// adjacent iff they have equal scores and a common provider.
#[derive(Clone, Debug)]
pub struct ConflictGraph {
    clients: Vec<ClientId>,
    adj: BTreeMap<ClientId, Vec<ClientId>>,
    delta_h: usize,
}

impl ConflictGraph {
    pub fn nodes(&self) -> &[ClientId] {
        &self.clients
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn neighbors(&self, id: ClientId) -> &[ClientId] {
        self.adj.get(&id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn delta_h(&self) -> usize {
        self.delta_h
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(|v| v.len()).sum::<usize>() / 2
    }

    /// Edges with both orientations deduplicated, ascending.
    pub fn edges(&self) -> Vec<(ClientId, ClientId)> {
        let mut out = Vec::new();
        for (&u, nbrs) in &self.adj {
            for &v in nbrs {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Communication network over exactly the conflict edges.
    pub fn network(&self) -> Network {
        let nodes = self.clients.iter().map(|c| NodeId(c.0)).collect();
        let edges = self
            .edges()
            .into_iter()
            .map(|(u, v)| (NodeId(u.0), NodeId(v.0)))
            .collect();
        Network::new(nodes, &edges)
    }

    /// Restriction to a subset of clients.
    pub fn induced(&self, keep: &BTreeSet<ClientId>) -> ConflictGraph {
        let clients: Vec<ClientId> = self
            .clients
            .iter()
            .copied()
            .filter(|c| keep.contains(c))
            .collect();
        let adj: BTreeMap<ClientId, Vec<ClientId>> = clients
            .iter()
            .map(|&c| {
                let nbrs: Vec<ClientId> = self.adj[&c]
                    .iter()
                    .copied()
                    .filter(|n| keep.contains(n))
                    .collect();
                (c, nbrs)
            })
            .collect();
        let delta_h = adj.values().map(|v| v.len()).max().unwrap_or(0);
        ConflictGraph {
            clients,
            adj,
            delta_h,
        }
    }

    /// Builds a conflict graph directly from an edge list. Mostly a test
    /// helper for shapes like triangles that are awkward to reach through a
    /// full instance.
    pub fn from_edges(clients: &[ClientId], edges: &[(ClientId, ClientId)]) -> ConflictGraph {
        let mut sorted: Vec<ClientId> = clients.to_vec();
        sorted.sort();
        sorted.dedup();
        let mut adj: BTreeMap<ClientId, BTreeSet<ClientId>> =
            sorted.iter().map(|&c| (c, BTreeSet::new())).collect();
        for &(u, v) in edges {
            assert!(u != v);
            adj.get_mut(&u).unwrap().insert(v);
            adj.get_mut(&v).unwrap().insert(u);
        }
        let adj: BTreeMap<ClientId, Vec<ClientId>> = adj
            .into_iter()
            .map(|(c, s)| (c, s.into_iter().collect()))
            .collect();
        let delta_h = adj.values().map(|v| v.len()).max().unwrap_or(0);
        ConflictGraph {
            clients: sorted,
            adj,
            delta_h,
        }
    }

    /// Scans all edges for equal colors; `None` means proper.
    pub fn properness_violation(
        &self,
        phi: &BTreeMap<ClientId, u64>,
    ) -> Option<(ClientId, ClientId)> {
        for (u, v) in self.edges() {
            if phi.get(&u).is_some() && phi.get(&u) == phi.get(&v) {
                return Some((u, v));
            }
        }
        None
    }
}

/// Builds the conflict graph of an instance and its max degree.
pub fn build_conflict_graph(inst: &MatchingInstance) -> ConflictGraph {
    let scores: BTreeMap<ClientId, u32> = inst.clients().iter().map(|c| (c.id, c.score)).collect();
    let mut edge_set: BTreeSet<(ClientId, ClientId)> = BTreeSet::new();
    for clients in inst.provider_neighbors().values() {
        for (i, &a) in clients.iter().enumerate() {
            for &b in &clients[i + 1..] {
                if scores[&a] == scores[&b] {
                    edge_set.insert((a, b));
                }
            }
        }
    }
    let clients: Vec<ClientId> = inst.clients().iter().map(|c| c.id).collect();
    ConflictGraph::from_edges(&clients, &edge_set.into_iter().collect::<Vec<_>>())
}

/// Output of one coloring routine, before composition with the score.
#[derive(Clone, Debug)]
pub struct Coloring {
    pub phi: BTreeMap<ClientId, u64>,
    /// Palette size `c`; colors lie in `1..=palette`.
    pub palette: u64,
    /// Clients whose tie-breaking is uniformly random (failures routine);
    /// empty for the other routines.
    pub fair_set: BTreeSet<ClientId>,
    /// Clients recolored after a one-shot conflict (failures routine).
    pub failed_set: BTreeSet<ClientId>,
    /// Engine traces of the runs that produced the coloring.
    pub traces: Vec<ExecutionTrace>,
}

impl Coloring {
    pub fn rounds_used(&self) -> u64 {
        self.traces.iter().map(|t| t.rounds_used).sum()
    }
}

/// A coloring composed with the score function: the tie-breaking rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TieBreak {
    pub c: u64,
    pub phi: BTreeMap<ClientId, u64>,
    /// `composed(v) = c * (s(v) - 1) + phi(v)`, strict on every provider's
    /// neighborhood.
    pub composed: BTreeMap<ClientId, u64>,
    pub fair_set: BTreeSet<ClientId>,
    pub failed_set: BTreeSet<ClientId>,
}

impl TieBreak {
    /// Composes a coloring with the instance's score function, validating
    /// the palette and properness on the conflict graph.
    pub fn compose(inst: &MatchingInstance, coloring: &Coloring) -> Result<TieBreak, TieBreakError> {
        let composed = compose_score(inst, &coloring.phi, coloring.palette)?;
        Ok(TieBreak {
            c: coloring.palette,
            phi: coloring.phi.clone(),
            composed,
            fair_set: coloring.fair_set.clone(),
            failed_set: coloring.failed_set.clone(),
        })
    }

    /// Total number of composed preference classes, `S * c`.
    pub fn class_count(&self, inst: &MatchingInstance) -> u64 {
        inst.s_classes() as u64 * self.c
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map = |m: &BTreeMap<ClientId, u64>| -> serde_json::Map<String, serde_json::Value> {
            m.iter().map(|(k, v)| (k.to_string(), json!(v))).collect()
        };
        json!({
            "c": self.c,
            "phi": map(&self.phi),
            "composed": map(&self.composed),
            "F": self.fair_set.iter().map(|c| c.0).collect::<Vec<_>>(),
            "X": self.failed_set.iter().map(|c| c.0).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<TieBreak, String> {
        let obj = value.as_object().ok_or("tiebreak must be an object")?;
        let c = obj
            .get("c")
            .and_then(|v| v.as_u64())
            .ok_or("missing field c")?;
        let read_map = |name: &str| -> Result<BTreeMap<ClientId, u64>, String> {
            obj.get(name)
                .and_then(|v| v.as_object())
                .ok_or_else(|| format!("missing field {name}"))?
                .iter()
                .map(|(k, v)| {
                    let id = k.parse::<u64>().map_err(|e| e.to_string())?;
                    let color = v.as_u64().ok_or_else(|| format!("bad value in {name}"))?;
                    Ok((ClientId(id), color))
                })
                .collect()
        };
        let read_set = |name: &str| -> Result<BTreeSet<ClientId>, String> {
            obj.get(name)
                .and_then(|v| v.as_array())
                .ok_or_else(|| format!("missing field {name}"))?
                .iter()
                .map(|v| {
                    v.as_u64()
                        .map(ClientId)
                        .ok_or_else(|| format!("bad id in {name}"))
                })
                .collect()
        };
        Ok(TieBreak {
            c,
            phi: read_map("phi")?,
            composed: read_map("composed")?,
            fair_set: read_set("F")?,
            failed_set: read_set("X")?,
        })
    }
}

/// Computes `composed(v) = c * (s(v) - 1) + phi(v)`, rejecting colorings
/// that are missing a client, out of palette, or improper on the conflict
/// graph (which would leave two co-neighbors with equal composed scores).
pub fn compose_score(
    inst: &MatchingInstance,
    phi: &BTreeMap<ClientId, u64>,
    palette: u64,
) -> Result<BTreeMap<ClientId, u64>, TieBreakError> {
    let graph = build_conflict_graph(inst);
    if let Some((u, v)) = graph.properness_violation(phi) {
        return Err(TieBreakError::Improper(u, v));
    }
    let mut composed = BTreeMap::new();
    for client in inst.clients() {
        let color = *phi
            .get(&client.id)
            .ok_or(TieBreakError::MissingColor(client.id))?;
        if color == 0 || color > palette {
            return Err(TieBreakError::OutOfPalette {
                client: client.id,
                color,
                palette,
            });
        }
        composed.insert(client.id, palette * (client.score as u64 - 1) + color);
    }
    Ok(composed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Client, Provider, ProviderId};

    fn pair_instance(score_a: u32, score_b: u32, shared: bool) -> MatchingInstance {
        let providers = vec![
            Provider {
                id: ProviderId(10),
                capacity: None,
                prefs: None,
            },
            Provider {
                id: ProviderId(11),
                capacity: None,
                prefs: None,
            },
        ];
        let b_prefs = if shared {
            vec![ProviderId(10)]
        } else {
            vec![ProviderId(11)]
        };
        let clients = vec![
            Client {
                id: ClientId(1),
                prefs: vec![ProviderId(10)],
                score: score_a,
                load: None,
            },
            Client {
                id: ClientId(2),
                prefs: b_prefs,
                score: score_b,
                load: None,
            },
        ];
        MatchingInstance::new(clients, providers, 2)
    }

    #[test]
    fn same_score_shared_provider_is_an_edge() {
        let g = build_conflict_graph(&pair_instance(1, 1, true));
        assert_eq!(g.edges(), vec![(ClientId(1), ClientId(2))]);
        assert_eq!(g.delta_h(), 1);
    }

    #[test]
    fn different_scores_are_never_in_conflict() {
        let g = build_conflict_graph(&pair_instance(1, 2, true));
        assert!(g.edges().is_empty());
        assert_eq!(g.delta_h(), 0);
    }

    #[test]
    fn disjoint_providers_are_never_in_conflict() {
        let g = build_conflict_graph(&pair_instance(1, 1, false));
        assert!(g.edges().is_empty());
    }

    #[test]
    fn delta_h_respects_degree_bound() {
        let inst = crate::instance::generate_random(7, 50, 20, 3, 4).unwrap();
        let g = build_conflict_graph(&inst);
        assert!(g.delta_h() <= inst.degree_profile().delta_h_bound);
    }

    #[test]
    fn compose_formula() {
        // s = 2, phi = 3, c = 4 -> 7.
        let inst = pair_instance(2, 1, true);
        let phi = [(ClientId(1), 3), (ClientId(2), 1)].into_iter().collect();
        let composed = compose_score(&inst, &phi, 4).unwrap();
        assert_eq!(composed[&ClientId(1)], 7);
        assert_eq!(composed[&ClientId(2)], 1);
    }

    #[test]
    fn compose_identity_case() {
        let inst = pair_instance(1, 2, true);
        for c in [1, 3, 9] {
            let phi = [(ClientId(1), 1), (ClientId(2), 1)].into_iter().collect();
            let composed = compose_score(&inst, &phi, c).unwrap();
            assert_eq!(composed[&ClientId(1)], 1);
        }
    }

    #[test]
    fn compose_respects_score_order() {
        // phi <= c always, so a smaller score always wins.
        let inst = pair_instance(1, 2, true);
        let phi = [(ClientId(1), 4), (ClientId(2), 1)].into_iter().collect();
        let composed = compose_score(&inst, &phi, 4).unwrap();
        assert!(composed[&ClientId(1)] < composed[&ClientId(2)]);
    }

    #[test]
    fn compose_rejects_improper_coloring() {
        let inst = pair_instance(1, 1, true);
        let phi = [(ClientId(1), 2), (ClientId(2), 2)].into_iter().collect();
        match compose_score(&inst, &phi, 4) {
            Err(TieBreakError::Improper(u, v)) => {
                assert_eq!((u, v), (ClientId(1), ClientId(2)));
            }
            other => panic!("expected improper coloring, got {other:?}"),
        }
    }

    #[test]
    fn compose_rejects_out_of_palette() {
        let inst = pair_instance(1, 1, true);
        let phi = [(ClientId(1), 5), (ClientId(2), 1)].into_iter().collect();
        assert!(matches!(
            compose_score(&inst, &phi, 4),
            Err(TieBreakError::OutOfPalette { .. })
        ));
    }

    #[test]
    fn tiebreak_json_round_trip() {
        let inst = pair_instance(1, 1, true);
        let coloring = Coloring {
            phi: [(ClientId(1), 1), (ClientId(2), 2)].into_iter().collect(),
            palette: 2,
            fair_set: [ClientId(1)].into_iter().collect(),
            failed_set: [ClientId(2)].into_iter().collect(),
            traces: Vec::new(),
        };
        let tb = TieBreak::compose(&inst, &coloring).unwrap();
        let back = TieBreak::from_json(&tb.to_json()).unwrap();
        assert_eq!(tb, back);
    }
}
