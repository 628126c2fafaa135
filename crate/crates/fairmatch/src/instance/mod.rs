//! Matching instances: the bipartite client/provider graph, per-client
//! preference orders, the common score function, and (for the capacitated
//! variant) exact rational loads and capacities.

mod generate;
mod io;

pub use generate::{
    generate_block_family, generate_lowerbound_path, generate_random, GenerateError,
};
pub use io::{instance_from_json, instance_hash, instance_to_json, read_instance, write_instance,
    InstanceIoError};

use crate::rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Identifier of a client (proposing side).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u64);

/// Identifier of a provider (receiving side).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProviderId(pub u64);

impl fmt::Debug for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A client with its reported preference order and preference class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Client {
    pub id: ClientId,
    /// Strict order over the incident providers, most preferred first.
    pub prefs: Vec<ProviderId>,
    /// Preference class under the common score function, in `1..=S`.
    pub score: u32,
    /// Load for the capacitated fractional variant.
    pub load: Option<Ratio>,
}

/// A provider, optionally with a capacity and an explicit strict order over
/// its clients (only the classic general-preference baseline uses the order).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provider {
    pub id: ProviderId,
    pub capacity: Option<Ratio>,
    pub prefs: Option<Vec<ClientId>>,
}

/// Maximum degrees of the two sides and the derived conflict-degree bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DegreeProfile {
    pub delta_c: usize,
    pub delta_p: usize,
    /// `delta_c * delta_p`, an upper bound on the conflict-graph max degree.
    pub delta_h_bound: usize,
}

/// A complete matching instance.
///
/// The edge set is stored explicitly so that [`MatchingInstance::validate`]
/// can detect preference lists that disagree with the graph; instances read
/// from files always have edges derived from the preference lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchingInstance {
    clients: Vec<Client>,
    providers: Vec<Provider>,
    edges: BTreeSet<(ClientId, ProviderId)>,
    s_classes: u32,
}

/// One violated invariant, naming the offending node or edge and the rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.message)
    }
}

impl MatchingInstance {
    /// Builds an instance with the edge set derived from the client
    /// preference lists.
    pub fn new(clients: Vec<Client>, providers: Vec<Provider>, s_classes: u32) -> Self {
        let edges = clients
            .iter()
            .flat_map(|c| c.prefs.iter().map(move |&p| (c.id, p)))
            .collect();
        MatchingInstance {
            clients,
            providers,
            edges,
            s_classes,
        }
    }

    /// Builds an instance with an explicit edge set (which `validate` checks
    /// against the preference lists).
    pub fn with_edges(
        clients: Vec<Client>,
        providers: Vec<Provider>,
        edges: BTreeSet<(ClientId, ProviderId)>,
        s_classes: u32,
    ) -> Self {
        MatchingInstance {
            clients,
            providers,
            edges,
            s_classes,
        }
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    pub fn providers(&self) -> &[Provider] {
        &self.providers
    }

    pub fn edges(&self) -> &BTreeSet<(ClientId, ProviderId)> {
        &self.edges
    }

    pub fn s_classes(&self) -> u32 {
        self.s_classes
    }

    pub fn client(&self, id: ClientId) -> Option<&Client> {
        self.clients.iter().find(|c| c.id == id)
    }

    pub fn provider(&self, id: ProviderId) -> Option<&Provider> {
        self.providers.iter().find(|p| p.id == id)
    }

    /// Total number of agents.
    pub fn n(&self) -> usize {
        self.clients.len() + self.providers.len()
    }

    /// Clients adjacent to each provider, in ascending client id order.
    pub fn provider_neighbors(&self) -> BTreeMap<ProviderId, Vec<ClientId>> {
        let mut map: BTreeMap<ProviderId, Vec<ClientId>> = self
            .providers
            .iter()
            .map(|p| (p.id, Vec::new()))
            .collect();
        for &(c, p) in &self.edges {
            if let Some(v) = map.get_mut(&p) {
                v.push(c);
            }
        }
        for v in map.values_mut() {
            v.sort();
        }
        map
    }

    pub fn degree_profile(&self) -> DegreeProfile {
        let delta_c = self
            .clients
            .iter()
            .map(|c| c.prefs.len())
            .max()
            .unwrap_or(0);
        let mut counts: BTreeMap<ProviderId, usize> = BTreeMap::new();
        for &(_, p) in &self.edges {
            *counts.entry(p).or_insert(0) += 1;
        }
        let delta_p = counts.values().copied().max().unwrap_or(0);
        DegreeProfile {
            delta_c,
            delta_p,
            delta_h_bound: delta_c * delta_p,
        }
    }

    /// Replaces one client's reported preference order. The new report must
    /// be a permutation of the old one; used by the deviation harness.
    pub fn with_client_report(&self, id: ClientId, report: Vec<ProviderId>) -> MatchingInstance {
        let mut out = self.clone();
        let client = out
            .clients
            .iter_mut()
            .find(|c| c.id == id)
            .expect("unknown client");
        let old: BTreeSet<_> = client.prefs.iter().copied().collect();
        let new: BTreeSet<_> = report.iter().copied().collect();
        assert_eq!(old, new, "report must be a permutation of the neighborhood");
        client.prefs = report;
        out
    }

    /// Checks every instance invariant; an empty report means the instance is
    /// valid. Violations are data, not failures.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen: BTreeSet<u64> = BTreeSet::new();
        for c in &self.clients {
            if c.id.0 == 0 {
                out.push(Violation {
                    rule: "positive id",
                    message: format!("client {} has id 0", c.id),
                });
            }
            if !seen.insert(c.id.0) {
                out.push(Violation {
                    rule: "duplicate id",
                    message: format!("id {} appears more than once", c.id),
                });
            }
        }
        for p in &self.providers {
            if p.id.0 == 0 {
                out.push(Violation {
                    rule: "positive id",
                    message: format!("provider {} has id 0", p.id),
                });
            }
            if !seen.insert(p.id.0) {
                out.push(Violation {
                    rule: "duplicate id",
                    message: format!("id {} appears more than once", p.id),
                });
            }
        }
        if self.s_classes == 0 {
            out.push(Violation {
                rule: "class count",
                message: "S must be at least 1".to_owned(),
            });
        }
        let provider_ids: BTreeSet<ProviderId> = self.providers.iter().map(|p| p.id).collect();
        let client_ids: BTreeSet<ClientId> = self.clients.iter().map(|c| c.id).collect();
        for &(c, p) in &self.edges {
            if !client_ids.contains(&c) || !provider_ids.contains(&p) {
                out.push(Violation {
                    rule: "edge endpoints",
                    message: format!("edge ({c}, {p}) references an unknown agent"),
                });
            }
        }
        for c in &self.clients {
            let neighborhood: BTreeSet<ProviderId> = self
                .edges
                .iter()
                .filter(|&&(v, _)| v == c.id)
                .map(|&(_, p)| p)
                .collect();
            let listed: BTreeSet<ProviderId> = c.prefs.iter().copied().collect();
            if listed.len() != c.prefs.len() {
                out.push(Violation {
                    rule: "preference permutation",
                    message: format!("client {} lists a provider twice", c.id),
                });
            }
            for p in listed.difference(&neighborhood) {
                out.push(Violation {
                    rule: "preference permutation",
                    message: format!("client {} lists non-neighbor {p}", c.id),
                });
            }
            for p in neighborhood.difference(&listed) {
                out.push(Violation {
                    rule: "preference permutation",
                    message: format!("client {} is missing neighbor {p}", c.id),
                });
            }
            if c.score == 0 || c.score > self.s_classes {
                out.push(Violation {
                    rule: "score out of range",
                    message: format!(
                        "client {} has score {} outside 1..={}",
                        c.id, c.score, self.s_classes
                    ),
                });
            }
            if let Some(load) = &c.load {
                if load.is_negative() {
                    out.push(Violation {
                        rule: "negative load",
                        message: format!("client {} has load {load}", c.id),
                    });
                }
            }
        }
        let provider_nbrs = self.provider_neighbors();
        for p in &self.providers {
            if let Some(capacity) = &p.capacity {
                if capacity.is_negative() {
                    out.push(Violation {
                        rule: "negative load",
                        message: format!("provider {} has capacity {capacity}", p.id),
                    });
                }
            }
            if let Some(prefs) = &p.prefs {
                let neighborhood: BTreeSet<ClientId> = provider_nbrs
                    .get(&p.id)
                    .map(|v| v.iter().copied().collect())
                    .unwrap_or_default();
                let listed: BTreeSet<ClientId> = prefs.iter().copied().collect();
                if listed.len() != prefs.len() || listed != neighborhood {
                    out.push(Violation {
                        rule: "preference permutation",
                        message: format!(
                            "provider {} order is not a permutation of its neighborhood",
                            p.id
                        ),
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> MatchingInstance {
        let clients = vec![
            Client {
                id: ClientId(1),
                prefs: vec![ProviderId(3), ProviderId(4)],
                score: 1,
                load: None,
            },
            Client {
                id: ClientId(2),
                prefs: vec![ProviderId(4), ProviderId(3)],
                score: 2,
                load: None,
            },
        ];
        let providers = vec![
            Provider {
                id: ProviderId(3),
                capacity: None,
                prefs: None,
            },
            Provider {
                id: ProviderId(4),
                capacity: None,
                prefs: None,
            },
        ];
        MatchingInstance::new(clients, providers, 2)
    }

    #[test]
    fn valid_instance_has_empty_report() {
        assert!(two_by_two().validate().is_empty());
    }

    #[test]
    fn missing_neighbor_in_prefs_is_reported() {
        let mut inst = two_by_two();
        // Edge (1, 4) exists but client 1 no longer lists provider 4.
        inst.clients[0].prefs = vec![ProviderId(3)];
        let report = inst.validate();
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].rule, "preference permutation");
        assert!(report[0].message.contains("client 1"));
        assert!(report[0].message.contains('4'));
    }

    #[test]
    fn score_out_of_range_is_reported() {
        let mut inst = two_by_two();
        inst.clients[1].score = 0;
        let report = inst.validate();
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].rule, "score out of range");
    }

    #[test]
    fn duplicate_id_is_reported() {
        let mut inst = two_by_two();
        inst.providers[1].id = ProviderId(1);
        let report = inst.validate();
        assert!(report.iter().any(|v| v.rule == "duplicate id"));
    }

    #[test]
    fn degree_profile_bounds() {
        let profile = two_by_two().degree_profile();
        assert_eq!(profile.delta_c, 2);
        assert_eq!(profile.delta_p, 2);
        assert_eq!(profile.delta_h_bound, 4);
    }
}
