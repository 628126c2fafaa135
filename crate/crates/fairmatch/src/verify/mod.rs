//! Ground-truth oracles and property harnesses: blocking-pair scans,
//! exhaustive stable-matching enumeration, the serial-dictatorship oracle,
//! incentive-compatibility testing and fairness measurement.
//!
//! Everything here is deliberately independent of the engine path it checks:
//! the oracles work directly on instances and matchings.

mod enumerate;
mod fairness;
mod ic;
mod propagation;

pub use enumerate::{enumerate_stable_matchings, greedy_fractional, serial_dictatorship};
pub use fairness::{measure_tiebreak_fairness, tie_groups, wilson_halfwidth, FairnessReport,
    TieGroupStats};
pub use ic::{
    find_truncation_counterexample, ic_sweep_fractional, ic_sweep_integral, prefix_dominance,
    test_incentive_compatibility, DeviationResult, IcOutcome, IcRunner, SweepConfig, SweepStats,
    TruncationWitness,
};
pub use propagation::{least_squares_slope, measure_propagation, PropagationRow};

use crate::instance::{ClientId, MatchingInstance, ProviderId};
use crate::matching::{FractionalMatching, Matching, MatchingError};
use crate::rational::Ratio;
use crate::tiebreak::TieBreak;
use serde_json::json;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("instance too large to enumerate ({0} agents)")]
    TooLarge(usize),
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Matching(#[from] MatchingError),
}

/// How providers rank clients when scanning for blocking pairs.
#[derive(Clone, Debug)]
pub struct ProviderRanking {
    rank: BTreeMap<(ProviderId, ClientId), u64>,
}

impl ProviderRanking {
    /// Every provider ranks by the composed score (smaller is better).
    pub fn from_composed(inst: &MatchingInstance, tiebreak: &TieBreak) -> ProviderRanking {
        let mut rank = BTreeMap::new();
        for (provider, clients) in inst.provider_neighbors() {
            for client in clients {
                rank.insert((provider, client), tiebreak.composed[&client]);
            }
        }
        ProviderRanking { rank }
    }

    /// The instance's explicit provider orders, ascending client id where
    /// absent (the classic-baseline convention).
    pub fn from_instance(inst: &MatchingInstance) -> Result<ProviderRanking, VerifyError> {
        let neighborhoods = inst.provider_neighbors();
        let mut rank = BTreeMap::new();
        for provider in inst.providers() {
            let neighbors = &neighborhoods[&provider.id];
            match &provider.prefs {
                Some(order) => {
                    if order.len() != neighbors.len()
                        || !neighbors.iter().all(|c| order.contains(c))
                    {
                        return Err(VerifyError::BadInput(format!(
                            "provider {} order is not a permutation of its neighborhood",
                            provider.id
                        )));
                    }
                    for (i, &c) in order.iter().enumerate() {
                        rank.insert((provider.id, c), i as u64);
                    }
                }
                None => {
                    for &c in neighbors {
                        rank.insert((provider.id, c), c.0);
                    }
                }
            }
        }
        Ok(ProviderRanking { rank })
    }

    pub fn rank(&self, provider: ProviderId, client: ClientId) -> Option<u64> {
        self.rank.get(&(provider, client)).copied()
    }

    /// True iff `candidate` beats `incumbent` (an empty incumbent always
    /// loses).
    fn prefers(
        &self,
        provider: ProviderId,
        candidate: ClientId,
        incumbent: Option<ClientId>,
    ) -> bool {
        let candidate_rank = match self.rank(provider, candidate) {
            Some(r) => r,
            None => return false,
        };
        match incumbent.and_then(|c| self.rank(provider, c)) {
            Some(held) => candidate_rank < held,
            None => true,
        }
    }
}

/// One blocking pair with the reason both sides prefer each other.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockingPair {
    pub client: ClientId,
    pub provider: ProviderId,
    pub reason: String,
}

impl fmt::Display for BlockingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "client {} and provider {}: {}",
            self.client, self.provider, self.reason
        )
    }
}

/// Result of a stability scan; empty iff stable.
#[derive(Clone, Debug, Default)]
pub struct BlockingReport {
    pub pairs: Vec<BlockingPair>,
    pub matching_size: usize,
}

impl BlockingReport {
    pub fn is_stable(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "stable": self.is_stable(),
            "unstable_edges": self.pairs.len(),
            "matching_size": self.matching_size,
            "blocking_pairs": self.pairs.iter().map(|p| json!({
                "client": p.client.0,
                "provider": p.provider.0,
                "reason": p.reason,
            })).collect::<Vec<_>>(),
        })
    }
}

fn client_rank(inst: &MatchingInstance, client: ClientId, provider: ProviderId) -> Option<u64> {
    inst.client(client)
        .and_then(|c| c.prefs.iter().position(|&p| p == provider))
        .map(|i| i as u64)
}

/// Scans every non-matching edge for a pair that would both rather be
/// matched with each other. The matching must be one-to-one over instance
/// edges.
pub fn find_blocking_pairs(
    inst: &MatchingInstance,
    matching: &Matching,
    ranking: &ProviderRanking,
) -> Result<BlockingReport, VerifyError> {
    for (&c, &p) in matching.pairs() {
        if !inst.edges().contains(&(c, p)) {
            return Err(VerifyError::InvalidMatching(format!(
                "matched pair ({c}, {p}) is not an instance edge"
            )));
        }
    }
    let mut pairs = Vec::new();
    for &(client, provider) in inst.edges() {
        if matching.contains(client, provider) {
            continue;
        }
        let candidate_rank = client_rank(inst, client, provider).expect("edge implies neighbor");
        let client_prefers = match matching.provider_of(client) {
            Some(current) => {
                client_rank(inst, client, current).map_or(true, |r| candidate_rank < r)
            }
            None => true,
        };
        if !client_prefers {
            continue;
        }
        let incumbent = matching.client_of(provider);
        if ranking.prefers(provider, client, incumbent) {
            let reason = format!(
                "client held {:?}, provider held {:?}",
                matching.provider_of(client).map(|p| p.0),
                incumbent.map(|c| c.0),
            );
            pairs.push(BlockingPair {
                client,
                provider,
                reason,
            });
        }
    }
    Ok(BlockingReport {
        pairs,
        matching_size: matching.len(),
    })
}

/// Exact feasibility check for fractional matchings: per-edge nonnegativity,
/// support inside the edge set, and per-agent capacity constraints.
pub fn check_fractional_feasibility(
    inst: &MatchingInstance,
    fm: &FractionalMatching,
) -> Vec<String> {
    let mut out = Vec::new();
    for (&(c, p), w) in fm.edges() {
        if w.is_negative() {
            out.push(format!("negative load {w} on edge ({c}, {p})"));
        }
        if !inst.edges().contains(&(c, p)) {
            out.push(format!("load on non-edge ({c}, {p})"));
        }
    }
    for client in inst.clients() {
        let total = fm.client_total(client.id);
        let load = client.load.clone().unwrap_or_else(Ratio::zero);
        if total > load {
            out.push(format!(
                "client {} carries {total} over its load {load}",
                client.id
            ));
        }
    }
    for provider in inst.providers() {
        let total = fm.provider_total(provider.id);
        let capacity = provider.capacity.clone().unwrap_or_else(Ratio::zero);
        if total > capacity {
            out.push(format!(
                "provider {} carries {total} over its capacity {capacity}",
                provider.id
            ));
        }
    }
    out
}

/// Scans for fractional blocking pairs. A pair `(v, u)` blocks iff the
/// provider side could free or spare capacity for `v` (some `u`-edge carries
/// load from a worse client, or `u` has slack) and the client side would
/// reroute (some `v`-edge carries load to a worse provider, or `v` has
/// slack).
pub fn find_fractional_blocking_pairs(
    inst: &MatchingInstance,
    fm: &FractionalMatching,
    tiebreak: &TieBreak,
) -> Result<BlockingReport, VerifyError> {
    let neighborhoods = inst.provider_neighbors();
    let mut pairs = Vec::new();
    for &(client, provider) in inst.edges() {
        let my_class = tiebreak.composed[&client];

        let provider_total = fm.provider_total(provider);
        let capacity = inst
            .provider(provider)
            .and_then(|p| p.capacity.clone())
            .unwrap_or_else(Ratio::zero);
        let provider_slack = provider_total < capacity;
        let provider_worse_load = neighborhoods[&provider].iter().any(|&other| {
            other != client
                && tiebreak.composed[&other] > my_class
                && !fm.amount(other, provider).is_zero()
        });
        if !(provider_slack || provider_worse_load) {
            continue;
        }

        let client_total = fm.client_total(client);
        let load = inst
            .client(client)
            .and_then(|c| c.load.clone())
            .unwrap_or_else(Ratio::zero);
        let client_slack = client_total < load;
        let prefs = &inst.client(client).expect("edge implies client").prefs;
        let my_position = prefs.iter().position(|&p| p == provider).unwrap();
        let client_worse_load = prefs[my_position + 1..]
            .iter()
            .any(|&worse| !fm.amount(client, worse).is_zero());
        if client_slack || client_worse_load {
            let reason = format!(
                "provider side: {}, client side: {}",
                if provider_slack { "slack" } else { "worse-ranked load" },
                if client_slack { "slack" } else { "load on a worse provider" },
            );
            pairs.push(BlockingPair {
                client,
                provider,
                reason,
            });
        }
    }
    Ok(BlockingReport {
        pairs,
        matching_size: fm.edges().len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Client, Provider};
    use crate::tiebreak::{build_conflict_graph, color_deterministic};

    fn one_by_one() -> MatchingInstance {
        MatchingInstance::new(
            vec![Client {
                id: ClientId(1),
                prefs: vec![ProviderId(2)],
                score: 1,
                load: Some(Ratio::one()),
            }],
            vec![Provider {
                id: ProviderId(2),
                capacity: Some(Ratio::one()),
                prefs: None,
            }],
            1,
        )
    }

    fn tiebreak_for(inst: &MatchingInstance) -> TieBreak {
        let coloring = color_deterministic(&build_conflict_graph(inst)).unwrap();
        TieBreak::compose(inst, &coloring).unwrap()
    }

    #[test]
    fn stable_toy_instance_is_empty() {
        let inst = one_by_one();
        let matching = Matching::new([(ClientId(1), ProviderId(2))].into_iter().collect());
        let ranking = ProviderRanking::from_instance(&inst).unwrap();
        let report = find_blocking_pairs(&inst, &matching, &ranking).unwrap();
        assert!(report.is_stable());
        assert_eq!(report.matching_size, 1);
    }

    #[test]
    fn empty_matching_with_an_edge_blocks() {
        let inst = one_by_one();
        let ranking = ProviderRanking::from_instance(&inst).unwrap();
        let report = find_blocking_pairs(&inst, &Matching::default(), &ranking).unwrap();
        assert_eq!(report.pairs.len(), 1);
        assert_eq!(report.pairs[0].client, ClientId(1));
        assert_eq!(report.pairs[0].provider, ProviderId(2));
    }

    #[test]
    fn matched_non_edge_is_rejected() {
        let inst = one_by_one();
        let matching = Matching::new([(ClientId(1), ProviderId(9))].into_iter().collect());
        let ranking = ProviderRanking::from_instance(&inst).unwrap();
        assert!(matches!(
            find_blocking_pairs(&inst, &matching, &ranking),
            Err(VerifyError::InvalidMatching(_))
        ));
    }

    #[test]
    fn zero_fractional_matching_blocks_with_slack() {
        let inst = one_by_one();
        let tb = tiebreak_for(&inst);
        let report =
            find_fractional_blocking_pairs(&inst, &FractionalMatching::default(), &tb).unwrap();
        assert_eq!(report.pairs.len(), 1);
    }

    #[test]
    fn saturated_instance_has_no_fractional_blocking() {
        // One client, two providers, everything saturated in preference
        // order: no slack anywhere and no load parked on a worse provider
        // while a better one could take it.
        let inst = MatchingInstance::new(
            vec![Client {
                id: ClientId(1),
                prefs: vec![ProviderId(2), ProviderId(3)],
                score: 1,
                load: Some(Ratio::int(2)),
            }],
            vec![
                Provider {
                    id: ProviderId(2),
                    capacity: Some(Ratio::one()),
                    prefs: None,
                },
                Provider {
                    id: ProviderId(3),
                    capacity: Some(Ratio::one()),
                    prefs: None,
                },
            ],
            1,
        );
        let tb = tiebreak_for(&inst);
        let fm = FractionalMatching::new(
            [
                ((ClientId(1), ProviderId(2)), Ratio::one()),
                ((ClientId(1), ProviderId(3)), Ratio::one()),
            ]
            .into_iter()
            .collect(),
        );
        assert!(check_fractional_feasibility(&inst, &fm).is_empty());
        let report = find_fractional_blocking_pairs(&inst, &fm, &tb).unwrap();
        assert!(report.is_stable(), "{:?}", report.pairs);
    }

    #[test]
    fn feasibility_violations_are_reported() {
        let inst = one_by_one();
        let fm = FractionalMatching::new(
            [((ClientId(1), ProviderId(2)), Ratio::int(3))]
                .into_iter()
                .collect(),
        );
        let problems = check_fractional_feasibility(&inst, &fm);
        assert_eq!(problems.len(), 2, "{problems:?}");
    }
}
