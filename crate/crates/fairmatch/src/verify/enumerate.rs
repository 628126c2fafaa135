//! Exhaustive enumeration of stable matchings and the sequential oracles.

use super::{find_blocking_pairs, ProviderRanking, VerifyError};
use crate::instance::{ClientId, MatchingInstance, ProviderId};
use crate::matching::{FractionalMatching, Matching, MatchingError};
use crate::rational::Ratio;
use crate::tiebreak::TieBreak;
use std::collections::{BTreeMap, BTreeSet};

const ENUMERATION_LIMIT: usize = 16;

/// Enumerates every matching of the instance and keeps the stable ones.
/// Exponential: refuses instances with more than 16 agents.
pub fn enumerate_stable_matchings(
    inst: &MatchingInstance,
    ranking: &ProviderRanking,
) -> Result<Vec<Matching>, VerifyError> {
    if inst.n() > ENUMERATION_LIMIT {
        return Err(VerifyError::TooLarge(inst.n()));
    }
    let clients: Vec<&crate::instance::Client> = inst.clients().iter().collect();
    let mut stable = Vec::new();
    let mut assignment: BTreeMap<ClientId, ProviderId> = BTreeMap::new();
    let mut used: BTreeSet<ProviderId> = BTreeSet::new();

    fn recurse(
        inst: &MatchingInstance,
        ranking: &ProviderRanking,
        clients: &[&crate::instance::Client],
        idx: usize,
        assignment: &mut BTreeMap<ClientId, ProviderId>,
        used: &mut BTreeSet<ProviderId>,
        stable: &mut Vec<Matching>,
    ) -> Result<(), VerifyError> {
        if idx == clients.len() {
            let matching = Matching::new(assignment.clone());
            if find_blocking_pairs(inst, &matching, ranking)?.is_stable() {
                stable.push(matching);
            }
            return Ok(());
        }
        let client = clients[idx];
        // Unmatched branch first, then each free neighbor.
        recurse(inst, ranking, clients, idx + 1, assignment, used, stable)?;
        for &p in &client.prefs {
            if used.insert(p) {
                assignment.insert(client.id, p);
                recurse(inst, ranking, clients, idx + 1, assignment, used, stable)?;
                assignment.remove(&client.id);
                used.remove(&p);
            }
        }
        Ok(())
    }

    recurse(
        inst,
        ranking,
        &clients,
        0,
        &mut assignment,
        &mut used,
        &mut stable,
    )?;
    Ok(stable)
}

/// The sequential greedy oracle for common preferences: process clients in
/// ascending composed order (ties are between clients with disjoint
/// neighborhoods, so their relative order is irrelevant) and match each to
/// its most preferred provider not taken by an earlier client.
pub fn serial_dictatorship(inst: &MatchingInstance, tiebreak: &TieBreak) -> Matching {
    let mut order: Vec<&crate::instance::Client> = inst.clients().iter().collect();
    order.sort_by_key(|c| (tiebreak.composed[&c.id], c.id));
    let mut taken: BTreeSet<ProviderId> = BTreeSet::new();
    let mut pairs = BTreeMap::new();
    for client in order {
        if let Some(&p) = client.prefs.iter().find(|p| !taken.contains(p)) {
            taken.insert(p);
            pairs.insert(client.id, p);
        }
    }
    Matching::new(pairs)
}

/// The sequential greedy oracle for the fractional variant: clients in
/// composed order split their load over remaining capacities in preference
/// order.
pub fn greedy_fractional(
    inst: &MatchingInstance,
    tiebreak: &TieBreak,
) -> Result<FractionalMatching, MatchingError> {
    let mut remaining: BTreeMap<ProviderId, Ratio> = BTreeMap::new();
    for provider in inst.providers() {
        let capacity = provider.capacity.clone().ok_or_else(|| {
            MatchingError::MissingLoads(format!("provider {} has no capacity", provider.id))
        })?;
        remaining.insert(provider.id, capacity);
    }
    let mut order: Vec<&crate::instance::Client> = inst.clients().iter().collect();
    order.sort_by_key(|c| (tiebreak.composed[&c.id], c.id));
    let mut edges = BTreeMap::new();
    for client in order {
        let mut left = client.load.clone().ok_or_else(|| {
            MatchingError::MissingLoads(format!("client {} has no load", client.id))
        })?;
        for &p in &client.prefs {
            let cap = remaining[&p].clone();
            let share = cap.clone().min(left.clone());
            if !share.is_zero() {
                remaining.insert(p, cap - &share);
                left -= &share;
                edges.insert((client.id, p), share);
            }
        }
    }
    Ok(FractionalMatching::new(edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_lowerbound_path;

    #[test]
    fn one_by_one_has_exactly_the_edge() {
        let inst = MatchingInstance::new(
            vec![crate::instance::Client {
                id: ClientId(1),
                prefs: vec![ProviderId(2)],
                score: 1,
                load: None,
            }],
            vec![crate::instance::Provider {
                id: ProviderId(2),
                capacity: None,
                prefs: None,
            }],
            1,
        );
        let ranking = ProviderRanking::from_instance(&inst).unwrap();
        let all = enumerate_stable_matchings(&inst, &ranking).unwrap();
        assert_eq!(all.len(), 1);
        assert!(all[0].contains(ClientId(1), ProviderId(2)));
    }

    #[test]
    fn lowerbound_path_has_unique_edge_disjoint_stable_matchings() {
        for k in 2..=5 {
            let base = generate_lowerbound_path(k, false);
            let flipped = generate_lowerbound_path(k, true);
            let base_set = enumerate_stable_matchings(
                &base,
                &ProviderRanking::from_instance(&base).unwrap(),
            )
            .unwrap();
            let flip_set = enumerate_stable_matchings(
                &flipped,
                &ProviderRanking::from_instance(&flipped).unwrap(),
            )
            .unwrap();
            assert_eq!(base_set.len(), 1, "k={k}: base not unique");
            assert_eq!(flip_set.len(), 1, "k={k}: flipped not unique");
            let shared = base_set[0]
                .pairs()
                .iter()
                .filter(|(c, p)| flip_set[0].contains(**c, **p))
                .count();
            assert_eq!(shared, 0, "k={k}: stable matchings share an edge");
        }
    }

    #[test]
    fn enumeration_refuses_large_instances() {
        let inst = crate::instance::generate_random(0, 10, 10, 2, 1).unwrap();
        let ranking = ProviderRanking::from_instance(&inst).unwrap();
        assert!(matches!(
            enumerate_stable_matchings(&inst, &ranking),
            Err(VerifyError::TooLarge(20))
        ));
    }
}
