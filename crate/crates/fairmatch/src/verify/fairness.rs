//! Fairness measurement for the randomized tie-breaking rules.
//!
//! The observable is the order a coloring induces inside each tie group: a
//! maximal set of same-score clients around one provider (such a set is a
//! clique of the conflict graph, so its members always receive distinct
//! colors). Frequencies over many seeded runs are compared to the uniform
//! distribution over the group's orders; the total variation distance uses
//! the convention `sum |mu - nu|` without the 1/2 factor, and the halved
//! conventional value is reported alongside.

use crate::derive_seed;
use crate::instance::{ClientId, MatchingInstance};
use crate::matching::{MatchingError, Strategy};
use crate::tiebreak::build_conflict_graph;
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

/// Maximal groups of mutually tied co-neighbors: for every provider, the
/// same-score subsets of its neighborhood with at least two members,
/// deduplicated across providers.
pub fn tie_groups(inst: &MatchingInstance) -> Vec<Vec<ClientId>> {
    let scores: BTreeMap<ClientId, u32> = inst.clients().iter().map(|c| (c.id, c.score)).collect();
    let mut seen: BTreeSet<Vec<ClientId>> = BTreeSet::new();
    for clients in inst.provider_neighbors().values() {
        let mut by_score: BTreeMap<u32, Vec<ClientId>> = BTreeMap::new();
        for &c in clients {
            by_score.entry(scores[&c]).or_default().push(c);
        }
        for group in by_score.into_values() {
            if group.len() >= 2 {
                seen.insert(group);
            }
        }
    }
    seen.into_iter().collect()
}

/// Statistics for one tie group over all counted samples.
#[derive(Clone, Debug)]
pub struct TieGroupStats {
    pub members: Vec<ClientId>,
    /// Samples in which the group was tallied (for the failures strategy,
    /// only samples with the whole group inside the fair set count).
    pub samples_counted: u64,
    pub order_counts: BTreeMap<Vec<ClientId>, u64>,
    /// Total variation distance to uniform over all `|members|!` orders,
    /// paper convention (no 1/2 factor).
    pub tv_paper: f64,
    /// The conventional halved total variation distance.
    pub tv_conventional: f64,
}

#[derive(Clone, Debug)]
pub struct FairnessReport {
    pub strategy: String,
    pub samples: u64,
    pub groups: Vec<TieGroupStats>,
    /// Per-client frequency of landing in the failed set X.
    pub failure_rates: BTreeMap<ClientId, f64>,
}

impl FairnessReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "strategy": self.strategy,
            "samples": self.samples,
            "groups": self.groups.iter().map(|g| json!({
                "members": g.members.iter().map(|c| c.0).collect::<Vec<_>>(),
                "samples_counted": g.samples_counted,
                "tv_paper": g.tv_paper,
                "tv_conventional": g.tv_conventional,
                "order_frequencies": g.order_counts.iter().map(|(order, count)| json!({
                    "order": order.iter().map(|c| c.0).collect::<Vec<_>>(),
                    "count": count,
                    "frequency": *count as f64 / g.samples_counted.max(1) as f64,
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "failure_rates": self.failure_rates.iter()
                .map(|(c, r)| (c.to_string(), json!(r)))
                .collect::<serde_json::Map<_, _>>(),
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "group,order,count,frequency")?;
        for g in &self.groups {
            let members = g
                .members
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("|");
            for (order, count) in &g.order_counts {
                let order = order
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join("|");
                writeln!(
                    out,
                    "{members},{order},{count},{}",
                    *count as f64 / g.samples_counted.max(1) as f64
                )?;
            }
        }
        Ok(())
    }
}

/// Half-width of the 99% Wilson score interval for a frequency estimate.
pub fn wilson_halfwidth(successes: u64, samples: u64) -> f64 {
    if samples == 0 {
        return 1.0;
    }
    let z = 2.5758293; // 99%
    let n = samples as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let spread = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    spread
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Runs conflict discovery once and the coloring `samples` times with
/// derived seeds, tallying the induced tie-break order in every tie group
/// and each client's failure frequency.
pub fn measure_tiebreak_fairness(
    inst: &MatchingInstance,
    strategy: &Strategy,
    samples: u64,
    seed: u64,
) -> Result<FairnessReport, MatchingError> {
    let graph = build_conflict_graph(inst);
    let groups = tie_groups(inst);
    let conditioned = matches!(strategy, Strategy::Failures { .. });

    let mut counted = vec![0u64; groups.len()];
    let mut order_counts: Vec<BTreeMap<Vec<ClientId>, u64>> =
        vec![BTreeMap::new(); groups.len()];
    let mut failures: BTreeMap<ClientId, u64> =
        inst.clients().iter().map(|c| (c.id, 0)).collect();

    for index in 0..samples {
        let coloring = strategy.run_coloring(&graph, derive_seed(seed, index), inst.n())?;
        for client in &coloring.failed_set {
            *failures.get_mut(client).expect("known client") += 1;
        }
        for (g, group) in groups.iter().enumerate() {
            if conditioned && !group.iter().all(|c| coloring.fair_set.contains(c)) {
                continue;
            }
            counted[g] += 1;
            let mut order = group.clone();
            order.sort_by_key(|c| coloring.phi[c]);
            *order_counts[g].entry(order).or_insert(0) += 1;
        }
    }

    let groups = groups
        .into_iter()
        .enumerate()
        .map(|(g, members)| {
            let total = counted[g];
            let orders = factorial(members.len());
            let uniform = 1.0 / orders;
            let observed: f64 = order_counts[g]
                .values()
                .map(|&count| (count as f64 / total.max(1) as f64 - uniform).abs())
                .sum();
            let unseen = (orders - order_counts[g].len() as f64) * uniform;
            let tv_paper = observed + unseen;
            TieGroupStats {
                members,
                samples_counted: total,
                order_counts: order_counts[g].clone(),
                tv_paper,
                tv_conventional: tv_paper / 2.0,
            }
        })
        .collect();

    let failure_rates = failures
        .into_iter()
        .map(|(c, count)| (c, count as f64 / samples.max(1) as f64))
        .collect();

    Ok(FairnessReport {
        strategy: strategy.to_string(),
        samples,
        groups,
        failure_rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Client, Provider, ProviderId};
    use crate::rational::Ratio;

    fn tied_pair() -> MatchingInstance {
        MatchingInstance::new(
            vec![
                Client {
                    id: ClientId(1),
                    prefs: vec![ProviderId(10)],
                    score: 1,
                    load: None,
                },
                Client {
                    id: ClientId(2),
                    prefs: vec![ProviderId(10)],
                    score: 1,
                    load: None,
                },
            ],
            vec![Provider {
                id: ProviderId(10),
                capacity: None,
                prefs: None,
            }],
            1,
        )
    }

    #[test]
    fn tie_groups_are_per_provider_score_classes() {
        let groups = tie_groups(&tied_pair());
        assert_eq!(groups, vec![vec![ClientId(1), ClientId(2)]]);
    }

    #[test]
    fn deterministic_tiebreak_has_tv_one_on_a_pair() {
        // A degenerate distribution on one of two orders:
        // |1 - 1/2| + |0 - 1/2| = 1 under the paper convention.
        let report =
            measure_tiebreak_fairness(&tied_pair(), &Strategy::Deterministic, 50, 3).unwrap();
        let group = &report.groups[0];
        assert_eq!(group.samples_counted, 50);
        assert!((group.tv_paper - 1.0).abs() < 1e-12);
        assert!((group.tv_conventional - 0.5).abs() < 1e-12);
    }

    #[test]
    fn failures_strategy_conditions_on_the_fair_set() {
        let strategy = Strategy::Failures {
            delta: Ratio::new(1, 2),
        };
        let report = measure_tiebreak_fairness(&tied_pair(), &strategy, 2000, 7).unwrap();
        let group = &report.groups[0];
        assert!(group.samples_counted < 2000, "conditioning must drop samples");
        // Conditioned split close to one half each.
        for count in group.order_counts.values() {
            let freq = *count as f64 / group.samples_counted as f64;
            assert!((freq - 0.5).abs() < 0.06, "freq {freq}");
        }
        // Failure frequency around 1/2 for both clients.
        for rate in report.failure_rates.values() {
            assert!((rate - 0.5).abs() < 0.06, "rate {rate}");
        }
    }

    #[test]
    fn wilson_halfwidth_shrinks_with_samples() {
        assert!(wilson_halfwidth(50, 100) > wilson_halfwidth(5000, 10000));
        assert!(wilson_halfwidth(5000, 10000) < 0.02);
    }
}
