//! Incentive-compatibility testing.
//!
//! A client's strategy space is every permutation of its true neighborhood;
//! the tie-break is held fixed across all runs (it depends only on the
//! conflict graph, the identifiers and the seed, none of which a report can
//! move). Integral outcomes are compared by the matched provider's position
//! in the client's true order, with unmatched ranked worst; fractional
//! outcomes by prefix dominance over the true order.

use super::VerifyError;
use crate::instance::{instance_hash, Client, ClientId, MatchingInstance, Provider, ProviderId};
use crate::matching::{run_classic_da, run_common_da, run_fractional_da};
use crate::rational::Ratio;
use crate::tiebreak::{build_conflict_graph, color_deterministic, color_luby_trial,
    color_with_failures, TieBreak};
use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

/// Which proposal algorithm the deviation harness drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcRunner {
    Common,
    Fractional,
}

/// Outcome of one run from the reporting client's perspective, always
/// expressed against its true preference order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IcOutcome {
    /// Position of the match in the true order, `deg + 1` when unmatched.
    Rank(u64),
    /// Load received from each provider, in true preference order.
    Loads(Vec<Ratio>),
}

/// Result of testing one client against its full deviation space.
#[derive(Clone, Debug)]
pub struct DeviationResult {
    pub client: ClientId,
    pub truthful: IcOutcome,
    /// For integral runs, the best outcome any deviation achieved. For
    /// fractional runs, a witness outcome that truth fails to prefix-dominate
    /// (equal to the truthful outcome when none exists).
    pub best_deviation: IcOutcome,
    /// The report achieving `best_deviation`, when it differs from truth.
    pub best_report: Option<Vec<ProviderId>>,
    /// Truth weakly preferred to every deviation.
    pub truthful_optimal: bool,
    pub deviations: usize,
}

/// True iff every preference-prefix sum under `truth` is at least the same
/// prefix sum under `other` (both indexed by the true preference order).
pub fn prefix_dominance(truth: &[Ratio], other: &[Ratio]) -> bool {
    assert_eq!(truth.len(), other.len());
    let mut truth_sum = Ratio::zero();
    let mut other_sum = Ratio::zero();
    for (t, o) in truth.iter().zip(other) {
        truth_sum += t;
        other_sum += o;
        if truth_sum < other_sum {
            return false;
        }
    }
    true
}

fn integral_rank(true_prefs: &[ProviderId], matched: Option<ProviderId>) -> u64 {
    match matched {
        Some(p) => true_prefs.iter().position(|&x| x == p).expect("match is a neighbor") as u64 + 1,
        None => true_prefs.len() as u64 + 1,
    }
}

fn run_outcome(
    inst: &MatchingInstance,
    runner: IcRunner,
    client: ClientId,
    true_prefs: &[ProviderId],
    tiebreak: &TieBreak,
) -> Result<IcOutcome, VerifyError> {
    match runner {
        IcRunner::Common => {
            let run = run_common_da(inst, tiebreak)?;
            Ok(IcOutcome::Rank(integral_rank(
                true_prefs,
                run.matching.provider_of(client),
            )))
        }
        IcRunner::Fractional => {
            let run = run_fractional_da(inst, tiebreak)?;
            let loads = true_prefs
                .iter()
                .map(|&p| run.matching.amount(client, p))
                .collect();
            Ok(IcOutcome::Loads(loads))
        }
    }
}

/// Runs the mechanism once truthfully and once per alternative report of
/// `client`, holding the tie-break fixed, and checks that truth is weakly
/// preferred every time.
pub fn test_incentive_compatibility(
    inst: &MatchingInstance,
    runner: IcRunner,
    client: ClientId,
    tiebreak: &TieBreak,
) -> Result<DeviationResult, VerifyError> {
    let true_prefs = inst
        .client(client)
        .ok_or_else(|| VerifyError::BadInput(format!("unknown client {client}")))?
        .prefs
        .clone();
    if true_prefs.len() > 6 {
        return Err(VerifyError::BadInput(format!(
            "degree {} too large for the factorial deviation space",
            true_prefs.len()
        )));
    }
    let truthful = run_outcome(inst, runner, client, &true_prefs, tiebreak)?;
    let mut best_deviation = truthful.clone();
    let mut best_report = None;
    let mut truthful_optimal = true;
    let mut deviations = 0;

    for report in true_prefs.iter().copied().permutations(true_prefs.len()) {
        if report == true_prefs {
            continue;
        }
        deviations += 1;
        let deviated = inst.with_client_report(client, report.clone());
        let outcome = run_outcome(&deviated, runner, client, &true_prefs, tiebreak)?;
        match (&truthful, &outcome, &mut best_deviation) {
            (IcOutcome::Rank(t), IcOutcome::Rank(d), IcOutcome::Rank(best)) => {
                if *d < *best {
                    *best = *d;
                    best_report = Some(report);
                }
                if *d < *t {
                    truthful_optimal = false;
                }
            }
            (IcOutcome::Loads(t), IcOutcome::Loads(d), _) => {
                if !prefix_dominance(t, d) && truthful_optimal {
                    truthful_optimal = false;
                    best_deviation = outcome.clone();
                    best_report = Some(report);
                }
            }
            _ => unreachable!("outcome kinds are fixed by the runner"),
        }
    }
    Ok(DeviationResult {
        client,
        truthful,
        best_deviation,
        best_report,
        truthful_optimal,
        deviations,
    })
}

/// A concrete profitable manipulation of the truncated baseline.
#[derive(Clone, Debug)]
pub struct TruncationWitness {
    pub instance: MatchingInstance,
    pub client: ClientId,
    pub truthful_rank: u64,
    pub deviation: Vec<ProviderId>,
    pub deviation_rank: u64,
}

/// Searches small two-client instances for a client that strictly improves
/// by misreporting when classic deferred acceptance is truncated after
/// `truncate_after` rounds. The returned witness has
/// `deviation_rank < truthful_rank`.
pub fn find_truncation_counterexample(truncate_after: u64) -> Option<TruncationWitness> {
    let p = [ProviderId(11), ProviderId(12)];
    let neighborhoods: Vec<Vec<ProviderId>> = vec![vec![p[0]], vec![p[1]], vec![p[0], p[1]]];
    for a_hood in &neighborhoods {
        for v_hood in &neighborhoods {
            let a_orders: Vec<Vec<ProviderId>> =
                a_hood.iter().copied().permutations(a_hood.len()).collect();
            let v_orders: Vec<Vec<ProviderId>> =
                v_hood.iter().copied().permutations(v_hood.len()).collect();
            for a_prefs in &a_orders {
                for v_prefs in &v_orders {
                    let build = |v_report: &[ProviderId]| {
                        MatchingInstance::new(
                            vec![
                                Client {
                                    id: ClientId(1),
                                    prefs: a_prefs.clone(),
                                    score: 1,
                                    load: None,
                                },
                                Client {
                                    id: ClientId(2),
                                    prefs: v_report.to_vec(),
                                    score: 1,
                                    load: None,
                                },
                            ],
                            p.iter()
                                .map(|&id| Provider {
                                    id,
                                    capacity: None,
                                    prefs: None,
                                })
                                .collect(),
                            1,
                        )
                    };
                    let truthful = run_classic_da(&build(v_prefs), Some(truncate_after))
                        .expect("small run");
                    let truthful_rank =
                        integral_rank(v_prefs, truthful.matching.provider_of(ClientId(2)));
                    for report in v_prefs.iter().copied().permutations(v_prefs.len()) {
                        if report == *v_prefs {
                            continue;
                        }
                        let deviated = run_classic_da(&build(&report), Some(truncate_after))
                            .expect("small run");
                        let deviation_rank =
                            integral_rank(v_prefs, deviated.matching.provider_of(ClientId(2)));
                        if deviation_rank < truthful_rank {
                            return Some(TruncationWitness {
                                instance: build(v_prefs),
                                client: ClientId(2),
                                truthful_rank,
                                deviation: report,
                                deviation_rank,
                            });
                        }
                    }
                }
            }
        }
    }
    None
}

/// Bounds of one exhaustive-style sweep over small instances.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub max_clients: usize,
    pub max_providers: usize,
    pub max_degree: usize,
    pub max_scores: u32,
    pub instances: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            max_clients: 4,
            max_providers: 4,
            max_degree: 3,
            max_scores: 3,
            instances: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Default)]
pub struct SweepStats {
    pub instances: usize,
    /// Number of (instance, tie-break, client) triples checked.
    pub cases: usize,
    /// Total deviation runs.
    pub runs: usize,
    pub counterexamples: Vec<String>,
}

fn sweep_instance(rng: &mut ChaCha8Rng, config: &SweepConfig, loads: bool) -> MatchingInstance {
    let n_c = rng.gen_range(1..=config.max_clients);
    let n_p = rng.gen_range(1..=config.max_providers);
    let s = rng.gen_range(1..=config.max_scores);
    let load_pool = [Ratio::one(), Ratio::int(2), Ratio::new(1, 2)];
    let providers: Vec<Provider> = (0..n_p)
        .map(|i| Provider {
            id: ProviderId(100 + i as u64),
            capacity: loads.then(|| load_pool[rng.gen_range(0..load_pool.len())].clone()),
            prefs: None,
        })
        .collect();
    let clients = (0..n_c)
        .map(|i| {
            let degree = rng.gen_range(1..=config.max_degree.min(n_p));
            let mut prefs: Vec<ProviderId> = rand::seq::index::sample(rng, n_p, degree)
                .into_iter()
                .map(|j| providers[j].id)
                .collect();
            prefs.shuffle(rng);
            Client {
                id: ClientId(1 + i as u64),
                prefs,
                score: rng.gen_range(1..=s),
                load: loads.then(|| load_pool[rng.gen_range(0..load_pool.len())].clone()),
            }
        })
        .collect();
    MatchingInstance::new(clients, providers, s)
}

fn sweep_tiebreaks(inst: &MatchingInstance, seed: u64) -> Vec<TieBreak> {
    let graph = build_conflict_graph(inst);
    let mut out = Vec::new();
    let colorings = [
        color_deterministic(&graph),
        color_luby_trial(&graph, seed),
        color_with_failures(&graph, &Ratio::new(1, 2), seed),
    ];
    for coloring in colorings.into_iter().flatten() {
        if let Ok(tb) = TieBreak::compose(inst, &coloring) {
            out.push(tb);
        }
    }
    out
}

fn sweep(
    runner: IcRunner,
    config: &SweepConfig,
    mut progress: Option<&mut dyn Write>,
) -> SweepStats {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = SweepStats::default();
    for index in 0..config.instances {
        let inst = sweep_instance(&mut rng, config, runner == IcRunner::Fractional);
        let hash = instance_hash(&inst);
        stats.instances += 1;
        for (tb_index, tiebreak) in sweep_tiebreaks(&inst, config.seed ^ index as u64)
            .iter()
            .enumerate()
        {
            for client in inst.clients() {
                stats.cases += 1;
                match test_incentive_compatibility(&inst, runner, client.id, tiebreak) {
                    Ok(result) => {
                        stats.runs += result.deviations + 1;
                        if !result.truthful_optimal {
                            stats.counterexamples.push(format!(
                                "instance {hash} tiebreak {tb_index} client {}: {:?} beaten by {:?} via {:?}",
                                client.id, result.truthful, result.best_deviation, result.best_report
                            ));
                        }
                    }
                    Err(err) => stats
                        .counterexamples
                        .push(format!("instance {hash} client {}: {err}", client.id)),
                }
            }
        }
        if let Some(w) = progress.as_deref_mut() {
            let _ = writeln!(w, "{index},{hash},ok");
        }
    }
    stats
}

/// Sweeps random small instances and every client deviation, checking the
/// integral rank criterion. Zero counterexamples expected.
pub fn ic_sweep_integral(config: &SweepConfig, progress: Option<&mut dyn Write>) -> SweepStats {
    sweep(IcRunner::Common, config, progress)
}

/// Same sweep for the fractional variant with loads and capacities drawn
/// from `{1, 2, 1/2}`, checking prefix dominance.
pub fn ic_sweep_fractional(config: &SweepConfig, progress: Option<&mut dyn Write>) -> SweepStats {
    sweep(IcRunner::Fractional, config, progress)
}
