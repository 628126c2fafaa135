//! Almost-uniform sampling of proper colorings.
//!
//! Starting from any proper coloring, each round every node samples a fresh
//! color `phi'(v)` uniformly from the palette, exchanges the pair
//! `(phi(v), phi'(v))` with its neighbors, and adopts `phi'(v)` iff no
//! neighbor's pair contains it. With palette `q > 2Δ` the chain mixes to
//! within total variation `δ` of the uniform distribution over proper
//! colorings in `O(log(n/δ))` rounds; the round count used here is
//! `ceil(KAPPA * ln(n/δ))` with `KAPPA` fixed below.

use super::{Coloring, ConflictGraph, TieBreakError};
use crate::engine::{
    self, tag, InMsg, InitOutcome, NodeCtx, NodeProgram, Payload, ProgramFault, StepOutcome, Tape,
    TraceMode,
};
use crate::instance::ClientId;
use crate::rational::Ratio;
use std::collections::BTreeMap;

/// Multiplier in the round count `ceil(KAPPA * ln(n/δ))`.
pub const KAPPA: u64 = 20;

/// Palette size and round budget for the sampler.
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub alpha: Ratio,
    pub delta: Ratio,
    /// Palette size, `max(ceil(alpha * Δ), 2Δ + 1)`.
    pub q: u64,
    /// Number of resampling rounds.
    pub rounds: u64,
}

impl SamplerConfig {
    /// Derives the palette from `alpha > 2` and the round count from the
    /// target total variation distance `delta` in `(0, 1)`.
    pub fn new(
        alpha: Ratio,
        delta: Ratio,
        delta_h: usize,
        n: usize,
    ) -> Result<SamplerConfig, TieBreakError> {
        if alpha <= Ratio::int(2) {
            return Err(TieBreakError::InvalidParameter(
                "sampler needs alpha > 2".into(),
            ));
        }
        if !delta.is_positive() || delta >= Ratio::one() {
            return Err(TieBreakError::InvalidParameter(
                "sampler needs 0 < delta < 1".into(),
            ));
        }
        let d = delta_h as u64;
        let q = (alpha.clone() * Ratio::int(delta_h as i64))
            .ceil_u64()
            .max(2 * d + 1)
            .max(1);
        let ratio = (n.max(1) as f64) / delta.to_f64();
        let rounds = ((KAPPA as f64) * ratio.ln()).ceil().max(1.0) as u64;
        Ok(SamplerConfig {
            alpha,
            delta,
            q,
            rounds,
        })
    }

    pub fn with_q(mut self, q: u64) -> SamplerConfig {
        self.q = q;
        self
    }

    pub fn with_rounds(mut self, rounds: u64) -> SamplerConfig {
        self.rounds = rounds;
        self
    }
}

/// Greedy proper coloring by ascending identifier: each client takes the
/// smallest palette color unused by its already-colored conflict neighbors.
/// Succeeds whenever `palette > Δ`.
pub fn greedy_coloring_by_id(graph: &ConflictGraph, palette: u64) -> BTreeMap<ClientId, u64> {
    let mut phi: BTreeMap<ClientId, u64> = BTreeMap::new();
    for &client in graph.nodes() {
        let used: Vec<u64> = graph
            .neighbors(client)
            .iter()
            .filter_map(|n| phi.get(n).copied())
            .collect();
        let color = (1..=palette)
            .find(|c| !used.contains(c))
            .expect("palette larger than degree");
        phi.insert(client, color);
    }
    phi
}

struct ResampleProgram {
    q: u64,
    rounds: u64,
}

struct ResampleState {
    color: u64,
    proposed: u64,
}

impl NodeProgram for ResampleProgram {
    type Input = u64; // initial color
    type State = ResampleState;
    type Output = u64;

    fn init(
        &self,
        _ctx: &NodeCtx<'_>,
        input: &u64,
        _tape: &mut Tape,
    ) -> Result<InitOutcome<ResampleState>, ProgramFault> {
        Ok(InitOutcome {
            state: ResampleState {
                color: *input,
                proposed: 0,
            },
            halted: false,
        })
    }

    fn step(
        &self,
        ctx: &NodeCtx<'_>,
        round: u64,
        state: &mut ResampleState,
        inbox: &[InMsg],
        tape: &mut Tape,
    ) -> Result<StepOutcome, ProgramFault> {
        if round > 1 {
            // Decide the previous round's resample.
            let mut blocked = false;
            for msg in inbox {
                if msg.payload.tag != tag::COLOR_PAIR {
                    return Err(ProgramFault::new(ctx.id, "unexpected message"));
                }
                let old = msg.payload.int(0).unwrap_or(-1);
                let new = msg.payload.int(1).unwrap_or(-1);
                if old == state.proposed as i64 || new == state.proposed as i64 {
                    blocked = true;
                }
            }
            if !blocked {
                state.color = state.proposed;
            }
        }
        if round > self.rounds {
            return Ok(StepOutcome {
                outbox: Vec::new(),
                halted: true,
            });
        }
        state.proposed = tape.pick_1_to(self.q);
        let outbox = (0..ctx.neighbors.len())
            .map(|port| {
                (
                    port,
                    Payload::ints(
                        tag::COLOR_PAIR,
                        &[state.color as i64, state.proposed as i64],
                    ),
                )
            })
            .collect();
        Ok(StepOutcome {
            outbox,
            halted: false,
        })
    }

    fn output(&self, _ctx: &NodeCtx<'_>, state: &ResampleState) -> u64 {
        state.color
    }
}

/// Runs exactly `config.rounds` resampling rounds from the greedy initial
/// coloring. The output is proper after every round by the keep-rule.
pub fn sample_uniform_coloring(
    graph: &ConflictGraph,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Coloring, TieBreakError> {
    if config.q < 2 * graph.delta_h() as u64 + 1 {
        return Err(TieBreakError::InvalidParameter(format!(
            "sampler palette {} must exceed twice the conflict degree {}",
            config.q,
            graph.delta_h()
        )));
    }
    if config.rounds == 0 {
        return Err(TieBreakError::InvalidParameter(
            "sampler needs at least one round".into(),
        ));
    }
    if graph.is_empty() {
        return Ok(Coloring {
            phi: Default::default(),
            palette: config.q,
            fair_set: Default::default(),
            failed_set: Default::default(),
            traces: Vec::new(),
        });
    }
    let initial = greedy_coloring_by_id(graph, config.q);
    let network = graph.network();
    let inputs = initial
        .iter()
        .map(|(&c, &color)| (engine::NodeId(c.0), color))
        .collect();
    let program = ResampleProgram {
        q: config.q,
        rounds: config.rounds,
    };
    let result = engine::run(
        &network,
        &program,
        &inputs,
        seed,
        config.rounds + 2,
        TraceMode::Summary,
    )?;
    let phi: BTreeMap<ClientId, u64> = result
        .outputs
        .into_iter()
        .map(|(node, color)| (ClientId(node.0), color))
        .collect();
    // All clients get the almost-uniform guarantee.
    let fair_set = phi.keys().copied().collect();
    Ok(Coloring {
        phi,
        palette: config.q,
        fair_set,
        failed_set: Default::default(),
        traces: vec![result.trace],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derive_seed;

    fn triangle() -> ConflictGraph {
        ConflictGraph::from_edges(
            &[ClientId(1), ClientId(2), ClientId(3)],
            &[
                (ClientId(1), ClientId(2)),
                (ClientId(2), ClientId(3)),
                (ClientId(1), ClientId(3)),
            ],
        )
    }

    #[test]
    fn config_palette_and_rounds() {
        let config = SamplerConfig::new(Ratio::new(7, 2), Ratio::new(1, 20), 2, 3).unwrap();
        assert_eq!(config.q, 7);
        // ceil(20 * ln(3 / 0.05)) = ceil(20 * ln 60) = 82.
        assert_eq!(config.rounds, 82);
        assert!(SamplerConfig::new(Ratio::int(2), Ratio::new(1, 20), 2, 3).is_err());
        assert!(SamplerConfig::new(Ratio::int(3), Ratio::int(1), 2, 3).is_err());
    }

    #[test]
    fn greedy_by_id_is_proper() {
        let graph = triangle();
        let phi = greedy_coloring_by_id(&graph, 3);
        assert!(graph.properness_violation(&phi).is_none());
        assert_eq!(phi[&ClientId(1)], 1);
        assert_eq!(phi[&ClientId(2)], 2);
        assert_eq!(phi[&ClientId(3)], 3);
    }

    #[test]
    fn output_is_always_proper() {
        let graph = triangle();
        let config = SamplerConfig::new(Ratio::new(7, 2), Ratio::new(1, 20), 2, 3)
            .unwrap()
            .with_rounds(11);
        for seed in 0..100 {
            let coloring = sample_uniform_coloring(&graph, &config, seed).unwrap();
            assert!(graph.properness_violation(&coloring.phi).is_none());
            assert!(coloring.phi.values().all(|&c| (1..=7).contains(&c)));
        }
    }

    #[test]
    fn resampling_rounds_are_counted_exactly() {
        let graph = triangle();
        let config = SamplerConfig::new(Ratio::new(7, 2), Ratio::new(1, 20), 2, 3)
            .unwrap()
            .with_rounds(17);
        let coloring = sample_uniform_coloring(&graph, &config, 5).unwrap();
        assert_eq!(coloring.rounds_used(), 17);
    }

    #[test]
    fn edgeless_nodes_resample_uniformly() {
        // Three isolated nodes, q = 3, one round: each color uniform on
        // {1,2,3} since no proposal can ever be blocked.
        let graph = ConflictGraph::from_edges(&[ClientId(1), ClientId(2), ClientId(3)], &[]);
        let config = SamplerConfig {
            alpha: Ratio::int(3),
            delta: Ratio::new(1, 20),
            q: 3,
            rounds: 1,
        };
        let mut counts = [0u64; 3];
        let samples = 3000;
        for i in 0..samples {
            let coloring = sample_uniform_coloring(&graph, &config, derive_seed(9, i)).unwrap();
            counts[(coloring.phi[&ClientId(2)] - 1) as usize] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / samples as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.05, "counts {counts:?}");
        }
    }
}
