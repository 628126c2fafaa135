//! Deterministic distributed `(Δ+1)`-coloring.
//!
//! Starting from the identifiers as a proper coloring, each reduction round
//! maps the current color to a degree-`k` polynomial over a prime field F_q
//! with `q > kΔ`, and every node picks an evaluation point where it differs
//! from all of its neighbors' polynomials; this shrinks the palette from `m`
//! to `q^2` per round until no choice of `k` makes progress (around
//! `(2Δ+1)^2` colors). A final sweep then retires one color class per round:
//! the nodes holding the highest remaining color simultaneously move to the
//! smallest color in `1..=Δ+1` unused in their neighborhood.
//!
//! The reduction schedule is a pure function of `(max id, Δ)`, so every node
//! derives the same one locally. Round counts are measured by the engine,
//! not asserted against any external bound.

use super::{Coloring, ConflictGraph, TieBreakError};
use crate::engine::{
    self, tag, InMsg, InitOutcome, NodeCtx, NodeProgram, Payload, ProgramFault, StepOutcome, Tape,
    TraceMode,
};
use crate::instance::ClientId;
use std::collections::BTreeMap;

/// Smallest prime `>= n` (for the field sizes used here, trial division is
/// plenty).
fn next_prime(n: u64) -> u64 {
    fn is_prime(x: u64) -> bool {
        if x < 2 {
            return false;
        }
        let mut d = 2;
        while d * d <= x {
            if x % d == 0 {
                return false;
            }
            d += 1;
        }
        true
    }
    let mut x = n.max(2);
    while !is_prime(x) {
        x += 1;
    }
    x
}

/// Smallest `r` with `r^k >= m`.
fn ceil_root(m: u64, k: u32) -> u64 {
    if m <= 1 {
        return 1;
    }
    let mut r = ((m as f64).powf(1.0 / k as f64).floor() as u64).max(1);
    while r > 1 && r.checked_pow(k).map_or(true, |p| p >= m) {
        r -= 1;
    }
    while r.checked_pow(k).map_or(false, |p| p < m) {
        r += 1;
    }
    r
}

/// One reduction step: the field size and the polynomial degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ReductionStep {
    q: u64,
    k: u64,
}

/// The full reduction schedule from palette `m0` with max degree `delta`.
fn reduction_schedule(m0: u64, delta: u64) -> Vec<ReductionStep> {
    let mut schedule = Vec::new();
    let mut m = m0;
    loop {
        let mut best: Option<ReductionStep> = None;
        for k in 1..=8u64 {
            let q = next_prime((k * delta + 1).max(ceil_root(m, k as u32 + 1)));
            if q.checked_mul(q).map_or(false, |sq| sq < m)
                && best.map_or(true, |b| q * q < b.q * b.q)
            {
                best = Some(ReductionStep { q, k });
            }
        }
        match best {
            Some(step) => {
                schedule.push(step);
                m = step.q * step.q;
            }
            None => return schedule,
        }
    }
}

/// Evaluates the polynomial encoding of `color` (1-based) at `x` over F_q.
fn poly_eval(color: u64, step: ReductionStep, x: u64) -> u64 {
    let q = step.q;
    let mut value = color - 1;
    let mut acc = 0u64;
    let mut power = 1u64;
    for _ in 0..=step.k {
        let digit = value % q;
        acc = (acc + digit * power) % q;
        value /= q;
        power = (power * x) % q;
    }
    acc
}

struct ReductionProgram {
    schedule: Vec<ReductionStep>,
    delta: u64,
    /// Palette size after the last reduction step.
    reduced_palette: u64,
}

struct ReductionState {
    color: u64,
    neighbor_colors: Vec<u64>,
    /// Set once the node has announced its final color.
    done_announced: bool,
}

impl ReductionProgram {
    fn target(&self) -> u64 {
        self.delta + 1
    }

    /// Engine round in which the sweep retires color class `class`.
    fn sweep_round(&self, class: u64) -> u64 {
        let linial_rounds = self.schedule.len() as u64;
        1 + linial_rounds + (self.reduced_palette - class) + 1
    }
}

impl NodeProgram for ReductionProgram {
    type Input = u64; // initial color (the identifier)
    type State = ReductionState;
    type Output = u64;

    fn init(
        &self,
        ctx: &NodeCtx<'_>,
        input: &u64,
        _tape: &mut Tape,
    ) -> Result<InitOutcome<ReductionState>, ProgramFault> {
        let state = ReductionState {
            color: *input,
            neighbor_colors: vec![0; ctx.neighbors.len()],
            done_announced: false,
        };
        // No conflict partners: color 1 is always safe.
        if ctx.neighbors.is_empty() {
            return Ok(InitOutcome {
                state: ReductionState {
                    color: 1,
                    ..state
                },
                halted: true,
            });
        }
        Ok(InitOutcome {
            state,
            halted: false,
        })
    }

    fn step(
        &self,
        ctx: &NodeCtx<'_>,
        round: u64,
        state: &mut ReductionState,
        inbox: &[InMsg],
        tape: &mut Tape,
    ) -> Result<StepOutcome, ProgramFault> {
        let _ = tape;
        for msg in inbox {
            state.neighbor_colors[msg.port] = msg
                .payload
                .int(0)
                .ok_or_else(|| ProgramFault::new(ctx.id, "malformed color message"))?
                as u64;
        }
        let linial_rounds = self.schedule.len() as u64;
        let broadcast = |color: u64| -> Vec<(usize, Payload)> {
            (0..ctx.neighbors.len())
                .map(|port| (port, Payload::ints(tag::COLOR, &[color as i64])))
                .collect()
        };

        if round == 1 {
            // Announce the initial coloring (the identifiers).
            return Ok(StepOutcome {
                outbox: broadcast(state.color),
                halted: false,
            });
        }
        if round <= 1 + linial_rounds {
            let step = self.schedule[(round - 2) as usize];
            let mine = state.color;
            let x = (0..step.q)
                .find(|&x| {
                    state
                        .neighbor_colors
                        .iter()
                        .all(|&nc| poly_eval(nc, step, x) != poly_eval(mine, step, x))
                })
                .ok_or_else(|| {
                    ProgramFault::new(ctx.id, "no free evaluation point in color reduction")
                })?;
            state.color = x * step.q + poly_eval(mine, step, x) + 1;
            return Ok(StepOutcome {
                outbox: broadcast(state.color),
                halted: false,
            });
        }
        // Sweep phase. Nodes already inside the target palette stop; the
        // others wait for their class's round, pick the smallest free target
        // color, announce it once and stop.
        if state.color <= self.target() {
            return Ok(StepOutcome {
                outbox: Vec::new(),
                halted: true,
            });
        }
        if round == self.sweep_round(state.color) {
            debug_assert!(!state.done_announced);
            let free = (1..=self.target())
                .find(|c| !state.neighbor_colors.contains(c))
                .ok_or_else(|| ProgramFault::new(ctx.id, "no free color in target palette"))?;
            state.color = free;
            state.done_announced = true;
            return Ok(StepOutcome {
                outbox: broadcast(free),
                halted: true,
            });
        }
        Ok(StepOutcome::default())
    }

    fn output(&self, _ctx: &NodeCtx<'_>, state: &ReductionState) -> u64 {
        state.color
    }
}

/// Colors the conflict graph with `Δ_H + 1` colors as a node program on the
/// engine. Deterministic: depends only on the graph and the identifiers.
pub fn color_deterministic(graph: &ConflictGraph) -> Result<Coloring, TieBreakError> {
    color_deterministic_with_target(graph, graph.delta_h() as u64)
}

/// Same, with an explicit degree bound (the failures routine recolors an
/// induced subgraph but keeps the full graph's palette `Δ_H + 1`).
pub(super) fn color_deterministic_with_target(
    graph: &ConflictGraph,
    delta: u64,
) -> Result<Coloring, TieBreakError> {
    let palette = delta + 1;
    if graph.is_empty() {
        return Ok(Coloring {
            phi: BTreeMap::new(),
            palette,
            fair_set: Default::default(),
            failed_set: Default::default(),
            traces: Vec::new(),
        });
    }
    let max_id = graph.nodes().iter().map(|c| c.0).max().unwrap();
    if max_id <= palette {
        // Identifiers are already a proper coloring inside the palette.
        let phi = graph.nodes().iter().map(|&c| (c, c.0)).collect();
        return Ok(Coloring {
            phi,
            palette,
            fair_set: Default::default(),
            failed_set: Default::default(),
            traces: Vec::new(),
        });
    }
    let schedule = reduction_schedule(max_id, delta);
    let reduced_palette = schedule.last().map(|s| s.q * s.q).unwrap_or(max_id);
    let program = ReductionProgram {
        schedule,
        delta,
        reduced_palette,
    };
    let round_limit = 2 + program.schedule.len() as u64 + reduced_palette.saturating_sub(palette) + 4;
    let network = graph.network();
    let inputs = graph.nodes().iter().map(|&c| (engine::NodeId(c.0), c.0)).collect();
    let result = engine::run(&network, &program, &inputs, 0, round_limit, TraceMode::Full)?;
    let phi = result
        .outputs
        .into_iter()
        .map(|(n, color)| (ClientId(n.0), color))
        .collect();
    Ok(Coloring {
        phi,
        palette,
        fair_set: Default::default(),
        failed_set: Default::default(),
        traces: vec![result.trace],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_random;
    use crate::tiebreak::build_conflict_graph;

    #[test]
    fn primes_and_roots() {
        assert_eq!(next_prime(1), 2);
        assert_eq!(next_prime(8), 11);
        assert_eq!(next_prime(11), 11);
        assert_eq!(ceil_root(27, 3), 3);
        assert_eq!(ceil_root(28, 3), 4);
        assert_eq!(ceil_root(1_000_000, 2), 1000);
    }

    #[test]
    fn schedule_always_makes_progress() {
        for (m0, delta) in [(1_000_000, 3), (27_000_000, 40), (1000, 1), (50, 4)] {
            let schedule = reduction_schedule(m0, delta);
            let mut m = m0;
            for step in &schedule {
                assert!(step.q > step.k * delta);
                assert!(step.q * step.q < m, "no progress at {step:?}");
                m = step.q * step.q;
            }
        }
    }

    #[test]
    fn poly_encoding_is_injective_on_colors() {
        let step = ReductionStep { q: 7, k: 2 };
        // Distinct colors below q^(k+1) give distinct polynomials, which can
        // agree on at most k points.
        for a in 1..=300u64 {
            for b in (a + 1)..=300 {
                let agreements = (0..step.q)
                    .filter(|&x| poly_eval(a, step, x) == poly_eval(b, step, x))
                    .count() as u64;
                assert!(agreements <= step.k, "colors {a},{b} agree too often");
            }
        }
    }

    #[test]
    fn edgeless_graph_gets_color_one() {
        let inst = generate_random(3, 4, 4, 1, 4).unwrap();
        let graph = build_conflict_graph(&inst);
        if graph.delta_h() == 0 {
            let coloring = color_deterministic(&graph).unwrap();
            assert_eq!(coloring.palette, 1);
            assert!(coloring.phi.values().all(|&c| c == 1));
        }
    }

    #[test]
    fn single_edge_gets_two_distinct_colors() {
        let graph = ConflictGraph::from_edges(
            &[ClientId(17), ClientId(40)],
            &[(ClientId(17), ClientId(40))],
        );
        let coloring = color_deterministic(&graph).unwrap();
        assert_eq!(coloring.palette, 2);
        let a = coloring.phi[&ClientId(17)];
        let b = coloring.phi[&ClientId(40)];
        assert!(a != b && a <= 2 && b <= 2);
    }

    #[test]
    fn random_instance_coloring_is_proper() {
        let inst = generate_random(7, 50, 20, 3, 4).unwrap();
        let graph = build_conflict_graph(&inst);
        let coloring = color_deterministic(&graph).unwrap();
        assert_eq!(coloring.palette, graph.delta_h() as u64 + 1);
        assert!(graph.properness_violation(&coloring.phi).is_none());
        assert!(coloring
            .phi
            .values()
            .all(|&c| c >= 1 && c <= coloring.palette));
    }
}
