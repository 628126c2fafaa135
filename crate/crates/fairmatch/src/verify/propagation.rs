//! Round-propagation measurement on the lower-bound path family.
//!
//! The two instances of `generate_lowerbound_path(k, _)` differ only in one
//! end client's preferences yet have edge-disjoint unique stable matchings,
//! so the far end of the path must learn about the flip: classic deferred
//! acceptance needs a displacement cascade across the whole path, and the
//! measured rounds grow linearly in `k`.

use super::VerifyError;
use crate::instance::{generate_lowerbound_path, ClientId};
use crate::matching::run_classic_da;

#[derive(Clone, Debug)]
pub struct PropagationRow {
    pub k: usize,
    pub rounds_base: u64,
    pub rounds_flipped: u64,
    /// Max of the two runs; the flipped instance carries the cascade.
    pub rounds: u64,
    /// Clients whose match differs between the two runs.
    pub clients_matched_differently: usize,
    /// The client farthest from the flipped agent ends up elsewhere.
    pub far_end_differs: bool,
}

/// Runs classic deferred acceptance on both flip values for each `k`.
pub fn measure_propagation(k_values: &[usize]) -> Result<Vec<PropagationRow>, VerifyError> {
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let base = run_classic_da(&generate_lowerbound_path(k, false), None)?;
        let flipped = run_classic_da(&generate_lowerbound_path(k, true), None)?;
        let clients_matched_differently = (1..=k as u64)
            .filter(|&c| {
                base.matching.provider_of(ClientId(c)) != flipped.matching.provider_of(ClientId(c))
            })
            .count();
        let far = ClientId(k as u64);
        rows.push(PropagationRow {
            k,
            rounds_base: base.trace.rounds_used,
            rounds_flipped: flipped.trace.rounds_used,
            rounds: base.trace.rounds_used.max(flipped.trace.rounds_used),
            clients_matched_differently,
            far_end_differs: base.matching.provider_of(far) != flipped.matching.provider_of(far),
        });
    }
    Ok(rows)
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let var: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn far_end_differs_for_small_k() {
        let rows = measure_propagation(&[2, 3]).unwrap();
        for row in &rows {
            assert!(row.far_end_differs, "k={}", row.k);
            assert_eq!(row.clients_matched_differently, row.k);
        }
    }

    #[test]
    fn rounds_grow_with_k() {
        let ks: Vec<usize> = (2..=10).collect();
        let rows = measure_propagation(&ks).unwrap();
        for pair in rows.windows(2) {
            assert!(pair[1].rounds >= pair[0].rounds, "not monotone");
        }
        let points: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.k as f64, r.rounds as f64))
            .collect();
        assert!(least_squares_slope(&points) > 0.0);
    }

    #[test]
    fn slope_formula() {
        let points = [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)];
        assert!((least_squares_slope(&points) - 2.0).abs() < 1e-12);
    }
}
