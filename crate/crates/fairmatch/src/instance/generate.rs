//! Instance generators: seeded random instances, the adversarial
//! lower-bound path family, and a tied-blocks family for benchmarks.
//!
//! All randomness is drawn from ChaCha8 seeded explicitly, so every
//! generator is reproducible bit-for-bit from its arguments.

use super::{Client, ClientId, MatchingInstance, Provider, ProviderId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(b"fm-gen\0\0");
    ChaCha8Rng::from_seed(key)
}

/// Draws `count` distinct identifiers from `1..=space`.
fn draw_ids(rng: &mut ChaCha8Rng, count: usize, space: u64) -> Vec<u64> {
    assert!(space >= count as u64);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let id = rng.gen_range(1..=space);
        if seen.insert(id) {
            out.push(id);
        }
    }
    out
}

/// Generates a random instance: every client is connected to exactly
/// `max_deg_c` distinct uniformly chosen providers, its preference order is a
/// uniform permutation of those, and its score is uniform over `1..=s_classes`.
/// Identifiers are drawn from `1..=n^3` where `n = n_c + n_p`.
pub fn generate_random(
    seed: u64,
    n_c: usize,
    n_p: usize,
    max_deg_c: usize,
    s_classes: u32,
) -> Result<MatchingInstance, GenerateError> {
    if n_c == 0 || n_p == 0 {
        return Err(GenerateError::InvalidParameter(
            "need at least one client and one provider".into(),
        ));
    }
    if max_deg_c == 0 || max_deg_c > n_p {
        return Err(GenerateError::InvalidParameter(format!(
            "client degree {max_deg_c} must lie in 1..={n_p}"
        )));
    }
    if s_classes == 0 {
        return Err(GenerateError::InvalidParameter("S must be positive".into()));
    }
    let mut rng = rng_for(seed);
    let n = (n_c + n_p) as u64;
    let ids = draw_ids(&mut rng, n_c + n_p, n * n * n);
    let client_ids: Vec<ClientId> = ids[..n_c].iter().map(|&i| ClientId(i)).collect();
    let provider_ids: Vec<ProviderId> = ids[n_c..].iter().map(|&i| ProviderId(i)).collect();

    let clients = client_ids
        .iter()
        .map(|&id| {
            let mut picks = rand::seq::index::sample(&mut rng, n_p, max_deg_c).into_vec();
            picks.sort_unstable();
            let mut prefs: Vec<ProviderId> = picks.into_iter().map(|i| provider_ids[i]).collect();
            prefs.shuffle(&mut rng);
            let score = rng.gen_range(1..=s_classes);
            Client {
                id,
                prefs,
                score,
                load: None,
            }
        })
        .collect();
    let providers = provider_ids
        .into_iter()
        .map(|id| Provider {
            id,
            capacity: None,
            prefs: None,
        })
        .collect();
    Ok(MatchingInstance::new(clients, providers, s_classes))
}

/// Builds the path gadget behind the linear-round lower bound.
///
/// The graph is the path `p_0 - c_1 - p_1 - c_2 - ... - c_k - p_k` with `k`
/// clients and `k + 1` providers. All interior agents prefer their left
/// neighbor; `flip` toggles the preference of client `c_1`. Each of the two
/// instances has a unique stable matching (all clients matched left,
/// respectively right), and the two matchings are edge-disjoint, so the far
/// end of the path must learn the flipped preference.
///
/// Client ids are `1..=k` in path order; provider ids are `k+1..=2k+1`, with
/// provider `p_i` having id `k + 1 + i`.
pub fn generate_lowerbound_path(k: usize, flip: bool) -> MatchingInstance {
    assert!(k >= 2, "path gadget needs at least two clients");
    let client_id = |i: usize| ClientId(i as u64); // i in 1..=k
    let provider_id = |i: usize| ProviderId((k + 1 + i) as u64); // i in 0..=k

    let mut clients = Vec::with_capacity(k);
    for i in 1..=k {
        let left = provider_id(i - 1);
        let right = provider_id(i);
        let prefs = if i == 1 && flip {
            vec![right, left]
        } else {
            vec![left, right]
        };
        clients.push(Client {
            id: client_id(i),
            prefs,
            score: 1,
            load: None,
        });
    }
    let mut providers = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let prefs = if i == 0 {
            vec![client_id(1)]
        } else if i == k {
            vec![client_id(k)]
        } else {
            // Interior provider p_i prefers its left client c_i.
            vec![client_id(i), client_id(i + 1)]
        };
        providers.push(Provider {
            id: provider_id(i),
            capacity: None,
            prefs: Some(prefs),
        });
    }
    MatchingInstance::new(clients, providers, 1)
}

/// A family with constant conflict degree for round-versus-size benchmarks:
/// `n_blocks` disjoint blocks, each a complete bipartite graph between
/// `block_size` clients and `block_size` providers. All clients in a block
/// share one preference class, so each block's conflict graph is a clique of
/// size `block_size` and the conflict degree is `block_size - 1` regardless
/// of the total instance size.
pub fn generate_block_family(
    seed: u64,
    n_blocks: usize,
    block_size: usize,
    s_classes: u32,
) -> Result<MatchingInstance, GenerateError> {
    if n_blocks == 0 || block_size == 0 || s_classes == 0 {
        return Err(GenerateError::InvalidParameter(
            "blocks, block size and S must be positive".into(),
        ));
    }
    let mut rng = rng_for(seed);
    let mut clients = Vec::new();
    let mut providers = Vec::new();
    let mut next_id = 1u64;
    for b in 0..n_blocks {
        let provider_ids: Vec<ProviderId> = (0..block_size)
            .map(|j| ProviderId(next_id + (block_size + j) as u64))
            .collect();
        for _ in 0..block_size {
            let mut prefs = provider_ids.clone();
            prefs.shuffle(&mut rng);
            clients.push(Client {
                id: ClientId(next_id),
                prefs,
                score: (b as u32 % s_classes) + 1,
                load: None,
            });
            next_id += 1;
        }
        for id in provider_ids {
            providers.push(Provider {
                id,
                capacity: None,
                prefs: None,
            });
            next_id += 1;
        }
    }
    Ok(MatchingInstance::new(clients, providers, s_classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::instance_to_json;

    #[test]
    fn trivial_single_edge() {
        let inst = generate_random(1, 1, 1, 1, 1).unwrap();
        assert_eq!(inst.clients().len(), 1);
        assert_eq!(inst.providers().len(), 1);
        assert_eq!(inst.clients()[0].prefs.len(), 1);
        assert_eq!(inst.clients()[0].score, 1);
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_random(42, 20, 8, 3, 4).unwrap();
        let b = generate_random(42, 20, 8, 3, 4).unwrap();
        assert_eq!(instance_to_json(&a).unwrap(), instance_to_json(&b).unwrap());
        let c = generate_random(43, 20, 8, 3, 4).unwrap();
        assert_ne!(instance_to_json(&a).unwrap(), instance_to_json(&c).unwrap());
    }

    #[test]
    fn random_postconditions_hold() {
        let inst = generate_random(7, 50, 20, 3, 4).unwrap();
        assert!(inst.validate().is_empty());
        for c in inst.clients() {
            assert_eq!(c.prefs.len(), 3);
            assert!((1..=4).contains(&c.score));
        }
        let n = inst.n() as u64;
        for c in inst.clients() {
            assert!(c.id.0 >= 1 && c.id.0 <= n * n * n);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_random(0, 0, 1, 1, 1).is_err());
        assert!(generate_random(0, 1, 1, 2, 1).is_err());
        assert!(generate_random(0, 1, 1, 1, 0).is_err());
    }

    #[test]
    fn path_structure() {
        for flip in [false, true] {
            let inst = generate_lowerbound_path(3, flip);
            assert!(inst.validate().is_empty());
            assert_eq!(inst.clients().len(), 3);
            assert_eq!(inst.providers().len(), 4);
            // Path: every interior agent has degree two, ends degree one.
            let profile = inst.degree_profile();
            assert_eq!(profile.delta_c, 2);
            assert_eq!(profile.delta_p, 2);
        }
    }

    #[test]
    fn block_family_has_constant_conflict_bound() {
        let inst = generate_block_family(0, 5, 3, 2).unwrap();
        assert!(inst.validate().is_empty());
        assert_eq!(inst.clients().len(), 15);
        assert_eq!(inst.degree_profile().delta_c, 3);
    }
}
