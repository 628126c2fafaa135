//! Deferred-acceptance node programs and the three-phase mechanism.
//!
//! Three proposal algorithms run on the engine:
//!
//! - [`run_classic_da`]: the odd/even proposal–acknowledgement schedule for
//!   general strict preferences (the slow baseline);
//! - [`run_common_da`]: the fast variant for common preferences refined by a
//!   tie-break, where class-`t` clients finalize at round `2t - 1` and the
//!   whole run fits in `2·S·c - 1` rounds;
//! - [`run_fractional_da`]: greedy batch proposals for the capacitated
//!   fractional setting, one capacity-broadcast round plus the same class
//!   schedule, `2·S·c` rounds in total.
//!
//! [`run_mechanism`] chains conflict discovery, a coloring strategy and one
//! of the proposal algorithms, with flushed phase boundaries so per-phase
//! round counts stay auditable.

mod classic;
mod common;
mod fractional;
mod mechanism;

pub use classic::{run_classic_da, ClassicDaRun};
pub use common::{run_common_da, CommonDaRun};
pub use fractional::{run_fractional_da, FractionalDaRun};
pub use mechanism::{run_mechanism, MechanismOutcome, MechanismResult, Strategy};

use crate::engine::EngineError;
use crate::instance::{ClientId, MatchingInstance, ProviderId};
use crate::rational::Ratio;
use crate::tiebreak::TieBreakError;
use serde_json::json;
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum MatchingError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    TieBreak(#[from] TieBreakError),
    #[error("tie-break is not strict on provider {0}'s neighborhood")]
    NonStrictTieBreak(ProviderId),
    #[error("client {0} has no composed score")]
    MissingComposedScore(ClientId),
    #[error("{0}")]
    MissingLoads(String),
    #[error("provider order for {0} is not a permutation of its neighborhood")]
    BadProviderOrder(ProviderId),
}

/// An integral matching: each client matched to at most one provider and
/// vice versa.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Matching {
    pairs: BTreeMap<ClientId, ProviderId>,
}

impl Matching {
    pub fn new(pairs: BTreeMap<ClientId, ProviderId>) -> Matching {
        let mut providers: Vec<ProviderId> = pairs.values().copied().collect();
        providers.sort();
        providers.dedup();
        assert_eq!(providers.len(), pairs.len(), "provider matched twice");
        Matching { pairs }
    }

    pub fn provider_of(&self, client: ClientId) -> Option<ProviderId> {
        self.pairs.get(&client).copied()
    }

    pub fn client_of(&self, provider: ProviderId) -> Option<ClientId> {
        self.pairs
            .iter()
            .find(|&(_, &p)| p == provider)
            .map(|(&c, _)| c)
    }

    pub fn contains(&self, client: ClientId, provider: ProviderId) -> bool {
        self.pairs.get(&client) == Some(&provider)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &BTreeMap<ClientId, ProviderId> {
        &self.pairs
    }

    /// Export as a list of `{client, provider, amount}` rows with amount "1".
    pub fn to_json(&self) -> serde_json::Value {
        json!(self
            .pairs
            .iter()
            .map(|(c, p)| json!({"client": c.0, "provider": p.0, "amount": "1"}))
            .collect::<Vec<_>>())
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Matching, String> {
        let rows = value.as_array().ok_or("matching must be an array")?;
        let mut pairs = BTreeMap::new();
        for row in rows {
            let client = row
                .get("client")
                .and_then(|v| v.as_u64())
                .ok_or("missing client")?;
            let provider = row
                .get("provider")
                .and_then(|v| v.as_u64())
                .ok_or("missing provider")?;
            if pairs
                .insert(ClientId(client), ProviderId(provider))
                .is_some()
            {
                return Err(format!("client {client} matched twice"));
            }
        }
        let mut providers: Vec<ProviderId> = pairs.values().copied().collect();
        providers.sort();
        providers.dedup();
        if providers.len() != pairs.len() {
            return Err("provider matched twice".into());
        }
        Ok(Matching { pairs })
    }
}

/// A fractional matching: exact rational load per edge, nonzero entries only.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FractionalMatching {
    edges: BTreeMap<(ClientId, ProviderId), Ratio>,
}

impl FractionalMatching {
    pub fn new(edges: BTreeMap<(ClientId, ProviderId), Ratio>) -> FractionalMatching {
        let edges = edges.into_iter().filter(|(_, w)| !w.is_zero()).collect();
        FractionalMatching { edges }
    }

    pub fn amount(&self, client: ClientId, provider: ProviderId) -> Ratio {
        self.edges
            .get(&(client, provider))
            .cloned()
            .unwrap_or_else(Ratio::zero)
    }

    pub fn edges(&self) -> &BTreeMap<(ClientId, ProviderId), Ratio> {
        &self.edges
    }

    pub fn client_total(&self, client: ClientId) -> Ratio {
        self.edges
            .iter()
            .filter(|&(&(c, _), _)| c == client)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn provider_total(&self, provider: ProviderId) -> Ratio {
        self.edges
            .iter()
            .filter(|&(&(_, p), _)| p == provider)
            .map(|(_, w)| w)
            .sum()
    }

    /// Nonzero edges per client.
    pub fn support(&self) -> BTreeMap<ClientId, Vec<ProviderId>> {
        let mut out: BTreeMap<ClientId, Vec<ProviderId>> = BTreeMap::new();
        for &(c, p) in self.edges.keys() {
            out.entry(c).or_default().push(p);
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!(self
            .edges
            .iter()
            .map(|(&(c, p), w)| json!({"client": c.0, "provider": p.0, "amount": w.to_string()}))
            .collect::<Vec<_>>())
    }

    pub fn from_json(value: &serde_json::Value) -> Result<FractionalMatching, String> {
        let rows = value.as_array().ok_or("matching must be an array")?;
        let mut edges = BTreeMap::new();
        for row in rows {
            let client = row
                .get("client")
                .and_then(|v| v.as_u64())
                .ok_or("missing client")?;
            let provider = row
                .get("provider")
                .and_then(|v| v.as_u64())
                .ok_or("missing provider")?;
            let amount: Ratio = row
                .get("amount")
                .and_then(|v| v.as_str())
                .ok_or("missing amount")?
                .parse()
                .map_err(|e| format!("{e}"))?;
            if edges
                .insert((ClientId(client), ProviderId(provider)), amount)
                .is_some()
            {
                return Err(format!("edge ({client}, {provider}) listed twice"));
            }
        }
        Ok(FractionalMatching::new(edges))
    }
}

/// Checks that the composed scores are strict on every provider neighborhood
/// and returns them keyed by client.
fn strict_composed(
    inst: &MatchingInstance,
    tiebreak: &crate::tiebreak::TieBreak,
) -> Result<BTreeMap<ClientId, u64>, MatchingError> {
    let mut composed = BTreeMap::new();
    for client in inst.clients() {
        let value = *tiebreak
            .composed
            .get(&client.id)
            .ok_or(MatchingError::MissingComposedScore(client.id))?;
        composed.insert(client.id, value);
    }
    for (provider, clients) in inst.provider_neighbors() {
        let mut values: Vec<u64> = clients.iter().map(|c| composed[c]).collect();
        values.sort_unstable();
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(MatchingError::NonStrictTieBreak(provider));
        }
    }
    Ok(composed)
}
