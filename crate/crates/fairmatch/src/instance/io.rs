//! Instance file format.
//!
//! Instances are UTF-8 JSON with top-level fields `S`, `clients` and
//! `providers`. Each client is `{id, prefs, score, load?}`, each provider
//! `{id, capacity?, prefs?}`; the edge set is implicit in the client
//! preference lists. Loads and capacities are strings `"p/q"`.

use super::{Client, ClientId, MatchingInstance, Provider, ProviderId};
use crate::rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum InstanceIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Structure(String),
}

#[derive(Serialize, Deserialize)]
struct FileClient {
    id: u64,
    prefs: Vec<u64>,
    score: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    load: Option<Ratio>,
}

#[derive(Serialize, Deserialize)]
struct FileProvider {
    id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity: Option<Ratio>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prefs: Option<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct FileInstance {
    #[serde(rename = "S")]
    s: u32,
    clients: Vec<FileClient>,
    providers: Vec<FileProvider>,
}

fn to_file(inst: &MatchingInstance) -> FileInstance {
    FileInstance {
        s: inst.s_classes(),
        clients: inst
            .clients()
            .iter()
            .map(|c| FileClient {
                id: c.id.0,
                prefs: c.prefs.iter().map(|p| p.0).collect(),
                score: c.score,
                load: c.load.clone(),
            })
            .collect(),
        providers: inst
            .providers()
            .iter()
            .map(|p| FileProvider {
                id: p.id.0,
                capacity: p.capacity.clone(),
                prefs: p.prefs.as_ref().map(|v| v.iter().map(|c| c.0).collect()),
            })
            .collect(),
    }
}

fn from_file(file: FileInstance) -> Result<MatchingInstance, InstanceIoError> {
    let mut ids = BTreeSet::new();
    for c in &file.clients {
        if !ids.insert(c.id) {
            return Err(InstanceIoError::Structure(format!("duplicate id {}", c.id)));
        }
    }
    let mut provider_ids = BTreeSet::new();
    for p in &file.providers {
        if !ids.insert(p.id) {
            return Err(InstanceIoError::Structure(format!("duplicate id {}", p.id)));
        }
        provider_ids.insert(p.id);
    }
    let clients = file
        .clients
        .into_iter()
        .map(|c| {
            let mut seen = BTreeSet::new();
            for p in &c.prefs {
                if !provider_ids.contains(p) {
                    return Err(InstanceIoError::Structure(format!(
                        "client {} lists unknown provider {p}",
                        c.id
                    )));
                }
                if !seen.insert(*p) {
                    return Err(InstanceIoError::Structure(format!(
                        "client {} lists provider {p} twice",
                        c.id
                    )));
                }
            }
            Ok(Client {
                id: ClientId(c.id),
                prefs: c.prefs.into_iter().map(ProviderId).collect(),
                score: c.score,
                load: c.load,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let providers = file
        .providers
        .into_iter()
        .map(|p| Provider {
            id: ProviderId(p.id),
            capacity: p.capacity,
            prefs: p.prefs.map(|v| v.into_iter().map(ClientId).collect()),
        })
        .collect();
    Ok(MatchingInstance::new(clients, providers, file.s))
}

pub fn instance_to_json(inst: &MatchingInstance) -> Result<String, InstanceIoError> {
    Ok(serde_json::to_string_pretty(&to_file(inst))?)
}

pub fn instance_from_json(text: &str) -> Result<MatchingInstance, InstanceIoError> {
    from_file(serde_json::from_str(text)?)
}

pub fn write_instance(path: &Path, inst: &MatchingInstance) -> Result<(), InstanceIoError> {
    std::fs::write(path, instance_to_json(inst)?)?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<MatchingInstance, InstanceIoError> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

/// Stable 64-bit FNV-1a hash of the canonical serialization, as hex.
/// Used to key benchmark and sweep rows.
pub fn instance_hash(inst: &MatchingInstance) -> String {
    let text = instance_to_json(inst).expect("serializing a valid instance cannot fail");
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MatchingInstance {
        let clients = vec![
            Client {
                id: ClientId(1),
                prefs: vec![ProviderId(3), ProviderId(4)],
                score: 1,
                load: Some(Ratio::new(3, 2)),
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
                capacity: Some(Ratio::int(2)),
                prefs: None,
            },
            Provider {
                id: ProviderId(4),
                capacity: None,
                prefs: Some(vec![ClientId(2), ClientId(1)]),
            },
        ];
        MatchingInstance::new(clients, providers, 2)
    }

    #[test]
    fn round_trip_is_identity() {
        let inst = sample();
        let text = instance_to_json(&inst).unwrap();
        let back = instance_from_json(&text).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn missing_score_field_names_it() {
        let text = r#"{"S":1,"clients":[{"id":1,"prefs":[]}],"providers":[]}"#;
        let err = instance_from_json(text).unwrap_err();
        assert!(err.to_string().contains("score"), "{err}");
    }

    #[test]
    fn duplicate_id_is_a_parse_error() {
        let text = r#"{"S":1,
            "clients":[{"id":1,"prefs":[2],"score":1}],
            "providers":[{"id":2},{"id":2}]}"#;
        let err = instance_from_json(text).unwrap_err();
        assert!(err.to_string().contains("duplicate id"), "{err}");
    }

    #[test]
    fn unknown_provider_reference_is_rejected() {
        let text = r#"{"S":1,
            "clients":[{"id":1,"prefs":[9],"score":1}],
            "providers":[{"id":2}]}"#;
        assert!(instance_from_json(text).is_err());
    }

    #[test]
    fn hash_is_stable_under_reserialization() {
        let inst = sample();
        let h1 = instance_hash(&inst);
        let h2 = instance_hash(&instance_from_json(&instance_to_json(&inst).unwrap()).unwrap());
        assert_eq!(h1, h2);
    }
}
