//! Semantic importance from weighted gameplay markers, and importance coverage.

use std::collections::BTreeMap;
use std::path::Path;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walk::WalkGraph;

pub const DEFAULT_MARKER_RADIUS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MarkerKind {
    PatrolPath,
    SpawnPoint,
    InteractionZone,
    Custom(String),
}

impl MarkerKind {
    pub fn parse(s: &str) -> MarkerKind {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        match key.as_str() {
            "patrolpath" | "patrol" => MarkerKind::PatrolPath,
            "spawnpoint" | "spawn" => MarkerKind::SpawnPoint,
            "interactionzone" | "interaction" => MarkerKind::InteractionZone,
            _ => MarkerKind::Custom(s.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            MarkerKind::PatrolPath => "patrol_path",
            MarkerKind::SpawnPoint => "spawn_point",
            MarkerKind::InteractionZone => "interaction_zone",
            MarkerKind::Custom(label) => label,
        }
    }
}

impl Serialize for MarkerKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for MarkerKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(MarkerKind::parse(&String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameplayMarker {
    pub kind: MarkerKind,
    pub position: DVec3,
    pub weight: f64,
    pub radius: f64,
}

impl GameplayMarker {
    pub fn validate(&self) -> Result<()> {
        if !(self.position.is_finite() && self.weight >= 0.0 && self.weight.is_finite() && self.radius > 0.0) {
            return Err(Error::Invalid(format!("invalid marker {self:?}")));
        }
        Ok(())
    }
}

/// Per-kind weights applied to markers that carry no explicit weight, and
/// overrides that replace the weight of every marker of a kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindWeights {
    pub defaults: BTreeMap<String, f64>,
    pub overrides: BTreeMap<String, f64>,
}

impl Default for KindWeights {
    fn default() -> Self {
        let defaults = [
            (MarkerKind::InteractionZone, 1.0),
            (MarkerKind::SpawnPoint, 0.8),
            (MarkerKind::PatrolPath, 0.6),
        ]
        .into_iter()
        .map(|(k, w)| (k.name().to_string(), w))
        .collect();
        KindWeights {
            defaults,
            overrides: BTreeMap::new(),
        }
    }
}

impl KindWeights {
    /// Parses a `kind=value` override.
    pub fn add_override(&mut self, spec: &str) -> Result<()> {
        let (kind, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("weight override `{spec}` is not kind=value")))?;
        let w: f64 = value
            .trim()
            .parse()
            .ok()
            .filter(|w: &f64| *w >= 0.0 && w.is_finite())
            .ok_or_else(|| Error::Invalid(format!("weight `{value}` must be a non-negative number")))?;
        self.overrides.insert(MarkerKind::parse(kind.trim()).name().to_string(), w);
        Ok(())
    }

    fn resolve(&self, kind: &MarkerKind, explicit: Option<f64>) -> f64 {
        let name = kind.name();
        self.overrides
            .get(name)
            .copied()
            .or(explicit)
            .or_else(|| self.defaults.get(name).copied())
            .unwrap_or(1.0)
    }
}

#[derive(Deserialize)]
struct RawMarker {
    kind: MarkerKind,
    position: [f64; 3],
    weight: Option<f64>,
    radius: Option<f64>,
}

/// Parses a JSON array of `{kind, position, weight?, radius?}` records.
pub fn parse_markers(text: &str, weights: &KindWeights) -> Result<Vec<GameplayMarker>> {
    let raw: Vec<RawMarker> = serde_json::from_str(text)?;
    raw.into_iter()
        .map(|r| {
            let m = GameplayMarker {
                weight: weights.resolve(&r.kind, r.weight),
                kind: r.kind,
                position: DVec3::from_array(r.position),
                radius: r.radius.unwrap_or(DEFAULT_MARKER_RADIUS),
            };
            m.validate().map(|_| m)
        })
        .collect()
}

pub fn load_markers(path: &Path, weights: &KindWeights) -> Result<Vec<GameplayMarker>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_markers(&text, weights)
}

pub fn markers_to_json(markers: &[GameplayMarker]) -> String {
    let items: Vec<serde_json::Value> = markers
        .iter()
        .map(|m| {
            serde_json::json!({
                "kind": m.kind.name(),
                "position": [m.position.x, m.position.y, m.position.z],
                "weight": m.weight,
                "radius": m.radius,
            })
        })
        .collect();
    serde_json::to_string_pretty(&items).expect("markers serialize")
}

/// Importance per walk-graph node over a domain of nodes (all of V_w, or a
/// restriction such as the reachable set).
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceField {
    values: Vec<f64>,
    domain: Vec<bool>,
    domain_len: usize,
    total: f64,
    max: f64,
}

/// `I(v)`: sum of marker weights whose ball contains the node center.
pub fn compute_importance(graph: &WalkGraph, markers: &[GameplayMarker]) -> ImportanceField {
    let mut values = vec![0.0; graph.len()];
    for m in markers {
        for id in graph.within(m.position, m.radius) {
            values[id as usize] += m.weight;
        }
    }
    ImportanceField::from_values(values, vec![true; graph.len()])
}

impl ImportanceField {
    /// Field over `domain`; values outside it are zeroed.
    pub fn from_values(mut values: Vec<f64>, domain: Vec<bool>) -> Self {
        assert_eq!(values.len(), domain.len());
        for (v, &inside) in values.iter_mut().zip(&domain) {
            if !inside {
                *v = 0.0;
            }
        }
        let total = values.iter().sum();
        let max = values.iter().copied().fold(0.0, f64::max);
        let domain_len = domain.iter().filter(|&&d| d).count();
        ImportanceField {
            values,
            domain,
            domain_len,
            total,
            max,
        }
    }

    pub fn restrict(&self, mask: &[bool]) -> ImportanceField {
        let domain = self.domain.iter().zip(mask).map(|(a, b)| *a && *b).collect();
        ImportanceField::from_values(self.values.clone(), domain)
    }

    pub fn value(&self, id: u32) -> f64 {
        self.values[id as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn in_domain(&self, id: u32) -> bool {
        self.domain[id as usize]
    }

    pub fn domain_len(&self) -> usize {
        self.domain_len
    }

    /// Importance fraction covered by the visited mask; spatial fraction of
    /// the domain when the field carries no importance.
    pub fn coverage(&self, visited: &[bool]) -> f64 {
        if self.total > 0.0 {
            let covered: f64 = visited
                .iter()
                .zip(&self.values)
                .filter(|(v, _)| **v)
                .map(|(_, i)| *i)
                .sum();
            (covered / self.total).clamp(0.0, 1.0)
        } else if self.domain_len == 0 {
            0.0
        } else {
            let n = visited.iter().zip(&self.domain).filter(|(v, d)| **v && **d).count();
            n as f64 / self.domain_len as f64
        }
    }
}
