//! Scenario documents: TOML with `[system]`, `[economy]`, `[boundaries]` and
//! one `[nodes.<id>]` table per decision node.
//!
//! Unknown keys are rejected in [`Strictness::Strict`] mode and reported as
//! warnings in [`Strictness::Lenient`] mode.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ValidationError};
use crate::model::{
    AuthorityProfile, BoundaryConfig, DecisionNode, DomainMap, EconomyParams, NodeId, NodeKind,
    SelfExpansionState, SystemState, TraceSettings,
};
use crate::seed::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemSection {
    pub seed: u64,
    /// Default horizon for `run`.
    pub steps: u64,
    pub review_level: f64,
    /// Relative multiplicative perturbation applied to node parameters when
    /// a scenario is instantiated with a seed.
    pub jitter: f64,
    pub trace_depth: u32,
    pub branch_coeff: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let trace = TraceSettings::default();
        SystemSection {
            seed: 0,
            steps: 100,
            review_level: 1.0,
            jitter: 0.0,
            trace_depth: trace.depth,
            branch_coeff: trace.branch_coeff,
        }
    }
}

/// A per-domain value, written either as a scalar applying to all three
/// domains or as an inline table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainValue {
    Uniform(f64),
    PerDomain(DomainMap<f64>),
}

impl DomainValue {
    fn resolve(self) -> DomainMap<f64> {
        match self {
            DomainValue::Uniform(v) => DomainMap::splat(v),
            DomainValue::PerDomain(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSection {
    pub kind: NodeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iota: Option<DomainValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<DomainValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub friction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complementarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub share: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_exp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approved_budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expansion_demand: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub granted_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_control_critical: Option<bool>,
}

impl NodeSection {
    pub fn new(kind: NodeKind) -> Self {
        NodeSection {
            kind,
            lambda: None,
            iota: None,
            rho: None,
            phi: None,
            capability: None,
            friction: None,
            alpha: None,
            quality: None,
            cost: None,
            complementarity: None,
            share: None,
            s_exp: None,
            approved_budget: None,
            expansion_demand: None,
            granted_total: None,
            direct_control_critical: None,
        }
    }

    fn to_node(&self, id: u32) -> DecisionNode {
        let is_ai = self.kind.is_ai();
        let mut node = DecisionNode::new(id, self.kind);
        node.lambda = self.lambda.unwrap_or(1.0);
        node.iota = self
            .iota
            .map_or(DomainMap::splat(1.0), DomainValue::resolve);
        node.rho = self.rho.unwrap_or(1.0);
        node.authority = AuthorityProfile {
            phi: self.phi.map_or(DomainMap::splat(0.0), DomainValue::resolve),
        };
        node.capability = self.capability.unwrap_or(if is_ai { 1.0 } else { 0.0 });
        node.friction = self.friction.unwrap_or(1.0);
        node.alpha = self.alpha.unwrap_or(if is_ai { 0.1 } else { 0.0 });
        node.quality = self.quality.unwrap_or(1.0);
        node.cost = self.cost.unwrap_or(1.0);
        node.complementarity = self.complementarity.unwrap_or(0.0);
        node.expansion = SelfExpansionState {
            s_exp: self.s_exp.unwrap_or(0.0),
            approved_budget: self.approved_budget.unwrap_or(0.0),
            demand: self.expansion_demand.unwrap_or(0.0),
            granted_total: self.granted_total.unwrap_or(0.0),
        };
        node.direct_control_critical = self.direct_control_critical.unwrap_or(!is_ai);
        node
    }

    fn from_node(node: &DecisionNode) -> Self {
        NodeSection {
            kind: node.kind,
            lambda: Some(node.lambda),
            iota: Some(DomainValue::PerDomain(node.iota)),
            rho: Some(node.rho),
            phi: Some(DomainValue::PerDomain(node.authority.phi)),
            capability: Some(node.capability),
            friction: Some(node.friction),
            alpha: Some(node.alpha),
            quality: Some(node.quality),
            cost: Some(node.cost),
            complementarity: Some(node.complementarity),
            share: Some(node.share),
            s_exp: Some(node.expansion.s_exp),
            approved_budget: Some(node.expansion.approved_budget),
            expansion_demand: Some(node.expansion.demand),
            granted_total: Some(node.expansion.granted_total),
            direct_control_critical: Some(node.direct_control_critical),
        }
    }
}

/// A parsed scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub economy: EconomyParams,
    #[serde(default)]
    pub boundaries: BoundaryConfig,
    #[serde(default)]
    pub nodes: BTreeMap<String, NodeSection>,
}

/// Result of parsing a document: the scenario plus any lenient-mode warnings.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn parse(text: &str, strictness: Strictness) -> Result<Parsed, ConfigError> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        let scenario: Scenario = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        let unknown = scenario.unknown_keys(&raw);
        let warnings = match (strictness, unknown.is_empty()) {
            (_, true) => Vec::new(),
            (Strictness::Strict, false) => return Err(ConfigError::UnknownKeys(unknown)),
            (Strictness::Lenient, false) => unknown
                .into_iter()
                .map(|k| format!("ignoring unknown key {k}"))
                .collect(),
        };
        // Surface validation errors at load time rather than at first use.
        scenario.build(scenario.system.seed)?;
        Ok(Parsed { scenario, warnings })
    }

    pub fn from_state(state: &SystemState) -> Self {
        Scenario {
            system: SystemSection {
                seed: state.rng_seed,
                steps: SystemSection::default().steps,
                review_level: state.review_level,
                jitter: 0.0,
                trace_depth: state.trace.depth,
                branch_coeff: state.trace.branch_coeff,
            },
            economy: state.economy,
            boundaries: state.boundaries,
            nodes: state
                .nodes
                .iter()
                .map(|n| (n.id.0.to_string(), NodeSection::from_node(n)))
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are always representable in TOML")
    }

    fn unknown_keys(&self, raw: &toml::Table) -> Vec<String> {
        let known = toml::Table::try_from(self).expect("scenario serializes to a table");
        let mut out = Vec::new();
        collect_unknown(raw, &known, "", &mut out);
        out
    }

    /// Instantiates the scenario. `seed` becomes the state's RNG root and
    /// drives the node-parameter jitter when `system.jitter > 0`.
    pub fn build(&self, seed: u64) -> Result<SystemState, ValidationError> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (key, section) in &self.nodes {
            let id: u32 = key.parse().map_err(|_| {
                ValidationError::new(format!("nodes.{key}"), "node ids must be integers")
            })?;
            nodes.push(section.to_node(id));
        }
        nodes.sort_by_key(|n| n.id);

        let given = self.nodes.values().filter(|n| n.share.is_some()).count();
        if given == 0 && !nodes.is_empty() {
            let n = nodes.len() as f64;
            nodes.iter_mut().for_each(|node| node.share = 1.0 / n);
        } else if given != nodes.len() {
            return Err(ValidationError::new(
                "nodes.share",
                "either every node or no node must specify share",
            ));
        } else {
            for node in &mut nodes {
                node.share = self.nodes[&node.id.0.to_string()].share.unwrap_or_default();
            }
        }

        let jitter = self.system.jitter;
        if !(0.0..1.0).contains(&jitter) {
            return Err(ValidationError::new(
                "system.jitter",
                "jitter must be in [0, 1)",
            ));
        }
        if jitter > 0.0 {
            let mut rng = stream(seed, Stream::Jitter, 0);
            for node in &mut nodes {
                let mut f = || rng.random_range(1.0 - jitter..=1.0 + jitter);
                node.lambda *= f();
                for d in crate::model::DomainClass::ALL {
                    node.iota[d] *= f();
                    node.authority[d] = (node.authority[d] * f()).min(1.0);
                }
                node.rho = (node.rho * f()).max(1.0);
                node.capability *= f();
                node.alpha *= f();
                node.quality *= f();
                node.cost *= f();
            }
        }

        let state = SystemState::new(
            nodes,
            self.boundaries,
            self.economy,
            self.system.review_level,
            seed,
        )?
        .with_trace(TraceSettings {
            depth: self.system.trace_depth,
            branch_coeff: self.system.branch_coeff,
        });
        state.validate()?;
        Ok(state)
    }

    /// Returns a copy with the value at a dotted parameter path replaced, e.g.
    /// `economy.friction_decay`, `boundaries.b1_active` (0 = false) or
    /// `nodes.*.alpha` (every node).
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Scenario, ConfigError> {
        let unknown = || ConfigError::UnknownParameter(path.to_string());
        let mut table = toml::Table::try_from(self).map_err(|_| unknown())?;
        let segments: Vec<&str> = path.split('.').collect();
        if segments.iter().any(|s| s.is_empty()) {
            return Err(unknown());
        }
        if !set_path(&mut table, &segments, value) {
            return Err(unknown());
        }
        let updated: Scenario = table.clone().try_into().map_err(|_| unknown())?;
        if !updated.unknown_keys(&table).is_empty() {
            return Err(unknown());
        }
        Ok(updated)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn insert_node(&mut self, id: NodeId, section: NodeSection) {
        self.nodes.insert(id.0.to_string(), section);
    }
}

fn set_path(table: &mut toml::Table, segments: &[&str], value: f64) -> bool {
    let (head, rest) = match segments.split_first() {
        Some(x) => x,
        None => return false,
    };
    if *head == "*" {
        let mut any = false;
        for (_, v) in table.iter_mut() {
            match v {
                toml::Value::Table(t) => {
                    if !set_path(t, rest, value) {
                        return false;
                    }
                    any = true;
                }
                _ => return false,
            }
        }
        return any;
    }
    if rest.is_empty() {
        let new = match table.get(*head) {
            Some(toml::Value::Integer(_)) => {
                if value < 0.0 || value.fract() != 0.0 {
                    return false;
                }
                toml::Value::Integer(value as i64)
            }
            Some(toml::Value::Boolean(_)) => toml::Value::Boolean(value != 0.0),
            Some(toml::Value::Float(_)) | None => toml::Value::Float(value),
            Some(_) => return false,
        };
        table.insert(head.to_string(), new);
        return true;
    }
    match table.get_mut(*head) {
        Some(toml::Value::Table(t)) => set_path(t, rest, value),
        _ => false,
    }
}

fn collect_unknown(raw: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in raw {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (v, known.get(k)) {
            (_, None) => out.push(path),
            (toml::Value::Table(r), Some(toml::Value::Table(kn))) => {
                collect_unknown(r, kn, &path, out)
            }
            _ => {}
        }
    }
}

fn parse_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    ConfigError::Parse {
        line,
        column,
        message: e.message().trim().to_string(),
    }
}

/// Parses and validates a strict scenario document and instantiates it with
/// its own `system.seed`.
pub fn load_config(text: &str) -> Result<SystemState, ConfigError> {
    let parsed = Scenario::parse(text, Strictness::Strict)?;
    Ok(parsed.scenario.build(parsed.scenario.system.seed)?)
}

/// Writes a state back as a scenario document that loads to the same state.
pub fn save_config(state: &SystemState) -> String {
    Scenario::from_state(state).to_toml()
}
