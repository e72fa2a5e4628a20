//! Domain types for decision nodes, boundaries, economy parameters and the
//! full system state.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

/// Hard cap on the number of nodes in a system.
pub const MAX_NODES: usize = 1024;
/// Hard cap on trajectory length.
pub const MAX_STEPS: u64 = 1_000_000;
/// Tolerance on the sum of task shares.
pub const SHARE_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    #[serde(alias = "Human")]
    Human,
    #[serde(rename = "ai", alias = "AI")]
    Ai,
}

impl NodeKind {
    pub fn is_ai(self) -> bool {
        matches!(self, NodeKind::Ai)
    }
}

/// Partition of the decision space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainClass {
    Irreversible,
    CriticalResource,
    Ordinary,
}

impl DomainClass {
    pub const ALL: [DomainClass; 3] = [
        DomainClass::Irreversible,
        DomainClass::CriticalResource,
        DomainClass::Ordinary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainClass::Irreversible => "irreversible",
            DomainClass::CriticalResource => "critical_resource",
            DomainClass::Ordinary => "ordinary",
        }
    }
}

/// One value per [`DomainClass`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainMap<T> {
    pub irreversible: T,
    pub critical_resource: T,
    pub ordinary: T,
}

impl<T: Copy> DomainMap<T> {
    pub fn splat(value: T) -> Self {
        DomainMap {
            irreversible: value,
            critical_resource: value,
            ordinary: value,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (DomainClass, T)> + '_ {
        DomainClass::ALL.into_iter().map(move |d| (d, self[d]))
    }
}

impl<T> Index<DomainClass> for DomainMap<T> {
    type Output = T;

    fn index(&self, domain: DomainClass) -> &T {
        match domain {
            DomainClass::Irreversible => &self.irreversible,
            DomainClass::CriticalResource => &self.critical_resource,
            DomainClass::Ordinary => &self.ordinary,
        }
    }
}

impl<T> IndexMut<DomainClass> for DomainMap<T> {
    fn index_mut(&mut self, domain: DomainClass) -> &mut T {
        match domain {
            DomainClass::Irreversible => &mut self.irreversible,
            DomainClass::CriticalResource => &mut self.critical_resource,
            DomainClass::Ordinary => &mut self.ordinary,
        }
    }
}

/// Per-domain share of a node's decisions that may alter state without
/// substantive external reversal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthorityProfile {
    pub phi: DomainMap<f64>,
}

impl AuthorityProfile {
    pub fn new(irreversible: f64, critical_resource: f64, ordinary: f64) -> Self {
        AuthorityProfile {
            phi: DomainMap {
                irreversible,
                critical_resource,
                ordinary,
            },
        }
    }

    pub fn none() -> Self {
        AuthorityProfile {
            phi: DomainMap::splat(0.0),
        }
    }
}

impl Index<DomainClass> for AuthorityProfile {
    type Output = f64;

    fn index(&self, domain: DomainClass) -> &f64 {
        &self.phi[domain]
    }
}

impl IndexMut<DomainClass> for AuthorityProfile {
    fn index_mut(&mut self, domain: DomainClass) -> &mut f64 {
        &mut self.phi[domain]
    }
}

/// Self-expansion bookkeeping for a node.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SelfExpansionState {
    /// Accumulated self-expansion authority.
    pub s_exp: f64,
    /// Externally approved growth allowance per step.
    pub approved_budget: f64,
    /// Growth the node requests each step.
    pub demand: f64,
    /// Total growth actually granted so far.
    pub granted_total: f64,
}

/// A single human or AI decision node.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Decisions issued per step.
    pub lambda: f64,
    /// Impact magnitude per decision, by domain.
    pub iota: DomainMap<f64>,
    /// Execution reach (downstream instantiations), at least 1.
    pub rho: f64,
    pub authority: AuthorityProfile,
    /// Compute or capability budget per step.
    pub capability: f64,
    /// Execution-to-decision cost ratio.
    pub friction: f64,
    pub alpha: f64,
    pub quality: f64,
    pub cost: f64,
    pub complementarity: f64,
    pub share: f64,
    pub expansion: SelfExpansionState,
    pub direct_control_critical: bool,
}

impl DecisionNode {
    /// A node with neutral parameters: unit rate, impact and reach, no
    /// authority, unit friction and cost.
    pub fn new(id: u32, kind: NodeKind) -> Self {
        DecisionNode {
            id: NodeId(id),
            kind,
            lambda: 1.0,
            iota: DomainMap::splat(1.0),
            rho: 1.0,
            authority: AuthorityProfile::none(),
            capability: 0.0,
            friction: 1.0,
            alpha: 0.0,
            quality: 1.0,
            cost: 1.0,
            complementarity: 0.0,
            share: 0.0,
            expansion: SelfExpansionState::default(),
            direct_control_critical: false,
        }
    }

    pub fn is_ai(&self) -> bool {
        self.kind.is_ai()
    }

    pub(crate) fn validate(&self, economy: &EconomyParams) -> Result<(), ValidationError> {
        let field = |name: &str| format!("nodes.{}.{}", self.id, name);
        nonneg(&field("lambda"), self.lambda)?;
        for (d, v) in self.iota.iter() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ValidationError::new(
                    field(&format!("iota.{}", d.as_str())),
                    "iota must be > 0",
                ));
            }
        }
        if !(self.rho >= 1.0 && self.rho.is_finite()) {
            return Err(ValidationError::new(field("rho"), "rho must be >= 1"));
        }
        for (d, v) in self.authority.phi.iter() {
            unit(&field(&format!("phi.{}", d.as_str())), v)?;
        }
        nonneg(&field("capability"), self.capability)?;
        if !(self.friction >= economy.friction_floor && self.friction.is_finite()) {
            return Err(ValidationError::new(
                field("friction"),
                "friction must be >= friction_floor",
            ));
        }
        nonneg(&field("alpha"), self.alpha)?;
        nonneg(&field("quality"), self.quality)?;
        positive(&field("cost"), self.cost)?;
        nonneg(&field("complementarity"), self.complementarity)?;
        unit(&field("share"), self.share)?;
        nonneg(&field("s_exp"), self.expansion.s_exp)?;
        nonneg(&field("approved_budget"), self.expansion.approved_budget)?;
        nonneg(&field("expansion_demand"), self.expansion.demand)?;
        nonneg(&field("granted_total"), self.expansion.granted_total)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    /// B1: no AI authority over irreversible decisions.
    pub b1_active: bool,
    /// B2: no AI direct control of critical resources.
    pub b2_active: bool,
    /// B3: AI self-expansion capped at `epsilon` per step unless approved.
    pub b3_active: bool,
    #[serde(default)]
    pub epsilon: f64,
    /// Authority creep per unit of cost pressure when a boundary is off.
    #[serde(default)]
    pub erosion_rate: f64,
}

impl BoundaryConfig {
    pub fn all_active() -> Self {
        BoundaryConfig {
            b1_active: true,
            b2_active: true,
            b3_active: true,
            epsilon: 0.0,
            erosion_rate: 0.0,
        }
    }

    pub fn all_inactive(erosion_rate: f64) -> Self {
        BoundaryConfig {
            b1_active: false,
            b2_active: false,
            b3_active: false,
            epsilon: 0.0,
            erosion_rate,
        }
    }

    pub fn any_inactive(&self) -> bool {
        !(self.b1_active && self.b2_active && self.b3_active)
    }

    pub(crate) fn validate(&self) -> Result<(), ValidationError> {
        nonneg("boundaries.epsilon", self.epsilon)?;
        nonneg("boundaries.erosion_rate", self.erosion_rate)
    }
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig::all_inactive(0.0)
    }
}

/// How per-action irreversible-loss probabilities are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RiskModel {
    /// Every action has probability `p_mean`.
    Homogeneous,
    /// p_j ~ Beta(a, b), rescaled so its mean equals `p_mean`.
    Beta { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EconomyParams {
    /// Complementarity weight in utility.
    pub eta: f64,
    /// Complementarity gain per unit share.
    pub delta: f64,
    /// Quality gain per unit share.
    pub psi: f64,
    /// Routing temperature.
    pub tau: f64,
    pub friction_decay: f64,
    pub friction_floor: f64,
    pub w_h: f64,
    pub w_a: f64,
    pub latency_unit: f64,
    /// Actions per unit of AI decision-energy.
    pub nu: f64,
    pub p_mean: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Reach growth per unit share.
    pub reach_gain: f64,
    /// Domain mix used to average impact.
    pub domain_weights: DomainMap<f64>,
    pub risk: RiskModel,
}

impl Default for EconomyParams {
    fn default() -> Self {
        EconomyParams {
            eta: 1.0,
            delta: 0.05,
            psi: 0.02,
            tau: 1.0,
            friction_decay: 0.0,
            friction_floor: 0.1,
            w_h: 1.0,
            w_a: 0.1,
            latency_unit: 0.5,
            nu: 1.0,
            p_mean: 1e-4,
            beta: 1.0,
            gamma: 0.01,
            reach_gain: 0.0,
            domain_weights: DomainMap::splat(1.0 / 3.0),
            risk: RiskModel::Homogeneous,
        }
    }
}

impl EconomyParams {
    pub(crate) fn validate(&self) -> Result<(), ValidationError> {
        nonneg("economy.eta", self.eta)?;
        nonneg("economy.delta", self.delta)?;
        nonneg("economy.psi", self.psi)?;
        positive("economy.tau", self.tau)?;
        nonneg("economy.friction_decay", self.friction_decay)?;
        positive("economy.friction_floor", self.friction_floor)?;
        nonneg("economy.w_h", self.w_h)?;
        nonneg("economy.w_a", self.w_a)?;
        nonneg("economy.latency_unit", self.latency_unit)?;
        positive("economy.nu", self.nu)?;
        if !(self.p_mean > 0.0 && self.p_mean < 1.0) {
            return Err(ValidationError::new(
                "economy.p_mean",
                "p_mean must be in (0, 1)",
            ));
        }
        positive("economy.beta", self.beta)?;
        positive("economy.gamma", self.gamma)?;
        nonneg("economy.reach_gain", self.reach_gain)?;
        let mut total = 0.0;
        for (d, w) in self.domain_weights.iter() {
            nonneg(&format!("economy.domain_weights.{}", d.as_str()), w)?;
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(ValidationError::new(
                "economy.domain_weights",
                "domain_weights must sum to 1",
            ));
        }
        if let RiskModel::Beta { a, b } = self.risk {
            positive("economy.risk.a", a)?;
            positive("economy.risk.b", b)?;
        }
        Ok(())
    }
}

/// Settings for the per-step empirical traceability measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceSettings {
    /// Number of layers between an initiating state and an outcome.
    pub depth: u32,
    /// Extra AI-origin branches per unit of AI decision-energy.
    pub branch_coeff: f64,
}

impl Default for TraceSettings {
    fn default() -> Self {
        TraceSettings {
            depth: 3,
            branch_coeff: 0.01,
        }
    }
}

/// Complete simulation state at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub step: u64,
    pub nodes: Vec<DecisionNode>,
    pub boundaries: BoundaryConfig,
    pub economy: EconomyParams,
    /// Fraction of AI actions that receive substantive human review.
    pub review_level: f64,
    pub trace: TraceSettings,
    /// Root of every random stream; streams are keyed by (seed, step, purpose).
    pub rng_seed: u64,
}

impl SystemState {
    /// Builds a state, applying the structural part of active boundaries
    /// (B1 zeroes AI irreversible authority, B2 clears AI direct control)
    /// and validating every invariant.
    pub fn new(
        nodes: Vec<DecisionNode>,
        boundaries: BoundaryConfig,
        economy: EconomyParams,
        review_level: f64,
        rng_seed: u64,
    ) -> Result<Self, ValidationError> {
        let mut state = SystemState {
            step: 0,
            nodes,
            boundaries,
            economy,
            review_level,
            trace: TraceSettings::default(),
            rng_seed,
        };
        state.apply_structural_boundaries();
        state.validate()?;
        Ok(state)
    }

    pub fn with_trace(mut self, trace: TraceSettings) -> Self {
        self.trace = trace;
        self
    }

    /// Sets every share to `1/n`.
    pub fn uniform_shares(&mut self) {
        let n = self.nodes.len() as f64;
        for node in &mut self.nodes {
            node.share = 1.0 / n;
        }
    }

    pub(crate) fn apply_structural_boundaries(&mut self) -> u64 {
        let mut blocked = 0;
        let b = self.boundaries;
        for node in self.nodes.iter_mut().filter(|n| n.is_ai()) {
            if b.b1_active && node.authority[DomainClass::Irreversible] != 0.0 {
                node.authority[DomainClass::Irreversible] = 0.0;
                blocked += 1;
            }
            if b.b2_active && node.direct_control_critical {
                node.direct_control_critical = false;
                blocked += 1;
            }
        }
        blocked
    }

    pub fn node(&self, id: NodeId) -> Option<&DecisionNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn ai_nodes(&self) -> impl Iterator<Item = &DecisionNode> {
        self.nodes.iter().filter(|n| n.is_ai())
    }

    pub fn human_nodes(&self) -> impl Iterator<Item = &DecisionNode> {
        self.nodes.iter().filter(|n| !n.is_ai())
    }

    pub fn shares(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.share).collect()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.nodes.is_empty() {
            return Err(ValidationError::new(
                "nodes",
                "at least one node is required",
            ));
        }
        if self.nodes.len() > MAX_NODES {
            return Err(ValidationError::new(
                "nodes",
                format!("at most {MAX_NODES} nodes are supported"),
            ));
        }
        if self.step > MAX_STEPS {
            return Err(ValidationError::new("step", "step exceeds the step cap"));
        }
        // Config files store the seed as a TOML (signed 64-bit) integer.
        if self.rng_seed > i64::MAX as u64 {
            return Err(ValidationError::new("system.seed", "seed must be < 2^63"));
        }
        self.economy.validate()?;
        self.boundaries.validate()?;
        unit("system.review_level", self.review_level)?;
        if self.trace.depth < 1 {
            return Err(ValidationError::new(
                "system.trace_depth",
                "trace_depth must be >= 1",
            ));
        }
        nonneg("system.branch_coeff", self.trace.branch_coeff)?;
        let mut ids: Vec<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ValidationError::new("nodes", "node ids must be unique"));
        }
        for node in &self.nodes {
            node.validate(&self.economy)?;
        }
        let total: f64 = self.nodes.iter().map(|n| n.share).sum();
        if (total - 1.0).abs() > SHARE_SUM_TOL {
            return Err(ValidationError::new("nodes.share", "shares must sum to 1"));
        }
        for node in self.ai_nodes() {
            if self.boundaries.b1_active && node.authority[DomainClass::Irreversible] != 0.0 {
                return Err(ValidationError::new(
                    format!("nodes.{}.phi.irreversible", node.id),
                    "AI irreversible authority must be 0 under B1",
                ));
            }
            if self.boundaries.b2_active && node.direct_control_critical {
                return Err(ValidationError::new(
                    format!("nodes.{}.direct_control_critical", node.id),
                    "AI direct control of critical resources is forbidden under B2",
                ));
            }
        }
        Ok(())
    }
}

fn nonneg(field: &str, v: f64) -> Result<(), ValidationError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ValidationError::new(
            field,
            format!("{} must be >= 0", leaf(field)),
        ))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ValidationError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ValidationError::new(
            field,
            format!("{} must be > 0", leaf(field)),
        ))
    }
}

fn unit(field: &str, v: f64) -> Result<(), ValidationError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ValidationError::new(
            field,
            format!("{} must be in [0, 1]", leaf(field)),
        ))
    }
}

fn leaf(field: &str) -> &str {
    field.rsplit('.').next().unwrap_or(field)
}
