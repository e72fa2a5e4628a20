//! Per-step derived quantities: decision-energy, control mass, the
//! sovereignty node, traceability, irreversibility risk and concentration.

pub mod paths;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::model::{
    DecisionNode, DomainClass, DomainMap, EconomyParams, NodeId, RiskModel, SystemState,
};
use crate::seed::{derive_seed, stream, Stream};

pub use paths::{LayeredDag, PathOverflow, PathStats, MAX_PATHS};

/// Impact averaged over the domain mix.
pub fn mean_impact(node: &DecisionNode, weights: &DomainMap<f64>) -> f64 {
    DomainClass::ALL
        .iter()
        .map(|&d| weights[d] * node.iota[d])
        .sum()
}

/// Rate times mean impact times reach.
pub fn decision_energy(node: &DecisionNode, weights: &DomainMap<f64>) -> f64 {
    node.lambda * mean_impact(node, weights) * node.rho
}

/// Total decision-energy of the AI nodes.
pub fn aggregate_ai_density(state: &SystemState) -> f64 {
    let w = &state.economy.domain_weights;
    state.ai_nodes().map(|n| decision_energy(n, w)).sum()
}

/// Decision-energy weighted by authority. The restricted form keeps only the
/// irreversible and critical-resource domains, and the latter only for nodes
/// with direct control of critical resources.
pub fn control_mass(
    node: &DecisionNode,
    weights: &DomainMap<f64>,
    restrict_to_sovereign: bool,
) -> f64 {
    let term = |d: DomainClass| weights[d] * node.iota[d] * node.authority[d];
    let weighted = if restrict_to_sovereign {
        let crit = if node.direct_control_critical {
            term(DomainClass::CriticalResource)
        } else {
            0.0
        };
        term(DomainClass::Irreversible) + crit
    } else {
        DomainClass::ALL.iter().map(|&d| term(d)).sum()
    };
    node.lambda * node.rho * weighted
}

/// Whether a node holds any sovereignty-relevant authority: irreversible
/// decisions, direct control of critical resources, or granted self-expansion.
pub fn holds_sovereign_authority(node: &DecisionNode) -> bool {
    node.authority[DomainClass::Irreversible] > 0.0
        || node.direct_control_critical
        || node.expansion.granted_total > 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sovereign {
    pub id: NodeId,
    /// True when the winner is an AI node that holds sovereignty-relevant
    /// authority and strictly out-masses every human node.
    pub is_ai: bool,
    pub restricted_mass: f64,
}

/// Argmax of restricted control mass, ties broken by lowest id.
///
/// # Panics
/// If the state has no nodes.
pub fn sovereign(state: &SystemState) -> Sovereign {
    sovereign_from_masses(state, |n| {
        control_mass(n, &state.economy.domain_weights, true)
    })
}

fn sovereign_from_masses(state: &SystemState, mass: impl Fn(&DecisionNode) -> f64) -> Sovereign {
    let masses: Vec<(usize, f64)> = state.nodes.iter().map(mass).enumerate().collect();
    let (best, best_mass) = masses
        .iter()
        .copied()
        .reduce(|a, b| {
            let (ia, ma) = a;
            let (ib, mb) = b;
            if mb > ma || (mb == ma && state.nodes[ib].id < state.nodes[ia].id) {
                (ib, mb)
            } else {
                (ia, ma)
            }
        })
        .expect("sovereign requires at least one node");
    let winner = &state.nodes[best];
    let beats_humans = masses
        .iter()
        .filter(|(i, _)| !state.nodes[*i].is_ai())
        .all(|(_, m)| best_mass > *m);
    Sovereign {
        id: winner.id,
        is_ai: winner.is_ai() && holds_sovereign_authority(winner) && beats_humans,
        restricted_mass: best_mass,
    }
}

pub fn traceability_bound(e_d_ai: f64, economy: &EconomyParams) -> f64 {
    traceability_bound_with(e_d_ai, economy.beta, economy.gamma)
}

pub fn traceability_bound_with(e_d_ai: f64, beta: f64, gamma: f64) -> f64 {
    beta / (1.0 + gamma * e_d_ai)
}

/// Counts causal paths in the layered graph induced by the state's AI
/// decision-energy.
pub fn empirical_traceability(
    state: &SystemState,
    outcome_depth: u32,
    seed: u64,
) -> Result<PathStats, PathOverflow> {
    let dag = LayeredDag::build(
        aggregate_ai_density(state),
        state.trace.branch_coeff,
        outcome_depth,
        seed,
    )?;
    Ok(dag.count_paths())
}

/// `1 - (1 - p)^n` evaluated as `-expm1(n * log1p(-p))`.
pub fn p_irr_homogeneous(p: f64, n: u64) -> f64 {
    if n == 0 || p <= 0.0 {
        return 0.0;
    }
    -(n as f64 * (-p).ln_1p()).exp_m1()
}

/// `ln(1 - P_irr)` for homogeneous actions; strictly decreasing in `n` for
/// `p` in (0, 1), even where `P_irr` itself rounds to 1.
pub fn log_survival(p: f64, n: u64) -> f64 {
    n as f64 * (-p).ln_1p()
}

/// Expected number of AI-mediated actions: `ceil(nu * E)`.
pub fn action_count(e_d_ai: f64, nu: f64) -> u64 {
    // Saturates at u64::MAX for absurd densities.
    (nu * e_d_ai).ceil() as u64
}

/// Largest number of per-action probabilities drawn in heterogeneous mode;
/// above it the mean log-survival of the sample is scaled up to `n`.
pub const MAX_RISK_DRAWS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub n_actions: u64,
    pub p_irr: f64,
}

pub fn irreversibility_probability(state: &SystemState) -> RiskEstimate {
    let e = &state.economy;
    let n = action_count(aggregate_ai_density(state), e.nu);
    let p_irr = match e.risk {
        RiskModel::Homogeneous => p_irr_homogeneous(e.p_mean, n),
        RiskModel::Beta { a, b } => {
            if n == 0 {
                0.0
            } else {
                let beta = Beta::new(a, b).expect("validated shape parameters");
                let scale = e.p_mean * (a + b) / a;
                let draws = n.min(MAX_RISK_DRAWS);
                let mut rng = stream(state.rng_seed, Stream::RiskDraws, state.step);
                let mean_log: f64 = (0..draws)
                    .map(|_| {
                        let p = (beta.sample(&mut rng) * scale).min(1.0 - f64::EPSILON);
                        (-p).ln_1p()
                    })
                    .sum::<f64>()
                    / draws as f64;
                -(mean_log * n as f64).exp_m1()
            }
        }
    };
    RiskEstimate {
        n_actions: n,
        p_irr,
    }
}

/// Herfindahl index of task shares.
pub fn concentration_index(shares: &[f64]) -> f64 {
    shares.iter().map(|s| s * s).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub id: NodeId,
    pub is_ai: bool,
    pub lambda: f64,
    pub share: f64,
    pub friction: f64,
    pub e_d: f64,
    pub e_c: f64,
    pub e_c_sov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub step: u64,
    pub nodes: Vec<NodeMetrics>,
    pub e_d_ai_total: f64,
    /// Largest restricted control mass among human nodes (0 when none).
    pub e_c_top_human: f64,
    /// Largest restricted control mass among AI nodes (0 when none).
    pub e_c_top_ai_restricted: f64,
    pub sovereign_id: NodeId,
    pub sovereign_is_ai: bool,
    pub traceability_bound: f64,
    /// NaN when disabled or when the path graph exceeds [`MAX_PATHS`].
    pub empirical_traceability: f64,
    pub n_actions: u64,
    pub p_irr: f64,
    pub concentration: f64,
    pub review_level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOptions {
    pub empirical_traceability: bool,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            empirical_traceability: true,
        }
    }
}

pub fn compute_frame(state: &SystemState, options: FrameOptions) -> MetricsFrame {
    let w = &state.economy.domain_weights;
    let nodes: Vec<NodeMetrics> = state
        .nodes
        .iter()
        .map(|n| NodeMetrics {
            id: n.id,
            is_ai: n.is_ai(),
            lambda: n.lambda,
            share: n.share,
            friction: n.friction,
            e_d: decision_energy(n, w),
            e_c: control_mass(n, w, false),
            e_c_sov: control_mass(n, w, true),
        })
        .collect();
    let e_d_ai_total = nodes.iter().filter(|n| n.is_ai).map(|n| n.e_d).sum();
    let top = |ai: bool| {
        nodes
            .iter()
            .filter(|n| n.is_ai == ai)
            .map(|n| n.e_c_sov)
            .fold(0.0, f64::max)
    };
    let sov = sovereign_from_masses(state, |n| control_mass(n, w, true));
    let empirical = if options.empirical_traceability {
        let seed = derive_seed(&[state.rng_seed, state.step]);
        empirical_traceability(state, state.trace.depth, seed)
            .map(|s| s.empirical_traceability)
            .unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    let risk = irreversibility_probability(state);
    MetricsFrame {
        step: state.step,
        e_c_top_human: top(false),
        e_c_top_ai_restricted: top(true),
        nodes,
        e_d_ai_total,
        sovereign_id: sov.id,
        sovereign_is_ai: sov.is_ai,
        traceability_bound: traceability_bound(e_d_ai_total, &state.economy),
        empirical_traceability: empirical,
        n_actions: risk.n_actions,
        p_irr: risk.p_irr,
        concentration: concentration_index(&state.shares()),
        review_level: state.review_level,
    }
}

/// One Monte Carlo trial: true when at least one of `n` independent
/// Bernoulli(p) actions fails.
pub fn bernoulli_trial(p: f64, n: u64, rng: &mut impl Rng) -> bool {
    (0..n).any(|_| rng.random::<f64>() < p)
}
