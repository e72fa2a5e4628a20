//! One simulation step.
//!
//! [`advance`] applies, in this order: friction decay, rate update, utility,
//! softmax routing, complementarity/quality feedback, reach update,
//! self-expansion and finally boundary enforcement or erosion. The rate
//! update therefore always sees the friction of the step it produces.

use serde::Serialize;

use crate::error::SimError;
use crate::model::{
    BoundaryConfig, DecisionNode, DomainClass, DomainMap, EconomyParams, NodeId, SystemState,
    MAX_STEPS,
};

pub fn decay_friction(node: &DecisionNode, economy: &EconomyParams) -> f64 {
    (node.friction * (-economy.friction_decay).exp()).max(economy.friction_floor)
}

pub fn update_rate(node: &DecisionNode) -> f64 {
    node.lambda + node.alpha * node.capability / node.friction
}

pub fn compute_utility(node: &DecisionNode, economy: &EconomyParams) -> f64 {
    node.quality / node.cost + economy.eta * node.complementarity
}

/// Softmax of `utilities / tau`, shifted by the maximum so large utilities
/// cannot overflow.
pub fn route_shares(utilities: &[f64], tau: f64) -> Vec<f64> {
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = utilities.iter().map(|u| ((u - max) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Returns the next `(complementarity, quality)`.
pub fn update_feedback(node: &DecisionNode, economy: &EconomyParams) -> (f64, f64) {
    (
        node.complementarity + economy.delta * node.share,
        node.quality + economy.psi * node.share,
    )
}

pub fn update_reach(node: &DecisionNode, economy: &EconomyParams) -> f64 {
    node.rho * (1.0 + economy.reach_gain * node.share)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionOutcome {
    pub requested: f64,
    pub granted: f64,
    pub s_exp: f64,
    pub capability: f64,
}

impl ExpansionOutcome {
    pub fn clipped(&self) -> bool {
        self.granted < self.requested
    }
}

/// Grants the node's requested self-expansion, capped at
/// `epsilon + approved_budget` under B3. Human nodes never expand.
pub fn apply_self_expansion(node: &DecisionNode, boundaries: &BoundaryConfig) -> ExpansionOutcome {
    let e = &node.expansion;
    let requested = if node.is_ai() { e.demand } else { 0.0 };
    let granted = if boundaries.b3_active {
        requested.min(boundaries.epsilon + e.approved_budget)
    } else {
        requested
    };
    ExpansionOutcome {
        requested,
        granted,
        s_exp: e.s_exp + granted,
        capability: node.capability * (1.0 + granted),
    }
}

/// Institutional cost `w_h H + w_a A + L` with human review effort
/// `H = review_level * sum(lambda_ai)`, AI task volume
/// `A = sum(lambda_ai * share_ai)` and latency `L = latency_unit * H`.
pub fn institutional_cost(state: &SystemState) -> f64 {
    let e = &state.economy;
    let (rate, volume) = state.ai_nodes().fold((0.0, 0.0), |(r, v), n| {
        (r + n.lambda, v + n.lambda * n.share)
    });
    let review = state.review_level * rate;
    e.w_h * review + e.w_a * volume + e.latency_unit * review
}

/// Pressure to cut review: human review spend over one plus institutional
/// cost. Lies in `[0, 1)` and grows with the review cost weight.
pub fn cost_pressure(state: &SystemState) -> f64 {
    let pending: f64 = state.ai_nodes().map(|n| n.lambda).sum();
    state.economy.w_h * state.review_level * pending / (institutional_cost(state) + 1.0)
}

pub fn erode_authority(phi: f64, erosion_rate: f64, pressure: f64) -> f64 {
    (phi + erosion_rate * pressure).min(1.0)
}

/// Enforces active boundaries on every AI node and lets authority creep
/// along inactive ones. Returns the number of violations blocked.
pub fn enforce_or_erode_boundaries(state: &mut SystemState) -> u64 {
    let b = state.boundaries;
    let pressure = cost_pressure(state);
    let creep = b.erosion_rate * pressure;
    let blocked = state.apply_structural_boundaries();
    if creep > 0.0 {
        for node in state.nodes.iter_mut().filter(|n| n.is_ai()) {
            if !b.b1_active {
                let phi = &mut node.authority[DomainClass::Irreversible];
                *phi = erode_authority(*phi, b.erosion_rate, pressure);
            }
            if !b.b2_active {
                let phi = &mut node.authority[DomainClass::CriticalResource];
                *phi = erode_authority(*phi, b.erosion_rate, pressure);
                node.direct_control_critical |= *phi > 0.0;
            }
        }
        if !b.b1_active {
            state.review_level = (state.review_level - creep).max(0.0);
        }
    }
    blocked
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSnapshot {
    pub id: NodeId,
    pub lambda: f64,
    pub share: f64,
    pub complementarity: f64,
    pub quality: f64,
    pub friction: f64,
    pub phi: DomainMap<f64>,
}

impl NodeSnapshot {
    fn of(node: &DecisionNode) -> Self {
        NodeSnapshot {
            id: node.id,
            lambda: node.lambda,
            share: node.share,
            complementarity: node.complementarity,
            quality: node.quality,
            friction: node.friction,
            phi: node.authority.phi,
        }
    }
}

/// Audit record for one call to [`advance`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    /// Step of the input state.
    pub step: u64,
    pub utilities: Vec<(NodeId, f64)>,
    pub pre: Vec<NodeSnapshot>,
    pub post: Vec<NodeSnapshot>,
    /// Friction each node's rate update used.
    pub friction_used: Vec<(NodeId, f64)>,
    pub expansion: Vec<(NodeId, ExpansionOutcome)>,
    pub institutional_cost: f64,
    pub cost_pressure: f64,
    pub boundary_violations_blocked: u64,
}

/// The transition function: returns the state at `t + 1` and the step trace.
pub fn advance(state: &SystemState) -> Result<(SystemState, StepTrace), SimError> {
    if state.step >= MAX_STEPS {
        return Err(SimError::HorizonTooLong(state.step + 1));
    }
    let mut next = state.clone();
    let economy = next.economy;
    let boundaries = next.boundaries;
    let pre: Vec<NodeSnapshot> = state.nodes.iter().map(NodeSnapshot::of).collect();

    for node in &mut next.nodes {
        node.friction = decay_friction(node, &economy);
        node.lambda = update_rate(node);
    }
    let friction_used = next.nodes.iter().map(|n| (n.id, n.friction)).collect();

    let utilities: Vec<f64> = next
        .nodes
        .iter()
        .map(|n| compute_utility(n, &economy))
        .collect();
    let shares = route_shares(&utilities, economy.tau);

    let mut expansion = Vec::new();
    let mut blocked = 0;
    for (node, share) in next.nodes.iter_mut().zip(&shares) {
        node.share = *share;
        let (m, q) = update_feedback(node, &economy);
        node.complementarity = m;
        node.quality = q;
        node.rho = update_reach(node, &economy);
        if node.is_ai() {
            let out = apply_self_expansion(node, &boundaries);
            if out.clipped() {
                blocked += 1;
            }
            node.expansion.s_exp = out.s_exp;
            node.expansion.granted_total += out.granted;
            node.capability = out.capability;
            expansion.push((node.id, out));
        }
    }

    let cost = institutional_cost(&next);
    let pressure = cost_pressure(&next);
    blocked += enforce_or_erode_boundaries(&mut next);
    next.step += 1;
    check_finite(&next)?;

    let trace = StepTrace {
        step: state.step,
        utilities: next.nodes.iter().map(|n| n.id).zip(utilities).collect(),
        pre,
        post: next.nodes.iter().map(NodeSnapshot::of).collect(),
        friction_used,
        expansion,
        institutional_cost: cost,
        cost_pressure: pressure,
        boundary_violations_blocked: blocked,
    };
    Ok((next, trace))
}

fn check_finite(state: &SystemState) -> Result<(), SimError> {
    for n in &state.nodes {
        let fields = [
            ("lambda", n.lambda),
            ("friction", n.friction),
            ("rho", n.rho),
            ("capability", n.capability),
            ("quality", n.quality),
            ("complementarity", n.complementarity),
            ("share", n.share),
            ("s_exp", n.expansion.s_exp),
        ];
        if let Some((field, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(SimError::NonFinite {
                step: state.step,
                node: n.id,
                field,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AuthorityProfile, NodeKind};

    fn node(kind: NodeKind) -> DecisionNode {
        DecisionNode::new(0, kind)
    }

    fn economy() -> EconomyParams {
        EconomyParams::default()
    }

    #[test]
    fn friction_decay_examples() {
        let mut e = economy();
        e.friction_floor = 0.5;
        let mut n = node(NodeKind::Ai);
        n.friction = 2.0;
        e.friction_decay = 0.0;
        assert_eq!(decay_friction(&n, &e), 2.0);
        e.friction_decay = std::f64::consts::LN_2;
        assert!((decay_friction(&n, &e) - 1.0).abs() < 1e-15);
        n.friction = 0.6;
        e.friction_decay = 10.0;
        assert_eq!(decay_friction(&n, &e), 0.5);
    }

    #[test]
    fn rate_update_examples() {
        let mut n = node(NodeKind::Ai);
        n.lambda = 1.0;
        n.alpha = 0.5;
        n.capability = 2.0;
        n.friction = 1.0;
        assert_eq!(update_rate(&n), 2.0);
        n.alpha = 0.0;
        assert_eq!(update_rate(&n), 1.0);

        // Halving friction doubles the increment.
        n.lambda = 1.0;
        n.alpha = 1.0;
        n.capability = 1.0;
        n.friction = 2.0;
        let first = update_rate(&n) - n.lambda;
        n.friction = 1.0;
        let second = update_rate(&n) - n.lambda;
        assert_eq!((first, second), (0.5, 1.0));
    }

    #[test]
    fn utility_examples() {
        let mut e = economy();
        e.eta = 0.5;
        let mut n = node(NodeKind::Ai);
        n.quality = 2.0;
        n.cost = 1.0;
        n.complementarity = 2.0;
        assert_eq!(compute_utility(&n, &e), 3.0);
        e.eta = 0.0;
        assert_eq!(compute_utility(&n, &e), 2.0);
    }

    #[test]
    fn routing_examples() {
        let s = route_shares(&[0.7, 0.7, 0.7, 0.7], 0.3);
        assert!(s.iter().all(|x| (x - 0.25).abs() < 1e-15));

        let s = route_shares(&[1.0, 0.0], 0.01);
        // 1 - 1e-20 is not representable; check the complement instead.
        assert!(1.0 - s[0] < 1e-20);
        assert!(s[1] < 1e-20 && s[1] > 0.0);

        let s = route_shares(&[1000.0, 999.0], 1.0);
        let e = std::f64::consts::E;
        assert!((s[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((s[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((s[0] - 0.731).abs() < 1e-3);
    }

    #[test]
    fn feedback_and_reach_examples() {
        let mut e = economy();
        let mut n = node(NodeKind::Ai);
        n.complementarity = 1.0;
        n.quality = 2.0;
        n.share = 0.0;
        assert_eq!(update_feedback(&n, &e), (1.0, 2.0));
        e.delta = 0.1;
        n.share = 0.5;
        assert!((update_feedback(&n, &e).0 - 1.05).abs() < 1e-15);
        e.psi = 0.2;
        n.share = 1.0;
        assert!((update_feedback(&n, &e).1 - 2.2).abs() < 1e-15);

        n.rho = 10.0;
        e.reach_gain = 0.0;
        assert_eq!(update_reach(&n, &e), 10.0);
        e.reach_gain = 0.1;
        n.share = 0.5;
        assert!((update_reach(&n, &e) - 10.5).abs() < 1e-12);
        n.share = 0.0;
        assert_eq!(update_reach(&n, &e), 10.0);
    }

    #[test]
    fn self_expansion_examples() {
        let mut n = node(NodeKind::Ai);
        n.capability = 2.0;
        n.expansion.demand = 0.5;
        let active = BoundaryConfig::all_active();
        let out = apply_self_expansion(&n, &active);
        assert_eq!((out.granted, out.capability), (0.0, 2.0));

        let inactive = BoundaryConfig::all_inactive(0.0);
        assert_eq!(apply_self_expansion(&n, &inactive).capability, 3.0);

        let capped = BoundaryConfig {
            epsilon: 0.1,
            ..active
        };
        n.expansion.demand = 0.05;
        assert_eq!(apply_self_expansion(&n, &capped).granted, 0.05);

        let h = node(NodeKind::Human);
        assert_eq!(apply_self_expansion(&h, &inactive).granted, 0.0);
    }

    fn pair(review_level: f64) -> SystemState {
        let mut h = DecisionNode::new(0, NodeKind::Human);
        h.share = 0.5;
        h.direct_control_critical = true;
        let mut a = DecisionNode::new(1, NodeKind::Ai);
        a.share = 0.5;
        a.lambda = 10.0;
        SystemState::new(
            vec![h, a],
            BoundaryConfig::all_inactive(0.0),
            economy(),
            review_level,
            0,
        )
        .unwrap()
    }

    #[test]
    fn institutional_cost_examples() {
        let mut s = pair(0.0);
        s.economy.w_a = 0.3;
        assert_eq!(institutional_cost(&s), 0.3 * 10.0 * 0.5);

        let mut s = pair(1.0);
        s.economy.w_h = 1.0;
        s.economy.w_a = 0.0;
        s.economy.latency_unit = 0.0;
        assert_eq!(institutional_cost(&s), 10.0);

        s.economy.w_h = 0.0;
        assert_eq!(institutional_cost(&s), 0.0);
    }

    #[test]
    fn enforcement_zeroes_irreversible_authority() {
        let mut s = pair(1.0);
        s.nodes[1].authority = AuthorityProfile::new(0.3, 0.0, 0.0);
        s.boundaries = BoundaryConfig::all_active();
        let blocked = enforce_or_erode_boundaries(&mut s);
        assert_eq!(s.nodes[1].authority[DomainClass::Irreversible], 0.0);
        assert_eq!(blocked, 1);
    }

    #[test]
    fn zero_erosion_rate_means_no_creep() {
        let mut s = pair(1.0);
        s.nodes[1].authority = AuthorityProfile::new(0.2, 0.1, 0.5);
        let before = s.clone();
        enforce_or_erode_boundaries(&mut s);
        assert_eq!(s, before);
    }

    #[test]
    fn creep_is_rate_times_pressure() {
        assert!((erode_authority(0.0, 0.01, 1.0) - 0.01).abs() < 1e-18);
        assert_eq!(erode_authority(0.995, 0.01, 1.0), 1.0);

        let mut s = pair(1.0);
        s.boundaries.erosion_rate = 0.01;
        let p = cost_pressure(&s);
        assert!(p > 0.0 && p < 1.0);
        enforce_or_erode_boundaries(&mut s);
        let phi = s.nodes[1].authority;
        assert!((phi[DomainClass::Irreversible] - 0.01 * p).abs() < 1e-15);
        assert!((phi[DomainClass::CriticalResource] - 0.01 * p).abs() < 1e-15);
        assert!(s.nodes[1].direct_control_critical);
        assert!((s.review_level - (1.0 - 0.01 * p)).abs() < 1e-15);
        // Human authority never creeps.
        assert_eq!(s.nodes[0].authority, AuthorityProfile::none());
    }

    #[test]
    fn frozen_dynamics_only_advance_the_step() {
        let mut s = pair(1.0);
        s.economy.delta = 0.0;
        s.economy.psi = 0.0;
        s.economy.friction_decay = 0.0;
        s.nodes[1].alpha = 0.0;
        let (next, trace) = advance(&s).unwrap();
        assert_eq!(next.step, 1);
        let mut expect = s.clone();
        expect.step = 1;
        assert_eq!(next, expect);
        assert_eq!(trace.step, 0);
    }

    #[test]
    fn symmetric_ai_pair_stays_split() {
        let mut a = DecisionNode::new(0, NodeKind::Ai);
        a.share = 0.5;
        let mut b = DecisionNode::new(1, NodeKind::Ai);
        b.share = 0.5;
        let s = SystemState::new(vec![a, b], BoundaryConfig::default(), economy(), 1.0, 0).unwrap();
        let (next, _) = advance(&s).unwrap();
        assert_eq!(next.shares(), vec![0.5, 0.5]);
    }

    #[test]
    fn non_finite_values_abort() {
        let mut s = pair(1.0);
        s.nodes[1].capability = f64::MAX;
        s.nodes[1].alpha = 10.0;
        match advance(&s) {
            Err(SimError::NonFinite { node, field, .. }) => {
                assert_eq!(node, NodeId(1));
                assert_eq!(field, "lambda");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
