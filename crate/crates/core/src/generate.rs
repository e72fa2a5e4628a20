//! Seeded generation of random system instances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ValidationError;
use crate::model::{
    AuthorityProfile, BoundaryConfig, DecisionNode, DomainClass, EconomyParams, NodeKind,
    SelfExpansionState, SystemState, MAX_NODES,
};
use crate::seed::{stream, Stream};

/// Closed interval `[lo, hi]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("at least one human and one AI node are required (got {n_human} human, {n_ai} AI)")]
    EmptyPopulation { n_human: usize, n_ai: usize },
    #[error("too many nodes: {0}")]
    TooManyNodes(usize),
    #[error("inverted range for {name}: lo {lo} > hi {hi}")]
    InvertedRange {
        name: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Sampling ranges for every randomized field. Human and AI nodes draw rate,
/// authority and capability from separate ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRanges {
    pub human_lambda: Range,
    pub ai_lambda: Range,
    pub iota: Range,
    pub rho: Range,
    pub human_phi_irreversible: Range,
    pub human_phi_critical: Range,
    pub ai_phi_irreversible: Range,
    pub ai_phi_critical: Range,
    pub phi_ordinary: Range,
    pub capability: Range,
    /// Initial friction, as a multiple of the friction floor.
    pub friction_multiple: Range,
    pub ai_alpha: Range,
    pub quality: Range,
    pub cost: Range,
    pub complementarity: Range,
    pub expansion_demand: Range,
    pub review_level: Range,
    pub friction_decay: Range,
    pub erosion_rate: Range,
    pub delta: Range,
    pub psi: Range,
}

impl Default for ParameterRanges {
    fn default() -> Self {
        ParameterRanges {
            human_lambda: Range::new(5.0, 20.0),
            ai_lambda: Range::new(0.5, 2.0),
            iota: Range::new(0.5, 2.0),
            rho: Range::new(1.0, 3.0),
            human_phi_irreversible: Range::new(0.3, 0.9),
            human_phi_critical: Range::new(0.3, 0.9),
            ai_phi_irreversible: Range::new(0.0, 0.1),
            ai_phi_critical: Range::new(0.0, 0.1),
            phi_ordinary: Range::new(0.2, 1.0),
            capability: Range::new(0.5, 2.0),
            friction_multiple: Range::new(2.0, 10.0),
            ai_alpha: Range::new(0.05, 0.5),
            quality: Range::new(0.5, 2.0),
            cost: Range::new(0.5, 2.0),
            complementarity: Range::new(0.0, 0.5),
            expansion_demand: Range::new(0.0, 0.02),
            review_level: Range::new(0.5, 1.0),
            friction_decay: Range::new(0.0, 0.05),
            erosion_rate: Range::new(0.0, 0.05),
            delta: Range::new(0.0, 0.1),
            psi: Range::new(0.0, 0.05),
        }
    }
}

impl ParameterRanges {
    fn check(&self) -> Result<(), GenerateError> {
        let all: [(&'static str, Range); 21] = [
            ("human_lambda", self.human_lambda),
            ("ai_lambda", self.ai_lambda),
            ("iota", self.iota),
            ("rho", self.rho),
            ("human_phi_irreversible", self.human_phi_irreversible),
            ("human_phi_critical", self.human_phi_critical),
            ("ai_phi_irreversible", self.ai_phi_irreversible),
            ("ai_phi_critical", self.ai_phi_critical),
            ("phi_ordinary", self.phi_ordinary),
            ("capability", self.capability),
            ("friction_multiple", self.friction_multiple),
            ("ai_alpha", self.ai_alpha),
            ("quality", self.quality),
            ("cost", self.cost),
            ("complementarity", self.complementarity),
            ("expansion_demand", self.expansion_demand),
            ("review_level", self.review_level),
            ("friction_decay", self.friction_decay),
            ("erosion_rate", self.erosion_rate),
            ("delta", self.delta),
            ("psi", self.psi),
        ];
        for (name, r) in all {
            if !(r.lo <= r.hi) {
                return Err(GenerateError::InvertedRange {
                    name,
                    lo: r.lo,
                    hi: r.hi,
                });
            }
        }
        if self.friction_multiple.lo < 1.0 {
            return Err(ValidationError::new(
                "ranges.friction_multiple",
                "friction must start at or above the floor",
            )
            .into());
        }
        Ok(())
    }
}

/// Draws a random system: humans get ids `0..n_human`, AI nodes follow.
/// Boundaries are all inactive; callers toggle them as needed. The result is
/// a deterministic function of the arguments.
pub fn generate_random_system(
    seed: u64,
    n_human: usize,
    n_ai: usize,
    ranges: &ParameterRanges,
) -> Result<SystemState, GenerateError> {
    if n_human == 0 || n_ai == 0 {
        return Err(GenerateError::EmptyPopulation { n_human, n_ai });
    }
    if n_human + n_ai > MAX_NODES {
        return Err(GenerateError::TooManyNodes(n_human + n_ai));
    }
    ranges.check()?;
    let mut rng = stream(seed, Stream::Generate, 0);

    let economy = EconomyParams {
        friction_decay: ranges.friction_decay.sample(&mut rng),
        delta: ranges.delta.sample(&mut rng),
        psi: ranges.psi.sample(&mut rng),
        ..EconomyParams::default()
    };
    let boundaries = BoundaryConfig::all_inactive(ranges.erosion_rate.sample(&mut rng));
    let review_level = ranges.review_level.sample(&mut rng);

    let mut nodes = Vec::with_capacity(n_human + n_ai);
    for i in 0..(n_human + n_ai) {
        let kind = if i < n_human {
            NodeKind::Human
        } else {
            NodeKind::Ai
        };
        let ai = kind.is_ai();
        let mut node = DecisionNode::new(i as u32, kind);
        node.lambda = if ai {
            ranges.ai_lambda
        } else {
            ranges.human_lambda
        }
        .sample(&mut rng);
        for d in DomainClass::ALL {
            node.iota[d] = ranges.iota.sample(&mut rng);
        }
        node.rho = ranges.rho.sample(&mut rng);
        let (irr, crit) = if ai {
            (ranges.ai_phi_irreversible, ranges.ai_phi_critical)
        } else {
            (ranges.human_phi_irreversible, ranges.human_phi_critical)
        };
        node.authority = AuthorityProfile::new(
            irr.sample(&mut rng),
            crit.sample(&mut rng),
            ranges.phi_ordinary.sample(&mut rng),
        );
        node.capability = if ai {
            ranges.capability.sample(&mut rng)
        } else {
            0.0
        };
        node.friction = economy.friction_floor * ranges.friction_multiple.sample(&mut rng);
        node.alpha = if ai {
            ranges.ai_alpha.sample(&mut rng)
        } else {
            0.0
        };
        node.quality = ranges.quality.sample(&mut rng);
        node.cost = ranges.cost.sample(&mut rng);
        node.complementarity = ranges.complementarity.sample(&mut rng);
        node.expansion = SelfExpansionState {
            demand: if ai {
                ranges.expansion_demand.sample(&mut rng)
            } else {
                0.0
            },
            ..SelfExpansionState::default()
        };
        node.direct_control_critical = !ai;
        nodes.push(node);
    }
    let n = nodes.len() as f64;
    nodes.iter_mut().for_each(|node| node.share = 1.0 / n);

    Ok(SystemState::new(
        nodes,
        boundaries,
        economy,
        review_level,
        seed,
    )?)
}
