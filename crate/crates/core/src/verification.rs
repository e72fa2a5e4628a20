//! Numerical checks of the model's propositions over randomized or
//! scenario-derived configurations.
//!
//! Each check runs independent trials (in parallel) and folds them in trial
//! order into a [`PropositionReport`]. Deterministic side assertions that do
//! not depend on a trial (closed-form values, Monte Carlo agreement) are
//! listed in `checks` and must all pass for the verdict to pass.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{save_config, Scenario};
use crate::dynamics::advance;
use crate::error::ValidationError;
use crate::generate::{generate_random_system, GenerateError, ParameterRanges, Range};
use crate::io::sha256_hex;
use crate::metrics::{
    aggregate_ai_density, bernoulli_trial, control_mass, holds_sovereign_authority,
    p_irr_homogeneous, sovereign, traceability_bound, traceability_bound_with, LayeredDag,
};
use crate::model::{BoundaryConfig, NodeKind, SystemState};
use crate::seed::{derive_seed, stream, Stream};
use crate::sweeps::{SweepError, Workers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PropertyId {
    P1,
    P2,
    P3,
    P4,
    P5,
    T1,
}

impl PropertyId {
    pub const ALL: [PropertyId; 6] = [
        PropertyId::P1,
        PropertyId::P2,
        PropertyId::P3,
        PropertyId::P4,
        PropertyId::P5,
        PropertyId::T1,
    ];

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for PropertyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PropertyId::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown property {s:?}; expected one of P1..P5, T1 or all"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub seed: u64,
    pub step: u64,
    /// SHA-256 of the trial's initial state rendered as a config file.
    pub config_digest: String,
}

/// A deterministic assertion that is not repeated per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub property_id: PropertyId,
    pub trials: usize,
    pub passes: usize,
    /// Worst value of the property's margin over all trials; see each check.
    pub witness: f64,
    pub counterexample: Option<Counterexample>,
    pub required_passes: usize,
    pub checks: Vec<SideCheck>,
    pub verdict: Verdict,
}

impl PropositionReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn pass_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.passes as f64 / self.trials as f64
        }
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("{property}: precondition not met: {message}")]
    Precondition {
        property: PropertyId,
        message: String,
    },
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Workers(#[from] SweepError),
}

impl VerifyError {
    fn precondition(property: PropertyId, message: impl Into<String>) -> Self {
        VerifyError::Precondition {
            property,
            message: message.into(),
        }
    }
}

/// Where trial states come from.
#[derive(Debug, Clone)]
pub enum TrialSource {
    /// Fresh random systems; each check adapts the ranges to its setting.
    Random,
    /// Jittered builds of one scenario, checked against each property's
    /// preconditions.
    Scenario(Box<Scenario>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Better {
    Higher,
    Lower,
}

#[derive(Debug, Clone)]
struct Trial {
    pass: bool,
    /// Property-specific margin; NaN when the trial aborted.
    margin: f64,
    step: u64,
    seed: u64,
    digest: String,
}

fn digest(state: &SystemState) -> String {
    sha256_hex(save_config(state).as_bytes())
}

#[derive(Debug, Clone)]
pub struct Harness {
    pub base_seed: u64,
    pub source: TrialSource,
    pub workers: Workers,
}

pub const P1_TOLERANCE: f64 = 1e-9;
pub const P2_TOLERANCE: f64 = 2e-6;
pub const P3_BURN_IN: u64 = 10;
pub const P3_ADVANTAGE: f64 = 0.1;
pub const P4_MC_TRIALS: u64 = 1_000_000;
pub const P5_MIN_FRACTION: f64 = 0.9;
pub const UNIFORM_SHARE_TOL: f64 = 1e-9;

impl Harness {
    pub fn new(base_seed: u64) -> Self {
        Harness {
            base_seed,
            source: TrialSource::Random,
            workers: Workers::default(),
        }
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.source = TrialSource::Scenario(Box::new(scenario));
        self
    }

    pub fn with_workers(mut self, workers: Workers) -> Self {
        self.workers = workers;
        self
    }

    pub fn trial_seed(&self, property: PropertyId, trial: usize) -> u64 {
        derive_seed(&[self.base_seed, property.tag(), trial as u64])
    }

    /// Runs a property with its default parameters.
    pub fn run(
        &self,
        property: PropertyId,
        trials: usize,
    ) -> Result<PropositionReport, VerifyError> {
        match property {
            PropertyId::P1 => self.check_p1_scaling(trials, 100),
            PropertyId::P2 => self.check_p2_responsibility(trials),
            PropertyId::P3 => self.check_p3_concentration(trials, 500, 0.95),
            PropertyId::P4 => self.check_p4_irreversibility(trials),
            PropertyId::P5 => self.check_p5_transfer(trials, 200, P5_MIN_FRACTION),
            PropertyId::T1 => self.check_t1_stabilization(trials, 200, 0.0),
        }
    }

    fn random_population(&self, seed: u64) -> (usize, usize) {
        let mut rng = stream(seed, Stream::Trial, 0);
        (rng.random_range(1..=3), rng.random_range(1..=3))
    }

    fn random_state(
        &self,
        seed: u64,
        ranges: &ParameterRanges,
    ) -> Result<SystemState, VerifyError> {
        let (h, a) = self.random_population(seed);
        Ok(generate_random_system(seed, h, a, ranges)?)
    }

    fn scenario_state(&self, seed: u64) -> Option<Result<SystemState, VerifyError>> {
        match &self.source {
            TrialSource::Random => None,
            TrialSource::Scenario(s) => Some(s.build(seed).map_err(VerifyError::from)),
        }
    }

    fn trials<F>(
        &self,
        property: PropertyId,
        trials: usize,
        f: F,
    ) -> Result<Vec<Trial>, VerifyError>
    where
        F: Fn(u64) -> Result<Trial, VerifyError> + Sync + Send,
    {
        let seeds: Vec<u64> = (0..trials).map(|i| self.trial_seed(property, i)).collect();
        self.workers.map(seeds, f)?.into_iter().collect()
    }

    /// Decision-energy growth under falling friction. Each trial checks at
    /// every step that the AI subsystem's decision-energy grows by at least
    /// `sum_a alpha_a * C_a * min(iota_a) * rho_a / F_a(t)`, with capability
    /// and reach taken at their initial (lowest) values. Witness: smallest
    /// margin.
    pub fn check_p1_scaling(
        &self,
        trials: usize,
        horizon: u64,
    ) -> Result<PropositionReport, VerifyError> {
        let id = PropertyId::P1;
        let results = self.trials(id, trials, |seed| {
            let state = match self.scenario_state(seed) {
                Some(s) => s?,
                None => self.random_state(seed, &ParameterRanges::default())?,
            };
            if let Some(bad) = state.ai_nodes().find(|n| {
                !(n.alpha > 0.0
                    && n.capability > 0.0
                    && n.rho > 0.0
                    && n.iota.iter().all(|(_, v)| v > 0.0))
            }) {
                return Err(VerifyError::precondition(
                    id,
                    format!(
                        "AI node {} needs alpha, capability, rho and impact > 0",
                        bad.id
                    ),
                ));
            }
            let kappa: Vec<f64> = state
                .ai_nodes()
                .map(|n| {
                    let iota_min = n.iota.iter().map(|(_, v)| v).fold(f64::INFINITY, f64::min);
                    n.alpha * n.capability * iota_min * n.rho
                })
                .collect();
            let digest = digest(&state);
            let mut worst = f64::INFINITY;
            let mut current = state;
            for _ in 0..horizon {
                let before = aggregate_ai_density(&current);
                let next = match advance(&current) {
                    Ok((next, _)) => next,
                    Err(_) => return Ok(aborted(seed, current.step, digest)),
                };
                let bound: f64 = kappa
                    .iter()
                    .zip(next.ai_nodes())
                    .map(|(k, n)| k / n.friction)
                    .sum();
                let margin = aggregate_ai_density(&next) - before - bound;
                if margin < worst {
                    worst = margin;
                }
                if margin < -P1_TOLERANCE {
                    return Ok(Trial {
                        pass: false,
                        margin,
                        step: current.step,
                        seed,
                        digest,
                    });
                }
                current = next;
            }
            Ok(Trial {
                pass: true,
                margin: worst,
                step: current.step,
                seed,
                digest,
            })
        })?;
        Ok(fold(id, results, trials, Better::Higher, Vec::new()))
    }

    /// Responsibility dilution. Per trial: the analytic bound strictly falls
    /// along a 100-step trajectory, and the empirical path ratio does not
    /// rise across the densities at steps 0, 50 and 100. Witness: the
    /// largest increase of the empirical ratio between tiers (0 or below
    /// passes).
    pub fn check_p2_responsibility(&self, trials: usize) -> Result<PropositionReport, VerifyError> {
        let id = PropertyId::P2;
        const TIERS: [u64; 3] = [0, 50, 100];
        let results = self.trials(id, trials, |seed| {
            let state = match self.scenario_state(seed) {
                Some(s) => s?,
                None => self.random_state(seed, &ParameterRanges::default())?,
            };
            if !(state.economy.gamma > 0.0) {
                return Err(VerifyError::precondition(id, "gamma must be > 0"));
            }
            if state.ai_nodes().all(|n| n.alpha == 0.0) {
                return Err(VerifyError::precondition(
                    id,
                    "AI density must grow (some alpha > 0)",
                ));
            }
            let digest = digest(&state);
            let mut densities = vec![aggregate_ai_density(&state)];
            let mut bound = traceability_bound(densities[0], &state.economy);
            let mut current = state;
            while current.step < TIERS[2] {
                current = match advance(&current) {
                    Ok((next, _)) => next,
                    Err(_) => return Ok(aborted(seed, current.step, digest)),
                };
                let e = aggregate_ai_density(&current);
                let t = traceability_bound(e, &current.economy);
                if !(t < bound) {
                    return Ok(Trial {
                        pass: false,
                        margin: t - bound,
                        step: current.step,
                        seed,
                        digest,
                    });
                }
                bound = t;
                densities.push(e);
            }
            // Scale branching so the densest tier has about ten AI branches.
            let top = densities[TIERS[2] as usize];
            let coeff = if top > 0.0 { 10.0 / top } else { 1.0 };
            let mut ratios = Vec::new();
            for (k, &t) in TIERS.iter().enumerate() {
                let dag = LayeredDag::build(
                    densities[t as usize],
                    coeff,
                    current.trace.depth,
                    derive_seed(&[seed, k as u64]),
                )
                .map_err(|e| VerifyError::precondition(id, e.to_string()))?;
                ratios.push(dag.count_paths().empirical_traceability);
            }
            let rise = ratios
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(Trial {
                pass: rise <= 0.0,
                margin: rise,
                step: TIERS[2],
                seed,
                digest,
            })
        })?;

        let exact = [0.0, 1.0, 3.0].map(|e| traceability_bound_with(e, 1.0, 1.0));
        let far = traceability_bound_with(1e6, 1.0, 1.0);
        let checks = vec![
            SideCheck {
                name: "bound at densities 0, 1, 3 with beta = gamma = 1".into(),
                passed: exact == [1.0, 0.5, 0.25],
                detail: format!("{exact:?}"),
            },
            SideCheck {
                name: format!("bound at density 1e6 below {P2_TOLERANCE}"),
                passed: far < P2_TOLERANCE,
                detail: format!("{far:e}"),
            },
        ];
        Ok(fold(id, results, trials, Better::Lower, checks))
    }

    /// Winner-take-all routing. One node starts with a higher quality/cost
    /// ratio; its share must not fall after a burn-in and must exceed
    /// `dominance` within `horizon` steps. Witness: smallest final leader
    /// share. A fully symmetric control run must keep shares uniform.
    pub fn check_p3_concentration(
        &self,
        trials: usize,
        horizon: u64,
        dominance: f64,
    ) -> Result<PropositionReport, VerifyError> {
        let id = PropertyId::P3;
        let results = self.trials(id, trials, |seed| {
            let state = match self.scenario_state(seed) {
                Some(s) => {
                    let s = s?;
                    check_p3_preconditions(&s)?;
                    s
                }
                None => seeded_advantage(seed, &mut stream(seed, Stream::Trial, 1))?,
            };
            let digest = digest(&state);
            let leader = leading_node(&state);
            let mut current = state;
            let mut prev = current.nodes[leader].share;
            let mut reached = prev > dominance;
            let mut monotone = true;
            let mut bad_step = 0;
            while current.step < horizon {
                current = match advance(&current) {
                    Ok((next, _)) => next,
                    Err(_) => return Ok(aborted(seed, current.step, digest)),
                };
                let s = current.nodes[leader].share;
                if current.step > P3_BURN_IN && s < prev && monotone {
                    monotone = false;
                    bad_step = current.step;
                }
                reached |= s > dominance;
                prev = s;
            }
            Ok(Trial {
                pass: monotone && reached,
                margin: prev,
                step: if monotone { current.step } else { bad_step },
                seed,
                digest,
            })
        })?;

        let spread = symmetric_spread(horizon);
        let checks = vec![SideCheck {
            name: format!(
                "symmetric nodes stay uniform to {UNIFORM_SHARE_TOL} for {horizon} steps"
            ),
            passed: spread.is_some_and(|d| d <= UNIFORM_SHARE_TOL),
            detail: match spread {
                Some(d) => format!("max deviation {d:e}"),
                None => "run aborted".into(),
            },
        }];
        Ok(fold(id, results, trials, Better::Higher, checks))
    }

    /// Risk accumulation. Per trial: for a log-uniform `p` in [1e-4, 1e-3],
    /// `P_irr` strictly increases over 64 sorted action counts in
    /// `1..=10^4`. Side checks: Monte Carlo agreement at p = 0.01, N = 100
    /// and the low-local-risk case p = 1e-4, N = 10^5. Witness: smallest
    /// step between consecutive `P_irr` values. The trial source is unused.
    pub fn check_p4_irreversibility(
        &self,
        trials: usize,
    ) -> Result<PropositionReport, VerifyError> {
        let id = PropertyId::P4;
        let results = self.trials(id, trials, |seed| {
            let mut rng = stream(seed, Stream::Trial, 0);
            let p = (rng.random_range(1e-4f64.ln()..=1e-3f64.ln())).exp();
            let mut ns: Vec<u64> = (0..64).map(|_| rng.random_range(1..=10_000)).collect();
            ns.sort_unstable();
            ns.dedup();
            let values: Vec<f64> = ns.iter().map(|&n| p_irr_homogeneous(p, n)).collect();
            let (gap, at) = values
                .windows(2)
                .zip(&ns[1..])
                .map(|(w, &n)| (w[1] - w[0], n))
                .fold(
                    (f64::INFINITY, 0),
                    |acc, x| if x.0 < acc.0 { x } else { acc },
                );
            Ok(Trial {
                pass: gap > 0.0,
                margin: gap,
                step: at,
                seed,
                digest: sha256_hex(format!("p={p:e}").as_bytes()),
            })
        })?;

        let mc = monte_carlo_p_irr(0.01, 100, P4_MC_TRIALS, self.base_seed, self.workers)?;
        let analytic = p_irr_homogeneous(0.01, 100);
        let se = (analytic * (1.0 - analytic) / P4_MC_TRIALS as f64).sqrt();
        let demo = p_irr_homogeneous(1e-4, 100_000);
        let checks = vec![
            SideCheck {
                name: format!(
                    "analytic vs {P4_MC_TRIALS}-trial Monte Carlo at p=0.01, N=100 within 3 SE"
                ),
                passed: (mc - analytic).abs() <= 3.0 * se,
                detail: format!("analytic {analytic:.9}, monte carlo {mc:.6}, se {se:.2e}"),
            },
            SideCheck {
                name: "p=1e-4, N=1e5 gives P_irr > 0.99995".into(),
                passed: demo > 0.99995,
                detail: format!("{demo:.9}"),
            },
        ];
        Ok(fold(id, results, trials, Better::Higher, checks))
    }

    /// Sovereignty transfer under eroding boundaries. A trial passes when
    /// some step within `horizon` has an AI sovereign whose restricted
    /// control mass strictly exceeds every human's. Witness: smallest
    /// winning margin among transfers.
    pub fn check_p5_transfer(
        &self,
        trials: usize,
        horizon: u64,
        min_fraction: f64,
    ) -> Result<PropositionReport, VerifyError> {
        let id = PropertyId::P5;
        let results = self.trials(id, trials, |seed| {
            let state = match self.scenario_state(seed) {
                Some(s) => {
                    let s = s?;
                    check_p5_preconditions(&s)?;
                    s
                }
                None => {
                    let mut s = self.random_state(seed, &ParameterRanges::default())?;
                    s.economy.friction_decay = 0.02;
                    s.boundaries.erosion_rate = 0.02;
                    without_boundaries(s)
                }
            };
            Ok(p5_trial(seed, state, horizon))
        })?;
        let required = (min_fraction * trials as f64).ceil() as usize;
        Ok(fold_with(
            id,
            results,
            trials,
            required,
            Better::Higher,
            Vec::new(),
        ))
    }

    /// Stabilization under hard boundaries. Every step of every trial must
    /// have a human sovereign; with `epsilon == 0` every AI node's
    /// restricted control mass must be exactly zero, otherwise the largest
    /// AI mass over the run must stay below the smallest top-human mass.
    /// Witness: largest AI restricted mass observed.
    pub fn check_t1_stabilization(
        &self,
        trials: usize,
        horizon: u64,
        epsilon: f64,
    ) -> Result<PropositionReport, VerifyError> {
        let id = PropertyId::T1;
        if !(epsilon >= 0.0) {
            return Err(VerifyError::precondition(id, "epsilon must be >= 0"));
        }
        let results = self.trials(id, trials, |seed| {
            let state = match self.scenario_state(seed) {
                Some(s) => {
                    let s = s?;
                    check_t1_preconditions(&s)?;
                    s
                }
                None => {
                    let mut s = self.random_state(seed, &adversarial_ranges())?;
                    s.boundaries = BoundaryConfig {
                        epsilon,
                        ..BoundaryConfig::all_active()
                    }
                    .with_erosion(s.boundaries.erosion_rate);
                    s.apply_structural_boundaries();
                    s
                }
            };
            Ok(t1_trial(seed, state, horizon))
        })?;
        Ok(fold(id, results, trials, Better::Lower, Vec::new()))
    }

    /// Runs identical random configurations with all boundaries active
    /// (`epsilon = 0`) and all inactive, under the given erosion and
    /// friction decay. Returns the (T1, P5) reports.
    pub fn paired_boundary_test(
        &self,
        trials: usize,
        horizon: u64,
        erosion_rate: f64,
        friction_decay: f64,
    ) -> Result<(PropositionReport, PropositionReport), VerifyError> {
        let pairs = self.workers.map(
            (0..trials).collect(),
            |i| -> Result<(Trial, Trial), VerifyError> {
                let seed = derive_seed(&[self.base_seed, 0x7a17, i as u64]);
                let mut base = self.random_state(seed, &ParameterRanges::default())?;
                base.economy.friction_decay = friction_decay;
                base.boundaries.erosion_rate = erosion_rate;
                let mut on = base.clone();
                on.boundaries = BoundaryConfig::all_active().with_erosion(erosion_rate);
                on.apply_structural_boundaries();
                let off = without_boundaries(base);
                Ok((t1_trial(seed, on, horizon), p5_trial(seed, off, horizon)))
            },
        )?;
        let (on, off): (Vec<Trial>, Vec<Trial>) = pairs
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .unzip();
        let required = (P5_MIN_FRACTION * trials as f64).ceil() as usize;
        Ok((
            fold(PropertyId::T1, on, trials, Better::Lower, Vec::new()),
            fold_with(
                PropertyId::P5,
                off,
                trials,
                required,
                Better::Higher,
                Vec::new(),
            ),
        ))
    }
}

fn aborted(seed: u64, step: u64, digest: String) -> Trial {
    Trial {
        pass: false,
        margin: f64::NAN,
        step,
        seed,
        digest,
    }
}

fn fold(
    id: PropertyId,
    results: Vec<Trial>,
    trials: usize,
    better: Better,
    checks: Vec<SideCheck>,
) -> PropositionReport {
    fold_with(id, results, trials, trials, better, checks)
}

fn fold_with(
    id: PropertyId,
    results: Vec<Trial>,
    trials: usize,
    required_passes: usize,
    better: Better,
    checks: Vec<SideCheck>,
) -> PropositionReport {
    let passes = results.iter().filter(|t| t.pass).count();
    let margins = results
        .iter()
        .filter(|t| t.pass || id != PropertyId::P5)
        .map(|t| t.margin)
        .filter(|m| !m.is_nan());
    let witness = match better {
        Better::Higher => margins.fold(f64::INFINITY, f64::min),
        Better::Lower => margins.fold(f64::NEG_INFINITY, f64::max),
    };
    let counterexample = results.iter().find(|t| !t.pass).map(|t| Counterexample {
        seed: t.seed,
        step: t.step,
        config_digest: t.digest.clone(),
    });
    let ok = passes >= required_passes && checks.iter().all(|c| c.passed);
    PropositionReport {
        property_id: id,
        trials,
        passes,
        witness: if witness.is_finite() {
            witness
        } else {
            f64::NAN
        },
        counterexample,
        required_passes,
        checks,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    }
}

impl BoundaryConfig {
    fn with_erosion(mut self, erosion_rate: f64) -> Self {
        self.erosion_rate = erosion_rate;
        self
    }
}

fn without_boundaries(mut state: SystemState) -> SystemState {
    state.boundaries = BoundaryConfig::all_inactive(state.boundaries.erosion_rate);
    state
}

/// Ranges with every rate that could push authority toward AI nodes drawn
/// large.
fn adversarial_ranges() -> ParameterRanges {
    ParameterRanges {
        ai_lambda: Range::new(2.0, 10.0),
        ai_phi_irreversible: Range::new(0.5, 1.0),
        ai_phi_critical: Range::new(0.5, 1.0),
        capability: Range::new(2.0, 5.0),
        friction_multiple: Range::new(1.0, 2.0),
        ai_alpha: Range::new(0.5, 2.0),
        expansion_demand: Range::new(0.1, 0.5),
        friction_decay: Range::new(0.1, 0.5),
        erosion_rate: Range::new(0.1, 0.5),
        delta: Range::new(0.1, 0.3),
        psi: Range::new(0.05, 0.2),
        ..ParameterRanges::default()
    }
}

fn restricted_masses(state: &SystemState) -> impl Iterator<Item = (NodeKind, f64)> + '_ {
    let w = &state.economy.domain_weights;
    state
        .nodes
        .iter()
        .map(move |n| (n.kind, control_mass(n, w, true)))
}

fn p5_trial(seed: u64, state: SystemState, horizon: u64) -> Trial {
    let digest = digest(&state);
    let mut current = state;
    loop {
        let sov = sovereign(&current);
        if sov.is_ai {
            // Re-derive the condition literally rather than trusting the flag.
            let winner = current.node(sov.id).expect("sovereign is a node");
            let mass = control_mass(winner, &current.economy.domain_weights, true);
            let top_human = restricted_masses(&current)
                .filter(|(k, _)| *k == NodeKind::Human)
                .map(|(_, m)| m)
                .fold(f64::NEG_INFINITY, f64::max);
            return Trial {
                pass: winner.is_ai() && mass > top_human && holds_sovereign_authority(winner),
                margin: mass - top_human,
                step: current.step,
                seed,
                digest,
            };
        }
        if current.step >= horizon {
            return Trial {
                pass: false,
                margin: f64::NAN,
                step: current.step,
                seed,
                digest,
            };
        }
        current = match advance(&current) {
            Ok((next, _)) => next,
            Err(_) => return aborted(seed, current.step, digest),
        };
    }
}

fn t1_trial(seed: u64, state: SystemState, horizon: u64) -> Trial {
    let digest = digest(&state);
    let exact = state.boundaries.epsilon == 0.0;
    let mut current = state;
    let mut max_ai = f64::NEG_INFINITY;
    let mut min_top_human = f64::INFINITY;
    loop {
        let (mut ai, mut human) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (kind, m) in restricted_masses(&current) {
            match kind {
                NodeKind::Ai => ai = ai.max(m),
                NodeKind::Human => human = human.max(m),
            }
        }
        max_ai = max_ai.max(ai);
        min_top_human = min_top_human.min(human);
        let step_ok = !sovereign(&current).is_ai && (!exact || ai == 0.0);
        if !step_ok {
            return Trial {
                pass: false,
                margin: max_ai,
                step: current.step,
                seed,
                digest,
            };
        }
        if current.step >= horizon {
            break;
        }
        current = match advance(&current) {
            Ok((next, _)) => next,
            Err(_) => return aborted(seed, current.step, digest),
        };
    }
    Trial {
        pass: exact || max_ai < min_top_human,
        margin: max_ai,
        step: current.step,
        seed,
        digest,
    }
}

fn check_t1_preconditions(s: &SystemState) -> Result<(), VerifyError> {
    let b = &s.boundaries;
    if !(b.b1_active && b.b2_active && b.b3_active) {
        return Err(VerifyError::precondition(
            PropertyId::T1,
            "all boundaries (b1, b2, b3) must be active",
        ));
    }
    if b.epsilon != 0.0 || s.ai_nodes().any(|n| n.expansion.approved_budget != 0.0) {
        return Err(VerifyError::precondition(
            PropertyId::T1,
            "epsilon and every approved_budget must be 0",
        ));
    }
    Ok(())
}

fn check_p5_preconditions(s: &SystemState) -> Result<(), VerifyError> {
    let b = &s.boundaries;
    if b.b1_active || b.b2_active || b.b3_active {
        return Err(VerifyError::precondition(
            PropertyId::P5,
            "boundaries must all be inactive for a transfer to be possible",
        ));
    }
    if !(b.erosion_rate > 0.0) || !(s.economy.friction_decay > 0.0) {
        return Err(VerifyError::precondition(
            PropertyId::P5,
            "erosion_rate and friction_decay must be > 0",
        ));
    }
    Ok(())
}

fn check_p3_preconditions(s: &SystemState) -> Result<(), VerifyError> {
    let e = &s.economy;
    let fail = |m: &str| Err(VerifyError::precondition(PropertyId::P3, m));
    if !(e.delta > 0.0 && e.psi > 0.0) {
        return fail("delta and psi must be > 0");
    }
    if e.tau > 1.0 {
        return fail("tau must be <= 1");
    }
    let leader = leading_node(s);
    let lead = s.nodes[leader].quality / s.nodes[leader].cost;
    let others = || {
        s.nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != leader)
            .map(|(_, n)| n)
    };
    if others().any(|n| n.quality / n.cost >= lead) {
        return fail("one node needs a strictly higher quality/cost ratio");
    }
    // Quality feedback raises utility by psi * share / cost, so a leader
    // with a higher cost can be overtaken.
    if others().any(|n| n.cost < s.nodes[leader].cost) {
        return fail("the leading node's cost must not exceed any other node's");
    }
    Ok(())
}

fn leading_node(s: &SystemState) -> usize {
    let ratio = |i: usize| s.nodes[i].quality / s.nodes[i].cost;
    (0..s.nodes.len())
        .reduce(|a, b| if ratio(b) > ratio(a) { b } else { a })
        .expect("non-empty state")
}

/// 2 to 4 nodes with equal cost and no complementarity; one random node's
/// quality/cost ratio leads the rest by the fixed advantage.
fn seeded_advantage(seed: u64, rng: &mut ChaCha8Rng) -> Result<SystemState, VerifyError> {
    let n = rng.random_range(2..=4usize);
    let ranges = ParameterRanges {
        expansion_demand: Range::fixed(0.0),
        ..ParameterRanges::default()
    };
    let mut s = generate_random_system(seed, 1, n - 1, &ranges)?;
    s.economy.delta = 0.05;
    s.economy.psi = 0.02;
    s.economy.eta = 1.0;
    s.economy.tau = 0.5;
    let cost = rng.random_range(0.5..=2.0);
    for node in &mut s.nodes {
        node.cost = cost;
        node.complementarity = 0.0;
    }
    let leader = rng.random_range(0..n);
    let best_other = s
        .nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != leader)
        .map(|(_, n)| n.quality / n.cost)
        .fold(f64::NEG_INFINITY, f64::max);
    s.nodes[leader].quality = (best_other + P3_ADVANTAGE) * cost;
    Ok(s)
}

/// Largest deviation from uniform shares over `horizon` steps for four
/// nodes with identical utility.
fn symmetric_spread(horizon: u64) -> Option<f64> {
    let ranges = ParameterRanges {
        human_lambda: Range::fixed(1.0),
        ai_lambda: Range::fixed(1.0),
        iota: Range::fixed(1.0),
        rho: Range::fixed(1.0),
        human_phi_irreversible: Range::fixed(0.5),
        human_phi_critical: Range::fixed(0.5),
        ai_phi_irreversible: Range::fixed(0.0),
        ai_phi_critical: Range::fixed(0.0),
        phi_ordinary: Range::fixed(0.5),
        friction_multiple: Range::fixed(2.0),
        quality: Range::fixed(1.0),
        cost: Range::fixed(1.0),
        complementarity: Range::fixed(0.0),
        ..ParameterRanges::default()
    };
    // Humans and AI nodes differ only in rate and capability, which routing
    // ignores.
    let mut s = generate_random_system(0, 2, 2, &ranges).ok()?;
    s.economy.delta = 0.05;
    s.economy.psi = 0.02;
    s.economy.eta = 1.0;
    s.economy.tau = 0.5;
    let n = s.nodes.len() as f64;
    let mut worst: f64 = 0.0;
    let mut current = s;
    for _ in 0..=horizon {
        for node in &current.nodes {
            worst = worst.max((node.share - 1.0 / n).abs());
        }
        if current.step >= horizon {
            break;
        }
        current = advance(&current).ok()?.0;
    }
    Some(worst)
}

/// Fraction of `trials` batches of `n` Bernoulli(p) actions with at least
/// one failure.
pub fn monte_carlo_p_irr(
    p: f64,
    n: u64,
    trials: u64,
    seed: u64,
    workers: Workers,
) -> Result<f64, SweepError> {
    const CHUNKS: u64 = 64;
    let hits = workers.map((0..CHUNKS).collect(), |c| {
        let mut rng = stream(seed, Stream::MonteCarlo, c);
        let count = trials / CHUNKS + u64::from(c < trials % CHUNKS);
        (0..count)
            .filter(|_| bernoulli_trial(p, n, &mut rng))
            .count() as u64
    })?;
    Ok(hits.iter().sum::<u64>() as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Strictness;
    use crate::model::{AuthorityProfile, DecisionNode, EconomyParams};

    fn harness() -> Harness {
        Harness::new(11)
    }

    #[test]
    fn property_ids_parse() {
        assert_eq!("p3".parse::<PropertyId>().unwrap(), PropertyId::P3);
        assert_eq!("T1".parse::<PropertyId>().unwrap(), PropertyId::T1);
        assert!("P9".parse::<PropertyId>().is_err());
    }

    #[test]
    fn p1_single_node_one_step() {
        let mut ai = DecisionNode::new(0, NodeKind::Ai);
        ai.alpha = 1.0;
        ai.capability = 1.0;
        ai.friction = 1.0;
        let mut human = DecisionNode::new(1, NodeKind::Human);
        ai.share = 0.5;
        human.share = 0.5;
        let economy = EconomyParams {
            friction_floor: 1.0,
            ..EconomyParams::default()
        };
        let s =
            SystemState::new(vec![ai, human], BoundaryConfig::default(), economy, 1.0, 0).unwrap();
        let before = aggregate_ai_density(&s);
        let next = advance(&s).unwrap().0;
        assert_eq!(aggregate_ai_density(&next) - before, 1.0);
    }

    #[test]
    fn p1_small_run_passes() {
        let r = harness().check_p1_scaling(10, 30).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.witness >= -P1_TOLERANCE);
    }

    #[test]
    fn p2_small_run_passes() {
        let r = harness().check_p2_responsibility(5).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn p3_small_run_passes() {
        let r = harness().check_p3_concentration(5, 500, 0.95).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.witness > 0.95);
    }

    #[test]
    fn p3_two_node_closed_form() {
        // Two nodes with equal cost 1: the utility gap g follows
        // g' = g + (eta*delta + psi) * (2*s - 1) with s = 1 / (1 + exp(-g / tau)).
        let mut a = DecisionNode::new(0, NodeKind::Human);
        a.quality = 1.1;
        a.share = 0.5;
        let mut b = DecisionNode::new(1, NodeKind::Ai);
        b.share = 0.5;
        let e = EconomyParams {
            delta: 0.05,
            psi: 0.02,
            tau: 0.5,
            ..EconomyParams::default()
        };
        let mut s = SystemState::new(vec![a, b], BoundaryConfig::default(), e, 1.0, 0).unwrap();
        let mut g: f64 = 0.1;
        for _ in 0..200 {
            let share = 1.0 / (1.0 + (-g / 0.5).exp());
            g += 0.07 * (2.0 * share - 1.0);
            s = advance(&s).unwrap().0;
            assert!((s.nodes[0].share - share).abs() < 1e-12);
        }
        assert!(s.nodes[0].share > 0.95);
    }

    #[test]
    fn p4_side_checks() {
        let r = harness().check_p4_irreversibility(4).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(p_irr_homogeneous(0.0, 1000) == 0.0);
    }

    #[test]
    fn p5_constructed_witness() {
        let mut h = DecisionNode::new(0, NodeKind::Human);
        h.lambda = 5.0;
        h.authority = AuthorityProfile::new(1.0, 0.0, 0.0);
        let mut a = DecisionNode::new(1, NodeKind::Ai);
        a.lambda = 35.0;
        a.authority = AuthorityProfile::new(0.2, 0.0, 0.0);
        h.share = 0.5;
        a.share = 0.5;
        let mut e = EconomyParams::default();
        e.domain_weights.irreversible = 1.0;
        e.domain_weights.critical_resource = 0.0;
        e.domain_weights.ordinary = 0.0;
        let s =
            SystemState::new(vec![h, a], BoundaryConfig::all_inactive(0.02), e, 1.0, 0).unwrap();
        let t = p5_trial(0, s, 0);
        assert!(t.pass);
        assert_eq!(t.step, 0);
        assert!((t.margin - 2.0).abs() < 1e-12);
    }

    #[test]
    fn p5_rejects_active_boundaries() {
        let text = "[boundaries]\nb1_active = true\nb2_active = true\nb3_active = true\n[nodes.0]\nkind = \"human\"\n[nodes.1]\nkind = \"ai\"\n";
        let sc = Scenario::parse(text, Strictness::Strict).unwrap().scenario;
        let err = harness()
            .with_scenario(sc)
            .check_p5_transfer(2, 10, 0.9)
            .unwrap_err();
        assert!(matches!(
            err,
            VerifyError::Precondition {
                property: PropertyId::P5,
                ..
            }
        ));
    }

    #[test]
    fn t1_small_run_is_exactly_zero() {
        let r = harness().check_t1_stabilization(20, 50, 0.0).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.witness, 0.0);
        let r = harness().check_t1_stabilization(5, 50, 0.01).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn dropping_b1_mid_run_lets_mass_appear() {
        let mut s = generate_random_system(3, 2, 2, &adversarial_ranges()).unwrap();
        s.boundaries = BoundaryConfig::all_active().with_erosion(0.1);
        s.apply_structural_boundaries();
        for _ in 0..50 {
            s = advance(&s).unwrap().0;
        }
        let top_ai = |s: &SystemState| {
            restricted_masses(s)
                .filter(|(k, _)| *k == NodeKind::Ai)
                .map(|(_, m)| m)
                .fold(0.0, f64::max)
        };
        assert_eq!(top_ai(&s), 0.0);
        s.boundaries.b1_active = false;
        let mut appeared = false;
        for _ in 0..20 {
            s = advance(&s).unwrap().0;
            appeared |= top_ai(&s) > 0.0;
        }
        assert!(appeared);
    }

    #[test]
    fn reports_are_deterministic_across_workers() {
        let a = harness()
            .with_workers(Workers::new(1))
            .check_p1_scaling(6, 20)
            .unwrap();
        let b = harness()
            .with_workers(Workers::new(4))
            .check_p1_scaling(6, 20)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failing_trials_produce_counterexamples() {
        let results = vec![
            Trial {
                pass: true,
                margin: 1.0,
                step: 3,
                seed: 1,
                digest: "a".into(),
            },
            Trial {
                pass: false,
                margin: -1.0,
                step: 7,
                seed: 2,
                digest: "b".into(),
            },
        ];
        let r = fold(PropertyId::P1, results, 2, Better::Higher, Vec::new());
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.witness, -1.0);
        assert_eq!(r.counterexample.unwrap().seed, 2);
    }
}
