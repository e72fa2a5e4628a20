//! Closed-form and simulation values checked against independent oracles.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sovsim_core::metrics::{p_irr_homogeneous, paths::LayeredDag, traceability_bound_with};
use sovsim_core::sweeps::{grid_sweep, run_trajectory, Grid, SweepSpec, Workers};
use sovsim_core::{load_config, Scenario, Strictness};

fn scenario(name: &str) -> String {
    let path = format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap()
}

/// Fraction of `trials` batches of `n` Bernoulli(p) draws with at least one
/// success, sampled in parallel chunks.
fn bernoulli_estimate(p: f64, n: u64, trials: u64, seed: u64) -> f64 {
    const CHUNKS: u64 = 256;
    let hits: u64 = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(c));
            let count = trials / CHUNKS + u64::from(c < trials % CHUNKS);
            (0..count)
                .filter(|_| (0..n).any(|_| rng.random_bool(p)))
                .count() as u64
        })
        .sum();
    hits as f64 / trials as f64
}

#[test]
fn p_irr_matches_ten_million_bernoulli_trials() {
    let trials = 10_000_000;
    let analytic = p_irr_homogeneous(0.01, 100);
    assert!((analytic - 0.633_967_658_726_770_3).abs() < 1e-15);
    let mc = bernoulli_estimate(0.01, 100, trials, 1);
    let se = (analytic * (1.0 - analytic) / trials as f64).sqrt();
    assert!(
        (mc - analytic).abs() < 3.0 * se,
        "mc {mc} analytic {analytic} se {se}"
    );
}

#[test]
fn p_irr_matches_monte_carlo_over_many_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let trials = 40_000;
    let mut outside = 0;
    for k in 0..50 {
        let p = rng.random_range(0.001..0.05);
        let n = rng.random_range(1..200);
        let analytic = p_irr_homogeneous(p, n);
        let mc = bernoulli_estimate(p, n, trials, 1000 + k);
        let se = (analytic * (1.0 - analytic) / trials as f64)
            .sqrt()
            .max(1e-6);
        if (mc - analytic).abs() > 3.0 * se {
            outside += 1;
        }
    }
    // Under the null about 0.3% of pairs fall outside 3 SE.
    assert!(outside <= 2, "{outside} of 50 pairs outside 3 SE");
}

#[test]
fn low_local_risk_against_exact_rational_arithmetic() {
    // (9999/10000)^100000 to 30 decimal places, from integers only.
    let n = 100_000u32;
    let digits = 30u32;
    let num = BigUint::from(9999u32).pow(n) * BigUint::from(10u32).pow(digits);
    let den = BigUint::from(10u32).pow(4 * n);
    let survival_scaled = num / den;
    let survival: f64 =
        survival_scaled.to_string().parse::<f64>().unwrap() / 10f64.powi(digits as i32);
    let exact = 1.0 - survival;
    let ours = p_irr_homogeneous(1e-4, 100_000);
    assert!((ours - exact).abs() < 1e-12, "ours {ours} exact {exact}");
    assert!((ours - 0.9999546).abs() < 1e-7);
}

#[test]
fn traceability_bound_values() {
    assert_eq!(traceability_bound_with(999.0, 1.0, 1.0), 0.001);
    assert_eq!(
        [0.0, 1.0, 3.0].map(|e| traceability_bound_with(e, 1.0, 1.0)),
        [1.0, 0.5, 0.25]
    );
    assert!(traceability_bound_with(1e6, 1.0, 1.0) < 2e-6);
}

#[test]
fn path_ratio_strictly_falls_across_density_levels() {
    fn enumerate(dag: &LayeredDag) -> (u64, u64) {
        // Every path picks one node per layer; human-origin iff the first
        // pick is the human node.
        let total: u64 = dag.layers.iter().map(|l| l.len() as u64).product();
        let per_first = total / dag.layers[0].len() as u64;
        let humans = dag.layers[0]
            .iter()
            .filter(|o| **o == sovsim_core::metrics::paths::Origin::Human)
            .count() as u64;
        (total, humans * per_first)
    }
    let mut last = f64::INFINITY;
    for e in [1.0, 2.0, 3.0] {
        let dag = LayeredDag::build(e, 1.0, 3, 5).unwrap();
        let (total, human) = enumerate(&dag);
        let stats = dag.count_paths();
        assert_eq!(
            (stats.total_paths, stats.human_origin_paths),
            (total, human)
        );
        assert!(stats.empirical_traceability < last);
        last = stats.empirical_traceability;
    }
}

#[test]
fn baseline_trajectory_is_reproducible() {
    let text = scenario("baseline.cfg");
    let sc = Scenario::parse(&text, Strictness::Strict).unwrap().scenario;
    let a = run_trajectory(&sc.build(7).unwrap(), 100).unwrap();
    let b = run_trajectory(&sc.build(7).unwrap(), 100).unwrap();
    assert_eq!(a.len(), 101);
    assert_eq!(
        sovsim_core::io::trajectory_csv(&a),
        sovsim_core::io::trajectory_csv(&b)
    );
}

#[test]
fn erosion_never_lowers_the_transfer_rate() {
    let text = scenario("erosion.cfg");
    let sc = Scenario::parse(&text, Strictness::Strict).unwrap().scenario;
    let spec = SweepSpec {
        parameter_path: "boundaries.erosion_rate".into(),
        grid: Grid::Values {
            values: vec![0.0, 0.05],
        },
        runs_per_point: 20,
        horizon: 200,
        base_seed: 3,
    };
    let rows = grid_sweep(&spec, &sc, Workers::default()).unwrap();
    assert!(rows[0].transfer_rate <= rows[1].transfer_rate);
}

#[test]
fn active_boundaries_give_a_zero_transfer_curve() {
    let text = scenario("theorem.cfg");
    let sc = Scenario::parse(&text, Strictness::Strict).unwrap().scenario;
    let spec = SweepSpec {
        parameter_path: "economy.friction_decay".into(),
        grid: Grid::Linear {
            lo: 0.0,
            hi: 0.5,
            count: 4,
        },
        runs_per_point: 5,
        horizon: 200,
        base_seed: 3,
    };
    let rows = grid_sweep(&spec, &sc, Workers::default()).unwrap();
    assert!(rows.iter().all(|r| r.transfer_rate == 0.0));
}

#[test]
fn sweep_points_aggregate_independently() {
    let text = scenario("erosion.cfg");
    let sc = Scenario::parse(&text, Strictness::Strict).unwrap().scenario;
    let values = vec![0.01, 0.02, 0.03];
    let spec = |values: Vec<f64>| SweepSpec {
        parameter_path: "economy.friction_decay".into(),
        grid: Grid::Values { values },
        runs_per_point: 8,
        horizon: 200,
        base_seed: 11,
    };
    let together = grid_sweep(&spec(values.clone()), &sc, Workers::new(3)).unwrap();
    let apart: Vec<_> = values
        .iter()
        .flat_map(|&v| grid_sweep(&spec(vec![v]), &sc, Workers::new(1)).unwrap())
        .collect();
    assert_eq!(format!("{together:?}"), format!("{apart:?}"));
}

#[test]
fn run_index_changes_the_trajectory() {
    let text = scenario("erosion.cfg");
    let sc = Scenario::parse(&text, Strictness::Strict).unwrap().scenario;
    let seed = |run| sovsim_core::sweeps::run_seed(5, run);
    let a = run_trajectory(&sc.build(seed(0)).unwrap(), 10).unwrap();
    let b = run_trajectory(&sc.build(seed(1)).unwrap(), 10).unwrap();
    let again = run_trajectory(&sc.build(seed(0)).unwrap(), 10).unwrap();
    assert_ne!(format!("{a:?}"), format!("{b:?}"));
    assert_eq!(format!("{a:?}"), format!("{again:?}"));
}

#[test]
fn config_error_for_bad_floor() {
    let text =
        "[economy]\nfriction_floor = 0.0\n[nodes.0]\nkind = \"human\"\n[nodes.1]\nkind = \"ai\"\n";
    assert!(load_config(text)
        .unwrap_err()
        .to_string()
        .contains("friction_floor must be > 0"));
}
