use pcp_mmwave::analytical::{laplace_inter, laplace_intra, CoverageFlags};
use pcp_mmwave::model::{db_to_linear, AssociationModel, LosCumulative, NetworkConfig};
use pcp_mmwave::montecarlo::*;
use pcp_mmwave::special_fn::marcum_q1;

fn ks_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max)
}

/// Conditional CDF of the serving distance given the cluster-center distance,
/// computed independently of the simulator.
fn serving_cdf(model: AssociationModel, r: f64, v: f64, cfg: &NetworkConfig) -> f64 {
    let sigma = cfg.scatter_std;
    let m = cfg.cluster_tx_count as i32;
    let q = marcum_q1(v / sigma, r / sigma).unwrap();
    match model {
        AssociationModel::Uniform => 1.0 - q,
        AssociationModel::Closest => 1.0 - q.powi(m),
        AssociationModel::ClosestLos => {
            let los = LosCumulative::new(v, cfg.variance(), cfg.channel.blockage_rate);
            let miss = |p: f64| 1.0 - (1.0 - p).powi(m);
            miss(los.cdf(r)) / miss(los.total())
        }
    }
}

#[test]
fn serving_distance_follows_conditional_law() {
    let cfg = NetworkConfig::default();
    let n = 40_000;
    for model in AssociationModel::ALL {
        let u: Vec<f64> = (0..n)
            .filter_map(|t| {
                let r = sample_realization(&cfg, model, BlockageMode::IidExponential, 2024, t).unwrap();
                let v = r.typical.center[0].hypot(r.typical.center[1]);
                r.serving.map(|s| serving_cdf(model, s.distance, v, &cfg))
            })
            .collect();
        let d = ks_uniform(u);
        assert!(d < 0.01, "{model}: KS distance {d}");
    }
}

#[test]
fn cluster_center_distance_is_rayleigh() {
    let cfg = NetworkConfig::default();
    let var = cfg.variance();
    let u: Vec<f64> = (0..40_000)
        .map(|t| {
            let r = sample_realization(&cfg, AssociationModel::Uniform, BlockageMode::IidExponential, 5, t).unwrap();
            let v2 = r.typical.center[0].powi(2) + r.typical.center[1].powi(2);
            1.0 - (-v2 / (2.0 * var)).exp()
        })
        .collect();
    assert!(ks_uniform(u) < 0.01);
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let mut cfg = NetworkConfig::default();
    cfg.mean_active = 4.0;
    let grid = CoverageGrid {
        models: AssociationModel::ALL.to_vec(),
        options: vec![SimOptions::default(), SimOptions::intra_los_only()],
        thresholds: vec![1.0, 10.0, 100.0],
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_coverage_grid(&cfg, &grid, 5000, 99, BlockageMode::IidExponential).unwrap())
    };
    assert_eq!(run(1), run(4));
    let points = [(1e8, 1), (1e9, 2)];
    let oracle = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| laplace_oracle_many(&cfg, AssociationModel::Closest, OracleTarget::Inter, &points, 3000, 4).unwrap())
    };
    assert_eq!(oracle(1), oracle(4));
}

#[test]
fn laplace_transforms_match_oracle() {
    let cfg = NetworkConfig::default();
    let (v, r) = (cfg.scatter_std, 0.5 * cfg.scatter_std);
    let points = [(1e7, 1), (1e8, 2), (1e9, 1), (1e10, 3), (1e11, 2)];
    let n = 100_000;
    for model in AssociationModel::ALL {
        let target = OracleTarget::Intra { v, r_serving: r };
        let mc = laplace_oracle_many(&cfg, model, target, &points, n, 17).unwrap();
        for (&(s, k), e) in points.iter().zip(&mc) {
            let a = laplace_intra(model, k, s, v, r, CoverageFlags::EXACT, &cfg).unwrap();
            assert!((a - e.mean).abs() <= 3.0 * e.std_error + 1e-12, "{model} s={s} n={k}: {a} vs {e:?}");
        }
    }
    let mc = laplace_oracle_many(&cfg, AssociationModel::Uniform, OracleTarget::Inter, &points[..3], n, 18).unwrap();
    for (&(s, k), e) in points.iter().zip(&mc) {
        let a = laplace_inter(k, s, &cfg).unwrap();
        assert!((a - e.mean).abs() <= 3.0 * e.std_error, "inter s={s} n={k}: {a} vs {e:?}");
    }
}

#[test]
fn common_random_numbers_keep_orderings_exact() {
    // On shared draws, removing interference terms can only raise the SINR.
    let cfg = NetworkConfig::default();
    let full = SimOptions::default();
    let grid = CoverageGrid {
        models: AssociationModel::ALL.to_vec(),
        options: vec![
            full,
            SimOptions {
                include_inter: false,
                ..full
            },
            SimOptions {
                include_intra: false,
                include_inter: false,
                ..full
            },
        ],
        thresholds: vec![db_to_linear(0.0), db_to_linear(10.0), db_to_linear(20.0)],
    };
    let g = estimate_coverage_grid(&cfg, &grid, 4000, 8, BlockageMode::IidExponential).unwrap();
    for m in 0..3 {
        for t in 0..3 {
            assert!(g.get(m, 0, t).p_hat <= g.get(m, 1, t).p_hat);
            assert!(g.get(m, 1, t).p_hat <= g.get(m, 2, t).p_hat);
            if t > 0 {
                assert!(g.get(m, 0, t).p_hat <= g.get(m, 0, t - 1).p_hat);
            }
        }
    }
}

#[test]
fn antenna_scaling_cancels_without_noise() {
    let mut cfg = NetworkConfig::default();
    cfg.mean_active = 6.0;
    let run = |elements| {
        let mut c = cfg;
        c.antenna_elements = elements;
        estimate_coverage(
            &c,
            AssociationModel::Uniform,
            db_to_linear(10.0),
            5000,
            3,
            BlockageMode::AlwaysLos,
            SimOptions::intra_los_only(),
        )
        .unwrap()
        .p_hat
    };
    assert_eq!(run(10), run(40));
}
