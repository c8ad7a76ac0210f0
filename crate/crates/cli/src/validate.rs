//! Self-check run by `pcp-mmwave validate`: library invariants against
//! independent oracles, and analytical results against simulation.

use std::fmt::Write;

use pcp_mmwave::analytical::{
    coverage_lower_bound, laplace_inter, laplace_intra, CoverageFlags, Evaluator,
};
use pcp_mmwave::model::{
    cluster_center_distance_pdf, interferer_distance_pdf, serving_distance_pdf, AssociationModel, LosCumulative,
    NetworkConfig,
};
use pcp_mmwave::montecarlo::{estimate_coverage_grid, laplace_oracle_many, BlockageMode, CoverageGrid, OracleTarget, SimOptions};
use pcp_mmwave::quad::{integrate, Tolerance};
use pcp_mmwave::special_fn::{bessel_i0, marcum_q1};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::presets::FrequencyPreset;
use crate::sweep::format_sig;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub trials: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "validation seed={} trials={}", self.seed, self.trials);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<28} measured={:<16} tolerance={}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                format_sig(c.measured),
                format_sig(c.tolerance),
            );
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(s, "{} of {} checks passed", self.checks.len() - failed, self.checks.len());
        s
    }
}

fn check(name: &'static str, measured: f64, tolerance: f64) -> Check {
    Check {
        name,
        measured,
        tolerance,
        passed: measured <= tolerance,
    }
}

fn pdf_mass_error() -> Result<f64, CliError> {
    let tol = Tolerance::new(1e-11, 1e-11, 400);
    let mut worst: f64 = 0.0;
    for sigma in [5.0, 10.0, 20.0, 40.0] {
        for (v_frac, m) in [(0.0, 1), (0.3, 5), (1.0, 20), (2.0, 40), (4.0, 10)] {
            let mut cfg = NetworkConfig::default();
            cfg.scatter_std = sigma;
            cfg.cluster_tx_count = m;
            cfg.mean_active = 1.0;
            let v = v_frac * sigma;
            let hi = v + 14.0 * sigma;
            for model in AssociationModel::ALL {
                let mass = integrate(|r| serving_distance_pdf(model, r, v, &cfg).unwrap_or(f64::NAN), 0.0, hi, &tol)?.value;
                let want = match model {
                    AssociationModel::ClosestLos => {
                        let p = LosCumulative::new(v, cfg.variance(), cfg.channel.blockage_rate).total();
                        1.0 - (1.0 - p).powi(m as i32)
                    }
                    _ => 1.0,
                };
                worst = worst.max((mass - want).abs());
            }
            let r1 = 0.5 * sigma;
            let mass = integrate(
                |s| interferer_distance_pdf(AssociationModel::Closest, s, v, r1, &cfg).unwrap_or(f64::NAN),
                r1,
                hi,
                &tol,
            )?
            .value;
            worst = worst.max((mass - 1.0).abs());
            let mass = integrate(|x| cluster_center_distance_pdf(x, &cfg).unwrap_or(f64::NAN), 0.0, 14.0 * sigma, &tol)?.value;
            worst = worst.max((mass - 1.0).abs());
        }
    }
    Ok(worst)
}

fn i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..500 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

fn special_function_error() -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let x = 0.3 * k as f64;
        let got = bessel_i0(x)?;
        worst = worst.max((got - i0_series(x)).abs() / i0_series(x).max(1.0));
    }
    let tol = Tolerance::new(1e-13, 1e-13, 400);
    for k in 0..100 {
        let a = 0.1 * (k % 10) as f64 * 1.5;
        let b = 0.25 * (k / 10) as f64;
        // Q1(a, b) = 1 - ∫_0^b x exp(-(x² + a²)/2) I0(a x) dx.
        let head = integrate(|x| x * (-(x - a).powi(2) / 2.0).exp() * i0_series(a * x) * (-a * x).exp(), 0.0, b, &tol)?.value;
        worst = worst.max((marcum_q1(a, b)? - (1.0 - head)).abs());
    }
    Ok(worst)
}

fn laplace_z_score(cfg: &NetworkConfig, seed: u64, trials: u64) -> Result<f64, CliError> {
    let (v, r) = (cfg.scatter_std, 0.5 * cfg.scatter_std);
    let points = [(1e8, 1), (1e9, 2), (1e10, 1)];
    let mut worst: f64 = 0.0;
    let z = |a: f64, mean: f64, se: f64| {
        if se > 0.0 {
            (a - mean).abs() / se
        } else if (a - mean).abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    for model in AssociationModel::ALL {
        let mc = laplace_oracle_many(cfg, model, OracleTarget::Intra { v, r_serving: r }, &points, trials, seed)?;
        for (&(s, n), e) in points.iter().zip(&mc) {
            let a = laplace_intra(model, n, s, v, r, CoverageFlags::EXACT, cfg)?;
            worst = worst.max(z(a, e.mean, e.std_error));
        }
    }
    let mc = laplace_oracle_many(cfg, AssociationModel::Uniform, OracleTarget::Inter, &points, trials, seed)?;
    for (&(s, n), e) in points.iter().zip(&mc) {
        worst = worst.max(z(laplace_inter(n, s, cfg)?, e.mean, e.std_error));
    }
    Ok(worst)
}

/// Runs every check. `tolerance_scale` multiplies all tolerances.
pub fn validate(run: &RunConfig, seed: u64, trials: u64, tolerance_scale: f64) -> Result<Report, CliError> {
    if trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    if !(tolerance_scale >= 0.0 && tolerance_scale.is_finite()) {
        return Err(CliError::usage("tolerance scale must be finite and >= 0"));
    }
    let t = |x: f64| x * tolerance_scale;
    let cfg = &run.network;
    let ev = Evaluator::default();
    let mut checks = vec![
        check("pdf_normalization", pdf_mass_error()?, t(1e-6)),
        check("special_functions", special_function_error()?, t(1e-9)),
        check("laplace_vs_oracle_z", laplace_z_score(cfg, seed, trials)?, t(4.0)),
    ];

    let gamma = run.gamma_th();
    let analytic: Vec<f64> = AssociationModel::ALL
        .iter()
        .map(|&m| ev.coverage(m, gamma, CoverageFlags::EXACT, cfg).map(|p| p.value))
        .collect::<Result<_, _>>()?;
    let grid = CoverageGrid {
        models: AssociationModel::ALL.to_vec(),
        options: vec![SimOptions::default()],
        thresholds: vec![gamma],
    };
    let mc = estimate_coverage_grid(cfg, &grid, trials, seed, BlockageMode::IidExponential)?;
    let gap = (0..3)
        .map(|i| (analytic[i] - mc.get(i, 0, 0).p_hat).abs())
        .fold(0.0, f64::max);
    checks.push(check("coverage_analytical_vs_mc", gap, t(0.05)));
    let disorder = (analytic[1] - analytic[2]).max(analytic[0] - analytic[1]);
    checks.push(check("model_ordering_violation", disorder.max(0.0), t(1e-9)));

    let mut lb_cfg = *cfg;
    FrequencyPreset::from_ghz(60).expect("preset").apply(&mut lb_cfg);
    let mut excess: f64 = 0.0;
    for db in [0.0, 10.0, 20.0, 30.0] {
        let g = 10f64.powf(db / 10.0);
        let lb = coverage_lower_bound(g, &lb_cfg)?;
        let upper = ev.coverage(AssociationModel::Uniform, g, CoverageFlags::LOS_INTRA_ONLY_APPROX, &lb_cfg)?.raw;
        excess = excess.max(lb - upper);
    }
    checks.push(check("lower_bound_excess", excess.max(0.0), t(1e-9)));

    Ok(Report { seed, trials, checks })
}
