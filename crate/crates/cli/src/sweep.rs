//! Parameter sweeps and their CSV output.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use pcp_mmwave::analytical::{ase_from_coverage, coverage_lower_bound, CoverageFlags, Evaluator};
use pcp_mmwave::model::{blockage_rate_from_avg_los, free_space_intercept, AssociationModel};
use pcp_mmwave::montecarlo::{estimate_coverage_grid, BlockageMode, CoverageGrid, LinkFilter, SimOptions};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    MeanActive,
    GammaThDb,
    ScatterStd,
    CarrierHz,
    AvgLosDistance,
}

impl Axis {
    pub const ALL: [Axis; 5] = [
        Axis::MeanActive,
        Axis::GammaThDb,
        Axis::ScatterStd,
        Axis::CarrierHz,
        Axis::AvgLosDistance,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Axis::MeanActive => "mean_active",
            Axis::GammaThDb => "gamma_th_db",
            Axis::ScatterStd => "scatter_std",
            Axis::CarrierHz => "carrier_hz",
            Axis::AvgLosDistance => "avg_los_distance",
        }
    }

    pub fn apply(&self, x: f64, cfg: &mut RunConfig) {
        let net = &mut cfg.network;
        match self {
            Axis::MeanActive => net.mean_active = x,
            Axis::GammaThDb => cfg.gamma_th_db = x,
            Axis::ScatterStd => net.scatter_std = x,
            Axis::CarrierHz => {
                net.carrier_hz = x;
                net.channel.intercept_los = free_space_intercept(x);
                net.channel.intercept_nlos = net.channel.intercept_los;
            }
            Axis::AvgLosDistance => net.channel.blockage_rate = blockage_rate_from_avg_los(x),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| CliError::usage(format!("unknown axis `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Coverage,
    Ase,
}

/// Simulation variants: which SINR terms are kept and how blockage is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum McVariant {
    Full,
    IntraOnly,
    InterOnly,
    LosInterference,
    NlosInterference,
    NoInterference,
    NoNoise,
    LosBall,
    /// Every link LOS, intra-cluster interference only, no noise.
    LosIntra,
}

impl McVariant {
    pub const ALL: [McVariant; 9] = [
        McVariant::Full,
        McVariant::IntraOnly,
        McVariant::InterOnly,
        McVariant::LosInterference,
        McVariant::NlosInterference,
        McVariant::NoInterference,
        McVariant::NoNoise,
        McVariant::LosBall,
        McVariant::LosIntra,
    ];

    pub fn options(&self) -> SimOptions {
        let full = SimOptions::default();
        match self {
            McVariant::Full | McVariant::LosBall => full,
            McVariant::IntraOnly => SimOptions {
                include_inter: false,
                ..full
            },
            McVariant::InterOnly => SimOptions {
                include_intra: false,
                ..full
            },
            McVariant::LosInterference => SimOptions {
                interferers: LinkFilter::LosOnly,
                ..full
            },
            McVariant::NlosInterference => SimOptions {
                interferers: LinkFilter::NlosOnly,
                ..full
            },
            McVariant::NoInterference => SimOptions {
                include_intra: false,
                include_inter: false,
                ..full
            },
            McVariant::NoNoise => SimOptions {
                include_noise: false,
                ..full
            },
            McVariant::LosIntra => SimOptions::intra_los_only(),
        }
    }

    pub fn blockage(&self, cfg: &RunConfig) -> BlockageMode {
        match self {
            McVariant::LosBall => BlockageMode::LosBall {
                radius: cfg.network.los_ball_radius(),
            },
            McVariant::LosIntra => BlockageMode::AlwaysLos,
            _ => BlockageMode::IidExponential,
        }
    }

    fn suffix(&self) -> &'static str {
        match self {
            McVariant::Full => "",
            McVariant::IntraOnly => "_intra_only",
            McVariant::InterOnly => "_inter_only",
            McVariant::LosInterference => "_los_interference",
            McVariant::NlosInterference => "_nlos_interference",
            McVariant::NoInterference => "_no_interference",
            McVariant::NoNoise => "_no_noise",
            McVariant::LosBall => "_los_ball",
            McVariant::LosIntra => "_los_intra",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Analytical,
    AnalyticalApprox,
    /// Intra-cluster LOS interference only, no noise (uniform model).
    AnalyticalLosIntra,
    AnalyticalLosIntraApprox,
    LowerBound,
    MonteCarlo(McVariant),
}

impl Engine {
    pub fn all() -> Vec<Engine> {
        let mut v = vec![
            Engine::Analytical,
            Engine::AnalyticalApprox,
            Engine::AnalyticalLosIntra,
            Engine::AnalyticalLosIntraApprox,
            Engine::LowerBound,
        ];
        v.extend(McVariant::ALL.map(Engine::MonteCarlo));
        v
    }

    /// Analytical coverage values bound the true coverage from above.
    pub fn is_upper_bound(&self) -> bool {
        matches!(
            self,
            Engine::Analytical
                | Engine::AnalyticalApprox
                | Engine::AnalyticalLosIntra
                | Engine::AnalyticalLosIntraApprox
        )
    }

    fn flags(&self) -> Option<CoverageFlags> {
        match self {
            Engine::Analytical => Some(CoverageFlags::EXACT),
            Engine::AnalyticalApprox => Some(CoverageFlags::APPROX),
            Engine::AnalyticalLosIntra => Some(CoverageFlags::LOS_INTRA_ONLY),
            Engine::AnalyticalLosIntraApprox => Some(CoverageFlags::LOS_INTRA_ONLY_APPROX),
            _ => None,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Engine::Analytical => f.write_str("analytical"),
            Engine::AnalyticalApprox => f.write_str("analytical_approx"),
            Engine::AnalyticalLosIntra => f.write_str("analytical_los_intra"),
            Engine::AnalyticalLosIntraApprox => f.write_str("analytical_los_intra_approx"),
            Engine::LowerBound => f.write_str("lower_bound"),
            Engine::MonteCarlo(v) => write!(f, "montecarlo{}", v.suffix()),
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Engine::all()
            .into_iter()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| CliError::usage(format!("unknown engine `{s}`")))
    }
}

/// A named modification of the base configuration; each series becomes its
/// own set of curves.
#[derive(Clone)]
pub struct Series {
    pub label: String,
    apply: Arc<dyn Fn(&mut RunConfig) + Send + Sync>,
}

impl Series {
    pub fn new(label: &str, f: impl Fn(&mut RunConfig) + Send + Sync + 'static) -> Self {
        Series {
            label: label.to_string(),
            apply: Arc::new(f),
        }
    }

    pub fn identity() -> Self {
        Series::new("", |_| {})
    }
}

impl fmt::Debug for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Series").field("label", &self.label).finish()
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub models: Vec<AssociationModel>,
    pub engines: Vec<Engine>,
    pub quantity: Quantity,
    pub series: Vec<Series>,
    pub base: RunConfig,
}

impl SweepSpec {
    pub fn new(axis: Axis, values: Vec<f64>, models: Vec<AssociationModel>, engines: Vec<Engine>) -> Self {
        SweepSpec {
            axis,
            values,
            models,
            engines,
            quantity: Quantity::Coverage,
            series: vec![Series::identity()],
            base: RunConfig::default(),
        }
    }

    pub fn with_series(mut self, series: Vec<Series>) -> Self {
        self.series = series;
        self
    }

    pub fn with_quantity(mut self, quantity: Quantity) -> Self {
        self.quantity = quantity;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.values.is_empty() {
            return Err(CliError::usage("sweep needs at least one axis value"));
        }
        if self.values.iter().any(|x| !x.is_finite()) {
            return Err(CliError::usage("axis values must be finite"));
        }
        if self.models.is_empty() {
            return Err(CliError::usage("sweep needs at least one model"));
        }
        if self.engines.is_empty() {
            return Err(CliError::usage("sweep needs at least one engine"));
        }
        if self.series.is_empty() {
            return Err(CliError::usage("sweep needs at least one series"));
        }
        Ok(())
    }

    pub fn row_count(&self) -> usize {
        self.values.len() * self.series.len() * self.models.len() * self.engines.len()
    }

    /// Configuration of one sweep point.
    pub fn point(&self, value: f64, series: &Series) -> RunConfig {
        let mut cfg = self.base;
        (series.apply)(&mut cfg);
        self.axis.apply(value, &mut cfg);
        cfg
    }
}

/// Parses a sweep file: `axis`, `values`, `models`, `engines` and optionally
/// `quantity` (`coverage` or `ase`). Values are a comma list whose items may
/// be inclusive ranges `start:step:end`.
pub fn parse_spec_str(text: &str, base: &RunConfig) -> Result<SweepSpec, CliError> {
    let mut axis = None;
    let mut values = None;
    let mut models = None;
    let mut engines = None;
    let mut quantity = Quantity::Coverage;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| CliError::parse(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let at_line = |e: CliError| CliError::parse(line, e.to_string());
        let items = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
        match key {
            "axis" => axis = Some(value.parse::<Axis>().map_err(at_line)?),
            "values" => values = Some(parse_values(value).map_err(|m| CliError::parse(line, m))?),
            "models" => {
                models = Some(
                    items()
                        .map(|s| s.parse::<AssociationModel>().map_err(|e| CliError::parse(line, e.to_string())))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
            "engines" => engines = Some(items().map(|s| s.parse::<Engine>().map_err(at_line)).collect::<Result<Vec<_>, _>>()?),
            "quantity" => {
                quantity = match value {
                    "coverage" => Quantity::Coverage,
                    "ase" => Quantity::Ase,
                    _ => return Err(CliError::parse(line, format!("unknown quantity `{value}`"))),
                }
            }
            _ => return Err(CliError::parse(line, format!("unknown key `{key}`"))),
        }
    }
    let missing = |k: &str| CliError::usage(format!("sweep file is missing `{k}`"));
    let mut spec = SweepSpec::new(
        axis.ok_or_else(|| missing("axis"))?,
        values.ok_or_else(|| missing("values"))?,
        models.unwrap_or_else(|| AssociationModel::ALL.to_vec()),
        engines.ok_or_else(|| missing("engines"))?,
    )
    .with_quantity(quantity);
    spec.base = *base;
    spec.validate()?;
    Ok(spec)
}

fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [x] => out.push(num(x)?),
            [a, step, b] => {
                let (a, step, b) = (num(a)?, num(step)?, num(b)?);
                if !(step > 0.0) || b < a {
                    return Err(format!("range `{item}` needs a positive step and end >= start"));
                }
                let n = ((b - a) / step + 1e-9).floor() as usize;
                if n > 100_000 {
                    return Err(format!("range `{item}` has too many points"));
                }
                out.extend((0..=n).map(|k| a + k as f64 * step));
            }
            _ => return Err(format!("`{item}` is neither a number nor start:step:end")),
        }
    }
    if out.is_empty() {
        return Err("no values given".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub axis_value: f64,
    pub model: String,
    pub engine: Engine,
    pub value: f64,
    pub ci_half_width: Option<f64>,
    pub seed: Option<u64>,
    pub error: Option<String>,
    pub non_convergent: bool,
}

impl Row {
    pub fn is_upper_bound(&self) -> bool {
        self.engine.is_upper_bound()
    }
}

struct Outcome {
    value: f64,
    ci: Option<f64>,
}

fn evaluate_analytic(
    ev: &Evaluator,
    engine: Engine,
    model: AssociationModel,
    cfg: &RunConfig,
    quantity: Quantity,
) -> pcp_mmwave::Result<Outcome> {
    let g = cfg.gamma_th();
    let p = match engine {
        Engine::LowerBound => {
            if model != AssociationModel::Uniform {
                return Err(pcp_mmwave::Error::Usage(
                    "the closed-form lower bound is defined for the uniform model only".into(),
                ));
            }
            coverage_lower_bound(g, &cfg.network)?
        }
        _ => ev.coverage(model, g, engine.flags().expect("analytical engine"), &cfg.network)?.value,
    };
    Ok(Outcome {
        value: scale(quantity, cfg, p),
        ci: None,
    })
}

fn scale(quantity: Quantity, cfg: &RunConfig, p: f64) -> f64 {
    match quantity {
        Quantity::Coverage => p,
        Quantity::Ase => ase_from_coverage(cfg.network.mean_active, cfg.network.parent_density, cfg.gamma_th(), p),
    }
}

/// All Monte Carlo rows of one sweep point, one grid call per blockage mode.
fn evaluate_mc(
    spec: &SweepSpec,
    cfg: &RunConfig,
    opts: &RunOptions,
) -> Vec<((AssociationModel, McVariant), pcp_mmwave::Result<Outcome>)> {
    let variants: Vec<McVariant> = spec
        .engines
        .iter()
        .filter_map(|e| match e {
            Engine::MonteCarlo(v) => Some(*v),
            _ => None,
        })
        .collect();
    let mut out = Vec::new();
    let mut groups: Vec<(BlockageMode, Vec<McVariant>)> = Vec::new();
    for v in variants {
        let b = v.blockage(cfg);
        match groups.iter_mut().find(|(g, _)| *g == b) {
            Some((_, vs)) => vs.push(v),
            None => groups.push((b, vec![v])),
        }
    }
    for (blockage, vs) in groups {
        let grid = CoverageGrid {
            models: spec.models.clone(),
            options: vs.iter().map(McVariant::options).collect(),
            thresholds: vec![cfg.gamma_th()],
        };
        let res = estimate_coverage_grid(&cfg.network, &grid, opts.trials, opts.seed, blockage);
        for (mi, &model) in spec.models.iter().enumerate() {
            for (vi, &v) in vs.iter().enumerate() {
                let r = match &res {
                    Ok(g) => {
                        let e = g.get(mi, vi, 0);
                        Ok(Outcome {
                            value: scale(spec.quantity, cfg, e.p_hat),
                            ci: Some(scale(spec.quantity, cfg, e.half_width_95)),
                        })
                    }
                    Err(e) => Err(e.clone()),
                };
                out.push(((model, v), r));
            }
        }
    }
    out
}

/// Evaluates every row. Points run on the current rayon pool; the returned
/// rows are in spec order whatever the completion order.
pub fn run_sweep(spec: &SweepSpec, opts: &RunOptions, ev: &Evaluator) -> Result<Vec<Row>, CliError> {
    spec.validate()?;
    if opts.trials == 0 && spec.engines.iter().any(|e| matches!(e, Engine::MonteCarlo(_))) {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let points: Vec<(f64, &Series)> = spec
        .values
        .iter()
        .flat_map(|&x| spec.series.iter().map(move |s| (x, s)))
        .collect();
    let blocks: Vec<Vec<Row>> = points
        .par_iter()
        .map(|&(x, series)| {
            let cfg = spec.point(x, series);
            let checked = cfg.network.validate();
            let mc = match checked {
                Ok(()) => evaluate_mc(spec, &cfg, opts),
                Err(_) => Vec::new(),
            };
            let cells: Vec<(AssociationModel, Engine)> = spec
                .models
                .iter()
                .flat_map(|&m| spec.engines.iter().map(move |&e| (m, e)))
                .collect();
            cells
                .par_iter()
                .map(|&(model, engine)| {
                    let outcome = match (&checked, engine) {
                        (Err(e), _) => Err(e.clone()),
                        (Ok(()), Engine::MonteCarlo(v)) => mc
                            .iter()
                            .find(|(k, _)| *k == (model, v))
                            .map(|(_, r)| r.as_ref().map(|o| Outcome { value: o.value, ci: o.ci }).map_err(Clone::clone))
                            .expect("every Monte Carlo cell is simulated"),
                        (Ok(()), _) => evaluate_analytic(ev, engine, model, &cfg, spec.quantity),
                    };
                    let label = if series.label.is_empty() {
                        model.to_string()
                    } else {
                        format!("{model}@{}", series.label)
                    };
                    let seed = matches!(engine, Engine::MonteCarlo(_)).then_some(opts.seed);
                    match outcome {
                        Ok(o) => Row {
                            axis_value: x,
                            model: label,
                            engine,
                            value: o.value,
                            ci_half_width: o.ci,
                            seed,
                            error: None,
                            non_convergent: false,
                        },
                        Err(e) => Row {
                            axis_value: x,
                            model: label,
                            engine,
                            value: f64::NAN,
                            ci_half_width: None,
                            seed,
                            non_convergent: matches!(e, pcp_mmwave::Error::NonConvergence { .. }),
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect()
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

pub const CSV_HEADER: &str = "axis_value,model,engine,coverage_or_ase,ci_half_width,is_upper_bound,seed,error";

/// Shortest `%g`-style rendering with 9 significant digits.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_csv<W: Write>(rows: &[Row], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            format_sig(r.axis_value),
            csv_field(&r.model),
            r.engine,
            format_sig(r.value),
            r.ci_half_width.map(format_sig).unwrap_or_default(),
            r.is_upper_bound(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            csv_field(r.error.as_deref().unwrap_or("")),
        )?;
    }
    w.flush()
}
