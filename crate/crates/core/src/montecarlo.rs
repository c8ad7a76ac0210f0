//! Monte Carlo simulator of the clustered network.
//!
//! Every trial draws from its own ChaCha8 streams, keyed by the seed, a lane
//! and the trial index, so results do not depend on how trials are spread
//! over threads. Lane 0 feeds the typical cluster and lane 1 the other
//! clusters; the other-cluster field is therefore shared by every model and
//! option evaluated in the same trial.
//!
//! The typical user sits at the origin and the center of its cluster is a
//! Gaussian offset from it, so its distance follows the Rayleigh law used by
//! the analysis.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{path_loss_unchecked, truncation_mass, AssociationModel, ChannelParams, NetworkConfig};

/// Trials per parallel work item. Fixed so that the reduction order never
/// depends on the thread count.
const CHUNK: u64 = 1024;

const LANE_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
const LANE_TYPICAL: u64 = 0;
const LANE_FIELD: u64 = 1;

fn stream(seed: u64, lane: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(lane.wrapping_mul(LANE_STRIDE)));
    rng.set_stream(trial);
    rng
}

/// How LOS states are assigned to links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockageMode {
    /// LOS with probability `exp(-ε d)`, independently per link.
    IidExponential,
    /// LOS exactly when `d ≤ radius`.
    LosBall { radius: f64 },
    /// Every link is LOS.
    AlwaysLos,
}

impl BlockageMode {
    pub fn validate(&self) -> Result<()> {
        if let BlockageMode::LosBall { radius } = *self {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::invalid("los_ball_radius", "must be positive"));
            }
        }
        Ok(())
    }

    /// `u` is a uniform draw, consumed in every mode to keep streams aligned.
    #[inline]
    fn is_los(&self, d: f64, u: f64, eps: f64) -> bool {
        match *self {
            BlockageMode::IidExponential => u < (-eps * d).exp(),
            BlockageMode::LosBall { radius } => d <= radius,
            BlockageMode::AlwaysLos => true,
        }
    }
}

/// Which interfering links enter the SINR denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkFilter {
    #[default]
    All,
    LosOnly,
    NlosOnly,
}

impl LinkFilter {
    #[inline]
    fn admits(self, los: bool) -> bool {
        match self {
            LinkFilter::All => true,
            LinkFilter::LosOnly => los,
            LinkFilter::NlosOnly => !los,
        }
    }
}

/// Terms of the SINR denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub include_intra: bool,
    pub include_inter: bool,
    pub include_noise: bool,
    pub interferers: LinkFilter,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            include_intra: true,
            include_inter: true,
            include_noise: true,
            interferers: LinkFilter::All,
        }
    }
}

impl SimOptions {
    /// Intra-cluster LOS interference only, no noise. Pair with
    /// [`BlockageMode::AlwaysLos`] to make every link LOS.
    pub fn intra_los_only() -> Self {
        SimOptions {
            include_intra: true,
            include_inter: false,
            include_noise: false,
            interferers: LinkFilter::LosOnly,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.include_intra || self.include_inter || self.include_noise) {
            return Err(Error::usage(
                "at least one of intra-cluster interference, inter-cluster interference or noise must be included",
            ));
        }
        Ok(())
    }
}

/// One transmitter as seen from the typical user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    /// Position relative to the typical user.
    pub position: [f64; 2],
    pub distance: f64,
    pub los: bool,
    /// Antenna gain product of the link.
    pub gain: f64,
    /// Unit-mean channel power.
    pub fading: f64,
}

impl Link {
    #[inline]
    pub fn received_power(&self, channel: &ChannelParams) -> f64 {
        self.gain * self.fading * path_loss_unchecked(self.distance.max(1e-9), self.los, channel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub center: [f64; 2],
    /// Active transmitters.
    pub links: Vec<Link>,
}

/// One sampled network around the typical user.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRealization {
    /// The typical cluster; its links are the intra-cluster interferers.
    pub typical: Cluster,
    /// `None` when the closest-LOS model finds no LOS candidate.
    pub serving: Option<Link>,
    pub others: Vec<Cluster>,
}

impl NetworkRealization {
    pub fn cluster_count(&self) -> usize {
        1 + self.others.len()
    }
}

/// Precomputed distributions for one configuration.
struct Sampler {
    sigma: f64,
    eps: f64,
    half_width: f64,
    m: usize,
    blockage: BlockageMode,
    g0: f64,
    gains: [f64; 4],
    gain_index: WeightedIndex<f64>,
    fading_los: Gamma<f64>,
    fading_nlos: Gamma<f64>,
    intra_count: Option<Poisson<f64>>,
    cluster_count: Poisson<f64>,
    parent_count: Poisson<f64>,
}

fn poisson(mean: f64) -> Result<Option<Poisson<f64>>> {
    if mean == 0.0 {
        return Ok(None);
    }
    Poisson::new(mean)
        .map(Some)
        .map_err(|e| Error::domain(format!("Poisson mean {mean}: {e}")))
}

fn unit_gamma(shape: u32) -> Result<Gamma<f64>> {
    let k = shape as f64;
    Gamma::new(k, 1.0 / k).map_err(|e| Error::domain(format!("Gamma shape {shape}: {e}")))
}

impl Sampler {
    fn new(cfg: &NetworkConfig, blockage: BlockageMode) -> Result<Self> {
        cfg.validate()?;
        blockage.validate()?;
        let guard = 6.0 * cfg.scatter_std + 3.0 / cfg.channel.blockage_rate;
        if cfg.region_half_width < guard {
            return Err(Error::invalid(
                "region_half_width",
                format!("must be at least 6 sigma + 3/eps = {guard:.1} m to avoid edge effects"),
            ));
        }
        let table = cfg.gain_table()?;
        let w = cfg.region_half_width;
        Ok(Sampler {
            sigma: cfg.scatter_std,
            eps: cfg.channel.blockage_rate,
            half_width: w,
            m: cfg.cluster_tx_count as usize,
            blockage,
            g0: table.boresight_gain(),
            gains: table.gains(),
            gain_index: WeightedIndex::new(table.probabilities())
                .map_err(|e| Error::domain(format!("gain probabilities: {e}")))?,
            fading_los: unit_gamma(cfg.channel.nakagami_los)?,
            fading_nlos: unit_gamma(cfg.channel.nakagami_nlos)?,
            intra_count: poisson(cfg.mean_active - 1.0)?,
            cluster_count: poisson(cfg.mean_active)?.expect("mean_active >= 1"),
            parent_count: poisson(cfg.parent_density * 4.0 * w * w)?.expect("positive window"),
        })
    }

    #[inline]
    fn offset<R: Rng>(&self, rng: &mut R, center: [f64; 2]) -> [f64; 2] {
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        [center[0] + self.sigma * dx, center[1] + self.sigma * dy]
    }

    #[inline]
    fn fading<R: Rng>(&self, rng: &mut R, los: bool) -> f64 {
        if los {
            self.fading_los.sample(rng)
        } else {
            self.fading_nlos.sample(rng)
        }
    }

    /// Draws the LOS state, gain and fading of an interferer at `position`.
    #[inline]
    fn interferer<R: Rng>(&self, rng: &mut R, position: [f64; 2]) -> Link {
        let distance = position[0].hypot(position[1]);
        let los = self.blockage.is_los(distance, rng.random(), self.eps);
        self.finish_interferer(rng, position, distance, los)
    }

    #[inline]
    fn finish_interferer<R: Rng>(&self, rng: &mut R, position: [f64; 2], distance: f64, los: bool) -> Link {
        let gain = self.gains[self.gain_index.sample(rng)];
        Link {
            position,
            distance,
            los,
            gain,
            fading: self.fading(rng, los),
        }
    }

    fn serving<R: Rng>(&self, rng: &mut R, position: [f64; 2], distance: f64, los: bool) -> Link {
        Link {
            position,
            distance,
            los,
            gain: self.g0,
            fading: self.fading(rng, los),
        }
    }

    fn intra_count<R: Rng>(&self, rng: &mut R) -> usize {
        match &self.intra_count {
            Some(p) => (p.sample(rng) as usize).min(self.m - 1),
            None => 0,
        }
    }

    /// Typical cluster centered at `center`: the serving link (if any) and
    /// the active intra-cluster interferers.
    fn typical<R: Rng>(&self, rng: &mut R, model: AssociationModel, center: [f64; 2]) -> (Option<Link>, Vec<Link>) {
        match model {
            AssociationModel::Uniform => {
                let p = self.offset(rng, center);
                let d = p[0].hypot(p[1]);
                let los = self.blockage.is_los(d, rng.random(), self.eps);
                let serving = self.serving(rng, p, d, los);
                let k = self.intra_count(rng);
                let links = (0..k)
                    .map(|_| {
                        let q = self.offset(rng, center);
                        self.interferer(rng, q)
                    })
                    .collect();
                (Some(serving), links)
            }
            AssociationModel::Closest | AssociationModel::ClosestLos => {
                let mut candidates: Vec<([f64; 2], f64, bool)> = (0..self.m)
                    .map(|_| {
                        let p = self.offset(rng, center);
                        let d = p[0].hypot(p[1]);
                        let los = self.blockage.is_los(d, rng.random(), self.eps);
                        (p, d, los)
                    })
                    .collect();
                let eligible = |c: &&([f64; 2], f64, bool)| model == AssociationModel::Closest || c.2;
                let best = candidates
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| eligible(c))
                    .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                    .map(|(i, _)| i);
                let Some(best) = best else {
                    return (None, Vec::new());
                };
                let (p, d, los) = candidates.swap_remove(best);
                let serving = self.serving(rng, p, d, los);
                let k = self.intra_count(rng);
                let chosen = rand::seq::index::sample(rng, candidates.len(), k);
                let links = chosen
                    .iter()
                    .map(|i| {
                        let (q, e, l) = candidates[i];
                        self.finish_interferer(rng, q, e, l)
                    })
                    .collect();
                (Some(serving), links)
            }
        }
    }

    fn typical_center<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        self.offset(rng, [0.0, 0.0])
    }

    /// Visits every active transmitter of every other cluster in the window.
    fn for_each_other<R: Rng, F: FnMut(usize, [f64; 2], Link)>(&self, rng: &mut R, mut visit: F) {
        let parents = self.parent_count.sample(rng) as usize;
        let w = self.half_width;
        for c in 0..parents {
            let center = [rng.random_range(-w..w), rng.random_range(-w..w)];
            let k = (self.cluster_count.sample(rng) as usize).min(self.m);
            for _ in 0..k {
                let p = self.offset(rng, center);
                visit(c, center, self.interferer(rng, p));
            }
        }
    }

    /// Power sums of one trial, split by LOS state.
    fn field_power<R: Rng>(&self, rng: &mut R, channel: &ChannelParams) -> [f64; 2] {
        let mut sums = [0.0; 2];
        self.for_each_other(rng, |_, _, link| {
            sums[usize::from(!link.los)] += link.received_power(channel);
        });
        sums
    }
}

fn power_by_state(links: &[Link], channel: &ChannelParams) -> [f64; 2] {
    let mut sums = [0.0; 2];
    for link in links {
        sums[usize::from(!link.los)] += link.received_power(channel);
    }
    sums
}

fn filtered(sums: [f64; 2], filter: LinkFilter) -> f64 {
    let mut total = 0.0;
    if filter.admits(true) {
        total += sums[0];
    }
    if filter.admits(false) {
        total += sums[1];
    }
    total
}

/// Draws the realization of trial `trial` under `seed`; identical to the one
/// the estimators use for that trial.
pub fn sample_realization(
    cfg: &NetworkConfig,
    model: AssociationModel,
    blockage: BlockageMode,
    seed: u64,
    trial: u64,
) -> Result<NetworkRealization> {
    let sampler = Sampler::new(cfg, blockage)?;
    let mut rng = stream(seed, LANE_TYPICAL, trial);
    let center = sampler.typical_center(&mut rng);
    let (serving, links) = sampler.typical(&mut rng, model, center);
    let mut others: Vec<Cluster> = Vec::new();
    let mut rng = stream(seed, LANE_FIELD, trial);
    sampler.for_each_other(&mut rng, |c, center, link| {
        while others.len() <= c {
            others.push(Cluster {
                center,
                links: Vec::new(),
            });
        }
        others[c].center = center;
        others[c].links.push(link);
    });
    others.retain(|c| !c.links.is_empty());
    Ok(NetworkRealization {
        typical: Cluster { center, links },
        serving,
        others,
    })
}

/// SINR of a realization; `0` when there is no serving link.
pub fn simulate_sinr(realization: &NetworkRealization, cfg: &NetworkConfig, options: SimOptions) -> Result<f64> {
    options.validate()?;
    let Some(serving) = realization.serving else {
        return Ok(0.0);
    };
    let ch = &cfg.channel;
    let intra = power_by_state(&realization.typical.links, ch);
    let mut inter = [0.0; 2];
    for c in &realization.others {
        let p = power_by_state(&c.links, ch);
        inter[0] += p[0];
        inter[1] += p[1];
    }
    Ok(sinr(serving.received_power(ch), intra, inter, cfg.noise_power, &options))
}

#[inline]
fn sinr(signal: f64, intra: [f64; 2], inter: [f64; 2], noise: f64, options: &SimOptions) -> f64 {
    let mut denom = 0.0;
    if options.include_noise {
        denom += noise;
    }
    if options.include_intra {
        denom += filtered(intra, options.interferers);
    }
    if options.include_inter {
        denom += filtered(inter, options.interferers);
    }
    if denom == 0.0 {
        f64::INFINITY
    } else {
        signal / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageEstimate {
    pub p_hat: f64,
    pub half_width_95: f64,
    pub n_trials: u64,
    pub seed: u64,
}

impl CoverageEstimate {
    fn from_count(covered: u64, n_trials: u64, seed: u64) -> Self {
        let p = covered as f64 / n_trials as f64;
        CoverageEstimate {
            p_hat: p,
            half_width_95: 1.96 * (p * (1.0 - p) / n_trials as f64).sqrt(),
            n_trials,
            seed,
        }
    }

    /// Standard error of `p_hat`.
    pub fn std_error(&self) -> f64 {
        self.half_width_95 / 1.96
    }
}

/// Every combination of model, option set and threshold evaluated on common
/// random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub models: Vec<AssociationModel>,
    pub options: Vec<SimOptions>,
    /// Linear SINR thresholds.
    pub thresholds: Vec<f64>,
}

/// Estimates laid out as `[model][option][threshold]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEstimates {
    shape: (usize, usize, usize),
    estimates: Vec<CoverageEstimate>,
}

impl GridEstimates {
    pub fn get(&self, model: usize, option: usize, threshold: usize) -> &CoverageEstimate {
        let (_, no, nt) = self.shape;
        &self.estimates[(model * no + option) * nt + threshold]
    }

    pub fn as_slice(&self) -> &[CoverageEstimate] {
        &self.estimates
    }
}

fn check_trials(n_trials: u64) -> Result<()> {
    if n_trials == 0 {
        return Err(Error::usage("n_trials must be at least 1"));
    }
    Ok(())
}

/// Runs `per_trial` over all trials in fixed chunks and combines the chunk
/// results in chunk order.
fn run_chunks<T, F, G>(n_trials: u64, init: impl Fn() -> T + Sync, per_trial: F, combine: G) -> T
where
    T: Send,
    F: Fn(&mut T, u64) + Sync,
    G: Fn(&mut T, T),
{
    let chunks = n_trials.div_ceil(CHUNK);
    let partial: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for trial in c * CHUNK..((c + 1) * CHUNK).min(n_trials) {
                per_trial(&mut acc, trial);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in partial {
        combine(&mut total, p);
    }
    total
}

pub fn estimate_coverage_grid(
    cfg: &NetworkConfig,
    grid: &CoverageGrid,
    n_trials: u64,
    seed: u64,
    blockage: BlockageMode,
) -> Result<GridEstimates> {
    check_trials(n_trials)?;
    for o in &grid.options {
        o.validate()?;
    }
    for &g in &grid.thresholds {
        if !(g >= 0.0) {
            return Err(Error::domain(format!("SINR threshold must be >= 0, got {g}")));
        }
    }
    let sampler = Sampler::new(cfg, blockage)?;
    let ch = cfg.channel;
    let noise = cfg.noise_power;
    let (nm, no, nt) = (grid.models.len(), grid.options.len(), grid.thresholds.len());
    let needs_field = grid.options.iter().any(|o| o.include_inter);
    let counts = run_chunks(
        n_trials,
        || vec![0u64; nm * no * nt],
        |acc, trial| {
            let inter = if needs_field {
                sampler.field_power(&mut stream(seed, LANE_FIELD, trial), &ch)
            } else {
                [0.0; 2]
            };
            for (mi, &model) in grid.models.iter().enumerate() {
                let mut rng = stream(seed, LANE_TYPICAL, trial);
                let center = sampler.typical_center(&mut rng);
                let (serving, links) = sampler.typical(&mut rng, model, center);
                let Some(serving) = serving else {
                    continue;
                };
                let signal = serving.received_power(&ch);
                let intra = power_by_state(&links, &ch);
                for (oi, options) in grid.options.iter().enumerate() {
                    let s = sinr(signal, intra, inter, noise, options);
                    let base = (mi * no + oi) * nt;
                    for (ti, &g) in grid.thresholds.iter().enumerate() {
                        if s > g {
                            acc[base + ti] += 1;
                        }
                    }
                }
            }
        },
        |total, part| {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        },
    );
    Ok(GridEstimates {
        shape: (nm, no, nt),
        estimates: counts
            .into_iter()
            .map(|c| CoverageEstimate::from_count(c, n_trials, seed))
            .collect(),
    })
}

/// Fraction of trials with SINR above `gamma_th` (linear). Association
/// failures of the closest-LOS model count as outage.
pub fn estimate_coverage(
    cfg: &NetworkConfig,
    model: AssociationModel,
    gamma_th: f64,
    n_trials: u64,
    seed: u64,
    blockage: BlockageMode,
    options: SimOptions,
) -> Result<CoverageEstimate> {
    let grid = CoverageGrid {
        models: vec![model],
        options: vec![options],
        thresholds: vec![gamma_th],
    };
    Ok(*estimate_coverage_grid(cfg, &grid, n_trials, seed, blockage)?.get(0, 0, 0))
}

/// What the Laplace oracle samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleTarget {
    /// Intra-cluster interference given the cluster-center distance `v` and
    /// the serving distance.
    Intra { v: f64, r_serving: f64 },
    /// Interference from all other clusters.
    Inter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_trials: u64,
}

/// Sample means of `exp(-s·n·I)` for several `(s, n)` points on common draws
/// of `I`, with i.i.d. exponential blockage.
///
/// The intra-cluster interferers follow the conditional laws of the analysis:
/// untruncated for the uniform model, beyond the serving distance for the
/// closest model, and for the closest-LOS model a LOS group beyond the
/// serving distance plus an untruncated NLOS group, each an independent
/// thinning of a Poisson(s̄ − 1) set.
pub fn laplace_oracle_many(
    cfg: &NetworkConfig,
    model: AssociationModel,
    target: OracleTarget,
    points: &[(f64, u32)],
    n_trials: u64,
    seed: u64,
) -> Result<Vec<OracleEstimate>> {
    check_trials(n_trials)?;
    for &(s, _) in points {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::domain(format!("Laplace argument must be finite and >= 0, got {s}")));
        }
    }
    let sampler = Sampler::new(cfg, BlockageMode::IidExponential)?;
    let ch = cfg.channel;
    let sigma = cfg.scatter_std;
    if let OracleTarget::Intra { v, r_serving } = target {
        if !(v >= 0.0 && v.is_finite() && r_serving >= 0.0 && r_serving.is_finite()) {
            return Err(Error::domain("conditioning distances must be finite and >= 0"));
        }
        if model != AssociationModel::Uniform {
            let mass = truncation_mass(v, r_serving, sigma)?;
            if mass < 1e-6 {
                return Err(Error::DegenerateSupport(format!(
                    "interferer mass beyond r = {r_serving} is only {mass:e}"
                )));
            }
        }
    }
    let k = points.len();
    let sums = run_chunks(
        n_trials,
        || vec![0.0f64; 2 * k],
        |acc, trial| {
            let mut rng = stream(seed, LANE_TYPICAL, trial);
            let power = match target {
                OracleTarget::Inter => {
                    let p = sampler.field_power(&mut rng, &ch);
                    p[0] + p[1]
                }
                OracleTarget::Intra { v, r_serving } => {
                    intra_power_given(&sampler, &mut rng, model, v, r_serving, &ch)
                }
            };
            for (j, &(s, n)) in points.iter().enumerate() {
                let x = (-s * n as f64 * power).exp();
                acc[2 * j] += x;
                acc[2 * j + 1] += x * x;
            }
        },
        |total, part| {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        },
    );
    let n = n_trials as f64;
    Ok((0..k)
        .map(|j| {
            let mean = sums[2 * j] / n;
            let var = (sums[2 * j + 1] / n - mean * mean).max(0.0);
            OracleEstimate {
                mean,
                std_error: (var / n).sqrt(),
                n_trials,
            }
        })
        .collect())
}

pub fn laplace_oracle(
    cfg: &NetworkConfig,
    model: AssociationModel,
    target: OracleTarget,
    s: f64,
    n: u32,
    n_trials: u64,
    seed: u64,
) -> Result<OracleEstimate> {
    Ok(laplace_oracle_many(cfg, model, target, &[(s, n)], n_trials, seed)?[0])
}

fn intra_power_given<R: Rng>(
    sampler: &Sampler,
    rng: &mut R,
    model: AssociationModel,
    v: f64,
    r_serving: f64,
    ch: &ChannelParams,
) -> f64 {
    let center = [v, 0.0];
    let beyond = |rng: &mut R| loop {
        let p = sampler.offset(rng, center);
        if p[0].hypot(p[1]) > r_serving {
            return p;
        }
    };
    let mut power = 0.0;
    match model {
        AssociationModel::Uniform => {
            for _ in 0..sampler.intra_count(rng) {
                let p = sampler.offset(rng, center);
                power += sampler.interferer(rng, p).received_power(ch);
            }
        }
        AssociationModel::Closest => {
            for _ in 0..sampler.intra_count(rng) {
                let p = beyond(rng);
                power += sampler.interferer(rng, p).received_power(ch);
            }
        }
        AssociationModel::ClosestLos => {
            for _ in 0..sampler.intra_count(rng) {
                let p = beyond(rng);
                let d = p[0].hypot(p[1]);
                if rng.random::<f64>() < (-sampler.eps * d).exp() {
                    power += sampler.finish_interferer(rng, p, d, true).received_power(ch);
                }
            }
            for _ in 0..sampler.intra_count(rng) {
                let p = sampler.offset(rng, center);
                let d = p[0].hypot(p[1]);
                if rng.random::<f64>() >= (-sampler.eps * d).exp() {
                    power += sampler.finish_interferer(rng, p, d, false).received_power(ch);
                }
            }
        }
    }
    power
}
