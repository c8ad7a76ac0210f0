//! Network configuration, gain outcomes, blockage and path-loss laws, and the
//! distance distributions of the three association models.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quad::{fixed_panel, integrate, Tolerance};
use crate::special_fn::{marcum_q1_unchecked, rayleigh_density, rician_density};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Two-level sectored antenna pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntennaPattern {
    pub main_lobe_gain: f64,
    pub side_lobe_gain: f64,
    /// Main lobe beamwidth in radians.
    pub beamwidth: f64,
}

impl AntennaPattern {
    pub fn new(main_lobe_gain: f64, side_lobe_gain: f64, beamwidth: f64) -> Result<Self> {
        let p = AntennaPattern {
            main_lobe_gain,
            side_lobe_gain,
            beamwidth,
        };
        p.validate("antenna_pattern")?;
        Ok(p)
    }

    /// Pattern given in dB and degrees.
    pub fn from_db_deg(main_db: f64, side_db: f64, beamwidth_deg: f64) -> Result<Self> {
        Self::new(db_to_linear(main_db), db_to_linear(side_db), beamwidth_deg.to_radians())
    }

    fn validate(&self, field: &'static str) -> Result<()> {
        if !(self.side_lobe_gain > 0.0 && self.side_lobe_gain.is_finite()) {
            return Err(Error::invalid(field, "side lobe gain must be positive"));
        }
        if !(self.main_lobe_gain >= self.side_lobe_gain && self.main_lobe_gain.is_finite()) {
            return Err(Error::invalid(field, "main lobe gain must be at least the side lobe gain"));
        }
        if !(self.beamwidth > 0.0 && self.beamwidth < 2.0 * PI) {
            return Err(Error::invalid(field, "beamwidth must lie in (0, 2π)"));
        }
        Ok(())
    }

    fn main_fraction(&self) -> f64 {
        self.beamwidth / (2.0 * PI)
    }
}

/// The four directivity-gain outcomes of an interfering link plus the
/// boresight gain of the serving link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainTable {
    a: [f64; 4],
    b: [f64; 4],
    boresight: f64,
}

impl GainTable {
    /// Table from explicit outcomes. `b[3]` is recomputed as `1 - b0 - b1 - b2`.
    pub fn from_entries(a: [f64; 4], b: [f64; 4], boresight: f64) -> Result<Self> {
        if a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid("gain_table", "gains must be positive and finite"));
        }
        let b3 = 1.0 - b[0] - b[1] - b[2];
        let b = [b[0], b[1], b[2], b3];
        if b.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("gain_table", "probabilities must lie in [0, 1]"));
        }
        if !(boresight > 0.0 && boresight.is_finite()) {
            return Err(Error::invalid("gain_table", "boresight gain must be positive"));
        }
        Ok(GainTable { a, b, boresight })
    }

    pub fn gains(&self) -> [f64; 4] {
        self.a
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.b
    }

    pub fn entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.a.iter().copied().zip(self.b.iter().copied())
    }

    /// G0, the gain of a perfectly aligned link.
    pub fn boresight_gain(&self) -> f64 {
        self.boresight
    }

    pub fn with_boresight_gain(&self, g0: f64) -> Result<Self> {
        Self::from_entries(self.a, self.b, g0)
    }

    pub fn expected_gain(&self) -> f64 {
        self.entries().map(|(a, b)| a * b).sum()
    }
}

pub fn build_gain_table(tx: &AntennaPattern, rx: &AntennaPattern, antenna_elements: u32) -> Result<GainTable> {
    tx.validate("tx_pattern")?;
    rx.validate("rx_pattern")?;
    if antenna_elements == 0 {
        return Err(Error::invalid("antenna_elements", "must be at least 1"));
    }
    let scale = (antenna_elements as f64).powi(2);
    let (mt, st) = (tx.main_lobe_gain, tx.side_lobe_gain);
    let (mr, sr) = (rx.main_lobe_gain, rx.side_lobe_gain);
    let pt = tx.main_fraction();
    let pr = rx.main_fraction();
    let a = [mt * mr, st * mr, mt * sr, st * sr].map(|g| g * scale);
    let b = [pt * pr, (1.0 - pt) * pr, pt * (1.0 - pr), 0.0];
    GainTable::from_entries(a, b, scale * mt * mr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub intercept_los: f64,
    pub intercept_nlos: f64,
    pub nakagami_los: u32,
    pub nakagami_nlos: u32,
    /// ε in 1/m; the LOS probability at distance d is exp(-εd).
    pub blockage_rate: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_los > 0.0 && self.alpha_los.is_finite()) {
            return Err(Error::invalid("alpha_los", "must be positive"));
        }
        if !(self.alpha_nlos >= self.alpha_los && self.alpha_nlos.is_finite()) {
            return Err(Error::invalid("alpha_nlos", "must be at least alpha_los"));
        }
        if !(self.intercept_los > 0.0 && self.intercept_los.is_finite()) {
            return Err(Error::invalid("intercept_los", "must be positive"));
        }
        if !(self.intercept_nlos > 0.0 && self.intercept_nlos.is_finite()) {
            return Err(Error::invalid("intercept_nlos", "must be positive"));
        }
        if self.nakagami_los == 0 {
            return Err(Error::invalid("nakagami_los", "must be at least 1"));
        }
        if self.nakagami_nlos == 0 {
            return Err(Error::invalid("nakagami_nlos", "must be at least 1"));
        }
        if !(self.blockage_rate > 0.0 && self.blockage_rate.is_finite()) {
            return Err(Error::invalid("blockage_rate", "must be positive"));
        }
        Ok(())
    }
}

/// Free-space gain at the 1 m reference distance, `(c / (4π f_c))²`.
pub fn free_space_intercept(carrier_hz: f64) -> f64 {
    (SPEED_OF_LIGHT / (4.0 * PI * carrier_hz)).powi(2)
}

/// Blockage rate for a given average LOS distance.
pub fn blockage_rate_from_avg_los(avg_los_distance: f64) -> f64 {
    SQRT_2 / avg_los_distance
}

/// Thermal noise over `bandwidth_hz` normalized by the transmit power.
pub fn default_noise_power(bandwidth_hz: f64, noise_figure_db: f64, tx_power_dbm: f64) -> f64 {
    let noise_dbm = -174.0 + 10.0 * bandwidth_hz.log10() + noise_figure_db;
    db_to_linear(noise_dbm - tx_power_dbm)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub const DEFAULT_BANDWIDTH_HZ: f64 = 100e6;
pub const DEFAULT_NOISE_FIGURE_DB: f64 = 10.0;
pub const DEFAULT_TX_POWER_DBM: f64 = 23.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// Cluster centers per m².
    pub parent_density: f64,
    /// Per-coordinate standard deviation of device offsets, meters.
    pub scatter_std: f64,
    pub cluster_tx_count: u32,
    pub mean_active: f64,
    pub channel: ChannelParams,
    pub tx_pattern: AntennaPattern,
    pub rx_pattern: AntennaPattern,
    pub antenna_elements: u32,
    /// Noise power relative to the transmit power.
    pub noise_power: f64,
    pub carrier_hz: f64,
    /// Half side of the square simulation window, meters.
    pub region_half_width: f64,
    /// Replaces G0 while keeping the interferer outcomes.
    pub boresight_gain_override: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let carrier_hz = 28e9;
        let intercept = free_space_intercept(carrier_hz);
        NetworkConfig {
            parent_density: 150e-6,
            scatter_std: 20.0,
            cluster_tx_count: 40,
            mean_active: 5.0,
            channel: ChannelParams {
                alpha_los: 2.0,
                alpha_nlos: 4.0,
                intercept_los: intercept,
                intercept_nlos: intercept,
                nakagami_los: 3,
                nakagami_nlos: 2,
                blockage_rate: blockage_rate_from_avg_los(30.0),
            },
            tx_pattern: AntennaPattern {
                main_lobe_gain: 10.0,
                side_lobe_gain: 0.1,
                beamwidth: 30f64.to_radians(),
            },
            rx_pattern: AntennaPattern {
                main_lobe_gain: 10.0,
                side_lobe_gain: 1.0,
                beamwidth: 90f64.to_radians(),
            },
            antenna_elements: 1,
            noise_power: default_noise_power(
                DEFAULT_BANDWIDTH_HZ,
                DEFAULT_NOISE_FIGURE_DB,
                DEFAULT_TX_POWER_DBM,
            ),
            carrier_hz,
            region_half_width: 500.0,
            boresight_gain_override: None,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.parent_density > 0.0 && self.parent_density.is_finite()) {
            return Err(Error::invalid("parent_density", "must be positive"));
        }
        if !(self.scatter_std > 0.0 && self.scatter_std.is_finite()) {
            return Err(Error::invalid("scatter_std", "must be positive"));
        }
        if self.cluster_tx_count == 0 {
            return Err(Error::invalid("cluster_tx_count", "must be at least 1"));
        }
        if !(self.mean_active >= 1.0 && self.mean_active <= self.cluster_tx_count as f64) {
            return Err(Error::invalid(
                "mean_active",
                format!("must lie in [1, {}]", self.cluster_tx_count),
            ));
        }
        self.channel.validate()?;
        self.tx_pattern.validate("tx_pattern")?;
        self.rx_pattern.validate("rx_pattern")?;
        if self.antenna_elements == 0 {
            return Err(Error::invalid("antenna_elements", "must be at least 1"));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::invalid("noise_power", "must be non-negative"));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::invalid("carrier_hz", "must be positive"));
        }
        if !(self.region_half_width > 0.0 && self.region_half_width.is_finite()) {
            return Err(Error::invalid("region_half_width", "must be positive"));
        }
        if let Some(g0) = self.boresight_gain_override {
            if !(g0 > 0.0 && g0.is_finite()) {
                return Err(Error::invalid("boresight_gain_override", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.scatter_std * self.scatter_std
    }

    pub fn gain_table(&self) -> Result<GainTable> {
        let table = build_gain_table(&self.tx_pattern, &self.rx_pattern, self.antenna_elements)?;
        match self.boresight_gain_override {
            Some(g0) => table.with_boresight_gain(g0),
            None => Ok(table),
        }
    }

    /// Radius of the deterministic LOS ball at which the LOS probability is 1/2.
    pub fn los_ball_radius(&self) -> f64 {
        std::f64::consts::LN_2 / self.channel.blockage_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AssociationModel {
    Uniform,
    Closest,
    ClosestLos,
}

impl AssociationModel {
    pub const ALL: [AssociationModel; 3] = [
        AssociationModel::Uniform,
        AssociationModel::Closest,
        AssociationModel::ClosestLos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AssociationModel::Uniform => "uniform",
            AssociationModel::Closest => "closest",
            AssociationModel::ClosestLos => "closest_los",
        }
    }
}

impl fmt::Display for AssociationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AssociationModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "uniform" => Ok(AssociationModel::Uniform),
            "closest" => Ok(AssociationModel::Closest),
            "closest_los" | "closestlos" => Ok(AssociationModel::ClosestLos),
            other => Err(Error::usage(format!("unknown association model '{other}'"))),
        }
    }
}

pub fn los_probability(d: f64, channel: &ChannelParams) -> Result<f64> {
    check_distance("los_probability", d)?;
    Ok((-channel.blockage_rate * d).exp())
}

pub fn path_loss(d: f64, is_los: bool, channel: &ChannelParams) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::domain(format!("path_loss: distance must be positive, got {d}")));
    }
    Ok(path_loss_unchecked(d, is_los, channel))
}

#[inline]
pub(crate) fn path_loss_unchecked(d: f64, is_los: bool, channel: &ChannelParams) -> f64 {
    if is_los {
        channel.intercept_los * d.powf(-channel.alpha_los)
    } else {
        channel.intercept_nlos * d.powf(-channel.alpha_nlos)
    }
}

/// Density of ‖x_c0‖, the distance from the typical user to its cluster center.
pub fn cluster_center_distance_pdf(v: f64, cfg: &NetworkConfig) -> Result<f64> {
    check_distance("cluster_center_distance_pdf", v)?;
    Ok(rayleigh_density(v, cfg.variance()))
}

pub fn serving_distance_pdf(model: AssociationModel, r: f64, v: f64, cfg: &NetworkConfig) -> Result<f64> {
    check_distance("serving_distance_pdf (r)", r)?;
    check_distance("serving_distance_pdf (v)", v)?;
    let var = cfg.variance();
    let m = cfg.cluster_tx_count as i32;
    match model {
        AssociationModel::Uniform => Ok(rician_density(r, v, var)),
        AssociationModel::Closest => {
            let sigma = cfg.scatter_std;
            let q = marcum_q1_unchecked(v / sigma, r / sigma);
            Ok(m as f64 * q.powi(m - 1) * rician_density(r, v, var))
        }
        AssociationModel::ClosestLos => {
            let eps = cfg.channel.blockage_rate;
            let tol = Tolerance::new(1e-10, 1e-12, 400);
            let cdf = integrate(|t| (-eps * t).exp() * rician_density(t, v, var), 0.0, r, &tol)?.value;
            Ok(closest_los_density(m, cdf, (-eps * r).exp() * rician_density(r, v, var)))
        }
    }
}

/// Density of the distance to an intra-cluster interferer given the serving
/// distance. For `ClosestLos` this is the LOS group; see
/// [`nlos_interferer_distance_pdf`] for the NLOS group.
pub fn interferer_distance_pdf(
    model: AssociationModel,
    s: f64,
    v: f64,
    r_serving: f64,
    cfg: &NetworkConfig,
) -> Result<f64> {
    check_distance("interferer_distance_pdf (s)", s)?;
    check_distance("interferer_distance_pdf (v)", v)?;
    check_distance("interferer_distance_pdf (r_serving)", r_serving)?;
    let var = cfg.variance();
    match model {
        AssociationModel::Uniform => Ok(rician_density(s, v, var)),
        AssociationModel::Closest | AssociationModel::ClosestLos => {
            let norm = truncation_mass(v, r_serving, cfg.scatter_std)?;
            if s <= r_serving {
                Ok(0.0)
            } else {
                Ok(rician_density(s, v, var) / norm)
            }
        }
    }
}

/// NLOS interferers of the closest-LOS model are not truncated by the
/// serving distance.
pub fn nlos_interferer_distance_pdf(s: f64, v: f64, cfg: &NetworkConfig) -> Result<f64> {
    check_distance("nlos_interferer_distance_pdf (s)", s)?;
    check_distance("nlos_interferer_distance_pdf (v)", v)?;
    Ok(rician_density(s, v, cfg.variance()))
}

/// `Q1(v/σ, r/σ)`, the mass of the Rician density beyond `r`.
pub(crate) fn truncation_mass(v: f64, r: f64, sigma: f64) -> Result<f64> {
    let q = marcum_q1_unchecked(v / sigma, r / sigma);
    if q < 1e-300 {
        return Err(Error::DegenerateSupport(format!(
            "no interferer mass beyond r = {r} for v = {v}, sigma = {sigma}"
        )));
    }
    Ok(q)
}

/// Serving-distance densities with the cluster center integrated out.
pub fn serving_distance_pdf_approx(model: AssociationModel, r: f64, cfg: &NetworkConfig) -> Result<f64> {
    check_distance("serving_distance_pdf_approx", r)?;
    let var2 = 2.0 * cfg.variance();
    let m = cfg.cluster_tx_count as i32;
    match model {
        AssociationModel::Uniform => Ok(rayleigh_density(r, var2)),
        AssociationModel::Closest => {
            Ok(m as f64 * (-(m - 1) as f64 * r * r / (2.0 * var2)).exp() * rayleigh_density(r, var2))
        }
        AssociationModel::ClosestLos => {
            let eps = cfg.channel.blockage_rate;
            // ∫_0^r exp(-εt) Ra(t, 2σ²) dt
            let tol = Tolerance::new(1e-10, 1e-12, 400);
            let cdf = integrate(|t| (-eps * t).exp() * rayleigh_density(t, var2), 0.0, r, &tol)?.value;
            Ok(closest_los_density(m, cdf, (-eps * r).exp() * rayleigh_density(r, var2)))
        }
    }
}

#[inline]
pub(crate) fn closest_los_density(m: i32, cdf: f64, density: f64) -> f64 {
    m as f64 * (1.0 - cdf).max(0.0).powi(m - 1) * density
}

/// Tabulated `F(r) = ∫_0^r exp(-εt) Ri(t, v, var) dt` for fast repeated
/// evaluation inside outer integrals. With `v = 0` the Rician density is the
/// Rayleigh one, which covers the unconditioned variant.
#[derive(Debug, Clone)]
pub struct LosCumulative {
    v: f64,
    variance: f64,
    eps: f64,
    width: f64,
    /// `prefix[k]` is the integral up to the start of panel `k`.
    prefix: Vec<f64>,
}

impl LosCumulative {
    pub fn new(v: f64, variance: f64, eps: f64) -> Self {
        let sigma = variance.sqrt();
        let hi = v + 14.0 * sigma;
        let width = 0.25 * sigma;
        let panels = (hi / width).ceil() as usize;
        let mut prefix = Vec::with_capacity(panels + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for k in 0..panels {
            let a = k as f64 * width;
            acc += fixed_panel(|t| (-eps * t).exp() * rician_density(t, v, variance), a, a + width);
            prefix.push(acc);
        }
        LosCumulative {
            v,
            variance,
            eps,
            width,
            prefix,
        }
    }

    pub fn total(&self) -> f64 {
        *self.prefix.last().expect("table has at least one entry")
    }

    pub fn density(&self, r: f64) -> f64 {
        (-self.eps * r).exp() * rician_density(r, self.v, self.variance)
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let k = (r / self.width) as usize;
        if k + 1 >= self.prefix.len() {
            return self.total();
        }
        let a = k as f64 * self.width;
        if r == a {
            return self.prefix[k];
        }
        self.prefix[k] + fixed_panel(|t| self.density(t), a, r)
    }
}

fn check_distance(what: &str, d: f64) -> Result<()> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::domain(format!("{what}: distance must be finite and >= 0, got {d}")));
    }
    Ok(())
}
