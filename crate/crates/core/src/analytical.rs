//! Interference Laplace transforms, coverage bounds for the three association
//! models, the closed-form lower bound and area spectral efficiency.
//!
//! Every Laplace transform depends on its argument `s` and index `n` only
//! through the product `t = n·s`, so the internals work with `t` directly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::interp::ChebTable;
use crate::model::{
    closest_los_density, truncation_mass, AssociationModel, ChannelParams, GainTable, LosCumulative,
    NetworkConfig,
};
use crate::quad::{
    try_integrate, try_integrate_to_infinity, try_integrate_to_infinity_scaled, try_integrate_vec, Tolerance,
};
use crate::special_fn::{marcum_q1_unchecked, rayleigh_density, rician_density};

/// Largest Nakagami shape for which the alternating binomial sums are used.
pub const MAX_NAKAGAMI: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Infinite limits of distance integrals are cut this many σ past the
    /// centre of the weight density.
    pub tail_cutoff_sigmas: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            tail_cutoff_sigmas: 12.0,
            max_subdivisions: 200,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::invalid("quadrature", "tolerances must be positive"));
        }
        if !(self.tail_cutoff_sigmas >= 6.0 && self.tail_cutoff_sigmas.is_finite()) {
            return Err(Error::invalid("quadrature", "tail cutoff must be at least 6 sigma"));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::invalid("quadrature", "max_subdivisions must be positive"));
        }
        Ok(())
    }

    fn outer(&self) -> Tolerance {
        Tolerance::new(self.abs_tol, self.rel_tol, self.max_subdivisions)
    }

    fn middle(&self) -> Tolerance {
        Tolerance::new(0.1 * self.abs_tol, 0.1 * self.rel_tol, self.max_subdivisions)
    }

    fn inner(&self) -> Tolerance {
        Tolerance::new(1e-2 * self.abs_tol, 1e-2 * self.rel_tol, self.max_subdivisions)
    }

    /// Relative accuracy only, for quantities that are tabulated on a log scale.
    fn relative(&self) -> Tolerance {
        Tolerance::new(f64::MIN_POSITIVE, 1e-2 * self.rel_tol, self.max_subdivisions)
    }

    /// Node values of the intra-cluster tables.
    fn table_point(&self) -> Tolerance {
        Tolerance::new(f64::MIN_POSITIVE, 1e-4 * self.rel_tol, self.max_subdivisions)
    }

    /// Absolute accuracy of a tabulated logarithm.
    fn table_tol(&self) -> f64 {
        1e-2 * self.rel_tol
    }
}

/// Which simplified variant of the coverage expressions to evaluate.
///
/// `use_assumption1` drops the conditioning on the cluster-center distance
/// and uses the unconditioned distance densities. `use_assumption2` keeps only
/// LOS intra-cluster interference with no noise; it is defined for the
/// uniform model only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CoverageFlags {
    pub use_assumption1: bool,
    pub use_assumption2: bool,
}

impl CoverageFlags {
    pub const EXACT: CoverageFlags = CoverageFlags {
        use_assumption1: false,
        use_assumption2: false,
    };
    pub const APPROX: CoverageFlags = CoverageFlags {
        use_assumption1: true,
        use_assumption2: false,
    };
    pub const LOS_INTRA_ONLY: CoverageFlags = CoverageFlags {
        use_assumption1: false,
        use_assumption2: true,
    };
    pub const LOS_INTRA_ONLY_APPROX: CoverageFlags = CoverageFlags {
        use_assumption1: true,
        use_assumption2: true,
    };

    pub fn n_los_gamma_bound(&self, channel: &ChannelParams) -> f64 {
        gamma_bound_constant(channel.nakagami_los)
    }

    pub fn n_nlos_gamma_bound(&self, channel: &ChannelParams) -> f64 {
        gamma_bound_constant(channel.nakagami_nlos)
    }

    fn check(&self, model: AssociationModel) -> Result<()> {
        if self.use_assumption2 && model != AssociationModel::Uniform {
            return Err(Error::usage(format!(
                "the LOS-intra-only special case is defined for the uniform model only, not {model}"
            )));
        }
        Ok(())
    }
}

/// `η = N (N!)^{-1/N}`, the constant of the Gamma CDF bound.
pub fn gamma_bound_constant(n: u32) -> f64 {
    let fact: f64 = (1..=n).map(f64::from).product();
    n as f64 * fact.powf(-1.0 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundConstants {
    pub xi: f64,
    pub psi: f64,
}

/// Coverage value from the analytical engine. `value` is clamped to [0, 1];
/// `raw` is the unclamped result of the quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticalCoverage {
    pub value: f64,
    pub raw: f64,
    pub is_upper_bound: bool,
}

/// Interference kernels `Q`, `Z` and `Q_a` for one gain table and channel.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    a: [f64; 4],
    b: [f64; 4],
    c_los: f64,
    c_nlos: f64,
    alpha_los: f64,
    alpha_nlos: f64,
    n_los: i32,
    n_nlos: i32,
    eps: f64,
    /// Binomial coefficients `C(N, k)` for `k = 1..=N`, per state.
    binom_los: [f64; MAX_NAKAGAMI as usize],
    binom_nlos: [f64; MAX_NAKAGAMI as usize],
}

/// Distance-dependent factors of the kernels at one `r`.
#[derive(Debug, Clone, Copy)]
struct KernelAt {
    /// `C r^{-α} / N` per state, so the bracket argument is `a_i t x`.
    x_los: f64,
    x_nlos: f64,
    p_los: f64,
    p_nlos: f64,
}

fn binomial_row(n: i32) -> [f64; MAX_NAKAGAMI as usize] {
    let mut row = [0.0; MAX_NAKAGAMI as usize];
    for k in 1..=n.min(MAX_NAKAGAMI as i32) as u32 {
        row[k as usize - 1] = binomial(n as u32, k);
    }
    row
}

/// `r^{-α}`, through `powi` when `α` is a small integer.
#[inline]
fn inverse_power(r: f64, alpha: f64) -> f64 {
    if alpha.fract() == 0.0 && alpha <= 16.0 {
        r.powi(-(alpha as i32))
    } else {
        r.powf(-alpha)
    }
}

/// `1 - (1 + z)^{-N}`; below `z = 1` as `((1+z)^N - 1)/(1+z)^N` with the
/// numerator expanded, which avoids cancellation.
#[inline]
fn miss(z: f64, n: i32, binom: &[f64; MAX_NAKAGAMI as usize]) -> f64 {
    if z < 1.0 {
        let mut num = 0.0;
        for k in (0..n as usize).rev() {
            num = (num + binom[k]) * z;
        }
        num / (1.0 + z).powi(n)
    } else {
        1.0 - (1.0 + z).powi(-n)
    }
}

impl Kernel {
    fn new(table: &GainTable, channel: &ChannelParams) -> Self {
        let n_los = channel.nakagami_los as i32;
        let n_nlos = channel.nakagami_nlos as i32;
        Kernel {
            a: table.gains(),
            b: table.probabilities(),
            c_los: channel.intercept_los,
            c_nlos: channel.intercept_nlos,
            alpha_los: channel.alpha_los,
            alpha_nlos: channel.alpha_nlos,
            n_los,
            n_nlos,
            eps: channel.blockage_rate,
            binom_los: binomial_row(n_los),
            binom_nlos: binomial_row(n_nlos),
        }
    }

    #[inline]
    fn at(&self, r: f64) -> KernelAt {
        KernelAt {
            x_los: self.c_los * inverse_power(r, self.alpha_los) / self.n_los as f64,
            x_nlos: self.c_nlos * inverse_power(r, self.alpha_nlos) / self.n_nlos as f64,
            p_los: (-self.eps * r).exp(),
            p_nlos: -(-self.eps * r).exp_m1(),
        }
    }

    /// `1 - Σ b_i (1 + a_i t x)^{-N}`.
    #[inline]
    fn bracket(&self, tx: f64, n: i32, binom: &[f64; MAX_NAKAGAMI as usize]) -> f64 {
        if tx == 0.0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..4 {
            sum += self.b[i] * miss(self.a[i] * tx, n, binom);
        }
        sum
    }

    #[inline]
    fn eval(&self, kind: IntraKind, t: f64, at: &KernelAt) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let los = || self.bracket(t * at.x_los, self.n_los, &self.binom_los);
        let nlos = || self.bracket(t * at.x_nlos, self.n_nlos, &self.binom_nlos);
        match kind {
            IntraKind::Total => los() * at.p_los + nlos() * at.p_nlos,
            IntraKind::Los => los() * at.p_los,
            IntraKind::Nlos => nlos() * at.p_nlos,
            IntraKind::LosBracket => los(),
        }
    }

    #[inline]
    fn los_bracket(&self, t: f64, r: f64) -> f64 {
        self.eval(IntraKind::LosBracket, t, &self.at(r))
    }

    #[inline]
    fn q(&self, t: f64, r: f64) -> f64 {
        self.eval(IntraKind::Los, t, &self.at(r))
    }

    #[inline]
    fn z(&self, t: f64, r: f64) -> f64 {
        self.eval(IntraKind::Nlos, t, &self.at(r))
    }

    #[inline]
    fn total(&self, t: f64, r: f64) -> f64 {
        self.eval(IntraKind::Total, t, &self.at(r))
    }

    #[inline]
    fn of_kind(&self, kind: IntraKind, t: f64, r: f64) -> f64 {
        self.eval(kind, t, &self.at(r))
    }

    /// The kernel as `t → ∞`, where every bracket tends to one.
    #[inline]
    fn limit(&self, kind: IntraKind, r: f64) -> f64 {
        match kind {
            IntraKind::Total | IntraKind::LosBracket => 1.0,
            IntraKind::Los => (-self.eps * r).exp(),
            IntraKind::Nlos => -(-self.eps * r).exp_m1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum IntraKind {
    Total,
    Los,
    Nlos,
    LosBracket,
}

/// `U(t) = ∫ K(t, w) Ri(w, v, σ²) dw` for one kernel kind and one `v`,
/// tabulated as `ln U` against `ln t`.
#[derive(Debug)]
struct IntraTable {
    table: Option<ChebTable>,
    /// Power-law exponent used below the table.
    slope: f64,
    /// `U` as `t → ∞`, returned above the table.
    limit: f64,
}

impl IntraTable {
    fn eval(&self, t: f64) -> f64 {
        let Some(table) = &self.table else {
            return 0.0;
        };
        if t <= 0.0 {
            return 0.0;
        }
        let x = t.ln();
        if x >= table.x_max() {
            self.limit
        } else if x < table.x_min() {
            (table.eval(table.x_min()) + self.slope * (x - table.x_min())).exp()
        } else {
            table.eval(x).exp()
        }
    }
}

/// Per-`v` intra-cluster tables of one channel shape. The outer integrals
/// bisect fixed intervals, so the same `v` nodes recur across evaluations.
#[derive(Debug, Default)]
struct ShapeCache {
    intra: Mutex<HashMap<(IntraKind, u64), Slot<IntraTable>>>,
}

type Slot<T> = Arc<Mutex<Option<Arc<T>>>>;

/// Looks up `key`, building the value at most once. Concurrent callers with
/// the same key wait for the first build instead of repeating it.
fn cached<K: Eq + std::hash::Hash, T>(
    map: &Mutex<HashMap<K, Slot<T>>>,
    key: K,
    build: impl FnOnce() -> Result<T>,
) -> Result<Arc<T>> {
    let slot = Arc::clone(map.lock().expect("cache lock").entry(key).or_default());
    let mut value = slot.lock().expect("cache lock");
    if let Some(t) = value.as_ref() {
        return Ok(Arc::clone(t));
    }
    let t = Arc::new(build()?);
    *value = Some(Arc::clone(&t));
    Ok(t)
}

fn check_kernel_args(s: f64, r: f64, n: u32) -> Result<()> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::domain(format!("Laplace argument must be finite and >= 0, got {s}")));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("distance must be finite and >= 0, got {r}")));
    }
    if n == 0 {
        return Err(Error::domain("term index n must be at least 1"));
    }
    Ok(())
}

/// Probability-like weight of LOS intra-cluster interference at distance `r`.
pub fn kernel_los(s: f64, r: f64, n: u32, table: &GainTable, channel: &ChannelParams) -> Result<f64> {
    check_kernel_args(s, r, n)?;
    Ok(Kernel::new(table, channel).q(n as f64 * s, r))
}

/// Probability-like weight of NLOS intra-cluster interference at distance `r`.
pub fn kernel_nlos(s: f64, r: f64, n: u32, table: &GainTable, channel: &ChannelParams) -> Result<f64> {
    check_kernel_args(s, r, n)?;
    Ok(Kernel::new(table, channel).z(n as f64 * s, r))
}

/// Tabulated inter-cluster Laplace transform, `y = ln(-ln L)` against `x = ln t`.
#[derive(Debug, Clone)]
pub struct InterTable {
    table: ChebTable,
    slope: f64,
}

/// Exponents below this are extrapolated as a power law.
const INTER_TABLE_FLOOR: f64 = 1e-9;
/// Exponents above this give a transform below 1e-26, treated as 0.
const INTER_TABLE_CEIL: f64 = 60.0;

impl InterTable {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let x = t.ln();
        if x > self.table.x_max() {
            return 0.0;
        }
        let y = if x < self.table.x_min() {
            let x0 = self.table.x_min();
            self.table.eval(x0) + self.slope * (x - x0)
        } else {
            self.table.eval(x)
        };
        (-y.exp()).exp()
    }

    pub fn panels(&self) -> usize {
        self.table.panels()
    }
}

/// Evaluation context for one configuration.
struct Ctx {
    kernel: Kernel,
    var: f64,
    sigma: f64,
    mean_active: f64,
    m: i32,
    noise: f64,
    g0: f64,
    lambda: f64,
    cutoff: f64,
    quad: QuadratureSpec,
    tables: Option<Arc<ShapeCache>>,
}

impl Ctx {
    fn new(cfg: &NetworkConfig, quad: &QuadratureSpec, tables: Option<Arc<ShapeCache>>) -> Result<Self> {
        cfg.validate()?;
        quad.validate()?;
        for (field, n) in [
            ("nakagami_los", cfg.channel.nakagami_los),
            ("nakagami_nlos", cfg.channel.nakagami_nlos),
        ] {
            if n > MAX_NAKAGAMI {
                return Err(Error::invalid(
                    field,
                    format!("alternating sums are limited to shapes <= {MAX_NAKAGAMI}"),
                ));
            }
        }
        let table = cfg.gain_table()?;
        Ok(Ctx {
            kernel: Kernel::new(&table, &cfg.channel),
            var: cfg.variance(),
            sigma: cfg.scatter_std,
            mean_active: cfg.mean_active,
            m: cfg.cluster_tx_count as i32,
            noise: cfg.noise_power,
            g0: table.boresight_gain(),
            lambda: cfg.parent_density,
            cutoff: quad.tail_cutoff_sigmas,
            quad: *quad,
            tables,
        })
    }

    /// Support of a Rician density centred at `v`, cut at the tail limit.
    fn span(&self, v: f64) -> (f64, f64) {
        let w = self.cutoff * self.sigma;
        ((v - w).max(0.0), v + w)
    }

    fn approx_hi(&self) -> f64 {
        self.cutoff * self.sigma * std::f64::consts::SQRT_2
    }

    /// Joint density of `(v, r)` below which a node of the double integral
    /// is dropped: even summed over the whole integration rectangle the
    /// dropped mass stays below a thousandth of the absolute tolerance.
    fn negligible_joint_density(&self) -> f64 {
        let side = self.cutoff * self.sigma;
        1e-3 * self.quad.abs_tol / (2.0 * side * side)
    }

    fn intra_factor(&self, integral: f64) -> f64 {
        (-(self.mean_active - 1.0) * integral).exp()
    }

    /// `∫ (Q+Z)(t, w) Ri(w, v, σ²) dw`.
    fn uniform_sum(&self, t: f64, v: f64, tol: &Tolerance) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let (lo, hi) = self.span(v);
        let k = &self.kernel;
        let var = self.var;
        Ok(try_integrate(|w| Ok(k.total(t, w) * rician_density(w, v, var)), lo, hi, tol)?.value)
    }

    fn partial(&self, kind: IntraKind, t: f64, v: f64, lo: f64, hi: f64, tol: &Tolerance) -> Result<f64> {
        if t == 0.0 || hi <= lo {
            return Ok(0.0);
        }
        let k = &self.kernel;
        let var = self.var;
        Ok(try_integrate(|w| Ok(k.of_kind(kind, t, w) * rician_density(w, v, var)), lo, hi, tol)?.value)
    }

    /// `∫_{r1}^∞ K(t, w) Ri(w, v, σ²) dw / Q1(v/σ, r1/σ)`.
    fn truncated(&self, kind: IntraKind, t: f64, v: f64, r1: f64, tol: &Tolerance) -> Result<f64> {
        let norm = truncation_mass(v, r1, self.sigma)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let w = self.cutoff * self.sigma;
        Ok(self.partial(kind, t, v, (v - w).max(r1), v.max(r1) + w, tol)? / norm)
    }

    /// `∫_lo^hi K(t_k, w) Ri(w, v, σ²) dw` for every `t_k`, on shared nodes.
    fn heads(&self, kind: IntraKind, ts: &[f64], v: f64, lo: f64, hi: f64, tol: &Tolerance) -> Result<Vec<f64>> {
        if hi <= lo {
            return Ok(vec![0.0; ts.len()]);
        }
        let k = &self.kernel;
        let var = self.var;
        let f = |w: f64, out: &mut [f64]| {
            let ri = rician_density(w, v, var);
            let at = k.at(w);
            for (o, &t) in out.iter_mut().zip(ts) {
                *o = k.eval(kind, t, &at) * ri;
            }
            Ok(())
        };
        try_integrate_vec(f, ts.len(), lo, hi, tol)
    }

    /// LOS group truncated at `rl`, NLOS group untruncated.
    fn closest_los_sum(&self, t: f64, v: f64, rl: f64, tol: &Tolerance) -> Result<f64> {
        let los = self.truncated(IntraKind::Los, t, v, rl, tol)?;
        let (lo, hi) = self.span(v);
        Ok(los + self.partial(IntraKind::Nlos, t, v, lo, hi, tol)?)
    }

    /// `∫ Q_a(t, w) Ri(w, v, σ²) dw`.
    fn los_only_sum(&self, t: f64, v: f64, tol: &Tolerance) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let (lo, hi) = self.span(v);
        let k = &self.kernel;
        let var = self.var;
        Ok(try_integrate(|w| Ok(k.los_bracket(t, w) * rician_density(w, v, var)), lo, hi, tol)?.value)
    }

    /// `∫ (Q+Z)(t, w) Ra(w, 2σ²) dw`.
    fn approx_sum(&self, t: f64, tol: &Tolerance) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let k = &self.kernel;
        let var2 = 2.0 * self.var;
        Ok(try_integrate(|w| Ok(k.total(t, w) * rayleigh_density(w, var2)), 0.0, self.approx_hi(), tol)?.value)
    }

    /// `∫ Q_a(t, w) Ra(w, 2σ²) dw`.
    fn approx_los_only_sum(&self, t: f64, tol: &Tolerance) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let k = &self.kernel;
        let var2 = 2.0 * self.var;
        Ok(try_integrate(|w| Ok(k.los_bracket(t, w) * rayleigh_density(w, var2)), 0.0, self.approx_hi(), tol)?.value)
    }

    fn intra_laplace(
        &self,
        model: AssociationModel,
        flags: CoverageFlags,
        t: f64,
        v: f64,
        r_serving: f64,
        tol: &Tolerance,
    ) -> Result<f64> {
        if self.mean_active == 1.0 {
            return Ok(1.0);
        }
        let integral = match (flags.use_assumption1, flags.use_assumption2, model) {
            (true, true, _) => self.approx_los_only_sum(t, tol)?,
            (false, true, _) => self.los_only_sum(t, v, tol)?,
            (true, false, _) => self.approx_sum(t, tol)?,
            (false, false, AssociationModel::Uniform) => self.uniform_sum(t, v, tol)?,
            (false, false, AssociationModel::Closest) => {
                self.truncated(IntraKind::Total, t, v, r_serving, tol)?
            }
            (false, false, AssociationModel::ClosestLos) => self.closest_los_sum(t, v, r_serving, tol)?,
        };
        Ok(self.intra_factor(integral))
    }

    /// `2πλ_p ∫_0^∞ (1 - exp(-s̄ U(t, v))) v dv`.
    fn inter_exponent(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let tol = self.quad.relative();
        let s_bar = self.mean_active;
        let f = |v: f64| -> Result<f64> {
            let u = if self.tables.is_some() {
                self.intra_table(IntraKind::Total, v)?.eval(t)
            } else {
                self.uniform_sum(t, v, &tol)?
            };
            Ok(-(-s_bar * u).exp_m1() * v)
        };
        let v0 = self.cutoff * self.sigma;
        let near = try_integrate(f, 0.0, v0, &tol)?.value;
        let far = try_integrate_to_infinity_scaled(f, v0, v0, &tol)?.value;
        Ok(2.0 * PI * self.lambda * (near + far))
    }

    fn build_inter_table(&self) -> Result<InterTable> {
        let k = &self.kernel;
        let a_max = k.a.iter().copied().fold(0.0, f64::max);
        // An interferer at distance σ with the strongest gain is felt at t ≈ σ^α/(C a).
        let mut x_lo = (self.sigma.powf(k.alpha_los) / (k.c_los * a_max)).ln();
        let mut x_hi = x_lo;
        let y = |x: f64| self.inter_exponent(x.exp());
        let mut steps = 0;
        while y(x_lo)? > INTER_TABLE_FLOOR {
            x_lo -= 1.0;
            steps += 1;
            if steps > 400 {
                return Err(Error::domain("inter-cluster exponent does not vanish as t -> 0"));
            }
        }
        while y(x_hi)? < INTER_TABLE_CEIL {
            x_hi += 1.0;
            steps += 1;
            if steps > 400 {
                return Err(Error::domain("inter-cluster exponent does not grow as t -> inf"));
            }
        }
        let table = ChebTable::build(
            |x| Ok(self.inter_exponent(x.exp())?.ln()),
            x_lo,
            x_hi,
            4.0,
            self.quad.rel_tol,
            1e-3,
        )?;
        let slope = table.slope_at_min();
        Ok(InterTable { table, slope })
    }

    fn intra_table(&self, kind: IntraKind, v: f64) -> Result<Arc<IntraTable>> {
        let cache = self.tables.as_ref().expect("context built with a table cache");
        cached(&cache.intra, (kind, v.to_bits()), || self.build_intra_table(kind, v))
    }

    fn build_intra_table(&self, kind: IntraKind, v: f64) -> Result<IntraTable> {
        let (lo, hi) = self.span(v);
        let tol = self.quad.table_point();
        let k = &self.kernel;
        let var = self.var;
        let limit = try_integrate(|w| Ok(k.limit(kind, w) * rician_density(w, v, var)), lo, hi, &tol)?.value;
        if limit <= NEGLIGIBLE_WEIGHT {
            return Ok(IntraTable {
                table: None,
                slope: 0.0,
                limit: 0.0,
            });
        }
        let u = |x: f64| self.partial(kind, x.exp(), v, lo, hi, &tol);
        let a_max = k.a.iter().copied().fold(0.0, f64::max);
        let reach = v.max(self.sigma);
        let x_mid = (reach.powf(k.alpha_los) * k.n_los as f64 / (k.c_los * a_max)).ln();
        let table_tol = self.quad.table_tol();
        let mut x_lo = x_mid;
        let mut x_hi = x_mid;
        let mut steps = 0;
        while u(x_lo)? > 1e-14 * limit {
            x_lo -= 2.0;
            steps += 1;
            if steps > 200 {
                return Err(Error::domain("intra-cluster transform does not vanish as t -> 0"));
            }
        }
        while limit - u(x_hi)? > table_tol * limit {
            x_hi += 2.0;
            steps += 1;
            if steps > 200 {
                return Err(Error::domain("intra-cluster transform does not saturate as t -> inf"));
            }
        }
        let table = ChebTable::build(
            |x| Ok(u(x)?.max(f64::MIN_POSITIVE).ln()),
            x_lo,
            x_hi,
            4.0,
            table_tol,
            1e-3,
        )?;
        let slope = table.slope_at_min();
        Ok(IntraTable {
            table: Some(table),
            slope,
            limit,
        })
    }
}

/// Everything in a configuration that the intra-cluster kernel integrals
/// depend on.
fn shape_key(cfg: &NetworkConfig, quad: &QuadratureSpec) -> Result<Vec<u64>> {
    let t = cfg.gain_table()?;
    let ch = &cfg.channel;
    let mut key: Vec<u64> = vec![
        cfg.scatter_std.to_bits(),
        ch.alpha_los.to_bits(),
        ch.alpha_nlos.to_bits(),
        ch.intercept_los.to_bits(),
        ch.intercept_nlos.to_bits(),
        ch.nakagami_los as u64,
        ch.nakagami_nlos as u64,
        ch.blockage_rate.to_bits(),
        quad.rel_tol.to_bits(),
        quad.tail_cutoff_sigmas.to_bits(),
        quad.max_subdivisions as u64,
    ];
    key.extend(t.gains().iter().map(|g| g.to_bits()));
    key.extend(t.probabilities().iter().map(|p| p.to_bits()));
    Ok(key)
}

/// Everything the inter-cluster transform depends on.
fn inter_key(cfg: &NetworkConfig, quad: &QuadratureSpec) -> Result<Vec<u64>> {
    let mut key = shape_key(cfg, quad)?;
    key.push(cfg.parent_density.to_bits());
    key.push(cfg.mean_active.to_bits());
    Ok(key)
}

/// One LOS or NLOS branch of the serving link.
struct Branch {
    alpha: f64,
    /// `γ η / (C G0)`, so that the Laplace argument is `scale · r^α`.
    scale: f64,
    shape: u32,
}

impl Branch {
    fn new(ctx: &Ctx, gamma: f64, los: bool) -> Self {
        let k = &ctx.kernel;
        let (alpha, c, shape) = if los {
            (k.alpha_los, k.c_los, k.n_los as u32)
        } else {
            (k.alpha_nlos, k.c_nlos, k.n_nlos as u32)
        };
        Branch {
            alpha,
            scale: gamma * gamma_bound_constant(shape) / (c * ctx.g0),
            shape,
        }
    }

    /// Laplace argument of term `n` at serving distance `r`.
    #[inline]
    fn arg(&self, n: u32, r: f64) -> f64 {
        n as f64 * self.scale * r.powf(self.alpha)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64)
}

/// Sum after sorting by decreasing magnitude, with Neumaier compensation.
fn compensated_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in terms.iter() {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `Σ_n (-1)^{n+1} C(N, n) e^{-t σ_n²} L_intra(t) L_inter(t)` with `t = n·scale·r^α`.
/// `intra` receives `(n, t)`.
fn alternating_sum<F>(branch: &Branch, r: f64, noise: f64, inter: Option<&InterTable>, mut intra: F) -> Result<f64>
where
    F: FnMut(u32, f64) -> Result<f64>,
{
    let mut terms = [0.0; MAX_NAKAGAMI as usize];
    for n in 1..=branch.shape {
        let t = branch.arg(n, r);
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let mut value = sign * binomial(branch.shape, n) * (-t * noise).exp();
        if let Some(table) = inter {
            value *= table.eval(t);
        }
        if value != 0.0 {
            value *= intra(n, t)?;
        }
        terms[n as usize - 1] = value;
    }
    Ok(compensated_sum(&mut terms[..branch.shape as usize]))
}

/// Threshold below which serving-distance weights are skipped.
const NEGLIGIBLE_WEIGHT: f64 = 1e-300;

/// Truncated integrals are taken as a difference from the untruncated table
/// only while the remaining mass is at least this; the absolute error of the
/// difference is then amplified by at most its inverse.
const TRUNCATION_DIFFERENCE_MIN: f64 = 1e-3;

/// Analytical engine with caches of interpolation tables.
///
/// Each cache is keyed on every input of the tabulated function and is safe
/// to share across threads. A table depends only on its key, so cached and
/// freshly built tables are identical and caching never changes results.
#[derive(Debug, Default)]
pub struct Evaluator {
    quad: QuadratureSpec,
    inter_cache: Mutex<HashMap<Vec<u64>, Slot<InterTable>>>,
    shape_cache: Mutex<HashMap<Vec<u64>, Arc<ShapeCache>>>,
}

impl Evaluator {
    pub fn new(quad: QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        Ok(Evaluator {
            quad,
            inter_cache: Mutex::new(HashMap::new()),
            shape_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Context whose intra-cluster integrals go through the shared tables.
    fn tabulated_ctx(&self, cfg: &NetworkConfig) -> Result<Ctx> {
        let key = shape_key(cfg, &self.quad)?;
        let shape = Arc::clone(self.shape_cache.lock().expect("cache lock").entry(key).or_default());
        Ctx::new(cfg, &self.quad, Some(shape))
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    /// Conditional Laplace transform of intra-cluster interference at `n·s`.
    /// `r_serving` is ignored by the uniform model and by the unconditioned
    /// variants; `v` is ignored by the unconditioned variants.
    #[allow(clippy::too_many_arguments)]
    pub fn laplace_intra(
        &self,
        model: AssociationModel,
        n: u32,
        s: f64,
        v: f64,
        r_serving: f64,
        flags: CoverageFlags,
        cfg: &NetworkConfig,
    ) -> Result<f64> {
        check_kernel_args(s, v, n)?;
        check_kernel_args(s, r_serving, n)?;
        flags.check(model)?;
        let ctx = Ctx::new(cfg, &self.quad, None)?;
        ctx.intra_laplace(model, flags, n as f64 * s, v, r_serving, &self.quad.inner())
    }

    /// Laplace transform of inter-cluster interference at `n·s`, by direct
    /// quadrature.
    pub fn laplace_inter(&self, n: u32, s: f64, cfg: &NetworkConfig) -> Result<f64> {
        check_kernel_args(s, 0.0, n)?;
        let ctx = Ctx::new(cfg, &self.quad, None)?;
        Ok((-ctx.inter_exponent(n as f64 * s)?).exp())
    }

    /// The tabulated inter-cluster transform used inside coverage integrals.
    pub fn inter_table(&self, cfg: &NetworkConfig) -> Result<Arc<InterTable>> {
        let key = inter_key(cfg, &self.quad)?;
        cached(&self.inter_cache, key, || self.tabulated_ctx(cfg)?.build_inter_table())
    }

    pub fn coverage(
        &self,
        model: AssociationModel,
        gamma_th: f64,
        flags: CoverageFlags,
        cfg: &NetworkConfig,
    ) -> Result<AnalyticalCoverage> {
        if !(gamma_th > 0.0 && gamma_th.is_finite()) {
            return Err(Error::domain(format!("SINR threshold must be positive, got {gamma_th}")));
        }
        flags.check(model)?;
        let ctx = self.tabulated_ctx(cfg)?;
        let raw = if flags.use_assumption2 {
            self.los_intra_only_coverage(&ctx, gamma_th, flags)?
        } else {
            let inter = self.inter_table(cfg)?;
            if flags.use_assumption1 {
                self.approx_coverage(&ctx, model, gamma_th, &inter)?
            } else {
                self.exact_coverage(&ctx, model, gamma_th, &inter)?
            }
        };
        Ok(AnalyticalCoverage {
            value: raw.clamp(0.0, 1.0),
            raw,
            is_upper_bound: true,
        })
    }

    fn exact_coverage(&self, ctx: &Ctx, model: AssociationModel, gamma: f64, inter: &InterTable) -> Result<f64> {
        let los = Branch::new(ctx, gamma, true);
        let nlos = Branch::new(ctx, gamma, false);
        let head_tol = self.quad.inner();
        let eps = ctx.kernel.eps;
        let sigma = ctx.sigma;
        let m = ctx.m;
        let active = ctx.mean_active > 1.0;
        let negligible = ctx.negligible_joint_density();

        let per_v = |v: f64| -> Result<f64> {
            let fv = rayleigh_density(v, ctx.var);
            if fv <= NEGLIGIBLE_WEIGHT {
                return Ok(0.0);
            }
            let (main, nlos_table, los_table) = match model {
                AssociationModel::ClosestLos => (
                    ctx.intra_table(IntraKind::Los, v)?,
                    Some(ctx.intra_table(IntraKind::Nlos, v)?),
                    Some(LosCumulative::new(v, ctx.var, eps)),
                ),
                _ => (ctx.intra_table(IntraKind::Total, v)?, None, None),
            };
            let integrand = |r: f64| -> Result<f64> {
                let ri = rician_density(r, v, ctx.var);
                let serving = match model {
                    AssociationModel::Uniform => ri,
                    AssociationModel::Closest => {
                        let q = marcum_q1_unchecked(v / sigma, r / sigma);
                        m as f64 * q.powi(m - 1) * ri
                    }
                    AssociationModel::ClosestLos => {
                        let table = los_table.as_ref().expect("table built for this model");
                        closest_los_density(m, table.cdf(r), (-eps * r).exp() * ri)
                    }
                };
                // The alternating sums are bounded by 2^N.
                if fv * serving * 2f64.powi(los.shape.max(nlos.shape) as i32) <= negligible {
                    return Ok(0.0);
                }
                // Heads below r of the truncated integrals, for every term of
                // both branches at once.
                let truncated_kind = match model {
                    AssociationModel::Uniform => None,
                    AssociationModel::Closest => Some(IntraKind::Total),
                    AssociationModel::ClosestLos => Some(IntraKind::Los),
                };
                let mut heads = None;
                if let (Some(kind), true) = (truncated_kind, active) {
                    let norm = truncation_mass(v, r, sigma)?;
                    let (lo, hi) = ctx.span(v);
                    if norm >= TRUNCATION_DIFFERENCE_MIN && r < hi {
                        let mut ts: Vec<f64> = (1..=los.shape).map(|n| los.arg(n, r)).collect();
                        if model == AssociationModel::Closest {
                            ts.extend((1..=nlos.shape).map(|n| nlos.arg(n, r)));
                        }
                        heads = Some((norm, ctx.heads(kind, &ts, v, lo, r.max(lo), &head_tol)?));
                    }
                }
                let intra = |offset: usize, n: u32, t: f64| -> Result<f64> {
                    if !active {
                        return Ok(1.0);
                    }
                    let truncated = |kind| match &heads {
                        Some((norm, h)) => Ok(((main.eval(t) - h[offset + n as usize - 1]) / norm).max(0.0)),
                        None => ctx.truncated(kind, t, v, r, &head_tol),
                    };
                    let u = match model {
                        AssociationModel::Uniform => main.eval(t),
                        AssociationModel::Closest => truncated(IntraKind::Total)?,
                        AssociationModel::ClosestLos => {
                            let nlos_table = nlos_table.as_ref().expect("table built for this model");
                            truncated(IntraKind::Los)? + nlos_table.eval(t)
                        }
                    };
                    Ok(ctx.intra_factor(u))
                };
                let offset = los.shape as usize;
                let sum = if model == AssociationModel::ClosestLos {
                    alternating_sum(&los, r, ctx.noise, Some(inter), |n, t| intra(0, n, t))?
                } else {
                    let p_los = (-eps * r).exp();
                    let x = alternating_sum(&los, r, ctx.noise, Some(inter), |n, t| intra(0, n, t))?;
                    let y = alternating_sum(&nlos, r, ctx.noise, Some(inter), |n, t| intra(offset, n, t))?;
                    p_los * x + (1.0 - p_los) * y
                };
                Ok(serving * sum)
            };
            let (lo, hi) = ctx.span(v);
            Ok(fv * try_integrate(integrand, lo, hi, &self.quad.middle())?.value)
        };
        Ok(try_integrate(per_v, 0.0, ctx.cutoff * sigma, &self.quad.outer())?.value)
    }

    fn approx_coverage(&self, ctx: &Ctx, model: AssociationModel, gamma: f64, inter: &InterTable) -> Result<f64> {
        let los = Branch::new(ctx, gamma, true);
        let nlos = Branch::new(ctx, gamma, false);
        let inner_tol = self.quad.inner();
        let eps = ctx.kernel.eps;
        let var2 = 2.0 * ctx.var;
        let m = ctx.m;
        let los_table = match model {
            AssociationModel::ClosestLos => Some(LosCumulative::new(0.0, var2, eps)),
            _ => None,
        };
        let intra = |_, t: f64| ctx.intra_laplace(model, CoverageFlags::APPROX, t, 0.0, 0.0, &inner_tol);
        let integrand = |r: f64| -> Result<f64> {
            let ra = rayleigh_density(r, var2);
            let serving = match model {
                AssociationModel::Uniform => ra,
                AssociationModel::Closest => m as f64 * (-(m - 1) as f64 * r * r / (2.0 * var2)).exp() * ra,
                AssociationModel::ClosestLos => {
                    let table = los_table.as_ref().expect("table built for this model");
                    closest_los_density(m, table.cdf(r), (-eps * r).exp() * ra)
                }
            };
            if serving <= NEGLIGIBLE_WEIGHT {
                return Ok(0.0);
            }
            let sum = if model == AssociationModel::ClosestLos {
                // The LOS weight is already inside the serving density.
                alternating_sum(&los, r, ctx.noise, Some(inter), intra)?
            } else {
                let p_los = (-eps * r).exp();
                let x = alternating_sum(&los, r, ctx.noise, Some(inter), intra)?;
                let y = alternating_sum(&nlos, r, ctx.noise, Some(inter), intra)?;
                p_los * x + (1.0 - p_los) * y
            };
            Ok(serving * sum)
        };
        Ok(try_integrate(integrand, 0.0, ctx.approx_hi(), &self.quad.outer())?.value)
    }

    fn los_intra_only_coverage(&self, ctx: &Ctx, gamma: f64, flags: CoverageFlags) -> Result<f64> {
        let los = Branch::new(ctx, gamma, true);
        let inner_tol = self.quad.inner();
        let model = AssociationModel::Uniform;
        if flags.use_assumption1 {
            let var2 = 2.0 * ctx.var;
            let integrand = |r: f64| -> Result<f64> {
                let ra = rayleigh_density(r, var2);
                if ra <= NEGLIGIBLE_WEIGHT {
                    return Ok(0.0);
                }
                let intra = |_, t: f64| ctx.intra_laplace(model, flags, t, 0.0, 0.0, &inner_tol);
                Ok(ra * alternating_sum(&los, r, 0.0, None, intra)?)
            };
            return Ok(try_integrate(integrand, 0.0, ctx.approx_hi(), &self.quad.outer())?.value);
        }
        let per_v = |v: f64| -> Result<f64> {
            let fv = rayleigh_density(v, ctx.var);
            if fv <= NEGLIGIBLE_WEIGHT {
                return Ok(0.0);
            }
            let table = ctx.intra_table(IntraKind::LosBracket, v)?;
            let integrand = |r: f64| -> Result<f64> {
                let ri = rician_density(r, v, ctx.var);
                if ri <= NEGLIGIBLE_WEIGHT {
                    return Ok(0.0);
                }
                let intra = |_, t: f64| Ok(ctx.intra_factor(table.eval(t)));
                Ok(ri * alternating_sum(&los, r, 0.0, None, intra)?)
            };
            let (lo, hi) = ctx.span(v);
            Ok(fv * try_integrate(integrand, lo, hi, &self.quad.middle())?.value)
        };
        Ok(try_integrate(per_v, 0.0, ctx.cutoff * ctx.sigma, &self.quad.outer())?.value)
    }

    /// Area spectral efficiency in bit/s/Hz/m².
    pub fn ase(&self, model: AssociationModel, gamma_th: f64, flags: CoverageFlags, cfg: &NetworkConfig) -> Result<f64> {
        let p = self.coverage(model, gamma_th, flags, cfg)?.value;
        Ok(ase_from_coverage(cfg.mean_active, cfg.parent_density, gamma_th, p))
    }

    /// Exhaustive scan of `s̄ ∈ {1, …, M}`; ties go to the smaller `s̄`.
    pub fn optimize_mean_active(
        &self,
        model: AssociationModel,
        gamma_th: f64,
        flags: CoverageFlags,
        cfg: &NetworkConfig,
    ) -> Result<(u32, f64)> {
        optimize_over_mean_active(cfg.cluster_tx_count, |s_bar| {
            let mut c = *cfg;
            c.mean_active = s_bar as f64;
            self.ase(model, gamma_th, flags, &c)
        })
    }
}

pub fn ase_from_coverage(mean_active: f64, parent_density: f64, gamma_th: f64, coverage: f64) -> f64 {
    mean_active * parent_density * gamma_th.ln_1p() / std::f64::consts::LN_2 * coverage
}

/// Argmax of `ase(s̄)` over `1..=m`, ties broken toward the smaller `s̄`.
pub fn optimize_over_mean_active<F>(m: u32, mut ase: F) -> Result<(u32, f64)>
where
    F: FnMut(u32) -> Result<f64>,
{
    if m == 0 {
        return Err(Error::invalid("cluster_tx_count", "must be at least 1"));
    }
    let mut best = (1, ase(1)?);
    for s_bar in 2..=m {
        let value = ase(s_bar)?;
        if value > best.1 {
            best = (s_bar, value);
        }
    }
    Ok(best)
}

/// `ξ` and `ψ` of the closed-form lower bound.
pub fn lower_bound_constants(cfg: &NetworkConfig) -> Result<LowerBoundConstants> {
    cfg.validate()?;
    let alpha = cfg.channel.alpha_los;
    if alpha <= 2.0 {
        return Err(Error::domain(format!(
            "the closed-form lower bound needs alpha_los > 2 (got {alpha}); its psi integral diverges otherwise"
        )));
    }
    let p = 2.0 / alpha;
    let table = cfg.gain_table()?;
    let xi = table.entries().map(|(a, b)| b * a.powf(p)).sum();
    let psi = psi_integral(p, cfg.channel.nakagami_los)?;
    Ok(LowerBoundConstants { xi, psi })
}

/// `ψ = ∫_0^∞ (1 - (1+y)^{-N}) y^{-p-1} dy` through `y = u^q`, `q = 1/(1-p)`,
/// which removes the `y^{-p}` singularity at the origin.
fn psi_integral(p: f64, n: u32) -> Result<f64> {
    let q = 1.0 / (1.0 - p);
    let n = n as i32;
    let integrand = |u: f64| -> Result<f64> {
        if u == 0.0 {
            return Ok(n as f64 * q);
        }
        let y = u.powf(q);
        let miss = if y < 0.25 {
            -(-(n as f64) * y.ln_1p()).exp_m1()
        } else {
            1.0 - (1.0 + y).powi(-n)
        };
        // (1 - (1+y)^-N) y^{-p-1} dy/du, with dy/du = q u^{q-1}.
        Ok(miss * q * u.powf(q - 1.0 - q * (p + 1.0)))
    };
    let tol = Tolerance::new(1e-13, 1e-11, 1000);
    let head = try_integrate(integrand, 0.0, 1.0, &tol)?.value;
    let tail = try_integrate_to_infinity(integrand, 1.0, &tol)?.value;
    Ok(head + tail)
}

/// Closed-form lower bound for the uniform model with LOS intra-cluster
/// interference only and unconditioned distances.
pub fn coverage_lower_bound(gamma_th: f64, cfg: &NetworkConfig) -> Result<f64> {
    if !(gamma_th > 0.0 && gamma_th.is_finite()) {
        return Err(Error::domain(format!("SINR threshold must be positive, got {gamma_th}")));
    }
    let consts = lower_bound_constants(cfg)?;
    let ch = &cfg.channel;
    if ch.nakagami_los > MAX_NAKAGAMI {
        return Err(Error::invalid("nakagami_los", format!("must be <= {MAX_NAKAGAMI}")));
    }
    let g0 = cfg.gain_table()?.boresight_gain();
    let big_n = ch.nakagami_los;
    let eta = gamma_bound_constant(big_n);
    let alpha = ch.alpha_los;
    let coef = 2.0 * consts.xi * consts.psi * (cfg.mean_active - 1.0) / alpha;
    let mut terms = [0.0; MAX_NAKAGAMI as usize];
    for n in 1..=big_n {
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let arg = gamma_th * eta * n as f64 / (g0 * big_n as f64);
        terms[n as usize - 1] = sign * binomial(big_n, n) / (1.0 + coef * arg.powf(2.0 / alpha));
    }
    Ok(compensated_sum(&mut terms[..big_n as usize]))
}

/// Conditional intra-cluster Laplace transform with default quadrature.
pub fn laplace_intra(
    model: AssociationModel,
    n: u32,
    s: f64,
    v: f64,
    r_serving: f64,
    flags: CoverageFlags,
    cfg: &NetworkConfig,
) -> Result<f64> {
    Evaluator::default().laplace_intra(model, n, s, v, r_serving, flags, cfg)
}

pub fn laplace_inter(n: u32, s: f64, cfg: &NetworkConfig) -> Result<f64> {
    Evaluator::default().laplace_inter(n, s, cfg)
}

pub fn coverage(
    model: AssociationModel,
    gamma_th: f64,
    flags: CoverageFlags,
    cfg: &NetworkConfig,
    quad: &QuadratureSpec,
) -> Result<AnalyticalCoverage> {
    Evaluator::new(*quad)?.coverage(model, gamma_th, flags, cfg)
}

pub fn ase(model: AssociationModel, gamma_th: f64, flags: CoverageFlags, cfg: &NetworkConfig) -> Result<f64> {
    Evaluator::default().ase(model, gamma_th, flags, cfg)
}

pub fn optimize_mean_active(
    model: AssociationModel,
    gamma_th: f64,
    flags: CoverageFlags,
    cfg: &NetworkConfig,
) -> Result<(u32, f64)> {
    Evaluator::default().optimize_mean_active(model, gamma_th, flags, cfg)
}
