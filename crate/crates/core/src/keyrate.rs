//! Secure key rate, the source → channel → estimator → rate pipeline, distance
//! sweeps, the maximal-distance search and the WCS intensity optimizer.

use rayon::prelude::*;

use crate::channel::{link_budget, simulate_observation, ChannelParams, Observation};
use crate::error::{Error, Result};
use crate::estimator::{
    analytic_bounds_wcs, build_lp, solve_bounds_lp, BoundMethod, BoundResult, BoundStatus,
    WcsObservations,
};
use crate::sources::{
    poisson_distribution, PhotonNumberDistribution, ResolvedState, SourceRole, SourceStateSpec,
    DEFAULT_N_CUT,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Sifting efficiency q.
    pub q: f64,
    /// Error-correction inefficiency f(E).
    pub f: f64,
}

impl ProtocolParams {
    pub const BB84: ProtocolParams = ProtocolParams { q: 0.5, f: 1.22 };

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidParameter(format!("q = {} outside (0, 1]", self.q)));
        }
        if !(self.f >= 1.0 && self.f.is_finite()) {
            return Err(Error::InvalidParameter(format!("f = {} must be at least 1", self.f)));
        }
        Ok(())
    }
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self::BB84
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Lp,
    Analytic,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Lp => "lp",
            EstimatorKind::Analytic => "analytic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lp" => Some(EstimatorKind::Lp),
            "analytic" => Some(EstimatorKind::Analytic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRatePoint {
    pub distance_km: f64,
    /// Secret bits per signal pulse; ≤ 0 means no key.
    pub rate: f64,
    pub q_s: f64,
    pub e_s: f64,
    pub q1_lower: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub bounds: BoundResult,
    /// Signal and decoy intensities when both are coherent states.
    pub mu: Option<f64>,
    pub nu: Option<f64>,
}

/// `H₂(x) = −x log₂ x − (1 − x) log₂(1 − x)`, with `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::DomainError(x));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// `R = q·{−Q_s f H₂(E_s) + Q₁ [1 − H₂(e₁)]}` with `Q₁ = p₁ˢ Y₁ˡ`. Not clamped.
pub fn key_rate(
    q_s: f64,
    e_s: f64,
    p1_signal: f64,
    bounds: &BoundResult,
    protocol: &ProtocolParams,
) -> Result<f64> {
    if bounds.status != BoundStatus::Optimal {
        return Err(Error::InvalidParameter("bounds are not optimal".into()));
    }
    let q1 = p1_signal * bounds.y1_lower;
    let leak = q_s * protocol.f * binary_entropy(e_s)?;
    let privacy = q1 * (1.0 - binary_entropy(bounds.e1_upper)?);
    Ok(protocol.q * (privacy - leak))
}

fn vanished_bounds() -> BoundResult {
    BoundResult {
        y1_lower: 0.0,
        e1_upper: 1.0,
        x1_upper: 0.0,
        status: BoundStatus::Optimal,
        method: BoundMethod::AnalyticTwoDecoy,
        active_y1: Vec::new(),
        active_x1: Vec::new(),
    }
}

fn find_role(states: &[ResolvedState], role: SourceRole) -> Vec<usize> {
    states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.role == role)
        .map(|(i, _)| i)
        .collect()
}

/// Runs the pipeline on already resolved source states at one distance.
pub fn evaluate_point(
    states: &[ResolvedState],
    channel: &ChannelParams,
    protocol: &ProtocolParams,
    distance_km: f64,
    estimator: EstimatorKind,
    n_cut: usize,
) -> Result<KeyRatePoint> {
    channel.validate()?;
    protocol.validate()?;
    let signals = find_role(states, SourceRole::Signal);
    if signals.len() != 1 {
        return Err(Error::InvalidParameter(format!(
            "need exactly one signal state, found {}",
            signals.len()
        )));
    }
    let decoys = find_role(states, SourceRole::WeakDecoy);
    let vacua = find_role(states, SourceRole::VacuumDecoy);
    if vacua.is_empty() {
        return Err(Error::MissingVacuumState);
    }
    let budget = link_budget(channel, distance_km)?;
    let observations: Vec<Observation> = states
        .iter()
        .map(|s| simulate_observation(&s.label, s.role, &s.distribution, channel, &budget))
        .collect::<Result<_>>()?;
    let sig = &observations[signals[0]];
    let mu = states[signals[0]].wcs_mu;
    let nu = decoys.first().and_then(|&i| states[i].wcs_mu);

    let bounds = match estimator {
        EstimatorKind::Lp => solve_bounds_lp(&build_lp(&observations, n_cut)?)?,
        EstimatorKind::Analytic => {
            let (Some(mu), Some(nu)) = (mu, nu) else {
                return Err(Error::UnsupportedEstimator(
                    "analytic",
                    "signal and weak decoy must both be coherent states".into(),
                ));
            };
            let dec = &observations[decoys[0]];
            let vac = &observations[vacua[0]];
            let w = WcsObservations {
                mu,
                nu,
                q_mu: sig.gain,
                e_mu: sig.qber,
                q_nu: dec.gain,
                e_nu: dec.qber,
                y0: vac.gain,
                e0: vac.qber,
            };
            match analytic_bounds_wcs(&w) {
                Ok(b) => b,
                Err(Error::VanishingYield(_)) => vanished_bounds(),
                Err(e) => return Err(e),
            }
        }
    };
    let p1 = sig.distribution.p(1);
    let rate = key_rate(sig.gain, sig.qber, p1, &bounds, protocol)?;
    Ok(KeyRatePoint {
        distance_km,
        rate,
        q_s: sig.gain,
        e_s: sig.qber,
        q1_lower: p1 * bounds.y1_lower,
        y1_lower: bounds.y1_lower,
        e1_upper: bounds.e1_upper,
        bounds,
        mu,
        nu,
    })
}

/// Resolves the source specifications and evaluates one point.
pub fn simulate_point(
    sources: &[SourceStateSpec],
    channel: &ChannelParams,
    protocol: &ProtocolParams,
    distance_km: f64,
    estimator: EstimatorKind,
) -> Result<KeyRatePoint> {
    let states = resolve_all(sources, DEFAULT_N_CUT)?;
    evaluate_point(&states, channel, protocol, distance_km, estimator, DEFAULT_N_CUT)
}

pub fn resolve_all(sources: &[SourceStateSpec], n_cut: usize) -> Result<Vec<ResolvedState>> {
    sources
        .iter()
        .map(|s| s.resolve(n_cut).map_err(|e| e.context(format!("source '{}'", s.label))))
        .collect()
}

fn wcs_states(mu: f64, nu: f64, n_cut: usize) -> Result<Vec<ResolvedState>> {
    let state = |label: &str, role, d: PhotonNumberDistribution, m| ResolvedState {
        label: label.to_string(),
        role,
        distribution: d.with_label(label),
        wcs_mu: Some(m),
    };
    Ok(vec![
        state("signal", SourceRole::Signal, poisson_distribution(mu, n_cut)?, mu),
        state("decoy", SourceRole::WeakDecoy, poisson_distribution(nu, n_cut)?, nu),
        state(
            "vacuum",
            SourceRole::VacuumDecoy,
            PhotonNumberDistribution::vacuum().retruncate(n_cut),
            0.0,
        ),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSet {
    /// States with distance-independent statistics.
    Fixed(Vec<ResolvedState>),
    /// Coherent signal and decoy re-optimized at every distance.
    WcsOptimized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sources: SourceSet,
    pub channel: ChannelParams,
    pub protocol: ProtocolParams,
    pub estimator: EstimatorKind,
    pub n_cut: usize,
}

impl Scenario {
    pub fn fixed(states: Vec<ResolvedState>) -> Self {
        Self {
            sources: SourceSet::Fixed(states),
            channel: ChannelParams::GYS,
            protocol: ProtocolParams::BB84,
            estimator: EstimatorKind::Lp,
            n_cut: DEFAULT_N_CUT,
        }
    }

    pub fn wcs_optimized() -> Self {
        Self {
            sources: SourceSet::WcsOptimized,
            ..Self::fixed(Vec::new())
        }
    }

    pub fn with_channel(mut self, channel: ChannelParams) -> Self {
        self.channel = channel;
        self
    }

    pub fn with_estimator(mut self, estimator: EstimatorKind) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn evaluate(&self, distance_km: f64) -> Result<KeyRatePoint> {
        match &self.sources {
            SourceSet::Fixed(states) => evaluate_point(
                states,
                &self.channel,
                &self.protocol,
                distance_km,
                self.estimator,
                self.n_cut,
            ),
            SourceSet::WcsOptimized => Ok(optimize_raw(self, distance_km)?.1),
        }
    }
}

/// Evaluates every grid point; rows come back in grid order.
pub fn sweep_distance(scenario: &Scenario, grid: &[f64]) -> Result<Vec<KeyRatePoint>> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("distance grid must be strictly increasing".into()));
    }
    grid.par_iter()
        .map(|&l| {
            scenario
                .evaluate(l)
                .map_err(|e| e.context(format!("distance {l} km")))
        })
        .collect()
}

pub const DEFAULT_TOL_KM: f64 = 0.1;
const SCAN_START_KM: f64 = 10.0;
const SCAN_LIMIT_KM: f64 = 5120.0;

/// Largest distance with a positive rate, to within `tol_km`. The bracket comes
/// from a doubling scan starting at 10 km, then bisection.
pub fn max_distance(scenario: &Scenario, tol_km: f64) -> Result<f64> {
    if !(tol_km > 0.0) {
        return Err(Error::InvalidParameter(format!("tol_km = {tol_km} must be positive")));
    }
    let r0 = scenario.evaluate(0.0)?.rate;
    if r0 <= 0.0 {
        return Err(Error::NoPositiveRate(format!("R(0) = {r0:e}")));
    }
    let mut lo = 0.0;
    let mut hi = SCAN_START_KM;
    while scenario.evaluate(hi)?.rate > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > SCAN_LIMIT_KM {
            return Err(Error::InvalidParameter(format!(
                "rate still positive at {lo} km"
            )));
        }
    }
    while hi - lo > tol_km {
        let mid = 0.5 * (lo + hi);
        if scenario.evaluate(mid)?.rate > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcsOptimum {
    pub mu: f64,
    pub nu: f64,
    pub rate: f64,
}

const MU_RANGE: (f64, f64) = (0.05, 1.0);
const NU_MIN: f64 = 0.005;
const NU_CAP: f64 = 0.2;
const REFINE_START: f64 = 0.005;
const REFINE_STOP: f64 = 1e-3;

fn nu_max(mu: f64) -> f64 {
    NU_CAP.min(mu / 2.0)
}

fn wcs_rate(scenario: &Scenario, mu: f64, nu: f64, distance_km: f64) -> Result<KeyRatePoint> {
    let states = wcs_states(mu, nu, scenario.n_cut)?;
    evaluate_point(
        &states,
        &scenario.channel,
        &scenario.protocol,
        distance_km,
        scenario.estimator,
        scenario.n_cut,
    )
}

/// Grid plus pattern-search maximization of R over (μ, ν). The returned rate may
/// be nonpositive. Only strict improvements are accepted, so ties resolve toward
/// smaller μ, then smaller ν.
fn optimize_raw(scenario: &Scenario, distance_km: f64) -> Result<(WcsOptimum, KeyRatePoint)> {
    let mut grid = Vec::new();
    let n_mu = ((MU_RANGE.1 - MU_RANGE.0) / 0.01).round() as usize;
    for i in 0..=n_mu {
        let mu = (5 + i) as f64 / 100.0;
        let mut j = 0;
        loop {
            let nu = (5.0 + 10.0 * j as f64) / 1000.0;
            if nu > nu_max(mu) + 1e-12 {
                break;
            }
            grid.push((mu, nu));
            j += 1;
        }
    }
    let points: Vec<KeyRatePoint> = grid
        .par_iter()
        .map(|&(mu, nu)| wcs_rate(scenario, mu, nu, distance_km))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.rate > points[best].rate {
            best = i;
        }
    }
    let (mut mu, mut nu) = grid[best];
    let mut best_point = points[best].clone();

    let mut step = REFINE_START;
    while step >= REFINE_STOP / 2.0 {
        let mut moved = false;
        for (dm, dn) in [(-step, 0.0), (step, 0.0), (0.0, -step), (0.0, step)] {
            let (m, n) = (mu + dm, nu + dn);
            if m < MU_RANGE.0 || m > MU_RANGE.1 || n < NU_MIN || n > nu_max(m) {
                continue;
            }
            let p = wcs_rate(scenario, m, n, distance_km)?;
            if p.rate > best_point.rate {
                mu = m;
                nu = n;
                best_point = p;
                moved = true;
                break;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    Ok((
        WcsOptimum {
            mu,
            nu,
            rate: best_point.rate,
        },
        best_point,
    ))
}

/// Best coherent-state signal and decoy intensities at one distance.
pub fn optimize_wcs_intensities(
    channel: &ChannelParams,
    protocol: &ProtocolParams,
    distance_km: f64,
    estimator: EstimatorKind,
) -> Result<WcsOptimum> {
    let scenario = Scenario {
        channel: *channel,
        protocol: *protocol,
        estimator,
        ..Scenario::wcs_optimized()
    };
    let (opt, _) = optimize_raw(&scenario, distance_km)?;
    if opt.rate <= 0.0 {
        return Err(Error::NoPositiveRate(format!(
            "best rate {:e} at {distance_km} km",
            opt.rate
        )));
    }
    Ok(opt)
}
