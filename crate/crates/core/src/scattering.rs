//! Photon counting for a resonant Gaussian coherent pulse scattered by a two-level
//! emitter side-coupled to a waveguide.
//!
//! The coherent input is replaced by a classical drive on the emitter. The three
//! output channels are then
//!
//! * reflected: `√(Γ/2) σ₋`
//! * transmitted: `α(t) − √(Γ/2) σ₋` (drive plus forward emission, interfering)
//! * lost: `√Γ′ σ₋`
//!
//! For each channel a number-resolved hierarchy of conditional 2×2 density
//! matrices `ρ⁽ⁿ⁾` is integrated; `P_n = Tr ρ⁽ⁿ⁾(t_end)`. One extra level collects
//! every history with more than `n_max` counts, so the hierarchy is trace
//! preserving and the tail mass is explicit. The unconditional master equation is
//! integrated alongside as a check: the count-summed hierarchy must reproduce it.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ode::{self, System};
use crate::quadrature::adaptive_simpson;
use crate::sources::PhotonNumberDistribution;

/// Tail mass above which a channel's truncation is rejected.
pub const TAIL_LIMIT: f64 = 1e-6;
/// Maximal change of any `P_n` under step halving.
pub const STEP_HALVING_TOL: f64 = 1e-8;
/// Envelope and residual excitation must fall below this at the window edges.
pub const EDGE_LIMIT: f64 = 1e-10;
/// Escalation of `n_max` gives up beyond this.
pub const N_MAX_CEILING: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterSpec {
    /// Γ: decay rate into the waveguide mode; sets the time unit.
    pub gamma_wg: f64,
    /// Γ′: decay rate into everything else.
    pub gamma_loss: f64,
}

impl EmitterSpec {
    pub fn new(gamma_wg: f64, gamma_loss: f64) -> Result<Self> {
        let e = Self {
            gamma_wg,
            gamma_loss,
        };
        e.validate()?;
        Ok(e)
    }

    /// Emitter with `Γ′ = Γ / purcell`; an infinite Purcell factor means no loss.
    pub fn from_purcell(gamma_wg: f64, purcell: f64) -> Result<Self> {
        if !(purcell > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Purcell factor {purcell} must be positive"
            )));
        }
        Self::new(gamma_wg, gamma_wg / purcell)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_wg > 0.0 && self.gamma_wg.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "waveguide decay rate {} must be positive",
                self.gamma_wg
            )));
        }
        if !(self.gamma_loss >= 0.0 && self.gamma_loss.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "loss rate {} must be non-negative",
                self.gamma_loss
            )));
        }
        Ok(())
    }

    pub fn gamma_total(&self) -> f64 {
        self.gamma_wg + self.gamma_loss
    }

    /// `Γ/Γ′`, infinite for a lossless emitter.
    pub fn purcell(&self) -> f64 {
        if self.gamma_loss > 0.0 {
            self.gamma_wg / self.gamma_loss
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    /// n̄ of the input coherent state.
    pub mean_photons: f64,
    /// RMS width σ of the spectral density |φ(δ)|².
    pub spectral_width: f64,
    /// Carrier offset from resonance; only 0 is supported.
    pub detuning: f64,
}

impl PulseSpec {
    pub fn new(mean_photons: f64, spectral_width: f64) -> Result<Self> {
        let p = Self {
            mean_photons,
            spectral_width,
            detuning: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_photons >= 0.0 && self.mean_photons.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mean photon number {} must be non-negative",
                self.mean_photons
            )));
        }
        if !(self.spectral_width > 0.0 && self.spectral_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spectral width {} must be positive",
                self.spectral_width
            )));
        }
        if self.detuning != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "detuning {} is not supported; only resonant pulses are modeled",
                self.detuning
            )));
        }
        Ok(())
    }
}

/// Input amplitude `α(t) = √n̄ (2σ²/π)^{1/4} exp(−σ²t²)`, so that `∫|α|² dt = n̄`
/// and the spectral density has RMS width σ. The phase is fixed to zero.
pub fn pulse_amplitude(pulse: &PulseSpec, t: f64) -> f64 {
    let s = pulse.spectral_width;
    pulse.mean_photons.sqrt() * (2.0 * s * s / PI).powf(0.25) * (-s * s * t * t).exp()
}

/// Single-photon reflection and transmission amplitudes at detuning `delta`.
pub fn single_photon_coeffs(emitter: &EmitterSpec, delta: f64) -> (Complex64, Complex64) {
    let denom = Complex64::new(0.5 * emitter.gamma_total(), -delta);
    let r = Complex64::new(-0.5 * emitter.gamma_wg, 0.0) / denom;
    (r, Complex64::new(1.0, 0.0) + r)
}

/// Probabilities for a single photon with the pulse's spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonProbabilities {
    pub reflectance: f64,
    pub transmittance: f64,
    pub loss: f64,
}

pub fn single_photon_probabilities(
    emitter: &EmitterSpec,
    pulse: &PulseSpec,
) -> SinglePhotonProbabilities {
    let s = pulse.spectral_width;
    let density = |d: f64| (-(d * d) / (2.0 * s * s)).exp() / (2.0 * PI * s * s).sqrt();
    let (a, b) = (-12.0 * s, 12.0 * s);
    let tol = 1e-13;
    let reflectance = adaptive_simpson(
        |d| density(d) * single_photon_coeffs(emitter, d).0.norm_sqr(),
        a,
        b,
        tol,
    );
    let transmittance = adaptive_simpson(
        |d| density(d) * single_photon_coeffs(emitter, d).1.norm_sqr(),
        a,
        b,
        tol,
    );
    let loss = adaptive_simpson(
        // 1 − |r|² − |t|² written out so a lossless emitter gives exactly zero
        |d| {
            let half = 0.5 * emitter.gamma_total();
            density(d) * 0.5 * emitter.gamma_wg * emitter.gamma_loss / (d * d + half * half)
        },
        a,
        b,
        tol,
    );
    SinglePhotonProbabilities {
        reflectance,
        transmittance,
        loss,
    }
}

/// `R₁ = ∫ dδ |φ(δ)|² |r(δ)|²`.
pub fn single_photon_reflectance(emitter: &EmitterSpec, pulse: &PulseSpec) -> f64 {
    single_photon_probabilities(emitter, pulse).reflectance
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    pub t_start: f64,
    pub t_end: f64,
    /// Nominal step; the window is split into `ceil(span/step)` equal steps.
    pub step: f64,
    pub n_max: usize,
}

impl SimGrid {
    /// Window `[−6/σ, 6/σ + 30/Γ_tot]`, step `min(1/(100Γ_tot), 1/(100σ))`.
    pub fn default_for(emitter: &EmitterSpec, pulse: &PulseSpec) -> Self {
        let s = pulse.spectral_width;
        let g = emitter.gamma_total();
        let n_max = if pulse.mean_photons <= 1.0 {
            8
        } else {
            // Poisson tail of the input stays far below the limit at this cut
            (pulse.mean_photons + 10.0 * pulse.mean_photons.sqrt()).ceil() as usize + 8
        };
        Self {
            t_start: -6.0 / s,
            t_end: 6.0 / s + 30.0 / g,
            step: (0.01 / g).min(0.01 / s),
            n_max,
        }
    }

    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.step).ceil().max(1.0) as usize
    }

    fn validate(&self, pulse: &PulseSpec) -> Result<()> {
        if !(self.t_start < self.t_end) {
            return Err(Error::GridTooShort(format!(
                "window [{}, {}] is empty",
                self.t_start, self.t_end
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step {} must be positive",
                self.step
            )));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        let s = pulse.spectral_width;
        for t in [self.t_start, self.t_end] {
            let rel = (-s * s * t * t).exp();
            if rel >= EDGE_LIMIT {
                return Err(Error::GridTooShort(format!(
                    "pulse envelope at t = {t} is {rel:.2e} of its peak"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CountingDiagnostics {
    /// Max |ΔP_n| between the step `h` and `h/2` passes, over channels and n.
    pub step_halving_residual: f64,
    /// Max |Tr Σ_n ρ⁽ⁿ⁾ − 1| over time and channels.
    pub max_trace_error: f64,
    /// Max elementwise |Σ_n ρ⁽ⁿ⁾ − ρ_unconditional| over time and channels.
    pub max_hierarchy_mismatch: f64,
    /// Excited-state population at `t_end`.
    pub final_excitation: f64,
    pub steps: usize,
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountingResult {
    pub reflected: PhotonNumberDistribution,
    pub transmitted: PhotonNumberDistribution,
    pub lost: PhotonNumberDistribution,
    /// Channel means from the integrated photon fluxes (no truncation involved).
    pub mean_reflected: f64,
    pub mean_transmitted: f64,
    pub mean_lost: f64,
    pub diagnostics: CountingDiagnostics,
}

/// One row of the optional per-step trace dump for the reflected hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    /// `Tr ρ⁽ⁿ⁾` for n = 0..=n_max, then the overflow level.
    pub level_traces: Vec<f64>,
    pub excitation: f64,
}

// Hermitian 2×2 matrix in the (e, g) basis stored as [ρ_ee, ρ_gg, Re ρ_eg, Im ρ_eg].
const EE: usize = 0;
const GG: usize = 1;
const RE: usize = 2;
const IM: usize = 3;
const BLOCK: usize = 4;

/// `−i[H, ρ]` for `H = iΩ(σ₊ − σ₋)`, Ω real.
#[inline]
fn add_drive(r: &[f64], omega: f64, o: &mut [f64]) {
    o[EE] += 2.0 * omega * r[RE];
    o[GG] -= 2.0 * omega * r[RE];
    o[RE] += omega * (r[GG] - r[EE]);
}

/// `−(κ/2){σ₊σ₋, ρ}`.
#[inline]
fn add_no_jump(r: &[f64], kappa: f64, o: &mut [f64]) {
    o[EE] -= kappa * r[EE];
    o[RE] -= 0.5 * kappa * r[RE];
    o[IM] -= 0.5 * kappa * r[IM];
}

/// `κ σ₋ ρ σ₊`.
#[inline]
fn add_jump(r: &[f64], kappa: f64, o: &mut [f64]) {
    o[GG] += kappa * r[EE];
}

/// `L ρ L†` for `L = α − cσ₋`.
#[inline]
fn add_transmitted_jump(r: &[f64], alpha: f64, c: f64, o: &mut [f64]) {
    let a2 = alpha * alpha;
    let ac = alpha * c;
    o[EE] += a2 * r[EE];
    o[GG] += a2 * r[GG] - 2.0 * ac * r[RE] + c * c * r[EE];
    o[RE] += a2 * r[RE] - ac * r[EE];
    o[IM] += a2 * r[IM];
}

/// `−½{L†L, ρ}` for `L = α − cσ₋`.
#[inline]
fn add_transmitted_no_jump(r: &[f64], alpha: f64, c: f64, o: &mut [f64]) {
    let a2 = alpha * alpha;
    let ac = alpha * c;
    let c2 = c * c;
    o[EE] += -a2 * r[EE] + ac * r[RE] - c2 * r[EE];
    o[GG] += -a2 * r[GG] + ac * r[RE];
    o[RE] += -a2 * r[RE] + 0.5 * ac * (r[EE] + r[GG]) - 0.5 * c2 * r[RE];
    o[IM] += -a2 * r[IM] - 0.5 * c2 * r[IM];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Reflected,
    Transmitted,
    Lost,
}

struct Hierarchy {
    pulse: PulseSpec,
    gamma_wg: f64,
    gamma_loss: f64,
    coupling: f64,
    levels: usize,
    channels: Vec<Channel>,
}

impl Hierarchy {
    fn new(emitter: &EmitterSpec, pulse: &PulseSpec, n_max: usize) -> Self {
        let mut channels = vec![Channel::Reflected, Channel::Transmitted];
        if emitter.gamma_loss > 0.0 {
            channels.push(Channel::Lost);
        }
        Self {
            pulse: *pulse,
            gamma_wg: emitter.gamma_wg,
            gamma_loss: emitter.gamma_loss,
            coupling: (0.5 * emitter.gamma_wg).sqrt(),
            levels: n_max + 2,
            channels,
        }
    }

    fn channel_base(&self, k: usize) -> usize {
        k * self.levels * BLOCK
    }

    fn unconditional_base(&self) -> usize {
        self.channels.len() * self.levels * BLOCK
    }

    fn flux_base(&self) -> usize {
        self.unconditional_base() + BLOCK
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for k in 0..self.channels.len() {
            y[self.channel_base(k) + GG] = 1.0;
        }
        y[self.unconditional_base() + GG] = 1.0;
        y
    }

    fn counting_rhs(&self, kind: Channel, alpha: f64, y: &[f64], out: &mut [f64]) {
        let c = self.coupling;
        let gamma_tot = self.gamma_wg + self.gamma_loss;
        let last = self.levels - 1;
        for n in 0..self.levels {
            let r = &y[n * BLOCK..(n + 1) * BLOCK];
            let prev = (n > 0).then(|| &y[(n - 1) * BLOCK..n * BLOCK]);
            let o = &mut out[n * BLOCK..(n + 1) * BLOCK];
            match kind {
                Channel::Reflected | Channel::Lost => {
                    let counted = if kind == Channel::Reflected {
                        0.5 * self.gamma_wg
                    } else {
                        self.gamma_loss
                    };
                    add_drive(r, c * alpha, o);
                    add_no_jump(r, gamma_tot, o);
                    add_jump(r, gamma_tot - counted, o);
                    if let Some(p) = prev {
                        add_jump(p, counted, o);
                    }
                    if n == last {
                        add_jump(r, counted, o);
                    }
                }
                Channel::Transmitted => {
                    let uncounted = 0.5 * self.gamma_wg + self.gamma_loss;
                    add_drive(r, 0.5 * c * alpha, o);
                    add_transmitted_no_jump(r, alpha, c, o);
                    add_no_jump(r, uncounted, o);
                    add_jump(r, uncounted, o);
                    if let Some(p) = prev {
                        add_transmitted_jump(p, alpha, c, o);
                    }
                    if n == last {
                        add_transmitted_jump(r, alpha, c, o);
                    }
                }
            }
        }
    }
}

impl System for Hierarchy {
    fn dim(&self) -> usize {
        self.flux_base() + 3
    }

    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let alpha = pulse_amplitude(&self.pulse, t);
        let c = self.coupling;
        let span = self.levels * BLOCK;
        for (k, &kind) in self.channels.iter().enumerate() {
            let b = self.channel_base(k);
            self.counting_rhs(kind, alpha, &y[b..b + span], &mut out[b..b + span]);
        }
        let u = self.unconditional_base();
        let gamma_tot = self.gamma_wg + self.gamma_loss;
        {
            let (r, o) = (&y[u..u + BLOCK], &mut out[u..u + BLOCK]);
            add_drive(r, c * alpha, o);
            add_no_jump(r, gamma_tot, o);
            add_jump(r, gamma_tot, o);
        }
        let (ee, re) = (y[u + EE], y[u + RE]);
        let f = self.flux_base();
        out[f] = c * c * ee;
        out[f + 1] = alpha * alpha - 2.0 * alpha * c * re + c * c * ee;
        out[f + 2] = self.gamma_loss * ee;
    }
}

struct PassOutput {
    /// Per channel: traces of levels 0..=n_max and the overflow level.
    level_traces: Vec<Vec<f64>>,
    fluxes: [f64; 3],
    max_trace_error: f64,
    max_mismatch: f64,
    final_excitation: f64,
}

fn run_pass(
    hier: &Hierarchy,
    grid: &SimGrid,
    steps: usize,
    mut dump: Option<&mut Vec<TraceSample>>,
) -> PassOutput {
    let mut y = hier.initial_state();
    let span = hier.levels * BLOCK;
    let u = hier.unconditional_base();
    let mut max_trace_error: f64 = 0.0;
    let mut max_mismatch: f64 = 0.0;
    ode::integrate(hier, &mut y, grid.t_start, grid.t_end, steps, |t, y| {
        for k in 0..hier.channels.len() {
            let b = hier.channel_base(k);
            let mut sum = [0.0; BLOCK];
            for level in y[b..b + span].chunks_exact(BLOCK) {
                for (s, v) in sum.iter_mut().zip(level) {
                    *s += v;
                }
            }
            max_trace_error = max_trace_error.max((sum[EE] + sum[GG] - 1.0).abs());
            for (s, v) in sum.iter().zip(&y[u..u + BLOCK]) {
                max_mismatch = max_mismatch.max((s - v).abs());
            }
        }
        if let Some(rows) = dump.as_deref_mut() {
            rows.push(TraceSample {
                t,
                level_traces: y[..span]
                    .chunks_exact(BLOCK)
                    .map(|l| l[EE] + l[GG])
                    .collect(),
                excitation: y[u + EE],
            });
        }
    });
    let level_traces = (0..hier.channels.len())
        .map(|k| {
            let b = hier.channel_base(k);
            y[b..b + span]
                .chunks_exact(BLOCK)
                .map(|l| l[EE] + l[GG])
                .collect()
        })
        .collect();
    let f = hier.flux_base();
    PassOutput {
        level_traces,
        fluxes: [y[f], y[f + 1], y[f + 2]],
        max_trace_error,
        max_mismatch,
        final_excitation: y[u + EE],
    }
}

fn to_distribution(traces: &[f64], label: &str) -> Result<PhotonNumberDistribution> {
    let probs = traces[..traces.len() - 1].to_vec();
    let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    PhotonNumberDistribution::new(probs, tail, label)
}

/// Number statistics of all three output channels on an explicit grid.
///
/// Runs the hierarchy at the grid step and at half of it; the finer pass is
/// reported and the difference must stay below [`STEP_HALVING_TOL`].
pub fn count_channel_distributions(
    emitter: &EmitterSpec,
    pulse: &PulseSpec,
    grid: &SimGrid,
) -> Result<CountingResult> {
    count_with_dump(emitter, pulse, grid, None)
}

/// Like [`count_channel_distributions`], also recording the reflected hierarchy's
/// level traces at every step of the reported (finer) pass.
pub fn count_with_trace(
    emitter: &EmitterSpec,
    pulse: &PulseSpec,
    grid: &SimGrid,
) -> Result<(CountingResult, Vec<TraceSample>)> {
    let mut rows = Vec::new();
    let result = count_with_dump(emitter, pulse, grid, Some(&mut rows))?;
    Ok((result, rows))
}

fn count_with_dump(
    emitter: &EmitterSpec,
    pulse: &PulseSpec,
    grid: &SimGrid,
    dump: Option<&mut Vec<TraceSample>>,
) -> Result<CountingResult> {
    emitter.validate()?;
    pulse.validate()?;
    grid.validate(pulse)?;

    let hier = Hierarchy::new(emitter, pulse, grid.n_max);
    let steps = grid.steps();
    let coarse = run_pass(&hier, grid, steps, None);
    let fine = run_pass(&hier, grid, 2 * steps, dump);

    let residual = coarse
        .level_traces
        .iter()
        .zip(&fine.level_traces)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);

    if fine.final_excitation >= EDGE_LIMIT {
        return Err(Error::GridTooShort(format!(
            "emitter excitation {:.2e} remains at t_end = {}",
            fine.final_excitation, grid.t_end
        )));
    }
    if residual > STEP_HALVING_TOL {
        return Err(Error::NonConvergent {
            residual,
            tolerance: STEP_HALVING_TOL,
        });
    }

    let reflected = to_distribution(&fine.level_traces[0], "reflected")?;
    let transmitted = to_distribution(&fine.level_traces[1], "transmitted")?;
    let lost = match fine.level_traces.get(2) {
        Some(traces) => to_distribution(traces, "lost")?,
        None => PhotonNumberDistribution::point_mass(0, "lost").retruncate(grid.n_max),
    };
    for (channel, d) in [
        ("reflected", &reflected),
        ("transmitted", &transmitted),
        ("lost", &lost),
    ] {
        if d.tail_mass() > TAIL_LIMIT {
            return Err(Error::TruncationTooSmall {
                channel,
                tail: d.tail_mass(),
                limit: TAIL_LIMIT,
                n_max: grid.n_max,
            });
        }
    }

    Ok(CountingResult {
        reflected,
        transmitted,
        lost,
        mean_reflected: fine.fluxes[0],
        mean_transmitted: fine.fluxes[1],
        mean_lost: fine.fluxes[2],
        diagnostics: CountingDiagnostics {
            step_halving_residual: residual,
            max_trace_error: coarse.max_trace_error.max(fine.max_trace_error),
            max_hierarchy_mismatch: coarse.max_mismatch.max(fine.max_mismatch),
            final_excitation: fine.final_excitation,
            steps: 2 * steps,
            n_max: grid.n_max,
        },
    })
}

/// Counting statistics on the default grid, raising `n_max` by 2 until every
/// channel's tail is below [`TAIL_LIMIT`].
pub fn simulate_channels(emitter: &EmitterSpec, pulse: &PulseSpec) -> Result<CountingResult> {
    emitter.validate()?;
    pulse.validate()?;
    let mut grid = SimGrid::default_for(emitter, pulse);
    loop {
        match count_channel_distributions(emitter, pulse, &grid) {
            Err(Error::TruncationTooSmall { .. }) if grid.n_max + 2 <= N_MAX_CEILING => {
                grid.n_max += 2;
            }
            other => return other,
        }
    }
}
