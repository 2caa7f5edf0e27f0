//! Scenario configuration: a flat `key = value` text format with dotted prefixes.
//!
//! ```text
//! # GYS link, coherent signal and decoy, LP estimator
//! channel.alpha_db_per_km = 0.21
//! estimator = lp
//! source.sig.role = signal
//! source.sig.kind = wcs
//! source.sig.mu = 0.5
//! sweep.kind = distance
//! sweep.l_start = 0
//! sweep.l_end = 160
//! sweep.l_step = 5
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear once.
//! See the README for the full key list.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use log::warn;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::keyrate::{EstimatorKind, ProtocolParams, DEFAULT_TOL_KM};
use crate::scattering::{EmitterSpec, PulseSpec};
use crate::sources::{SourceKind, SourceRole, SourceStateSpec, TableRef, DEFAULT_N_CUT};

/// Coherent decoy intensity injected when a WCS signal comes without a decoy.
pub const DEFAULT_WCS_DECOY: f64 = 0.05;
/// Mean photon number of the injected emitter decoy pulse.
pub const DEFAULT_TLSS_DECOY: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub enum DistanceGrid {
    Range { start: f64, end: f64, step: f64 },
    Values(Vec<f64>),
}

impl DistanceGrid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            DistanceGrid::Values(v) => v.clone(),
            DistanceGrid::Range { start, end, step } => {
                let n = ((end - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| start + i as f64 * step).collect()
            }
        }
    }
}

impl Default for DistanceGrid {
    fn default() -> Self {
        DistanceGrid::Range {
            start: 0.0,
            end: 160.0,
            step: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Distance,
    MaxDistance,
    SourceStats,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Distance => "distance",
            SweepKind::MaxDistance => "max-distance",
            SweepKind::SourceStats => "source-stats",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "distance" => Some(SweepKind::Distance),
            "max-distance" => Some(SweepKind::MaxDistance),
            "source-stats" => Some(SweepKind::SourceStats),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub grid: DistanceGrid,
    pub tol_km: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            kind: SweepKind::Distance,
            grid: DistanceGrid::default(),
            tol_km: DEFAULT_TOL_KM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceConfig {
    Fixed(Vec<SourceStateSpec>),
    /// Coherent signal and decoy optimized per distance, plus the vacuum.
    WcsOptimized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub channel: ChannelParams,
    pub protocol: ProtocolParams,
    pub estimator: EstimatorKind,
    pub n_cut: usize,
    pub sources: SourceConfig,
    pub sweep: SweepSpec,
    pub output: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            channel: ChannelParams::GYS,
            protocol: ProtocolParams::BB84,
            estimator: EstimatorKind::Lp,
            n_cut: DEFAULT_N_CUT,
            sources: SourceConfig::WcsOptimized,
            sweep: SweepSpec::default(),
            output: None,
        }
    }
}

pub(crate) struct Entry {
    line: usize,
    value: String,
    used: bool,
}

pub(crate) struct Reader<'a> {
    origin: &'a str,
    base_dir: Option<&'a Path>,
    entries: HashMap<String, Entry>,
    pub(crate) order: Vec<String>,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(text: &str, origin: &'a str, base_dir: Option<&'a Path>) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut order = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigParse {
                    path: origin.to_string(),
                    line: i + 1,
                    field: line.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim().to_string();
            if entries.contains_key(&key) {
                return Err(Error::ConfigParse {
                    path: origin.to_string(),
                    line: i + 1,
                    field: key,
                    message: "duplicate key".into(),
                });
            }
            order.push(key.clone());
            entries.insert(
                key,
                Entry {
                    line: i + 1,
                    value: value.trim().to_string(),
                    used: false,
                },
            );
        }
        Ok(Reader {
            origin,
            base_dir,
            entries,
            order,
        })
    }

    pub(crate) fn err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::ConfigParse {
            path: self.origin.to_string(),
            line: self.entries.get(key).map_or(0, |e| e.line),
            field: key.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn raw(&mut self, key: &str) -> Option<String> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            e.value.clone()
        })
    }

    pub(crate) fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| self.err(key, format!("`{v}` is not a number"))),
        }
    }

    pub(crate) fn f64_req(&mut self, key: &str) -> Result<f64> {
        if !self.entries.contains_key(key) {
            return Err(self.err(key, "missing"));
        }
        self.f64_or(key, f64::NAN)
    }

    /// Comma-separated numbers.
    pub(crate) fn list_or(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| self.err(key, "expected comma-separated numbers")),
        }
    }

    pub(crate) fn check<T>(&self, key: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| self.err(key, e.to_string()))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        for key in &self.order {
            if !self.entries[key].used {
                return Err(self.err(key, "unknown key"));
            }
        }
        Ok(())
    }
}

/// Channel, protocol and estimator settings shared by scenarios and figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Common {
    pub channel: ChannelParams,
    pub protocol: ProtocolParams,
    pub estimator: EstimatorKind,
    pub n_cut: usize,
}

impl Default for Common {
    fn default() -> Self {
        Common {
            channel: ChannelParams::GYS,
            protocol: ProtocolParams::BB84,
            estimator: EstimatorKind::Lp,
            n_cut: DEFAULT_N_CUT,
        }
    }
}

impl Common {
    pub(crate) fn read(r: &mut Reader) -> Result<Self> {
        let d = Common::default();
        let channel = ChannelParams {
            alpha_db_per_km: r.f64_or("channel.alpha_db_per_km", d.channel.alpha_db_per_km)?,
            eta_bob: r.f64_or("channel.eta_bob", d.channel.eta_bob)?,
            y0: r.f64_or("channel.y0", d.channel.y0)?,
            e0: r.f64_or("channel.e0", d.channel.e0)?,
            ed: r.f64_or("channel.ed", d.channel.ed)?,
        };
        r.check("channel", channel.validate())?;
        let protocol = ProtocolParams {
            q: r.f64_or("protocol.q", d.protocol.q)?,
            f: r.f64_or("protocol.f", d.protocol.f)?,
        };
        r.check("protocol", protocol.validate())?;
        let estimator = match r.raw("estimator") {
            None => d.estimator,
            Some(s) => EstimatorKind::parse(&s)
                .ok_or_else(|| r.err("estimator", format!("expected lp or analytic, got `{s}`")))?,
        };
        let n_cut = match r.raw("n_cut") {
            None => d.n_cut,
            Some(s) => match s.parse::<usize>() {
                Ok(n) if n >= 1 => n,
                _ => return Err(r.err("n_cut", format!("`{s}` is not a positive integer"))),
            },
        };
        Ok(Common {
            channel,
            protocol,
            estimator,
            n_cut,
        })
    }

    pub(crate) fn echo(&self, put: &mut impl FnMut(&str, String)) {
        let c = &self.channel;
        put("channel.alpha_db_per_km", fmt(c.alpha_db_per_km));
        put("channel.eta_bob", fmt(c.eta_bob));
        put("channel.y0", fmt(c.y0));
        put("channel.e0", fmt(c.e0));
        put("channel.ed", fmt(c.ed));
        put("protocol.q", fmt(self.protocol.q));
        put("protocol.f", fmt(self.protocol.f));
        put("estimator", self.estimator.as_str().into());
        put("n_cut", self.n_cut.to_string());
    }
}

fn source_labels(order: &[String]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for key in order {
        if let Some(rest) = key.strip_prefix("source.") {
            if let Some((label, _)) = rest.rsplit_once('.') {
                if !labels.iter().any(|l| l == label) {
                    labels.push(label.to_string());
                }
            }
        }
    }
    labels
}

fn parse_source(r: &mut Reader, label: &str) -> Result<Option<SourceStateSpec>> {
    let k = |field: &str| format!("source.{label}.{field}");
    let role_key = k("role");
    let role_str = r.raw(&role_key).ok_or_else(|| r.err(&role_key, "missing"))?;
    let role = SourceRole::parse(&role_str)
        .ok_or_else(|| r.err(&role_key, format!("unknown role `{role_str}`")))?;
    let kind_key = k("kind");
    let kind_str = match r.raw(&kind_key) {
        Some(s) => s,
        None if role == SourceRole::VacuumDecoy => "vacuum".into(),
        None => return Err(r.err(&kind_key, "missing")),
    };
    let kind = match kind_str.as_str() {
        "wcs" => {
            let key = k("mu");
            let mu = r.f64_req(&key)?;
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(r.err(&key, "must be a non-negative number"));
            }
            SourceKind::Wcs { mu }
        }
        "wcs-optimized" => {
            if role != SourceRole::Signal {
                return Err(r.err(&kind_key, "only the signal can be optimized"));
            }
            return Ok(None);
        }
        "vacuum" => SourceKind::Vacuum,
        "table" => {
            let key = k("table");
            let spec = r.raw(&key).ok_or_else(|| r.err(&key, "missing"))?;
            let table = match TableRef::parse(&spec) {
                TableRef::File(p) if p.is_relative() => {
                    TableRef::File(r.base_dir.map_or(p.clone(), |d| d.join(&p)))
                }
                t => t,
            };
            if !table.exists() {
                return Err(r.err(&key, format!("table `{table}` not found")));
            }
            SourceKind::Table(table)
        }
        "tlss" => {
            let gamma_wg = r.f64_or(&k("gamma_wg"), 1.0)?;
            let emitter = match (r.raw(&k("gamma_loss")), r.raw(&k("purcell"))) {
                (Some(_), Some(_)) => {
                    return Err(r.err(&k("purcell"), "give either gamma_loss or purcell"))
                }
                (Some(_), None) => {
                    let key = k("gamma_loss");
                    let loss = r.f64_req(&key)?;
                    r.check(&key, EmitterSpec::new(gamma_wg, loss))?
                }
                (None, p) => {
                    let key = k("purcell");
                    let purcell = match p {
                        Some(_) => r.f64_req(&key)?,
                        None => f64::INFINITY,
                    };
                    r.check(&key, EmitterSpec::from_purcell(gamma_wg, purcell))?
                }
            };
            let key = k("spectral_width");
            let sigma = r.f64_req(&key)?;
            let nbar = r.f64_req(&k("mean_photons"))?;
            let pulse = r.check(&key, PulseSpec::new(nbar, sigma))?;
            SourceKind::Tlss { emitter, pulse }
        }
        other => return Err(r.err(&kind_key, format!("unknown kind `{other}`"))),
    };
    Ok(Some(SourceStateSpec::new(label, role, kind)))
}

/// Adds the vacuum and, where it can be inferred, the weak decoy.
fn complete_sources(mut specs: Vec<SourceStateSpec>, origin: &str) -> Result<Vec<SourceStateSpec>> {
    let has = |specs: &[SourceStateSpec], role| specs.iter().any(|s| s.role == role);
    let fresh = |specs: &[SourceStateSpec], base: &str| {
        let mut label = base.to_string();
        while specs.iter().any(|s| s.label == label) {
            label.push('_');
        }
        label
    };
    if !has(&specs, SourceRole::WeakDecoy) {
        let signal = specs.iter().find(|s| s.role == SourceRole::Signal).cloned();
        let kind = match signal.map(|s| s.kind) {
            Some(SourceKind::Wcs { .. }) => SourceKind::Wcs {
                mu: DEFAULT_WCS_DECOY,
            },
            Some(SourceKind::Tlss { emitter, pulse }) => SourceKind::Tlss {
                emitter,
                pulse: PulseSpec {
                    mean_photons: DEFAULT_TLSS_DECOY,
                    ..pulse
                },
            },
            _ => {
                return Err(Error::ConfigParse {
                    path: origin.to_string(),
                    line: 0,
                    field: "source".into(),
                    message: "no weak decoy given and none can be inferred for this signal".into(),
                })
            }
        };
        let label = fresh(&specs, "decoy");
        warn!("no weak decoy configured, adding `{label}`");
        specs.push(SourceStateSpec::new(label, SourceRole::WeakDecoy, kind));
    }
    if !has(&specs, SourceRole::VacuumDecoy) {
        let label = fresh(&specs, "vacuum");
        warn!("no vacuum decoy configured, adding `{label}`");
        specs.push(SourceStateSpec::new(label, SourceRole::VacuumDecoy, SourceKind::Vacuum));
    }
    Ok(specs)
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::sources::read_text(path)?;
        Self::parse(&text, &path.display().to_string(), path.parent())
    }

    /// Parses config text. Relative table paths resolve against `base_dir`.
    pub fn parse(text: &str, origin: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut r = Reader::new(text, origin, base_dir)?;
        let Common {
            channel,
            protocol,
            estimator,
            n_cut,
        } = Common::read(&mut r)?;

        let labels = source_labels(&r.order);
        let mut specs = Vec::new();
        let mut optimized = false;
        for label in &labels {
            match parse_source(&mut r, label)? {
                Some(s) => specs.push(s),
                None => optimized = true,
            }
        }
        let n_signal = specs.iter().filter(|s| s.role == SourceRole::Signal).count()
            + usize::from(optimized);
        if n_signal != 1 {
            return Err(Error::ConfigParse {
                path: origin.to_string(),
                line: 0,
                field: "source".into(),
                message: format!("exactly one signal state required, found {n_signal}"),
            });
        }
        let sources = if optimized {
            if specs.iter().any(|s| s.role != SourceRole::VacuumDecoy) {
                return Err(Error::ConfigParse {
                    path: origin.to_string(),
                    line: 0,
                    field: "source".into(),
                    message: "an optimized WCS signal brings its own decoy; remove the others".into(),
                });
            }
            SourceConfig::WcsOptimized
        } else {
            SourceConfig::Fixed(complete_sources(specs, origin)?)
        };

        let kind = match r.raw("sweep.kind") {
            None => SweepKind::Distance,
            Some(s) => SweepKind::parse(&s).ok_or_else(|| {
                r.err(
                    "sweep.kind",
                    format!("expected distance, max-distance or source-stats, got `{s}`"),
                )
            })?,
        };
        let grid = if r.entries.contains_key("sweep.l_values") {
            DistanceGrid::Values(r.list_or("sweep.l_values", &[])?)
        } else {
            let DistanceGrid::Range { start, end, step } = DistanceGrid::default() else {
                unreachable!()
            };
            DistanceGrid::Range {
                start: r.f64_or("sweep.l_start", start)?,
                end: r.f64_or("sweep.l_end", end)?,
                step: r.f64_or("sweep.l_step", step)?,
            }
        };
        let points = grid.points();
        if let DistanceGrid::Range { step, .. } = grid {
            if !(step > 0.0) {
                return Err(r.err("sweep.l_step", "must be positive"));
            }
        }
        if points.is_empty()
            || points[0] < 0.0
            || points.windows(2).any(|w| w[1] <= w[0])
            || points.iter().any(|p| !p.is_finite())
        {
            return Err(Error::ConfigParse {
                path: origin.to_string(),
                line: 0,
                field: "sweep".into(),
                message: "distance grid must be non-empty, non-negative and strictly increasing"
                    .into(),
            });
        }
        let tol_km = r.f64_or("sweep.tol_km", DEFAULT_TOL_KM)?;
        if !(tol_km > 0.0) {
            return Err(r.err("sweep.tol_km", "must be positive"));
        }
        let output = r.raw("output.path").map(PathBuf::from);
        r.finish()?;
        Ok(ScenarioConfig {
            channel,
            protocol,
            estimator,
            n_cut,
            sources,
            sweep: SweepSpec { kind, grid, tol_km },
            output,
        })
    }

    /// Canonical `key = value` echo of every parameter, including injected
    /// defaults. Parsing the echo yields the same configuration (apart from the
    /// output path, which is not echoed).
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        Common {
            channel: self.channel,
            protocol: self.protocol,
            estimator: self.estimator,
            n_cut: self.n_cut,
        }
        .echo(&mut put);
        match &self.sources {
            SourceConfig::WcsOptimized => {
                put("source.signal.role", "signal".into());
                put("source.signal.kind", "wcs-optimized".into());
            }
            SourceConfig::Fixed(specs) => {
                for s in specs {
                    let k = |f: &str| format!("source.{}.{f}", s.label);
                    put(&k("role"), s.role.as_str().into());
                    match &s.kind {
                        SourceKind::Wcs { mu } => {
                            put(&k("kind"), "wcs".into());
                            put(&k("mu"), fmt(*mu));
                        }
                        SourceKind::Vacuum => put(&k("kind"), "vacuum".into()),
                        SourceKind::Table(t) => {
                            put(&k("kind"), "table".into());
                            put(&k("table"), t.to_string());
                        }
                        SourceKind::Tlss { emitter, pulse } => {
                            put(&k("kind"), "tlss".into());
                            put(&k("gamma_wg"), fmt(emitter.gamma_wg));
                            put(&k("gamma_loss"), fmt(emitter.gamma_loss));
                            put(&k("mean_photons"), fmt(pulse.mean_photons));
                            put(&k("spectral_width"), fmt(pulse.spectral_width));
                        }
                    }
                }
            }
        }
        put("sweep.kind", self.sweep.kind.as_str().into());
        match &self.sweep.grid {
            DistanceGrid::Range { start, end, step } => {
                put("sweep.l_start", fmt(*start));
                put("sweep.l_end", fmt(*end));
                put("sweep.l_step", fmt(*step));
            }
            DistanceGrid::Values(v) => {
                put("sweep.l_values", fmt_list(v));
            }
        }
        put("sweep.tol_km", fmt(self.sweep.tol_km));
        out
    }

    pub fn to_text(&self) -> String {
        self.to_entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(", ")
}
