//! Command-line front end: argument parsing, scenario dispatch and CSV emission.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;

use crate::channel::Observation;
use crate::config::{fmt, ScenarioConfig, SourceConfig, SweepKind};
use crate::error::{Error, Result};
use crate::estimator::{analytic_bounds_wcs, build_lp, solve_bounds_lp, WcsObservations};
use crate::figures::{reproduce, FigureConfig, FigureId};
use crate::keyrate::{
    key_rate, max_distance, resolve_all, sweep_distance, EstimatorKind, Scenario, SourceSet,
};
use crate::output::{Cell, OutputTable};
use crate::scattering::{count_with_trace, SimGrid};
use crate::sources::{distribution_stats, ResolvedState, SourceKind, SourceRole};

#[derive(Debug, Parser)]
#[command(name = "wgqkd", version, about = "Decoy-state QKD key rates for emitter-shaped light")]
pub struct Cli {
    /// Log progress and injected defaults.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Photon-number statistics of every configured source.
    SourceStats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the reflected-channel hierarchy traces of emitter sources.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Key rate over the configured distance grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest distance with a positive key rate.
    MaxDistance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate the tables of one figure into a directory.
    Reproduce {
        #[arg(value_parser = ["fig1", "fig2", "fig3a", "fig3b"])]
        figure: String,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Figure parameters, e.g. the `#@` echo of an earlier run.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Bounds and key rate from measured gains and error rates.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// Table of `label Q E uncertainty` rows.
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Builds the key-rate scenario, resolving fixed source distributions once.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    let sources = match &config.sources {
        SourceConfig::WcsOptimized => SourceSet::WcsOptimized,
        SourceConfig::Fixed(specs) => SourceSet::Fixed(resolve_all(specs, config.n_cut)?),
    };
    Ok(Scenario {
        sources,
        channel: config.channel,
        protocol: config.protocol,
        estimator: config.estimator,
        n_cut: config.n_cut,
    })
}

fn fixed_states(config: &ScenarioConfig, what: &str) -> Result<Vec<ResolvedState>> {
    match &config.sources {
        SourceConfig::Fixed(specs) => resolve_all(specs, config.n_cut),
        SourceConfig::WcsOptimized => Err(Error::InvalidParameter(format!(
            "{what} needs fixed sources, not an optimized WCS signal"
        ))),
    }
}

/// Runs the scenario named by `config.sweep.kind` and returns its table.
pub fn run_scenario(config: &ScenarioConfig) -> Result<OutputTable> {
    let meta = config.to_entries();
    let table = match config.sweep.kind {
        SweepKind::Distance => {
            let scenario = build_scenario(config)?;
            let grid = config.sweep.grid.points();
            let points = sweep_distance(&scenario, &grid)?;
            let optimized = matches!(scenario.sources, SourceSet::WcsOptimized);
            let mut cols = vec!["l_km", "R", "Q_s", "E_s", "Y1_lower", "e1_upper"];
            if optimized {
                cols.extend(["mu", "nu"]);
            }
            let mut t = OutputTable::new("sweep", &cols);
            for p in points {
                let mut row: Vec<Cell> = vec![
                    p.distance_km.into(),
                    p.rate.into(),
                    p.q_s.into(),
                    p.e_s.into(),
                    p.y1_lower.into(),
                    p.e1_upper.into(),
                ];
                if optimized {
                    row.push(p.mu.unwrap_or(f64::NAN).into());
                    row.push(p.nu.unwrap_or(f64::NAN).into());
                }
                t.push(row)?;
            }
            t
        }
        SweepKind::MaxDistance => {
            let scenario = build_scenario(config)?;
            let l = max_distance(&scenario, config.sweep.tol_km)?;
            let r0 = scenario.evaluate(0.0)?.rate;
            let mut t = OutputTable::new("max_distance", &["l_max_km", "tol_km", "R_0"]);
            t.push(vec![l.into(), config.sweep.tol_km.into(), r0.into()])?;
            t
        }
        SweepKind::SourceStats => {
            let states = fixed_states(config, "source-stats")?;
            let mut t = OutputTable::new(
                "source_stats",
                &[
                    "label", "role", "P0", "P1", "P2", "P_ge2", "mean", "variance", "mandel_q",
                    "tail_mass",
                ],
            );
            for s in &states {
                let d = &s.distribution;
                let st = distribution_stats(d)?;
                t.push(vec![
                    s.label.as_str().into(),
                    s.role.as_str().into(),
                    d.p(0).into(),
                    d.p(1).into(),
                    d.p(2).into(),
                    d.multiphoton_mass().into(),
                    st.mean.into(),
                    st.variance.into(),
                    st.mandel_q.into(),
                    d.tail_mass().into(),
                ])?;
            }
            t
        }
    };
    Ok(table.with_metadata(meta))
}

/// Reflected-channel hierarchy traces of every emitter source.
pub fn trace_table(config: &ScenarioConfig) -> Result<OutputTable> {
    let SourceConfig::Fixed(specs) = &config.sources else {
        return Err(Error::InvalidParameter("no emitter sources to trace".into()));
    };
    let mut t = OutputTable::new("trace", &["label", "t", "excitation", "level", "trace"]);
    for spec in specs {
        let SourceKind::Tlss { emitter, pulse } = &spec.kind else {
            continue;
        };
        let grid = SimGrid::default_for(emitter, pulse);
        let (_, samples) = count_with_trace(emitter, pulse, &grid)?;
        for s in samples {
            for (n, tr) in s.level_traces.iter().enumerate() {
                t.push(vec![
                    spec.label.as_str().into(),
                    s.t.into(),
                    s.excitation.into(),
                    Cell::Int(n as i64),
                    (*tr).into(),
                ])?;
            }
        }
    }
    Ok(t.with_metadata(config.to_entries()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub gain: f64,
    pub qber: f64,
    pub uncertainty: f64,
}

/// Parses `label Q E uncertainty` rows (whitespace or comma separated, `#` comments).
pub fn parse_measurements(text: &str, origin: &str) -> Result<Vec<(String, Measurement)>> {
    let mut out: Vec<(String, Measurement)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::ConfigParse {
            path: origin.to_string(),
            line: i + 1,
            field: line.to_string(),
            message,
        };
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(bad("expected `label Q E uncertainty`".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
        let m = Measurement {
            gain: num(fields[1])?,
            qber: num(fields[2])?,
            uncertainty: num(fields[3])?,
        };
        let label = fields[0].to_string();
        if out.iter().any(|(l, _)| *l == label) {
            return Err(bad(format!("state `{label}` measured twice")));
        }
        out.push((label, m));
    }
    Ok(out)
}

/// Bounds and key rate from measured statistics of the configured sources.
pub fn run_estimate(config: &ScenarioConfig, measurements: &[(String, Measurement)]) -> Result<OutputTable> {
    let states = fixed_states(config, "estimate")?;
    let table: HashMap<&str, &Measurement> =
        measurements.iter().map(|(l, m)| (l.as_str(), m)).collect();
    for (label, _) in measurements {
        if !states.iter().any(|s| s.label == *label) {
            return Err(Error::InvalidParameter(format!(
                "measurement for unknown state `{label}`"
            )));
        }
    }
    let mut observations = Vec::new();
    for s in &states {
        let m = table.get(s.label.as_str()).ok_or_else(|| {
            Error::InvalidParameter(format!("no measurement for state `{}`", s.label))
        })?;
        let obs = Observation {
            label: s.label.clone(),
            role: s.role,
            distribution: s.distribution.clone(),
            gain: m.gain,
            qber: m.qber,
            uncertainty: m.uncertainty,
        };
        obs.validate()?;
        observations.push(obs);
    }
    let find = |role| states.iter().position(|s| s.role == role);
    let sig = find(SourceRole::Signal).expect("config guarantees a signal");
    let bounds = match config.estimator {
        EstimatorKind::Lp => solve_bounds_lp(&build_lp(&observations, config.n_cut)?)?,
        EstimatorKind::Analytic => {
            let dec = find(SourceRole::WeakDecoy).expect("config guarantees a decoy");
            let vac = find(SourceRole::VacuumDecoy).expect("config guarantees a vacuum");
            let (Some(mu), Some(nu)) = (states[sig].wcs_mu, states[dec].wcs_mu) else {
                return Err(Error::UnsupportedEstimator(
                    "analytic",
                    "signal and weak decoy must both be coherent states".into(),
                ));
            };
            analytic_bounds_wcs(&WcsObservations {
                mu,
                nu,
                q_mu: observations[sig].gain,
                e_mu: observations[sig].qber,
                q_nu: observations[dec].gain,
                e_nu: observations[dec].qber,
                y0: observations[vac].gain,
                e0: observations[vac].qber,
            })?
        }
    };
    let s = &observations[sig];
    let p1 = s.distribution.p(1);
    let rate = key_rate(s.gain, s.qber, p1, &bounds, &config.protocol)?;
    let mut t = OutputTable::new(
        "estimate",
        &["Y1_lower", "e1_upper", "Q1_lower", "Q_s", "E_s", "R", "active_y1", "active_x1"],
    );
    t.push(vec![
        bounds.y1_lower.into(),
        bounds.e1_upper.into(),
        (p1 * bounds.y1_lower).into(),
        s.gain.into(),
        s.qber.into(),
        rate.into(),
        bounds.active_y1.join(" ").as_str().into(),
        bounds.active_x1.join(" ").as_str().into(),
    ])?;
    let mut meta = config.to_entries();
    for (label, m) in measurements {
        meta.push((
            format!("measurement.{label}"),
            format!("{}, {}, {}", fmt(m.gain), fmt(m.qber), fmt(m.uncertainty)),
        ));
    }
    Ok(t.with_metadata(meta))
}

fn emit(table: &OutputTable, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            table.write(path)?;
            info!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{}", table.to_csv());
            Ok(())
        }
    }
}

fn load_config(path: &Path, kind: SweepKind) -> Result<ScenarioConfig> {
    let mut config = ScenarioConfig::load(path)?;
    config.sweep.kind = kind;
    Ok(config)
}

/// Writes every table of a figure as `<dir>/<table>.csv`; returns the paths.
pub fn reproduce_into(cfg: &FigureConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for table in reproduce(cfg)? {
        let path = dir.join(format!("{}.csv", table.name));
        table.write(&path)?;
        info!("wrote {}", path.display());
        paths.push(path);
    }
    Ok(paths)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SourceStats { config, out, trace } => {
            let cfg = load_config(&config, SweepKind::SourceStats)?;
            emit(&run_scenario(&cfg)?, out.as_deref().or(cfg.output.as_deref()))?;
            if let Some(path) = trace {
                trace_table(&cfg)?.write(&path)?;
            }
            Ok(())
        }
        Command::Sweep { config, out } => {
            let cfg = load_config(&config, SweepKind::Distance)?;
            emit(&run_scenario(&cfg)?, out.as_deref().or(cfg.output.as_deref()))
        }
        Command::MaxDistance { config, out } => {
            let cfg = load_config(&config, SweepKind::MaxDistance)?;
            emit(&run_scenario(&cfg)?, out.as_deref().or(cfg.output.as_deref()))
        }
        Command::Reproduce { figure, out, config } => {
            let id = FigureId::parse(&figure).expect("clap restricts the choices");
            let cfg = match config {
                None => FigureConfig::new(id),
                Some(path) => {
                    let text = crate::sources::read_text(&path)?;
                    let cfg = FigureConfig::parse(&text, &path.display().to_string())?;
                    if cfg.figure != id {
                        return Err(Error::InvalidParameter(format!(
                            "{} describes {}, not {figure}",
                            path.display(),
                            cfg.figure.as_str()
                        )));
                    }
                    cfg
                }
            };
            reproduce_into(&cfg, &out).map(|_| ())
        }
        Command::Estimate {
            config,
            measurements,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let text = crate::sources::read_text(&measurements)?;
            let m = parse_measurements(&text, &measurements.display().to_string())?;
            emit(&run_estimate(&cfg, &m)?, out.as_deref().or(cfg.output.as_deref()))
        }
    }
}

/// Short name of the innermost error, for the `error[...]` prefix.
pub fn error_kind(e: &Error) -> &'static str {
    match e.root() {
        Error::ConfigParse { .. } => "config",
        Error::Io { .. } => "io",
        Error::InvalidParameter(_) | Error::DomainError(_) => "parameter",
        Error::Infeasible { .. } | Error::Unbounded | Error::IterationLimit => "estimator",
        Error::NoPositiveRate(_) => "no-key",
        _ => "model",
    }
}
