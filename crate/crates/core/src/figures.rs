//! Tables behind the three result figures: emitter photon statistics versus
//! bandwidth (fig1), key rate for three source families (fig2), and the
//! dependence on bandwidth (fig3a) and Purcell factor (fig3b).

use rayon::prelude::*;

use crate::config::{fmt, fmt_list, Common, DistanceGrid, Reader};
use crate::error::{Error, Result};
use crate::keyrate::{max_distance, resolve_all, sweep_distance, KeyRatePoint, Scenario, SourceSet};
use crate::output::{Cell, OutputTable};
use crate::scattering::{EmitterSpec, PulseSpec};
use crate::sources::{
    distribution_stats, matched_poisson, tlss_distribution, SourceKind, SourceRole,
    SourceStateSpec, TableRef,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3a,
    Fig3b,
}

impl FigureId {
    pub const ALL: [FigureId; 4] = [FigureId::Fig1, FigureId::Fig2, FigureId::Fig3a, FigureId::Fig3b];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3a => "fig3a",
            FigureId::Fig3b => "fig3b",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FigureId::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

/// Every parameter a figure depends on. Emitter rates are in units of Γ = `gamma_wg`.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureConfig {
    pub figure: FigureId,
    pub common: Common,
    pub grid: DistanceGrid,
    pub tol_km: f64,
    pub gamma_wg: f64,
    pub purcell: f64,
    pub signal_photons: f64,
    pub decoy_photons: f64,
    pub spectral_width: f64,
    /// Γ/σ values of fig1 and of the fig3a maximal-distance table.
    pub gamma_over_sigma: Vec<f64>,
    /// σ of the fig3a rate curves.
    pub curve_widths: Vec<f64>,
    /// Purcell factors of the fig3b rate curves.
    pub curve_purcells: Vec<f64>,
    /// Purcell factors of the fig3b maximal-distance table.
    pub lmax_purcells: Vec<f64>,
    pub hsps_signal: TableRef,
    pub hsps_decoy: TableRef,
}

impl FigureConfig {
    pub fn new(figure: FigureId) -> Self {
        let fig1 = figure == FigureId::Fig1;
        FigureConfig {
            figure,
            common: Common::default(),
            grid: DistanceGrid::default(),
            tol_km: 0.1,
            gamma_wg: 1.0,
            purcell: 20.0,
            signal_photons: 1.0,
            decoy_photons: 0.02,
            spectral_width: 0.5,
            gamma_over_sigma: if fig1 {
                vec![0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 5.0, 7.0, 10.0]
            } else {
                vec![0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 5.0, 7.0, 10.0]
            },
            curve_widths: vec![5.0, 2.0, 1.0, 0.5],
            curve_purcells: vec![2.0, 5.0, 10.0, 20.0],
            lmax_purcells: vec![1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0, 100.0],
            hsps_signal: TableRef::Builtin("hsps-signal".into()),
            hsps_decoy: TableRef::Builtin("hsps-decoy".into()),
        }
    }

    /// Parameter echo; only the keys the figure uses.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("figure", self.figure.as_str().into());
        self.common.echo(&mut put);
        put("emitter.gamma_wg", fmt(self.gamma_wg));
        put("pulse.signal_photons", fmt(self.signal_photons));
        match self.figure {
            FigureId::Fig1 => {
                put("emitter.purcell", fmt(self.purcell));
                put("gamma_over_sigma", fmt_list(&self.gamma_over_sigma));
                return out;
            }
            FigureId::Fig2 => {
                put("emitter.purcell", fmt(self.purcell));
                put("pulse.spectral_width", fmt(self.spectral_width));
                put("hsps.signal", self.hsps_signal.to_string());
                put("hsps.decoy", self.hsps_decoy.to_string());
            }
            FigureId::Fig3a => {
                put("emitter.purcell", fmt(self.purcell));
                put("curves.spectral_width", fmt_list(&self.curve_widths));
                put("gamma_over_sigma", fmt_list(&self.gamma_over_sigma));
            }
            FigureId::Fig3b => {
                put("pulse.spectral_width", fmt(self.spectral_width));
                put("curves.purcell", fmt_list(&self.curve_purcells));
                put("lmax.purcell", fmt_list(&self.lmax_purcells));
            }
        }
        put("pulse.decoy_photons", fmt(self.decoy_photons));
        let DistanceGrid::Range { start, end, step } = self.grid else {
            unreachable!("figure grids are ranges")
        };
        put("grid.l_start", fmt(start));
        put("grid.l_end", fmt(end));
        put("grid.l_step", fmt(step));
        put("tol_km", fmt(self.tol_km));
        out
    }

    /// Reads a parameter echo back, e.g. the `#@` lines of a figure CSV.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut r = Reader::new(text, origin, None)?;
        let id = r.raw("figure").ok_or_else(|| r.err("figure", "missing"))?;
        let figure = FigureId::parse(&id).ok_or_else(|| r.err("figure", format!("unknown figure `{id}`")))?;
        let d = FigureConfig::new(figure);
        let common = Common::read(&mut r)?;
        let DistanceGrid::Range { start, end, step } = d.grid else {
            unreachable!()
        };
        let grid = DistanceGrid::Range {
            start: r.f64_or("grid.l_start", start)?,
            end: r.f64_or("grid.l_end", end)?,
            step: r.f64_or("grid.l_step", step)?,
        };
        let table = |r: &mut Reader, key: &str, default: &TableRef| {
            let t = r.raw(key).map_or(default.clone(), |s| TableRef::parse(&s));
            if t.exists() {
                Ok(t)
            } else {
                Err(r.err(key, format!("table `{t}` not found")))
            }
        };
        let cfg = FigureConfig {
            figure,
            common,
            grid,
            tol_km: r.f64_or("tol_km", d.tol_km)?,
            gamma_wg: r.f64_or("emitter.gamma_wg", d.gamma_wg)?,
            purcell: r.f64_or("emitter.purcell", d.purcell)?,
            signal_photons: r.f64_or("pulse.signal_photons", d.signal_photons)?,
            decoy_photons: r.f64_or("pulse.decoy_photons", d.decoy_photons)?,
            spectral_width: r.f64_or("pulse.spectral_width", d.spectral_width)?,
            gamma_over_sigma: r.list_or("gamma_over_sigma", &d.gamma_over_sigma)?,
            curve_widths: r.list_or("curves.spectral_width", &d.curve_widths)?,
            curve_purcells: r.list_or("curves.purcell", &d.curve_purcells)?,
            lmax_purcells: r.list_or("lmax.purcell", &d.lmax_purcells)?,
            hsps_signal: table(&mut r, "hsps.signal", &d.hsps_signal)?,
            hsps_decoy: table(&mut r, "hsps.decoy", &d.hsps_decoy)?,
        };
        r.finish()?;
        Ok(cfg)
    }

    fn emitter(&self, purcell: f64) -> Result<EmitterSpec> {
        EmitterSpec::from_purcell(self.gamma_wg, purcell)
    }

    fn scenario(&self, sources: SourceSet) -> Scenario {
        Scenario {
            sources,
            channel: self.common.channel,
            protocol: self.common.protocol,
            estimator: self.common.estimator,
            n_cut: self.common.n_cut,
        }
    }

    /// Emitter signal, emitter decoy and vacuum, resolved.
    pub fn tlss_scenario(&self, spectral_width: f64, purcell: f64) -> Result<Scenario> {
        let emitter = self.emitter(purcell)?;
        let pulse = |n| PulseSpec::new(n, spectral_width);
        let specs = [
            SourceStateSpec::new(
                "signal",
                SourceRole::Signal,
                SourceKind::Tlss {
                    emitter,
                    pulse: pulse(self.signal_photons)?,
                },
            ),
            SourceStateSpec::new(
                "decoy",
                SourceRole::WeakDecoy,
                SourceKind::Tlss {
                    emitter,
                    pulse: pulse(self.decoy_photons)?,
                },
            ),
            SourceStateSpec::new("vacuum", SourceRole::VacuumDecoy, SourceKind::Vacuum),
        ];
        Ok(self.scenario(SourceSet::Fixed(resolve_all(&specs, self.common.n_cut)?)))
    }

    pub fn hsps_scenario(&self) -> Result<Scenario> {
        let specs = [
            SourceStateSpec::new("signal", SourceRole::Signal, SourceKind::Table(self.hsps_signal.clone())),
            SourceStateSpec::new("decoy", SourceRole::WeakDecoy, SourceKind::Table(self.hsps_decoy.clone())),
            SourceStateSpec::new("vacuum", SourceRole::VacuumDecoy, SourceKind::Vacuum),
        ];
        Ok(self.scenario(SourceSet::Fixed(resolve_all(&specs, self.common.n_cut)?)))
    }

    pub fn wcs_scenario(&self) -> Scenario {
        self.scenario(SourceSet::WcsOptimized)
    }
}

/// Produces the tables of one figure. Deterministic: bit-identical across runs
/// and thread counts.
pub fn reproduce(cfg: &FigureConfig) -> Result<Vec<OutputTable>> {
    let tables = match cfg.figure {
        FigureId::Fig1 => vec![fig1(cfg)?],
        FigureId::Fig2 => fig2(cfg)?,
        FigureId::Fig3a => fig3a(cfg)?,
        FigureId::Fig3b => fig3b(cfg)?,
    };
    let meta = cfg.to_entries();
    Ok(tables.into_iter().map(|t| t.with_metadata(meta.clone())).collect())
}

fn fig1(cfg: &FigureConfig) -> Result<OutputTable> {
    let emitter = cfg.emitter(cfg.purcell)?;
    let n_cut = cfg.common.n_cut;
    let rows: Vec<Vec<Cell>> = cfg
        .gamma_over_sigma
        .par_iter()
        .map(|&g| {
            let pulse = PulseSpec::new(cfg.signal_photons, cfg.gamma_wg / g)?;
            let d = tlss_distribution(&emitter, &pulse, n_cut)?;
            let s = distribution_stats(&d)?;
            let m = matched_poisson(&d, n_cut)?;
            let ms = distribution_stats(&m)?;
            Ok(vec![
                g.into(),
                d.p(0).into(),
                d.p(1).into(),
                d.multiphoton_mass().into(),
                s.mean.into(),
                s.mandel_q.into(),
                m.p(0).into(),
                m.p(1).into(),
                m.multiphoton_mass().into(),
                ms.mandel_q.into(),
            ])
        })
        .collect::<Result<_>>()?;
    let mut t = OutputTable::new(
        "fig1",
        &[
            "gamma_over_sigma",
            "P0",
            "P1",
            "P_ge2",
            "mean",
            "mandel_q",
            "P0_poisson",
            "P1_poisson",
            "P_ge2_poisson",
            "mandel_q_poisson",
        ],
    );
    for row in rows {
        t.push(row)?;
    }
    Ok(t)
}

/// Wide table `l_km, R_<name>…` from several sweeps on one grid.
fn rate_table(name: &str, grid: &[f64], curves: &[(String, Vec<KeyRatePoint>)]) -> Result<OutputTable> {
    let mut columns = vec!["l_km".to_string()];
    columns.extend(curves.iter().map(|(n, _)| format!("R_{n}")));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut t = OutputTable::new(name, &cols);
    for (i, &l) in grid.iter().enumerate() {
        let mut row = vec![Cell::Float(l)];
        row.extend(curves.iter().map(|(_, pts)| Cell::Float(pts[i].rate)));
        t.push(row)?;
    }
    Ok(t)
}

fn lmax(scenario: &Scenario, tol_km: f64) -> Result<f64> {
    match max_distance(scenario, tol_km) {
        Ok(l) => Ok(l),
        Err(e) if matches!(e.root(), Error::NoPositiveRate(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

fn fig2(cfg: &FigureConfig) -> Result<Vec<OutputTable>> {
    let grid = cfg.grid.points();
    let wcs = cfg.wcs_scenario();
    let hsps = cfg.hsps_scenario()?;
    let tlss = cfg.tlss_scenario(cfg.spectral_width, cfg.purcell)?;
    let wcs_pts = sweep_distance(&wcs, &grid)?;
    let hsps_pts = sweep_distance(&hsps, &grid)?;
    let tlss_pts = sweep_distance(&tlss, &grid)?;

    let mut rates = OutputTable::new("fig2_rates", &["l_km", "R_wcs", "mu", "nu", "R_hsps", "R_tlss"]);
    for i in 0..grid.len() {
        let w = &wcs_pts[i];
        rates.push(vec![
            grid[i].into(),
            w.rate.into(),
            w.mu.unwrap_or(f64::NAN).into(),
            w.nu.unwrap_or(f64::NAN).into(),
            hsps_pts[i].rate.into(),
            tlss_pts[i].rate.into(),
        ])?;
    }
    let sources = [("wcs", &wcs), ("hsps", &hsps), ("tlss", &tlss)];
    let reach: Vec<f64> = sources
        .par_iter()
        .map(|(_, s)| lmax(s, cfg.tol_km))
        .collect::<Result<_>>()?;
    let mut table = OutputTable::new("fig2_lmax", &["source", "l_max_km"]);
    for ((name, _), l) in sources.iter().zip(reach) {
        table.push(vec![(*name).into(), l.into()])?;
    }
    Ok(vec![rates, table])
}

fn fig3a(cfg: &FigureConfig) -> Result<Vec<OutputTable>> {
    let grid = cfg.grid.points();
    let curves: Vec<(String, Vec<KeyRatePoint>)> = cfg
        .curve_widths
        .par_iter()
        .map(|&w| {
            let s = cfg.tlss_scenario(w * cfg.gamma_wg, cfg.purcell)?;
            Ok((format!("sigma_{}", fmt(w)), sweep_distance(&s, &grid)?))
        })
        .collect::<Result<_>>()?;
    let reach: Vec<f64> = cfg
        .gamma_over_sigma
        .par_iter()
        .map(|&g| lmax(&cfg.tlss_scenario(cfg.gamma_wg / g, cfg.purcell)?, cfg.tol_km))
        .collect::<Result<_>>()?;
    let mut table = OutputTable::new("fig3a_lmax", &["gamma_over_sigma", "l_max_km"]);
    for (g, l) in cfg.gamma_over_sigma.iter().zip(reach) {
        table.push(vec![(*g).into(), l.into()])?;
    }
    Ok(vec![rate_table("fig3a_rates", &grid, &curves)?, table])
}

fn fig3b(cfg: &FigureConfig) -> Result<Vec<OutputTable>> {
    let grid = cfg.grid.points();
    let curves: Vec<(String, Vec<KeyRatePoint>)> = cfg
        .curve_purcells
        .par_iter()
        .map(|&p| {
            let s = cfg.tlss_scenario(cfg.spectral_width, p)?;
            Ok((format!("P_{}", fmt(p)), sweep_distance(&s, &grid)?))
        })
        .collect::<Result<_>>()?;
    let reach: Vec<f64> = cfg
        .lmax_purcells
        .par_iter()
        .map(|&p| lmax(&cfg.tlss_scenario(cfg.spectral_width, p)?, cfg.tol_km))
        .collect::<Result<_>>()?;
    let mut table = OutputTable::new("fig3b_lmax", &["purcell", "l_max_km"]);
    for (p, l) in cfg.lmax_purcells.iter().zip(reach) {
        table.push(vec![(*p).into(), l.into()])?;
    }
    Ok(vec![rate_table("fig3b_rates", &grid, &curves)?, table])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_round_trip() {
        for id in FigureId::ALL {
            let mut cfg = FigureConfig::new(id);
            cfg.tol_km = 0.25;
            let text: String = cfg
                .to_entries()
                .iter()
                .map(|(k, v)| format!("{k} = {v}\n"))
                .collect();
            let back = FigureConfig::parse(&text, "echo").unwrap();
            assert_eq!(back.to_entries(), cfg.to_entries());
        }
    }

    #[test]
    fn unknown_figure_is_rejected() {
        assert!(FigureConfig::parse("figure = fig9\n", "x").is_err());
        assert!(FigureId::parse("fig3b").is_some());
    }
}
