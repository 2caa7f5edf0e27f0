//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p waveguide-qkd --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use waveguide_qkd::channel::{error_n, gain_and_qber, link_budget, simulate_observation, yield_n, ChannelParams};
use waveguide_qkd::cli::reproduce_into;
use waveguide_qkd::estimator::{analytic_bounds_wcs, build_lp, solve_bounds_lp, WcsObservations};
use waveguide_qkd::figures::{reproduce, FigureConfig, FigureId};
use waveguide_qkd::keyrate::{max_distance, Scenario};
use waveguide_qkd::output::parse_csv;
use waveguide_qkd::scattering::{simulate_channels, single_photon_reflectance, EmitterSpec, PulseSpec};
use waveguide_qkd::sources::{
    distribution_stats, matched_poisson, poisson_distribution, tlss_distribution, PhotonNumberDistribution,
    SourceRole, TableRef,
};

type Outcome = Result<String, String>;

const GYS: ChannelParams = ChannelParams::GYS;
const GAMMA_OVER_SIGMA: [f64; 6] = [0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
const N_CUT: usize = 10;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn emitter(purcell: f64) -> EmitterSpec {
    EmitterSpec::from_purcell(1.0, purcell).unwrap()
}

fn pulse(nbar: f64, sigma: f64) -> PulseSpec {
    PulseSpec::new(nbar, sigma).unwrap()
}

fn source_statistics() -> Outcome {
    let e = emitter(20.0);
    for g in GAMMA_OVER_SIGMA {
        let d = tlss_distribution(&e, &pulse(1.0, 1.0 / g), N_CUT).map_err(|x| x.to_string())?;
        let m = matched_poisson(&d, N_CUT).map_err(|x| x.to_string())?;
        ensure(d.p(1) >= m.p(1), || format!("Γ/σ={g}: P1 {} < Poisson {}", d.p(1), m.p(1)))?;
        ensure(d.p(0) <= m.p(0), || format!("Γ/σ={g}: P0 {} > Poisson {}", d.p(0), m.p(0)))?;
        ensure(d.multiphoton_mass() <= m.multiphoton_mass(), || {
            format!("Γ/σ={g}: P≥2 {} > Poisson {}", d.multiphoton_mass(), m.multiphoton_mass())
        })?;
    }
    let d = tlss_distribution(&e, &pulse(1.0, 0.5), N_CUT).map_err(|x| x.to_string())?;
    let q = distribution_stats(&d).map_err(|x| x.to_string())?.mandel_q;
    ensure(q < 0.0, || format!("Mandel Q {q} at σ=Γ/2"))?;
    Ok(format!("dominance on 6 bandwidths, Q(σ=Γ/2) = {q:.4}"))
}

fn conservation() -> Outcome {
    let (mut cons, mut halving, mut trace) = (0.0f64, 0.0f64, 0.0f64);
    for nbar in [0.02, 1.0] {
        for sigma in [0.5, 2.0] {
            for purcell in [5.0, 20.0, f64::INFINITY] {
                let r = simulate_channels(&emitter(purcell), &pulse(nbar, sigma)).map_err(|x| x.to_string())?;
                cons = cons.max((r.mean_reflected + r.mean_transmitted + r.mean_lost - nbar).abs());
                halving = halving.max(r.diagnostics.step_halving_residual);
                trace = trace.max(r.diagnostics.max_trace_error);
            }
        }
    }
    ensure(cons <= 1e-6, || format!("photon number off by {cons:e}"))?;
    ensure(halving <= 1e-8, || format!("step halving moved P_n by {halving:e}"))?;
    ensure(trace <= 1e-8, || format!("trace drift {trace:e}"))?;
    Ok(format!("max |Σ−n̄| {cons:.1e}, halving {halving:.1e}, trace {trace:.1e}"))
}

fn weak_drive() -> Outcome {
    let nbar = 0.01;
    let mut worst = 0.0f64;
    for purcell in [20.0, f64::INFINITY] {
        let e = emitter(purcell);
        for g in GAMMA_OVER_SIGMA {
            let p = pulse(nbar, 1.0 / g);
            let mean = simulate_channels(&e, &p).map_err(|x| x.to_string())?.mean_reflected;
            let rel = (mean / (nbar * single_photon_reflectance(&e, &p)) - 1.0).abs();
            ensure(rel < 0.02, || format!("P={purcell} Γ/σ={g}: relative deviation {rel:.4}"))?;
            worst = worst.max(rel);
        }
    }
    Ok(format!("worst relative deviation {worst:.2e}"))
}

fn channel_identity() -> Outcome {
    let mut worst = 0.0f64;
    for mu in [0.02, 0.1, 0.5, 1.0] {
        let d = poisson_distribution(mu, 60).map_err(|x| x.to_string())?;
        for l in [0.0, 50.0, 100.0, 140.0] {
            let b = link_budget(&GYS, l).map_err(|x| x.to_string())?;
            let q = gain_and_qber(&d, &GYS, &b).map_err(|x| x.to_string())?.gain;
            let closed = 1.0 - (1.0 - GYS.y0) * (-b.eta * mu).exp();
            let err = (q - closed).abs();
            ensure(err <= 1e-12, || format!("μ={mu} ℓ={l}: |ΔQ| {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("max |ΔQ| {worst:.1e}"))
}

fn family(signal: PhotonNumberDistribution, decoy: PhotonNumberDistribution) -> [(&'static str, SourceRole, PhotonNumberDistribution); 3] {
    [
        ("signal", SourceRole::Signal, signal),
        ("decoy", SourceRole::WeakDecoy, decoy),
        ("vacuum", SourceRole::VacuumDecoy, PhotonNumberDistribution::vacuum()),
    ]
}

fn estimator() -> Outcome {
    let poisson = |mu| poisson_distribution(mu, N_CUT).unwrap();
    let table = |name: &str| TableRef::parse(name).load().unwrap().retruncate(N_CUT);
    let tlss = |nbar, sigma| tlss_distribution(&emitter(20.0), &pulse(nbar, sigma), N_CUT).unwrap();

    let wcs_pairs = [(0.1, 0.02), (0.3, 0.05), (0.5, 0.05), (0.5, 0.1), (0.8, 0.2)];
    let mut families: Vec<(String, Option<(f64, f64)>, _)> = wcs_pairs
        .iter()
        .map(|&(mu, nu)| (format!("wcs {mu}/{nu}"), Some((mu, nu)), family(poisson(mu), poisson(nu))))
        .collect();
    families.push(("hsps".into(), None, family(table("builtin:hsps-signal"), table("builtin:hsps-decoy"))));
    for sigma in [0.5, 1.0, 2.0] {
        families.push((format!("tlss σ={sigma}"), None, family(tlss(1.0, sigma), tlss(0.02, sigma))));
    }

    let mut points = 0;
    for (name, wcs, fam) in &families {
        for l in [0.0, 20.0, 50.0, 100.0, 130.0, 160.0] {
            let b = link_budget(&GYS, l).map_err(|x| x.to_string())?;
            let obs: Vec<_> = fam
                .iter()
                .map(|(label, role, d)| simulate_observation(label, *role, d, &GYS, &b))
                .collect::<Result<_, _>>()
                .map_err(|x| x.to_string())?;
            let lp = solve_bounds_lp(&build_lp(&obs, N_CUT).map_err(|x| x.to_string())?)
                .map_err(|x| format!("{name} ℓ={l}: {x}"))?;
            let (y1, e1) = (yield_n(&GYS, &b, 1), error_n(&GYS, &b, 1).map_err(|x| x.to_string())?);
            ensure(y1 >= lp.y1_lower, || format!("{name} ℓ={l}: Y1 {y1} < bound {}", lp.y1_lower))?;
            ensure(e1 <= lp.e1_upper, || format!("{name} ℓ={l}: e1 {e1} > bound {}", lp.e1_upper))?;
            if let Some((mu, nu)) = *wcs {
                let an = analytic_bounds_wcs(&WcsObservations {
                    mu,
                    nu,
                    q_mu: obs[0].gain,
                    e_mu: obs[0].qber,
                    q_nu: obs[1].gain,
                    e_nu: obs[1].qber,
                    y0: obs[2].gain,
                    e0: obs[2].qber,
                });
                if let Ok(an) = an {
                    ensure(lp.y1_lower >= an.y1_lower - 1e-10, || {
                        format!("{name} ℓ={l}: LP Y1 {} looser than {}", lp.y1_lower, an.y1_lower)
                    })?;
                    ensure(lp.e1_upper <= an.e1_upper + 1e-10, || {
                        format!("{name} ℓ={l}: LP e1 {} looser than {}", lp.e1_upper, an.e1_upper)
                    })?;
                }
            }
            points += 1;
        }
    }
    Ok(format!("{points} points sound, LP dominates the closed form"))
}

fn lmax(s: &Scenario, tol: f64) -> Result<f64, String> {
    max_distance(s, tol).map_err(|x| x.to_string())
}

fn key_rate_comparison() -> Outcome {
    let cfg = FigureConfig::new(FigureId::Fig2);
    let tlss = cfg.tlss_scenario(0.5, 20.0).map_err(|x| x.to_string())?;
    let wcs = cfg.wcs_scenario();
    let rt = tlss.evaluate(20.0).map_err(|x| x.to_string())?.rate;
    let rw = wcs.evaluate(20.0).map_err(|x| x.to_string())?.rate;
    let ratio = rt / rw;
    ensure((1.5..=2.5).contains(&ratio), || format!("R ratio at 20 km {ratio:.3}"))?;
    let (lt, lw) = (lmax(&tlss, cfg.tol_km)?, lmax(&wcs, cfg.tol_km)?);
    ensure(lt > lw, || format!("ℓmax emitter {lt:.2} ≤ coherent {lw:.2}"))?;
    ensure((130.0..=150.0).contains(&lw), || format!("ℓmax coherent {lw:.2} km"))?;
    Ok(format!("ratio {ratio:.3}, ℓmax {lt:.2} vs {lw:.2} km"))
}

fn robustness() -> Outcome {
    let cfg = FigureConfig::new(FigureId::Fig3b);
    let scenario = |sigma, p| cfg.tlss_scenario(sigma, p).map_err(|x| x.to_string());
    let l1 = lmax(&scenario(1.0, 20.0)?, cfg.tol_km)?;
    let l2 = lmax(&scenario(0.5, 20.0)?, cfg.tol_km)?;
    let change = (l1 - l2).abs() / l2;
    ensure(change < 0.02, || format!("ℓmax {l1:.2} vs {l2:.2}: {:.2}%", 100.0 * change))?;

    let purcells = [2.0, 5.0, 10.0, 20.0];
    let scenarios: Vec<Scenario> = purcells.iter().map(|&p| scenario(0.5, p)).collect::<Result<_, _>>()?;
    for l in [0.0, 20.0, 50.0, 100.0, 140.0] {
        let rates: Vec<f64> = scenarios
            .iter()
            .map(|s| s.evaluate(l).map(|p| p.rate).map_err(|x| x.to_string()))
            .collect::<Result<_, _>>()?;
        for (w, p) in rates.windows(2).zip(&purcells[1..]) {
            ensure(w[1] >= w[0], || format!("ℓ={l}: R drops to {:e} at P={p}", w[1]))?;
        }
    }
    let l10 = lmax(&scenarios[2], cfg.tol_km)?;
    ensure(l10 >= 0.95 * l2, || format!("ℓmax(P=10) {l10:.2} < 0.95·{l2:.2}"))?;
    Ok(format!(
        "ℓmax change {:.2}%, R monotone in P, ℓmax(10)/ℓmax(20) = {:.3}",
        100.0 * change,
        l10 / l2
    ))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|x| x.to_string())?;
    let mut files = 0;
    for id in FigureId::ALL {
        let cfg = FigureConfig::new(id);
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|run| {
                let dir = tmp.path().join(id.as_str()).join(run);
                reproduce_into(&cfg, &dir).map_err(|x| x.to_string())?;
                Ok(read_dir_sorted(&dir))
            })
            .collect::<Result<_, String>>()?;
        ensure(runs[0] == runs[1], || format!("{}: reruns differ", id.as_str()))?;

        // every table's metadata echo rebuilds the same figure
        let first = parse_csv(std::str::from_utf8(&runs[0][0].1).unwrap()).map_err(|x| x.to_string())?;
        let echoed = FigureConfig::parse(&first.metadata_text(), "echo").map_err(|x| x.to_string())?;
        let again = reproduce(&echoed).map_err(|x| x.to_string())?;
        for t in &again {
            let name = format!("{}.csv", t.name);
            let orig = runs[0].iter().find(|(n, _)| *n == name);
            ensure(orig.map(|(_, b)| b.as_slice()) == Some(t.to_csv().as_bytes()), || {
                format!("{name}: round trip differs")
            })?;
            files += 1;
        }
        ensure(again.len() == runs[0].len(), || format!("{}: table count", id.as_str()))?;
    }
    Ok(format!("{files} tables identical across reruns and round trips"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 source statistics", source_statistics),
        ("2 conservation and convergence", conservation),
        ("3 weak-drive oracle", weak_drive),
        ("4 channel identity", channel_identity),
        ("5 estimator soundness and dominance", estimator),
        ("6 key-rate comparison", key_rate_comparison),
        ("7 robustness", robustness),
        ("8 determinism and reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
