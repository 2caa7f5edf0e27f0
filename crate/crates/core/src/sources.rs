//! Photon-number distributions for the three source families.
//!
//! Every source, whatever its physics, is reduced to a phase-randomized number
//! distribution `p_0..p_N` plus an explicit tail mass for `n > N`. Estimators
//! consume the tail as worst-case slack, so it is never silently dropped.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scattering::{simulate_channels, EmitterSpec, PulseSpec};

/// Allowed deviation of `Σp_n + tail` from one.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Tabulated sources are rejected, not renormalized, beyond this deviation.
pub const TABLE_NORMALIZATION_TOL: f64 = 1e-6;
/// Moments are only reported when the tail is lighter than this.
pub const STATS_TAIL_LIMIT: f64 = 1e-4;
/// Default truncation handed to the estimator.
pub const DEFAULT_N_CUT: usize = 10;

/// Roundoff from the integrator can leave probabilities at -1e-20 or so.
const ROUNDOFF_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
    tail_mass: f64,
    label: String,
}

impl PhotonNumberDistribution {
    pub fn new(probs: Vec<f64>, tail_mass: f64, label: impl Into<String>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter(
                "distribution needs at least p_0".into(),
            ));
        }
        let mut probs = probs;
        for (n, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() || *p < ROUNDOFF_FLOOR {
                return Err(Error::NegativeProbability { n, value: *p });
            }
            *p = p.max(0.0);
        }
        if !tail_mass.is_finite() || tail_mass < ROUNDOFF_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "tail mass {tail_mass} is negative"
            )));
        }
        let tail_mass = tail_mass.max(0.0);
        let sum = probs.iter().sum::<f64>() + tail_mass;
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self {
            probs,
            tail_mass,
            label: label.into(),
        })
    }

    /// All probability on exactly `n` photons.
    pub fn point_mass(n: usize, label: impl Into<String>) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        Self {
            probs,
            tail_mass: 0.0,
            label: label.into(),
        }
    }

    pub fn vacuum() -> Self {
        Self::point_mass(0, "vacuum")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `p_n`, zero beyond the stored truncation.
    pub fn p(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Largest stored photon number.
    pub fn n_cut(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn is_vacuum(&self) -> bool {
        self.tail_mass == 0.0 && self.probs[0] == 1.0
    }

    /// Truncates (folding dropped mass into the tail) or zero-pads to `n_cut`.
    pub fn retruncate(&self, n_cut: usize) -> Self {
        let mut probs = self.probs.clone();
        let mut tail = self.tail_mass;
        if probs.len() > n_cut + 1 {
            tail += probs[n_cut + 1..].iter().sum::<f64>();
            probs.truncate(n_cut + 1);
        } else {
            probs.resize(n_cut + 1, 0.0);
        }
        Self {
            probs,
            tail_mass: tail,
            label: self.label.clone(),
        }
    }

    /// `Σ_{n≥2} p_n` over the stored vector.
    pub fn multiphoton_mass(&self) -> f64 {
        self.probs.iter().skip(2).sum()
    }

    /// Mean of the truncated vector (tail excluded).
    pub fn truncated_mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }
}

impl fmt::Display for PhotonNumberDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [", self.label)?;
        for (n, p) in self.probs.iter().enumerate() {
            if n > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p:.4e}")?;
        }
        write!(f, "] tail {:.2e}", self.tail_mass)
    }
}

/// Poisson statistics of a phase-randomized weak coherent state.
pub fn poisson_distribution(mu: f64, n_cut: usize) -> Result<PhotonNumberDistribution> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mean photon number {mu} must be finite and non-negative"
        )));
    }
    if n_cut < 1 {
        return Err(Error::InvalidParameter("n_cut must be at least 1".into()));
    }
    let mut probs = Vec::with_capacity(n_cut + 1);
    let mut p = (-mu).exp();
    for n in 0..=n_cut {
        if n > 0 {
            p *= mu / n as f64;
        }
        probs.push(p);
    }
    let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    PhotonNumberDistribution::new(probs, tail, format!("poisson(mu={mu})"))
}

/// Reflected-field statistics of a coherent pulse scattered off the emitter.
pub fn tlss_distribution(
    emitter: &EmitterSpec,
    pulse: &PulseSpec,
    n_cut: usize,
) -> Result<PhotonNumberDistribution> {
    let counting = simulate_channels(emitter, pulse)?;
    Ok(counting.reflected.retruncate(n_cut).with_label(format!(
        "tlss(nbar={}, sigma={}, gamma={}, gamma_loss={})",
        pulse.mean_photons, pulse.spectral_width, emitter.gamma_wg, emitter.gamma_loss
    )))
}

/// Builds a distribution from `(n, p_n)` rows. Gaps read as zero; a sum short of one
/// by at most [`TABLE_NORMALIZATION_TOL`] becomes tail mass, a small excess is
/// scaled away, anything larger is rejected.
pub fn tabular_distribution(
    rows: &[(usize, f64)],
    label: impl Into<String>,
) -> Result<PhotonNumberDistribution> {
    if rows.is_empty() {
        return Err(Error::NotNormalized { sum: 0.0 });
    }
    let n_max = rows.iter().map(|&(n, _)| n).max().unwrap_or(0);
    let mut probs = vec![0.0; n_max.max(1) + 1];
    let mut seen = vec![false; probs.len()];
    for &(n, p) in rows {
        if seen[n] {
            return Err(Error::DuplicateIndex(n));
        }
        seen[n] = true;
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::NegativeProbability { n, value: p });
        }
        probs[n] = p;
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > TABLE_NORMALIZATION_TOL {
        return Err(Error::NotNormalized { sum });
    }
    let tail = if sum > 1.0 {
        probs.iter_mut().for_each(|p| *p /= sum);
        0.0
    } else {
        1.0 - sum
    };
    PhotonNumberDistribution::new(probs, tail, label)
}

/// Parses the plain-text table grammar: one `n probability` pair per line,
/// whitespace separated; `#` starts a comment; blank lines are ignored.
pub fn parse_table(text: &str, origin: &str) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::ConfigParse {
            path: origin.to_string(),
            line: i + 1,
            field: "table row".into(),
            message: msg,
        };
        let mut fields = line.split_whitespace();
        let (Some(n), Some(p), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad(format!("expected `n probability`, got `{line}`")));
        };
        let n: usize = n
            .parse()
            .map_err(|_| bad(format!("photon number `{n}` is not a non-negative integer")))?;
        let p: f64 = p
            .parse()
            .map_err(|_| bad(format!("probability `{p}` is not a number")))?;
        rows.push((n, p));
    }
    Ok(rows)
}

/// Built-in example tables, addressed as `builtin:<name>`.
pub const BUILTIN_TABLES: &[(&str, &str)] = &[
    ("hsps-signal", include_str!("../data/hsps_signal.txt")),
    ("hsps-decoy", include_str!("../data/hsps_decoy.txt")),
];

/// Where a tabulated source lives: a file, or one of [`BUILTIN_TABLES`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableRef {
    Builtin(String),
    File(PathBuf),
}

impl TableRef {
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix("builtin:") {
            Some(name) => TableRef::Builtin(name.to_string()),
            None => TableRef::File(PathBuf::from(s)),
        }
    }

    pub fn exists(&self) -> bool {
        match self {
            TableRef::Builtin(name) => BUILTIN_TABLES.iter().any(|(n, _)| n == name),
            TableRef::File(p) => p.is_file(),
        }
    }

    pub fn load(&self) -> Result<PhotonNumberDistribution> {
        let (text, origin) = match self {
            TableRef::Builtin(name) => {
                let text = BUILTIN_TABLES
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, t)| t.to_string())
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!("unknown builtin table `{name}`"))
                    })?;
                (text, self.to_string())
            }
            TableRef::File(path) => (read_text(path)?, path.display().to_string()),
        };
        let rows = parse_table(&text, &origin)?;
        tabular_distribution(&rows, format!("table({origin})"))
    }
}

impl fmt::Display for TableRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableRef::Builtin(name) => write!(f, "builtin:{name}"),
            TableRef::File(p) => write!(f, "{}", p.display()),
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionStats {
    pub mean: f64,
    pub variance: f64,
    /// `Var/mean − 1`; NaN for the vacuum.
    pub mandel_q: f64,
    pub multiphoton_mass: f64,
}

pub fn distribution_stats(d: &PhotonNumberDistribution) -> Result<DistributionStats> {
    if d.tail_mass() >= STATS_TAIL_LIMIT {
        return Err(Error::TailTooHeavy {
            tail: d.tail_mass(),
            limit: STATS_TAIL_LIMIT,
        });
    }
    let mean = d.truncated_mean();
    let second: f64 = d
        .probs()
        .iter()
        .enumerate()
        .map(|(n, p)| (n * n) as f64 * p)
        .sum();
    let variance = second - mean * mean;
    let mandel_q = if mean > 0.0 {
        variance / mean - 1.0
    } else {
        f64::NAN
    };
    Ok(DistributionStats {
        mean,
        variance,
        mandel_q,
        multiphoton_mass: d.multiphoton_mass(),
    })
}

/// Coherent-state reference with the same mean photon number as `d`.
pub fn matched_poisson(d: &PhotonNumberDistribution, n_cut: usize) -> Result<PhotonNumberDistribution> {
    let stats = distribution_stats(d)?;
    poisson_distribution(stats.mean, n_cut)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceRole {
    Signal,
    WeakDecoy,
    VacuumDecoy,
}

impl SourceRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceRole::Signal => "signal",
            SourceRole::WeakDecoy => "decoy",
            SourceRole::VacuumDecoy => "vacuum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "signal" => Some(SourceRole::Signal),
            "decoy" | "weak-decoy" => Some(SourceRole::WeakDecoy),
            "vacuum" | "vacuum-decoy" => Some(SourceRole::VacuumDecoy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    /// Weak coherent state of mean photon number `mu`.
    Wcs { mu: f64 },
    /// Tabulated statistics, e.g. a heralded single-photon source.
    Table(TableRef),
    /// Reflected field of the waveguide emitter.
    Tlss { emitter: EmitterSpec, pulse: PulseSpec },
    Vacuum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceStateSpec {
    pub label: String,
    pub role: SourceRole,
    pub kind: SourceKind,
}

/// A source state with its distribution computed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedState {
    pub label: String,
    pub role: SourceRole,
    pub distribution: PhotonNumberDistribution,
    /// Coherent-state intensity, when the state is a WCS.
    pub wcs_mu: Option<f64>,
}

impl SourceStateSpec {
    pub fn new(label: impl Into<String>, role: SourceRole, kind: SourceKind) -> Self {
        Self {
            label: label.into(),
            role,
            kind,
        }
    }

    pub fn resolve(&self, n_cut: usize) -> Result<ResolvedState> {
        let (distribution, wcs_mu) = if self.role == SourceRole::VacuumDecoy {
            (PhotonNumberDistribution::vacuum().retruncate(n_cut), Some(0.0))
        } else {
            match &self.kind {
                SourceKind::Wcs { mu } => (poisson_distribution(*mu, n_cut)?, Some(*mu)),
                SourceKind::Table(table) => (table.load()?.retruncate(n_cut), None),
                SourceKind::Tlss { emitter, pulse } => {
                    (tlss_distribution(emitter, pulse, n_cut)?, None)
                }
                SourceKind::Vacuum => (PhotonNumberDistribution::vacuum().retruncate(n_cut), Some(0.0)),
            }
        };
        Ok(ResolvedState {
            label: self.label.clone(),
            role: self.role,
            distribution: distribution.with_label(self.label.clone()),
            wcs_mu,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn poisson_vacuum_and_unit_mean() {
        let d = poisson_distribution(0.0, 5).unwrap();
        assert_eq!(d.p(0), 1.0);
        assert_eq!(d.tail_mass(), 0.0);
        let d = poisson_distribution(1.0, 10).unwrap();
        assert_abs_diff_eq!(d.p(0), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.p(0), 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn poisson_mean_within_tail_slack() {
        for &mu in &[0.02, 0.5, 1.0, 3.0] {
            let n_cut = 12;
            let d = poisson_distribution(mu, n_cut).unwrap();
            let gap = mu - d.truncated_mean();
            // each missing photon number is > n_cut, and its mass sits in the tail
            assert!(gap >= -1e-15);
            assert!(gap <= d.tail_mass() * (mu + n_cut as f64 + 1.0) + 1e-15, "mu {mu}");
        }
    }

    #[test]
    fn poisson_rejects_bad_input() {
        assert!(poisson_distribution(-0.1, 5).is_err());
        assert!(poisson_distribution(0.5, 0).is_err());
    }

    #[test]
    fn table_examples() {
        let d = tabular_distribution(&[(0, 0.5), (1, 0.5)], "t").unwrap();
        assert_abs_diff_eq!(distribution_stats(&d).unwrap().mean, 0.5, epsilon = 1e-15);
        assert!(matches!(
            tabular_distribution(&[(0, 0.5), (1, 0.6)], "t"),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            tabular_distribution(&[(1, -0.1), (0, 1.1)], "t"),
            Err(Error::NegativeProbability { n: 1, .. })
        ));
        assert!(matches!(
            tabular_distribution(&[(0, 0.5), (0, 0.5)], "t"),
            Err(Error::DuplicateIndex(0))
        ));
    }

    #[test]
    fn table_small_deficit_becomes_tail() {
        let d = tabular_distribution(&[(0, 0.3), (2, 0.6999995)], "t").unwrap();
        assert_eq!(d.p(1), 0.0);
        assert_abs_diff_eq!(d.tail_mass(), 5e-7, epsilon = 1e-15);
    }

    #[test]
    fn table_grammar() {
        let text = "# heading\n0 0.25   # trailing\n\n 1\t0.75\n";
        assert_eq!(parse_table(text, "x").unwrap(), vec![(0, 0.25), (1, 0.75)]);
        let err = parse_table("0 0.5 extra\n", "x").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 1, .. }));
        assert!(parse_table("-1 0.5\n", "x").is_err());
    }

    #[test]
    fn builtin_tables_load() {
        for (name, _) in BUILTIN_TABLES {
            let d = TableRef::Builtin(name.to_string()).load().unwrap();
            assert!(d.tail_mass() < 1e-6);
        }
        assert!(TableRef::Builtin("nope".into()).load().is_err());
    }

    #[test]
    fn stats_examples() {
        let d = poisson_distribution(1.0, 30).unwrap();
        let s = distribution_stats(&d).unwrap();
        assert_abs_diff_eq!(s.mandel_q, 0.0, epsilon = 1e-8);

        let one = PhotonNumberDistribution::point_mass(1, "one");
        let s = distribution_stats(&one).unwrap();
        assert_eq!((s.mean, s.variance, s.mandel_q), (1.0, 0.0, -1.0));

        let heavy = poisson_distribution(5.0, 3).unwrap();
        assert!(matches!(
            distribution_stats(&heavy),
            Err(Error::TailTooHeavy { .. })
        ));
    }

    #[test]
    fn matched_poisson_examples() {
        let vac = PhotonNumberDistribution::vacuum();
        let m = matched_poisson(&vac, 6).unwrap();
        assert_eq!(m.p(0), 1.0);

        let d = tabular_distribution(&[(0, 0.2), (1, 0.7), (2, 0.1)], "t").unwrap();
        let m = matched_poisson(&d, 30).unwrap();
        assert_abs_diff_eq!(
            distribution_stats(&m).unwrap().mean,
            distribution_stats(&d).unwrap().mean,
            epsilon = 1e-8
        );
    }

    #[test]
    fn retruncate_folds_into_tail() {
        let d = poisson_distribution(1.0, 10).unwrap();
        let short = d.retruncate(3);
        assert_eq!(short.n_cut(), 3);
        let total = short.probs().iter().sum::<f64>() + short.tail_mass();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        let long = short.retruncate(6);
        assert_eq!(long.p(5), 0.0);
        assert_eq!(long.tail_mass(), short.tail_mass());
    }

    #[test]
    fn vacuum_role_always_point_mass() {
        let spec = SourceStateSpec::new("v", SourceRole::VacuumDecoy, SourceKind::Wcs { mu: 0.4 });
        let r = spec.resolve(10).unwrap();
        assert!(r.distribution.is_vacuum());
    }
}
