//! Fiber plus detector channel: transmittance, n-photon yields and error rates,
//! and the gains / QBERs an honest channel produces for a given source.

use crate::error::{Error, Result};
use crate::sources::{PhotonNumberDistribution, SourceRole};

/// Sources handed to [`gain_and_qber`] must have a lighter tail than this.
pub const GAIN_TAIL_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Fiber loss α in dB/km.
    pub alpha_db_per_km: f64,
    /// Receiver detection efficiency η_Bob.
    pub eta_bob: f64,
    /// Background (dark count) yield Y₀.
    pub y0: f64,
    /// Error rate of background counts e₀.
    pub e0: f64,
    /// Probability e_d that a photon hits the wrong detector.
    pub ed: f64,
}

impl ChannelParams {
    /// Fiber-link parameters of the GYS experiment.
    pub const GYS: ChannelParams = ChannelParams {
        alpha_db_per_km: 0.21,
        eta_bob: 0.045,
        y0: 1.7e-6,
        e0: 0.5,
        ed: 0.033,
    };

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")))
            }
        };
        if !(self.alpha_db_per_km >= 0.0 && self.alpha_db_per_km.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha_db_per_km = {} must be non-negative",
                self.alpha_db_per_km
            )));
        }
        unit("eta_bob", self.eta_bob)?;
        unit("y0", self.y0)?;
        unit("e0", self.e0)?;
        unit("ed", self.ed)
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::GYS
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub distance_km: f64,
    /// t_AB = 10^(−αℓ/10).
    pub t_ab: f64,
    /// η = t_AB · η_Bob.
    pub eta: f64,
}

pub fn link_budget(params: &ChannelParams, distance_km: f64) -> Result<LinkBudget> {
    if !(distance_km >= 0.0 && distance_km.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "distance {distance_km} km must be non-negative"
        )));
    }
    let t_ab = 10f64.powf(-params.alpha_db_per_km * distance_km / 10.0);
    Ok(LinkBudget {
        distance_km,
        t_ab,
        eta: t_ab * params.eta_bob,
    })
}

/// `Y_n = 1 − (1 − Y₀)(1 − η)^n`.
pub fn yield_n(params: &ChannelParams, budget: &LinkBudget, n: usize) -> f64 {
    // written so that n = 0 returns Y₀ exactly
    params.y0 + (1.0 - params.y0) * (1.0 - (1.0 - budget.eta).powi(n as i32))
}

/// `e_n = [e₀Y₀ + e_d(Y_n − Y₀)] / Y_n`.
pub fn error_n(params: &ChannelParams, budget: &LinkBudget, n: usize) -> Result<f64> {
    let y = yield_n(params, budget, n);
    if y <= 0.0 {
        return Err(Error::ZeroYield { n });
    }
    Ok((params.e0 * params.y0 + params.ed * (y - params.y0)) / y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainQber {
    pub gain: f64,
    pub qber: f64,
    /// Half-width on `gain` from the unresolved tail (every tail photon number
    /// could at most click with certainty).
    pub gain_uncertainty: f64,
}

/// Truncated Q and E series of a source distribution over the honest channel.
pub fn gain_and_qber(
    dist: &PhotonNumberDistribution,
    params: &ChannelParams,
    budget: &LinkBudget,
) -> Result<GainQber> {
    if dist.tail_mass() >= GAIN_TAIL_LIMIT {
        return Err(Error::TailTooHeavy {
            tail: dist.tail_mass(),
            limit: GAIN_TAIL_LIMIT,
        });
    }
    let mut gain = 0.0;
    let mut errors = 0.0;
    for (n, &p) in dist.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let y = yield_n(params, budget, n);
        gain += p * y;
        // Y_n e_n, finite even where Y_n = 0
        errors += p * (params.e0 * params.y0 + params.ed * (y - params.y0));
    }
    Ok(GainQber {
        gain,
        // no detections, no errors
        qber: if gain > 0.0 { errors / gain } else { 0.0 },
        gain_uncertainty: dist.tail_mass(),
    })
}

/// One measured (or simulated) state: its distribution and detection statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub label: String,
    pub role: SourceRole,
    pub distribution: PhotonNumberDistribution,
    pub gain: f64,
    pub qber: f64,
    /// Measurement half-width u applied to both Q and QE; 0 in simulation mode.
    pub uncertainty: f64,
}

impl Observation {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gain", self.gain), ("qber", self.qber)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{} of state '{}' = {v} outside [0, 1]",
                    name, self.label
                )));
            }
        }
        if !(self.uncertainty >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "uncertainty of state '{}' is negative",
                self.label
            )));
        }
        Ok(())
    }
}

/// Per-state observations feeding the estimator.
pub type ObservedStatistics = Vec<Observation>;

/// Honest-channel observation of a source state.
pub fn simulate_observation(
    label: &str,
    role: SourceRole,
    dist: &PhotonNumberDistribution,
    params: &ChannelParams,
    budget: &LinkBudget,
) -> Result<Observation> {
    let gq = gain_and_qber(dist, params, budget)?;
    Ok(Observation {
        label: label.to_string(),
        role,
        distribution: dist.clone(),
        gain: gq.gain,
        qber: gq.qber,
        uncertainty: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::poisson_distribution;
    use approx::assert_abs_diff_eq;

    const GYS: ChannelParams = ChannelParams::GYS;

    #[test]
    fn budget_examples() {
        let b = link_budget(&GYS, 0.0).unwrap();
        assert_eq!(b.t_ab, 1.0);
        assert_eq!(b.eta, GYS.eta_bob);
        let b = link_budget(&GYS, 100.0).unwrap();
        assert_abs_diff_eq!(b.t_ab, 10f64.powf(-2.1), epsilon = 1e-18);
        assert_abs_diff_eq!(b.t_ab, 7.9433e-3, epsilon = 1e-7);
        let mut last = 2.0;
        for l in [0.0, 1.0, 10.0, 50.0, 200.0] {
            let t = link_budget(&GYS, l).unwrap().t_ab;
            assert!(t < last);
            last = t;
        }
        assert!(link_budget(&GYS, -1.0).is_err());
    }

    #[test]
    fn yield_examples() {
        let b = link_budget(&GYS, 30.0).unwrap();
        assert_eq!(yield_n(&GYS, &b, 0), GYS.y0);
        let perfect = ChannelParams {
            y0: 0.0,
            eta_bob: 1.0,
            alpha_db_per_km: 0.0,
            ..GYS
        };
        let pb = link_budget(&perfect, 0.0).unwrap();
        for n in 1..5 {
            assert_eq!(yield_n(&perfect, &pb, n), 1.0);
        }
        for n in 0..20 {
            assert!(yield_n(&GYS, &b, n + 1) >= yield_n(&GYS, &b, n));
        }
    }

    #[test]
    fn error_examples() {
        let quiet = ChannelParams { y0: 0.0, ..GYS };
        let b = link_budget(&quiet, 20.0).unwrap();
        for n in 1..6 {
            assert_abs_diff_eq!(error_n(&quiet, &b, n).unwrap(), quiet.ed, epsilon = 1e-15);
        }
        assert!(matches!(error_n(&quiet, &b, 0), Err(Error::ZeroYield { n: 0 })));

        let b = link_budget(&GYS, 80.0).unwrap();
        assert_abs_diff_eq!(error_n(&GYS, &b, 0).unwrap(), GYS.e0, epsilon = 1e-15);
        let mut last = 1.0;
        for n in 1..30 {
            let e = error_n(&GYS, &b, n).unwrap();
            assert!(e < last && e > GYS.ed);
            last = e;
        }
    }

    #[test]
    fn gain_examples() {
        let b = link_budget(&GYS, 40.0).unwrap();
        let vac = PhotonNumberDistribution::vacuum();
        let g = gain_and_qber(&vac, &GYS, &b).unwrap();
        assert_eq!((g.gain, g.qber), (GYS.y0, GYS.e0));

        let one = PhotonNumberDistribution::point_mass(1, "one");
        let g = gain_and_qber(&one, &GYS, &b).unwrap();
        assert_eq!(g.gain, yield_n(&GYS, &b, 1));
        assert_abs_diff_eq!(g.qber, error_n(&GYS, &b, 1).unwrap(), epsilon = 1e-16);

        let quiet = ChannelParams { y0: 0.0, ..GYS };
        let g = gain_and_qber(&vac, &quiet, &b).unwrap();
        assert_eq!((g.gain, g.qber), (0.0, 0.0));

        let heavy = poisson_distribution(1.0, 5).unwrap();
        assert!(matches!(
            gain_and_qber(&heavy, &GYS, &b),
            Err(Error::TailTooHeavy { .. })
        ));
    }

    #[test]
    fn poisson_gain_closed_form() {
        for mu in [0.02, 0.1, 0.5, 1.0] {
            for l in [0.0, 50.0, 100.0, 140.0] {
                let b = link_budget(&GYS, l).unwrap();
                let d = poisson_distribution(mu, 40).unwrap();
                let q = gain_and_qber(&d, &GYS, &b).unwrap().gain;
                let closed = 1.0 - (1.0 - GYS.y0) * (-b.eta * mu).exp();
                assert!((q - closed).abs() <= 1e-12, "mu {mu} l {l}");
            }
        }
    }
}
