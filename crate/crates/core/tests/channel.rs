use proptest::prelude::*;
use waveguide_qkd::channel::{gain_and_qber, link_budget, ChannelParams};
use waveguide_qkd::sources::PhotonNumberDistribution;

const GYS: ChannelParams = ChannelParams::GYS;

fn distribution() -> impl Strategy<Value = PhotonNumberDistribution> {
    prop::collection::vec(0.0f64..1.0, 1..12).prop_filter_map("all-zero weights", |w| {
        let s: f64 = w.iter().sum();
        if s <= 0.0 {
            return None;
        }
        PhotonNumberDistribution::new(w.iter().map(|x| x / s).collect(), 0.0, "random").ok()
    })
}

fn mix(a: &PhotonNumberDistribution, b: &PhotonNumberDistribution, lambda: f64) -> PhotonNumberDistribution {
    let n = a.probs().len().max(b.probs().len());
    let probs = (0..n).map(|i| lambda * a.p(i) + (1.0 - lambda) * b.p(i)).collect();
    PhotonNumberDistribution::new(probs, 0.0, "mix").unwrap()
}

proptest! {
    #[test]
    fn gain_and_error_counts_are_linear_in_the_source(
        a in distribution(),
        b in distribution(),
        lambda in 0.0f64..=1.0,
        l in 0.0f64..200.0,
    ) {
        let budget = link_budget(&GYS, l).unwrap();
        let ga = gain_and_qber(&a, &GYS, &budget).unwrap();
        let gb = gain_and_qber(&b, &GYS, &budget).unwrap();
        let gm = gain_and_qber(&mix(&a, &b, lambda), &GYS, &budget).unwrap();
        let q = lambda * ga.gain + (1.0 - lambda) * gb.gain;
        let qe = lambda * ga.gain * ga.qber + (1.0 - lambda) * gb.gain * gb.qber;
        prop_assert!((gm.gain - q).abs() <= 1e-12);
        prop_assert!((gm.gain * gm.qber - qe).abs() <= 1e-12);
    }

    #[test]
    fn longer_fiber_fewer_clicks_more_errors(d in distribution(), l in 0.0f64..180.0, dl in 0.5f64..40.0) {
        let near = gain_and_qber(&d, &GYS, &link_budget(&GYS, l).unwrap()).unwrap();
        let far = gain_and_qber(&d, &GYS, &link_budget(&GYS, l + dl).unwrap()).unwrap();
        prop_assert!(far.gain <= near.gain);
        prop_assert!(far.qber >= near.qber - 1e-15);
    }
}
