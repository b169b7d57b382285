use proptest::prelude::*;
use relay_game::geo::{required_power, reward_value};
use relay_game::{RadioParams, Reward};

fn radio() -> RadioParams {
    RadioParams::telosb()
}

proptest! {
    #[test]
    fn power_grows_with_distance(d in 5.0f64..80.0, extra in 0.0f64..10.0, gain in 0.1e-3f64..2e-3) {
        let r = radio();
        let near = required_power(d, gain, &r).unwrap();
        let far = required_power((d + extra).min(r.range_m), gain, &r).unwrap();
        if let (Some(near), Some(far)) = (near, far) {
            prop_assert!(near <= far);
        }
        // Whatever the near relay needs, a farther one is never cheaper to reach.
        prop_assert!(!(near.is_none() && far.is_some()));
    }

    #[test]
    fn power_at_reference_distance_is_sensitivity_over_gain(gain in 0.1e-3f64..2e-3) {
        let r = radio();
        let p = required_power(r.reference_distance_m, gain, &r).unwrap().unwrap();
        prop_assert!((p - r.receiver_sensitivity_mw / gain).abs() <= 1e-15);
    }

    #[test]
    fn reward_rises_with_progress_and_falls_with_power(
        progress in 0.0f64..80.0,
        more in 0.0f64..20.0,
        power in 1e-7f64..1.0,
        scale in 1.0f64..10.0,
        a in 0.0f64..1.0,
    ) {
        let r = RadioParams { tradeoff_a: a, ..radio() };
        let v = |x: f64, p: f64| match reward_value(x, Some(p), &r).unwrap() {
            Reward::Value(v) => v,
            Reward::Infeasible => unreachable!(),
        };
        prop_assert!(v(progress, power) <= v(progress + more, power));
        prop_assert!(v(progress, power * scale) <= v(progress, power) * (1.0 + 1e-12));
    }

    #[test]
    fn out_of_range_relays_are_infeasible(d in 80.0001f64..500.0, gain in 0.1e-3f64..2e-3) {
        prop_assert_eq!(required_power(d, gain, &radio()).unwrap(), None);
        prop_assert_eq!(reward_value(1.0, None, &radio()).unwrap(), Reward::Infeasible);
    }
}
