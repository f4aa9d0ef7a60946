use proptest::prelude::*;
use unidb::bridge::transition_law;
use unidb::models::{data_from_noise, noise_from_data};
use unidb::samplers::{step_coeffs, TimeGrid};
use unidb::schedule::{Gamma, Normalization, ScheduleKind, TerminalConvention};
use unidb::{Schedule, ScheduleParams, StateVec};

fn gamma() -> impl Strategy<Value = Gamma> {
    prop_oneof![
        Just(Gamma::Infinite),
        (1.0f64..12.0).prop_map(|e| Gamma::Finite(10f64.powf(e))),
    ]
}

fn schedule() -> impl Strategy<Value = Schedule> {
    let cosine = (
        0.001f64..0.05,
        0.001f64..0.2,
        0.5f64..3.0,
        0.005f64..1.0,
        gamma(),
    )
        .prop_map(|(offset, decay, horizon, lambda2, gamma)| ScheduleParams {
            kind: ScheduleKind::FlippedCosine { offset },
            horizon,
            lambda2,
            gamma,
            normalization: Normalization::TerminalDecay {
                value: decay,
                convention: TerminalConvention::NegativeExponent,
            },
        });
    let constant = (0.1f64..4.0, 0.5f64..3.0, 0.01f64..2.0, gamma()).prop_map(
        |(theta0, horizon, lambda2, gamma)| {
            ScheduleParams::constant(theta0, horizon, lambda2, gamma)
        },
    );
    prop_oneof![cosine, constant].prop_map(|p| Schedule::new(p).unwrap())
}

/// Two interior times `s > t` as fractions of the horizon.
fn ordered_pair() -> impl Strategy<Value = (f64, f64)> {
    (0.01f64..0.99, 0.01f64..0.99)
        .prop_filter("distinct", |(a, b)| (a - b).abs() > 1e-3)
        .prop_map(|(a, b)| if a > b { (a, b) } else { (b, a) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_weights_sum_to_one(sched in schedule(), (s, t) in ordered_pair()) {
        let h = sched.horizon();
        let w = step_coeffs(&sched, s * h, t * h).unwrap();
        prop_assert!((w.weight_sum() - 1.0).abs() < 1e-12, "sum {}", w.weight_sum());
        prop_assert!(w.noise_std >= 0.0);
        prop_assert!(w.on_prev > 0.0 && w.on_prev < 1.0);
    }

    #[test]
    fn noise_variance_composes(sched in schedule(), a in 0.02f64..0.98, b in 0.02f64..0.98, c in 0.02f64..0.98) {
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        prop_assume!(v[1] - v[0] > 1e-3 && v[2] - v[1] > 1e-3);
        let h = sched.horizon();
        let (t, r, s) = (v[0] * h, v[1] * h, v[2] * h);
        let rho = |x: f64| sched.coeffs(x).unwrap().rho_t;
        let d = |from: f64, to: f64| sched.delta_d(from, to).unwrap().powi(2);
        let lhs = (rho(t) / rho(r)).powi(2) * d(s, r) + d(r, t);
        let rhs = d(s, t);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn beta_decreases_and_inverts(sched in schedule(), (s, t) in ordered_pair()) {
        let h = sched.horizon();
        let (bs, bt) = (sched.coeffs(s * h).unwrap().beta_t, sched.coeffs(t * h).unwrap().beta_t);
        prop_assert!(bt > bs);
        let back = sched.t_of_beta(bs).unwrap();
        prop_assert!((back - s * h).abs() < 1e-9 * h.max(1.0), "{back} vs {}", s * h);
    }

    #[test]
    fn data_noise_conversion_round_trips(sched in schedule(), frac in 0.02f64..0.98, x in -3.0f64..3.0, y in -3.0f64..3.0, e in -3.0f64..3.0) {
        let c = sched.coeffs(frac * sched.horizon()).unwrap();
        let (xt, xtt, eps) = (StateVec::from(x), StateVec::from(y), StateVec::from(e));
        let x0 = data_from_noise(&c, &xt, &xtt, &eps).unwrap();
        let back = noise_from_data(&c, &xt, &xtt, &x0).unwrap();
        prop_assert!((back[0] - e).abs() < 1e-8 * (1.0 + e.abs() + x0[0].abs()), "{} vs {e}", back[0]);
    }

    #[test]
    fn transition_mean_is_affine(sched in schedule(), frac in 0.0f64..=1.0, x0 in -5.0f64..5.0, xt in -5.0f64..5.0) {
        let c = sched.coeffs(frac * sched.horizon()).unwrap();
        let law = transition_law(&c, &StateVec::from(x0), &StateVec::from(xt)).unwrap();
        let want = c.xi_t * x0 + (1.0 - c.xi_t) * xt;
        prop_assert!((law.mean[0] - want).abs() < 1e-12);
        prop_assert!(law.var >= 0.0);
        prop_assert!((0.0..=1.0).contains(&c.xi_t));
    }

    #[test]
    fn uniform_grid_is_decreasing(horizon in 0.1f64..10.0, steps in 1usize..200) {
        let grid = TimeGrid::uniform(horizon, steps).unwrap();
        let t = grid.times();
        prop_assert_eq!(t.len(), steps + 1);
        prop_assert_eq!(t[0], horizon);
        prop_assert_eq!(t[steps], 0.0);
        prop_assert!(t.windows(2).all(|w| w[0] > w[1]));
    }
}
