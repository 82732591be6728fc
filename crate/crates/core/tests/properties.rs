use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uavlc_core::channel::{los_channel_gain, perturb_csi, OpticsParams};
use uavlc_core::config::SystemConfig;
use uavlc_core::dimming::{
    active_led_count, dc_bias_for, dimming_level_of, project_beamformer, select_leds, Beamformer, DimmingConfig,
    LedSelection,
};
use uavlc_core::env::{sample_task, RawAction, VlcEnv};
use uavlc_core::flight::{clamp_velocity, propulsion_power, RotorcraftParams};
use uavlc_core::geometry::{Matrix, Vec3};
use uavlc_core::metrics::{order_users, per_user_rate};

fn optics() -> OpticsParams {
    OpticsParams::from_degrees(60.0, 60.0, 1e-4, 1.5).unwrap()
}

fn matrix(rows: usize, cols: usize, values: &[f64]) -> Matrix {
    Matrix::from_fn(rows, cols, |r, c| values[(r * cols + c) % values.len()])
}

proptest! {
    #[test]
    fn gain_falls_with_horizontal_distance(z in 5.0..100.0f64, r1 in 0.0..80.0f64, dr in 0.0..40.0f64) {
        let uav = Vec3::new(0.0, 0.0, z);
        let near = los_channel_gain(uav, Vec3::new(r1, 0.0, 0.0), &optics()).unwrap();
        let far = los_channel_gain(uav, Vec3::new(r1 + dr, 0.0, 0.0), &optics()).unwrap();
        prop_assert!(far <= near);
        prop_assert!(far >= 0.0);
    }

    #[test]
    fn gain_is_zero_outside_field_of_view(z in 1.0..50.0f64, extra in 0.01..10.0f64) {
        let r = z * 60f64.to_radians().tan() * (1.0 + extra);
        let g = los_channel_gain(Vec3::new(0.0, 0.0, z), Vec3::new(r, 0.0, 0.0), &optics()).unwrap();
        prop_assert_eq!(g, 0.0);
    }

    #[test]
    fn gain_depends_only_on_relative_position(
        x in -50.0..50.0f64, y in -50.0..50.0f64, z in 5.0..60.0f64,
        ox in -100.0..100.0f64, oy in -100.0..100.0f64,
    ) {
        let a = los_channel_gain(Vec3::new(0.0, 0.0, z), Vec3::new(x, y, 0.0), &optics()).unwrap();
        let b = los_channel_gain(Vec3::new(ox, oy, z), Vec3::new(x + ox, y + oy, 0.0), &optics()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-30));
    }

    #[test]
    fn csi_error_stays_within_radius(
        values in prop::collection::vec(0.0..1e-6f64, 1..30),
        radius in 0.0..1e-6f64,
        seed in any::<u64>(),
    ) {
        let h = matrix(values.len(), 1, &values);
        let est = perturb_csi(&h, radius, &mut ChaCha8Rng::seed_from_u64(seed));
        for r in 0..h.rows() {
            prop_assert!(est[(r, 0)] >= 0.0);
            prop_assert!((est[(r, 0)] - h[(r, 0)]).abs() <= radius * (1.0 + 1e-12));
        }
    }

    #[test]
    fn dimming_round_trip(eta in 0.01..=1.0f64, n in 1usize..64) {
        let cfg = DimmingConfig::new(eta, 0.0, 0.01, n).unwrap();
        let na = active_led_count(eta, n);
        prop_assert!((1..=n).contains(&na));
        if let Ok(i_dc) = dc_bias_for(&cfg, na) {
            prop_assert!((dimming_level_of(na, i_dc, &cfg) - eta).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_meets_bound_and_masks(
        values in prop::collection::vec(-3.0..3.0f64, 1..40),
        mask in prop::collection::vec(any::<bool>(), 1..8),
        k in 1usize..4,
        bound in 0.0..2.0f64,
    ) {
        let n = mask.len();
        let w_raw = matrix(n, k, &values);
        let sel = LedSelection::from_mask(mask.clone());
        let w = project_beamformer(&w_raw, bound, &sel);
        prop_assert!(w.satisfies_bound(bound));
        for r in 0..n {
            let row_in: f64 = w_raw.row(r).iter().map(|x| x.abs()).sum();
            for c in 0..k {
                if !mask[r] {
                    prop_assert_eq!(w.w[(r, c)], 0.0);
                } else if row_in <= bound {
                    prop_assert_eq!(w.w[(r, c)], w_raw[(r, c)]);
                }
            }
        }
    }

    #[test]
    fn selection_takes_the_largest_scores(
        scores in prop::collection::vec(-1.0..1.0f64, 1..16),
        pick in 0usize..16,
    ) {
        let n_active = pick % (scores.len() + 1);
        let sel = select_leds(&scores, n_active);
        prop_assert_eq!(sel.active_count(), n_active);
        let on = (0..scores.len()).filter(|&i| sel.is_active(i)).map(|i| scores[i]);
        let off = (0..scores.len()).filter(|&i| !sel.is_active(i)).map(|i| scores[i]);
        let min_on = on.fold(f64::INFINITY, f64::min);
        let max_off = off.fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_on >= max_off);
    }

    #[test]
    fn single_user_rate_grows_with_amplitude(
        gains in prop::collection::vec(1e-7..1e-5f64, 1..6),
        s in 1e-4..1e-2f64,
        factor in 1.01..10.0f64,
    ) {
        let n = gains.len();
        let h = matrix(n, 1, &gains);
        let sel = LedSelection::all(n);
        let rate = |scale: f64| {
            let w = Beamformer { w: Matrix::from_fn(n, 1, |_, _| scale) };
            let order = order_users(&h, &w, &sel);
            per_user_rate(&h, &w, &sel, &[1e-21], &order).sum_rate
        };
        prop_assert!(rate(s * factor) > rate(s));
    }

    #[test]
    fn rates_follow_users_under_relabeling(
        g0 in 1e-7..1e-5f64, g1 in 1e-7..1e-5f64,
        a0 in 1e-4..1e-2f64, a1 in 1e-4..1e-2f64,
        n in 1usize..5,
    ) {
        let sel = LedSelection::all(n);
        let h = Matrix::from_fn(n, 2, |_, c| [g0, g1][c]);
        let w = Beamformer { w: Matrix::from_fn(n, 2, |_, c| [a0, a1][c]) };
        let hs = Matrix::from_fn(n, 2, |_, c| [g1, g0][c]);
        let ws = Beamformer { w: Matrix::from_fn(n, 2, |_, c| [a1, a0][c]) };
        let noise = [1e-21, 1e-21];
        let r = per_user_rate(&h, &w, &sel, &noise, &order_users(&h, &w, &sel));
        let rs = per_user_rate(&hs, &ws, &sel, &noise, &order_users(&hs, &ws, &sel));
        prop_assert!((r.rates[0] - rs.rates[1]).abs() <= 1e-9 * (1.0 + r.rates[0]));
        prop_assert!((r.rates[1] - rs.rates[0]).abs() <= 1e-9 * (1.0 + r.rates[1]));
    }

    #[test]
    fn propulsion_depends_only_on_speed(
        speed in 0.0..30.0f64,
        theta in 0.0..std::f64::consts::PI,
        phi in 0.0..std::f64::consts::TAU,
    ) {
        let p = RotorcraftParams::default();
        let v = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()) * speed;
        let a = propulsion_power(v, &p);
        let b = propulsion_power(Vec3::new(speed, 0.0, 0.0), &p);
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * b);
    }

    #[test]
    fn clamped_velocity_respects_limits(
        cur in prop::array::uniform3(-10.0..10.0f64),
        cmd in prop::array::uniform3(-50.0..50.0f64),
    ) {
        let cfg = SystemConfig::default();
        let f = cfg.flight_config(Vec3::new(50.0, 50.0, 50.0));
        let current = Vec3::new(cur[0], cur[1], cur[2]).clamp_norm(f.v_max);
        let v = clamp_velocity(current, Vec3::new(cmd[0], cmd[1], cmd[2]), &f);
        prop_assert!(v.norm() <= f.v_max * (1.0 + 1e-12));
        prop_assert!((v - current).norm() <= f.a_max * f.slot_duration * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decoded_actions_stay_in_range_and_episodes_replay(seed in any::<u64>(), flat_seed in any::<u64>()) {
        let mut cfg = SystemConfig::default();
        cfg.scenario.users = 3;
        cfg.scenario.slots = 6;
        let task = sample_task(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut env = VlcEnv::new(&cfg, task).unwrap();
        let dim = RawAction::dim(env.n_leds(), env.n_users());
        let mut rng = ChaCha8Rng::seed_from_u64(flat_seed);
        let actions: Vec<RawAction> = (0..cfg.scenario.slots)
            .map(|_| {
                let flat: Vec<f64> = (0..dim).map(|_| rand::Rng::random_range(&mut rng, -1.0..=1.0)).collect();
                RawAction::from_flat(&flat, env.n_leds(), env.n_users()).unwrap()
            })
            .collect();
        let run = |env: &mut VlcEnv| {
            env.reset_with_seed(seed).unwrap();
            actions.iter().map(|a| env.step(a).unwrap().record).collect::<Vec<_>>()
        };
        let first = run(&mut env);
        for rec in &first {
            prop_assert!(rec.feasibility.constraint(3));
            prop_assert!(rec.feasibility.constraint(8));
            prop_assert!(rec.feasibility.constraint(9));
        }
        prop_assert_eq!(first, run(&mut env));
    }
}
