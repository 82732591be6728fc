use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uavlc_core::env::Transition;
use uavlc_learn::checkpoint::{agent_from_str, agent_to_string};
use uavlc_learn::policy::{log_std_from_raw, squashed_log_prob, squashed_sample, LOG_STD_MAX, LOG_STD_MIN};
use uavlc_learn::replay::ReplayBuffer;
use uavlc_learn::{Mlp, SacAgent};
use uavlc_core::config::SacHyper;

fn transition(i: usize) -> Transition {
    Transition {
        obs: vec![i as f64],
        action: vec![0.0],
        reward: i as f64,
        next_obs: vec![i as f64 + 1.0],
        done: false,
    }
}

proptest! {
    #[test]
    fn replay_keeps_the_most_recent(capacity in 1usize..50, pushes in 0usize..200) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(transition(i));
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        let mut kept: Vec<usize> = buf.iter().map(|t| t.reward as usize).collect();
        kept.sort_unstable();
        let expected: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn squashed_actions_stay_inside_the_box(
        mean in prop::collection::vec(-50.0..50.0f64, 1..6),
        raw in prop::collection::vec(-10.0..10.0f64, 6),
        noise in prop::collection::vec(-8.0..8.0f64, 6),
    ) {
        let n = mean.len();
        let log_std: Vec<f64> = raw[..n].iter().map(|&r| log_std_from_raw(r)).collect();
        prop_assert!(log_std.iter().all(|&l| (LOG_STD_MIN..=LOG_STD_MAX).contains(&l)));
        let s = squashed_sample(&mean, &log_std, &noise[..n]);
        prop_assert!(s.action.iter().all(|a| a.abs() < 1.0));
        prop_assert!(s.log_prob.is_finite());
        let again = squashed_log_prob(&s.action, &mean, &log_std);
        prop_assert!(again.is_finite());
    }

    #[test]
    fn blend_interpolates(seed in any::<u64>(), c in 0.0..=1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Mlp::new(&[3, 5, 2], &mut rng);
        let b = Mlp::new(&[3, 5, 2], &mut rng);
        let mut t = a.clone();
        t.blend_from(&b, c).unwrap();
        for ((x, y), z) in a.params().iter().zip(b.params()).zip(t.params()) {
            prop_assert!((z - (x + c * (y - x))).abs() <= 1e-15 * (1.0 + x.abs() + y.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoints_round_trip_exactly(seed in any::<u64>(), obs in 1usize..6, act in 1usize..4) {
        let hyper = SacHyper { hidden: vec![4], ..SacHyper::default() };
        let agent = SacAgent::new(obs, act, &hyper, &mut ChaCha8Rng::seed_from_u64(seed));
        let back = agent_from_str(&agent_to_string(&agent)).unwrap();
        prop_assert_eq!(back.nets.fingerprint(), agent.nets.fingerprint());
    }
}
