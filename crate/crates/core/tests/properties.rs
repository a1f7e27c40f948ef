use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ncsim::aoi::{adra_mean_aoi_with_q, error_covariance, mse_of_age, nmse_of_age, sa_mean_aoi};
use ncsim::channel::{resolve_slot, ChannelConfig, SlotTx};
use ncsim::control::{estimate_state, make_preset, step_plant, LoopState, LtiSystem, SystemClass};
use ncsim::mac::{rr_next, LcfsQueue, Packet};

fn random_system(entries: &[f64], noise: &[f64]) -> LtiSystem {
    let a = DMatrix::from_row_slice(2, 2, entries);
    let sigma = DMatrix::from_diagonal(&DVector::from_row_slice(noise));
    LtiSystem::new(
        "prop",
        a,
        DMatrix::from_element(2, 1, 1.0),
        sigma,
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
        0.01,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn mse_strictly_increases_with_age(
        entries in proptest::collection::vec(-1.3f64..1.3, 4),
        noise in proptest::collection::vec(0.01f64..2.0, 2),
        age in 1u64..30,
    ) {
        let sys = random_system(&entries, &noise);
        let lo = mse_of_age(&sys, age);
        let hi = mse_of_age(&sys, age + 1);
        prop_assert!(hi >= lo);
        // Each new addend is tr(A^Δ Σ A^Δᵀ), positive whenever A is invertible.
        if sys.a().determinant().abs() > 0.1 && age <= 10 {
            prop_assert!(hi > lo, "MSE({}) = {lo} not below MSE({}) = {hi}", age, age + 1);
        }
        prop_assert_eq!(mse_of_age(&sys, 0), 0.0);
    }

    #[test]
    fn covariance_trace_matches_mse(
        entries in proptest::collection::vec(-1.2f64..1.2, 4),
        noise in proptest::collection::vec(0.01f64..2.0, 2),
        age in 1u64..40,
    ) {
        let sys = random_system(&entries, &noise);
        let cov = error_covariance(&sys, age).unwrap();
        let mse = mse_of_age(&sys, age);
        prop_assert!((cov.trace() - mse).abs() <= 1e-9 * mse.abs().max(1.0));
        prop_assert!((&cov - cov.transpose()).amax() <= 1e-9 * cov.amax().max(1.0));
    }

    #[test]
    fn nmse_is_one_at_unit_age(
        entries in proptest::collection::vec(-1.2f64..1.2, 4),
        noise in proptest::collection::vec(0.01f64..2.0, 2),
    ) {
        let sys = random_system(&entries, &noise);
        prop_assert!((nmse_of_age(&sys, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    /// Without process noise the estimator rebuilds the true state exactly
    /// from a stale sample and the inputs applied since.
    #[test]
    fn estimator_round_trip(age in 1usize..25, x0 in proptest::collection::vec(-2.0f64..2.0, 4), seed in any::<u64>()) {
        let sys = make_preset(SystemClass::Pendulum).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zero = DVector::zeros(4);
        let sample = DVector::from_vec(x0);
        let mut x = sample.clone();
        let mut inputs = Vec::new();
        for _ in 0..age {
            let u = DVector::from_element(1, rand::Rng::random_range(&mut rng, -1.0..1.0));
            x = step_plant(&sys, &x, &u, &zero).unwrap();
            inputs.insert(0, u);
        }
        let est = estimate_state(&sys, &sample, &inputs, age).unwrap();
        prop_assert!((est - x).amax() < 1e-9);
    }

    /// With every sample delivered one period late and no process noise,
    /// the controller's estimate is the true state.
    #[test]
    fn one_step_feedback_tracks_the_state(steps in 1usize..40, x0 in -3.0f64..3.0) {
        let sys = make_preset(SystemClass::Hard).unwrap();
        let zero = DVector::zeros(1);
        let mut ls = LoopState::new(&sys, DVector::from_element(1, x0)).unwrap();
        ls.control(&sys).unwrap();
        for _ in 0..steps {
            let sample = ls.state().clone();
            let gen = ls.step();
            ls.advance(&sys, &zero).unwrap();
            ls.receive(&sample, gen).unwrap();
            ls.control(&sys).unwrap();
            prop_assert_eq!(ls.age(), 1);
            prop_assert!((ls.estimate() - ls.state()).amax() < 1e-12);
        }
    }

    #[test]
    fn sa_age_is_minimized_at_one_over_n(n in 3usize..40, p in 0.01f64..0.99) {
        let best = sa_mean_aoi(n, 1.0 / n as f64).unwrap();
        prop_assert!(best <= sa_mean_aoi(n, p).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn adra_without_threshold_is_slotted_aloha(n in 3usize..30, p in 0.01f64..0.99) {
        let q = (1.0 - p).powi(n as i32 - 1);
        let sa = sa_mean_aoi(n, p).unwrap();
        prop_assert!((adra_mean_aoi_with_q(0, p, q) - sa).abs() <= 1e-9 * sa);
    }

    #[test]
    fn lcfs_queue_keeps_only_the_newest(gens in proptest::collection::vec(0u64..1000, 1..30)) {
        let mut q = LcfsQueue::new();
        for &g in &gens {
            q.push(Packet::data(0, g, DVector::zeros(1), 3000));
        }
        prop_assert_eq!(q.len(), 1);
        prop_assert_eq!(q.pop().unwrap().gen_step, gens.iter().copied().max());
    }

    #[test]
    fn round_robin_serves_everyone_once_per_cycle(n in 1usize..20, start in 1u64..500) {
        let mut seen: Vec<usize> = (start..start + n as u64).map(|t| rr_next(t, n)).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn strict_slots_deliver_only_lone_transmitters(k in 0usize..6, seed in any::<u64>()) {
        let cfg = ChannelConfig::ideal();
        let txs: Vec<SlotTx> = (0..k).map(|i| SlotTx { loop_idx: i, offset_us: 0 }).collect();
        let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|i| ChaCha8Rng::seed_from_u64(seed ^ i as u64)).collect();
        let ok = resolve_slot(&txs, &cfg, &mut rngs);
        if k == 1 {
            prop_assert_eq!(ok, vec![0]);
        } else {
            prop_assert!(ok.is_empty());
        }
    }
}
