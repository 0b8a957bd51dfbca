use ode2vae::checkpoint::{decode_checkpoint, encode_checkpoint};
use ode2vae::dataset::{build_dataset, read_dataset, write_dataset, DatasetKind, SplitCounts};
use ode2vae::metrics::{expand_event_windows, norm_breakdown, psnr_from_mse};
use ode2vae::objective::kl_diag_gaussian;
use ode2vae::sim::{kinetic_energy, simulate_bouncing_balls, BallWorldConfig};
use ode2vae::vae::{DiagonalGaussian, ModelConfig, VariationalModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gaussian(dim: usize) -> impl Strategy<Value = DiagonalGaussian<f64>> {
    (prop::collection::vec(-3.0..3.0f64, dim), prop::collection::vec(-2.0..2.0f64, dim))
        .prop_map(|(m, s)| DiagonalGaussian::new(m, s).unwrap())
}

proptest! {
    #[test]
    fn windows_cover_events_and_stay_in_range(
        t in 1usize..40,
        half in 0usize..4,
        raw in prop::collection::vec(0usize..40, 0..6),
    ) {
        let events: Vec<usize> = raw.into_iter().filter(|&e| e < t).collect();
        let w = expand_event_windows(&events, 2 * half + 1, t).unwrap();
        for &e in &events {
            prop_assert!(w.contains(e));
        }
        for &i in &w.expanded {
            prop_assert!(i < t);
            prop_assert!(events.iter().any(|&e| e.abs_diff(i) <= half));
        }
        prop_assert!(w.expanded.len() <= events.len() * (2 * half + 1));
    }

    #[test]
    fn breakdown_partitions_every_step(
        norms in prop::collection::vec(prop::collection::vec(0.0..5.0f64, 8), 1..5),
        ev in 0usize..8,
    ) {
        let windows: Vec<_> = norms.iter().map(|_| expand_event_windows(&[ev], 3, 8).unwrap()).collect();
        let b = norm_breakdown(&norms, &windows).unwrap();
        prop_assert_eq!(b.event.count + b.non_event.count, norms.len() * 8);
        prop_assert_eq!(b.event.count, norms.len() * windows[0].expanded.len());
    }

    #[test]
    fn kl_is_non_negative((q, p) in (1usize..6).prop_flat_map(|d| (gaussian(d), gaussian(d)))) {
        prop_assert!(kl_diag_gaussian(&q, &p).unwrap() >= 0.0);
        prop_assert!(kl_diag_gaussian(&q, &q).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_error(a in 1e-9..1.0f64, b in 1e-9..1.0f64) {
        prop_assume!(a < b);
        prop_assert!(psnr_from_mse(a) > psnr_from_mse(b));
    }

    #[test]
    fn ball_energy_is_conserved(seed in any::<u64>(), balls in 1usize..4) {
        let cfg = BallWorldConfig::with_balls(balls);
        let tr = simulate_bouncing_balls(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let e0 = kinetic_energy(&tr.velocities[0], cfg.mass);
        for v in &tr.velocities {
            prop_assert!((kinetic_energy(v, cfg.mass) - e0).abs() <= 1e-9 * e0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), cut in 0.0..1.0f64) {
        let cfg = ModelConfig { resolution: 8, latent_dim: 2, amortized_len: 3, channels: [2, 2, 2], field_hidden: 3 };
        let model = VariationalModel::<f32>::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let bytes = encode_checkpoint(&model);
        let back: VariationalModel<f32> = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(&back, &model);
        let n = (cut * bytes.len() as f64) as usize;
        prop_assert!(decode_checkpoint::<f32>(&bytes[..n]).is_err());
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let bundle = build_dataset(
        DatasetKind::Bouncing(BallWorldConfig::with_balls(2)),
        SplitCounts { train: 3, val: 1, test: 2 },
        11,
        16,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&bundle, dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.manifest, bundle.manifest);
    assert_eq!(back.test.len(), 2);
    for (a, b) in back.train.iter().zip(&bundle.train) {
        // Pixels are stored as 8-bit intensities.
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert!(fa.pixels.iter().zip(&fb.pixels).all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-6));
        }
        assert_eq!(a.events, b.events);
    }
}
