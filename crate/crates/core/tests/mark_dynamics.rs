use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use essf::diagnostics::mean_se;
use essf::levy_mark::{evolve_mark, lamperti_integral_path, lamperti_inverse, MarkPathSegment};
use essf::stat_tests::ks_two_sample;

#[test]
fn brownian_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dt = 2.5;
    let increments: Vec<f64> = (0..10_000)
        .map(|_| evolve_mark((0.0, 0.3), dt, 0.0, 1.0, &mut rng, &[], None).log_mark_end - 0.3)
        .collect();
    let (mean, _) = mean_se(&increments);
    let var = increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (increments.len() - 1) as f64;
    assert!((var / dt - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn increments_add_up_across_a_query() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let single: Vec<f64> = (0..10_000)
        .map(|_| evolve_mark((0.0, 0.0), 1.0, 0.2, 0.7, &mut rng, &[], None).log_mark_end)
        .collect();
    let pieces: Vec<(f64, f64)> = (0..10_000)
        .map(|_| {
            let seg = evolve_mark((0.0, 0.0), 1.0, 0.2, 0.7, &mut rng, &[0.5], None);
            let mid = seg.log_mark_at(0.5).unwrap();
            (mid, seg.log_mark_end - mid)
        })
        .collect();
    let split: Vec<f64> = pieces.iter().map(|p| p.0 + p.1).collect();
    let (ma, _) = mean_se(&pieces.iter().map(|p| p.0).collect::<Vec<_>>());
    let (mb, _) = mean_se(&pieces.iter().map(|p| p.1).collect::<Vec<_>>());
    let cov = pieces.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / 9999.0;
    // Each half has variance 0.35.
    assert!((cov / 0.35).abs() < 4.0 / 100.0, "correlation {}", cov / 0.35);
    let (_, p) = ks_two_sample(&single, &split);
    assert!(p > 0.01, "p = {p}");
}

/// Contiguous deterministic segments with jumps in between.
fn exact_path() -> impl Strategy<Value = Vec<MarkPathSegment>> {
    proptest::collection::vec((0.01f64..3.0, -1.0f64..1.0, -1.5f64..1.5), 1..6).prop_map(|pieces| {
        let mut t = 0.0;
        let mut out = Vec::new();
        for (h, drift, log_start) in pieces {
            out.push(MarkPathSegment::deterministic(t, t + h, log_start, drift));
            t += h;
        }
        out
    })
}

/// `∫₀ᵘ exp(α·log_mark)` computed by truncating the path at `u`.
fn integral_until(segments: &[MarkPathSegment], alpha: f64, u: f64) -> f64 {
    let kept: Vec<MarkPathSegment> = segments
        .iter()
        .filter(|s| s.t_start < u)
        .map(|s| {
            if s.t_end <= u {
                s.clone()
            } else {
                MarkPathSegment::deterministic(s.t_start, u, s.log_mark_start, s.drift)
            }
        })
        .collect();
    lamperti_integral_path(&kept, alpha).unwrap()
}

proptest! {
    #[test]
    fn lamperti_round_trip(path in exact_path(), alpha in -2.0f64..2.0, fraction in 0.0f64..1.0) {
        let total = lamperti_integral_path(&path, alpha).unwrap();
        let target = fraction * total;
        let u = lamperti_inverse(&path, alpha, target).unwrap();
        prop_assert!(u.is_finite());
        let back = integral_until(&path, alpha, u);
        prop_assert!((back - target).abs() <= 1e-9 * total.max(1.0), "{} vs {}", back, target);
    }

    #[test]
    fn targets_beyond_the_path_are_never_reached(path in exact_path(), alpha in -2.0f64..2.0) {
        let total = lamperti_integral_path(&path, alpha).unwrap();
        prop_assert_eq!(lamperti_inverse(&path, alpha, total * 1.01 + 1e-9).unwrap(), f64::INFINITY);
    }
}
