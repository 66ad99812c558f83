use odds::bins::{
    expected_decode, make_schema, quantize_scalar, std_normal_cdf, BinDistribution, QuantizeParams,
};
use odds::fusion::{
    fuse_confidence_weighted, FusionConfig, LogisticTransform, SyntheticAnnotationSet,
};
use odds::head::softmax;
use odds::loss::kl_direct_loss;
use odds::metrics::{average_ranks, ece, jsd, ranking_risk, spearman};
use odds::structural::{score_bird, BirdFactor, BirdTrace, TableScorer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sigma() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.01), Just(0.05), Just(0.1), 0.001f64..0.5]
}

fn n_bins() -> impl Strategy<Value = usize> {
    prop_oneof![Just(10usize), Just(20), Just(100), 2usize..64]
}

fn gaussian_quantile(p: f64, mean: f64, sd: f64) -> f64 {
    let (mut lo, mut hi) = (-12.0, 12.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if std_normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mean + sd * 0.5 * (lo + hi)
}

/// Squared W2 between a distribution on `centers` and a Gaussian, by quantile-grid integration.
fn w2_squared(probs: &[f64], centers: &[f64], gaussian_quantiles: &[f64]) -> f64 {
    let k = gaussian_quantiles.len();
    let mut cumulative = 0.0;
    let mut bin = 0;
    let mut total = 0.0;
    for (i, g) in gaussian_quantiles.iter().enumerate() {
        let u = (i as f64 + 0.5) / k as f64;
        while bin + 1 < probs.len() && cumulative + probs[bin] < u {
            cumulative += probs[bin];
            bin += 1;
        }
        total += (centers[bin] - g).powi(2);
    }
    total / k as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quantize_conserves_mass(y in 0.0f64..=1.0, s in sigma(), n in n_bins()) {
        let schema = make_schema(n).unwrap();
        let q = quantize_scalar(y, QuantizeParams::new(s).unwrap(), &schema).unwrap();
        prop_assert!((q.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(q.probs().iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn quantize_preserves_order(a in 0.0f64..=1.0, b in 0.0f64..=1.0, s in sigma(), n in n_bins()) {
        let schema = make_schema(n).unwrap();
        let p = QuantizeParams::new(s).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let dl = expected_decode(&quantize_scalar(lo, p, &schema).unwrap(), &schema).unwrap();
        let dh = expected_decode(&quantize_scalar(hi, p, &schema).unwrap(), &schema).unwrap();
        prop_assert!(dl <= dh);
    }

    #[test]
    fn quantize_interior_fidelity(y in 0.0f64..=1.0, s in sigma(), n in n_bins()) {
        prop_assume!(y - 4.0 * s >= 0.0 && y + 4.0 * s <= 1.0);
        let schema = make_schema(n).unwrap();
        let d = expected_decode(&quantize_scalar(y, QuantizeParams::new(s).unwrap(), &schema).unwrap(), &schema).unwrap();
        prop_assert!((d - y).abs() <= 1.0 / (2.0 * n as f64) + 1e-4);
    }

    #[test]
    fn quantize_half_is_palindromic(half in 1usize..50, s in sigma()) {
        let schema = make_schema(2 * half).unwrap();
        let q = quantize_scalar(0.5, QuantizeParams::new(s).unwrap(), &schema).unwrap();
        let p = q.probs();
        for j in 0..p.len() {
            prop_assert!((p[j] - p[p.len() - 1 - j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn kl_gradient_is_p_minus_q(logits in prop::collection::vec(-5.0f64..5.0, 2..20), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = BinDistribution::from_weights((0..logits.len()).map(|_| rng.random::<f64>()).collect()).unwrap();
        let (loss, grad) = kl_direct_loss(&target, &logits).unwrap();
        prop_assert!(loss >= 0.0);
        let p = softmax(&logits);
        for i in 0..logits.len() {
            prop_assert!((grad[i] - (p[i] - target.probs()[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn fusion_is_permutation_equivariant(
        pairs in prop::collection::vec((0.0f64..=1.0, 0.01f64..=1.0), 1..6),
        alpha in 0.0f64..10.0,
        rotate in 0usize..6,
    ) {
        let schema = make_schema(20).unwrap();
        let config = FusionConfig { alpha, ..FusionConfig::default() };
        let build = |v: &[(f64, f64)]| {
            let set = SyntheticAnnotationSet::new("x", v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.1).collect()).unwrap();
            fuse_confidence_weighted(&set, &config, &schema).unwrap()
        };
        let mut shuffled = pairs.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let (a, b) = (build(&pairs), build(&shuffled));
        for (x, y) in a.probs().iter().zip(b.probs()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!((a.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn fused_decode_stays_within_component_range(
        pairs in prop::collection::vec((0.2f64..=0.8, 0.01f64..=1.0), 1..6),
        alpha in 0.0f64..10.0,
    ) {
        let schema = make_schema(20).unwrap();
        let config = FusionConfig { alpha, sigma: 0.05, ..FusionConfig::default() };
        let estimates: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let set = SyntheticAnnotationSet::new("x", estimates.clone(), pairs.iter().map(|p| p.1).collect()).unwrap();
        let d = expected_decode(&fuse_confidence_weighted(&set, &config, &schema).unwrap(), &schema).unwrap();
        let params = QuantizeParams::new(config.sigma).unwrap();
        let decodes: Vec<f64> = estimates
            .iter()
            .map(|y| expected_decode(&quantize_scalar(*y, params, &schema).unwrap(), &schema).unwrap())
            .collect();
        let lo = decodes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = decodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let half = 1.0 / 40.0;
        prop_assert!(d >= lo - half - 1e-12 && d <= hi + half + 1e-12);
        let elo = estimates.iter().copied().fold(f64::INFINITY, f64::min);
        let ehi = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(d >= elo - half - 1e-4 && d <= ehi + half + 1e-4);
    }

    #[test]
    fn logistic_round_trip_and_monotone(x in -8.0f64..8.0, y in -8.0f64..8.0, scale in 0.1f64..4.0, offset in -2.0f64..2.0) {
        let t = LogisticTransform { scale, offset };
        prop_assume!((scale * (x - offset)).abs() < 12.0);
        let back = t.inverse(t.forward(x));
        prop_assert!(!back.clipped);
        prop_assert!((back.value - x).abs() <= 1e-9 * (1.0 + x.abs()) / scale.min(1.0));
        if x < y {
            prop_assert!(t.forward(x) <= t.forward(y));
        }
    }

    #[test]
    fn spearman_symmetric_and_monotone_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 3..40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|x| x + rng.random_range(-50.0..50.0)).collect();
        let (Ok(a), Ok(b)) = (spearman(&xs, &ys), spearman(&ys, &xs)) else { return Ok(()) };
        prop_assert!((a - b).abs() <= 1e-12);
        let warped: Vec<f64> = xs.iter().map(|x| (x / 30.0).exp()).collect();
        let c = spearman(&warped, &ys).unwrap();
        prop_assert!((a - c).abs() <= 1e-12);
        prop_assert!(a.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn ranking_risk_zero_for_monotone_predictions(golds in prop::collection::vec(0.0f64..1.0, 2..30)) {
        let preds: Vec<f64> = golds.iter().map(|g| 3.0 * g * g + 1.0).collect();
        match ranking_risk(&preds, &golds) {
            Ok(r) => prop_assert_eq!(r, 0.0),
            Err(_) => prop_assert!(golds.windows(2).all(|w| w[0] == w[1]) || golds.iter().all(|g| *g == golds[0])),
        }
    }

    #[test]
    fn ece_zero_when_bins_are_calibrated(k in 1usize..8, n_bins in 1usize..20, bin_seed in any::<u64>()) {
        // each group shares one prediction equal to its label rate
        let mut rng = ChaCha8Rng::seed_from_u64(bin_seed);
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for g in 0..k {
            let size = 4 * (g + 1);
            let positives = rng.random_range(0..=size);
            let p = positives as f64 / size as f64;
            for i in 0..size {
                preds.push(p);
                labels.push(i < positives);
            }
        }
        // distinct groups may share an ECE bin; calibration then holds for the merged bin too
        prop_assert!(ece(&preds, &labels, n_bins).unwrap() <= 1e-12);
    }

    #[test]
    fn jsd_symmetric_and_bounded(n in 2usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            let w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random() }).collect();
            let t: f64 = w.iter().sum();
            if t == 0.0 { vec![1.0 / n as f64; n] } else { w.iter().map(|x| x / t).collect() }
        };
        let (p, q) = (draw(), draw());
        let (a, b) = (jsd(&p, &q).unwrap(), jsd(&q, &p).unwrap());
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&a));
    }

    #[test]
    fn bird_is_monotone_in_outcome_scores(
        weights in prop::collection::vec(0.05f64..1.0, 2..4),
        scores in prop::collection::vec(0.05f64..1.0, 6),
        which in 0usize..3,
        bump in 0.0f64..0.5,
    ) {
        let conditions: Vec<String> = (0..weights.len()).map(|i| format!("c{i}")).collect();
        let trace = BirdTrace {
            id: "t".into(),
            context: "ctx".into(),
            additional_sentence: None,
            factors: vec![BirdFactor { name: "f".into(), conditions: conditions.clone() }],
            outcomes: vec!["o1".into(), "o2".into()],
            gold: None,
        };
        let build = |extra: f64| {
            let mut t = TableScorer::default();
            for (i, c) in conditions.iter().enumerate() {
                t.insert("ctx", c.clone(), weights[i]);
                let o1 = scores[2 * i % scores.len()];
                let o1 = if i == which % conditions.len() { (o1 + extra).min(1.0) } else { o1 };
                t.insert(c.clone(), "o1", o1);
                t.insert(c.clone(), "o2", scores[(2 * i + 1) % scores.len()]);
            }
            t
        };
        let before = score_bird(&trace, &build(0.0)).unwrap();
        let after = score_bird(&trace, &build(bump)).unwrap();
        prop_assert!(after[0] >= before[0] - 1e-12);
        prop_assert!((after.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// The midpoint quantization is W2-closest to the Gaussian among random nearby distributions.
    #[test]
    fn quantization_is_w2_near_optimal(y in 0.0f64..=1.0, s in 0.02f64..0.2, n in prop_oneof![Just(10usize), Just(20)], seed in any::<u64>()) {
        let schema = make_schema(n).unwrap();
        let q = quantize_scalar(y, QuantizeParams::new(s).unwrap(), &schema).unwrap();
        let grid = 4000;
        let quantiles: Vec<f64> = (0..grid).map(|i| gaussian_quantile((i as f64 + 0.5) / grid as f64, y, s)).collect();
        let base = w2_squared(q.probs(), schema.centers(), &quantiles);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let scale: f64 = rng.random_range(0.01..0.2);
            let noise: Vec<f64> = q.probs().iter().map(|p| (p + scale * rng.random::<f64>()).max(0.0)).collect();
            let total: f64 = noise.iter().sum();
            let perturbed: Vec<f64> = noise.iter().map(|v| v / total).collect();
            let other = w2_squared(&perturbed, schema.centers(), &quantiles);
            prop_assert!(base <= other + 1e-9, "base {base} > perturbed {other}");
        }
    }
}

#[test]
fn average_ranks_handle_ties() {
    assert_eq!(
        average_ranks(&[3.0, 1.0, 3.0, 2.0]),
        vec![3.5, 1.0, 3.5, 2.0]
    );
}
