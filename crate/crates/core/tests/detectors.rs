use overlap_core::detectors::{min_detectable_overlap, DetectorConfig, MdoSetting, NoiselessDetector, NoisyDetector};
use overlap_core::reading_channel::{pair_statistics, Channel, PairStats};
use overlap_core::sampler::OverlapPrior;
use overlap_core::seed::trial_rng;
use overlap_core::source_models::{MarkovKernel, Pmf, SourceModel, Symbol};
use proptest::prelude::*;
use rand::Rng;

/// Test-side tie rule: largest score, ties to 0, then shorter, then positive.
fn naive_argmax(scores: &[(i64, f64)]) -> i64 {
    let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .filter(|s| s.1 >= max - 1e-9)
        .map(|s| s.0)
        .min_by_key(|&t| (t != 0, t.abs(), t < 0))
        .unwrap()
}

fn naive_threshold(n: u64, ell: usize, config: &DetectorConfig) -> f64 {
    match config.mu {
        Some(mu) => mu * (n as f64).ln(),
        None if config.positive_only => ((n - ell as u64) as f64).ln(),
        None => ((n - 2 * ell as u64 + 1) as f64).ln(),
    }
}

fn finish(scores: Vec<(i64, f64)>, config: &DetectorConfig) -> i64 {
    let t = naive_argmax(&scores);
    match config.truncation_cutoff {
        Some(c) if t != 0 && (t.unsigned_abs() as usize) < c => 0,
        _ => t,
    }
}

/// Direct evaluation of every hypothesis, quadratic in ℓ.
fn naive_noiseless(r1: &[Symbol], r2: &[Symbol], ln_p: &[f64], n: u64, config: &DetectorConfig) -> i64 {
    let ell = r1.len();
    let mut scores = vec![(0, naive_threshold(n, ell, config))];
    let score = |a: &[Symbol], b: &[Symbol], t: usize| {
        if a[ell - t..] == b[..t] {
            -b[..t].iter().map(|&s| ln_p[s as usize]).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    };
    for t in 1..=ell {
        scores.push((t as i64, score(r1, r2, t)));
        if t < ell && !config.positive_only {
            scores.push((-(t as i64), score(r2, r1, t)));
        }
    }
    finish(scores, config)
}

fn naive_noisy(r1: &[Symbol], r2: &[Symbol], stats: &PairStats<f64>, n: u64, config: &DetectorConfig) -> i64 {
    let ell = r1.len();
    let mut scores = vec![(0, naive_threshold(n, ell, config))];
    let score = |a: &[Symbol], b: &[Symbol], t: usize| {
        (0..t)
            .map(|i| stats.lambda(a[ell - t + i] as usize, b[i] as usize).ln())
            .sum::<f64>()
    };
    for t in 1..=ell {
        scores.push((t as i64, score(r1, r2, t)));
        if t < ell && !config.positive_only {
            scores.push((-(t as i64), score(r2, r1, t)));
        }
    }
    finish(scores, config)
}

fn prior(n: u64, ell: usize, config: &DetectorConfig) -> OverlapPrior {
    if config.positive_only {
        OverlapPrior::one_sided(n, ell).unwrap()
    } else {
        OverlapPrior::new(n, ell).unwrap()
    }
}

#[derive(Clone, Debug)]
struct Case {
    read1: Vec<Symbol>,
    read2: Vec<Symbol>,
    n: u64,
    config: DetectorConfig,
}

/// Random reads over `m` letters; about half share a planted overlap, copied with `flips` noise.
fn case(m: usize, max_ell: usize, flips: f64) -> impl Strategy<Value = Case> {
    (2..=max_ell, any::<u64>(), 0u64..4000, 0u8..6, 0usize..6, any::<bool>()).prop_map(
        move |(ell, seed, extra, mu_pick, cut, one_sided)| {
            let mut rng = trial_rng(seed, &[]);
            let letter = |rng: &mut rand_xoshiro::Xoshiro256PlusPlus| rng.gen_range(0..m) as Symbol;
            let read1: Vec<Symbol> = (0..ell).map(|_| letter(&mut rng)).collect();
            let mut read2: Vec<Symbol> = (0..ell).map(|_| letter(&mut rng)).collect();
            if rng.gen_bool(0.6) {
                let t = rng.gen_range(1..=ell);
                let positive = t == ell || rng.gen_bool(0.5);
                for i in 0..t {
                    let (src, dst) = if positive { (ell - t + i, i) } else { (i, ell - t + i) };
                    let mut s = read1[src];
                    if rng.gen_bool(flips) {
                        s = letter(&mut rng);
                    }
                    read2[dst] = s;
                }
            }
            let config = DetectorConfig {
                mu: match mu_pick {
                    0 => Some(0.5),
                    1 => Some(2.0),
                    _ => None,
                },
                truncation_cutoff: (cut > 0 && cut <= ell).then_some(cut),
                positive_only: one_sided,
            };
            Case {
                read1,
                read2,
                n: 2 * ell as u64 + 1 + extra,
                config,
            }
        },
    )
}

fn check_noiseless(model: &SourceModel<f64>, c: &Case) -> Result<(), TestCaseError> {
    let ell = c.read1.len();
    let mut det = NoiselessDetector::new(model, &prior(c.n, ell, &c.config), c.config).unwrap();
    let fast = det.decide(&c.read1, &c.read2);
    let full = det.decide_full(&c.read1, &c.read2);
    prop_assert_eq!(fast, full.t_hat);
    if model.is_memoryless() {
        let ln_p: Vec<f64> = model.marginal().probs().iter().map(|p| p.ln()).collect();
        prop_assert_eq!(fast, naive_noiseless(&c.read1, &c.read2, &ln_p, c.n, &c.config));
    }
    Ok(())
}

fn check_noisy(stats: &PairStats<f64>, c: &Case) -> Result<(), TestCaseError> {
    let ell = c.read1.len();
    let mut det = NoisyDetector::new(stats, &prior(c.n, ell, &c.config), c.config).unwrap();
    let fast = det.decide(&c.read1, &c.read2);
    prop_assert_eq!(fast, det.decide_full(&c.read1, &c.read2).t_hat);
    prop_assert_eq!(fast, naive_noisy(&c.read1, &c.read2, stats, c.n, &c.config));
    Ok(())
}

fn stats(source: Vec<f64>, rows: Vec<Vec<f64>>) -> PairStats<f64> {
    pair_statistics(&Pmf::new(source).unwrap(), &Channel::new(rows).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn noiseless_uniform_matches_naive(c in case(2, 150, 0.0)) {
        check_noiseless(&SourceModel::uniform(2), &c)?;
    }

    #[test]
    fn noiseless_skewed_matches_naive(c in case(3, 90, 0.0)) {
        let model = SourceModel::memoryless(Pmf::new(vec![0.6, 0.3, 0.1]).unwrap());
        check_noiseless(&model, &c)?;
    }

    #[test]
    fn noiseless_markov_fast_matches_full(c in case(2, 90, 0.0)) {
        let model = SourceModel::markov(MarkovKernel::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap());
        check_noiseless(&model, &c)?;
    }

    #[test]
    fn binary_noisy_matches_naive(c in case(2, 200, 0.1), eps in 0.02f64..0.3) {
        check_noisy(&stats(vec![0.5, 0.5], vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]]), &c)?;
    }

    #[test]
    fn skewed_binary_noisy_matches_naive(c in case(2, 140, 0.15)) {
        check_noisy(&stats(vec![0.7, 0.3], vec![vec![0.85, 0.15], vec![0.25, 0.75]]), &c)?;
    }

    #[test]
    fn ternary_noisy_matches_naive(c in case(3, 140, 0.1)) {
        let rows = vec![vec![0.9, 0.05, 0.05], vec![0.1, 0.8, 0.1], vec![0.05, 0.15, 0.8]];
        check_noisy(&stats(vec![0.4, 0.35, 0.25], rows), &c)?;
    }

    #[test]
    fn excluded_pairs_match_naive(c in case(3, 140, 0.05)) {
        let rows = vec![vec![0.8, 0.0, 0.2], vec![0.0, 0.8, 0.2]];
        check_noisy(&stats(vec![0.5, 0.5], rows), &c)?;
    }

    #[test]
    fn relabeling_a_symmetric_model_keeps_the_decision(c in case(2, 120, 0.1)) {
        let flip = |r: &[Symbol]| r.iter().map(|&s| 1 - s).collect::<Vec<_>>();
        let ell = c.read1.len();
        let p = prior(c.n, ell, &c.config);
        let mut noiseless = NoiselessDetector::new(&SourceModel::<f64>::uniform(2), &p, c.config).unwrap();
        prop_assert_eq!(
            noiseless.decide(&c.read1, &c.read2),
            noiseless.decide(&flip(&c.read1), &flip(&c.read2))
        );
        let bsc = pair_statistics(&Pmf::uniform(2), &Channel::bsc(0.1).unwrap()).unwrap();
        let mut noisy = NoisyDetector::new(&bsc, &p, c.config).unwrap();
        prop_assert_eq!(noisy.decide(&c.read1, &c.read2), noisy.decide(&flip(&c.read1), &flip(&c.read2)));
    }

    #[test]
    fn matching_prefix_scores_never_decrease(c in case(2, 100, 0.0)) {
        let model = SourceModel::memoryless(Pmf::new(vec![0.7, 0.3]).unwrap());
        let ell = c.read1.len();
        let config = DetectorConfig::default();
        let mut det = NoiselessDetector::new(&model, &prior(c.n, ell, &config), config).unwrap();
        let scores = det.decide_full(&c.read1, &c.read2).scores.unwrap();
        let finite: Vec<f64> = scores.positive.iter().copied().filter(|s: &f64| s.is_finite()).collect();
        prop_assert!(finite.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn short_overlaps_are_never_reported(c in case(2, 120, 0.05)) {
        let ell = c.read1.len();
        let config = DetectorConfig { truncation_cutoff: None, ..c.config };
        let p = prior(c.n, ell, &config);
        let model = SourceModel::memoryless(Pmf::new(vec![0.75, 0.25]).unwrap());
        let mdo = min_detectable_overlap(MdoSetting::Noiseless(&model), c.n, ell, config.mu).unwrap();
        if !config.positive_only {
            let t = NoiselessDetector::new(&model, &p, config).unwrap().decide(&c.read1, &c.read2);
            prop_assert!(t == 0 || !mdo.covers(t), "t = {t}, mdo = {mdo:?}");
        }
        let bsc = pair_statistics(&Pmf::uniform(2), &Channel::bsc(0.1).unwrap()).unwrap();
        let mdo = min_detectable_overlap::<f64>(MdoSetting::Noisy { lambda_max: bsc.lambda_max() }, c.n, ell, config.mu).unwrap();
        if !config.positive_only {
            let t = NoisyDetector::new(&bsc, &p, config).unwrap().decide(&c.read1, &c.read2);
            prop_assert!(t == 0 || !mdo.covers(t), "t = {t}, mdo = {mdo:?}");
        }
    }
}

#[test]
fn worked_noiseless_instance() {
    let model = SourceModel::<f64>::uniform(2);
    let config = DetectorConfig::default();
    let mut det = NoiselessDetector::new(&model, &OverlapPrior::new(8, 4).unwrap(), config).unwrap();
    let full = det.decide_full(&[0, 1, 0, 1], &[0, 1, 0, 1]);
    assert_eq!(full.t_hat, 4);
    let s = full.scores.unwrap();
    assert!((s.score(4) - 16f64.ln()).abs() < 1e-12);
    assert!((s.score(-2) - 4f64.ln()).abs() < 1e-12);
    assert_eq!(s.score(0), 0.0);
}

#[test]
fn uninformative_channel_never_detects() {
    let half = pair_statistics(&Pmf::uniform(2), &Channel::bsc(0.5).unwrap()).unwrap();
    let mut det = NoisyDetector::new(&half, &OverlapPrior::new(1000, 40).unwrap(), DetectorConfig::default()).unwrap();
    let mut rng = trial_rng(3, &[]);
    for _ in 0..1000 {
        let r1: Vec<Symbol> = (0..40).map(|_| rng.gen_range(0..2)).collect();
        assert_eq!(det.decide(&r1, &r1), 0);
    }
}

#[test]
fn mdo_closed_forms() {
    let uniform = SourceModel::<f64>::uniform(2);
    // n_ℓ = n - 2ℓ + 1 = 1000.
    let mdo = min_detectable_overlap(MdoSetting::Noiseless(&uniform), 1019, 10, None).unwrap();
    assert_eq!(mdo.value(), Some(1000f64.log2().floor()));
    let n = (1u64 << 20) + 2 * 30 - 1;
    let ident = min_detectable_overlap::<f64>(MdoSetting::Noisy { lambda_max: 2.0 }, n, 30, None).unwrap();
    assert!((ident.value().unwrap() - 20.0).abs() < 1e-9);
    let bsc = min_detectable_overlap::<f64>(MdoSetting::Noisy { lambda_max: 1.64 }, n, 30, None).unwrap();
    assert!((bsc.value().unwrap() - 20.0 / 1.64f64.log2()).abs() < 1e-9);
    assert!((bsc.value().unwrap() - 28.02).abs() < 0.01);
}
