use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tec_core::corruption::*;

const SENTENCES: [&str; 5] = [
    "the quick brown fox jumps over the lazy dog",
    "a small house near the old tree",
    "she sells sea shells by the sea shore",
    "numbers like 3.14 and 2,718 stay numbers",
    "short",
];

fn bitext(n: usize) -> Vec<(String, String)> {
    (0..n)
        .map(|i| (format!("quelle {i}"), SENTENCES[i % SENTENCES.len()].to_owned()))
        .collect()
}

/// Mean of max(0, N(mu, sigma)) by Simpson integration of x·pdf(x) over
/// [0, mu + 12 sigma].
fn clipped_mean_numeric(mu: f64, sigma: f64) -> f64 {
    let pdf = |x: f64| (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let b = mu + 12.0 * sigma;
    let n = 100_000;
    let h = b / n as f64;
    let f = |x: f64| x * pdf(x);
    let mut s = f(0.0) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn analytic_mean_agrees_with_integration() {
    for (mu, sigma) in [(0.01, 0.04), (0.0, 1.0), (-0.05, 0.02), (0.3, 0.1)] {
        let a = clipped_normal_mean(mu, sigma);
        let b = clipped_mean_numeric(mu, sigma);
        assert!((a - b).abs() < 1e-9, "mu {mu} sigma {sigma}: {a} vs {b}");
    }
}

#[test]
fn per_unit_event_rate_matches_sampled_rate() {
    let cfg = CorruptionConfig { mu: 0.02, sigma: 1e-9, seed: 9, ..CorruptionConfig::default() };
    let (_, trace) = make_synthetic_triples_traced(&bitext(100_000), &cfg, SyntheticMode::Tec).unwrap();
    let char_rate = trace.char_events as f64 / trace.chars_visited as f64;
    let word_rate = trace.word_events as f64 / trace.words_visited as f64;
    // Millions of character visits and hundreds of thousands of words.
    assert!((char_rate - 0.02).abs() < 0.001, "char rate {char_rate}");
    assert!((word_rate - 0.02).abs() < 0.002, "word rate {word_rate}");
}

#[test]
fn same_seed_same_corpus() {
    let data = bitext(500);
    let cfg = CorruptionConfig { mu: 0.1, sigma: 0.05, seed: 4, ..CorruptionConfig::default() };
    let a = make_synthetic_triples(&data, &cfg, SyntheticMode::Tec).unwrap();
    let b = make_synthetic_triples(&data, &cfg, SyntheticMode::Tec).unwrap();
    assert_eq!(a, b);
    let c = make_synthetic_triples(&data, &CorruptionConfig { seed: 5, ..cfg }, SyntheticMode::Tec).unwrap();
    assert_ne!(a, c);
}

#[test]
fn prefix_of_corpus_gets_the_same_drafts() {
    let data = bitext(200);
    let cfg = CorruptionConfig { mu: 0.1, sigma: 0.05, seed: 1, ..CorruptionConfig::default() };
    let full = make_synthetic_triples(&data, &cfg, SyntheticMode::Tec).unwrap();
    let part = make_synthetic_triples(&data[..50], &cfg, SyntheticMode::Tec).unwrap();
    assert_eq!(&full[..50], &part[..]);
}

#[test]
fn gec_mode_keeps_drafts_and_drops_source() {
    let data = bitext(50);
    let cfg = CorruptionConfig { mu: 0.1, sigma: 0.05, seed: 2, ..CorruptionConfig::default() };
    let tec = make_synthetic_triples(&data, &cfg, SyntheticMode::Tec).unwrap();
    let gec = make_synthetic_triples(&data, &cfg, SyntheticMode::Gec).unwrap();
    for (a, b) in tec.iter().zip(&gec) {
        assert!(b.source.is_empty());
        assert_eq!(a.original, b.original);
        assert_eq!(a.corrected, b.corrected);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let data = bitext(3);
    for cfg in [
        CorruptionConfig { sigma: 0.0, ..CorruptionConfig::default() },
        CorruptionConfig { mu: f64::NAN, ..CorruptionConfig::default() },
        CorruptionConfig { ops: Default::default(), ..CorruptionConfig::default() },
    ] {
        assert!(make_synthetic_triples(&data, &cfg, SyntheticMode::Tec).is_err());
    }
}

proptest! {
    #[test]
    fn sampled_rates_are_probabilities(mu in -1.0f64..2.0, sigma in 1e-6f64..1.0, seed: u64) {
        let cfg = CorruptionConfig { mu, sigma, ..CorruptionConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let p = sample_corruption_rate(&cfg, &mut rng);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn zero_rate_is_identity(text in "[a-z ]{0,40}", seed: u64) {
        let cfg = CorruptionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (out, trace) = corrupt_sentence_traced(&text, 0.0, &cfg.ops, &cfg.levels, &mut rng);
        prop_assert_eq!(out, text);
        prop_assert_eq!(trace.char_events + trace.word_events, 0);
    }

    #[test]
    fn repetition_only_never_loses_characters(text in "[a-z]{1,8}( [a-z]{1,8}){0,5}", seed: u64) {
        let ops = [PerturbOp::Repetition].into_iter().collect();
        let levels = [Level::Character].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (out, trace) = corrupt_sentence_traced(&text, 0.5, &ops, &levels, &mut rng);
        prop_assert_eq!(out.chars().count(), text.chars().count() + trace.char_events);
    }
}
