use std::collections::HashSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use texrel::metrics::{
    cluster_precision_recall, edit_distance, lexicon_size, spearman, topographic_similarity,
    tre_fit, LanguageSample, TreConfig, Utterance,
};
use texrel::oracle::{Codebook, HolisticTable, OracleLanguage};
use texrel::scene::{meaning_distance, AttributeTuple, Hypothesis, ObjectSpec, TaskType};

/// Textbook two-row Wagner-Fischer.
fn levenshtein_oracle(a: &[u32], b: &[u32]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + (x != y) as usize)
                .min(prev[j + 1] + 1)
                .min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Counts every unordered pair explicitly.
fn cluster_oracle(s: &LanguageSample) -> (Option<f64>, Option<f64>) {
    let p = s.pairs();
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            match (p[i].1 == p[j].1, p[i].0 == p[j].0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
    }
    let r = |d: u64| (d > 0).then(|| tp as f64 / d as f64);
    (r(tp + fp), r(tp + fneg))
}

fn utt(tokens: Vec<u32>) -> Utterance {
    Utterance::new(tokens, 21).unwrap()
}

fn col(v: u8) -> AttributeTuple {
    AttributeTuple {
        task: TaskType::Col,
        values: vec![v],
    }
}

fn texcol2(a: (u8, u8), b: (u8, u8)) -> Hypothesis {
    Hypothesis::TextureColors(vec![ObjectSpec::new(a.0, a.1), ObjectSpec::new(b.0, b.1)])
        .canonical()
}

fn all_texcol2() -> Vec<Hypothesis> {
    let items: Vec<(u8, u8)> = (0..9).flat_map(|c| (0..9).map(move |t| (c, t))).collect();
    let mut out = Vec::new();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            out.push(texcol2(items[i], items[j]));
        }
    }
    out
}

fn sample_of(hs: &[Hypothesis], lang: &OracleLanguage) -> LanguageSample {
    LanguageSample::new(
        hs.iter()
            .map(|h| (h.tuple(), lang.encode(h).unwrap()))
            .collect(),
    )
    .unwrap()
}

fn tokens(max_len: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..21, 0..=max_len)
}

/// Small Col1 language: meanings from 0..4, tokens over a small alphabet.
fn small_language() -> impl Strategy<Value = Vec<(u8, Vec<u32>)>> {
    prop::collection::vec((0u8..4, prop::collection::vec(0u32..4, 3)), 2..24)
}

fn to_sample(pairs: &[(u8, Vec<u32>)]) -> LanguageSample {
    LanguageSample::new(
        pairs
            .iter()
            .map(|(m, u)| (col(*m), utt(u.clone())))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn edit_distance_matches_oracle(a in tokens(12), b in tokens(12)) {
        let (ua, ub) = (utt(a.clone()), utt(b.clone()));
        prop_assert_eq!(edit_distance(&ua, &ub), levenshtein_oracle(&a, &b));
        prop_assert_eq!(edit_distance(&ua, &ub), edit_distance(&ub, &ua));
        prop_assert_eq!(edit_distance(&ua, &ub) == 0, a == b);
    }

    #[test]
    fn edit_distance_triangle(a in tokens(8), b in tokens(8), c in tokens(8)) {
        let (a, b, c) = (utt(a), utt(b), utt(c));
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
    }

    #[test]
    fn spearman_is_rank_based(xs in prop::collection::vec(-50i32..50, 2..40), seed in any::<u64>()) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ys = xs.clone();
        ys.shuffle(&mut rng);
        let r = spearman(&xs, &ys);
        let defined = xs.iter().any(|&x| x != xs[0]);
        prop_assert_eq!(r.is_some(), defined);
        if let Some(r) = r {
            prop_assert!((-1.0..=1.0).contains(&r));
            // Strictly increasing transforms leave ranks alone.
            let cubed: Vec<f64> = xs.iter().map(|x| x * x * x + 7.0).collect();
            prop_assert_eq!(spearman(&cubed, &ys), Some(r));
            prop_assert_eq!(spearman(&xs, &xs), Some(1.0));
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            prop_assert_eq!(spearman(&xs, &neg), Some(-1.0));
            prop_assert!((spearman(&ys, &xs).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_ignores_token_relabeling(pairs in small_language(), seed in any::<u64>()) {
        let mut perm: Vec<u32> = (0..21).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let relabeled: Vec<(u8, Vec<u32>)> = pairs
            .iter()
            .map(|(m, u)| (*m, u.iter().map(|&t| perm[t as usize]).collect()))
            .collect();
        prop_assert_eq!(
            topographic_similarity(&to_sample(&pairs)).unwrap(),
            topographic_similarity(&to_sample(&relabeled)).unwrap()
        );
    }

    #[test]
    fn clusters_match_pair_enumeration(pairs in small_language(), seed in any::<u64>()) {
        let s = to_sample(&pairs);
        prop_assert_eq!(cluster_precision_recall(&s), cluster_oracle(&s));
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(cluster_precision_recall(&to_sample(&shuffled)), cluster_precision_recall(&s));
        let (p, r) = cluster_precision_recall(&s);
        for v in [p, r].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn perfect_clusters_iff_bijection(pairs in small_language()) {
        let s = to_sample(&pairs);
        let mut fwd = std::collections::HashMap::new();
        let mut inv = std::collections::HashMap::new();
        let mut bijective = true;
        for (m, u) in &pairs {
            bijective &= *fwd.entry(*m).or_insert(u.clone()) == *u;
            bijective &= *inv.entry(u.clone()).or_insert(*m) == *m;
        }
        let (p, r) = cluster_precision_recall(&s);
        // Perfect means no false pair on either side.
        let perfect = p.unwrap_or(1.0) == 1.0 && r.unwrap_or(1.0) == 1.0;
        prop_assert_eq!(perfect, bijective);
        let distinct: HashSet<_> = pairs.iter().map(|(_, u)| u).collect();
        prop_assert_eq!(lexicon_size(&s), distinct.len());
    }

    #[test]
    fn tre_curves_never_rise(pairs in small_language(), sub in any::<bool>()) {
        let cfg = if sub { TreConfig::subgradient() } else { TreConfig::default() };
        let fit = tre_fit(&to_sample(&pairs), &cfg).unwrap();
        prop_assert!(fit.curve.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        prop_assert!(fit.tre >= 0.0);
        prop_assert!(fit.curve.len() <= cfg.max_steps + 1);
    }
}

#[test]
fn compositional_texcol2_is_perfectly_topographic() {
    let mut hs = all_texcol2();
    hs.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    hs.truncate(300);
    let lang = OracleLanguage::Compositional(Codebook::new(9, 9, 21, 10).unwrap());
    let s = sample_of(&hs, &lang);
    // Levenshtein and Hamming coincide on this code.
    for (i, (mi, ui)) in s.pairs().iter().enumerate() {
        for (mj, uj) in &s.pairs()[i + 1..] {
            assert_eq!(
                edit_distance(ui, uj) as u32,
                meaning_distance(mi, mj).unwrap()
            );
        }
    }
    assert_eq!(topographic_similarity(&s).unwrap(), Some(1.0));
}

#[test]
fn holistic_language_is_not_topographic() {
    let mut hs = all_texcol2();
    hs.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    hs.truncate(500);
    let table = HolisticTable::new(hs.iter().map(Hypothesis::tuple), 7, 21, 10).unwrap();
    let s = sample_of(&hs, &OracleLanguage::Holistic(table));
    let rho = topographic_similarity(&s).unwrap().unwrap();
    assert!(rho.abs() < 0.1, "{rho}");
}

#[test]
fn constant_language_has_no_rho() {
    let pairs = (0..6).map(|i| (col(i % 3), utt(vec![4; 10]))).collect();
    let s = LanguageSample::new(pairs).unwrap();
    assert_eq!(topographic_similarity(&s).unwrap(), None);
    assert_eq!(lexicon_size(&s), 1);
}

#[test]
fn rho_boundary_with_three_values() {
    // Distinct, equidistant utterances reused consistently.
    let code = |m: u8| vec![m as u32; 3];
    let pairs: Vec<_> = [0, 1, 2, 0, 1, 2, 2]
        .iter()
        .map(|&m| (col(m), utt(code(m))))
        .collect();
    let s = LanguageSample::new(pairs.clone()).unwrap();
    assert_eq!(topographic_similarity(&s).unwrap(), Some(1.0));
    // Same meanings, but value 2's word now sits closer to value 0's.
    let skewed = |m: u8| match m {
        2 => vec![0, 0, 2],
        _ => code(m),
    };
    let pairs: Vec<_> = pairs
        .iter()
        .map(|(m, _)| (m.clone(), utt(skewed(m.values[0]))))
        .collect();
    let rho = topographic_similarity(&LanguageSample::new(pairs).unwrap())
        .unwrap()
        .unwrap();
    assert!(rho < 1.0, "{rho}");
}
