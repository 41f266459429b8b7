//! Emergent-language metrics: topographic similarity, cluster precision and
//! recall, lexicon size, TRE and pTRE.

use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::scene::{meaning_distance, AttributeTuple};

pub const DEFAULT_VOCAB: u32 = 21;
pub const DEFAULT_LENGTH: usize = 10;

/// Fixed-length token sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Utterance {
    pub tokens: Vec<u32>,
    pub vocab_size: u32,
}

impl Utterance {
    pub fn new(tokens: Vec<u32>, vocab_size: u32) -> Result<Self> {
        if let Some(&t) = tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(Error::IdOutOfRange {
                kind: "token",
                id: t as usize,
                size: vocab_size as usize,
            });
        }
        Ok(Utterance { tokens, vocab_size })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token histogram of length `vocab_size`.
    pub fn counts(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.vocab_size as usize];
        for &t in &self.tokens {
            c[t as usize] += 1.0;
        }
        c
    }
}

/// Meanings paired with the utterances a language produced for them.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageSample {
    pairs: Vec<(AttributeTuple, Utterance)>,
}

impl LanguageSample {
    pub fn new(pairs: Vec<(AttributeTuple, Utterance)>) -> Result<Self> {
        let Some((m0, u0)) = pairs.first() else {
            return Err(Error::Config("language sample is empty".into()));
        };
        for (m, u) in &pairs {
            if m.task != m0.task || m.len() != m0.len() {
                return Err(Error::TaskMismatch(format!("{m} vs {m0}")));
            }
            if u.vocab_size != u0.vocab_size || u.len() != u0.len() {
                return Err(Error::Config(
                    "utterances must share vocabulary and length".into(),
                ));
            }
        }
        Ok(LanguageSample { pairs })
    }

    pub fn pairs(&self) -> &[(AttributeTuple, Utterance)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Levenshtein distance with unit costs.
pub fn edit_distance(a: &Utterance, b: &Utterance) -> usize {
    strsim::generic_levenshtein(&a.tokens, &b.tokens)
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank ties.
///
/// `None` when lengths differ, fewer than two points are given, or either
/// list is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    if rx == ry {
        return Some(1.0);
    }
    if rx.iter().zip(&ry).all(|(a, b)| a + b == n + 1.0) {
        return Some(-1.0);
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Meaning and utterance distances over every unordered pair, in
/// lexicographic pair order.
pub fn pairwise_distances(sample: &LanguageSample) -> Result<(Vec<f64>, Vec<f64>)> {
    let pairs = &sample.pairs;
    let rows = par::try_map_indices(pairs.len(), |i| {
        let (mi, ui) = &pairs[i];
        let mut md = Vec::with_capacity(pairs.len() - i - 1);
        let mut ud = Vec::with_capacity(pairs.len() - i - 1);
        for (mj, uj) in &pairs[i + 1..] {
            md.push(meaning_distance(mi, mj)? as f64);
            ud.push(edit_distance(ui, uj) as f64);
        }
        Ok((md, ud))
    })?;
    let (mut md, mut ud) = (Vec::new(), Vec::new());
    for (m, u) in rows {
        md.extend(m);
        ud.extend(u);
    }
    Ok((md, ud))
}

/// Topographic similarity ρ. `None` when either distance list is constant.
pub fn topographic_similarity(sample: &LanguageSample) -> Result<Option<f64>> {
    let (md, ud) = pairwise_distances(sample)?;
    Ok(spearman(&md, &ud))
}

fn pairs_within<K: std::hash::Hash + Eq>(keys: impl Iterator<Item = K>) -> u64 {
    let mut groups: HashMap<K, u64> = HashMap::new();
    for k in keys {
        *groups.entry(k).or_default() += 1;
    }
    groups
        .values()
        .map(|&k| k * (k.saturating_sub(1)) / 2)
        .sum()
}

/// Cluster precision `tp/(tp+fp)` and recall `tp/(tp+fn)` over unordered
/// pairs, where a pair is predicted together when the utterances match and
/// truly together when the meanings match. An empty denominator yields `None`.
pub fn cluster_precision_recall(sample: &LanguageSample) -> (Option<f64>, Option<f64>) {
    let p = &sample.pairs;
    let tp = pairs_within(p.iter().map(|(m, u)| (m, u)));
    let predicted = pairs_within(p.iter().map(|(_, u)| u));
    let actual = pairs_within(p.iter().map(|(m, _)| m));
    let ratio = |d: u64| (d > 0).then(|| tp as f64 / d as f64);
    (ratio(predicted), ratio(actual))
}

pub fn lexicon_size(sample: &LanguageSample) -> usize {
    sample
        .pairs
        .iter()
        .map(|(_, u)| &u.tokens)
        .collect::<HashSet<_>>()
        .len()
}

/// How [`tre_fit`] minimizes the L1 reconstruction loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreOptimizer {
    /// Iteratively reweighted least squares: each step solves the weighted
    /// least-squares majorizer of the L1 loss.
    Irls,
    /// Full-batch subgradient steps of size `learning_rate`, halved per
    /// dimension whenever a step would raise the loss.
    Subgradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreConfig {
    pub optimizer: TreOptimizer,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub epsilon: f64,
}

impl Default for TreConfig {
    fn default() -> Self {
        TreConfig {
            optimizer: TreOptimizer::Irls,
            learning_rate: 0.1,
            max_steps: 3000,
            epsilon: 1e-6,
        }
    }
}

impl TreConfig {
    pub fn subgradient() -> Self {
        TreConfig {
            optimizer: TreOptimizer::Subgradient,
            ..TreConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.max_steps == 0 {
            return Err(Error::Config(
                "TRE needs a positive learning rate and step count".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreFit {
    /// Final mean L1 residual.
    pub tre: f64,
    /// Loss at initialization and after every step.
    pub curve: Vec<f64>,
    /// Learned vector per primitive symbol.
    pub embeddings: BTreeMap<String, Vec<f64>>,
}

/// Meanings as sparse symbol multiplicities plus utterance count vectors.
struct Problem {
    names: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
    targets: Vec<Vec<f64>>,
}

impl Problem {
    fn new(sample: &LanguageSample) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut rows = Vec::with_capacity(sample.len());
        let mut targets = Vec::with_capacity(sample.len());
        for (m, u) in &sample.pairs {
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            for s in m.to_hypothesis()?.symbols() {
                let next = names.len();
                let id = *index.entry(s.clone()).or_insert_with(|| {
                    names.push(s);
                    next
                });
                *row.entry(id).or_default() += 1.0;
            }
            rows.push(row.into_iter().collect());
            targets.push(u.counts());
        }
        Ok(Problem {
            names,
            rows,
            targets,
        })
    }

    fn residual(&self, i: usize, e: &[f64], d: usize) -> f64 {
        self.rows[i].iter().map(|&(s, a)| a * e[s]).sum::<f64>() - self.targets[i][d]
    }

    /// Mean absolute residual of one vocabulary dimension.
    fn loss(&self, e: &[f64], d: usize) -> f64 {
        (0..self.rows.len())
            .map(|i| self.residual(i, e, d).abs())
            .sum::<f64>()
            / self.rows.len() as f64
    }

    fn subgradient_step(&self, e: &[f64], d: usize, lr: f64) -> Option<Vec<f64>> {
        let n = self.rows.len() as f64;
        let mut grad = vec![0.0; e.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let r = self.residual(i, e, d);
            if r != 0.0 {
                for &(s, a) in row {
                    grad[s] += a * r.signum() / n;
                }
            }
        }
        if grad.iter().all(|&g| g == 0.0) {
            return None;
        }
        Some(e.iter().zip(&grad).map(|(w, g)| w - lr * g).collect())
    }

    /// Minimizes `sum_i r_i^2 / max(|r_i|, floor) + damping * |x - e|^2`,
    /// which majorizes the L1 loss around `e` up to the damping term.
    fn irls_step(&self, e: &[f64], d: usize, damping: f64) -> Option<Vec<f64>> {
        const FLOOR: f64 = 1e-10;
        let k = e.len();
        let mut ata = DMatrix::<f64>::zeros(k, k);
        let mut atb = DVector::<f64>::zeros(k);
        for (i, row) in self.rows.iter().enumerate() {
            let w = 1.0 / self.residual(i, e, d).abs().max(FLOOR);
            let t = self.targets[i][d];
            for &(s, a) in row {
                atb[s] += w * a * t;
                for &(q, b) in row {
                    ata[(s, q)] += w * a * b;
                }
            }
        }
        let scale = ata.diagonal().max().max(1.0);
        for s in 0..k {
            ata[(s, s)] += damping * scale;
            atb[s] += damping * scale * e[s];
        }
        let x = ata.cholesky()?.solve(&atb);
        x.iter()
            .all(|v| v.is_finite())
            .then(|| x.iter().copied().collect())
    }
}

const CONVERGED: f64 = 1e-12;

/// Fits one vector per primitive symbol so that the sum over a meaning's
/// symbols reconstructs the utterance's token counts, scoring the mean L1
/// residual.
///
/// The loss separates across vocabulary dimensions and each dimension is
/// optimized on its own from zero. A step that would raise a dimension's loss
/// is rejected and that dimension becomes more cautious (smaller step or more
/// damping), so the recorded curve never increases. Fitting stops after
/// `max_steps`, when the loss drops below 1e-12, or when a step with no
/// rejections improves it by less than `epsilon`.
pub fn tre_fit(sample: &LanguageSample, cfg: &TreConfig) -> Result<TreFit> {
    cfg.validate()?;
    let p = Problem::new(sample)?;
    let vocab = p.targets[0].len();
    let syms = p.names.len();

    // emb[d][s]: dimension d of symbol s.
    let mut emb = vec![vec![0.0f64; syms]; vocab];
    let mut losses: Vec<f64> = (0..vocab).map(|d| p.loss(&emb[d], d)).collect();
    let mut curve = vec![losses.iter().sum::<f64>()];
    let mut knob = vec![
        match cfg.optimizer {
            TreOptimizer::Irls => 1e-9,
            TreOptimizer::Subgradient => cfg.learning_rate,
        };
        vocab
    ];
    let mut done = vec![false; vocab];

    for _ in 0..cfg.max_steps {
        let before = *curve.last().unwrap();
        if before < CONVERGED || done.iter().all(|&x| x) {
            break;
        }
        let mut rejected = false;
        for d in 0..vocab {
            if done[d] || losses[d] < CONVERGED {
                done[d] = true;
                continue;
            }
            let trial = match cfg.optimizer {
                TreOptimizer::Irls => p.irls_step(&emb[d], d, knob[d]),
                TreOptimizer::Subgradient => p.subgradient_step(&emb[d], d, knob[d]),
            };
            let Some(trial) = trial else {
                done[d] = true;
                continue;
            };
            let l = p.loss(&trial, d);
            let accepted = l <= losses[d];
            if accepted {
                emb[d] = trial;
                losses[d] = l;
            } else {
                rejected = true;
            }
            match (cfg.optimizer, accepted) {
                (TreOptimizer::Irls, true) => knob[d] = (knob[d] * 0.1).max(1e-12),
                (TreOptimizer::Irls, false) => {
                    knob[d] *= 10.0;
                    done[d] = knob[d] > 1e6;
                }
                (TreOptimizer::Subgradient, true) => {
                    knob[d] = (knob[d] * 1.5).min(cfg.learning_rate)
                }
                (TreOptimizer::Subgradient, false) => {
                    knob[d] *= 0.5;
                    done[d] = knob[d] < cfg.learning_rate * 1e-12;
                }
            }
        }
        let after: f64 = losses.iter().sum();
        curve.push(after.min(before));
        if before - after < cfg.epsilon && !rejected {
            break;
        }
    }

    let embeddings = p
        .names
        .into_iter()
        .enumerate()
        .map(|(s, name)| (name, emb.iter().map(|col| col[s]).collect()))
        .collect();
    Ok(TreFit {
        tre: *curve.last().unwrap(),
        curve,
        embeddings,
    })
}

/// TRE divided by cluster precision. `None` when precision is missing or not
/// in `(0, 1]`.
pub fn ptre(tre: f64, precision: Option<f64>) -> Option<f64> {
    precision.filter(|&p| p > 0.0 && p <= 1.0).map(|p| tre / p)
}

/// Accuracy gap between seen-item and held-out-item evaluation.
pub fn generalization_error(acc_same: f64, acc_new: f64) -> f64 {
    acc_same - acc_new
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rho: Option<f64>,
    pub rho_defined: bool,
    pub precision: Option<f64>,
    pub precision_defined: bool,
    pub recall: Option<f64>,
    pub recall_defined: bool,
    pub lexicon_size: usize,
    pub tre: f64,
    pub ptre: Option<f64>,
    pub ptre_defined: bool,
    pub generalization_error: Option<f64>,
    pub generalization_error_defined: bool,
    pub sample_size: usize,
}

impl MetricsReport {
    /// All metrics of `sample`. The generalization error needs the two
    /// accuracies, which come from a referential evaluation.
    pub fn compute(
        sample: &LanguageSample,
        tre: &TreConfig,
        accuracies: Option<(f64, f64)>,
    ) -> Result<Self> {
        let rho = topographic_similarity(sample)?;
        let (precision, recall) = cluster_precision_recall(sample);
        let tre = tre_fit(sample, tre)?.tre;
        let ptre = ptre(tre, precision);
        let gen = accuracies.map(|(s, n)| generalization_error(s, n));
        Ok(MetricsReport {
            rho,
            rho_defined: rho.is_some(),
            precision,
            precision_defined: precision.is_some(),
            recall,
            recall_defined: recall.is_some(),
            lexicon_size: lexicon_size(sample),
            tre,
            ptre,
            ptre_defined: ptre.is_some(),
            generalization_error: gen,
            generalization_error_defined: gen.is_some(),
            sample_size: sample.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
