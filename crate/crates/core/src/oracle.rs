//! Symbolic reference languages and a symbolic receiver.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::dataset::DatasetFile;
use crate::error::{Error, Result};
use crate::metrics::{LanguageSample, Utterance, DEFAULT_LENGTH, DEFAULT_VOCAB};
use crate::par;
use crate::sampler::{derive_seed, evaluate_scene, RngStream, SplitKind};
use crate::scene::{AttributeTuple, Hypothesis, Preposition, TaskType};

/// Token layout: colors, then textures, then prepositions, then pad.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codebook {
    num_colors: u32,
    num_textures: u32,
    vocab_size: u32,
    length: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Color,
    Texture,
    Prep,
}

const REL_KINDS: [Kind; 5] = [
    Kind::Color,
    Kind::Texture,
    Kind::Prep,
    Kind::Color,
    Kind::Texture,
];

impl Codebook {
    pub fn new(num_colors: u8, num_textures: u8, vocab_size: u32, length: usize) -> Result<Self> {
        let needed = num_colors as u32 + num_textures as u32 + Preposition::ALL.len() as u32 + 1;
        if needed > vocab_size {
            return Err(Error::Config(format!(
                "{num_colors} colors and {num_textures} textures need {needed} tokens, vocabulary has {vocab_size}"
            )));
        }
        Ok(Codebook {
            num_colors: num_colors as u32,
            num_textures: num_textures as u32,
            vocab_size,
            length,
        })
    }

    /// Codebook for a dataset with the default vocabulary and length.
    pub fn for_dataset(ds: &DatasetFile) -> Result<Self> {
        let t = &ds.config().task;
        Codebook::new(t.num_colors, t.num_textures, DEFAULT_VOCAB, DEFAULT_LENGTH)
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn pad(&self) -> u32 {
        self.num_colors + self.num_textures + Preposition::ALL.len() as u32
    }

    fn kinds(task: TaskType, len: usize) -> Vec<Kind> {
        (0..len)
            .map(|i| match task {
                TaskType::Col => Kind::Color,
                TaskType::Tex => Kind::Texture,
                TaskType::TexCol if i % 2 == 0 => Kind::Color,
                TaskType::TexCol => Kind::Texture,
                TaskType::Rel => REL_KINDS[i % REL_KINDS.len()],
            })
            .collect()
    }

    fn kind_size(&self, kind: Kind) -> u32 {
        match kind {
            Kind::Color => self.num_colors,
            Kind::Texture => self.num_textures,
            Kind::Prep => Preposition::ALL.len() as u32,
        }
    }

    fn kind_offset(&self, kind: Kind) -> u32 {
        match kind {
            Kind::Color => 0,
            Kind::Texture => self.num_colors,
            Kind::Prep => self.num_colors + self.num_textures,
        }
    }

    fn token(&self, kind: Kind, value: u8) -> Result<u32> {
        let size = self.kind_size(kind);
        if value as u32 >= size {
            return Err(Error::Encode(format!(
                "{kind:?} value {value} is outside the codebook ({size})"
            )));
        }
        Ok(self.kind_offset(kind) + value as u32)
    }

    fn kind_of(&self, token: u32) -> Option<(Kind, u8)> {
        [Kind::Color, Kind::Texture, Kind::Prep]
            .into_iter()
            .find(|&k| {
                (self.kind_offset(k)..self.kind_offset(k) + self.kind_size(k)).contains(&token)
            })
            .map(|k| (k, (token - self.kind_offset(k)) as u8))
    }

    /// One token per canonical tuple position, then padding.
    pub fn encode(&self, h: &Hypothesis) -> Result<Utterance> {
        let tuple = h.tuple();
        if tuple.len() > self.length {
            return Err(Error::Encode(format!(
                "{} content tokens exceed utterance length {}",
                tuple.len(),
                self.length
            )));
        }
        let mut tokens = Codebook::kinds(tuple.task, tuple.len())
            .into_iter()
            .zip(&tuple.values)
            .map(|(k, &v)| self.token(k, v))
            .collect::<Result<Vec<_>>>()?;
        tokens.resize(self.length, self.pad());
        Utterance::new(tokens, self.vocab_size)
    }

    /// Inverse of [`Codebook::encode`]; the task is read off the token kinds.
    pub fn decode(&self, u: &Utterance) -> Result<Hypothesis> {
        let bad = |msg: String| Err(Error::Decode(msg));
        if u.vocab_size != self.vocab_size || u.len() != self.length {
            return bad("utterance shape does not match the codebook".into());
        }
        let content = u.tokens.iter().take_while(|&&t| t != self.pad()).count();
        if content == 0 {
            return bad("utterance has no content tokens".into());
        }
        if u.tokens[content..].iter().any(|&t| t != self.pad()) {
            return bad("pad token inside content".into());
        }
        let mut kinds = Vec::with_capacity(content);
        let mut values = Vec::with_capacity(content);
        for &t in &u.tokens[..content] {
            let Some((k, v)) = self.kind_of(t) else {
                return bad(format!("token {t} is not in the codebook"));
            };
            kinds.push(k);
            values.push(v);
        }
        let task = if kinds.iter().all(|&k| k == Kind::Color) {
            TaskType::Col
        } else if kinds.iter().all(|&k| k == Kind::Texture) {
            TaskType::Tex
        } else if kinds.contains(&Kind::Prep) {
            TaskType::Rel
        } else {
            TaskType::TexCol
        };
        if (task == TaskType::Rel && content != 5) || (task == TaskType::TexCol && content % 2 != 0)
        {
            return bad(format!("malformed {task} layout"));
        }
        if kinds != Codebook::kinds(task, content) {
            return bad(format!("token kinds do not follow the {task} layout"));
        }
        let h = AttributeTuple { task, values }
            .to_hypothesis()
            .map_err(|e| Error::Decode(e.to_string()))?;
        h.validate(self.num_colors as usize, self.num_textures as usize)
            .map_err(|e| Error::Decode(e.to_string()))?;
        Ok(h)
    }
}

pub fn decode_compositional(u: &Utterance, codebook: &Codebook) -> Result<Hypothesis> {
    codebook.decode(u)
}

fn meaning_seed(seed: u64, m: &AttributeTuple) -> u64 {
    m.values.iter().fold(
        derive_seed(seed, m.task.code() as u64, m.len() as u64),
        |acc, &v| derive_seed(acc, v as u64, 0x5eed),
    )
}

/// Memoized random utterances, one per meaning, pairwise distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct HolisticTable {
    seed: u64,
    forward: BTreeMap<AttributeTuple, Utterance>,
    inverse: HashMap<Vec<u32>, AttributeTuple>,
}

impl HolisticTable {
    /// Assigns utterances in sorted meaning order, redrawing on collision,
    /// so the table depends only on the meaning set and the seed.
    pub fn new(
        meanings: impl IntoIterator<Item = AttributeTuple>,
        seed: u64,
        vocab_size: u32,
        length: usize,
    ) -> Result<Self> {
        let set: BTreeSet<AttributeTuple> = meanings.into_iter().collect();
        let mut forward = BTreeMap::new();
        let mut inverse = HashMap::new();
        for m in set {
            let mut rng = RngStream::new(meaning_seed(seed, &m));
            let mut attempts = 0;
            let u = loop {
                let tokens: Vec<u32> = (0..length)
                    .map(|_| rng.random_range(0..vocab_size))
                    .collect();
                if !inverse.contains_key(&tokens) {
                    break tokens;
                }
                attempts += 1;
                if attempts > 1000 {
                    return Err(Error::Exhausted("no free holistic utterance left".into()));
                }
            };
            inverse.insert(u.clone(), m.clone());
            forward.insert(m, Utterance::new(u, vocab_size)?);
        }
        Ok(HolisticTable {
            seed,
            forward,
            inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, m: &AttributeTuple) -> Option<&Utterance> {
        self.forward.get(m)
    }

    pub fn lookup(&self, u: &Utterance) -> Option<&AttributeTuple> {
        self.inverse.get(&u.tokens)
    }
}

/// Reference speaker languages.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleLanguage {
    Compositional(Codebook),
    Holistic(HolisticTable),
    Constant(Utterance),
    /// Compositional code where each content token is, with probability `p`,
    /// replaced by a different token of the same kind. The draw is fixed per
    /// meaning, so encoding stays deterministic.
    NoisyCompositional {
        codebook: Codebook,
        p: f64,
        seed: u64,
    },
}

impl OracleLanguage {
    pub fn name(&self) -> String {
        match self {
            OracleLanguage::Compositional(_) => "compositional".into(),
            OracleLanguage::Holistic(_) => "holistic".into(),
            OracleLanguage::Constant(_) => "constant".into(),
            OracleLanguage::NoisyCompositional { p, .. } => format!("noisy:{p}"),
        }
    }

    pub fn encode(&self, h: &Hypothesis) -> Result<Utterance> {
        match self {
            OracleLanguage::Compositional(cb) => cb.encode(h),
            OracleLanguage::Holistic(table) => table.get(&h.tuple()).cloned().ok_or_else(|| {
                Error::Encode(format!(
                    "meaning {} is not in the holistic table",
                    h.tuple()
                ))
            }),
            OracleLanguage::Constant(u) => Ok(u.clone()),
            OracleLanguage::NoisyCompositional { codebook, p, seed } => {
                let tuple = h.tuple();
                let mut u = codebook.encode(h)?;
                let mut rng = RngStream::new(meaning_seed(*seed, &tuple));
                let kinds = Codebook::kinds(tuple.task, tuple.len());
                for (tok, kind) in u.tokens.iter_mut().zip(kinds) {
                    let size = codebook.kind_size(kind);
                    if size > 1 && rng.random_bool(*p) {
                        let old = *tok - codebook.kind_offset(kind);
                        let shift = rng.random_range(1..size);
                        *tok = codebook.kind_offset(kind) + (old + shift) % size;
                    }
                }
                Ok(u)
            }
        }
    }

    /// Receiver-side reading of an utterance; `None` when the language
    /// carries no recoverable meaning.
    pub fn interpret(&self, u: &Utterance) -> Option<Hypothesis> {
        match self {
            OracleLanguage::Compositional(cb)
            | OracleLanguage::NoisyCompositional { codebook: cb, .. } => cb.decode(u).ok(),
            OracleLanguage::Holistic(table) => table.lookup(u)?.to_hypothesis().ok(),
            OracleLanguage::Constant(_) => None,
        }
    }
}

/// Command-line language selector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LanguageSpec {
    Compositional,
    Holistic,
    Constant,
    Noisy(f64),
}

impl FromStr for LanguageSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compositional" => Ok(LanguageSpec::Compositional),
            "holistic" => Ok(LanguageSpec::Holistic),
            "constant" => Ok(LanguageSpec::Constant),
            _ => {
                let p = s
                    .strip_prefix("noisy:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .filter(|p| (0.0..=1.0).contains(p))
                    .ok_or_else(|| {
                        Error::Parse(format!(
                            "unknown language '{s}' (expected compositional, holistic, constant or noisy:<p> with p in [0,1])"
                        ))
                    })?;
                Ok(LanguageSpec::Noisy(p))
            }
        }
    }
}

impl fmt::Display for LanguageSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanguageSpec::Compositional => f.write_str("compositional"),
            LanguageSpec::Holistic => f.write_str("holistic"),
            LanguageSpec::Constant => f.write_str("constant"),
            LanguageSpec::Noisy(p) => write!(f, "noisy:{p}"),
        }
    }
}

impl LanguageSpec {
    /// Instantiates the language for a dataset. Holistic tables cover every
    /// meaning in the file.
    pub fn build(self, ds: &DatasetFile, seed: u64) -> Result<OracleLanguage> {
        let cb = Codebook::for_dataset(ds)?;
        Ok(match self {
            LanguageSpec::Compositional => OracleLanguage::Compositional(cb),
            LanguageSpec::Holistic => OracleLanguage::Holistic(HolisticTable::new(
                dataset_meanings(ds)?,
                seed,
                cb.vocab_size(),
                cb.length(),
            )?),
            LanguageSpec::Constant => OracleLanguage::Constant(Utterance::new(
                vec![cb.pad(); cb.length()],
                cb.vocab_size(),
            )?),
            LanguageSpec::Noisy(p) => OracleLanguage::NoisyCompositional {
                codebook: cb,
                p,
                seed,
            },
        })
    }
}

/// Canonical tuples of every hypothesis in the file, in index order.
pub fn dataset_meanings(ds: &DatasetFile) -> Result<Vec<AttributeTuple>> {
    par::try_map_indices(ds.len(), |i| Ok(ds.example(i)?.hypothesis.tuple()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitAccuracy {
    pub accuracy: f64,
    pub correct: u64,
    pub items: u64,
}

/// Receiver accuracy keyed by split name.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub language: String,
    pub splits: BTreeMap<String, SplitAccuracy>,
}

impl EvalReport {
    pub fn accuracy(&self, split: SplitKind) -> Option<f64> {
        self.splits.get(split.name()).map(|s| s.accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Label the receiver falls back to when it cannot read the utterance: the
/// majority receiver label over the training split, ties going to `true`.
pub fn majority_label(ds: &DatasetFile) -> Result<bool> {
    let range = ds.split_range(SplitKind::Train);
    let counts = par::try_map_indices(range.len(), |i| {
        let ex = ds.example(range.start + i)?;
        let pos = ex.receiver.iter().filter(|s| s.label).count() as i64;
        Ok(2 * pos - ex.receiver.len() as i64)
    })?;
    Ok(counts.iter().sum::<i64>() >= 0)
}

/// Speaker encodes each hypothesis, receiver interprets the utterance and
/// labels every receiver scene with the symbolic labeler.
pub fn run_referential_eval(ds: &DatasetFile, lang: &OracleLanguage) -> Result<EvalReport> {
    let fallback = majority_label(ds)?;
    let mut splits = BTreeMap::new();
    for split in SplitKind::ALL {
        let range = ds.split_range(split);
        let per = par::try_map_indices(range.len(), |i| {
            let ex = ds.example(range.start + i)?;
            let u = lang.encode(&ex.hypothesis)?;
            let read = lang.interpret(&u);
            let correct = ex
                .receiver
                .iter()
                .filter(|s| {
                    read.as_ref()
                        .map_or(fallback, |h| evaluate_scene(h, &s.scene))
                        == s.label
                })
                .count() as u64;
            Ok((correct, ex.receiver.len() as u64))
        })?;
        let (correct, items) = per
            .iter()
            .fold((0, 0), |(c, n), &(dc, dn)| (c + dc, n + dn));
        splits.insert(
            split.name().to_string(),
            SplitAccuracy {
                accuracy: if items == 0 {
                    0.0
                } else {
                    correct as f64 / items as f64
                },
                correct,
                items,
            },
        );
    }
    Ok(EvalReport {
        language: lang.name(),
        splits,
    })
}

/// `(meaning, utterance)` pairs for the first `max_n` examples of a split.
pub fn build_language_sample(
    ds: &DatasetFile,
    lang: &OracleLanguage,
    split: SplitKind,
    max_n: usize,
) -> Result<LanguageSample> {
    let range = ds.split_range(split);
    let n = range.len().min(max_n);
    if n == 0 {
        return Err(Error::Config(format!(
            "split {split} has no examples to sample"
        )));
    }
    let pairs = par::try_map_indices(n, |i| {
        let h = ds.example(range.start + i)?.hypothesis;
        Ok((h.tuple(), lang.encode(&h)?))
    })?;
    LanguageSample::new(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::ObjectSpec;

    fn cb() -> Codebook {
        Codebook::new(9, 9, 21, 10).unwrap()
    }

    #[test]
    fn relation_layout() {
        let h = Hypothesis::Relation {
            first: ObjectSpec::new(0, 6),
            prep: Preposition::Above,
            second: ObjectSpec::new(1, 6),
        };
        let u = cb().encode(&h).unwrap();
        assert_eq!(u.tokens, vec![0, 15, 18, 1, 15, 20, 20, 20, 20, 20]);
        assert_eq!(cb().decode(&u).unwrap(), h);
    }

    #[test]
    fn pad_inside_content_is_rejected() {
        let u = Utterance::new(vec![0, 20, 1, 20, 20, 20, 20, 20, 20, 20], 21).unwrap();
        assert!(cb().decode(&u).is_err());
        let empty = Utterance::new(vec![20; 10], 21).unwrap();
        assert!(cb().decode(&empty).is_err());
        // Texture before color is not a TexCol layout.
        let swapped = Utterance::new(vec![9, 0, 20, 20, 20, 20, 20, 20, 20, 20], 21).unwrap();
        assert!(cb().decode(&swapped).is_err());
    }

    #[test]
    fn codebook_capacity() {
        assert!(Codebook::new(10, 9, 21, 10).is_err());
        let long = Hypothesis::TextureColors((0..6).map(|i| ObjectSpec::new(i, i)).collect());
        assert!(cb().encode(&long).is_err());
    }

    #[test]
    fn language_names_parse() {
        assert_eq!(
            "noisy:0.3".parse::<LanguageSpec>().unwrap(),
            LanguageSpec::Noisy(0.3)
        );
        assert_eq!(
            "holistic".parse::<LanguageSpec>().unwrap(),
            LanguageSpec::Holistic
        );
        assert!("noisy:1.5".parse::<LanguageSpec>().is_err());
        assert!("latin".parse::<LanguageSpec>().is_err());
    }
}
