//! Hypothesis sampling, positive and tight-negative instantiation, distractor
//! injection and holdout partitioning.
//!
//! Everything here is a pure function of its inputs plus an explicit
//! [`RngStream`], so examples can be generated in any order or in parallel.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{
    meaning_distance, AttributeTuple, ColorId, GridScene, Hypothesis, ObjectSpec, PlacedObject,
    Preposition, TaskType, TextureId,
};

/// Mixes a base seed with two counters (splitmix64 finalizer per input).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ a.wrapping_mul(0xD6E8_FEB8_6659_FD93))
        ^ b.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Seeded deterministic generator.
#[derive(Clone, Debug)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stream for one example, independent of generation order.
    pub fn for_example(master_seed: u64, split: SplitKind, example_index: u64) -> Self {
        RngStream::new(derive_seed(
            master_seed,
            split.id() as u64 + 1,
            example_index,
        ))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Train,
    ValSame,
    TestSame,
    ValNew,
    TestNew,
}

impl SplitKind {
    /// File order of the splits.
    pub const ALL: [SplitKind; 5] = [
        SplitKind::Train,
        SplitKind::ValSame,
        SplitKind::TestSame,
        SplitKind::ValNew,
        SplitKind::TestNew,
    ];

    pub fn id(self) -> u8 {
        match self {
            SplitKind::Train => 0,
            SplitKind::ValSame => 1,
            SplitKind::TestSame => 2,
            SplitKind::ValNew => 3,
            SplitKind::TestNew => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::ValSame => "val_same",
            SplitKind::TestSame => "test_same",
            SplitKind::ValNew => "val_new",
            SplitKind::TestNew => "test_new",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// `val_new` and `test_new` evaluate on held-out items.
    pub fn is_new(self) -> bool {
        matches!(self, SplitKind::ValNew | SplitKind::TestNew)
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_distractors() -> u8 {
    2
}

fn default_grid() -> u8 {
    5
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: TaskType,
    /// Objects named by the concept; relations always use 2.
    pub arity: u8,
    pub num_colors: u8,
    pub num_textures: u8,
    #[serde(default = "default_distractors")]
    pub num_distractors: u8,
    #[serde(default = "default_grid")]
    pub grid_size: u8,
}

impl TaskSpec {
    pub fn new(task: TaskType, arity: u8) -> Self {
        TaskSpec {
            task,
            arity: if task == TaskType::Rel { 2 } else { arity },
            num_colors: 9,
            num_textures: 9,
            num_distractors: default_distractors(),
            grid_size: default_grid(),
        }
    }

    pub fn num_attrs(&self) -> usize {
        self.task.num_attrs(self.arity as usize)
    }

    /// Objects per scene before distractors.
    pub fn core_objects(&self) -> usize {
        self.arity as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.arity == 0 {
            return bad("arity must be at least 1".into());
        }
        if self.task == TaskType::Rel && self.arity != 2 {
            return bad(format!("relation tasks have arity 2, got {}", self.arity));
        }
        if self.num_colors == 0 || self.num_textures == 0 {
            return bad("color and texture spaces must be non-empty".into());
        }
        if self.grid_size < 2 {
            return bad(format!("grid size {} too small", self.grid_size));
        }
        let cells = self.grid_size as usize * self.grid_size as usize;
        let objects = self.core_objects() + self.num_distractors as usize;
        if objects > cells {
            return bad(format!("{objects} objects do not fit {cells} cells"));
        }
        Ok(())
    }

    /// Size of the item space that holdout partitions are carved from.
    pub fn item_space(&self) -> usize {
        match self.task {
            TaskType::Col => self.num_colors as usize,
            TaskType::Tex => self.num_textures as usize,
            TaskType::TexCol | TaskType::Rel => {
                self.num_colors as usize * self.num_textures as usize
            }
        }
    }

    fn pair_item(&self, s: ObjectSpec) -> u16 {
        s.color.0 as u16 * self.num_textures as u16 + s.texture.0 as u16
    }

    fn item_pair(&self, item: u16) -> ObjectSpec {
        let nt = self.num_textures as u16;
        ObjectSpec::new((item / nt) as u8, (item % nt) as u8)
    }

    /// Holdout items referenced by a hypothesis.
    pub fn items_of(&self, h: &Hypothesis) -> Vec<u16> {
        match h {
            Hypothesis::Colors(v) => v.iter().map(|c| c.0 as u16).collect(),
            Hypothesis::Textures(v) => v.iter().map(|t| t.0 as u16).collect(),
            Hypothesis::TextureColors(v) => v.iter().map(|&s| self.pair_item(s)).collect(),
            Hypothesis::Relation { first, second, .. } => {
                vec![self.pair_item(*first), self.pair_item(*second)]
            }
        }
    }

    fn hypothesis_from_items(&self, items: &[u16]) -> Hypothesis {
        match self.task {
            TaskType::Col => Hypothesis::Colors(items.iter().map(|&i| ColorId(i as u8)).collect()),
            TaskType::Tex => {
                Hypothesis::Textures(items.iter().map(|&i| TextureId(i as u8)).collect())
            }
            TaskType::TexCol => {
                Hypothesis::TextureColors(items.iter().map(|&i| self.item_pair(i)).collect())
            }
            TaskType::Rel => unreachable!("relations are sampled slot by slot"),
        }
    }
}

/// Items (colors, textures or color-texture pairs) split into seen and held-out.
///
/// Pair items are indexed `color * num_textures + texture`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutPartition {
    pub train: Vec<u16>,
    pub holdout: Vec<u16>,
}

impl HoldoutPartition {
    pub fn is_holdout(&self, item: u16) -> bool {
        self.holdout.binary_search(&item).is_ok()
    }

    pub fn is_train(&self, item: u16) -> bool {
        self.train.binary_search(&item).is_ok()
    }

    /// Items available to negatives and distractors on `split`: training items
    /// for train-family splits, the union for `_new` splits.
    pub fn pool(&self, split: SplitKind) -> Vec<u16> {
        if split.is_new() {
            let mut all: Vec<u16> = self.train.iter().chain(&self.holdout).copied().collect();
            all.sort_unstable();
            all
        } else {
            self.train.clone()
        }
    }

    fn in_pool(&self, split: SplitKind, item: u16) -> bool {
        self.is_train(item) || (split.is_new() && self.is_holdout(item))
    }

    /// Train-family hypotheses use only training items; `_new` ones use at
    /// least one held-out item.
    pub fn hypothesis_respects_split(
        &self,
        spec: &TaskSpec,
        h: &Hypothesis,
        split: SplitKind,
    ) -> bool {
        let items = spec.items_of(h);
        if split.is_new() {
            items.iter().any(|&i| self.is_holdout(i))
                && items.iter().all(|&i| self.in_pool(split, i))
        } else {
            items.iter().all(|&i| self.is_train(i))
        }
    }
}

pub fn make_holdout_partition(
    spec: &TaskSpec,
    holdout_count: usize,
    seed: u64,
) -> Result<HoldoutPartition> {
    let space = spec.item_space();
    if holdout_count == 0 || holdout_count >= space {
        return Err(Error::Config(format!(
            "holdout count {holdout_count} must be in [1, {space})"
        )));
    }
    let mut rng = RngStream::new(derive_seed(seed, 0x401d, space as u64));
    let mut items: Vec<u16> = (0..space as u16).collect();
    items.shuffle(&mut rng);
    let mut holdout = items[..holdout_count].to_vec();
    let mut train = items[holdout_count..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    Ok(HoldoutPartition { train, holdout })
}

pub fn sample_hypothesis(
    spec: &TaskSpec,
    part: &HoldoutPartition,
    split: SplitKind,
    rng: &mut RngStream,
) -> Result<Hypothesis> {
    let n = spec.arity as usize;
    if spec.task == TaskType::Rel {
        let prep = *Preposition::ALL.choose(rng).expect("two prepositions");
        let (first, second) = if split.is_new() {
            let held = *part.holdout.choose(rng).ok_or_else(empty_holdout)?;
            let all = part.pool(split);
            let other = *all.choose(rng).expect("union pool contains the holdout");
            if rng.random::<bool>() {
                (held, other)
            } else {
                (other, held)
            }
        } else {
            let first = *part
                .train
                .choose(rng)
                .ok_or_else(|| too_small("train pool"))?;
            let second = *part.train.choose(rng).expect("non-empty");
            (first, second)
        };
        return Ok(Hypothesis::Relation {
            first: spec.item_pair(first),
            prep,
            second: spec.item_pair(second),
        });
    }

    let items: Vec<u16> = if split.is_new() {
        let held = *part.holdout.choose(rng).ok_or_else(empty_holdout)?;
        let rest: Vec<u16> = part
            .pool(split)
            .into_iter()
            .filter(|&i| i != held)
            .collect();
        if rest.len() < n - 1 {
            return Err(too_small("item space for a _new hypothesis"));
        }
        std::iter::once(held)
            .chain(rest.choose_multiple(rng, n - 1).copied())
            .collect()
    } else {
        if part.train.len() < n {
            return Err(too_small("train pool"));
        }
        part.train.choose_multiple(rng, n).copied().collect()
    };
    Ok(spec.hypothesis_from_items(&items).canonical())
}

fn empty_holdout() -> Error {
    Error::Exhausted("holdout partition is empty".into())
}

fn too_small(what: &str) -> Error {
    Error::Exhausted(format!("{what} too small for the requested arity"))
}

fn random_cells(scene_grid: u8, count: usize, rng: &mut RngStream) -> Result<Vec<(u8, u8)>> {
    let cells = scene_grid as usize * scene_grid as usize;
    if count > cells {
        return Err(Error::Exhausted(format!(
            "{count} objects do not fit {cells} cells"
        )));
    }
    Ok(index::sample(rng, cells, count)
        .into_iter()
        .map(|i| {
            (
                (i / scene_grid as usize) as u8,
                (i % scene_grid as usize) as u8,
            )
        })
        .collect())
}

/// Places the concept's objects on an empty grid so that the concept holds.
///
/// Set-style tasks use distinct uniformly sampled cells; the attribute a Col
/// (Tex) task leaves unconstrained is drawn uniformly. Relations pick a
/// column (row) and an ordered pair of rows (columns) matching the
/// preposition.
pub fn instantiate_positive(
    h: &Hypothesis,
    spec: &TaskSpec,
    rng: &mut RngStream,
) -> Result<GridScene> {
    let g = spec.grid_size;
    let mut scene = GridScene::empty(g);
    let specs: Vec<ObjectSpec> = match h {
        Hypothesis::Colors(v) => v
            .iter()
            .map(|&color| ObjectSpec {
                color,
                texture: TextureId(rng.random_range(0..spec.num_textures)),
            })
            .collect(),
        Hypothesis::Textures(v) => v
            .iter()
            .map(|&texture| ObjectSpec {
                color: ColorId(rng.random_range(0..spec.num_colors)),
                texture,
            })
            .collect(),
        Hypothesis::TextureColors(v) => v.clone(),
        Hypothesis::Relation {
            first,
            prep,
            second,
        } => {
            let line = rng.random_range(0..g);
            let pair = index::sample(rng, g as usize, 2);
            let (lo, hi) = {
                let (a, b) = (pair.index(0) as u8, pair.index(1) as u8);
                (a.min(b), a.max(b))
            };
            let (first_cell, second_cell) = match prep {
                Preposition::Above => ((lo, line), (hi, line)),
                Preposition::RightOf => ((line, hi), (line, lo)),
            };
            scene.place(PlacedObject {
                spec: *first,
                row: first_cell.0,
                col: first_cell.1,
            })?;
            scene.place(PlacedObject {
                spec: *second,
                row: second_cell.0,
                col: second_cell.1,
            })?;
            return Ok(scene);
        }
    };
    let cells = random_cells(g, specs.len(), rng)?;
    for (spec, (row, col)) in specs.into_iter().zip(cells) {
        scene.place(PlacedObject { spec, row, col })?;
    }
    Ok(scene)
}

/// Candidate replacement values for attribute `idx` of `h`'s canonical tuple.
fn replacements(
    h: &Hypothesis,
    tuple: &AttributeTuple,
    idx: usize,
    spec: &TaskSpec,
    part: &HoldoutPartition,
    split: SplitKind,
) -> Vec<u8> {
    let v = &tuple.values;
    match h {
        Hypothesis::Colors(_) | Hypothesis::Textures(_) => part
            .pool(split)
            .into_iter()
            .map(|i| i as u8)
            .filter(|x| !v.contains(x))
            .collect(),
        Hypothesis::TextureColors(_) => {
            let colors: BTreeSet<u8> = v.iter().step_by(2).copied().collect();
            let textures: BTreeSet<u8> = v.iter().skip(1).step_by(2).copied().collect();
            let pair = idx / 2;
            let (c, t) = (v[2 * pair], v[2 * pair + 1]);
            if idx.is_multiple_of(2) {
                (0..spec.num_colors)
                    .filter(|x| !colors.contains(x))
                    .filter(|&x| part.in_pool(split, spec.pair_item(ObjectSpec::new(x, t))))
                    .collect()
            } else {
                (0..spec.num_textures)
                    .filter(|x| !textures.contains(x))
                    .filter(|&x| part.in_pool(split, spec.pair_item(ObjectSpec::new(c, x))))
                    .collect()
            }
        }
        Hypothesis::Relation { prep, .. } => {
            let colors = [v[0], v[3]];
            let textures = [v[1], v[4]];
            match idx {
                2 => vec![prep.flipped().code()],
                0 | 3 => {
                    let t = v[idx + 1];
                    (0..spec.num_colors)
                        .filter(|x| !colors.contains(x))
                        .filter(|&x| part.in_pool(split, spec.pair_item(ObjectSpec::new(x, t))))
                        .collect()
                }
                _ => {
                    let c = v[idx - 1];
                    (0..spec.num_textures)
                        .filter(|x| !textures.contains(x))
                        .filter(|&x| part.in_pool(split, spec.pair_item(ObjectSpec::new(c, x))))
                        .collect()
                }
            }
        }
    }
}

/// A meaning one attribute away from `h`.
///
/// The returned tuple is `h`'s canonical tuple with one position substituted,
/// left unsorted so it stays aligned with `h`; [`AttributeTuple::to_hypothesis`]
/// canonicalizes it. The flipped position is uniform over the attributes that
/// admit a legal replacement. The replacement excludes every value that
/// attribute takes anywhere in `h` and must come from the split's pool.
pub fn make_tight_negative(
    h: &Hypothesis,
    spec: &TaskSpec,
    part: &HoldoutPartition,
    split: SplitKind,
    rng: &mut RngStream,
) -> Result<(AttributeTuple, usize)> {
    let tuple = h.tuple();
    let options: Vec<(usize, Vec<u8>)> = (0..tuple.len())
        .map(|i| (i, replacements(h, &tuple, i, spec, part, split)))
        .filter(|(_, c)| !c.is_empty())
        .collect();
    let (idx, candidates) = options
        .choose(rng)
        .ok_or_else(|| Error::Exhausted(format!("no legal single-attribute change for {tuple}")))?;
    let mut values = tuple.values.clone();
    values[*idx] = *candidates.choose(rng).expect("non-empty");
    let negative = AttributeTuple {
        task: tuple.task,
        values,
    };
    debug_assert_eq!(meaning_distance(&tuple, &negative).ok(), Some(1));
    Ok((negative, *idx))
}

/// Adds `count` objects matching none of `h`'s items.
///
/// Col (Tex) distractors avoid the concept's colors (textures) and draw the
/// other attribute freely; TexCol and Rel distractors avoid the concept's
/// color-texture pairs. Values come from the split's pool.
pub fn add_distractors(
    scene: &GridScene,
    h: &Hypothesis,
    spec: &TaskSpec,
    part: &HoldoutPartition,
    split: SplitKind,
    count: usize,
    rng: &mut RngStream,
) -> Result<GridScene> {
    let mut out = scene.clone();
    if count == 0 {
        return Ok(out);
    }
    let used = spec.items_of(h);
    let pool: Vec<u16> = part
        .pool(split)
        .into_iter()
        .filter(|i| !used.contains(i))
        .collect();
    if pool.is_empty() {
        return Err(Error::Exhausted(format!(
            "no distractor items available on {split}"
        )));
    }
    let free = out.free_cells();
    if free.len() < count {
        return Err(Error::Exhausted(format!(
            "{count} distractors but {} free cells",
            free.len()
        )));
    }
    let cells = index::sample(rng, free.len(), count);
    for cell_idx in cells.iter() {
        let item = *pool.choose(rng).expect("non-empty");
        let obj_spec = match spec.task {
            TaskType::Col => ObjectSpec {
                color: ColorId(item as u8),
                texture: TextureId(rng.random_range(0..spec.num_textures)),
            },
            TaskType::Tex => ObjectSpec {
                color: ColorId(rng.random_range(0..spec.num_colors)),
                texture: TextureId(item as u8),
            },
            TaskType::TexCol | TaskType::Rel => spec.item_pair(item),
        };
        let (row, col) = free[cell_idx];
        out.place(PlacedObject {
            spec: obj_spec,
            row,
            col,
        })?;
    }
    Ok(out)
}

/// Symbolic ground-truth labeler.
pub fn evaluate_scene(h: &Hypothesis, scene: &GridScene) -> bool {
    let objs = scene.objects();
    match h {
        Hypothesis::Colors(v) => v.iter().all(|&c| objs.iter().any(|o| o.spec.color == c)),
        Hypothesis::Textures(v) => v.iter().all(|&t| objs.iter().any(|o| o.spec.texture == t)),
        Hypothesis::TextureColors(v) => v.iter().all(|&s| objs.iter().any(|o| o.spec == s)),
        Hypothesis::Relation {
            first,
            prep,
            second,
        } => objs.iter().enumerate().any(|(i, p)| {
            p.spec == *first
                && objs
                    .iter()
                    .enumerate()
                    .any(|(j, q)| i != j && q.spec == *second && prep.holds(p.cell(), q.cell()))
        }),
    }
}

/// Smallest meaning distance from `h` to a concept the scene satisfies.
///
/// Zero iff `evaluate_scene` holds; a tight negative scores exactly one.
/// Returns `None` for relation tasks when no two objects are related at all.
pub fn nearest_concept_distance(h: &Hypothesis, scene: &GridScene) -> Option<u32> {
    let objs = scene.objects();
    match h {
        Hypothesis::Colors(v) => Some(
            v.iter()
                .filter(|&&c| !objs.iter().any(|o| o.spec.color == c))
                .count() as u32,
        ),
        Hypothesis::Textures(v) => Some(
            v.iter()
                .filter(|&&t| !objs.iter().any(|o| o.spec.texture == t))
                .count() as u32,
        ),
        Hypothesis::TextureColors(v) => Some(
            v.iter()
                .filter(|&&s| !objs.iter().any(|o| o.spec == s))
                .count() as u32,
        ),
        Hypothesis::Relation { .. } => {
            let target = h.tuple();
            let mut best: Option<u32> = None;
            for (i, p) in objs.iter().enumerate() {
                for (j, q) in objs.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    if let Some(prep) = Preposition::between(p.cell(), q.cell()) {
                        let t = Hypothesis::Relation {
                            first: p.spec,
                            prep,
                            second: q.spec,
                        }
                        .tuple();
                        let d = meaning_distance(&target, &t).expect("same task");
                        best = Some(best.map_or(d, |b| b.min(d)));
                    }
                }
            }
            best
        }
    }
}

/// Whether an object carries any item named by the hypothesis.
pub fn matches_concept(h: &Hypothesis, obj: &PlacedObject) -> bool {
    match h {
        Hypothesis::Colors(v) => v.contains(&obj.spec.color),
        Hypothesis::Textures(v) => v.contains(&obj.spec.texture),
        Hypothesis::TextureColors(v) => v.contains(&obj.spec),
        Hypothesis::Relation { first, second, .. } => obj.spec == *first || obj.spec == *second,
    }
}

/// One labeled scene: a positive or a tight negative, with distractors.
///
/// Negatives also return their generating tuple and flipped position.
pub fn sample_labeled_scene(
    h: &Hypothesis,
    spec: &TaskSpec,
    part: &HoldoutPartition,
    split: SplitKind,
    positive: bool,
    rng: &mut RngStream,
) -> Result<(GridScene, Option<(AttributeTuple, usize)>)> {
    let (core, negative) = if positive {
        (instantiate_positive(h, spec, rng)?, None)
    } else {
        let (tuple, idx) = make_tight_negative(h, spec, part, split, rng)?;
        let neg_h = tuple.to_hypothesis()?;
        (instantiate_positive(&neg_h, spec, rng)?, Some((tuple, idx)))
    };
    let scene = add_distractors(
        &core,
        h,
        spec,
        part,
        split,
        spec.num_distractors as usize,
        rng,
    )?;
    Ok((scene, negative))
}
