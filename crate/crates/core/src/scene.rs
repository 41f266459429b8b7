//! Concepts, scenes and attribute tuples.
//!
//! A [`Hypothesis`] is the latent concept behind one referential episode. Its
//! canonical [`AttributeTuple`] is the meaning representation consumed by the
//! language metrics, and [`GridScene`] is the symbolic scene that renders to
//! an image.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColorId(pub u8);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TextureId(pub u8);

impl ColorId {
    pub fn checked(id: usize, num_colors: usize) -> Result<Self> {
        if id < num_colors && id <= u8::MAX as usize {
            Ok(ColorId(id as u8))
        } else {
            Err(Error::IdOutOfRange {
                kind: "color",
                id,
                size: num_colors,
            })
        }
    }
}

impl TextureId {
    pub fn checked(id: usize, num_textures: usize) -> Result<Self> {
        if id < num_textures && id <= u8::MAX as usize {
            Ok(TextureId(id as u8))
        } else {
            Err(Error::IdOutOfRange {
                kind: "texture",
                id,
                size: num_textures,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Preposition {
    Above,
    RightOf,
}

impl Preposition {
    pub const ALL: [Preposition; 2] = [Preposition::Above, Preposition::RightOf];

    pub fn code(self) -> u8 {
        match self {
            Preposition::Above => 0,
            Preposition::RightOf => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Preposition::Above),
            1 => Some(Preposition::RightOf),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Preposition::Above => Preposition::RightOf,
            Preposition::RightOf => Preposition::Above,
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Preposition::Above => "above",
            Preposition::RightOf => "right-of",
        }
    }

    /// Whether an object at `a` stands in this relation to an object at `b`.
    ///
    /// ABOVE is same column with a strictly smaller row; RIGHT_OF is same row
    /// with a strictly larger column. The two are mutually exclusive.
    pub fn holds(self, a: (u8, u8), b: (u8, u8)) -> bool {
        let (ar, ac) = a;
        let (br, bc) = b;
        match self {
            Preposition::Above => ac == bc && ar < br,
            Preposition::RightOf => ar == br && ac > bc,
        }
    }

    /// The relation between two cells, if any.
    pub fn between(a: (u8, u8), b: (u8, u8)) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.holds(a, b))
    }
}

/// Color and texture of one object. Ordered by color, then texture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub color: ColorId,
    pub texture: TextureId,
}

impl ObjectSpec {
    pub fn new(color: u8, texture: u8) -> Self {
        ObjectSpec {
            color: ColorId(color),
            texture: TextureId(texture),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlacedObject {
    pub spec: ObjectSpec,
    pub row: u8,
    pub col: u8,
}

impl PlacedObject {
    pub fn cell(&self) -> (u8, u8) {
        (self.row, self.col)
    }
}

/// Objects on a square grid, at most one per cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridScene {
    grid_size: u8,
    objects: Vec<PlacedObject>,
}

impl GridScene {
    pub fn empty(grid_size: u8) -> Self {
        GridScene {
            grid_size,
            objects: Vec::new(),
        }
    }

    pub fn new(grid_size: u8, objects: Vec<PlacedObject>) -> Result<Self> {
        let mut scene = GridScene::empty(grid_size);
        for obj in objects {
            scene.place(obj)?;
        }
        Ok(scene)
    }

    pub fn grid_size(&self) -> u8 {
        self.grid_size
    }

    pub fn objects(&self) -> &[PlacedObject] {
        &self.objects
    }

    pub fn is_occupied(&self, row: u8, col: u8) -> bool {
        self.objects.iter().any(|o| o.row == row && o.col == col)
    }

    pub fn free_cells(&self) -> Vec<(u8, u8)> {
        let n = self.grid_size;
        (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|&(r, c)| !self.is_occupied(r, c))
            .collect()
    }

    pub fn place(&mut self, obj: PlacedObject) -> Result<()> {
        if obj.row >= self.grid_size || obj.col >= self.grid_size {
            return Err(Error::InvalidHypothesis(format!(
                "cell ({}, {}) outside {}x{} grid",
                obj.row, obj.col, self.grid_size, self.grid_size
            )));
        }
        if self.is_occupied(obj.row, obj.col) {
            return Err(Error::InvalidHypothesis(format!(
                "cell ({}, {}) already occupied",
                obj.row, obj.col
            )));
        }
        self.objects.push(obj);
        Ok(())
    }

    /// Keep only objects satisfying `keep`; cell order is preserved.
    pub fn retain(&self, keep: impl Fn(&PlacedObject) -> bool) -> GridScene {
        GridScene {
            grid_size: self.grid_size,
            objects: self.objects.iter().copied().filter(|o| keep(o)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskType {
    #[serde(rename = "col")]
    Col,
    #[serde(rename = "tex")]
    Tex,
    #[serde(rename = "texcol")]
    TexCol,
    #[serde(rename = "rel")]
    Rel,
}

impl TaskType {
    pub fn code(self) -> u8 {
        match self {
            TaskType::Col => 0,
            TaskType::Tex => 1,
            TaskType::TexCol => 2,
            TaskType::Rel => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TaskType::Col),
            1 => Some(TaskType::Tex),
            2 => Some(TaskType::TexCol),
            3 => Some(TaskType::Rel),
            _ => None,
        }
    }

    /// Number of attributes (meaning-space dimensionality) at arity `n`.
    pub fn num_attrs(self, n: usize) -> usize {
        match self {
            TaskType::Col | TaskType::Tex => n,
            TaskType::TexCol => 2 * n,
            TaskType::Rel => 5,
        }
    }

    /// Set-style tasks canonicalize by sorting their members.
    pub fn is_set_style(self) -> bool {
        !matches!(self, TaskType::Rel)
    }

    pub fn head(self) -> &'static str {
        match self {
            TaskType::Col => "has-colors",
            TaskType::Tex => "has-shapes",
            TaskType::TexCol => "has-shapecolors",
            TaskType::Rel => "relation",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskType::Col => "Col",
            TaskType::Tex => "Tex",
            TaskType::TexCol => "TexCol",
            TaskType::Rel => "Rel",
        };
        f.write_str(s)
    }
}

/// The latent concept of an example.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    Colors(Vec<ColorId>),
    Textures(Vec<TextureId>),
    TextureColors(Vec<ObjectSpec>),
    Relation {
        first: ObjectSpec,
        prep: Preposition,
        second: ObjectSpec,
    },
}

impl Hypothesis {
    pub fn task_type(&self) -> TaskType {
        match self {
            Hypothesis::Colors(_) => TaskType::Col,
            Hypothesis::Textures(_) => TaskType::Tex,
            Hypothesis::TextureColors(_) => TaskType::TexCol,
            Hypothesis::Relation { .. } => TaskType::Rel,
        }
    }

    /// Object count for set-style tasks; 2 for relations.
    pub fn arity(&self) -> usize {
        match self {
            Hypothesis::Colors(v) => v.len(),
            Hypothesis::Textures(v) => v.len(),
            Hypothesis::TextureColors(v) => v.len(),
            Hypothesis::Relation { .. } => 2,
        }
    }

    /// Sorts set-style members ascending.
    pub fn canonical(mut self) -> Self {
        match &mut self {
            Hypothesis::Colors(v) => v.sort(),
            Hypothesis::Textures(v) => v.sort(),
            Hypothesis::TextureColors(v) => v.sort(),
            Hypothesis::Relation { .. } => {}
        }
        self
    }

    /// Checks ids against the configured spaces and distinctness of set members.
    pub fn validate(&self, num_colors: usize, num_textures: usize) -> Result<()> {
        fn distinct<T: Ord + Copy>(v: &[T]) -> bool {
            v.iter().copied().collect::<BTreeSet<_>>().len() == v.len()
        }
        let check_spec = |s: &ObjectSpec| -> Result<()> {
            ColorId::checked(s.color.0 as usize, num_colors)?;
            TextureId::checked(s.texture.0 as usize, num_textures)?;
            Ok(())
        };
        match self {
            Hypothesis::Colors(v) => {
                for c in v {
                    ColorId::checked(c.0 as usize, num_colors)?;
                }
                if v.is_empty() || !distinct(v) {
                    return Err(Error::InvalidHypothesis(
                        "colors must be non-empty and distinct".into(),
                    ));
                }
            }
            Hypothesis::Textures(v) => {
                for t in v {
                    TextureId::checked(t.0 as usize, num_textures)?;
                }
                if v.is_empty() || !distinct(v) {
                    return Err(Error::InvalidHypothesis(
                        "textures must be non-empty and distinct".into(),
                    ));
                }
            }
            Hypothesis::TextureColors(v) => {
                for s in v {
                    check_spec(s)?;
                }
                if v.is_empty() || !distinct(v) {
                    return Err(Error::InvalidHypothesis(
                        "texture-color pairs must be non-empty and distinct".into(),
                    ));
                }
            }
            Hypothesis::Relation { first, second, .. } => {
                check_spec(first)?;
                check_spec(second)?;
            }
        }
        Ok(())
    }

    /// Canonical attribute tuple.
    pub fn tuple(&self) -> AttributeTuple {
        let values = match self {
            Hypothesis::Colors(v) => sorted(v.iter().map(|c| c.0)),
            Hypothesis::Textures(v) => sorted(v.iter().map(|t| t.0)),
            Hypothesis::TextureColors(v) => {
                let mut pairs = v.clone();
                pairs.sort();
                pairs
                    .iter()
                    .flat_map(|s| [s.color.0, s.texture.0])
                    .collect()
            }
            Hypothesis::Relation {
                first,
                prep,
                second,
            } => vec![
                first.color.0,
                first.texture.0,
                prep.code(),
                second.color.0,
                second.texture.0,
            ],
        };
        AttributeTuple {
            task: self.task_type(),
            values,
        }
    }

    /// Object specs named by the hypothesis (relations list both objects).
    pub fn specs(&self) -> Vec<ObjectSpec> {
        match self {
            Hypothesis::TextureColors(v) => v.clone(),
            Hypothesis::Relation { first, second, .. } => vec![*first, *second],
            _ => Vec::new(),
        }
    }

    /// English and tree annotations.
    pub fn annotate(&self) -> (String, Annotation) {
        let canon = self.clone().canonical();
        let color = |c: ColorId| format!("color{}", c.0);
        let shape = |t: TextureId| format!("shape{}", t.0);
        let pair = |s: &ObjectSpec| {
            Annotation::Node(vec![
                Annotation::Leaf(color(s.color)),
                Annotation::Leaf(shape(s.texture)),
            ])
        };
        match &canon {
            Hypothesis::Colors(v) => {
                let words: Vec<String> = v.iter().map(|&c| color(c)).collect();
                headed(TaskType::Col.head(), words)
            }
            Hypothesis::Textures(v) => {
                let words: Vec<String> = v.iter().map(|&t| shape(t)).collect();
                headed(TaskType::Tex.head(), words)
            }
            Hypothesis::TextureColors(v) => {
                let words: Vec<String> = v
                    .iter()
                    .flat_map(|s| [color(s.color), shape(s.texture)])
                    .collect();
                let english = format!("{} {}", TaskType::TexCol.head(), words.join(" "));
                let tree = Annotation::Node(vec![
                    Annotation::Leaf(TaskType::TexCol.head().into()),
                    Annotation::Node(v.iter().map(pair).collect()),
                ]);
                (english, tree)
            }
            Hypothesis::Relation {
                first,
                prep,
                second,
            } => {
                let english = format!(
                    "{} {} {} {} {}",
                    color(first.color),
                    shape(first.texture),
                    prep.word(),
                    color(second.color),
                    shape(second.texture)
                );
                let tree = Annotation::Node(vec![
                    Annotation::Leaf(prep.word().into()),
                    Annotation::Node(vec![pair(first), pair(second)]),
                ]);
                (english, tree)
            }
        }
    }

    /// Symbols naming this concept: the tree's leaves plus its head symbol.
    pub fn symbols(&self) -> Vec<String> {
        let (_, tree) = self.annotate();
        let mut out = Vec::new();
        tree.collect_leaves(&mut out);
        out
    }
}

fn sorted(it: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut v: Vec<u8> = it.collect();
    v.sort_unstable();
    v
}

fn headed(head: &str, words: Vec<String>) -> (String, Annotation) {
    let english = format!("{} {}", head, words.join(" "));
    let tree = Annotation::Node(vec![
        Annotation::Leaf(head.into()),
        Annotation::Node(words.into_iter().map(Annotation::Leaf).collect()),
    ]);
    (english, tree)
}

/// Nested annotation, displayed as a Python tuple literal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Annotation {
    Leaf(String),
    Node(Vec<Annotation>),
}

impl Annotation {
    fn collect_leaves(&self, out: &mut Vec<String>) {
        match self {
            Annotation::Leaf(s) => out.push(s.clone()),
            Annotation::Node(children) => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Annotation::Leaf(s) => write!(f, "'{s}'"),
            Annotation::Node(children) => {
                f.write_str("(")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
                if children.len() == 1 {
                    f.write_str(",")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Canonical fixed-arity encoding of a hypothesis.
///
/// Set-style tasks are sorted ascending (TexCol as flattened `(color, texture)`
/// pairs sorted by pair); relations are `(c1, t1, prep, c2, t2)` with the
/// preposition stored as its code.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeTuple {
    pub task: TaskType,
    pub values: Vec<u8>,
}

impl AttributeTuple {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rebuilds the hypothesis this tuple encodes.
    pub fn to_hypothesis(&self) -> Result<Hypothesis> {
        let v = &self.values;
        let h = match self.task {
            TaskType::Col => Hypothesis::Colors(v.iter().map(|&c| ColorId(c)).collect()),
            TaskType::Tex => Hypothesis::Textures(v.iter().map(|&t| TextureId(t)).collect()),
            TaskType::TexCol => {
                if !v.len().is_multiple_of(2) {
                    return Err(Error::InvalidHypothesis(
                        "texture-color tuple must have even length".into(),
                    ));
                }
                Hypothesis::TextureColors(
                    v.chunks_exact(2)
                        .map(|p| ObjectSpec::new(p[0], p[1]))
                        .collect(),
                )
            }
            TaskType::Rel => {
                if v.len() != 5 {
                    return Err(Error::InvalidHypothesis(
                        "relation tuple must have 5 values".into(),
                    ));
                }
                let prep = Preposition::from_code(v[2]).ok_or_else(|| {
                    Error::InvalidHypothesis(format!("unknown preposition code {}", v[2]))
                })?;
                Hypothesis::Relation {
                    first: ObjectSpec::new(v[0], v[1]),
                    prep,
                    second: ObjectSpec::new(v[3], v[4]),
                }
            }
        };
        Ok(h.canonical())
    }
}

impl fmt::Display for AttributeTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.task)?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if self.task == TaskType::Rel && i == 2 {
                let word = Preposition::from_code(*v).map_or("?", |p| p.word());
                f.write_str(word)?;
            } else {
                write!(f, "{v}")?;
            }
        }
        f.write_str(")")
    }
}

/// Attribute distance between two meanings of the same task: the number of
/// positions at which their canonical tuples differ.
pub fn meaning_distance(a: &AttributeTuple, b: &AttributeTuple) -> Result<u32> {
    if a.task != b.task || a.values.len() != b.values.len() {
        return Err(Error::TaskMismatch(format!("{a} vs {b}")));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .filter(|(x, y)| x != y)
        .count() as u32)
}

/// Total and factorized size of a meaning space with `num_attrs` attributes of
/// `num_values` values each.
pub fn meaning_space_size(num_attrs: u32, num_values: u64) -> Result<(u64, u64)> {
    if num_attrs == 0 || num_values == 0 {
        return Err(Error::Config(
            "meaning space needs at least one attribute and one value".into(),
        ));
    }
    let total = num_values
        .checked_pow(num_attrs)
        .ok_or(Error::Overflow("total meaning space size"))?;
    let factorized = num_values
        .checked_mul(num_attrs as u64)
        .ok_or(Error::Overflow("factorized meaning space size"))?;
    Ok((total, factorized))
}

/// Parses an English annotation back to its attribute tuple.
pub fn parse_english(text: &str) -> Result<AttributeTuple> {
    let words: Vec<&str> = text.split(' ').collect();
    let bad = || Error::Parse(format!("unrecognized annotation {text:?}"));
    let num = |w: &str, prefix: &str| -> Result<u8> {
        w.strip_prefix(prefix)
            .and_then(|d| d.parse::<u8>().ok())
            .ok_or_else(bad)
    };
    let (first, rest) = words.split_first().ok_or_else(bad)?;
    let tuple = match *first {
        "has-colors" => AttributeTuple {
            task: TaskType::Col,
            values: rest
                .iter()
                .map(|w| num(w, "color"))
                .collect::<Result<_>>()?,
        },
        "has-shapes" => AttributeTuple {
            task: TaskType::Tex,
            values: rest
                .iter()
                .map(|w| num(w, "shape"))
                .collect::<Result<_>>()?,
        },
        "has-shapecolors" => {
            if rest.len() % 2 != 0 {
                return Err(bad());
            }
            let mut values = Vec::with_capacity(rest.len());
            for pair in rest.chunks_exact(2) {
                values.push(num(pair[0], "color")?);
                values.push(num(pair[1], "shape")?);
            }
            AttributeTuple {
                task: TaskType::TexCol,
                values,
            }
        }
        _ => {
            if words.len() != 5 {
                return Err(bad());
            }
            let prep = Preposition::ALL
                .into_iter()
                .find(|p| p.word() == words[2])
                .ok_or_else(bad)?;
            AttributeTuple {
                task: TaskType::Rel,
                values: vec![
                    num(words[0], "color")?,
                    num(words[1], "shape")?,
                    prep.code(),
                    num(words[3], "color")?,
                    num(words[4], "shape")?,
                ],
            }
        }
    };
    if tuple.values.is_empty() {
        return Err(bad());
    }
    Ok(tuple)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn colors(v: &[u8]) -> Hypothesis {
        Hypothesis::Colors(v.iter().map(|&c| ColorId(c)).collect())
    }

    fn rel(c1: u8, t1: u8, prep: Preposition, c2: u8, t2: u8) -> Hypothesis {
        Hypothesis::Relation {
            first: ObjectSpec::new(c1, t1),
            prep,
            second: ObjectSpec::new(c2, t2),
        }
    }

    #[test]
    fn tuple_examples() {
        let r = rel(0, 6, Preposition::Above, 1, 6);
        assert_eq!(r.tuple().values, vec![0, 6, 0, 1, 6]);
        assert_eq!(colors(&[5, 1]).tuple().values, vec![1, 5]);
        let tc = Hypothesis::TextureColors(vec![ObjectSpec::new(4, 1)]);
        assert_eq!(tc.tuple().values, vec![4, 1]);
        assert_eq!(tc.tuple().task, TaskType::TexCol);
    }

    #[test]
    fn table_three_annotations() {
        let (en, tree) = colors(&[1, 5]).annotate();
        assert_eq!(en, "has-colors color1 color5");
        assert_eq!(tree.to_string(), "('has-colors', ('color1', 'color5'))");

        let tex = Hypothesis::Textures(vec![TextureId(4), TextureId(2)]);
        let (en, tree) = tex.annotate();
        assert_eq!(en, "has-shapes shape2 shape4");
        assert_eq!(tree.to_string(), "('has-shapes', ('shape2', 'shape4'))");

        let tc = Hypothesis::TextureColors(vec![ObjectSpec::new(4, 1), ObjectSpec::new(5, 7)]);
        let (en, tree) = tc.annotate();
        assert_eq!(en, "has-shapecolors color4 shape1 color5 shape7");
        assert_eq!(
            tree.to_string(),
            "('has-shapecolors', (('color4', 'shape1'), ('color5', 'shape7')))"
        );

        let (en, tree) = rel(0, 6, Preposition::Above, 1, 6).annotate();
        assert_eq!(en, "color0 shape6 above color1 shape6");
        assert_eq!(
            tree.to_string(),
            "('above', (('color0', 'shape6'), ('color1', 'shape6')))"
        );
    }

    #[test]
    fn singleton_tree_uses_python_tuple_comma() {
        let (_, tree) = colors(&[3]).annotate();
        assert_eq!(tree.to_string(), "('has-colors', ('color3',))");
    }

    #[test]
    fn right_of_annotation_round_trips() {
        let h = rel(2, 3, Preposition::RightOf, 2, 3);
        let (en, _) = h.annotate();
        assert_eq!(en, "color2 shape3 right-of color2 shape3");
        assert_eq!(parse_english(&en).unwrap(), h.tuple());
    }

    #[test]
    fn distance_examples() {
        let a = rel(0, 6, Preposition::Above, 1, 6).tuple();
        let b = rel(0, 6, Preposition::Above, 1, 7).tuple();
        assert_eq!(meaning_distance(&a, &a).unwrap(), 0);
        assert_eq!(meaning_distance(&a, &b).unwrap(), 1);
        let c = colors(&[1, 5]).tuple();
        let d = colors(&[2, 7]).tuple();
        assert_eq!(meaning_distance(&c, &d).unwrap(), 2);
        // Positional: a shared member in a different sorted slot still differs.
        let e = colors(&[0, 1]).tuple();
        assert_eq!(meaning_distance(&c, &e).unwrap(), 2);
    }

    #[test]
    fn distance_rejects_mismatched_tasks() {
        let a = colors(&[1]).tuple();
        let b = Hypothesis::Textures(vec![TextureId(1)]).tuple();
        assert!(matches!(
            meaning_distance(&a, &b),
            Err(Error::TaskMismatch(_))
        ));
        let c = colors(&[1, 2]).tuple();
        assert!(meaning_distance(&a, &c).is_err());
    }

    #[test]
    fn meaning_space_sizes() {
        assert_eq!(meaning_space_size(3, 10).unwrap(), (1000, 30));
        assert_eq!(meaning_space_size(5, 10).unwrap(), (100_000, 50));
        assert_eq!(meaning_space_size(1, 3).unwrap(), (3, 3));
        assert!(matches!(
            meaning_space_size(64, 10),
            Err(Error::Overflow(_))
        ));
        assert!(meaning_space_size(0, 10).is_err());
    }

    #[test]
    fn validate_rejects_duplicates_and_bad_ids() {
        assert!(colors(&[1, 1]).validate(9, 9).is_err());
        assert!(colors(&[9]).validate(9, 9).is_err());
        assert!(colors(&[8, 0]).validate(9, 9).is_ok());
        // Relations may name the same object twice.
        assert!(rel(1, 1, Preposition::Above, 1, 1).validate(9, 9).is_ok());
    }

    #[test]
    fn prepositions_are_exclusive() {
        for a in 0..4u8 {
            for b in 0..4u8 {
                for c in 0..4u8 {
                    for d in 0..4u8 {
                        let above = Preposition::Above.holds((a, b), (c, d));
                        let right = Preposition::RightOf.holds((a, b), (c, d));
                        assert!(!(above && right));
                    }
                }
            }
        }
        assert!(Preposition::Above.holds((1, 2), (3, 2)));
        assert!(!Preposition::Above.holds((1, 2), (3, 3)));
        assert!(Preposition::RightOf.holds((2, 4), (2, 1)));
    }

    #[test]
    fn scene_rejects_collisions_and_out_of_grid() {
        let o = PlacedObject {
            spec: ObjectSpec::new(0, 0),
            row: 1,
            col: 1,
        };
        assert!(GridScene::new(5, vec![o, o]).is_err());
        let far = PlacedObject { row: 5, ..o };
        assert!(GridScene::new(5, vec![far]).is_err());
        let s = GridScene::new(2, vec![o]).unwrap();
        assert_eq!(s.free_cells().len(), 3);
    }

    #[test]
    fn symbols_cover_head_and_leaves() {
        let h = rel(0, 6, Preposition::Above, 1, 6);
        assert_eq!(
            h.symbols(),
            vec!["above", "color0", "shape6", "color1", "shape6"]
        );
        assert_eq!(
            colors(&[2, 1]).symbols(),
            vec!["has-colors", "color1", "color2"]
        );
    }
}
