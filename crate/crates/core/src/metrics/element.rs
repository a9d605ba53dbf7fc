//! Element presence scores and bounding-box IoU variants.
//!
//! Element presence compares the *sets* of labels found in the reference
//! and generated images. The IoU family additionally matches instances of
//! each label one-to-one and scores their box overlap:
//!
//! * `Common`: only labels present in both images;
//! * `Precision`: every label of the generated image, zero for labels the
//!   reference lacks;
//! * `Recall`: every label of the reference image, zero for labels the
//!   generated image lacks.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Confidence threshold applied to detector output by default.
pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementError {
    #[error("label {0:?} is empty after normalization")]
    EmptyAfterNormalization(String),
    #[error("image {0} has instances without bounding boxes")]
    MissingBoxes(String),
    #[error("invalid bounding box {0:?}: {1}")]
    InvalidBox([f64; 4], String),
    #[error("invalid detection origin {0:?}")]
    InvalidOrigin(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, ElementError> {
        let raw = [x, y, w, h];
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(ElementError::InvalidBox(raw, "non-finite coordinate".into()));
        }
        if !(w > 0.0 && h > 0.0) {
            return Err(ElementError::InvalidBox(raw, "width and height must be positive".into()));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let ih = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Rescales coordinates, e.g. from source pixels into standardized pixels.
    pub fn scaled(&self, sx: f64, sy: f64) -> BoundingBox {
        BoundingBox { x: self.x * sx, y: self.y * sy, w: self.w * sx, h: self.h * sy }
    }

    /// True when the box lies inside `[0, width] x [0, height]`, allowing
    /// `tolerance` pixels of slack.
    pub fn within(&self, width: f64, height: f64, tolerance: f64) -> bool {
        self.x >= -tolerance
            && self.y >= -tolerance
            && self.x + self.w <= width + tolerance
            && self.y + self.h <= height + tolerance
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = ElementError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Intersection over union of two boxes.
pub fn iou_box(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementInstance {
    pub label: String,
    pub bbox: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl ElementInstance {
    pub fn new(label: impl Into<String>, bbox: Option<BoundingBox>) -> Self {
        Self { label: label.into(), bbox, score: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectionOrigin {
    HumanAnnotation,
    Detector(String),
}

impl fmt::Display for DetectionOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectionOrigin::HumanAnnotation => f.write_str("human"),
            DetectionOrigin::Detector(model) => write!(f, "detector:{model}"),
        }
    }
}

impl FromStr for DetectionOrigin {
    type Err = ElementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "human" => Ok(DetectionOrigin::HumanAnnotation),
            Some(("detector", model)) if !model.is_empty() => Ok(DetectionOrigin::Detector(model.to_string())),
            _ => Err(ElementError::InvalidOrigin(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionSet {
    pub image_id: String,
    pub instances: Vec<ElementInstance>,
    pub origin: DetectionOrigin,
}

impl DetectionSet {
    pub fn labels(&self) -> BTreeSet<&str> {
        self.instances.iter().map(|i| i.label.as_str()).collect()
    }
}

/// On-disk detection file: one per image, boxes in standardized-image pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFile {
    pub image_id: String,
    pub origin: String,
    /// Side length the boxes refer to; boxes are rescaled when it differs
    /// from the evaluation side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<u32>,
    pub instances: Vec<DetectionRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub bbox: BoundingBox,
}

impl DetectionFile {
    /// Normalises labels, drops instances below `threshold` and maps boxes
    /// onto a `side x side` image.
    pub fn into_set(self, threshold: f64, normalizer: &LabelNormalizer, side: u32) -> Result<DetectionSet, ElementError> {
        let origin: DetectionOrigin = self.origin.parse()?;
        let scale = self.side.map_or(1.0, |s| f64::from(side) / f64::from(s));
        let mut instances = Vec::new();
        for rec in self.instances {
            if rec.score.is_some_and(|s| s < threshold) {
                continue;
            }
            let bbox = rec.bbox.scaled(scale, scale);
            if !bbox.within(f64::from(side), f64::from(side), 0.5) {
                return Err(ElementError::InvalidBox(bbox.into(), format!("outside the {side}x{side} image")));
            }
            instances.push(ElementInstance { label: normalizer.normalize(&rec.label)?, bbox: Some(bbox), score: rec.score });
        }
        Ok(DetectionSet { image_id: self.image_id, instances, origin })
    }
}

/// Label canonicalisation with an optional synonym table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelNormalizer {
    synonyms: BTreeMap<String, String>,
}

/// Word endings that are not plural even though they end in `s`.
const NON_PLURAL_ENDINGS: [&str; 3] = ["ss", "us", "is"];

fn base_normalize(raw: &str) -> String {
    let mut words: Vec<String> = raw.split_whitespace().map(str::to_lowercase).collect();
    if let Some(last) = words.last_mut() {
        if last.chars().count() > 3 && last.ends_with('s') && !NON_PLURAL_ENDINGS.iter().any(|e| last.ends_with(e)) {
            last.pop();
        }
    }
    words.join(" ")
}

impl LabelNormalizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Synonym keys and values are normalised with the base rules first.
    pub fn with_synonyms<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let synonyms = pairs
            .into_iter()
            .map(|(k, v)| (base_normalize(k.as_ref()), base_normalize(v.as_ref())))
            .collect();
        Self { synonyms }
    }

    pub fn normalize(&self, raw: &str) -> Result<String, ElementError> {
        let base = base_normalize(raw);
        let out = self.synonyms.get(&base).cloned().unwrap_or(base);
        if out.is_empty() {
            return Err(ElementError::EmptyAfterNormalization(raw.to_string()));
        }
        Ok(out)
    }
}

/// Trim, lowercase, collapse whitespace and drop a plural `s` from the last
/// word (words longer than three characters not ending in `ss`, `us`, `is`).
pub fn normalize_label(raw: &str) -> Result<String, ElementError> {
    LabelNormalizer::default().normalize(raw)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Element presence precision, recall and F1 over distinct labels.
pub fn ep_scores(gt: &DetectionSet, generated: &DetectionSet) -> EpScores {
    ep_from_labels(&gt.labels(), &generated.labels())
}

pub fn ep_from_labels<S: Ord>(gt: &BTreeSet<S>, generated: &BTreeSet<S>) -> EpScores {
    let common = gt.intersection(generated).count() as f64;
    let ratio = |den: usize, other_empty: bool| {
        if den == 0 {
            if other_empty {
                1.0
            } else {
                0.0
            }
        } else {
            common / den as f64
        }
    };
    let precision = ratio(generated.len(), gt.is_empty());
    let recall = ratio(gt.len(), generated.is_empty());
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    EpScores { precision, recall, f1 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouVariant {
    Common,
    Precision,
    Recall,
}

impl IouVariant {
    pub const ALL: [IouVariant; 3] = [IouVariant::Common, IouVariant::Precision, IouVariant::Recall];

    /// Column label used in tabular reports.
    pub fn title(self) -> &'static str {
        match self {
            IouVariant::Common => "Common-IoU",
            IouVariant::Precision => "Precision-IoU",
            IouVariant::Recall => "Recall-IoU",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Descending IoU, ties to the lower reference index then lower generated index.
    #[default]
    Greedy,
    /// Assignment maximising total IoU.
    Hungarian,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Per-label mean, then unweighted mean over labels.
    #[default]
    Class,
    /// Mean over all instances of the variant's basis.
    Instance,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IouOptions {
    pub matching: Matching,
    pub averaging: Averaging,
}

/// One-to-one matched pairs `(gt index, generated index, iou)`.
pub fn match_instances(gt: &[BoundingBox], generated: &[BoundingBox], matching: Matching) -> Vec<(usize, usize, f64)> {
    if gt.is_empty() || generated.is_empty() {
        return Vec::new();
    }
    let iou: Vec<Vec<f64>> = gt.iter().map(|a| generated.iter().map(|b| iou_box(a, b)).collect()).collect();
    match matching {
        Matching::Greedy => greedy_match(&iou),
        Matching::Hungarian => hungarian_match(&iou),
    }
}

fn greedy_match(iou: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(usize, usize, f64)> =
        iou.iter().enumerate().flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (i, j, v))).collect();
    // stable sort keeps (i, j) ascending among equal IoUs
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
    let n = iou.len().min(iou[0].len());
    let mut used_gt = vec![false; iou.len()];
    let mut used_gen = vec![false; iou[0].len()];
    let mut out = Vec::with_capacity(n);
    for (i, j, v) in pairs {
        if !used_gt[i] && !used_gen[j] {
            used_gt[i] = true;
            used_gen[j] = true;
            out.push((i, j, v));
            if out.len() == n {
                break;
            }
        }
    }
    out.sort_by_key(|p| p.0);
    out
}

/// Kuhn-Munkres on the square zero-padded cost matrix `1 - iou`.
fn hungarian_match(iou: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let (rows, cols) = (iou.len(), iou[0].len());
    let n = rows.max(cols);
    let cost = |i: usize, j: usize| if i < rows && j < cols { 1.0 - iou[i][j] } else { 1.0 };
    // potentials and matching, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize, f64)> = (1..=n)
        .filter_map(|j| {
            let i = p[j];
            (i >= 1 && i - 1 < rows && j - 1 < cols).then(|| (i - 1, j - 1, iou[i - 1][j - 1]))
        })
        .collect();
    out.sort_by_key(|p| p.0);
    out
}

/// Per-label matching summary.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMatch {
    pub label: String,
    pub gt_count: usize,
    pub generated_count: usize,
    pub matched_iou_sum: f64,
}

impl ClassMatch {
    fn matched(&self) -> usize {
        self.gt_count.min(self.generated_count)
    }
}

fn boxes_by_label(set: &DetectionSet) -> Result<BTreeMap<&str, Vec<BoundingBox>>, ElementError> {
    let mut out: BTreeMap<&str, Vec<BoundingBox>> = BTreeMap::new();
    for inst in &set.instances {
        let b = inst.bbox.ok_or_else(|| ElementError::MissingBoxes(set.image_id.clone()))?;
        out.entry(inst.label.as_str()).or_default().push(b);
    }
    Ok(out)
}

/// Matches instances label by label.
pub fn class_matches(gt: &DetectionSet, generated: &DetectionSet, matching: Matching) -> Result<Vec<ClassMatch>, ElementError> {
    let g = boxes_by_label(gt)?;
    let h = boxes_by_label(generated)?;
    let labels: BTreeSet<&str> = g.keys().chain(h.keys()).copied().collect();
    let empty = Vec::new();
    Ok(labels
        .into_iter()
        .map(|label| {
            let a = g.get(label).unwrap_or(&empty);
            let b = h.get(label).unwrap_or(&empty);
            let matched_iou_sum = match_instances(a, b, matching).iter().map(|m| m.2).sum();
            ClassMatch { label: label.to_string(), gt_count: a.len(), generated_count: b.len(), matched_iou_sum }
        })
        .collect())
}

/// Scores one IoU variant. `Ok(None)` means the variant is undefined for this
/// pair (no label in common, `Common` only).
pub fn iou_variant(
    gt: &DetectionSet,
    generated: &DetectionSet,
    variant: IouVariant,
    opts: IouOptions,
) -> Result<Option<f64>, ElementError> {
    let classes = class_matches(gt, generated, opts.matching)?;
    Ok(score_variant(&classes, variant, opts.averaging))
}

/// All three variants from one matching pass.
pub fn iou_variants(
    gt: &DetectionSet,
    generated: &DetectionSet,
    opts: IouOptions,
) -> Result<BTreeMap<IouVariant, Option<f64>>, ElementError> {
    let classes = class_matches(gt, generated, opts.matching)?;
    Ok(IouVariant::ALL.iter().map(|&v| (v, score_variant(&classes, v, opts.averaging))).collect())
}

fn score_variant(classes: &[ClassMatch], variant: IouVariant, averaging: Averaging) -> Option<f64> {
    // (basis size per class) for classes in the variant's basis
    let basis: Vec<(&ClassMatch, usize)> = classes
        .iter()
        .filter_map(|c| {
            let n = match variant {
                IouVariant::Common => c.matched(),
                IouVariant::Precision => c.generated_count,
                IouVariant::Recall => c.gt_count,
            };
            (n > 0).then_some((c, n))
        })
        .collect();
    if basis.is_empty() {
        return match variant {
            IouVariant::Common => None,
            _ => Some(0.0),
        };
    }
    let value = match averaging {
        Averaging::Class => basis.iter().map(|(c, n)| c.matched_iou_sum / *n as f64).sum::<f64>() / basis.len() as f64,
        Averaging::Instance => {
            let total: f64 = basis.iter().map(|(c, _)| c.matched_iou_sum).sum();
            total / basis.iter().map(|(_, n)| *n).sum::<usize>() as f64
        }
    };
    Some(value.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn set(items: &[(&str, Option<BoundingBox>)]) -> DetectionSet {
        DetectionSet {
            image_id: "img".into(),
            instances: items.iter().map(|(l, b)| ElementInstance::new(*l, *b)).collect(),
            origin: DetectionOrigin::HumanAnnotation,
        }
    }

    fn labels(items: &[&str]) -> DetectionSet {
        set(&items.iter().map(|l| (*l, None)).collect::<Vec<_>>())
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_label("  Dogs ").unwrap(), "dog");
        assert_eq!(normalize_label("Pink Panther").unwrap(), "pink panther");
        assert_eq!(normalize_label("grass").unwrap(), "grass");
        assert_eq!(normalize_label("  PINK \t  panthers").unwrap(), "pink panther");
        assert_eq!(normalize_label("bus").unwrap(), "bus");
        assert_eq!(normalize_label("cactus").unwrap(), "cactus");
        assert!(matches!(normalize_label("   "), Err(ElementError::EmptyAfterNormalization(_))));
    }

    #[test]
    fn synonyms_apply_after_base_rules() {
        let n = LabelNormalizer::with_synonyms([("Puppies", "dog"), ("woman", "person")]);
        assert_eq!(n.normalize("puppies ").unwrap(), "dog");
        assert_eq!(n.normalize("Woman").unwrap(), "person");
        assert_eq!(n.normalize("cat").unwrap(), "cat");
    }

    #[test]
    fn ep_examples() {
        let s = ep_scores(&labels(&["girl", "snow", "dog"]), &labels(&["girl", "snow", "tree"]));
        assert_eq!((s.precision, s.recall), (2.0 / 3.0, 2.0 / 3.0));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        let same = ep_scores(&labels(&["a", "b"]), &labels(&["b", "a", "a"]));
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));
        let disjoint = ep_scores(&labels(&["a"]), &labels(&["b"]));
        assert_eq!((disjoint.precision, disjoint.recall, disjoint.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ep_degenerate_conventions() {
        let both = ep_scores(&labels(&[]), &labels(&[]));
        assert_eq!((both.precision, both.recall, both.f1), (1.0, 1.0, 1.0));
        let no_gen = ep_scores(&labels(&["a"]), &labels(&[]));
        assert_eq!((no_gen.precision, no_gen.recall, no_gen.f1), (0.0, 0.0, 0.0));
        let no_gt = ep_scores(&labels(&[]), &labels(&["a"]));
        assert_eq!((no_gt.precision, no_gt.recall, no_gt.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn iou_box_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou_box(&a, &a), 1.0);
        assert_eq!(iou_box(&a, &bx(20.0, 0.0, 5.0, 5.0)), 0.0);
        assert_eq!(iou_box(&a, &bx(10.0, 0.0, 5.0, 5.0)), 0.0, "touching edges");
        assert!((iou_box(&a, &bx(5.0, 0.0, 10.0, 10.0)) - 50.0 / 150.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_boxes() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(serde_json::from_str::<BoundingBox>("[0, 0, 0, 3]").is_err());
    }

    #[test]
    fn variant_example_dog_cat() {
        let dog = bx(10.0, 10.0, 20.0, 20.0);
        let gt = set(&[("dog", Some(dog))]);
        let gen = set(&[("dog", Some(dog)), ("cat", Some(bx(50.0, 50.0, 5.0, 5.0)))]);
        let o = IouOptions::default();
        assert_eq!(iou_variant(&gt, &gen, IouVariant::Common, o).unwrap(), Some(1.0));
        assert_eq!(iou_variant(&gt, &gen, IouVariant::Recall, o).unwrap(), Some(1.0));
        assert_eq!(iou_variant(&gt, &gen, IouVariant::Precision, o).unwrap(), Some(0.5));
    }

    #[test]
    fn variants_identity_and_empty() {
        let s = set(&[("dog", Some(bx(0.0, 0.0, 4.0, 4.0))), ("dog", Some(bx(10.0, 0.0, 4.0, 4.0))), ("sun", Some(bx(3.0, 3.0, 2.0, 2.0)))]);
        for v in iou_variants(&s, &s, IouOptions::default()).unwrap().values() {
            assert_eq!(*v, Some(1.0));
        }
        let other = set(&[("cat", Some(bx(0.0, 0.0, 4.0, 4.0)))]);
        let r = iou_variants(&s, &other, IouOptions::default()).unwrap();
        assert_eq!(r[&IouVariant::Common], None);
        assert_eq!(r[&IouVariant::Precision], Some(0.0));
        assert_eq!(r[&IouVariant::Recall], Some(0.0));
        let empty = set(&[]);
        let r = iou_variants(&empty, &empty, IouOptions::default()).unwrap();
        assert_eq!((r[&IouVariant::Common], r[&IouVariant::Precision]), (None, Some(0.0)));
    }

    #[test]
    fn missing_boxes() {
        let gt = set(&[("dog", None)]);
        let gen = set(&[("dog", Some(bx(0.0, 0.0, 1.0, 1.0)))]);
        assert_eq!(
            iou_variant(&gt, &gen, IouVariant::Common, IouOptions::default()),
            Err(ElementError::MissingBoxes("img".into()))
        );
    }

    #[test]
    fn unmatched_instances_score_zero() {
        // two reference dogs, one generated dog exactly on the first
        let gt = set(&[("dog", Some(bx(0.0, 0.0, 4.0, 4.0))), ("dog", Some(bx(20.0, 0.0, 4.0, 4.0)))]);
        let gen = set(&[("dog", Some(bx(0.0, 0.0, 4.0, 4.0)))]);
        let r = iou_variants(&gt, &gen, IouOptions::default()).unwrap();
        assert_eq!(r[&IouVariant::Common], Some(1.0));
        assert_eq!(r[&IouVariant::Precision], Some(1.0));
        assert_eq!(r[&IouVariant::Recall], Some(0.5));
    }

    #[test]
    fn instance_averaging() {
        let gt = set(&[("dog", Some(bx(0.0, 0.0, 4.0, 4.0))), ("dog", Some(bx(20.0, 0.0, 4.0, 4.0))), ("sun", Some(bx(40.0, 0.0, 4.0, 4.0)))]);
        let gen = set(&[("dog", Some(bx(0.0, 0.0, 4.0, 4.0))), ("sun", Some(bx(40.0, 0.0, 4.0, 4.0)))]);
        let o = IouOptions { averaging: Averaging::Instance, ..IouOptions::default() };
        // recall: (1 + 0 + 1) / 3 instances, versus class mean (0.5 + 1) / 2
        let inst = iou_variant(&gt, &gen, IouVariant::Recall, o).unwrap().unwrap();
        let class = iou_variant(&gt, &gen, IouVariant::Recall, IouOptions::default()).unwrap().unwrap();
        assert!((inst - 2.0 / 3.0).abs() < 1e-12);
        assert!((class - 0.75).abs() < 1e-12);
    }

    #[test]
    fn greedy_tie_break_prefers_lower_gt_index() {
        // both gt boxes overlap the single generated box equally
        let gt = [bx(0.0, 0.0, 2.0, 2.0), bx(2.0, 0.0, 2.0, 2.0)];
        let gen = [bx(1.0, 0.0, 2.0, 2.0)];
        let m = match_instances(&gt, &gen, Matching::Greedy);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].0, m[0].1), (0, 0));
    }

    #[test]
    fn hungarian_beats_greedy_on_crafted_case() {
        // greedy takes gt0-gen0 (0.818) and is left with 0.25; crosswise gives 0.538 + 0.667
        let gt = [bx(0.0, 0.0, 10.0, 10.0), bx(3.0, 0.0, 10.0, 10.0)];
        let gen = [bx(1.0, 0.0, 10.0, 10.0), bx(-3.0, 0.0, 10.0, 10.0)];
        let total = |m: &[(usize, usize, f64)]| m.iter().map(|p| p.2).sum::<f64>();
        let g = match_instances(&gt, &gen, Matching::Greedy);
        let h = match_instances(&gt, &gen, Matching::Hungarian);
        assert_eq!((g[0].0, g[0].1), (0, 0));
        assert_eq!((h[0].0, h[0].1), (0, 1));
        assert!(total(&h) > total(&g) + 0.1);
    }

    #[test]
    fn detection_file_ingest() {
        let json = r#"{"image_id":"s1_hop2","origin":"detector:detr-resnet-101","side":256,
            "instances":[{"label":"Dogs","score":0.95,"bbox":[10,10,20,20]},
                         {"label":"cat","score":0.3,"bbox":[0,0,5,5]}]}"#;
        let f: DetectionFile = serde_json::from_str(json).unwrap();
        let s = f.into_set(DEFAULT_DETECTION_THRESHOLD, &LabelNormalizer::new(), 512).unwrap();
        assert_eq!(s.origin, DetectionOrigin::Detector("detr-resnet-101".into()));
        assert_eq!(s.instances.len(), 1);
        assert_eq!(s.instances[0].label, "dog");
        assert_eq!(s.instances[0].bbox, Some(bx(20.0, 20.0, 40.0, 40.0)));
    }

    #[test]
    fn detection_file_rejects_out_of_bounds() {
        let f = DetectionFile {
            image_id: "x".into(),
            origin: "human".into(),
            side: None,
            instances: vec![DetectionRecord { label: "dog".into(), score: None, bbox: bx(500.0, 0.0, 40.0, 10.0) }],
        };
        assert!(matches!(f.into_set(0.7, &LabelNormalizer::new(), 512), Err(ElementError::InvalidBox(..))));
    }

    #[test]
    fn origin_round_trip() {
        for o in [DetectionOrigin::HumanAnnotation, DetectionOrigin::Detector("detr".into())] {
            assert_eq!(o.to_string().parse::<DetectionOrigin>().unwrap(), o);
        }
        assert!("robot".parse::<DetectionOrigin>().is_err());
        assert!("detector:".parse::<DetectionOrigin>().is_err());
    }
}
