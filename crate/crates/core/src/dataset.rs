//! Dataset schema: samples pairing a ground-truth image with a conversation,
//! its element annotations and optional per-hop summaries.
//!
//! A dataset is a directory holding `manifest.json` and the images it
//! references by relative path.

use crate::metrics::element::{BoundingBox, ElementInstance, LabelNormalizer};
use crate::net::content_hash;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("image not found or unreadable: {}", .0.display())]
    MissingImage(PathBuf),
    #[error("schema violation at {field}: {reason}")]
    SchemaViolation { field: String, reason: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("sample {id:?} has {hops} hops but {summaries} summaries")]
    SummaryCountMismatch { id: String, hops: usize, summaries: usize },
}

fn violation(field: impl Into<String>, reason: impl fmt::Display) -> DatasetError {
    DatasetError::SchemaViolation { field: field.into(), reason: reason.to_string() }
}

macro_rules! closed_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("unknown value {s:?}; expected one of {:?}", [$($text),+])),
                }
            }
        }
    };
}

closed_enum!(Category {
    Cartoon => "cartoon",
    Nature => "nature",
    Painting => "painting",
    Product => "product",
    Animal => "animal",
    Human => "human",
});

closed_enum!(Source {
    Unique => "unique",
    Pinterest => "pinterest",
    Flickr => "flickr",
});

/// One conversation round: Joe asks, Jill answers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hop {
    /// 1-based.
    pub index: usize,
    pub joe_message: String,
    pub jill_message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ElementAnnotation {
    /// Ground-truth elements; boxes are in original-image pixels.
    pub elements: Vec<ElementInstance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub category: Category,
    pub source: Source,
    /// Relative to the dataset root.
    pub image_path: PathBuf,
    pub hops: Vec<Hop>,
    /// `summaries[k-1]` describes hops `1..=k`. Empty until summarised.
    pub summaries: Vec<String>,
    pub metadata: ElementAnnotation,
}

impl Sample {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn image_path(&self, sample: &Sample) -> PathBuf {
        self.root.join(&sample.image_path)
    }

    pub fn sample(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// SHA-256 over the canonical manifest and every referenced image's bytes.
    pub fn content_hash(&self) -> Result<String, DatasetError> {
        let mut buf = serde_json::to_vec(&to_manifest(self)).expect("manifest serialises");
        for s in &self.samples {
            let path = self.image_path(s);
            let bytes = std::fs::read(&path).map_err(|_| DatasetError::MissingImage(path))?;
            buf.extend_from_slice(content_hash(&bytes).as_bytes());
        }
        Ok(content_hash(&buf))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: u32,
    samples: Vec<ManifestSample>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSample {
    id: String,
    category: String,
    source: String,
    image: String,
    #[serde(default)]
    elements: Vec<ManifestElement>,
    chats: Vec<ManifestChat>,
    #[serde(default)]
    llm_desc: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestElement {
    label: String,
    bbox: Option<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestChat {
    joe: String,
    jill: String,
}

/// Loads and fully validates a dataset, returning the first problem found.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    validate(root).map_err(|mut errs| errs.swap_remove(0))
}

/// Loads a dataset and reports every problem rather than the first.
pub fn validate(root: impl AsRef<Path>) -> Result<Dataset, Vec<DatasetError>> {
    let root = root.as_ref();
    let path = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| vec![DatasetError::Io { path: path.clone(), source }])?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| vec![violation(MANIFEST_FILE, e)])?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(vec![violation(
            "schema_version",
            format!("unsupported version {}; this build reads {SCHEMA_VERSION}", manifest.schema_version),
        )]);
    }
    let normalizer = LabelNormalizer::new();
    let mut errors = Vec::new();
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in manifest.samples.into_iter().enumerate() {
        if !seen.insert(raw.id.clone()) {
            errors.push(DatasetError::DuplicateId(raw.id.clone()));
        }
        match check_sample(root, i, raw, &normalizer) {
            Ok(s) => samples.push(s),
            Err(mut e) => errors.append(&mut e),
        }
    }
    if errors.is_empty() {
        Ok(Dataset { root: root.to_path_buf(), samples })
    } else {
        Err(errors)
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && id.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b))
}

fn check_sample(root: &Path, i: usize, raw: ManifestSample, normalizer: &LabelNormalizer) -> Result<Sample, Vec<DatasetError>> {
    let at = |field: &str| format!("samples[{i}].{field}");
    let mut errors = Vec::new();
    if !valid_id(&raw.id) {
        errors.push(violation(at("id"), format!("{:?} must be non-empty and use only ASCII letters, digits, '-', '_' or '.'", raw.id)));
    }
    let category = raw.category.parse::<Category>().map_err(|e| errors.push(violation(at("category"), e))).ok();
    let source = raw.source.parse::<Source>().map_err(|e| errors.push(violation(at("source"), e))).ok();

    let image_path = PathBuf::from(&raw.image);
    let mut dims = None;
    if raw.image.is_empty() || image_path.components().any(|c| !matches!(c, Component::Normal(_))) {
        errors.push(violation(at("image"), format!("{:?} must be a relative path inside the dataset", raw.image)));
    } else {
        let full = root.join(&image_path);
        match image::image_dimensions(&full) {
            Ok(d) => dims = Some(d),
            Err(_) => errors.push(DatasetError::MissingImage(full)),
        }
    }

    if raw.chats.is_empty() {
        errors.push(violation(at("chats"), "a conversation needs at least one hop"));
    }
    let mut hops = Vec::with_capacity(raw.chats.len());
    for (k, chat) in raw.chats.into_iter().enumerate() {
        if chat.joe.trim().is_empty() {
            errors.push(violation(at(&format!("chats[{k}].joe")), "Joe's message is empty"));
        }
        hops.push(Hop { index: k + 1, joe_message: chat.joe, jill_message: chat.jill });
    }
    if !raw.llm_desc.is_empty() && raw.llm_desc.len() != hops.len() {
        errors.push(DatasetError::SummaryCountMismatch { id: raw.id.clone(), hops: hops.len(), summaries: raw.llm_desc.len() });
    }

    let mut elements = Vec::with_capacity(raw.elements.len());
    for (k, el) in raw.elements.into_iter().enumerate() {
        let field = at(&format!("elements[{k}]"));
        if let Err(e) = normalizer.normalize(&el.label) {
            errors.push(violation(format!("{field}.label"), e));
        }
        let bbox = match el.bbox.map(BoundingBox::try_from).transpose() {
            Ok(b) => b,
            Err(e) => {
                errors.push(violation(format!("{field}.bbox"), e));
                None
            }
        };
        if let (Some(b), Some((w, h))) = (bbox, dims) {
            if !b.within(f64::from(w), f64::from(h), 0.5) {
                errors.push(violation(format!("{field}.bbox"), format!("box {:?} exceeds the {w}x{h} image", <[f64; 4]>::from(b))));
            }
        }
        elements.push(ElementInstance::new(el.label, bbox));
    }

    match (category, source) {
        (Some(category), Some(source)) if errors.is_empty() => Ok(Sample {
            id: raw.id,
            category,
            source,
            image_path,
            hops,
            summaries: raw.llm_desc,
            metadata: ElementAnnotation { elements },
        }),
        _ => Err(errors),
    }
}

fn to_manifest(d: &Dataset) -> Manifest {
    Manifest {
        schema_version: SCHEMA_VERSION,
        samples: d
            .samples
            .iter()
            .map(|s| ManifestSample {
                id: s.id.clone(),
                category: s.category.to_string(),
                source: s.source.to_string(),
                image: s.image_path.to_string_lossy().replace('\\', "/"),
                elements: s
                    .metadata
                    .elements
                    .iter()
                    .map(|e| ManifestElement { label: e.label.clone(), bbox: e.bbox.map(Into::into) })
                    .collect(),
                chats: s.hops.iter().map(|h| ManifestChat { joe: h.joe_message.clone(), jill: h.jill_message.clone() }).collect(),
                llm_desc: s.summaries.clone(),
            })
            .collect(),
    }
}

/// Writes `manifest.json` under `d.root`. Images are not copied.
pub fn write_dataset(d: &Dataset) -> Result<(), DatasetError> {
    let path = d.root.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&to_manifest(d)).expect("manifest serialises");
    text.push('\n');
    std::fs::write(&path, text).map_err(|source| DatasetError::Io { path, source })
}

/// Corpus distribution tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StatsReport {
    pub sample_count: usize,
    /// Hop count -> number of samples.
    pub length_histogram: BTreeMap<usize, usize>,
    pub length_by_category: BTreeMap<Category, BTreeMap<usize, usize>>,
    pub sources_by_category: BTreeMap<Category, BTreeMap<Source, usize>>,
    /// Normalised label -> instance count.
    pub elements_by_category: BTreeMap<Category, BTreeMap<String, usize>>,
}

impl StatsReport {
    pub fn category_count(&self, c: Category) -> usize {
        self.sources_by_category.get(&c).map_or(0, |m| m.values().sum())
    }
}

pub fn dataset_stats(d: &Dataset) -> StatsReport {
    let normalizer = LabelNormalizer::new();
    let mut r = StatsReport { sample_count: d.samples.len(), ..Default::default() };
    for s in &d.samples {
        let t = s.hop_count();
        *r.length_histogram.entry(t).or_default() += 1;
        *r.length_by_category.entry(s.category).or_default().entry(t).or_default() += 1;
        *r.sources_by_category.entry(s.category).or_default().entry(s.source).or_default() += 1;
        for e in &s.metadata.elements {
            // labels were checked at load time
            if let Ok(label) = normalizer.normalize(&e.label) {
                *r.elements_by_category.entry(s.category).or_default().entry(label).or_default() += 1;
            }
        }
    }
    r
}

/// Writes `conversation_lengths.csv`, `sources.csv` and `elements.csv`.
/// Rows with category `all` hold the corpus-wide breakdown.
pub fn write_stats_csv(r: &StatsReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, DatasetError> {
    let out = out_dir.as_ref();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| DatasetError::Io { path, source: e.into() }
    };
    std::fs::create_dir_all(out).map_err(|source| DatasetError::Io { path: out.to_path_buf(), source })?;

    let lengths = out.join("conversation_lengths.csv");
    let mut w = csv::Writer::from_path(&lengths).map_err(io(&lengths))?;
    w.write_record(["category", "hops", "count"]).map_err(io(&lengths))?;
    for (t, n) in &r.length_histogram {
        w.write_record(["all", &t.to_string(), &n.to_string()]).map_err(io(&lengths))?;
    }
    for (c, hist) in &r.length_by_category {
        for (t, n) in hist {
            w.write_record([c.as_str(), &t.to_string(), &n.to_string()]).map_err(io(&lengths))?;
        }
    }
    w.flush().map_err(|source| DatasetError::Io { path: lengths.clone(), source })?;

    let sources = out.join("sources.csv");
    let mut w = csv::Writer::from_path(&sources).map_err(io(&sources))?;
    w.write_record(["category", "source", "count"]).map_err(io(&sources))?;
    for (c, m) in &r.sources_by_category {
        for (s, n) in m {
            w.write_record([c.as_str(), s.as_str(), &n.to_string()]).map_err(io(&sources))?;
        }
    }
    w.flush().map_err(|source| DatasetError::Io { path: sources.clone(), source })?;

    let elements = out.join("elements.csv");
    let mut w = csv::Writer::from_path(&elements).map_err(io(&elements))?;
    w.write_record(["category", "label", "count"]).map_err(io(&elements))?;
    for (c, m) in &r.elements_by_category {
        for (label, n) in m {
            w.write_record([c.as_str(), label, &n.to_string()]).map_err(io(&elements))?;
        }
    }
    w.flush().map_err(|source| DatasetError::Io { path: elements.clone(), source })?;

    Ok(vec![lengths, sources, elements])
}
