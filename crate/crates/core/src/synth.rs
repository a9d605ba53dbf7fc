//! Programmatically drawn corpus with a fully stored run, for offline tests.
//!
//! Each sample is a small scene of labelled shapes over a textured
//! background. Generated hop images show more of the scene's elements as the
//! conversation goes on, with noise, colour drift and placement error
//! shrinking each hop. Every odd-numbered sample's last hop is a byte copy of
//! its ground truth. Stored embeddings are built so that similarity to the
//! ground truth rises with the hop index.

use crate::dataset::{write_dataset, Category, Dataset, ElementAnnotation, Hop, Sample, Source};
use crate::imaging::{encode_png, RgbImage};
use crate::metrics::element::{BoundingBox, DetectionFile, DetectionRecord, ElementInstance};
use crate::metrics::semantic::{Embedding, FileStore};
use crate::net::content_hash;
use crate::pipeline::clients::write_detection_file;
use crate::pipeline::run::{RunConfig, RunLayout, RunRecord};
use crate::pipeline::{write_atomic, PipelineError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const EMBEDDING_MODEL: &str = "synthetic-clip-16";
pub const EMBEDDING_DIM: usize = 16;
pub const RUN_ID: &str = "fixture";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub seed: u64,
    /// One entry per sample; categories cycle two samples at a time.
    pub hop_counts: Vec<usize>,
    pub width: u32,
    pub height: u32,
    /// Side of the (square) generated images.
    pub generated_side: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { seed: 7, hop_counts: vec![1, 2, 2, 3, 3, 3, 4, 4, 5, 2, 3, 4], width: 160, height: 120, generated_side: 128 }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub root: PathBuf,
    pub dataset: Dataset,
    pub run_dir: PathBuf,
    pub embeddings: PathBuf,
}

fn vocabulary(c: Category) -> [&'static str; 3] {
    match c {
        Category::Cartoon => ["rabbit", "balloon", "cloud"],
        Category::Nature => ["tree", "mountain", "river"],
        Category::Painting => ["vase", "flower", "table"],
        Category::Product => ["bottle", "box", "lamp"],
        Category::Animal => ["dog", "cat", "ball"],
        Category::Human => ["person", "hat", "bicycle"],
    }
}

fn palette(c: Category) -> ([f64; 3], [f64; 3]) {
    match c {
        Category::Cartoon => ([250.0, 220.0, 120.0], [120.0, 200.0, 240.0]),
        Category::Nature => ([140.0, 190.0, 235.0], [70.0, 130.0, 60.0]),
        Category::Painting => ([200.0, 170.0, 130.0], [90.0, 60.0, 50.0]),
        Category::Product => ([235.0, 235.0, 235.0], [150.0, 150.0, 160.0]),
        Category::Animal => ([180.0, 210.0, 150.0], [110.0, 90.0, 60.0]),
        Category::Human => ([220.0, 200.0, 190.0], [80.0, 90.0, 120.0]),
    }
}

const ELEMENT_COLOURS: [[f64; 3]; 3] = [[200.0, 40.0, 40.0], [40.0, 60.0, 190.0], [30.0, 150.0, 70.0]];

#[derive(Clone, Copy, Debug)]
struct Shape {
    /// Scene (ground-truth pixel) coordinates.
    bbox: BoundingBox,
    kind: usize,
    colour: [f64; 3],
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        let b = &self.bbox;
        if x < b.x || y < b.y || x >= b.x + b.w || y >= b.y + b.h {
            return false;
        }
        let (cx, cy) = (b.x + b.w / 2.0, b.y + b.h / 2.0);
        match self.kind {
            0 => ((x - cx) / (b.w / 2.0)).powi(2) + ((y - cy) / (b.h / 2.0)).powi(2) <= 1.0,
            1 => true,
            _ => (y - b.y) >= (x - cx).abs() * 2.0 * b.h / b.w - 1e-9,
        }
    }

    fn shade(&self, x: f64, y: f64) -> [f64; 3] {
        // stripes give every shape internal structure
        let stripe = if ((x - self.bbox.x + y - self.bbox.y) / 4.0).floor() as i64 % 2 == 0 { 1.0 } else { 0.8 };
        self.colour.map(|c| c * stripe)
    }
}

struct Scene {
    category: Category,
    shapes: Vec<(String, Shape)>,
    width: f64,
    height: f64,
}

struct RenderParams<'a> {
    shown: &'a [Shape],
    colour_shift: f64,
    noise: f64,
}

fn render(scene: &Scene, w: u32, h: u32, p: &RenderParams<'_>, rng: &mut ChaCha8Rng) -> RgbImage {
    let (top, bottom) = palette(scene.category);
    let (sx, sy) = (scene.width / f64::from(w), scene.height / f64::from(h));
    RgbImage::from_fn(w, h, |px, py| {
        let (x, y) = ((f64::from(px) + 0.5) * sx, (f64::from(py) + 0.5) * sy);
        let t = y / scene.height;
        let texture = 14.0 * (x / 7.0).sin() * (y / 9.0).cos();
        let mut c: [f64; 3] = std::array::from_fn(|i| top[i] * (1.0 - t) + bottom[i] * t + texture);
        c[0] += p.colour_shift;
        c[2] -= p.colour_shift;
        for s in p.shown {
            if s.contains(x, y) {
                c = s.shade(x, y);
            }
        }
        c.map(|v| {
            let n = if p.noise > 0.0 { rng.random_range(-p.noise..=p.noise) } else { 0.0 };
            (v + n).round().clamp(0.0, 255.0) as u8
        })
    })
}

fn build_scene(category: Category, width: f64, height: f64, rng: &mut ChaCha8Rng) -> Scene {
    let slot = width / 3.0;
    let shapes = vocabulary(category)
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let w = rng.random_range(0.55..0.85) * slot;
            let h = rng.random_range(0.35..0.6) * height;
            let x = (i as f64 * slot + rng.random_range(0.0..(slot - w))).floor();
            let y = rng.random_range(0.1 * height..(0.95 * height - h)).floor();
            let bbox = BoundingBox::new(x, y, w.floor(), h.floor()).expect("positive box");
            (label.to_string(), Shape { bbox, kind: i, colour: ELEMENT_COLOURS[i] })
        })
        .collect();
    Scene { category, shapes, width, height }
}

fn conversation(scene: &Scene, t: usize) -> (Vec<Hop>, Vec<String>) {
    let labels: Vec<&str> = scene.shapes.iter().map(|(l, _)| l.as_str()).collect();
    let place = ["on the left", "in the middle", "on the right"];
    let mut hops = Vec::new();
    let mut summaries = Vec::new();
    for k in 1..=t {
        let (joe, jill) = if k == 1 {
            ("What does the picture show?".to_string(), format!("It is a {} picture with a {} {}.", scene.category, labels[0], place[0]))
        } else if k <= labels.len() {
            ("Is there anything else?".to_string(), format!("Yes, a {} {}.", labels[k - 1], place[k - 1]))
        } else {
            ("What about the background?".to_string(), "A smooth gradient with a faint wavy texture.".to_string())
        };
        hops.push(Hop { index: k, joe_message: joe, jill_message: jill });
        let shown = shown_count(k, t, labels.len());
        summaries.push(format!("A {} scene showing {}.", scene.category, labels[..shown].join(", ")));
    }
    (hops, summaries)
}

/// Elements visible at hop `k` of `t`.
fn shown_count(k: usize, t: usize, n: usize) -> usize {
    (n * k).div_ceil(t).clamp(1, n)
}

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn embedding(values: &[f64]) -> Embedding<f32> {
    Embedding::new(values.iter().map(|&v| v as f32).collect(), EMBEDDING_MODEL).expect("non-zero vector")
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Writes the corpus under `root`: `manifest.json`, `images/`,
/// `embeddings.txt` and a complete stored run at `runs/fixture/`.
pub fn write_corpus(root: impl AsRef<Path>, spec: &SynthSpec) -> Result<SynthCorpus, PipelineError> {
    let root = root.as_ref().to_path_buf();
    let images = root.join("images");
    std::fs::create_dir_all(&images).map_err(io(&images))?;
    let layout = RunLayout::under(root.join("runs"), RUN_ID);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut store = FileStore::empty(EMBEDDING_MODEL);
    let mut samples = Vec::new();
    let (width, height) = (f64::from(spec.width), f64::from(spec.height));
    let gs = spec.generated_side;
    let (gx, gy) = (f64::from(gs) / width, f64::from(gs) / height);
    let sources = [Source::Unique, Source::Pinterest, Source::Flickr];
    let mut per_category: BTreeMap<Category, usize> = BTreeMap::new();

    for (i, &t) in spec.hop_counts.iter().enumerate() {
        let category = Category::ALL[(i / 2) % Category::ALL.len()];
        let n = per_category.entry(category).or_default();
        *n += 1;
        let id = format!("{category}-{n}");
        let scene = build_scene(category, width, height, &mut rng);
        let all: Vec<Shape> = scene.shapes.iter().map(|s| s.1).collect();
        let gt = render(&scene, spec.width, spec.height, &RenderParams { shown: &all, colour_shift: 0.0, noise: 0.0 }, &mut rng);
        let gt_png = encode_png(&gt)?;
        let image_rel = format!("images/{id}.png");
        write_atomic(&root.join(&image_rel), &gt_png)?;

        let mut e: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        unit(&mut e);
        let mut u: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d: f64 = u.iter().zip(&e).map(|(a, b)| a * b).sum();
        u.iter_mut().zip(&e).for_each(|(a, b)| *a -= d * b);
        unit(&mut u);
        store.insert(content_hash(&gt_png), embedding(&e));

        let copy_last = i % 2 == 1 && t >= 2;
        for k in 1..=t {
            let image_path = layout.image(&id, k);
            let mut records = Vec::new();
            if copy_last && k == t {
                write_atomic(&image_path, &gt_png)?;
                for (label, s) in &scene.shapes {
                    records.push(DetectionRecord { label: label.clone(), score: Some(1.0), bbox: s.bbox.scaled(gx, gy) });
                }
            } else {
                let progress = k as f64;
                let jitter = 10.0 / progress;
                let shown: Vec<Shape> = all[..shown_count(k, t, all.len())]
                    .iter()
                    .map(|s| {
                        let (dx, dy) = (rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter));
                        let b = s.bbox;
                        let x = (b.x + dx).clamp(0.0, width - b.w);
                        let y = (b.y + dy).clamp(0.0, height - b.h);
                        Shape { bbox: BoundingBox::new(x, y, b.w, b.h).expect("positive box"), ..*s }
                    })
                    .collect();
                let params = RenderParams { shown: &shown, colour_shift: 36.0 / progress, noise: 40.0 / progress };
                let img = render(&scene, gs, gs, &params, &mut rng);
                write_atomic(&image_path, &encode_png(&img)?)?;
                for (j, s) in shown.iter().enumerate() {
                    let label = &scene.shapes[j].0;
                    // detectors report plurals now and then
                    let label = if j == 2 && k % 2 == 0 { format!("{label}s") } else { label.clone() };
                    records.push(DetectionRecord { label, score: Some(0.9 - 0.02 * j as f64), bbox: s.bbox.scaled(gx, gy) });
                }
                if k == 1 && t > 1 {
                    let b = BoundingBox::new(4.0, 4.0, f64::from(gs) / 5.0, f64::from(gs) / 5.0).expect("positive box");
                    records.push(DetectionRecord { label: "kite".into(), score: Some(0.75), bbox: b });
                }
                let theta = 1.2 * (t + 1 - k) as f64 / (t + 1) as f64;
                let v: Vec<f64> = e.iter().zip(&u).map(|(a, b)| theta.cos() * a + theta.sin() * b).collect();
                let bytes = std::fs::read(&image_path).map_err(io(&image_path))?;
                store.insert(content_hash(&bytes), embedding(&v));
            }
            // a low-confidence spurious box the threshold must drop
            let junk = BoundingBox::new(0.0, f64::from(gs) / 2.0, f64::from(gs) / 4.0, f64::from(gs) / 4.0).expect("positive box");
            records.push(DetectionRecord { label: "umbrella".into(), score: Some(0.3), bbox: junk });
            let file = DetectionFile { image_id: format!("{id}/hop_{k}"), origin: "detector:synthetic".into(), side: Some(gs), instances: records };
            write_detection_file(&layout.detections(&id, k), &file)?;
        }

        let (hops, summaries) = conversation(&scene, t);
        for (k, s) in summaries.iter().enumerate() {
            write_atomic(&layout.summary(&id, k + 1), s.as_bytes())?;
        }
        samples.push(Sample {
            id,
            category,
            source: sources[i % sources.len()],
            image_path: image_rel.into(),
            hops,
            summaries,
            metadata: ElementAnnotation {
                elements: scene.shapes.iter().map(|(l, s)| ElementInstance::new(l.clone(), Some(s.bbox))).collect(),
            },
        });
    }

    let dataset = Dataset { root: root.clone(), samples };
    write_dataset(&dataset)?;
    let embeddings = root.join(EMBEDDINGS_FILE);
    write_atomic(&embeddings, store.to_text().as_bytes())?;

    let config = RunConfig { detection_side: gs, seed: spec.seed, ..RunConfig::default() };
    let mut record = RunRecord {
        run_id: RUN_ID.into(),
        dataset_hash: dataset.content_hash()?,
        created_at: 0,
        config,
        samples: BTreeMap::new(),
    };
    record.refresh(&layout, &dataset);
    record.save(&layout)?;
    Ok(SynthCorpus { root, dataset, run_dir: layout.dir().to_path_buf(), embeddings })
}
