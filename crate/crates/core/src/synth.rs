//! Synthetic two-class dataset with a planted artifact–class correlation.
//!
//! Each image is flat skin with a central lesion disc. The disc's gray level
//! carries the class (the first declared class is darker); an artifact from
//! the train split of the library is stamped at identity with a per-class
//! probability.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::{identity_for, insert, ArtifactKind, AssetPool, Split};
use crate::error::{Result, TdaError};
use crate::exec::Execution;
use crate::library::default_library;
use crate::metrics::{AnnotationRecord, Manifest};
use crate::model::LabeledImage;
use crate::policy::DEFAULT_GLASSES_FRACTION;
use crate::raster::{RasterImage, MIN_IMAGE_SIDE};
use crate::rng::{self, purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub image_size: u32,
    /// Gap between the two classes' mean lesion levels (8-bit units).
    pub class_signal: f64,
    pub bias_rate_c1: f64,
    pub bias_rate_c2: f64,
    pub artifact_kind: ArtifactKind,
    /// Per-image jitter of the lesion level (8-bit units).
    pub noise_sigma: f64,
    /// Independent per-pixel noise (8-bit units).
    pub pixel_noise: f64,
    pub background: f64,
    /// Midpoint between the two classes' lesion levels.
    pub lesion_level: f64,
    /// Lesion radius relative to the image side.
    pub lesion_radius: f64,
    /// First entry is c1, the class carrying `bias_rate_c1`.
    pub classes: [String; 2],
    pub glasses_horizontal_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_per_class: 2000,
            image_size: 64,
            class_signal: 48.0,
            bias_rate_c1: 0.26,
            bias_rate_c2: 0.052,
            artifact_kind: ArtifactKind::Frame,
            noise_sigma: 12.0,
            pixel_noise: 1.0,
            background: 160.0,
            lesion_level: 110.0,
            lesion_radius: 0.2,
            classes: ["malignant".into(), "benign".into()],
            glasses_horizontal_fraction: DEFAULT_GLASSES_FRACTION,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TdaError::Parameter(m));
        if self.n_per_class == 0 {
            return bad("n_per_class must be at least 1".into());
        }
        if self.image_size < MIN_IMAGE_SIDE {
            return bad(format!("image_size must be at least {MIN_IMAGE_SIDE}"));
        }
        if !(self.class_signal > 0.0 && self.class_signal.is_finite()) {
            return bad(format!("class_signal must be positive, got {}", self.class_signal));
        }
        for (name, r) in [("bias_rate_c1", self.bias_rate_c1), ("bias_rate_c2", self.bias_rate_c2)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} {r} outside [0, 1]"));
            }
        }
        for (name, s) in [("noise_sigma", self.noise_sigma), ("pixel_noise", self.pixel_noise)] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{name} must be non-negative, got {s}"));
            }
        }
        if !(self.lesion_radius > 0.0 && self.lesion_radius <= 0.5) {
            return bad(format!("lesion_radius {} outside (0, 0.5]", self.lesion_radius));
        }
        if self.classes[0] == self.classes[1] || self.classes.iter().any(|c| c.trim().is_empty()) {
            return bad("the two class labels must be distinct and non-empty".into());
        }
        Ok(())
    }

    /// Expected lesion level of class index `c`.
    pub fn class_mean(&self, c: usize) -> f64 {
        if c == 0 {
            self.lesion_level - self.class_signal / 2.0
        } else {
            self.lesion_level + self.class_signal / 2.0
        }
    }

    pub fn in_lesion(&self, x: u32, y: u32) -> bool {
        let s = f64::from(self.image_size);
        let u = (f64::from(x) + 0.5) / s - 0.5;
        let v = (f64::from(y) + 0.5) / s - 0.5;
        (u * u + v * v).sqrt() < self.lesion_radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub classes: [String; 2],
    pub per_class: [usize; 2],
    pub injected: [usize; 2],
    pub artifact_kind: ArtifactKind,
    pub class_ratio: crate::metrics::ClassRatio,
    pub warnings: Vec<String>,
}

impl SynthSummary {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in 0..2 {
            out.push_str(&format!(
                "{:<12} {:>6} images, {:>5} with {} ({:.2}%)\n",
                self.classes[c],
                self.per_class[c],
                self.injected[c],
                self.artifact_kind,
                100.0 * self.injected[c] as f64 / self.per_class[c] as f64
            ));
        }
        out.push_str(&format!("class ratio {}\n", self.class_ratio.display()));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub sample: LabeledImage,
    /// Asset stamped into the image, if any.
    pub injected: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub samples: Vec<SynthSample>,
    pub manifest: Manifest,
    pub pool: AssetPool,
    pub summary: SynthSummary,
}

fn sample_id(class: &str, i: usize) -> String {
    format!("{class}_{i:05}")
}

fn render(config: &SynthConfig, class: usize, stream: &mut rng::Stream) -> Result<RasterImage> {
    let level = config.class_mean(class) + normal(config.noise_sigma).sample(stream);
    let pixel = normal(config.pixel_noise);
    RasterImage::from_fn(config.image_size, config.image_size, |x, y| {
        let base = if config.in_lesion(x, y) { level } else { config.background };
        let v = (base + pixel.sample(stream)).round().clamp(0.0, 255.0) as u8;
        [v, v, v]
    })
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated as finite and non-negative")
}

pub fn generate(config: &SynthConfig, exec: Execution) -> Result<SynthDataset> {
    config.validate()?;
    let pool = default_library(config.artifact_kind, config.image_size, config.seed)?;
    let natural = pool.require(config.artifact_kind, Split::Train)?;
    let n = config.n_per_class;
    let rates = [config.bias_rate_c1, config.bias_rate_c2];
    let samples = exec.try_map_indexed(2 * n, |k| -> Result<SynthSample> {
        let (class, i) = (k / n, k % n);
        let mut stream = rng::stream(config.seed, &[purpose::SYNTH, class as u64, i as u64]);
        let clean = render(config, class, &mut stream)?;
        let draw: f64 = stream.random();
        let pick = stream.random_range(0..natural.len());
        let (image, injected) = if draw < rates[class] {
            let asset = natural[pick];
            let t = identity_for(asset, clean.dims());
            let img = insert(&clean, asset, &t, config.glasses_horizontal_fraction)?;
            (img, Some(asset.asset_id.clone()))
        } else {
            (clean, None)
        };
        Ok(SynthSample {
            sample: LabeledImage {
                sample_id: sample_id(&config.classes[class], i),
                image,
                class,
            },
            injected,
        })
    })?;

    let tag = config.artifact_kind.as_str();
    let records = samples
        .iter()
        .map(|s| {
            let tags: Vec<&str> = s.injected.iter().map(|_| tag).collect();
            AnnotationRecord::new(s.sample.sample_id.clone(), &config.classes[s.sample.class], tags)
        })
        .collect();
    let manifest = Manifest::new(config.classes.to_vec(), Some(vec![tag.to_string()]), records)?;

    let mut injected = [0usize; 2];
    for s in &samples {
        injected[s.sample.class] += usize::from(s.injected.is_some());
    }
    let mut warnings = Vec::new();
    for c in 0..2 {
        if rates[c] > 0.0 && injected[c] == 0 {
            warnings.push(format!(
                "class `{}` received no {tag} despite rate {}; increase n_per_class",
                config.classes[c], rates[c]
            ));
        }
    }
    let frac = |c: usize| injected[c] as f64 / n as f64;
    let class_ratio = crate::metrics::class_ratio(frac(0), frac(1))?;
    let summary = SynthSummary {
        classes: config.classes.clone(),
        per_class: [n, n],
        injected,
        artifact_kind: config.artifact_kind,
        class_ratio,
        warnings,
    };
    Ok(SynthDataset {
        config: config.clone(),
        samples,
        manifest,
        pool,
        summary,
    })
}

/// File layout written by [`SynthDataset::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    pub images: PathBuf,
    pub manifest: PathBuf,
    pub labels: PathBuf,
    pub asset_index: PathBuf,
}

impl DatasetPaths {
    pub fn under(dir: &Path) -> Self {
        Self {
            images: dir.join("images"),
            manifest: dir.join("manifest.csv"),
            labels: dir.join("labels.csv"),
            asset_index: dir.join("assets").join("index.json"),
        }
    }
}

impl SynthDataset {
    pub fn labeled(&self) -> Vec<LabeledImage> {
        self.samples.iter().map(|s| s.sample.clone()).collect()
    }

    pub fn write(&self, dir: impl AsRef<Path>, exec: Execution) -> Result<DatasetPaths> {
        let dir = dir.as_ref();
        let paths = DatasetPaths::under(dir);
        fs::create_dir_all(&paths.images).map_err(|e| TdaError::io(&paths.images, e))?;
        exec.try_map_indexed(self.samples.len(), |k| {
            let s = &self.samples[k].sample;
            s.image.save_png(paths.images.join(format!("{}.png", s.sample_id)))
        })?;
        self.manifest.write_csv(&paths.manifest)?;
        write_labels(&paths.labels, self.samples.iter().map(|s| (&s.sample.sample_id[..], &self.config.classes[s.sample.class][..])))?;
        self.pool.save_index(dir.join("assets"))?;
        let summary = dir.join("synth_summary.json");
        fs::write(&summary, serde_json::to_string_pretty(&self.summary)?).map_err(|e| TdaError::io(&summary, e))?;
        Ok(paths)
    }
}

pub fn write_labels<'a>(path: &Path, rows: impl Iterator<Item = (&'a str, &'a str)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "class_label"])?;
    for (id, label) in rows {
        w.write_record([id, label])?;
    }
    let bytes = w.into_inner().map_err(|e| TdaError::io(path, e.into_error()))?;
    let mut f = fs::File::create(path).map_err(|e| TdaError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| TdaError::io(path, e))
}

/// Reads `sample_id,class_label` rows in file order.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path).map_err(|e| TdaError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = r.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "sample_id" || &headers[1] != "class_label" {
        return Err(TdaError::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            message: "expected header `sample_id,class_label`".into(),
        });
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() < 2 || row[0].is_empty() || row[1].is_empty() {
            return Err(TdaError::MalformedRow {
                path: path.display().to_string(),
                line,
                message: "expected two non-empty fields".into(),
            });
        }
        out.push((row[0].to_string(), row[1].to_string()));
    }
    Ok(out)
}

/// Loads `<images>/<sample_id>.png` for every label row; classes are mapped
/// to indices through `classes`.
pub fn load_labeled(images: &Path, labels: &Path, classes: &[String], exec: Execution) -> Result<Vec<LabeledImage>> {
    let rows = read_labels(labels)?;
    let mut indexed = Vec::with_capacity(rows.len());
    for (id, label) in rows {
        let class = classes.iter().position(|c| *c == label).ok_or_else(|| TdaError::UnknownClass {
            label: label.clone(),
            declared: classes.to_vec(),
        })?;
        indexed.push((id, class));
    }
    exec.try_map_indexed(indexed.len(), |k| {
        let (id, class) = &indexed[k];
        Ok(LabeledImage {
            sample_id: id.clone(),
            image: RasterImage::load_png(images.join(format!("{id}.png")))?,
            class: *class,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::bias_report;

    fn small(n: usize) -> SynthConfig {
        SynthConfig { n_per_class: n, image_size: 32, ..SynthConfig::default() }
    }

    #[test]
    fn zero_rates_mean_all_none() {
        let cfg = SynthConfig { bias_rate_c1: 0.0, bias_rate_c2: 0.0, ..small(20) };
        let ds = generate(&cfg, Execution::Sequential).unwrap();
        let report = bias_report(&ds.manifest).unwrap();
        let none = report.row("none").unwrap();
        assert_eq!(none.ratio_c1, 1.0);
        assert_eq!(none.ratio_c2, 1.0);
    }

    #[test]
    fn tags_match_injections_and_pixels() {
        let cfg = SynthConfig { bias_rate_c1: 0.5, bias_rate_c2: 0.2, ..small(40) };
        let ds = generate(&cfg, Execution::Sequential).unwrap();
        for (s, rec) in ds.samples.iter().zip(ds.manifest.records()) {
            assert_eq!(rec.has("frame"), s.injected.is_some());
            let black = s.sample.image.data().iter().filter(|&&v| v == 0).count();
            assert_eq!(black > 0, s.injected.is_some(), "{}", s.sample.sample_id);
        }
    }

    #[test]
    fn deterministic_and_parallel_safe() {
        let cfg = small(10);
        let a = generate(&cfg, Execution::Sequential).unwrap();
        let b = generate(&cfg, Execution::Parallel).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.sample.image, y.sample.image);
            assert_eq!(x.injected, y.injected);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&small(0), Execution::Sequential).is_err());
        assert!(generate(&SynthConfig { class_signal: 0.0, ..small(2) }, Execution::Sequential).is_err());
        assert!(generate(&SynthConfig { bias_rate_c2: 1.5, ..small(2) }, Execution::Sequential).is_err());
    }

    #[test]
    fn tiny_rates_warn() {
        let cfg = SynthConfig { bias_rate_c2: 1e-9, ..small(3) };
        let ds = generate(&cfg, Execution::Sequential).unwrap();
        assert!(!ds.summary.warnings.is_empty());
    }

    #[test]
    fn write_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small(4), Execution::Sequential).unwrap();
        let paths = ds.write(dir.path(), Execution::Sequential).unwrap();
        let back = load_labeled(&paths.images, &paths.labels, &ds.config.classes, Execution::Sequential).unwrap();
        assert_eq!(back.len(), 8);
        for (a, b) in back.iter().zip(ds.samples.iter()) {
            assert_eq!(a.sample_id, b.sample.sample_id);
            assert_eq!(a.image, b.sample.image);
            assert_eq!(a.class, b.sample.class);
        }
        let m = Manifest::load_csv(&paths.manifest).unwrap();
        assert_eq!(m, ds.manifest);
        assert_eq!(AssetPool::load_index(&paths.asset_index).unwrap().len(), ds.pool.len());
    }
}
