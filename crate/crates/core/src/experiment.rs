//! Experiment configuration and the train / evaluate / sweep pipeline.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{identity_for, insert, ArtifactKind, AssetPool, Split};
use crate::cbi::{run_cbi, CbiRun};
use crate::error::{Result, TdaError};
use crate::exec::Execution;
use crate::metrics::{artifact_ratio, Manifest};
use crate::model::{train, LabeledImage, ToyModel, TrainConfig, TrainLog};
use crate::policy::{AugmentationPolicy, DEFAULT_P_GRID};
use crate::raster::RasterImage;
use crate::rng::{self, purpose};
use crate::synth::load_labeled;

fn default_p_grid() -> Vec<f64> {
    DEFAULT_P_GRID.to_vec()
}

fn default_test_fraction() -> f64 {
    0.2
}

/// One self-contained experiment. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub images: PathBuf,
    pub manifest: PathBuf,
    pub labels: PathBuf,
    /// Separate test set; when absent a seeded hash split of `labels` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    pub asset_index: PathBuf,
    pub output_dir: PathBuf,
    pub policy: AugmentationPolicy,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_p_grid")]
    pub p_grid: Vec<f64>,
    /// Class scored by F1; defaults to the class the bias is more frequent in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_class: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| TdaError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| TdaError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| TdaError::io(path, e))
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.images);
        fix(&mut self.manifest);
        fix(&mut self.labels);
        fix(&mut self.asset_index);
        fix(&mut self.output_dir);
        self.test_images.iter_mut().for_each(fix);
        self.test_labels.iter_mut().for_each(fix);
    }

    /// Checks values and that every input path exists; deduplicates the grid.
    pub fn validate(&mut self) -> Result<()> {
        self.policy.validate()?;
        self.train.validate()?;
        if self.p_grid.is_empty() {
            return Err(TdaError::Parameter("p_grid is empty".into()));
        }
        for &p in &self.p_grid {
            if !(0.0..=1.0).contains(&p) {
                return Err(TdaError::Parameter(format!("p_grid value {p} outside [0, 1]")));
            }
        }
        self.p_grid.sort_by(f64::total_cmp);
        self.p_grid.dedup();
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(TdaError::Parameter(format!("test_fraction {} outside (0, 1)", self.test_fraction)));
        }
        if self.test_images.is_some() != self.test_labels.is_some() {
            return Err(TdaError::Config("test_images and test_labels must be given together".into()));
        }
        let inputs = [&self.images, &self.manifest, &self.labels, &self.asset_index]
            .into_iter()
            .chain(self.test_images.iter())
            .chain(self.test_labels.iter());
        for p in inputs {
            if !p.exists() {
                return Err(TdaError::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "path does not exist")));
            }
        }
        Ok(())
    }
}

/// Experiment over a dataset written by `SynthDataset::write` into the same
/// directory, with training settings that let the planted bias show.
pub fn synthetic_experiment(kind: ArtifactKind, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        images: "images".into(),
        manifest: "manifest.csv".into(),
        labels: "labels.csv".into(),
        test_images: None,
        test_labels: None,
        test_fraction: default_test_fraction(),
        split_seed: seed,
        asset_index: Path::new("assets").join("index.json"),
        output_dir: "runs".into(),
        policy: AugmentationPolicy {
            seed,
            ..AugmentationPolicy::new(kind, 0.0, seed).expect("p = 0 is valid")
        },
        train: TrainConfig {
            learning_rate: 0.03,
            epochs: 20,
            batch_size: 64,
            seed,
            ..TrainConfig::default()
        },
        p_grid: default_p_grid(),
        positive_class: None,
    }
}

/// Deterministic membership of `sample_id` in the held-out split.
pub fn in_test_split(sample_id: &str, fraction: f64, seed: u64) -> bool {
    let h = rng::derive_seed(seed, &[purpose::SPLIT, rng::key_of(sample_id)]);
    ((h >> 11) as f64 / (1u64 << 53) as f64) < fraction
}

/// Loaded inputs shared by all rows of a sweep.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub classes: [String; 2],
    pub positive_class: usize,
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
    pub pool: AssetPool,
}

fn class_pair(manifest: &Manifest) -> Result<[String; 2]> {
    match manifest.classes() {
        [a, b] => Ok([a.clone(), b.clone()]),
        other => Err(TdaError::UnsupportedClassCount { found: other.to_vec() }),
    }
}

/// The class in which `kind` is more frequent; ties go to the first class.
pub fn bias_associated_class(manifest: &Manifest, classes: &[String; 2], kind: ArtifactKind) -> usize {
    let ratio = |c: &str| artifact_ratio(manifest, c, kind.as_str()).unwrap_or(0.0);
    usize::from(ratio(&classes[1]) > ratio(&classes[0]))
}

pub fn prepare(cfg: &ExperimentConfig, exec: Execution) -> Result<Prepared> {
    let manifest = Manifest::load_csv(&cfg.manifest)?;
    let classes = class_pair(&manifest)?;
    let positive_class = match &cfg.positive_class {
        Some(label) => classes.iter().position(|c| c == label).ok_or_else(|| TdaError::UnknownClass {
            label: label.clone(),
            declared: classes.to_vec(),
        })?,
        None => bias_associated_class(&manifest, &classes, cfg.policy.bias_kind),
    };
    let all = load_labeled(&cfg.images, &cfg.labels, &classes, exec)?;
    let (train, test) = match (&cfg.test_images, &cfg.test_labels) {
        (Some(images), Some(labels)) => (all, load_labeled(images, labels, &classes, exec)?),
        _ => all
            .into_iter()
            .partition(|s| !in_test_split(&s.sample_id, cfg.test_fraction, cfg.split_seed)),
    };
    if test.is_empty() {
        return Err(TdaError::EmptyInput("the test split is empty".into()));
    }
    let pool = AssetPool::load_index(&cfg.asset_index)?;
    Ok(Prepared {
        classes,
        positive_class,
        train,
        test,
        pool,
    })
}

pub fn train_one(cfg: &ExperimentConfig, data: &Prepared, p: f64, exec: Execution) -> Result<(ToyModel, TrainLog)> {
    let policy = AugmentationPolicy {
        probability_p: p,
        ..cfg.policy.clone()
    };
    train(&data.train, data.classes.clone(), data.positive_class, &cfg.train, &policy, &data.pool, exec)
}

pub fn evaluate(cfg: &ExperimentConfig, data: &Prepared, model: &ToyModel, exec: Execution) -> Result<CbiRun> {
    if model.classes != data.classes {
        return Err(TdaError::Config(format!(
            "model classes {:?} differ from dataset classes {:?}",
            model.classes, data.classes
        )));
    }
    let kind = cfg.policy.bias_kind;
    let assets = data.pool.require(kind, Split::Eval)?;
    run_cbi(model, &data.test, &assets, kind, data.positive_class, cfg.policy.glasses_horizontal_fraction, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<RowResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub switched: f64,
    pub switched_pct: f64,
    pub dir_c1_to_c2: f64,
    pub dir_c2_to_c1: f64,
    pub f1: f64,
    pub f1_aug: f64,
    pub f1_mean: f64,
    pub f1_diff: f64,
    pub final_train_loss: Option<f64>,
    pub augmented_last_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mitigation {
    pub baseline_switched: f64,
    pub worst_switched_p_gt_0: f64,
    pub best_p: f64,
    pub baseline_f1_diff: f64,
    pub best_f1_diff: f64,
    pub f1_degradation: f64,
    /// Switched at every p > 0 is at most half the baseline.
    pub switched_halved: bool,
    /// |f1_diff| at the best p is at most a third of the baseline's.
    pub f1_diff_cut_to_third: bool,
    /// Clean F1 drops by at most two points at the best p.
    pub clean_f1_within_2pts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub bias_kind: ArtifactKind,
    pub classes: [String; 2],
    pub positive_class: String,
    pub n_train: usize,
    pub n_test: usize,
    pub rows: Vec<SweepRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<Mitigation>,
}

/// Best p: the p > 0 with the smallest |f1_diff|; ties go to the smaller p.
pub fn assess_mitigation(rows: &[SweepRow]) -> Option<Mitigation> {
    let ok: Vec<(f64, &RowResult)> = rows.iter().filter_map(|r| r.result.as_ref().map(|res| (r.p, res))).collect();
    let (_, base) = ok.iter().find(|(p, _)| *p == 0.0)?;
    let treated: Vec<&(f64, &RowResult)> = ok.iter().filter(|(p, _)| *p > 0.0).collect();
    let &&(best_p, best) = treated
        .iter()
        .min_by(|a, b| a.1.f1_diff.abs().total_cmp(&b.1.f1_diff.abs()).then(a.0.total_cmp(&b.0)))?;
    let worst = treated.iter().map(|(_, r)| r.switched).fold(f64::NEG_INFINITY, f64::max);
    let degradation = base.f1 - best.f1;
    Some(Mitigation {
        baseline_switched: base.switched,
        worst_switched_p_gt_0: worst,
        best_p,
        baseline_f1_diff: base.f1_diff,
        best_f1_diff: best.f1_diff,
        f1_degradation: degradation,
        switched_halved: worst <= base.switched / 2.0,
        f1_diff_cut_to_third: best.f1_diff.abs() <= base.f1_diff.abs() / 3.0,
        clean_f1_within_2pts: degradation <= 0.02,
    })
}

impl SweepSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn render_text(&self) -> String {
        let c1_c2 = format!("{}->{}", self.classes[0], self.classes[1]);
        let c2_c1 = format!("{}->{}", self.classes[1], self.classes[0]);
        let (w1, w2) = (c1_c2.len().max(7), c2_c1.len().max(7));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "bias: {}  positive class: {}  train: {}  test: {}",
            self.bias_kind, self.positive_class, self.n_train, self.n_test
        );
        let _ = writeln!(
            out,
            "{:>5} {:>9} {:>7} {:>w1$} {:>w2$} {:>7} {:>7} {:>7} {:>8}",
            "p", "switched", "%", c1_c2, c2_c1, "F1", "F1_aug", "F1_mean", "F1_diff"
        );
        for row in &self.rows {
            match (&row.result, &row.error) {
                (Some(r), _) => {
                    let _ = writeln!(
                        out,
                        "{:>5.2} {:>9.1} {:>6.2}% {:>w$.1}% {:>v$.1}% {:>7.4} {:>7.4} {:>7.4} {:>8.4}",
                        row.p,
                        r.switched,
                        100.0 * r.switched_pct,
                        100.0 * r.dir_c1_to_c2,
                        100.0 * r.dir_c2_to_c1,
                        r.f1,
                        r.f1_aug,
                        r.f1_mean,
                        r.f1_diff,
                        w = w1 - 1,
                        v = w2 - 1
                    );
                }
                (None, err) => {
                    let _ = writeln!(out, "{:>5.2} FAILED: {}", row.p, err.as_deref().unwrap_or("unknown error"));
                }
            }
        }
        if let Some(m) = &self.mitigation {
            let mark = |b: bool| if b { "yes" } else { "no" };
            let _ = writeln!(
                out,
                "best p = {:.2}; switched halved at every p>0: {}; F1_diff cut to a third: {}; clean F1 within 2 points: {}",
                m.best_p,
                mark(m.switched_halved),
                mark(m.f1_diff_cut_to_third),
                mark(m.clean_f1_within_2pts)
            );
        }
        out
    }
}

/// Directory name for the row trained at `p`.
pub fn row_dir(p: f64) -> String {
    format!("p{p}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| TdaError::io(path, e))
}

fn run_row(cfg: &ExperimentConfig, data: &Prepared, p: f64, out: &Path, exec: Execution) -> Result<RowResult> {
    let (model, log) = train_one(cfg, data, p, exec)?;
    fs::create_dir_all(out).map_err(|e| TdaError::io(out, e))?;
    model.save(out.join("model.json"))?;
    log.write_json_lines(out.join("train_log.jsonl"))?;
    let run = evaluate(cfg, data, &model, exec)?;
    write_text(&out.join("cbi.json"), &(serde_json::to_string_pretty(&run)? + "\n"))?;
    write_text(&out.join("cbi.txt"), &run.render_text())?;
    let a = &run.averaged;
    Ok(RowResult {
        switched: a.switched_count,
        switched_pct: a.switched_pct,
        dir_c1_to_c2: a.dir_c1_to_c2,
        dir_c2_to_c1: a.dir_c2_to_c1,
        f1: a.f1,
        f1_aug: a.f1_aug,
        f1_mean: a.f1_mean,
        f1_diff: a.f1_diff,
        final_train_loss: log.epochs.last().map(|e| e.mean_loss),
        augmented_last_epoch: log.epochs.last().map_or(0, |e| e.augmented),
    })
}

/// Trains and evaluates one row per p. A failing row is recorded and the
/// sweep continues. Writes `summary.json` and `summary.txt` to the output dir.
pub fn sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<SweepSummary> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    let data = prepare(&cfg, exec)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| TdaError::io(&cfg.output_dir, e))?;
    let rows = exec.map(&cfg.p_grid, |&p| {
        let out = cfg.output_dir.join(row_dir(p));
        match run_row(&cfg, &data, p, &out, exec) {
            Ok(result) => SweepRow { p, error: None, result: Some(result) },
            Err(e) => {
                log::warn!("sweep row p={p} failed: {e}");
                SweepRow { p, error: Some(e.to_string()), result: None }
            }
        }
    });
    let summary = SweepSummary {
        bias_kind: cfg.policy.bias_kind,
        positive_class: data.classes[data.positive_class].clone(),
        classes: data.classes.clone(),
        n_train: data.train.len(),
        n_test: data.test.len(),
        mitigation: assess_mitigation(&rows),
        rows,
    };
    write_text(&cfg.output_dir.join("summary.json"), &summary.to_json()?)?;
    write_text(&cfg.output_dir.join("summary.txt"), &summary.render_text())?;
    Ok(summary)
}

/// Inserts one named asset, at identity or under a transform sampled from
/// `policy` with `seed`.
pub fn preview(
    image: &RasterImage,
    pool: &AssetPool,
    asset_id: &str,
    sampled: Option<(&AugmentationPolicy, u64)>,
) -> Result<RasterImage> {
    let asset = pool.get(asset_id)?;
    let (transform, fraction) = match sampled {
        Some((policy, seed)) => {
            let mut stream = rng::stream(seed, &[purpose::PREVIEW]);
            (policy.sample_transform(&mut stream, asset.mask.dims(), image.dims()), policy.glasses_horizontal_fraction)
        }
        None => (identity_for(asset, image.dims()), crate::policy::DEFAULT_GLASSES_FRACTION),
    };
    insert(image, asset, &transform, fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(p: f64, switched: f64, f1: f64, f1_diff: f64) -> SweepRow {
        SweepRow {
            p,
            error: None,
            result: Some(RowResult {
                switched,
                switched_pct: switched / 100.0,
                dir_c1_to_c2: 0.0,
                dir_c2_to_c1: 1.0,
                f1,
                f1_aug: f1 - f1_diff,
                f1_mean: f1 - f1_diff / 2.0,
                f1_diff,
                final_train_loss: Some(0.3),
                augmented_last_epoch: 0,
            }),
        }
    }

    #[test]
    fn mitigation_assessment() {
        let rows = vec![
            row(0.0, 80.0, 0.95, 0.09),
            row(0.5, 20.0, 0.94, -0.01),
            row(1.0, 30.0, 0.90, 0.005),
            SweepRow { p: 0.75, error: Some("boom".into()), result: None },
        ];
        let m = assess_mitigation(&rows).unwrap();
        assert_eq!(m.best_p, 1.0);
        assert_eq!(m.worst_switched_p_gt_0, 30.0);
        assert!(m.switched_halved && m.f1_diff_cut_to_third);
        assert!(!m.clean_f1_within_2pts);
        assert!(assess_mitigation(&rows[1..]).is_none());
    }

    #[test]
    fn summary_round_trip() {
        let s = SweepSummary {
            bias_kind: ArtifactKind::Frame,
            classes: ["malignant".into(), "benign".into()],
            positive_class: "malignant".into(),
            n_train: 10,
            n_test: 3,
            rows: vec![row(0.0, 1.0 / 3.0, 0.912345678901, 0.1), SweepRow { p: 0.25, error: Some("x".into()), result: None }],
            mitigation: None,
        };
        let json = s.to_json().unwrap();
        let back = SweepSummary::from_json(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json().unwrap(), json);
        assert_eq!(back.render_text(), s.render_text());
        assert!(s.render_text().contains("FAILED: x"));
    }

    #[test]
    fn hash_split_fraction() {
        let n = 20_000;
        let hits = (0..n).filter(|i| in_test_split(&format!("s{i}"), 0.2, 7)).count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.2).abs() < 0.015, "{frac}");
        assert_eq!(in_test_split("abc", 0.2, 1), in_test_split("abc", 0.2, 1));
    }

    #[test]
    fn config_defaults_and_relative_paths() {
        let json = r#"{"images":"imgs","manifest":"m.csv","labels":"l.csv","asset_index":"a/index.json",
            "output_dir":"out","policy":{"bias_kind":"frame","probability_p":0.0}}"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(&path, json).unwrap();
        let mut cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.p_grid, DEFAULT_P_GRID.to_vec());
        assert_eq!(cfg.images, dir.path().join("imgs"));
        assert_eq!(cfg.train.epochs, 5);
        assert!(matches!(cfg.validate(), Err(TdaError::Io { .. })));
        cfg.p_grid = vec![1.5];
        assert!(matches!(cfg.validate(), Err(TdaError::Parameter(_))));
    }
}
