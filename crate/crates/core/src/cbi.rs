//! Counterfactual bias insertion: insert each eval asset into every test
//! image and count how often the predicted class flips.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{identity_for, insert, ArtifactAsset, ArtifactKind, Split};
use crate::error::{Result, TdaError};
use crate::exec::Execution;
use crate::model::{LabeledImage, Prediction, ToyModel};
use crate::raster::RasterImage;

pub const AVERAGED: &str = "averaged";

/// Anything that maps an image to one of two classes.
pub trait Classifier: Sync {
    fn classes(&self) -> &[String; 2];
    fn classify(&self, image: &RasterImage) -> Result<Prediction>;
}

impl Classifier for ToyModel {
    fn classes(&self) -> &[String; 2] {
        &self.classes
    }

    fn classify(&self, image: &RasterImage) -> Result<Prediction> {
        self.predict(image)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub sample_id: String,
    pub original_class: String,
    pub original_prob: f64,
    pub biased_class: String,
    pub biased_prob: f64,
    pub asset_id: String,
}

/// 1 iff the predicted class changed; probabilities play no part.
pub fn switched(pair: &PredictionPair) -> u8 {
    u8::from(pair.original_class != pair.biased_class)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1 {
    pub value: f64,
    /// True when 2TP + FP + FN = 0 and the value was defined as zero.
    pub degenerate: bool,
}

/// 2TP / (2TP + FP + FN) for `positive`.
pub fn f1_score<T: PartialEq>(predicted: &[T], truth: &[T], positive: &T) -> Result<F1> {
    if predicted.len() != truth.len() {
        return Err(TdaError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(TdaError::EmptyInput("f1 over zero predictions".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, t) in predicted.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 {
        F1 { value: 0.0, degenerate: true }
    } else {
        F1 {
            value: (2 * tp) as f64 / denom as f64,
            degenerate: tp == 0,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbiReport {
    pub asset_id: String,
    pub n: usize,
    /// Fractional for the averaged report.
    pub switched_count: f64,
    pub switched_pct: f64,
    /// Fraction of switches going from the first to the second class.
    pub dir_c1_to_c2: f64,
    pub dir_c2_to_c1: f64,
    pub f1: f64,
    pub f1_aug: f64,
    pub f1_mean: f64,
    pub f1_diff: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub f1_degenerate: bool,
}

impl CbiReport {
    fn new(asset_id: String, n: usize, switched_count: f64, directions: [usize; 2], f1: F1, f1_aug: F1) -> Self {
        let total = directions[0] + directions[1];
        let frac = |d: usize| if total == 0 { 0.0 } else { d as f64 / total as f64 };
        Self {
            asset_id,
            n,
            switched_count,
            switched_pct: switched_count / n as f64,
            dir_c1_to_c2: frac(directions[0]),
            dir_c2_to_c1: frac(directions[1]),
            f1: f1.value,
            f1_aug: f1_aug.value,
            f1_mean: (f1.value + f1_aug.value) / 2.0,
            f1_diff: f1.value - f1_aug.value,
            f1_degenerate: f1.degenerate || f1_aug.degenerate,
        }
    }

    /// The derived fields agree with the primary ones.
    pub fn is_consistent(&self) -> bool {
        let dirs = self.dir_c1_to_c2 + self.dir_c2_to_c1;
        self.f1_mean == (self.f1 + self.f1_aug) / 2.0
            && self.f1_diff == self.f1 - self.f1_aug
            && self.switched_pct == self.switched_count / self.n as f64
            && (0.0..=self.n as f64).contains(&self.switched_count)
            && (if self.switched_count > 0.0 { (dirs - 1.0).abs() < 1e-12 } else { dirs == 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbiRun {
    pub classes: [String; 2],
    pub positive_class: String,
    pub bias_kind: ArtifactKind,
    pub per_asset: Vec<CbiReport>,
    pub averaged: CbiReport,
    #[serde(skip)]
    pub pairs: Vec<PredictionPair>,
}

/// Evaluates `model` on `test` with and without each asset inserted at its
/// identity placement. Assets are processed in id order.
pub fn run_cbi(
    model: &dyn Classifier,
    test: &[LabeledImage],
    assets: &[&ArtifactAsset],
    kind: ArtifactKind,
    positive_class: usize,
    glasses_horizontal_fraction: f64,
    exec: Execution,
) -> Result<CbiRun> {
    if test.is_empty() {
        return Err(TdaError::EmptyInput("CBI needs at least one test image".into()));
    }
    if assets.is_empty() {
        return Err(TdaError::Config(format!("no {kind} assets supplied for CBI")));
    }
    if positive_class > 1 {
        return Err(TdaError::Parameter("positive class index must be 0 or 1".into()));
    }
    for a in assets {
        if a.kind != kind {
            return Err(TdaError::KindMismatch {
                asset_id: a.asset_id.clone(),
                expected: kind.to_string(),
                found: a.kind.to_string(),
            });
        }
        if a.split != Split::Eval {
            return Err(TdaError::Config(format!(
                "asset `{}` belongs to the {} split; CBI only uses eval assets",
                a.asset_id, a.split
            )));
        }
    }
    let mut assets = assets.to_vec();
    assets.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
    let classes = model.classes().clone();
    let truth: Vec<usize> = test.iter().map(|s| s.class).collect();
    let original = exec.try_map_indexed(test.len(), |i| model.classify(&test[i].image))?;
    let original_classes: Vec<usize> = original.iter().map(|p| p.class).collect();
    let f1 = f1_score(&original_classes, &truth, &positive_class)?;

    let mut per_asset = Vec::with_capacity(assets.len());
    let mut pairs = Vec::with_capacity(assets.len() * test.len());
    let mut pooled_dirs = [0usize; 2];
    for asset in &assets {
        let biased = exec.try_map_indexed(test.len(), |i| {
            let img = &test[i].image;
            let t = identity_for(asset, img.dims());
            model.classify(&insert(img, asset, &t, glasses_horizontal_fraction)?)
        })?;
        let mut dirs = [0usize; 2];
        for (o, b) in original.iter().zip(&biased) {
            if o.class != b.class {
                dirs[o.class] += 1;
            }
        }
        pooled_dirs[0] += dirs[0];
        pooled_dirs[1] += dirs[1];
        let biased_classes: Vec<usize> = biased.iter().map(|p| p.class).collect();
        let f1_aug = f1_score(&biased_classes, &truth, &positive_class)?;
        let count = (dirs[0] + dirs[1]) as f64;
        per_asset.push(CbiReport::new(asset.asset_id.clone(), test.len(), count, dirs, f1, f1_aug));
        pairs.extend(test.iter().zip(original.iter().zip(&biased)).map(|(s, (o, b))| PredictionPair {
            sample_id: s.sample_id.clone(),
            original_class: classes[o.class].clone(),
            original_prob: o.probability,
            biased_class: classes[b.class].clone(),
            biased_prob: b.probability,
            asset_id: asset.asset_id.clone(),
        }));
    }

    let k = per_asset.len() as f64;
    let mean = |f: fn(&CbiReport) -> f64| per_asset.iter().map(f).sum::<f64>() / k;
    let f1_aug_mean = F1 {
        value: mean(|r| r.f1_aug),
        degenerate: per_asset.iter().any(|r| r.f1_degenerate),
    };
    let averaged = CbiReport::new(
        AVERAGED.to_string(),
        test.len(),
        mean(|r| r.switched_count),
        pooled_dirs,
        f1,
        f1_aug_mean,
    );
    Ok(CbiRun {
        positive_class: classes[positive_class].clone(),
        classes,
        bias_kind: kind,
        per_asset,
        averaged,
        pairs,
    })
}

impl CbiRun {
    pub fn render_text(&self) -> String {
        let c1_c2 = format!("{}->{}", self.classes[0], self.classes[1]);
        let c2_c1 = format!("{}->{}", self.classes[1], self.classes[0]);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>9} {:>7} {:>w1$} {:>w2$} {:>7} {:>7} {:>8}",
            "asset", "n", "switched", "%", c1_c2, c2_c1, "F1", "F1_aug", "F1_diff",
            w1 = c1_c2.len().max(7),
            w2 = c2_c1.len().max(7)
        );
        for r in self.per_asset.iter().chain(std::iter::once(&self.averaged)) {
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>9.1} {:>6.2}% {:>w1$.1}% {:>w2$.1}% {:>7.4} {:>7.4} {:>8.4}",
                r.asset_id,
                r.n,
                r.switched_count,
                100.0 * r.switched_pct,
                100.0 * r.dir_c1_to_c2,
                100.0 * r.dir_c2_to_c1,
                r.f1,
                r.f1_aug,
                r.f1_diff,
                w1 = c1_c2.len().max(7) - 1,
                w2 = c2_c1.len().max(7) - 1
            );
        }
        out
    }

    pub fn write_pairs_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.pairs {
            w.serialize(p)?;
        }
        w.flush().map_err(|e| TdaError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::ArtifactAsset;
    use crate::raster::BinaryMask;

    struct Constant([String; 2], usize);

    impl Classifier for Constant {
        fn classes(&self) -> &[String; 2] {
            &self.0
        }
        fn classify(&self, _: &RasterImage) -> Result<Prediction> {
            Ok(Prediction { class: self.1, probability: 0.7 })
        }
    }

    /// Says class 0 whenever any pixel is pure black.
    struct BlackDetector([String; 2]);

    impl Classifier for BlackDetector {
        fn classes(&self) -> &[String; 2] {
            &self.0
        }
        fn classify(&self, image: &RasterImage) -> Result<Prediction> {
            let dark = image.data().chunks_exact(3).any(|p| p == [0, 0, 0]);
            Ok(Prediction { class: if dark { 0 } else { 1 }, probability: if dark { 1.0 } else { 0.0 } })
        }
    }

    fn classes() -> [String; 2] {
        ["mal".into(), "ben".into()]
    }

    fn pair(a: &str, pa: f64, b: &str, pb: f64) -> PredictionPair {
        PredictionPair {
            sample_id: "s".into(),
            original_class: a.into(),
            original_prob: pa,
            biased_class: b.into(),
            biased_prob: pb,
            asset_id: "x".into(),
        }
    }

    #[test]
    fn switched_is_class_level() {
        assert_eq!(switched(&pair("benign", 0.2, "benign", 0.3)), 0);
        assert_eq!(switched(&pair("benign", 0.2, "malignant", 0.8)), 1);
        assert_eq!(switched(&pair("malignant", 0.51, "malignant", 0.99)), 0);
    }

    #[test]
    fn f1_cases() {
        let f = f1_score(&[1, 0, 1], &[1, 0, 1], &1).unwrap();
        assert_eq!((f.value, f.degenerate), (1.0, false));
        let f = f1_score(&[0, 0, 0], &[1, 0, 1], &1).unwrap();
        assert_eq!((f.value, f.degenerate), (0.0, true));
        // TP=2, FP=1, FN=1
        let f = f1_score(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0], &1).unwrap();
        assert!((f.value - 4.0 / 6.0).abs() < 1e-15);
        assert!(f1_score(&[1], &[1, 0], &1).is_err());
        assert!(f1_score::<u8>(&[], &[], &1).is_err());
    }

    fn test_set(n: usize) -> Vec<LabeledImage> {
        (0..n)
            .map(|i| LabeledImage {
                sample_id: format!("t{i}"),
                image: RasterImage::filled(16, 16, [150, 150, 150]).unwrap(),
                class: i % 2,
            })
            .collect()
    }

    fn frame(id: &str, split: Split) -> ArtifactAsset {
        let mask = BinaryMask::from_fn(16, 16, |x, y| x == 0 || y == 0 || x == 15 || y == 15).unwrap();
        ArtifactAsset::new(id, ArtifactKind::Frame, split, mask, None).unwrap()
    }

    #[test]
    fn constant_model_never_switches() {
        let test = test_set(10);
        let (a, b) = (frame("a", Split::Eval), frame("b", Split::Eval));
        let run = run_cbi(&Constant(classes(), 1), &test, &[&a, &b], ArtifactKind::Frame, 0, 0.6, Execution::Sequential).unwrap();
        for r in run.per_asset.iter().chain([&run.averaged]) {
            assert_eq!(r.switched_count, 0.0);
            assert_eq!(r.f1_diff, 0.0);
            assert!(r.is_consistent());
        }
    }

    #[test]
    fn detector_flips_everything_toward_class_zero() {
        let test = test_set(12);
        let (a, b) = (frame("b", Split::Eval), frame("a", Split::Eval));
        let run = run_cbi(&BlackDetector(classes()), &test, &[&a, &b], ArtifactKind::Frame, 0, 0.6, Execution::Parallel).unwrap();
        assert_eq!(run.per_asset[0].asset_id, "a");
        for r in run.per_asset.iter().chain([&run.averaged]) {
            assert_eq!(r.switched_count, 12.0);
            assert_eq!(r.dir_c2_to_c1, 1.0);
            assert!(r.is_consistent());
        }
        assert_eq!(run.pairs.len(), 24);
        assert!(run.pairs.iter().all(|p| switched(p) == 1));
    }

    #[test]
    fn averaged_is_unweighted_mean() {
        let reports = [(10.0, 0.8), (20.0, 0.6)];
        let per: Vec<CbiReport> = reports
            .iter()
            .map(|&(s, f)| CbiReport::new("x".into(), 100, s, [s as usize, 0], F1 { value: 0.9, degenerate: false }, F1 { value: f, degenerate: false }))
            .collect();
        let mean_s = per.iter().map(|r| r.switched_count).sum::<f64>() / 2.0;
        let avg = CbiReport::new(AVERAGED.into(), 100, mean_s, [30, 0], F1 { value: 0.9, degenerate: false }, F1 { value: 0.7, degenerate: false });
        assert_eq!(avg.switched_count, 15.0);
        assert_eq!(avg.switched_pct, 0.15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let test = test_set(4);
        let train_asset = frame("t", Split::Train);
        let m = Constant(classes(), 0);
        assert!(run_cbi(&m, &test, &[&train_asset], ArtifactKind::Frame, 0, 0.6, Execution::Sequential).is_err());
        let e = frame("e", Split::Eval);
        assert!(matches!(
            run_cbi(&m, &test, &[&e], ArtifactKind::Ruler, 0, 0.6, Execution::Sequential),
            Err(TdaError::KindMismatch { .. })
        ));
        assert!(run_cbi(&m, &[], &[&e], ArtifactKind::Frame, 0, 0.6, Execution::Sequential).is_err());
        assert!(run_cbi(&m, &test, &[], ArtifactKind::Frame, 0, 0.6, Execution::Sequential).is_err());
    }

    #[test]
    fn originals_are_untouched_and_reruns_identical() {
        let test = test_set(6);
        let before: Vec<RasterImage> = test.iter().map(|s| s.image.clone()).collect();
        let e = frame("e", Split::Eval);
        let m = BlackDetector(classes());
        let r1 = run_cbi(&m, &test, &[&e], ArtifactKind::Frame, 0, 0.6, Execution::Sequential).unwrap();
        let r2 = run_cbi(&m, &test, &[&e], ArtifactKind::Frame, 0, 0.6, Execution::Sequential).unwrap();
        assert_eq!(r1, r2);
        assert!(test.iter().zip(&before).all(|(s, b)| s.image == *b));
    }
}
