//! Desk-scale classifier: logistic regression or a one-hidden-layer tanh MLP
//! over downscaled grayscale features, trained by mini-batch SGD on binary
//! cross-entropy with the augmentation policy applied on the fly.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::AssetPool;
use crate::error::{Result, TdaError};
use crate::exec::Execution;
use crate::policy::{apply_outcome, draw_outcome, AugmentationPolicy};
use crate::raster::RasterImage;
use crate::rng::{self, purpose};

pub const DEFAULT_FEATURE_SIDE: u32 = 32;
pub const MIN_FEATURE_SIDE: u32 = 4;

/// Grayscale features in [0, 1], row-major `side x side`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// ITU-R 601 luma scaled to [0, 1]; integer numerator keeps white at exactly 1.
fn luminance(rgb: [u8; 3]) -> f64 {
    let n = 299 * u32::from(rgb[0]) + 587 * u32::from(rgb[1]) + 114 * u32::from(rgb[2]);
    f64::from(n) / 255_000.0
}

/// Overlap weights of source cells `0..src` with output cell `j` of `dst`.
fn area_weights(src: u32, dst: u32) -> Vec<Vec<(usize, f64)>> {
    let ratio = f64::from(src) / f64::from(dst);
    (0..dst)
        .map(|j| {
            let lo = f64::from(j) * ratio;
            let hi = f64::from(j + 1) * ratio;
            let first = lo.floor() as u32;
            let last = (hi.ceil() as u32).min(src);
            (first..last)
                .filter_map(|i| {
                    let w = (f64::from(i + 1)).min(hi) - f64::from(i).max(lo);
                    (w > 0.0).then_some((i as usize, w))
                })
                .collect()
        })
        .collect()
}

/// Area-average downscale of a row-major grayscale plane.
pub fn area_downscale(plane: &[f64], width: u32, height: u32, side: u32) -> Vec<f64> {
    assert_eq!(plane.len(), width as usize * height as usize);
    let wx = area_weights(width, side);
    let wy = area_weights(height, side);
    let w = width as usize;
    // horizontal pass: height x side
    let mut rows = vec![0.0; height as usize * side as usize];
    for y in 0..height as usize {
        for (j, weights) in wx.iter().enumerate() {
            let (mut acc, mut norm) = (0.0, 0.0);
            for &(x, wt) in weights {
                acc += wt * plane[y * w + x];
                norm += wt;
            }
            rows[y * side as usize + j] = acc / norm;
        }
    }
    let mut out = vec![0.0; side as usize * side as usize];
    for (i, weights) in wy.iter().enumerate() {
        for j in 0..side as usize {
            let (mut acc, mut norm) = (0.0, 0.0);
            for &(y, wt) in weights {
                acc += wt * rows[y * side as usize + j];
                norm += wt;
            }
            out[i * side as usize + j] = (acc / norm).clamp(0.0, 1.0);
        }
    }
    out
}

pub fn featurize(image: &RasterImage, side: u32) -> Result<FeatureVector> {
    if side < MIN_FEATURE_SIDE {
        return Err(TdaError::Parameter(format!(
            "feature side {side} is below the minimum of {MIN_FEATURE_SIDE}"
        )));
    }
    let plane: Vec<f64> = image
        .data()
        .chunks_exact(3)
        .map(|p| luminance([p[0], p[1], p[2]]))
        .collect();
    Ok(FeatureVector(area_downscale(&plane, image.width(), image.height(), side)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    Linear,
    #[serde(rename = "mlp-1h")]
    Mlp { hidden: usize },
}

/// Fully connected layer, `weights` row-major `[outputs, inputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub outputs: usize,
    pub inputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            outputs,
            inputs,
            weights: vec![0.0; outputs * inputs],
            bias: vec![0.0; outputs],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Model output for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Index into the model's class pair.
    pub class: usize,
    /// Probability of the positive class.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub architecture: Architecture,
    pub layers: Vec<Dense>,
    pub input_side: u32,
    pub classes: [String; 2],
    pub positive_class: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, stable for large |z|.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

impl ToyModel {
    /// All-zero parameters.
    pub fn zeros(architecture: Architecture, input_side: u32, classes: [String; 2], positive_class: usize) -> Result<Self> {
        if input_side < MIN_FEATURE_SIDE {
            return Err(TdaError::Parameter(format!("input side {input_side} below {MIN_FEATURE_SIDE}")));
        }
        if positive_class > 1 {
            return Err(TdaError::Parameter("positive class index must be 0 or 1".into()));
        }
        let d = (input_side * input_side) as usize;
        let layers = match architecture {
            Architecture::Linear => vec![Dense::zeros(1, d)],
            Architecture::Mlp { hidden } => {
                if hidden == 0 {
                    return Err(TdaError::Parameter("mlp hidden width must be positive".into()));
                }
                vec![Dense::zeros(hidden, d), Dense::zeros(1, hidden)]
            }
        };
        Ok(Self {
            architecture,
            layers,
            input_side,
            classes,
            positive_class,
        })
    }

    /// Weights uniform in ±1/sqrt(fan_in), biases zero.
    pub fn initialized(
        architecture: Architecture,
        input_side: u32,
        classes: [String; 2],
        positive_class: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(architecture, input_side, classes, positive_class)?;
        let mut stream = rng::stream(seed, &[purpose::INIT]);
        for layer in &mut model.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = stream.random_range(-bound..=bound);
            }
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        (self.input_side * self.input_side) as usize
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Parameters flattened layer by layer as `[weights, bias]`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
    }

    fn apply_update(&mut self, grad: &[f64], lr: f64) {
        let mut k = 0;
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *p -= lr * grad[k];
                k += 1;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Hidden activations (MLP only) and the output logit.
    fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, f64) {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut hidden = Vec::new();
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward(&current);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
                hidden.push(out.clone());
            }
            current = out;
        }
        (hidden, current[0])
    }

    pub fn logit(&self, features: &FeatureVector) -> f64 {
        self.forward(features.as_slice()).1
    }

    /// Probability of the positive class.
    pub fn probability(&self, features: &FeatureVector) -> f64 {
        sigmoid(self.logit(features))
    }

    /// Ties at exactly 0.5 resolve to the positive class.
    pub fn predict_features(&self, features: &FeatureVector) -> Prediction {
        let probability = self.probability(features);
        let class = if probability >= 0.5 {
            self.positive_class
        } else {
            1 - self.positive_class
        };
        Prediction { class, probability }
    }

    pub fn predict(&self, image: &RasterImage) -> Result<Prediction> {
        Ok(self.predict_features(&featurize(image, self.input_side)?))
    }

    fn target(&self, class: usize) -> f64 {
        if class == self.positive_class {
            1.0
        } else {
            0.0
        }
    }

    pub fn loss(&self, features: &FeatureVector, class: usize) -> f64 {
        bce_with_logit(self.logit(features), self.target(class))
    }

    /// Loss and its gradient, flattened in [`ToyModel::params`] order.
    pub fn loss_and_gradient(&self, features: &FeatureVector, class: usize) -> (f64, Vec<f64>) {
        let x = features.as_slice();
        let y = self.target(class);
        let (hidden, z) = self.forward(x);
        let loss = bce_with_logit(z, y);
        let mut grad = vec![0.0; self.param_count()];
        let dz = sigmoid(z) - y;
        match self.layers.as_slice() {
            [out] => {
                let (gw, gb) = grad.split_at_mut(out.weights.len());
                for (g, v) in gw.iter_mut().zip(x) {
                    *g = dz * v;
                }
                gb[0] = dz;
            }
            [first, out] => {
                let h = &hidden[0];
                let first_len = first.param_count();
                let (g_first, g_out) = grad.split_at_mut(first_len);
                let (gw2, gb2) = g_out.split_at_mut(out.weights.len());
                for (g, hv) in gw2.iter_mut().zip(h) {
                    *g = dz * hv;
                }
                gb2[0] = dz;
                let (gw1, gb1) = g_first.split_at_mut(first.weights.len());
                for j in 0..first.outputs {
                    let delta = dz * out.weights[j] * (1.0 - h[j] * h[j]);
                    gb1[j] = delta;
                    for (g, v) in gw1[j * first.inputs..(j + 1) * first.inputs].iter_mut().zip(x) {
                        *g = delta * v;
                    }
                }
            }
            _ => unreachable!("models have one or two layers"),
        }
        (loss, grad)
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }
}

/// Largest relative error between the analytic gradient and central finite
/// differences over every parameter. Pairs where both are exactly zero count
/// as agreement.
pub fn gradient_check(model: &ToyModel, features: &FeatureVector, class: usize, epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(TdaError::Parameter(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    if features.len() != model.input_dim() {
        return Err(TdaError::Parameter(format!(
            "feature length {} does not match model input {}",
            features.len(),
            model.input_dim()
        )));
    }
    let (_, analytic) = model.loss_and_gradient(features, class);
    let base = model.params();
    let mut probe = model.clone();
    let mut params = base.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        params[k] = base[k] + epsilon;
        probe.set_params(&params);
        let plus = probe.loss(features, class);
        params[k] = base[k] - epsilon;
        probe.set_params(&params);
        let minus = probe.loss(features, class);
        params[k] = base[k];
        let numeric = (plus - minus) / (2.0 * epsilon);
        let scale = a.abs().max(numeric.abs());
        if scale > 0.0 {
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::lr_decay")]
    pub lr_decay_per_epoch: f64,
    #[serde(default = "defaults::architecture")]
    pub architecture: Architecture,
    #[serde(default = "defaults::feature_side")]
    pub feature_side: u32,
}

mod defaults {
    use super::*;

    pub fn epochs() -> usize {
        5
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn lr_decay() -> f64 {
        0.9
    }
    pub fn architecture() -> Architecture {
        Architecture::Linear
    }
    pub fn feature_side() -> u32 {
        DEFAULT_FEATURE_SIDE
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            seed: 0,
            lr_decay_per_epoch: defaults::lr_decay(),
            architecture: defaults::architecture(),
            feature_side: defaults::feature_side(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TdaError::Parameter(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(TdaError::Parameter("batch size must be positive".into()));
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return Err(TdaError::Parameter(format!(
                "lr_decay_per_epoch {} outside (0, 1]",
                self.lr_decay_per_epoch
            )));
        }
        if self.feature_side < MIN_FEATURE_SIDE {
            return Err(TdaError::Parameter(format!("feature side {} below {MIN_FEATURE_SIDE}", self.feature_side)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub sample_id: String,
    pub image: RasterImage,
    /// Index into the class pair.
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    pub samples: usize,
    pub augmented: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = Vec::new();
        for rec in &self.epochs {
            serde_json::to_writer(&mut out, rec)?;
            out.push(b'\n');
        }
        Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
    }

    pub fn write_json_lines(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| TdaError::io(path, e))?;
        f.write_all(self.to_json_lines()?.as_bytes())
            .map_err(|e| TdaError::io(path, e))
    }
}

/// Mini-batch SGD. Each sample visit runs through `policy` before
/// featurization; per-sample gradients may be computed in parallel but are
/// summed in batch order, so results do not depend on `exec`.
pub fn train(
    data: &[LabeledImage],
    classes: [String; 2],
    positive_class: usize,
    config: &TrainConfig,
    policy: &AugmentationPolicy,
    pool: &AssetPool,
    exec: Execution,
) -> Result<(ToyModel, TrainLog)> {
    config.validate()?;
    policy.validate()?;
    for (c, label) in classes.iter().enumerate() {
        let n = data.iter().filter(|s| s.class == c).count();
        if n < 2 {
            return Err(TdaError::EmptyInput(format!(
                "class `{label}` has {n} training samples, at least 2 required"
            )));
        }
    }
    if data.iter().any(|s| s.class > 1) {
        return Err(TdaError::Parameter("training labels must be class indices 0 or 1".into()));
    }
    let augmenting = policy.probability_p > 0.0;
    if augmenting {
        pool.require(policy.bias_kind, policy.asset_split)?;
    }

    let mut model = ToyModel::initialized(config.architecture, config.feature_side, classes, positive_class, config.seed)?;
    let side = config.feature_side;
    let clean: Vec<FeatureVector> = exec
        .map(data, |s| featurize(&s.image, side))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        let lr = config.learning_rate * config.lr_decay_per_epoch.powi(epoch as i32);
        order.sort_unstable();
        order.shuffle(&mut rng::stream(config.seed, &[purpose::SHUFFLE, epoch as u64]));
        let (mut loss_sum, mut augmented) = (0.0, 0usize);
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let per_sample = exec.try_map_indexed(batch.len(), |b| -> Result<(f64, Vec<f64>, bool)> {
                let sample = &data[batch[b]];
                let (features, applied) = if augmenting {
                    let mut stream = policy.sample_stream(epoch, &sample.sample_id);
                    let outcome = draw_outcome(policy, &mut stream, pool, sample.image.dims())?;
                    if outcome.applied {
                        let img = apply_outcome(&sample.image, policy, pool, &outcome)?;
                        (featurize(&img, side)?, true)
                    } else {
                        (clean[batch[b]].clone(), false)
                    }
                } else {
                    (clean[batch[b]].clone(), false)
                };
                let (loss, grad) = model.loss_and_gradient(&features, sample.class);
                Ok((loss, grad, applied))
            })?;
            let mut grad = vec![0.0; model.param_count()];
            for (loss, g, applied) in &per_sample {
                loss_sum += loss;
                augmented += usize::from(*applied);
                for (acc, v) in grad.iter_mut().zip(g) {
                    *acc += v;
                }
            }
            let scale = lr / batch.len() as f64;
            model.apply_update(&grad, scale);
            if !loss_sum.is_finite() || !model.is_finite() {
                return Err(TdaError::TrainingDiverged {
                    epoch,
                    step,
                    detail: format!("non-finite loss or parameters (learning rate {lr})"),
                });
            }
        }
        log.epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            mean_loss: loss_sum / data.len() as f64,
            samples: data.len(),
            augmented,
        });
    }
    Ok((model, log))
}

/// On-disk model layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    architecture: Architecture,
    input_side: u32,
    classes: [String; 2],
    positive_class: String,
    layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    shape: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ToyModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            architecture: self.architecture,
            input_side: self.input_side,
            classes: self.classes.clone(),
            positive_class: self.classes[self.positive_class].clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    shape: [l.outputs, l.inputs],
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let positive_class = file
            .classes
            .iter()
            .position(|c| *c == file.positive_class)
            .ok_or_else(|| TdaError::UnknownClass {
                label: file.positive_class.clone(),
                declared: file.classes.to_vec(),
            })?;
        let mut model = Self::zeros(file.architecture, file.input_side, file.classes, positive_class)?;
        if model.layers.len() != file.layers.len() {
            return Err(TdaError::Config("layer count does not match architecture".into()));
        }
        for (layer, lf) in model.layers.iter_mut().zip(file.layers) {
            if lf.shape != [layer.outputs, layer.inputs]
                || lf.weights.len() != layer.weights.len()
                || lf.bias.len() != layer.bias.len()
            {
                return Err(TdaError::Config(format!(
                    "layer shape {:?} does not match expected {:?}",
                    lf.shape,
                    [layer.outputs, layer.inputs]
                )));
            }
            layer.weights = lf.weights;
            layer.bias = lf.bias;
        }
        if !model.is_finite() {
            return Err(TdaError::Config("model file contains non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| TdaError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TdaError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> [String; 2] {
        ["pos".to_string(), "neg".to_string()]
    }

    #[test]
    fn featurize_extremes() {
        let black = RasterImage::filled(64, 48, [0, 0, 0]).unwrap();
        assert!(featurize(&black, 32).unwrap().0.iter().all(|&v| v == 0.0));
        let white = RasterImage::filled(64, 48, [255, 255, 255]).unwrap();
        assert!(featurize(&white, 32).unwrap().0.iter().all(|&v| v == 1.0));
        let odd = RasterImage::filled(37, 29, [255, 255, 255]).unwrap();
        assert!(featurize(&odd, 8).unwrap().0.iter().all(|&v| v == 1.0));
        assert!(featurize(&white, 3).is_err());
    }

    #[test]
    fn area_downscale_two_by_two_to_one() {
        let lum = [luminance([10, 20, 30]), luminance([200, 0, 0]), luminance([0, 90, 0]), luminance([5, 5, 250])];
        let mean = lum.iter().sum::<f64>() / 4.0;
        let out = area_downscale(&lum, 2, 2, 1);
        assert!((out[0] - mean).abs() < 1e-15);
    }

    #[test]
    fn area_downscale_fractional_cells() {
        // 3 source columns into 2 cells: cell 0 = p0 + p1/2 over 1.5
        let plane = [0.0, 1.0, 0.5];
        let out = area_downscale(&plane, 3, 1, 1);
        assert!((out[0] - 0.5).abs() < 1e-15);
        let wide: Vec<f64> = vec![0.0, 1.0, 0.5, 0.0, 1.0, 0.5];
        let out = area_downscale(&wide, 3, 2, 2);
        assert!((out[0] - (0.0 + 0.5) / 1.5).abs() < 1e-12);
        assert!((out[1] - (0.5 + 0.5) / 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_model_ties_to_positive() {
        let m = ToyModel::zeros(Architecture::Linear, 4, classes(), 0).unwrap();
        let f = FeatureVector(vec![0.3; 16]);
        let p = m.predict_features(&f);
        assert_eq!(p.probability, 0.5);
        assert_eq!(p.class, 0);
        let m = ToyModel::zeros(Architecture::Linear, 4, classes(), 1).unwrap();
        assert_eq!(m.predict_features(&f).class, 1);
    }

    #[test]
    fn zero_input_gradient_form() {
        let m = ToyModel::initialized(Architecture::Linear, 4, classes(), 0, 11).unwrap();
        let f = FeatureVector(vec![0.0; 16]);
        let (_, g) = m.loss_and_gradient(&f, 0);
        let p = m.probability(&f);
        assert!(g[..16].iter().all(|&v| v == 0.0));
        assert_eq!(g[16], p - 1.0);
        let (_, g) = m.loss_and_gradient(&f, 1);
        assert_eq!(g[16], p - 0.0);
    }

    #[test]
    fn gradient_check_both_architectures() {
        let mut stream = rng::stream(5, &[]);
        for arch in [Architecture::Linear, Architecture::Mlp { hidden: 5 }] {
            let m = ToyModel::initialized(arch, 4, classes(), 0, 3).unwrap();
            let f = FeatureVector((0..16).map(|_| stream.random::<f64>()).collect());
            let err = gradient_check(&m, &f, 1, 1e-5).unwrap();
            assert!(err < 1e-5, "{arch:?}: {err}");
        }
        let m = ToyModel::zeros(Architecture::Linear, 4, classes(), 0).unwrap();
        assert!(gradient_check(&m, &FeatureVector(vec![0.5; 16]), 0, 1e-2).is_err());
    }

    #[test]
    fn probabilities_stay_in_unit_interval() {
        let mut m = ToyModel::zeros(Architecture::Linear, 4, classes(), 0).unwrap();
        m.layers[0].bias[0] = 800.0;
        let f = FeatureVector(vec![1.0; 16]);
        assert_eq!(m.probability(&f), 1.0);
        m.layers[0].bias[0] = -800.0;
        assert_eq!(m.probability(&f), 0.0);
        assert!(m.loss(&f, 0).is_finite());
    }

    #[test]
    fn model_json_round_trip() {
        let m = ToyModel::initialized(Architecture::Mlp { hidden: 3 }, 4, classes(), 1, 9).unwrap();
        let back = ToyModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bad = m.to_json().unwrap().replace("\"neg\"]", "\"other\"]");
        assert!(ToyModel::from_json(&bad).is_err());
    }

    fn toy_data(n: usize) -> Vec<LabeledImage> {
        let mut stream = rng::stream(17, &[]);
        (0..n)
            .map(|i| {
                let class = i % 2;
                let base: f64 = if class == 0 { 90.0 } else { 160.0 };
                let level = (base + stream.random_range(-15.0..15.0)) as u8;
                LabeledImage {
                    sample_id: format!("s{i}"),
                    image: RasterImage::filled(16, 16, [level, level, level]).unwrap(),
                    class,
                }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = toy_data(8);
        let cfg = TrainConfig { epochs: 0, feature_side: 4, seed: 4, ..TrainConfig::default() };
        let policy = AugmentationPolicy::new(crate::augment::ArtifactKind::Frame, 0.0, 1).unwrap();
        let (m, log) = train(&data, classes(), 0, &cfg, &policy, &AssetPool::default(), Execution::Sequential).unwrap();
        let init = ToyModel::initialized(Architecture::Linear, 4, classes(), 0, 4).unwrap();
        assert_eq!(m, init);
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn separable_training_and_determinism() {
        let data = toy_data(200);
        let cfg = TrainConfig { learning_rate: 0.3, epochs: 5, batch_size: 4, feature_side: 4, seed: 2, ..TrainConfig::default() };
        let policy = AugmentationPolicy::new(crate::augment::ArtifactKind::Frame, 0.0, 1).unwrap();
        let pool = AssetPool::default();
        let (m, log) = train(&data, classes(), 0, &cfg, &policy, &pool, Execution::Sequential).unwrap();
        let acc = data.iter().filter(|s| m.predict(&s.image).unwrap().class == s.class).count() as f64 / data.len() as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
        assert!(log.epochs[4].mean_loss < log.epochs[0].mean_loss);
        let (m2, log2) = train(&data, classes(), 0, &cfg, &policy, &pool, Execution::Parallel).unwrap();
        assert_eq!(m.params(), m2.params());
        assert_eq!(log, log2);
    }

    #[test]
    fn divergence_is_reported() {
        let data = toy_data(16);
        let cfg = TrainConfig { learning_rate: 1e308, epochs: 2, batch_size: 4, feature_side: 4, ..TrainConfig::default() };
        let policy = AugmentationPolicy::new(crate::augment::ArtifactKind::Frame, 0.0, 1).unwrap();
        let err = train(&data, classes(), 0, &cfg, &policy, &AssetPool::default(), Execution::Sequential).unwrap_err();
        assert!(matches!(err, TdaError::TrainingDiverged { .. }), "{err}");
    }

    #[test]
    fn too_few_samples_rejected() {
        let data = toy_data(3);
        let policy = AugmentationPolicy::new(crate::augment::ArtifactKind::Frame, 0.0, 1).unwrap();
        let cfg = TrainConfig { feature_side: 4, ..TrainConfig::default() };
        assert!(train(&data, classes(), 0, &cfg, &policy, &AssetPool::default(), Execution::Sequential).is_err());
    }

    #[test]
    fn log_json_lines() {
        let log = TrainLog {
            epochs: vec![EpochRecord { epoch: 0, learning_rate: 0.1, mean_loss: 0.5, samples: 4, augmented: 1 }],
        };
        let text = log.to_json_lines().unwrap();
        assert_eq!(text.lines().count(), 1);
        let rec: EpochRecord = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(rec, log.epochs[0]);
    }
}
