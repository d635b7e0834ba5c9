//! Augmentation policy and the seeded training-time sampler.
//!
//! Each sample visit draws from its own stream derived from
//! `(policy.seed, epoch, hash(sample_id))`, so outcomes do not depend on batch
//! composition or thread schedule. Draw order within a stream is fixed:
//! Bernoulli gate, then asset index, then scale, then rotation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{insert, ArtifactKind, AssetPool, GeometricTransform, Split};
use crate::error::{Result, TdaError};
use crate::raster::RasterImage;
use crate::rng::{self, purpose, Stream};

/// The probability grid swept by default.
pub const DEFAULT_P_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_GLASSES_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformRanges {
    pub scale_min: f64,
    pub scale_max: f64,
    /// Uniform rotation in [0, 360) when set.
    pub rotate: bool,
}

impl Default for TransformRanges {
    fn default() -> Self {
        Self {
            scale_min: 0.8,
            scale_max: 1.25,
            rotate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationPolicy {
    pub bias_kind: ArtifactKind,
    pub probability_p: f64,
    #[serde(default = "default_train_split")]
    pub asset_split: Split,
    #[serde(default)]
    pub transform_ranges: TransformRanges,
    #[serde(default = "default_glasses_fraction")]
    pub glasses_horizontal_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_train_split() -> Split {
    Split::Train
}

fn default_glasses_fraction() -> f64 {
    DEFAULT_GLASSES_FRACTION
}

impl AugmentationPolicy {
    pub fn new(bias_kind: ArtifactKind, probability_p: f64, seed: u64) -> Result<Self> {
        let policy = Self {
            bias_kind,
            probability_p,
            asset_split: Split::Train,
            transform_ranges: TransformRanges::default(),
            glasses_horizontal_fraction: DEFAULT_GLASSES_FRACTION,
            seed,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.probability_p)?;
        let r = &self.transform_ranges;
        if !(r.scale_min > 0.0 && r.scale_min <= r.scale_max && r.scale_max.is_finite()) {
            return Err(TdaError::Parameter(format!(
                "scale range [{}, {}] must be positive with min <= max",
                r.scale_min, r.scale_max
            )));
        }
        if !(self.glasses_horizontal_fraction > 0.0 && self.glasses_horizontal_fraction <= 1.0) {
            return Err(TdaError::Parameter(format!(
                "glasses_horizontal_fraction {} outside (0, 1]",
                self.glasses_horizontal_fraction
            )));
        }
        Ok(())
    }

    /// Stream for one visit of one sample.
    pub fn sample_stream(&self, epoch: usize, sample_id: &str) -> Stream {
        rng::stream(self.seed, &[purpose::AUGMENT, epoch as u64, rng::key_of(sample_id)])
    }

    pub(crate) fn sample_transform(&self, rng: &mut Stream, mask_dims: (u32, u32), image_dims: (u32, u32)) -> GeometricTransform {
        if self.bias_kind == ArtifactKind::Glasses {
            return GeometricTransform::IDENTITY;
        }
        let r = &self.transform_ranges;
        let scale = if r.scale_max > r.scale_min {
            rng.random_range(r.scale_min..r.scale_max)
        } else {
            r.scale_min
        };
        let rotation = if r.rotate { rng.random_range(0.0..360.0) } else { 0.0 };
        GeometricTransform::centered(scale, rotation, mask_dims, image_dims)
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(TdaError::Parameter(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Bernoulli(p) draw; consumes exactly one `f64` from the stream.
pub fn should_apply(rng: &mut Stream, p: f64) -> Result<bool> {
    check_probability(p)?;
    let u: f64 = rng.random();
    Ok(u < p)
}

/// Audit record of one training-time draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationOutcome {
    pub applied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<GeometricTransform>,
}

impl AugmentationOutcome {
    pub const SKIPPED: AugmentationOutcome = AugmentationOutcome {
        applied: false,
        asset_id: None,
        transform: None,
    };
}

/// Draws the outcome for one sample without touching pixels.
pub fn draw_outcome(
    policy: &AugmentationPolicy,
    rng: &mut Stream,
    pool: &AssetPool,
    image_dims: (u32, u32),
) -> Result<AugmentationOutcome> {
    policy.validate()?;
    let candidates = pool.require(policy.bias_kind, policy.asset_split)?;
    if !should_apply(rng, policy.probability_p)? {
        return Ok(AugmentationOutcome::SKIPPED);
    }
    let asset = candidates[rng.random_range(0..candidates.len())];
    let transform = policy.sample_transform(rng, asset.mask.dims(), image_dims);
    Ok(AugmentationOutcome {
        applied: true,
        asset_id: Some(asset.asset_id.clone()),
        transform: Some(transform),
    })
}

/// With probability `p`, inserts a uniformly chosen pool asset under a
/// sampled transform; otherwise returns the input unchanged.
pub fn augment_sample(
    image: &RasterImage,
    policy: &AugmentationPolicy,
    rng: &mut Stream,
    pool: &AssetPool,
) -> Result<(RasterImage, AugmentationOutcome)> {
    let outcome = draw_outcome(policy, rng, pool, image.dims())?;
    let out = apply_outcome(image, policy, pool, &outcome)?;
    Ok((out, outcome))
}

/// Replays a recorded outcome.
pub fn apply_outcome(
    image: &RasterImage,
    policy: &AugmentationPolicy,
    pool: &AssetPool,
    outcome: &AugmentationOutcome,
) -> Result<RasterImage> {
    match (&outcome.asset_id, &outcome.transform) {
        (Some(id), Some(t)) if outcome.applied => {
            let asset = pool.get(id)?;
            if asset.split != policy.asset_split {
                return Err(TdaError::Config(format!(
                    "asset `{id}` belongs to the {} split, policy uses {}",
                    asset.split, policy.asset_split
                )));
            }
            insert(image, asset, t, policy.glasses_horizontal_fraction)
        }
        _ => Ok(image.clone()),
    }
}
