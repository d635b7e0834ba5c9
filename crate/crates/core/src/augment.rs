//! Bias-insertion compositing: black-frame overlay, ruler transfer through a
//! segmentation mask, and eye-level glasses placement.
//!
//! All operations are pure. Pixels outside the (warped) mask support are
//! copied through untouched.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};
use crate::raster::{BinaryMask, RasterImage};

/// Frames are always pure black.
pub const FRAME_COLOR: [u8; 3] = [0, 0, 0];
pub const DEFAULT_GLASSES_COLOR: [u8; 3] = [0, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Frame,
    Ruler,
    Glasses,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 3] = [ArtifactKind::Frame, ArtifactKind::Ruler, ArtifactKind::Glasses];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Frame => "frame",
            ArtifactKind::Ruler => "ruler",
            ArtifactKind::Glasses => "glasses",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = TdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frame" => Ok(ArtifactKind::Frame),
            "ruler" => Ok(ArtifactKind::Ruler),
            "glasses" => Ok(ArtifactKind::Glasses),
            other => Err(TdaError::Parameter(format!("unknown artifact kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scale and rotation about the scaled mask's center, followed by a
/// translation. The scaled mask is anchored at the target origin before
/// translation; use [`GeometricTransform::centered`] to keep the mask centered
/// on the target instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricTransform {
    pub scale: f64,
    /// Degrees; normalized into [0, 360) when applied.
    pub rotation: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Default for GeometricTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl GeometricTransform {
    pub const IDENTITY: GeometricTransform = GeometricTransform {
        scale: 1.0,
        rotation: 0.0,
        dx: 0.0,
        dy: 0.0,
    };

    /// Transform whose source center lands on the target center.
    pub fn centered(scale: f64, rotation: f64, source: (u32, u32), target: (u32, u32)) -> Self {
        Self {
            scale,
            rotation,
            dx: f64::from(target.0) / 2.0 - scale * f64::from(source.0) / 2.0,
            dy: f64::from(target.1) / 2.0 - scale * f64::from(source.1) / 2.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(TdaError::Parameter(format!(
                "transform scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.rotation.is_finite() && self.dx.is_finite() && self.dy.is_finite()) {
            return Err(TdaError::Parameter("transform has non-finite components".into()));
        }
        Ok(())
    }
}

/// Inverse mapping from target pixel centers to continuous source coordinates.
#[derive(Debug, Clone, Copy)]
struct InverseMap {
    scale: f64,
    cos: f64,
    sin: f64,
    pivot_x: f64,
    pivot_y: f64,
    dx: f64,
    dy: f64,
}

fn exact_cos_sin(degrees: f64) -> (f64, f64) {
    let d = degrees.rem_euclid(360.0);
    // quarter turns are exact so that 0/90/180/270 (and 360) stay bit-exact
    match d {
        0.0 => (1.0, 0.0),
        90.0 => (0.0, 1.0),
        180.0 => (-1.0, 0.0),
        270.0 => (0.0, -1.0),
        x => {
            let r = x.to_radians();
            (r.cos(), r.sin())
        }
    }
}

impl InverseMap {
    fn new(t: &GeometricTransform, source: (u32, u32)) -> Result<Self> {
        t.validate()?;
        let (cos, sin) = exact_cos_sin(t.rotation);
        Ok(Self {
            scale: t.scale,
            cos,
            sin,
            pivot_x: t.scale * f64::from(source.0) / 2.0,
            pivot_y: t.scale * f64::from(source.1) / 2.0,
            dx: t.dx,
            dy: t.dy,
        })
    }

    /// Continuous source coordinates of target pixel `(x, y)`'s center.
    fn source_of(&self, x: u32, y: u32) -> (f64, f64) {
        let qx = f64::from(x) + 0.5 - self.dx - self.pivot_x;
        let qy = f64::from(y) + 0.5 - self.dy - self.pivot_y;
        let ux = self.cos * qx + self.sin * qy;
        let uy = -self.sin * qx + self.cos * qy;
        ((ux + self.pivot_x) / self.scale, (uy + self.pivot_y) / self.scale)
    }
}

fn check_target(target: (u32, u32)) -> Result<()> {
    if target.0 == 0 || target.1 == 0 {
        return Err(TdaError::Parameter("target dimensions must be positive".into()));
    }
    Ok(())
}

/// Nearest-neighbor warp; the result stays binary and is 0 outside the source.
pub fn warp_mask(mask: &BinaryMask, transform: &GeometricTransform, target: (u32, u32)) -> Result<BinaryMask> {
    check_target(target)?;
    let map = InverseMap::new(transform, mask.dims())?;
    let (sw, sh) = (f64::from(mask.width()), f64::from(mask.height()));
    BinaryMask::from_fn(target.0, target.1, |x, y| {
        let (sx, sy) = map.source_of(x, y);
        if sx < 0.0 || sy < 0.0 || sx >= sw || sy >= sh {
            return false;
        }
        mask.get(sx.floor() as u32, sy.floor() as u32)
    })
}

/// Bilinear warp; target pixels whose center maps outside the source are 0.
pub fn warp_image(image: &RasterImage, transform: &GeometricTransform, target: (u32, u32)) -> Result<RasterImage> {
    check_target(target)?;
    let map = InverseMap::new(transform, image.dims())?;
    RasterImage::from_fn(target.0, target.1, |x, y| {
        let (sx, sy) = map.source_of(x, y);
        sample_bilinear(image, sx, sy)
    })
}

fn sample_bilinear(image: &RasterImage, sx: f64, sy: f64) -> [u8; 3] {
    let (w, h) = (f64::from(image.width()), f64::from(image.height()));
    if sx < 0.0 || sy < 0.0 || sx >= w || sy >= h {
        return [0, 0, 0];
    }
    // pixel centers sit at integer + 0.5; neighbors clamp at the border
    let px = (sx - 0.5).max(0.0);
    let py = (sy - 0.5).max(0.0);
    let x0 = (px.floor() as u32).min(image.width() - 1);
    let y0 = (py.floor() as u32).min(image.height() - 1);
    let x1 = (x0 + 1).min(image.width() - 1);
    let y1 = (y0 + 1).min(image.height() - 1);
    let fx = px - f64::from(x0);
    let fy = py - f64::from(y0);
    let (a, b, c, d) = (image.pixel(x0, y0), image.pixel(x1, y0), image.pixel(x0, y1), image.pixel(x1, y1));
    let mut out = [0u8; 3];
    for ch in 0..3 {
        let top = f64::from(a[ch]) * (1.0 - fx) + f64::from(b[ch]) * fx;
        let bottom = f64::from(c[ch]) * (1.0 - fx) + f64::from(d[ch]) * fx;
        let v = top * (1.0 - fy) + bottom * fy;
        out[ch] = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// One insertable bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactAsset {
    pub asset_id: String,
    pub kind: ArtifactKind,
    pub split: Split,
    pub mask: BinaryMask,
    /// Ruler source imagery; present iff `kind == Ruler`.
    pub source: Option<RasterImage>,
    /// Fill color for glasses silhouettes.
    pub color: Option<[u8; 3]>,
}

impl ArtifactAsset {
    pub fn new(
        asset_id: impl Into<String>,
        kind: ArtifactKind,
        split: Split,
        mask: BinaryMask,
        source: Option<RasterImage>,
    ) -> Result<Self> {
        let asset = Self {
            asset_id: asset_id.into(),
            kind,
            split,
            mask,
            source,
            color: None,
        };
        asset.validate()?;
        Ok(asset)
    }

    pub fn with_color(mut self, color: [u8; 3]) -> Self {
        self.color = Some(color);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let malformed = |reason: String| TdaError::MalformedAsset {
            asset_id: self.asset_id.clone(),
            reason,
        };
        match (self.kind, &self.source) {
            (ArtifactKind::Ruler, None) => Err(malformed("ruler asset has no source image".into())),
            (ArtifactKind::Ruler, Some(src)) if src.dims() != self.mask.dims() => Err(malformed(format!(
                "source {:?} and mask {:?} dimensions differ",
                src.dims(),
                self.mask.dims()
            ))),
            (ArtifactKind::Frame | ArtifactKind::Glasses, Some(_)) => {
                Err(malformed(format!("{} asset must not carry a source image", self.kind)))
            }
            _ => Ok(()),
        }
    }

    fn expect_kind(&self, expected: ArtifactKind) -> Result<()> {
        if self.kind != expected {
            return Err(TdaError::KindMismatch {
                asset_id: self.asset_id.clone(),
                expected: expected.to_string(),
                found: self.kind.to_string(),
            });
        }
        Ok(())
    }
}

/// Sets every pixel under the warped frame mask to black.
pub fn apply_frame(image: &RasterImage, asset: &ArtifactAsset, transform: &GeometricTransform) -> Result<RasterImage> {
    asset.expect_kind(ArtifactKind::Frame)?;
    let warped = warp_mask(&asset.mask, transform, image.dims())?;
    let mut out = image.clone();
    paint(&mut out, &warped, |_, _| FRAME_COLOR);
    Ok(out)
}

/// Hard-copies the warped ruler source into the target wherever the warped
/// mask is set.
pub fn transfer_artifact(target: &RasterImage, asset: &ArtifactAsset, transform: &GeometricTransform) -> Result<RasterImage> {
    asset.expect_kind(ArtifactKind::Ruler)?;
    let source = asset.source.as_ref().ok_or_else(|| TdaError::MalformedAsset {
        asset_id: asset.asset_id.clone(),
        reason: "ruler asset has no source image".into(),
    })?;
    let warped_mask = warp_mask(&asset.mask, transform, target.dims())?;
    let map = InverseMap::new(transform, source.dims())?;
    let mut out = target.clone();
    paint(&mut out, &warped_mask, |x, y| {
        let (sx, sy) = map.source_of(x, y);
        sample_bilinear(source, sx, sy)
    });
    Ok(out)
}

fn paint(image: &mut RasterImage, mask: &BinaryMask, mut color: impl FnMut(u32, u32) -> [u8; 3]) {
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                image.set_pixel(x, y, color(x, y));
            }
        }
    }
}

/// Where a glasses mask lands on an image of the given size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlassesPlacement {
    pub left: i64,
    pub top: i64,
    pub width: u32,
    pub height: u32,
}

/// Uniform scale to `horizontal_fraction` of the image width, centered
/// horizontally on column `width / 2` and vertically on row `height / 3`.
pub fn glasses_placement(
    mask_dims: (u32, u32),
    image_dims: (u32, u32),
    horizontal_fraction: f64,
) -> Result<GlassesPlacement> {
    if !(horizontal_fraction > 0.0 && horizontal_fraction <= 1.0) {
        return Err(TdaError::Parameter(format!(
            "glasses horizontal fraction must be in (0, 1], got {horizontal_fraction}"
        )));
    }
    let (mw, mh) = mask_dims;
    let (iw, ih) = image_dims;
    let width = ((horizontal_fraction * f64::from(iw)).round() as u32).clamp(1, iw);
    let scale = f64::from(width) / f64::from(mw);
    let height = ((f64::from(mh) * scale).round() as u32).max(1);
    let center_x = i64::from(iw / 2);
    let center_y = i64::from(ih / 3);
    Ok(GlassesPlacement {
        left: center_x - i64::from((width - 1) / 2),
        top: center_y - i64::from((height - 1) / 2),
        width,
        height,
    })
}

/// Resamples the glasses mask into image coordinates (nearest neighbor).
pub fn placed_glasses_mask(asset: &ArtifactAsset, image_dims: (u32, u32), horizontal_fraction: f64) -> Result<BinaryMask> {
    let place = glasses_placement(asset.mask.dims(), image_dims, horizontal_fraction)?;
    if place.height > image_dims.1 {
        return Err(TdaError::PlacementOverflow {
            asset_id: asset.asset_id.clone(),
            scaled_height: place.height,
            image_height: image_dims.1,
        });
    }
    let (mw, mh) = (f64::from(asset.mask.width()), f64::from(asset.mask.height()));
    BinaryMask::from_fn(image_dims.0, image_dims.1, |x, y| {
        let bx = i64::from(x) - place.left;
        let by = i64::from(y) - place.top;
        if bx < 0 || by < 0 || bx >= i64::from(place.width) || by >= i64::from(place.height) {
            return false;
        }
        let sx = ((bx as f64 + 0.5) * mw / f64::from(place.width)).floor() as u32;
        let sy = ((by as f64 + 0.5) * mh / f64::from(place.height)).floor() as u32;
        asset.mask.get(sx.min(asset.mask.width() - 1), sy.min(asset.mask.height() - 1))
    })
}

/// Paints the glasses silhouette at eye level. No rotation, no random scale.
pub fn place_glasses(face: &RasterImage, asset: &ArtifactAsset, horizontal_fraction: f64) -> Result<RasterImage> {
    asset.expect_kind(ArtifactKind::Glasses)?;
    let placed = placed_glasses_mask(asset, face.dims(), horizontal_fraction)?;
    let color = asset.color.unwrap_or(DEFAULT_GLASSES_COLOR);
    let mut out = face.clone();
    paint(&mut out, &placed, |_, _| color);
    Ok(out)
}

/// Applies `asset` with the operation matching its kind. `transform` is
/// ignored for glasses.
pub fn insert(
    image: &RasterImage,
    asset: &ArtifactAsset,
    transform: &GeometricTransform,
    glasses_horizontal_fraction: f64,
) -> Result<RasterImage> {
    match asset.kind {
        ArtifactKind::Frame => apply_frame(image, asset, transform),
        ArtifactKind::Ruler => transfer_artifact(image, asset, transform),
        ArtifactKind::Glasses => place_glasses(image, asset, glasses_horizontal_fraction),
    }
}

/// The untransformed placement used for evaluation-time insertion.
pub fn identity_for(asset: &ArtifactAsset, image_dims: (u32, u32)) -> GeometricTransform {
    GeometricTransform::centered(1.0, 0.0, asset.mask.dims(), image_dims)
}

/// One entry of the JSON asset index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetIndexEntry {
    pub asset_id: String,
    pub kind: ArtifactKind,
    pub split: Split,
    pub mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssetIndex {
    pub assets: Vec<AssetIndexEntry>,
}

/// In-memory asset collection, kept sorted by asset id.
#[derive(Debug, Clone, Default)]
pub struct AssetPool {
    assets: Vec<ArtifactAsset>,
}

impl AssetPool {
    pub fn new(mut assets: Vec<ArtifactAsset>) -> Result<Self> {
        assets.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
        for pair in assets.windows(2) {
            if pair[0].asset_id == pair[1].asset_id {
                return Err(TdaError::Config(format!("duplicate asset id `{}`", pair[0].asset_id)));
            }
        }
        for a in &assets {
            a.validate()?;
        }
        Ok(Self { assets })
    }

    pub fn assets(&self) -> &[ArtifactAsset] {
        &self.assets
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn get(&self, asset_id: &str) -> Result<&ArtifactAsset> {
        self.assets
            .binary_search_by(|a| a.asset_id.as_str().cmp(asset_id))
            .map(|i| &self.assets[i])
            .map_err(|_| TdaError::UnknownAsset(asset_id.to_string()))
    }

    /// Assets of one kind and split, in asset-id order.
    pub fn matching(&self, kind: ArtifactKind, split: Split) -> Vec<&ArtifactAsset> {
        self.assets
            .iter()
            .filter(|a| a.kind == kind && a.split == split)
            .collect()
    }

    pub fn require(&self, kind: ArtifactKind, split: Split) -> Result<Vec<&ArtifactAsset>> {
        let found = self.matching(kind, split);
        if found.is_empty() {
            return Err(TdaError::EmptyPool {
                kind: kind.to_string(),
                split: split.to_string(),
            });
        }
        Ok(found)
    }

    /// Loads an index file; relative paths resolve against its directory.
    pub fn load_index(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TdaError::io(path, e))?;
        let index: AssetIndex = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let assets = index
            .assets
            .into_iter()
            .map(|entry| {
                let mask = BinaryMask::load_png(base.join(&entry.mask))?;
                let source = entry
                    .source
                    .as_ref()
                    .map(|s| RasterImage::load_png(base.join(s)))
                    .transpose()?;
                let mut asset = ArtifactAsset::new(entry.asset_id, entry.kind, entry.split, mask, source)?;
                asset.color = entry.color;
                Ok(asset)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(assets)
    }

    /// Writes masks and sources as PNG under `dir` plus `dir/index.json`.
    pub fn save_index(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| TdaError::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.assets.len());
        for a in &self.assets {
            let mask_rel = PathBuf::from(format!("{}_mask.png", a.asset_id));
            a.mask.save_png(dir.join(&mask_rel))?;
            let source_rel = match &a.source {
                Some(src) => {
                    let rel = PathBuf::from(format!("{}_source.png", a.asset_id));
                    src.save_png(dir.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            entries.push(AssetIndexEntry {
                asset_id: a.asset_id.clone(),
                kind: a.kind,
                split: a.split,
                mask: mask_rel,
                source: source_rel,
                color: a.color,
            });
        }
        let index_path = dir.join("index.json");
        let json = serde_json::to_string_pretty(&AssetIndex { assets: entries })?;
        std::fs::write(&index_path, json).map_err(|e| TdaError::io(&index_path, e))?;
        Ok(index_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> RasterImage {
        RasterImage::from_fn(w, h, |x, y| [(x * 7 + 1) as u8, (y * 5 + 2) as u8, 200]).unwrap()
    }

    fn frame(mask: BinaryMask) -> ArtifactAsset {
        ArtifactAsset::new("f", ArtifactKind::Frame, Split::Train, mask, None).unwrap()
    }

    #[test]
    fn identity_and_full_turn_are_bit_exact() {
        let mask = BinaryMask::from_fn(13, 9, |x, y| (x * 3 + y * 5) % 7 < 3).unwrap();
        assert_eq!(warp_mask(&mask, &GeometricTransform::IDENTITY, mask.dims()).unwrap(), mask);
        let turn = GeometricTransform { rotation: 360.0, ..GeometricTransform::IDENTITY };
        assert_eq!(warp_mask(&mask, &turn, mask.dims()).unwrap(), mask);
        let img = gradient(13, 9);
        assert_eq!(warp_image(&img, &GeometricTransform::IDENTITY, img.dims()).unwrap(), img);
        assert_eq!(warp_image(&img, &turn, img.dims()).unwrap(), img);
    }

    #[test]
    fn doubling_scale_maps_pixel_to_two_by_two_block() {
        let mut mask = BinaryMask::empty(8, 8).unwrap();
        mask.set(2, 2, true);
        let t = GeometricTransform { scale: 2.0, ..GeometricTransform::IDENTITY };
        let warped = warp_mask(&mask, &t, (8, 8)).unwrap();
        // brute force: target pixel center (x+.5)/2 must fall in source cell [2,3)
        for y in 0..8 {
            for x in 0..8 {
                let sx = (f64::from(x) + 0.5) / 2.0;
                let sy = (f64::from(y) + 0.5) / 2.0;
                let expect = sx.floor() == 2.0 && sy.floor() == 2.0;
                assert_eq!(warped.get(x, y), expect, "({x},{y})");
            }
        }
        assert_eq!(warped.popcount(), 4);
        assert!(warped.get(4, 4) && warped.get(5, 5));
    }

    #[test]
    fn quarter_turn_rotates_about_center() {
        let mut mask = BinaryMask::empty(8, 8).unwrap();
        mask.set(0, 0, true);
        let t = GeometricTransform { rotation: 90.0, ..GeometricTransform::IDENTITY };
        let warped = warp_mask(&mask, &t, (8, 8)).unwrap();
        assert_eq!(warped.popcount(), 1);
        assert!(warped.get(7, 0));
    }

    #[test]
    fn non_positive_scale_is_rejected() {
        let mask = BinaryMask::full(8, 8).unwrap();
        let t = GeometricTransform { scale: 0.0, ..GeometricTransform::IDENTITY };
        assert!(matches!(warp_mask(&mask, &t, (8, 8)), Err(TdaError::Parameter(_))));
        let t = GeometricTransform { scale: -1.0, ..GeometricTransform::IDENTITY };
        assert!(warp_mask(&mask, &t, (8, 8)).is_err());
        assert!(warp_mask(&mask, &GeometricTransform::IDENTITY, (0, 8)).is_err());
    }

    #[test]
    fn frame_empty_full_and_ring() {
        let img = gradient(16, 16);
        let id = GeometricTransform::IDENTITY;
        let out = apply_frame(&img, &frame(BinaryMask::empty(16, 16).unwrap()), &id).unwrap();
        assert_eq!(out, img);
        let out = apply_frame(&img, &frame(BinaryMask::full(16, 16).unwrap()), &id).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));

        let ring = BinaryMask::from_fn(16, 16, |x, y| x < 2 || y < 2 || x >= 14 || y >= 14).unwrap();
        let k = ring.popcount();
        let out = apply_frame(&img, &frame(ring.clone()), &id).unwrap();
        assert_eq!(out.diff_count(&img), k);
        for y in 0..16 {
            for x in 0..16 {
                if ring.get(x, y) {
                    assert_eq!(out.pixel(x, y), [0, 0, 0]);
                } else {
                    assert_eq!(out.pixel(x, y), img.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn frame_rejects_wrong_kind() {
        let img = gradient(8, 8);
        let g = ArtifactAsset::new("g", ArtifactKind::Glasses, Split::Eval, BinaryMask::full(4, 2).unwrap(), None)
            .unwrap();
        assert!(matches!(
            apply_frame(&img, &g, &GeometricTransform::IDENTITY),
            Err(TdaError::KindMismatch { .. })
        ));
    }

    #[test]
    fn ruler_transfer_cases() {
        let target = RasterImage::filled(10, 10, [10, 20, 30]).unwrap();
        let source = RasterImage::from_fn(10, 10, |x, y| [x as u8 + 100, y as u8 + 100, 255]).unwrap();
        let id = GeometricTransform::IDENTITY;

        let empty = ArtifactAsset::new("r0", ArtifactKind::Ruler, Split::Train, BinaryMask::empty(10, 10).unwrap(), Some(source.clone())).unwrap();
        assert_eq!(transfer_artifact(&target, &empty, &id).unwrap(), target);

        let full = ArtifactAsset::new("r1", ArtifactKind::Ruler, Split::Train, BinaryMask::full(10, 10).unwrap(), Some(source.clone())).unwrap();
        assert_eq!(transfer_artifact(&target, &full, &id).unwrap(), source);

        let stripe = BinaryMask::from_fn(10, 10, |x, y| y == 4 && (3..8).contains(&x)).unwrap();
        let asset = ArtifactAsset::new("r2", ArtifactKind::Ruler, Split::Train, stripe, Some(source.clone())).unwrap();
        let out = transfer_artifact(&target, &asset, &id).unwrap();
        assert_eq!(out.diff_count(&target), 5);
        for x in 3..8 {
            assert_eq!(out.pixel(x, 4), source.pixel(x, 4));
        }
    }

    #[test]
    fn ruler_without_source_is_malformed() {
        let r = ArtifactAsset::new("r", ArtifactKind::Ruler, Split::Train, BinaryMask::full(8, 8).unwrap(), None);
        assert!(matches!(r, Err(TdaError::MalformedAsset { .. })));
        // bypassing the constructor still fails at use time
        let asset = ArtifactAsset {
            asset_id: "r".into(),
            kind: ArtifactKind::Ruler,
            split: Split::Train,
            mask: BinaryMask::full(8, 8).unwrap(),
            source: None,
            color: None,
        };
        let img = gradient(8, 8);
        assert!(matches!(
            transfer_artifact(&img, &asset, &GeometricTransform::IDENTITY),
            Err(TdaError::MalformedAsset { .. })
        ));
    }

    fn glasses(mask: BinaryMask) -> ArtifactAsset {
        ArtifactAsset::new("g", ArtifactKind::Glasses, Split::Eval, mask, None).unwrap()
    }

    #[test]
    fn glasses_single_pixel_lands_at_center_third() {
        let face = RasterImage::filled(30, 24, [200, 180, 160]).unwrap();
        let asset = glasses(BinaryMask::full(1, 1).unwrap());
        let out = place_glasses(&face, &asset, 1.0 / 30.0).unwrap();
        assert_eq!(out.diff_count(&face), 1);
        assert_eq!(out.pixel(15, 8), [0, 0, 0]);
    }

    #[test]
    fn glasses_on_224_face_center_row() {
        let face = RasterImage::filled(224, 224, [200, 180, 160]).unwrap();
        for (mw, mh) in [(40, 16), (41, 15), (50, 21), (60, 20)] {
            let asset = glasses(BinaryMask::full(mw, mh).unwrap());
            let out = place_glasses(&face, &asset, 0.6).unwrap();
            let rows: Vec<u32> = (0..224)
                .filter(|&y| (0..224).any(|x| out.pixel(x, y) != face.pixel(x, y)))
                .collect();
            let center = f64::from(rows[0] + rows[rows.len() - 1]) / 2.0;
            assert!((74.0..=75.0).contains(&center), "{mw}x{mh}: center {center}");
            let cols: Vec<u32> = (0..224)
                .filter(|&x| out.pixel(x, rows[0]) != face.pixel(x, rows[0]))
                .collect();
            assert_eq!(cols.len(), 134);
        }
    }

    #[test]
    fn glasses_empty_mask_and_overflow() {
        let face = RasterImage::filled(32, 32, [1, 2, 3]).unwrap();
        let out = place_glasses(&face, &glasses(BinaryMask::empty(10, 4).unwrap()), 0.6).unwrap();
        assert_eq!(out, face);
        let tall = glasses(BinaryMask::full(4, 40).unwrap());
        assert!(matches!(
            place_glasses(&face, &tall, 0.6),
            Err(TdaError::PlacementOverflow { .. })
        ));
    }

    #[test]
    fn glasses_use_stored_color() {
        let face = RasterImage::filled(32, 32, [1, 2, 3]).unwrap();
        let asset = glasses(BinaryMask::full(4, 2).unwrap()).with_color([9, 8, 7]);
        let out = place_glasses(&face, &asset, 0.5).unwrap();
        assert_eq!(out.pixel(16, 10), [9, 8, 7]);
    }

    #[test]
    fn index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let src = gradient(8, 8);
        let pool = AssetPool::new(vec![
            frame(BinaryMask::from_fn(8, 8, |x, _| x == 0).unwrap()),
            ArtifactAsset::new("r", ArtifactKind::Ruler, Split::Eval, BinaryMask::full(8, 8).unwrap(), Some(src)).unwrap(),
            glasses(BinaryMask::full(3, 1).unwrap()).with_color([1, 1, 1]),
        ])
        .unwrap();
        let idx = pool.save_index(dir.path()).unwrap();
        let back = AssetPool::load_index(idx).unwrap();
        assert_eq!(back.assets(), pool.assets());
        assert!(back.get("nope").is_err());
        assert_eq!(back.matching(ArtifactKind::Ruler, Split::Eval).len(), 1);
        assert!(matches!(back.require(ArtifactKind::Ruler, Split::Train), Err(TdaError::EmptyPool { .. })));
    }
}
