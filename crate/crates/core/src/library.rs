//! Procedural artifact library: black frames, ruler marks with source
//! imagery, and eyeglasses silhouettes, each split into disjoint train and
//! eval sets.

use rand::Rng;

use crate::augment::{ArtifactAsset, ArtifactKind, AssetPool, Split};
use crate::error::Result;
use crate::raster::{BinaryMask, RasterImage};
use crate::rng::{self, purpose};

pub const TRAIN_FRAMES: usize = 6;
pub const EVAL_FRAMES: usize = 5;
pub const TRAIN_RULERS: usize = 12;
pub const EVAL_RULERS: usize = 5;
pub const TRAIN_GLASSES: usize = 30;
pub const EVAL_GLASSES: usize = 8;
pub const GLASSES_MASK_DIMS: (u32, u32) = (48, 20);

#[derive(Debug, Clone, Copy)]
enum FrameShape {
    /// Everything outside an ellipse with semi-axes `r*rx`, `r*ry`.
    Round { r: f64, rx: f64, ry: f64 },
    /// Border band of relative width `w`.
    Edge { w: f64 },
    Both { r: f64, w: f64 },
}

impl FrameShape {
    fn covers(self, u: f64, v: f64) -> bool {
        let round = |r: f64, rx: f64, ry: f64| ((u / rx).powi(2) + (v / ry).powi(2)).sqrt() > r;
        let edge = |w: f64| u.abs() > 0.5 - w || v.abs() > 0.5 - w;
        match self {
            FrameShape::Round { r, rx, ry } => round(r, rx, ry),
            FrameShape::Edge { w } => edge(w),
            FrameShape::Both { r, w } => round(r, 1.0, 1.0) || edge(w),
        }
    }
}

const fn round(r: f64) -> FrameShape {
    FrameShape::Round { r, rx: 1.0, ry: 1.0 }
}

const TRAIN_FRAME_SHAPES: [FrameShape; TRAIN_FRAMES] = [
    round(0.50),
    round(0.46),
    round(0.42),
    FrameShape::Edge { w: 0.06 },
    FrameShape::Edge { w: 0.10 },
    FrameShape::Round { r: 0.44, rx: 1.0, ry: 0.85 },
];

const EVAL_FRAME_SHAPES: [FrameShape; EVAL_FRAMES] = [
    round(0.48),
    round(0.44),
    FrameShape::Edge { w: 0.08 },
    FrameShape::Round { r: 0.42, rx: 0.85, ry: 1.0 },
    FrameShape::Both { r: 0.47, w: 0.04 },
];

fn frame_mask(shape: FrameShape, size: u32) -> Result<BinaryMask> {
    let s = f64::from(size);
    BinaryMask::from_fn(size, size, |x, y| {
        shape.covers((f64::from(x) + 0.5) / s - 0.5, (f64::from(y) + 0.5) / s - 0.5)
    })
}

/// Six train and five eval frame masks of `size x size`.
pub fn frame_assets(size: u32) -> Result<Vec<ArtifactAsset>> {
    let mut out = Vec::with_capacity(TRAIN_FRAMES + EVAL_FRAMES);
    for (split, shapes) in [(Split::Train, &TRAIN_FRAME_SHAPES[..]), (Split::Eval, &EVAL_FRAME_SHAPES[..])] {
        for (i, shape) in shapes.iter().enumerate() {
            let id = format!("frame-{}-{i:02}", split.as_str());
            out.push(ArtifactAsset::new(id, ArtifactKind::Frame, split, frame_mask(*shape, size)?, None)?);
        }
    }
    Ok(out)
}

/// A straight ruler: baseline plus perpendicular ticks, every fifth one long.
fn ruler_asset(id: String, split: Split, size: u32, stream: &mut rng::Stream) -> Result<ArtifactAsset> {
    let s = f64::from(size);
    let edge = stream.random_range(0..4u32);
    let tilt: f64 = stream.random_range(-0.35..0.35);
    let inset = s * stream.random_range(0.04..0.12);
    let period = s * stream.random_range(0.06..0.11);
    let tick = s * stream.random_range(0.05..0.09);
    let extent = s * stream.random_range(0.45..0.8);
    let start = s * stream.random_range(0.05..0.5);
    // line anchor and inward normal for the chosen edge
    let (anchor, along, normal) = match edge {
        0 => ((start, inset), (1.0, 0.0), (0.0, 1.0)),
        1 => ((s - inset, start), (0.0, 1.0), (-1.0, 0.0)),
        2 => ((s - start, s - inset), (-1.0, 0.0), (0.0, -1.0)),
        _ => ((inset, s - start), (0.0, -1.0), (1.0, 0.0)),
    };
    let (c, sn) = (tilt.cos(), tilt.sin());
    let d = (along.0 * c - along.1 * sn, along.0 * sn + along.1 * c);
    let n = (normal.0 * c - normal.1 * sn, normal.0 * sn + normal.1 * c);
    let mask = BinaryMask::from_fn(size, size, |x, y| {
        let px = f64::from(x) + 0.5 - anchor.0;
        let py = f64::from(y) + 0.5 - anchor.1;
        let a = px * d.0 + py * d.1;
        let t = px * n.0 + py * n.1;
        if !(0.0..=extent).contains(&a) {
            return false;
        }
        let k = (a / period).floor();
        let long = (k as i64) % 5 == 0;
        let len = if long { tick * 1.7 } else { tick };
        t.abs() < 0.75 || (a - k * period < 1.1 && t >= 0.0 && t <= len)
    })?;
    let ink = match stream.random_range(0..3u32) {
        0 => [25, 25, 30],
        1 => [40, 50, 110],
        _ => [90, 60, 40],
    };
    let shade: i32 = stream.random_range(-12..=12);
    let source = RasterImage::from_fn(size, size, |_, _| ink.map(|v: i32| (v + shade).clamp(0, 255) as u8))?;
    ArtifactAsset::new(id, ArtifactKind::Ruler, split, mask, Some(source))
}

pub fn ruler_assets(size: u32, n_train: usize, n_eval: usize, seed: u64) -> Result<Vec<ArtifactAsset>> {
    let mut out = Vec::with_capacity(n_train + n_eval);
    for (split, n) in [(Split::Train, n_train), (Split::Eval, n_eval)] {
        for i in 0..n {
            let mut stream = rng::stream(seed, &[purpose::LIBRARY, 1, split as u64, i as u64]);
            out.push(ruler_asset(format!("ruler-{}-{i:02}", split.as_str()), split, size, &mut stream)?);
        }
    }
    Ok(out)
}

/// Two lenses joined by a bridge; sunglasses have filled lenses.
fn glasses_asset(id: String, split: Split, stream: &mut rng::Stream) -> Result<ArtifactAsset> {
    let (w, h) = GLASSES_MASK_DIMS;
    let (wf, hf) = (f64::from(w), f64::from(h));
    let rx = stream.random_range(0.17..0.23) * wf;
    let ry = stream.random_range(0.32..0.48) * hf;
    let squareness: f64 = stream.random_range(2.0..5.0);
    let rim = stream.random_range(1.2..2.6);
    let sunglasses = stream.random_bool(0.3);
    let gap = stream.random_range(0.04..0.1) * wf;
    let cy = hf * stream.random_range(0.45..0.55);
    let centers = [wf / 2.0 - gap / 2.0 - rx, wf / 2.0 + gap / 2.0 + rx];
    let bridge_y = cy - ry * stream.random_range(0.2..0.6);
    let mask = BinaryMask::from_fn(w, h, |x, y| {
        let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        let lens = centers.iter().any(|&cx| {
            let dist = ((px - cx).abs() / rx).powf(squareness) + ((py - cy).abs() / ry).powf(squareness);
            let inner = ((px - cx).abs() / (rx - rim)).powf(squareness) + ((py - cy).abs() / (ry - rim)).powf(squareness);
            dist <= 1.0 && (sunglasses || inner > 1.0)
        });
        let bridge = (px - wf / 2.0).abs() <= gap / 2.0 + 1.0 && (py - bridge_y).abs() < 1.0;
        let temples = (px < centers[0] - rx + 1.0 || px > centers[1] + rx - 1.0) && (py - (cy - ry * 0.6)).abs() < 1.0;
        lens || bridge || temples
    })?;
    let color = if sunglasses {
        [15, 15, 18]
    } else {
        match stream.random_range(0..3u32) {
            0 => [10, 10, 10],
            1 => [70, 45, 25],
            _ => [120, 120, 130],
        }
    };
    Ok(ArtifactAsset::new(id, ArtifactKind::Glasses, split, mask, None)?.with_color(color))
}

pub fn glasses_assets(n_train: usize, n_eval: usize, seed: u64) -> Result<Vec<ArtifactAsset>> {
    let mut out = Vec::with_capacity(n_train + n_eval);
    for (split, n) in [(Split::Train, n_train), (Split::Eval, n_eval)] {
        for i in 0..n {
            let mut stream = rng::stream(seed, &[purpose::LIBRARY, 2, split as u64, i as u64]);
            out.push(glasses_asset(format!("glasses-{}-{i:02}", split.as_str()), split, &mut stream)?);
        }
    }
    Ok(out)
}

/// Default train/eval library for one artifact kind, sized for `image_size`.
pub fn default_library(kind: ArtifactKind, image_size: u32, seed: u64) -> Result<AssetPool> {
    let assets = match kind {
        ArtifactKind::Frame => frame_assets(image_size)?,
        ArtifactKind::Ruler => ruler_assets(image_size, TRAIN_RULERS, EVAL_RULERS, seed)?,
        ArtifactKind::Glasses => glasses_assets(TRAIN_GLASSES, EVAL_GLASSES, seed)?,
    };
    AssetPool::new(assets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let count = |pool: &AssetPool, kind, split| pool.matching(kind, split).len();
        let frames = default_library(ArtifactKind::Frame, 64, 0).unwrap();
        assert_eq!(count(&frames, ArtifactKind::Frame, Split::Train), 6);
        assert_eq!(count(&frames, ArtifactKind::Frame, Split::Eval), 5);
        let glasses = default_library(ArtifactKind::Glasses, 64, 0).unwrap();
        assert_eq!(count(&glasses, ArtifactKind::Glasses, Split::Train), 30);
        assert_eq!(count(&glasses, ArtifactKind::Glasses, Split::Eval), 8);
        let rulers = default_library(ArtifactKind::Ruler, 64, 0).unwrap();
        assert_eq!(rulers.len(), TRAIN_RULERS + EVAL_RULERS);
    }

    #[test]
    fn frames_leave_the_center_alone() {
        for asset in frame_assets(64).unwrap() {
            let m = &asset.mask;
            assert!(!m.is_empty(), "{}", asset.asset_id);
            for y in 19..45 {
                for x in 19..45 {
                    assert!(!m.get(x, y), "{} covers ({x},{y})", asset.asset_id);
                }
            }
            assert!(m.get(0, 0));
        }
    }

    #[test]
    fn masks_are_distinct_and_nonempty() {
        for assets in [
            ruler_assets(64, 12, 5, 3).unwrap(),
            glasses_assets(30, 8, 3).unwrap(),
            frame_assets(64).unwrap(),
        ] {
            for (i, a) in assets.iter().enumerate() {
                assert!(!a.mask.is_empty(), "{}", a.asset_id);
                for b in &assets[i + 1..] {
                    assert_ne!(a.mask, b.mask, "{} == {}", a.asset_id, b.asset_id);
                }
            }
        }
    }

    #[test]
    fn library_is_seed_deterministic() {
        assert_eq!(ruler_assets(64, 3, 2, 9).unwrap(), ruler_assets(64, 3, 2, 9).unwrap());
        assert_ne!(ruler_assets(64, 3, 2, 9).unwrap(), ruler_assets(64, 3, 2, 10).unwrap());
    }
}
