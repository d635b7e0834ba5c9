use proptest::prelude::*;
use tda_core::augment::{apply_frame, warp_mask, GeometricTransform};
use tda_core::{ArtifactAsset, ArtifactKind, BinaryMask, RasterImage, Split};

fn image() -> impl Strategy<Value = RasterImage> {
    (8u32..32, 8u32..32).prop_flat_map(|(w, h)| {
        prop::collection::vec(1u8..=255, (w * h * 3) as usize).prop_map(move |d| RasterImage::new(w, h, d).unwrap())
    })
}

fn frame() -> impl Strategy<Value = ArtifactAsset> {
    (4u32..24, 4u32..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(0u8..=1, (w * h) as usize).prop_map(move |v| {
            ArtifactAsset::new("f", ArtifactKind::Frame, Split::Train, BinaryMask::new(w, h, v).unwrap(), None).unwrap()
        })
    })
}

fn transform() -> impl Strategy<Value = GeometricTransform> {
    (0.5f64..2.0, 0.0f64..360.0, -16.0f64..16.0, -16.0f64..16.0)
        .prop_map(|(scale, rotation, dx, dy)| GeometricTransform { scale, rotation, dx, dy })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn frame_is_local_exact_and_idempotent(img in image(), asset in frame(), t in transform()) {
        let warped = warp_mask(&asset.mask, &t, img.dims()).unwrap();
        let out = apply_frame(&img, &asset, &t).unwrap();
        for y in 0..img.height() {
            for x in 0..img.width() {
                if warped.get(x, y) {
                    prop_assert_eq!(out.pixel(x, y), [0, 0, 0]);
                } else {
                    prop_assert_eq!(out.pixel(x, y), img.pixel(x, y));
                }
            }
        }
        prop_assert_eq!(out.diff_count(&img), warped.popcount());
        prop_assert_eq!(apply_frame(&out, &asset, &t).unwrap(), out);
    }

    #[test]
    fn full_turn_matches_identity(img in image(), asset in frame(), turns in 1i32..4) {
        let t = GeometricTransform { rotation: 360.0 * f64::from(turns), ..GeometricTransform::IDENTITY };
        prop_assert_eq!(
            apply_frame(&img, &asset, &t).unwrap(),
            apply_frame(&img, &asset, &GeometricTransform::IDENTITY).unwrap()
        );
    }
}
