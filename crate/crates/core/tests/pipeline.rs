use terrastyle_core::heightfield::{apply_colormap, load_heightmap, save_heightmap, to_mesh, BitDepth};
use terrastyle_core::metrics::{compare, ssim, SsimParams};
use terrastyle_core::procgen::{blend_custom_feature, NoiseConfig};
use terrastyle_core::HeightMap;

fn perlin(seed: u64, size: usize) -> HeightMap {
    let cfg: NoiseConfig = serde_json::from_value(serde_json::json!({
        "method": "perlin", "seed": seed, "width": size, "height": size, "base_freq": 1.0 / 32.0
    }))
    .unwrap();
    cfg.generate().unwrap()
}

#[test]
fn generate_blend_save_load_score() {
    let dir = tempfile::tempdir().unwrap();
    let noise = perlin(1, 64);
    let custom = HeightMap::from_fn(64, 64, |r, _| if r < 32 { 1.0 } else { 0.0 });
    let blended = blend_custom_feature(&custom, &noise, 0.5).unwrap();
    let path = dir.path().join("blend.png");
    save_heightmap(&blended, &path, BitDepth::Sixteen).unwrap();
    let back = load_heightmap(&path).unwrap();
    assert!(back.values().iter().zip(blended.values()).all(|(a, b)| (a - b).abs() <= 1.0 / 65535.0));

    let p = SsimParams::default();
    assert_eq!(ssim(&back, &back, &p).unwrap(), 1.0);
    let s = ssim(&back, &noise, &p).unwrap();
    assert!(s > 0.0 && s < 1.0);

    let report = compare(&noise, &perlin(1, 128), &p).unwrap();
    assert!(report.resampled.is_some());
    assert!(report.ssim > 0.5);

    let img = apply_colormap(&back, "terrain").unwrap();
    assert_eq!((img.width, img.height), (64, 64));
    let mesh = to_mesh(&back, 200.0, 1.0).unwrap();
    assert_eq!(mesh.triangles.len(), 2 * 63 * 63);
}
