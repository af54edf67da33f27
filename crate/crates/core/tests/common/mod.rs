use terrastyle_core::procgen::{generate_explicit, ExplicitNoiseConfig};
use terrastyle_core::styles::bundled;
use terrastyle_core::HeightMap;

/// 128x128 explicit-noise content and the mountain style at the same size.
pub fn desk_pair() -> (HeightMap, HeightMap) {
    let cfg = ExplicitNoiseConfig {
        target_dim: 128,
        seed: 7,
        ..Default::default()
    };
    let content = generate_explicit(&cfg).unwrap();
    let style = bundled("mountain").unwrap().load().unwrap().resample(128, 128);
    (content, style)
}
