//! Real-terrain style sources bundled with the library, one per terrain class.
//!
//! | name       | class    | source                                                  |
//! |------------|----------|---------------------------------------------------------|
//! | `mountain` | mountain | USGS DEM, Rocky Mountain National Park (152x152)        |
//! | `river`    | river    | USGS DEM, Jacksboro fault valley, Tennessee (344x344)   |
//! | `coast`    | coast    | NOAA topobathymetry, Strait of Juan de Fuca (91x91)     |

use crate::error::{Error, Result};
use crate::heightfield::{decode_heightmap, HeightMap};

#[derive(Debug, Clone, Copy)]
pub struct BundledStyle {
    pub name: &'static str,
    pub terrain_class: &'static str,
    /// 16-bit grayscale PNG.
    pub png: &'static [u8],
}

impl BundledStyle {
    pub fn load(&self) -> Result<HeightMap> {
        decode_heightmap(self.png)
    }
}

pub const BUNDLED: [BundledStyle; 3] = [
    BundledStyle {
        name: "mountain",
        terrain_class: "mountain",
        png: include_bytes!("../assets/styles/mountain.png"),
    },
    BundledStyle {
        name: "river",
        terrain_class: "river",
        png: include_bytes!("../assets/styles/river.png"),
    },
    BundledStyle {
        name: "coast",
        terrain_class: "coast",
        png: include_bytes!("../assets/styles/coast.png"),
    },
];

pub fn bundled(name: &str) -> Result<&'static BundledStyle> {
    BUNDLED.iter().find(|s| s.name == name).ok_or_else(|| {
        let names: Vec<_> = BUNDLED.iter().map(|s| s.name).collect();
        Error::arg(format!("unknown bundled style {name:?}; available: {}", names.join(", ")))
    })
}
