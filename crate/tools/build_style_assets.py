#!/usr/bin/env python3
"""Build the bundled style height maps from public DEM samples.

Sources (all shipped inside pip packages):
  mountain  earthpy example-data/rmnp-dem.tif   Rocky Mountain National Park, USGS 3DEP
  river     matplotlib sample_data/jacksboro_fault_dem.npz   Jacksboro fault valley, TN
  coast     matplotlib sample_data/topobathy.npz   Juan de Fuca / Puget Sound topobathymetry

Each map is center-cropped to a square, normalized to [0, 1] and written as a
16-bit grayscale PNG to crates/core/assets/styles/<class>.png.

Usage:
  pip download --no-deps earthpy && unzip earthpy-*.whl -d /tmp/earthpy
  python3 tools/build_style_assets.py --earthpy /tmp/earthpy/earthpy
"""

import argparse
import pathlib

import matplotlib
import numpy as np
from PIL import Image

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "crates" / "core" / "assets" / "styles"


def square(a):
    h, w = a.shape
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    return a[top : top + s, left : left + s]


def write(name, elevation):
    a = square(np.asarray(elevation, dtype=np.float64))
    lo, hi = a.min(), a.max()
    codes = np.floor((a - lo) / (hi - lo) * 65535 + 0.5).astype(np.uint16)
    OUT.mkdir(parents=True, exist_ok=True)
    Image.fromarray(codes).save(OUT / f"{name}.png")
    print(f"{name}: {codes.shape[1]}x{codes.shape[0]}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--earthpy", type=pathlib.Path, required=True, help="unpacked earthpy package directory")
    args = parser.parse_args()

    sample = pathlib.Path(matplotlib.get_data_path()) / "sample_data"
    write("mountain", np.array(Image.open(args.earthpy / "example-data" / "rmnp-dem.tif")))
    write("river", np.load(sample / "jacksboro_fault_dem.npz")["elevation"])
    write("coast", np.load(sample / "topobathy.npz")["topo"])


if __name__ == "__main__":
    main()
