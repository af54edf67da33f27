#!/usr/bin/env python3
"""Convert torchvision VGG-19 weights into a terrastyle weight archive.

terrastyle reads a safetensors file with `conv{g}_{i}.weight` (out x in x 3 x 3)
and `conv{g}_{i}.bias` (out) in float32 for the 16 convolutions of the VGG-19
trunk. See docs/weights.md for the layer table.

terrastyle feeds the network RGB pixels in 0..255 with the ImageNet mean
subtracted. torchvision models expect (x / 255 - mean) / std instead, so by default
the first convolution is rescaled by 1 / (255 * std) per input channel, which
makes the two conventions produce identical activations.

Usage:
  python3 tools/convert_vgg19.py --out vgg19.safetensors                # download pretrained
  python3 tools/convert_vgg19.py --state-dict vgg19.pth --out vgg19.safetensors
  python3 tools/convert_vgg19.py --state-dict caffe.pth --no-fold --out vgg19.safetensors
"""

import argparse
import pathlib
import sys

import torch
from safetensors.torch import save_file

# torchvision `features` indices of the 16 convolutions, in order.
FEATURE_INDICES = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30, 32, 34]
GROUP_SIZES = [2, 2, 4, 4, 4]
TORCHVISION_MEAN = (0.485, 0.456, 0.406)
TORCHVISION_STD = (0.229, 0.224, 0.225)
# Channel means terrastyle subtracts from 0..255 input.
INPUT_MEAN = (123.68, 116.779, 103.939)


def layer_names():
    return [f"conv{g + 1}_{i + 1}" for g, n in enumerate(GROUP_SIZES) for i in range(n)]


def mapping():
    """(torchvision key prefix, terrastyle name) for every convolution."""
    return [(f"features.{idx}", name) for idx, name in zip(FEATURE_INDICES, layer_names())]


def fold_normalization(weight, bias):
    """Rewrite conv1_1 so `255 * x - INPUT_MEAN` gives the activations torchvision
    computes from `(x - mean) / std`. Exact except where the kernel reads padding."""
    std = torch.tensor(TORCHVISION_STD, dtype=torch.float64)
    shift = (torch.tensor(INPUT_MEAN, dtype=torch.float64) - 255.0 * torch.tensor(TORCHVISION_MEAN, dtype=torch.float64))
    weight = weight / (255.0 * std).view(1, 3, 1, 1)
    bias = bias + (weight.sum(dim=(2, 3)) * shift.view(1, 3)).sum(dim=1)
    return weight, bias


def convert(state_dict, fold=True):
    out = {}
    for src, dst in mapping():
        try:
            weight = state_dict[f"{src}.weight"]
            bias = state_dict[f"{src}.bias"]
        except KeyError as e:
            raise SystemExit(f"state dict has no entry {e.args[0]}; is it a VGG-19?")
        if weight.dim() != 4 or tuple(weight.shape[2:]) != (3, 3):
            raise SystemExit(f"{src}.weight has shape {tuple(weight.shape)}, expected out x in x 3 x 3")
        weight = weight.detach().to(torch.float64).clone()
        bias = bias.detach().to(torch.float64).clone()
        if fold and dst == "conv1_1":
            weight, bias = fold_normalization(weight, bias)
        out[f"{dst}.weight"] = weight.to(torch.float32).contiguous()
        out[f"{dst}.bias"] = bias.to(torch.float32).contiguous()
    return out


def load_state_dict(path):
    if path is None:
        from torchvision.models import VGG19_Weights, vgg19

        return vgg19(weights=VGG19_Weights.IMAGENET1K_V1).state_dict()
    obj = torch.load(path, map_location="cpu", weights_only=True)
    return obj.state_dict() if hasattr(obj, "state_dict") else obj


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--state-dict", type=pathlib.Path, help="torchvision-layout VGG-19 .pth (default: download pretrained)")
    ap.add_argument("--out", type=pathlib.Path, required=True)
    ap.add_argument(
        "--no-fold",
        action="store_true",
        help="weights already expect 0..255 mean-subtracted RGB input; copy conv1_1 unchanged",
    )
    args = ap.parse_args(argv)
    tensors = convert(load_state_dict(args.state_dict), fold=not args.no_fold)
    save_file(tensors, str(args.out), metadata={"source": "torchvision-vgg19", "folded": str(not args.no_fold).lower()})
    print(f"wrote {args.out} ({len(tensors)} tensors)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
