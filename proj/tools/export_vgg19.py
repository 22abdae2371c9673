#!/usr/bin/env python3
"""Export torchvision's ImageNet VGG-19 convolution stack for the perceptual loss.

Usage: python3 tools/export_vgg19.py vgg19_features.pt

Then pass the file to `darkdeblur train --vgg-weights vgg19_features.pt` or set
DARKDEBLUR_VGG19_WEIGHTS. Needs torchvision and network access (or a warm
torch hub cache) the first time.
"""
import argparse

import torch
import torchvision


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("output", help="destination TorchScript file")
    args = parser.parse_args()

    weights = torchvision.models.VGG19_Weights.IMAGENET1K_V1
    features = torchvision.models.vgg19(weights=weights).features[:36].eval()
    for p in features.parameters():
        p.requires_grad_(False)
    torch.jit.script(features).save(args.output)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
