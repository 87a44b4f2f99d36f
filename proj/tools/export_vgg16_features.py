#!/usr/bin/env python3
"""Export the VGG-16 convolutional trunk as a tensor dict readable by roadseg."""
import argparse

import torch
import torchvision


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="output file, e.g. weights/vgg16_features.pt")
    ap.add_argument("--random", action="store_true", help="skip the download and export random weights (testing)")
    args = ap.parse_args()

    weights = None if args.random else torchvision.models.VGG16_Weights.IMAGENET1K_V1
    model = torchvision.models.vgg16(weights=weights)
    state = {"features." + k: v.detach().float().contiguous() for k, v in model.features.state_dict().items()}
    torch.save(state, args.out)
    print(f"wrote {len(state)} tensors to {args.out}")


if __name__ == "__main__":
    main()
