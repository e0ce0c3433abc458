#!/usr/bin/env python3
"""Convert a torchvision ResNet18 state dict into a coftad tensor container.

    python tools/export_torchvision_resnet18.py --out resnet18.bin
    python tools/export_torchvision_resnet18.py --state-dict resnet18.pth --out resnet18.bin

Without --state-dict the ImageNet weights are fetched through torchvision.
The fc head and BatchNorm step counters are dropped.
"""

import argparse
import struct

import numpy as np

MAGIC = b"COFTADNT"
VERSION = 1


def load_state_dict(path):
    import torch

    if path:
        sd = torch.load(path, map_location="cpu")
        return sd.get("state_dict", sd)
    from torchvision.models import ResNet18_Weights, resnet18

    return resnet18(weights=ResNet18_Weights.IMAGENET1K_V1).state_dict()


def write_container(path, tensors):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors:
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack("<%dq" % arr.ndim, *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--state-dict", help="torch .pth file; default downloads ImageNet weights")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    sd = load_state_dict(args.state_dict)
    tensors = []
    for name, t in sd.items():
        name = name.removeprefix("module.")
        if name.startswith("fc.") or name.endswith("num_batches_tracked"):
            continue
        tensors.append((name, t.detach().cpu().float().numpy()))
    write_container(args.out, tensors)
    print("wrote %d tensors to %s" % (len(tensors), args.out))


if __name__ == "__main__":
    main()
