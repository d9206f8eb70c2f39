#!/usr/bin/env python3
"""Export VGG19 conv1_1..conv5_1 weights into a deepgin tensor archive.

  python tools/export_vgg19.py --out vgg19.dga              # torchvision ImageNet weights
  python tools/export_vgg19.py --state-dict vgg19.pth --out vgg19.dga
  python tools/export_vgg19.py --random --out vgg19.dga     # untrained, format tests only

Point the trainer at the file with loss.extractor=vgg19 and
loss.extractor_weights=<path>.
"""

import argparse
import struct
import sys

# Layer names and their indices in torchvision's vgg19().features.
LAYERS = [
    ("conv1_1", 0), ("conv1_2", 2),
    ("conv2_1", 5), ("conv2_2", 7),
    ("conv3_1", 10), ("conv3_2", 12), ("conv3_3", 14), ("conv3_4", 16),
    ("conv4_1", 19), ("conv4_2", 21), ("conv4_3", 23), ("conv4_4", 25),
    ("conv5_1", 28),
]

MAGIC = b"DEEPGIN\0"
VERSION = 1
FNV_OFFSET = 1469598103934665603
FNV_PRIME = 1099511628211


def fnv1a(data: bytes) -> int:
    try:
        from deepgin._core import fnv1a as native
        return native(data)
    except ImportError:
        pass
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def serialize(groups, metadata) -> bytes:
    """groups: {name: [(tensor_name, shape, flat float64 numpy array)]}"""
    out = bytearray(MAGIC)
    out += struct.pack("<IQ", VERSION, 0)
    out += pack_str("".join(f"{k}={v}\n" for k, v in sorted(metadata.items())))
    out += struct.pack("<I", len(groups))
    for gname, tensors in groups.items():
        out += pack_str(gname)
        out += struct.pack("<I", len(tensors))
        for tname, shape, values in tensors:
            out += pack_str(tname)
            out += struct.pack("<I", len(shape))
            out += struct.pack(f"<{len(shape)}q", *shape)
            out += values.astype("<f8").tobytes()
    out += struct.pack("<Q", fnv1a(bytes(out)))
    return bytes(out)


def load_state(args):
    import torch
    import torchvision

    if args.state_dict:
        model = torchvision.models.vgg19()
        state = torch.load(args.state_dict, map_location="cpu")
        model.load_state_dict(state)
        source = args.state_dict
    elif args.random:
        torch.manual_seed(args.seed)
        model = torchvision.models.vgg19()
        source = f"random(seed={args.seed})"
    else:
        model = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
        source = "torchvision IMAGENET1K_V1"
    return model.features, source


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--state-dict", help="torchvision vgg19 state_dict file")
    src.add_argument("--random", action="store_true", help="untrained weights")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    features, source = load_state(args)
    tensors = []
    for name, idx in LAYERS:
        conv = features[idx]
        w = conv.weight.detach().double()
        b = conv.bias.detach().double()
        tensors.append((f"{name}.weight", list(w.shape), w.flatten().numpy()))
        tensors.append((f"{name}.bias", list(b.shape), b.flatten().numpy()))
    data = serialize({"vgg19": tensors}, {"source": source, "layers": ",".join(n for n, _ in LAYERS)})
    with open(args.out, "wb") as f:
        f.write(data)
    print(f"wrote {len(LAYERS)} layers from {source} to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
