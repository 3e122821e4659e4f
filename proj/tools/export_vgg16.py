#!/usr/bin/env python3
# Copyright (c) 2026, OBIFormer contributors
# SPDX-License-Identifier: Apache-2.0
"""Export torchvision VGG16 convolution weights to an OBIF container.

Writes features.{0,2,5,7,10,12,14,17,19,21}.{weight,bias}, the layers
through relu4_3, as little-endian float32 records.

    python3 tools/export_vgg16.py --out ~/.cache/obiformer/vgg16_features.obif
    OBIFORMER_CACHE=~/.cache/obiformer obiformer train ...
"""

import argparse
import os
import struct
import sys

import numpy as np

CONV_INDICES = (0, 2, 5, 7, 10, 12, 14, 17, 19, 21)
MAGIC = b"OBIF"
VERSION = 1


def write_obif(path, config, records):
    """Writes `records` (name -> float32 array) with `config` (key -> str)."""
    text = "".join(f"{k}={config[k]}\n" for k in sorted(config)).encode("utf-8")
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(text))
    out += text
    for name in sorted(records):
        arr = np.ascontiguousarray(records[name], dtype="<f4")
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded)) + encoded
        out += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(out)
    os.replace(tmp, path)


def vgg16_records(pretrained):
    import torchvision

    weights = torchvision.models.VGG16_Weights.IMAGENET1K_V1 if pretrained else None
    model = torchvision.models.vgg16(weights=weights)
    state = model.features.state_dict()
    records = {}
    for i in CONV_INDICES:
        for part in ("weight", "bias"):
            key = f"{i}.{part}"
            records[f"features.{key}"] = state[key].detach().cpu().numpy()
    return records


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="destination .obif file")
    parser.add_argument(
        "--untrained",
        action="store_true",
        help="export randomly initialized weights (format testing only)",
    )
    args = parser.parse_args(argv)

    records = vgg16_records(pretrained=not args.untrained)
    config = {
        "source": "torchvision.vgg16" + (".untrained" if args.untrained else ".IMAGENET1K_V1"),
        "layers": ",".join(str(i) for i in CONV_INDICES),
    }
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    write_obif(args.out, config, records)
    total = sum(r.size for r in records.values())
    print(f"wrote {len(records)} arrays ({total} values) to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
