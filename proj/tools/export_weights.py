#!/usr/bin/env python3
"""Exports an AlexNet-family PyTorch checkpoint into the toolkit's formats.

Produces two files:
  <out>/model.json  architecture descriptor
  <out>/model.bin   weights container (LE u64 header length, JSON header
                    mapping tensor name -> {dtype, shape, offset}, then a
                    payload of little-endian f32 values, offsets 8-aligned)

The expected checkpoint is a torchvision-style AlexNet state dict whose
final linear layer may have been retrained for a different label count
(e.g. 26 emotion labels). Accepts either a bare state_dict or a checkpoint
with a 'state_dict' key.
"""

import argparse
import json
import struct
import sys
from pathlib import Path

try:
    import torch
except ImportError:
    sys.exit("this exporter requires PyTorch (pip install torch)")

EMOTION_LABELS_26 = [
    "Adoration", "Aesthetic Appreciation", "Amusement", "Anxiety", "Awe",
    "Awkwardness", "Boredom", "Calmness", "Confusion", "Craving", "Disgust",
    "Empathic Pain", "Entrancement", "Excitement", "Fear", "Horror",
    "Interest", "Joy", "Nostalgia", "Relief", "Romance", "Sadness",
    "Satisfaction", "Sexual Desire", "Surprise", "Sympathy",
]

IMAGENET_MEAN = [0.485, 0.456, 0.406]
IMAGENET_STD = [0.229, 0.224, 0.225]

# torchvision AlexNet layout: (name, kind, params, state-dict prefix)
ALEXNET_LAYERS = [
    ("conv1", "conv2d", {"kernel": 11, "stride": 4, "padding": 2}, "features.0"),
    ("relu1", "relu", {}, None),
    ("pool1", "maxpool", {"kernel": 3, "stride": 2}, None),
    ("conv2", "conv2d", {"kernel": 5, "stride": 1, "padding": 2}, "features.3"),
    ("relu2", "relu", {}, None),
    ("pool2", "maxpool", {"kernel": 3, "stride": 2}, None),
    ("conv3", "conv2d", {"kernel": 3, "stride": 1, "padding": 1}, "features.6"),
    ("relu3", "relu", {}, None),
    ("conv4", "conv2d", {"kernel": 3, "stride": 1, "padding": 1}, "features.8"),
    ("relu4", "relu", {}, None),
    ("conv5", "conv2d", {"kernel": 3, "stride": 1, "padding": 1}, "features.10"),
    ("relu5", "relu", {}, None),
    ("pool5", "maxpool", {"kernel": 3, "stride": 2}, None),
    ("avgpool", "adaptive-avgpool", {"output": 6}, None),
    ("flatten", "flatten", {}, None),
    ("drop1", "dropout", {"rate": 0.5}, None),
    ("fc1", "linear", {}, "classifier.1"),
    ("relu6", "relu", {}, None),
    ("drop2", "dropout", {"rate": 0.5}, None),
    ("fc2", "linear", {}, "classifier.4"),
    ("relu7", "relu", {}, None),
    ("fc3", "linear", {}, "classifier.6"),
]


def write_container(path: Path, tensors: dict) -> None:
    header = {}
    payload = bytearray()
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous().float()
        while len(payload) % 8 != 0:
            payload.append(0)
        header[name] = {
            "dtype": "f32",
            "shape": list(t.shape),
            "offset": len(payload),
        }
        payload.extend(t.numpy().astype("<f4").tobytes())
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        f.write(bytes(payload))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True, help="PyTorch checkpoint (.pth)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--input-size", type=int, default=227,
                    help="model input height/width (default 227)")
    ap.add_argument("--labels", help="newline-separated label file "
                                     "(default: the 26 emotion labels)")
    args = ap.parse_args()

    state = torch.load(args.checkpoint, map_location="cpu", weights_only=False)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    if not isinstance(state, dict):
        state = state.state_dict()
    state = {k.removeprefix("module."): v for k, v in state.items()}

    labels = EMOTION_LABELS_26
    if args.labels:
        labels = [l for l in Path(args.labels).read_text().splitlines() if l]

    layers = []
    tensors = {}
    for name, kind, params, prefix in ALEXNET_LAYERS:
        layer = {"name": name, "kind": kind, **params}
        if prefix is not None:
            w_key, b_key = prefix + ".weight", prefix + ".bias"
            if w_key not in state or b_key not in state:
                sys.exit(f"checkpoint is missing {w_key}/{b_key}; "
                         "not an AlexNet-family state dict?")
            weight, bias = state[w_key], state[b_key]
            if kind == "conv2d":
                layer["out_channels"] = int(weight.shape[0])
            else:
                layer["out_features"] = int(weight.shape[0])
            layer["weights"] = w_key
            layer["bias"] = b_key
            tensors[w_key] = weight
            tensors[b_key] = bias
        layers.append(layer)

    out_features = layers[-1]["out_features"]
    if out_features != len(labels):
        sys.exit(f"final layer has {out_features} outputs but {len(labels)} "
                 "labels were given; pass a matching --labels file")

    descriptor = {
        "input": {"channels": 3, "height": args.input_size, "width": args.input_size},
        "normalization": {"mean": IMAGENET_MEAN, "std": IMAGENET_STD},
        "labels": labels,
        "layers": layers,
    }

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "model.json").write_text(json.dumps(descriptor, indent=2) + "\n")
    write_container(out_dir / "model.bin", tensors)
    print(f"wrote {out_dir/'model.json'} and {out_dir/'model.bin'} "
          f"({len(tensors)} tensors)")


if __name__ == "__main__":
    main()
