#!/usr/bin/env python3
"""Runs a public object detector over an image directory and emits the
toolkit's detections format: one JSON object per line,

  {"image_id": "<stem>", "width": W, "height": H,
   "detections": [{"class": "...", "score": S,
                   "box": [x_min, y_min, x_max, y_max]}, ...]}

This helper lives outside the core library: any detector can be substituted
as long as its output is converted to the same lines. The default here is
torchvision's COCO-pretrained Faster R-CNN, which downloads weights on first
use. Score filtering is left to the pipeline (--det-threshold); this script
emits everything above --min-score only to keep files small.
"""

import argparse
import json
import sys
from pathlib import Path

try:
    import torch
    import torchvision
    from PIL import Image
except ImportError:
    sys.exit("this helper requires torch, torchvision and Pillow")

IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".ppm", ".pgm"}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--images", required=True, help="image directory")
    ap.add_argument("--out", required=True, help="output detections file")
    ap.add_argument("--min-score", type=float, default=0.001)
    args = ap.parse_args()

    weights = torchvision.models.detection.FasterRCNN_ResNet50_FPN_Weights.DEFAULT
    model = torchvision.models.detection.fasterrcnn_resnet50_fpn(weights=weights)
    model.eval()
    categories = weights.meta["categories"]

    paths = sorted(p for p in Path(args.images).iterdir()
                   if p.suffix.lower() in IMAGE_EXTS)
    if not paths:
        sys.exit(f"no images found in {args.images}")

    with open(args.out, "w", encoding="utf-8") as out:
        for path in paths:
            img = Image.open(path).convert("RGB")
            tensor = torchvision.transforms.functional.to_tensor(img)
            with torch.no_grad():
                result = model([tensor])[0]
            detections = []
            for box, label, score in zip(result["boxes"], result["labels"],
                                         result["scores"]):
                if float(score) <= args.min_score:
                    continue
                x0, y0, x1, y1 = (float(v) for v in box)
                detections.append({
                    "class": categories[int(label)],
                    "score": float(score),
                    "box": [x0, y0, x1, y1],
                })
            out.write(json.dumps({
                "image_id": path.stem,
                "width": img.width,
                "height": img.height,
                "detections": detections,
            }) + "\n")
            print(f"{path.stem}: {len(detections)} detections")


if __name__ == "__main__":
    main()
