"""Shared fixtures helpers: randomized evaluation instances in both the
package's types and the plain-dict form the oracle consumes."""

from __future__ import annotations

import numpy as np

from parlorvision.types import BBox, Detection, GtAnnotation


def make_instance(rng: np.random.Generator, max_images=5, max_classes=3, max_boxes=10):
    """A small random detection-evaluation instance as plain dicts."""
    n_images = int(rng.integers(1, max_images + 1))
    images = {
        i: (int(rng.integers(60, 200)), int(rng.integers(60, 200)))
        for i in range(n_images)
    }
    n_classes = int(rng.integers(1, max_classes + 1))
    classes = list(range(1, n_classes + 1))

    gts = []
    dets = []
    next_gt_id = 0
    for image_id, (width, height) in images.items():
        for _ in range(int(rng.integers(0, max_boxes + 1))):
            w = int(rng.integers(0, 60))
            h = int(rng.integers(0, 60))
            x = int(rng.integers(0, max(1, width - w)))
            y = int(rng.integers(0, max(1, height - h)))
            gt = {
                "id": next_gt_id,
                "image_id": image_id,
                "class_id": int(rng.choice(classes)),
                "bbox": (float(x), float(y), float(w), float(h)),
            }
            next_gt_id += 1
            gts.append(gt)
            # likely matching detection: jittered copy of the ground truth
            if rng.random() < 0.6:
                dx, dy = (int(rng.integers(-6, 7)) for _ in range(2))
                dets.append({
                    "image_id": image_id,
                    "class_id": gt["class_id"] if rng.random() < 0.85
                    else int(rng.choice(classes)),
                    "bbox": (float(max(0, x + dx)), float(max(0, y + dy)),
                             float(w), float(h)),
                    "score": _score(rng),
                })
        for _ in range(int(rng.integers(0, max_boxes // 2 + 1))):
            w = int(rng.integers(0, 60))
            h = int(rng.integers(0, 60))
            x = int(rng.integers(0, max(1, width - w)))
            y = int(rng.integers(0, max(1, height - h)))
            dets.append({
                "image_id": image_id,
                "class_id": int(rng.choice(classes)),
                "bbox": (float(x), float(y), float(w), float(h)),
                "score": _score(rng),
            })
        if len(dets) > max_boxes * n_images:
            del dets[max_boxes * n_images:]
    return {"images": images, "gts": gts, "dets": dets, "classes": classes}


def _score(rng: np.random.Generator) -> float:
    # coarse grid half the time so score ties actually occur
    if rng.random() < 0.5:
        return int(rng.integers(0, 101)) / 100
    return round(float(rng.random()), 6)


def instance_to_package(instance):
    gts = [
        GtAnnotation(id=g["id"], image_id=g["image_id"], class_id=g["class_id"],
                     bbox=BBox(*g["bbox"]))
        for g in instance["gts"]
    ]
    dets = [
        Detection(image_id=d["image_id"], class_id=d["class_id"],
                  bbox=BBox(*d["bbox"]), score=d["score"])
        for d in instance["dets"]
    ]
    return gts, dets, instance["images"]
