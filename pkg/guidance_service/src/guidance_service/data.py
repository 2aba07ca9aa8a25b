"""Training data: PFM renders plus a JSONL manifest of conditioning.

The manifest rows carry an image path, a domain tag (normal or albedo), a
512-float identity embedding, an expression label, a caption fragment, and
the camera angles. Captions are composed here from a fixed portrait
template; the view word buckets the azimuth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

DOMAINS = ("normal", "albedo")
CAPTION_TEMPLATE = "A {view} view {domain} map face portrait of {subject}"
FRONT_VIEW_DEG = 20.0


class DataError(ValueError):
    pass


def read_pfm(path) -> np.ndarray:
    """Read a PFM image: float32, bottom-up rows, scale sign = endianness."""
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise DataError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise DataError(f"{path}: malformed PFM dimensions")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        count = w * h * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise DataError(f"{path}: truncated PFM payload")
    data = np.frombuffer(raw, dtype=dtype).astype(np.float32)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape)[::-1].copy()


def compose_caption(record: dict) -> str:
    view = ("front" if abs(float(record["azimuth_deg"])) < FRONT_VIEW_DEG
            else "side")
    return CAPTION_TEMPLATE.format(view=view, domain=record["domain"],
                                   subject=record["caption"])


@dataclass
class TrainSample:
    """One conditioning pair: image in [0, 1], non-empty caption."""

    image: torch.Tensor
    caption: str
    y_id: torch.Tensor
    y_exp: int
    domain: str

    def __post_init__(self):
        if not self.caption.strip():
            raise DataError("caption must be non-empty")
        if self.image.dim() != 3 or self.image.shape[0] != 3:
            raise DataError(f"image must be (3, H, W), got "
                            f"{tuple(self.image.shape)}")
        lo, hi = float(self.image.min()), float(self.image.max())
        if lo < -1e-4 or hi > 1.0 + 1e-4:
            raise DataError(f"image values [{lo:.4f}, {hi:.4f}] outside [0, 1]")
        self.image = self.image.clamp(0.0, 1.0)


class HeadRenderDataset:
    """Loads one domain's samples from a render directory eagerly."""

    def __init__(self, root, domain: str):
        if domain not in DOMAINS:
            raise DataError(f"domain must be one of {DOMAINS}, got {domain!r}")
        root = Path(root)
        manifest = root / "dataset.jsonl"
        if not manifest.exists():
            raise DataError(f"no dataset.jsonl under {root}")
        self.domain = domain
        self.samples = []
        with open(manifest) as fh:
            for line in fh:
                record = json.loads(line)
                if record["domain"] != domain:
                    continue
                image = read_pfm(root / record["image"])
                if image.ndim != 3:
                    raise DataError(f"{record['image']}: expected 3 channels")
                self.samples.append(TrainSample(
                    image=torch.from_numpy(image.transpose(2, 0, 1).copy()),
                    caption=compose_caption(record),
                    y_id=torch.tensor(record["y_id"], dtype=torch.float32),
                    y_exp=int(record["y_exp"]),
                    domain=domain,
                ))
        if not self.samples:
            raise DataError(f"no {domain!r} samples in {manifest}")

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i) -> TrainSample:
        return self.samples[i]

    def batch(self, indices) -> dict:
        """Stack samples into tensors plus a caption list."""
        picked = [self.samples[int(i)] for i in indices]
        return {
            "image": torch.stack([s.image for s in picked]),
            "caption": [s.caption for s in picked],
            "y_id": torch.stack([s.y_id for s in picked]),
            "y_exp": torch.tensor([s.y_exp for s in picked],
                                  dtype=torch.long),
        }
