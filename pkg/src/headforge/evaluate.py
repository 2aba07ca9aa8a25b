"""Identity-consistency evaluation: view grids, embedding cosines, reports.

A render function (camera, expression) -> image array is scored by a
pluggable embedding provider; cosine similarities across views and
expressions are aggregated into a SimilarityReport that serializes to
CSV / JSON and a PNG contact sheet.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
import requests

from .guidance.wire import EMBED_PATH, RemoteUnavailable, WireError, decode_array, encode_array
from .render import eval_cameras, write_png

CSV_HEADER = ("expression", "azimuth_deg", "elevation_deg", "cosine")

_GRAY_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


class EvalError(ValueError):
    pass


class EmbeddingProvider:
    """Maps an (H, W, 3) float image to a unit-norm feature vector."""

    dim: int = 512
    deterministic: bool = True

    def embed(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class StubEmbedding(EmbeddingProvider):
    """Unit-normalized 16x16 grayscale downsample.

    Deterministic and view-sensitive: rotating the camera moves surface
    detail across the grid cells and changes the vector. Stands in for a
    recognition network at desk scale.
    """

    dim = 256
    deterministic = True

    def embed(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3 or 0 in img.shape[:2]:
            raise EvalError(f"expected an (H, W, 3) image, got shape {img.shape}")
        if not np.isfinite(img).all():
            raise EvalError("image contains non-finite values")
        gray = img @ _GRAY_WEIGHTS
        # images smaller than the cell grid upsample by repetition so every
        # cell has at least one pixel
        if gray.shape[0] < 16:
            gray = np.repeat(gray, -(-16 // gray.shape[0]), axis=0)
        if gray.shape[1] < 16:
            gray = np.repeat(gray, -(-16 // gray.shape[1]), axis=1)
        cells = [np.stack([c.mean() for c in np.array_split(row_band, 16, axis=1)])
                 for row_band in np.array_split(gray, 16, axis=0)]
        vec = np.stack(cells).ravel()
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            raise EvalError("blank image produces a zero embedding")
        return (vec / norm).astype(np.float64)


class RemoteEmbedding(EmbeddingProvider):
    """Embeddings served over HTTP: POST /v1/embed with a float32 image."""

    dim = 512
    deterministic = True

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def embed(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, dtype=np.float32)
        body = {"shape": list(img.shape), "dtype": "f32",
                "image": encode_array(img)}
        try:
            resp = requests.post(self.endpoint + EMBED_PATH, json=body,
                                 timeout=self.timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise RemoteUnavailable(f"embed failed: {exc}") from exc
        if resp.status_code != 200:
            raise WireError(f"embed rejected: {resp.status_code} {resp.text[:200]}")
        payload = resp.json()
        vec = decode_array(payload["embedding"], [int(payload["dim"])])
        return vec.astype(np.float64)


def id_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; rejects zero vectors and mismatched dimensions."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise EvalError(f"embedding dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na < 1e-12 or nb < 1e-12:
        raise EvalError("zero-norm embedding has no direction")
    if np.array_equal(a, b):
        return 1.0  # cosine of a vector with itself, without rounding noise
    # rounding can spill a hair past +/-1; clamp to the cosine range
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass
class SimilarityEntry:
    expression: int
    azimuth_deg: float
    elevation_deg: float
    cosine: float


@dataclass
class SimilarityReport:
    """Per-(expression, view) cosines plus summary statistics."""

    entries: list = dataclass_field(default_factory=list)
    reference: str = ""
    aggregate: str = ""

    @property
    def values(self) -> np.ndarray:
        # canonical (sorted) order so statistics are identical after any
        # serialization or merge reordering
        return np.array([e.cosine for e in self.sorted_entries()],
                        dtype=np.float64)

    @property
    def mean(self) -> float:
        return float(self.values.mean()) if self.entries else float("nan")

    @property
    def variance(self) -> float:
        return float(self.values.var()) if self.entries else float("nan")

    def sorted_entries(self) -> list:
        return sorted(self.entries, key=lambda e: (e.expression, e.azimuth_deg,
                                                   e.elevation_deg))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for e in self.sorted_entries():
                writer.writerow([e.expression, repr(e.azimuth_deg),
                                 repr(e.elevation_deg), repr(e.cosine)])

    def summary(self) -> dict:
        return {"mean": self.mean, "variance": self.variance,
                "count": len(self.entries), "reference": self.reference,
                "aggregate": self.aggregate}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2,
                                         sort_keys=True) + "\n")


def read_report_csv(path) -> SimilarityReport:
    report = SimilarityReport()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise EvalError(f"unexpected report header: {header}")
        for row in reader:
            report.entries.append(SimilarityEntry(
                int(row[0]), float(row[1]), float(row[2]), float(row[3])))
    return report


def similarity_distribution(render_fn, refs, provider: EmbeddingProvider,
                            cameras=None, expression: int = 0,
                            aggregate: str = "max") -> SimilarityReport:
    """Render the evaluation grid and score each view against a reference set.

    render_fn(camera, expression) -> (H, W, 3) array. Per view the cosine
    against every reference embedding is reduced with `aggregate` (max by
    default, mean available).
    """
    refs = [np.asarray(r, dtype=np.float64) for r in refs]
    if not refs:
        raise EvalError("reference embedding set is empty")
    if aggregate not in ("max", "mean"):
        raise EvalError(f"aggregate must be max or mean, got {aggregate!r}")
    reduce = np.max if aggregate == "max" else np.mean
    cameras = list(cameras) if cameras is not None else eval_cameras()
    report = SimilarityReport(reference=f"{len(refs)} reference embeddings",
                              aggregate=aggregate)
    for cam in cameras:
        emb = provider.embed(render_fn(cam, expression))
        score = float(reduce([id_similarity(emb, r) for r in refs]))
        report.entries.append(SimilarityEntry(expression, cam.azimuth,
                                              cam.elevation, score))
    return report


def cross_expression_consistency(render_fn, provider: EmbeddingProvider,
                                 expressions, cameras=None) -> SimilarityReport:
    """Score every (expression, view) render against the neutral front render.

    The reference is expression `expressions[0]` seen from the camera
    closest to azimuth 0 / elevation 0; that render itself is excluded,
    leaving (K-1) * V + (V-1) entries.
    """
    expressions = list(expressions)
    if len(expressions) < 2:
        raise EvalError("cross-expression consistency needs >= 2 expressions")
    cameras = list(cameras) if cameras is not None else eval_cameras()
    front = min(range(len(cameras)),
                key=lambda i: abs(cameras[i].azimuth) + abs(cameras[i].elevation))
    ref = provider.embed(render_fn(cameras[front], expressions[0]))
    report = SimilarityReport(
        reference=f"expression {expressions[0]}, azimuth "
                  f"{cameras[front].azimuth:g}, elevation {cameras[front].elevation:g}",
        aggregate="reference")
    for k in expressions:
        for i, cam in enumerate(cameras):
            if k == expressions[0] and i == front:
                continue
            emb = provider.embed(render_fn(cam, k))
            report.entries.append(SimilarityEntry(
                k, cam.azimuth, cam.elevation, id_similarity(emb, ref)))
    return report


def write_contact_sheet(path, images, columns: int = 5) -> None:
    """Tile equally sized renders row-major into one PNG."""
    images = [np.asarray(img, dtype=np.float32) for img in images]
    if not images:
        raise EvalError("no images for the contact sheet")
    h, w = images[0].shape[:2]
    for img in images:
        if img.shape[:2] != (h, w):
            raise EvalError("contact sheet images must share a size")
    columns = max(1, min(columns, len(images)))
    rows = (len(images) + columns - 1) // columns
    sheet = np.zeros((rows * h, columns * w, 3), dtype=np.float32)
    for i, img in enumerate(images):
        r, c = divmod(i, columns)
        sheet[r * h:(r + 1) * h, c * w:(c + 1) * w] = img[..., :3]
    write_png(path, sheet)
