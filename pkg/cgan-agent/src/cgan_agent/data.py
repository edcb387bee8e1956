"""Readers for the simulator's published file formats.

Training consumes the vector-form dataset (one encoded action per row,
window already normalised) plus its sidecar metadata; serving and
rollouts additionally need the fitted model JSON for the interarrival
gamma.  Raw windows arriving over the wire are normalised here with the
same min-max rule the exporter used: volume and spread features scale
to [-1, 1] under the persisted bounds, everything else is born bounded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

VERSION_LINE = "#v1"
VECTOR_WIDTH = 7
SCALED_FEATURES = ("v1", "v5", "spread")


@dataclass(frozen=True)
class DatasetMeta:
    T: int
    bounds: dict[str, tuple[float, float]]
    features: tuple[str, ...]

    @property
    def window_width(self) -> int:
        return self.T * len(self.features)


def load_meta(dataset_path: str | Path) -> DatasetMeta:
    doc = json.loads(Path(str(dataset_path) + ".meta.json").read_text())
    return DatasetMeta(
        T=int(doc["T"]),
        bounds={k: (float(lo), float(hi)) for k, (lo, hi) in doc["bounds"].items()},
        features=tuple(doc["features"]),
    )


def read_vectors(
    dataset_path: str | Path, meta: DatasetMeta
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dataset rows as (vectors, windows, dt_ns) arrays."""
    want = (
        ["dt_ns"]
        + [f"v{i}" for i in range(VECTOR_WIDTH)]
        + [f"w{j}" for j in range(meta.window_width)]
    )
    with open(dataset_path, "r", encoding="utf-8") as fh:
        if fh.readline().rstrip("\n") != VERSION_LINE:
            raise ValueError(f"{dataset_path}: not a {VERSION_LINE} dataset")
        if fh.readline().rstrip("\n").split(",") != want:
            raise ValueError(f"{dataset_path}: header does not match metadata")
        table = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
    if table.size == 0:
        raise ValueError(f"{dataset_path}: no rows")
    dt = table[:, 0].astype(np.int64)
    vectors = table[:, 1 : 1 + VECTOR_WIDTH].astype(np.float32)
    windows = table[:, 1 + VECTOR_WIDTH :].astype(np.float32)
    return vectors, windows, dt


def load_gamma(model_path: str | Path) -> tuple[float, float]:
    doc = json.loads(Path(model_path).read_text())
    inter = doc["interarrival"]
    if inter.get("family") != "gamma":
        raise ValueError(f"unsupported interarrival family {inter.get('family')!r}")
    return float(inter["shape"]), float(inter["scale"])


def _scale(x: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    return min(1.0, max(-1.0, 2.0 * (x - lo) / (hi - lo) - 1.0))


def normalize_window(raw: list[list[float]], meta: DatasetMeta) -> np.ndarray:
    """Flat conditioning vector from one raw wire-protocol window."""
    if len(raw) != meta.T or any(len(s) != len(meta.features) for s in raw):
        raise ValueError(
            f"window shape {len(raw)}x? does not match {meta.T}x{len(meta.features)}"
        )
    out = np.empty(meta.window_width, dtype=np.float32)
    pos = 0
    for state in raw:
        for name, value in zip(meta.features, state):
            if name in SCALED_FEATURES:
                value = _scale(value, *meta.bounds[name])
            out[pos] = value
            pos += 1
    return out
