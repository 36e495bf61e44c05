"""Readers for the linftylab artifact formats.

Only the documented file interfaces are consumed: summary.json,
vertices.csv / triangles.csv, sigma_<experiment>_p<p>_<region>.csv and the
rate CSV written by `linfty rates`.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np


class ArtifactError(RuntimeError):
    """An expected experiment artifact is missing or malformed."""


def load_summary(experiment_dir: str) -> dict:
    path = os.path.join(experiment_dir, "summary.json")
    if not os.path.exists(path):
        raise ArtifactError(f"no summary.json in {experiment_dir}")
    with open(path) as fh:
        return json.load(fh)


@dataclass(frozen=True)
class MeshData:
    vertices: np.ndarray   # (nv, 2)
    triangles: np.ndarray  # (nt, 3)

    @property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * np.abs(
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
        )


def load_mesh(experiment_dir: str) -> MeshData:
    vpath = os.path.join(experiment_dir, "vertices.csv")
    tpath = os.path.join(experiment_dir, "triangles.csv")
    if not (os.path.exists(vpath) and os.path.exists(tpath)):
        raise ArtifactError(f"mesh CSVs missing in {experiment_dir}")
    verts = np.genfromtxt(vpath, delimiter=",", skip_header=1)
    tris = np.genfromtxt(tpath, delimiter=",", skip_header=1, dtype=np.int64)
    verts = np.atleast_2d(verts)
    tris = np.atleast_2d(tris)
    return MeshData(verts[:, 1:3], tris[:, 1:4])


@dataclass(frozen=True)
class SigmaData:
    element_ids: np.ndarray
    barycenters: np.ndarray
    grad_norms: np.ndarray
    log_density: np.ndarray
    weights: np.ndarray


def load_sigma(path: str) -> SigmaData:
    if not os.path.exists(path):
        raise ArtifactError(f"sigma file missing: {path}")
    body = np.genfromtxt(path, delimiter=",", skip_header=1)
    body = np.atleast_2d(body)
    if body.shape[1] != 6:
        raise ArtifactError(f"unexpected sigma columns in {path}")
    return SigmaData(
        element_ids=body[:, 0].astype(np.int64),
        barycenters=body[:, 1:3],
        grad_norms=body[:, 3],
        log_density=body[:, 4],
        weights=body[:, 5],
    )


def sigma_path(experiment_dir: str, name: str, p: float, region: str) -> str:
    tag = str(int(p)) if float(p).is_integer() else f"{p:g}".replace(".", "_")
    return os.path.join(experiment_dir, f"sigma_{name}_p{tag}_{region}.csv")


def experiment_panels(experiment_dir: str):
    """(name, region, reporting exponents) taken from the summary echo."""
    summary = load_summary(experiment_dir)
    config = summary["config"]
    region = config["regions"][0]["name"] if config.get("regions") else "O"
    return config["name"], region, [float(p) for p in config.get("reporting", [])]


@dataclass(frozen=True)
class RateRow:
    n: int
    h: float
    p: float
    error: float


def load_rate_table(path: str):
    if not os.path.exists(path):
        raise ArtifactError(f"rate table missing: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return rows
        for rec in reader:
            rows.append(RateRow(int(rec["n"]), float(rec["h"]),
                                float(rec["p"]), float(rec["error"])))
    return rows
