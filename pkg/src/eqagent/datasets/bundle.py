"""Tabular dataset bundles and their on-disk format.

A bundle is a row table with typed columns (coordinate / feature /
target) plus metadata.  On disk it is a directory holding ``meta.json``
and ``data.csv``; a bare CSV with a ``<stem>.meta.json`` sidecar
manifest is accepted for ingesting external tabular data.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Column",
    "DatasetBundle",
    "BundleError",
    "MalformedManifestError",
    "ColumnMismatchError",
    "save",
    "load",
]

ROLES = ("coordinate", "feature", "target")


class BundleError(Exception):
    pass


class MalformedManifestError(BundleError):
    pass


class ColumnMismatchError(BundleError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"bad column role {self.role!r}")


@dataclass
class DatasetBundle:
    """Row table + column roles + metadata.

    ``data`` is a float64 array of shape (n_rows, n_columns) whose
    columns align with ``columns``.  ``meta`` carries at least
    name/kind/states/dt; see save() for the manifest schema.
    """

    columns: list
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise ValueError(
                f"data shape {self.data.shape} does not match {len(self.columns)} columns"
            )

    # -- access helpers ------------------------------------------------
    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    def names(self, role: str | None = None) -> list:
        if role is None:
            return [c.name for c in self.columns]
        return [c.name for c in self.columns if c.role == role]

    @property
    def feature_names(self) -> list:
        return self.names("feature")

    @property
    def target_names(self) -> list:
        return self.names("target")

    @property
    def state_names(self) -> list:
        return list(self.meta.get("states", self.feature_names))

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(f"no column named {name!r}")

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.index(name)]

    def matrix(self, names) -> np.ndarray:
        idx = [self.index(n) for n in names]
        return self.data[:, idx]

    @property
    def features(self) -> np.ndarray:
        return self.matrix(self.feature_names)

    @property
    def targets(self) -> np.ndarray:
        return self.matrix(self.target_names)

    def env(self) -> dict:
        """Column name -> column array, for expression evaluation."""
        return {c.name: self.data[:, i] for i, c in enumerate(self.columns)}

    def subset(self, row_mask: np.ndarray, meta_update: dict | None = None) -> "DatasetBundle":
        meta = dict(self.meta)
        if meta_update:
            meta.update(meta_update)
        return DatasetBundle(list(self.columns), self.data[row_mask], meta)


def _manifest_dict(bundle: DatasetBundle) -> dict:
    return {
        "name": bundle.meta.get("name"),
        "kind": bundle.meta.get("kind"),
        "variables": [{"name": c.name, "role": c.role} for c in bundle.columns],
        "states": bundle.meta.get("states"),
        "dt": bundle.meta.get("dt"),
        "noise_level": bundle.meta.get("noise_level"),
        "seed": bundle.meta.get("seed"),
        "grid": bundle.meta.get("grid"),
        "split": bundle.meta.get("split"),
    }


def save(bundle: DatasetBundle, path) -> Path:
    """Write the bundle as a directory: meta.json + data.csv (lossless)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "meta.json", "w") as fh:
        json.dump(_manifest_dict(bundle), fh, indent=2, sort_keys=True)
        fh.write("\n")
    header = ",".join(c.name for c in bundle.columns)
    # %.17g round-trips float64 exactly
    np.savetxt(
        path / "data.csv",
        bundle.data,
        delimiter=",",
        header=header,
        comments="",
        fmt="%.17g",
    )
    return path


def _read_manifest(path: Path) -> dict:
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedManifestError(f"cannot read manifest {path}: {e}") from e
    if not isinstance(manifest, dict) or "variables" not in manifest:
        raise MalformedManifestError(f"manifest {path} lacks a 'variables' list")
    for entry in manifest["variables"]:
        if not isinstance(entry, dict) or "name" not in entry or "role" not in entry:
            raise MalformedManifestError(
                f"manifest {path}: each variable needs 'name' and 'role'"
            )
        if entry["role"] not in ROLES:
            raise MalformedManifestError(
                f"manifest {path}: bad role {entry['role']!r} for {entry['name']!r}"
            )
    return manifest


def load(path) -> DatasetBundle:
    """Load a bundle directory, or a CSV file with a sidecar manifest.

    For ``data.csv`` inside a directory the manifest is ``meta.json``;
    for a bare ``foo.csv`` it is ``foo.meta.json`` next to it.
    """
    path = Path(path)
    if path.is_dir():
        manifest_path = path / "meta.json"
        csv_path = path / "data.csv"
    else:
        csv_path = path
        manifest_path = path.with_suffix("").with_suffix(".meta.json") if path.suffix == ".csv" else None
        if manifest_path is None or not manifest_path.exists():
            manifest_path = path.parent / (path.stem + ".meta.json")
    if not manifest_path.exists():
        raise MalformedManifestError(f"no manifest found for {path}")
    if not csv_path.exists():
        raise BundleError(f"no data file found at {csv_path}")
    manifest = _read_manifest(manifest_path)

    with open(csv_path) as fh:
        header = fh.readline().strip()
        body = fh.read()
    header_names = [h.strip() for h in header.split(",")] if header else []
    declared = [v["name"] for v in manifest["variables"]]
    if header_names != declared:
        raise ColumnMismatchError(
            f"CSV columns {header_names} do not match manifest columns {declared}"
        )
    if body.strip():
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    else:
        data = np.zeros((0, len(declared)))
    if data.shape[1] != len(declared):
        raise ColumnMismatchError(
            f"CSV has {data.shape[1]} columns, manifest declares {len(declared)}"
        )
    columns = [Column(v["name"], v["role"]) for v in manifest["variables"]]
    meta = {k: manifest.get(k) for k in ("name", "kind", "states", "dt", "noise_level", "seed", "grid", "split")}
    if meta.get("kind") is None:
        meta["kind"] = "tabular"
    if meta.get("states") is None:
        meta["states"] = [c.name for c in columns if c.role == "feature"]
    return DatasetBundle(columns, data, meta)
