"""
CSV + JSON persistence and the on-disk cache of expensive builds.

Every artifact is a CSV file (comma separated, header row, LF endings, floats as %.17g so values
round-trip exactly) with a JSON sidecar of the same stem holding the fully resolved configuration.

The `ArtifactCache` class stores kernel profiles and Dirichlet bases under settings.cache_dir,
keyed by a SHA-256 digest of their build parameters, so a second run reloads them bit-for-bit
instead of rebuilding.
"""

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Mapping, Optional

import numpy as np

from fracfujita.config import settings
from fracfujita.core.dirichlet import SpectralBasis, build_basis
from fracfujita.core.kernel import KernelProfile, build_kernel_profile
from fracfujita.core.operators import Field, SpaceGrid
from fracfujita.core.specfun import ModelParams

logger = logging.getLogger(__name__)


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return "" if value is None else str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if np.isfinite(value) else str(value)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload: Mapping) -> Path:
    """Write `payload` with sorted keys and a trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path, columns: Mapping[str, np.ndarray], header: Optional[Mapping] = None) -> Path:
    """
    Write equally long columns as CSV, plus a JSON sidecar when `header` is given.

    Args:
        path: target .csv path.
        columns: ordered mapping from column name to 1-d array.
        header: provenance written to the sidecar with the same stem.

    Returns:
        Path: the CSV path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = [np.asarray(columns[name]) for name in names]
    rows = len(data[0]) if data else 0
    if any(len(col) != rows for col in data):
        raise ValueError(f"columns of {path.name} differ in length")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(rows):
            writer.writerow([_format(col[i]) for col in data])
    if header is not None:
        write_json(path.with_suffix(".json"), header)
    return path


def write_rows(path, rows, fieldnames, header: Optional[Mapping] = None) -> Path:
    """CSV from a list of dicts (summary tables with mixed columns)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_format(row.get(name)) for name in fieldnames])
    if header is not None:
        write_json(path.with_suffix(".json"), header)
    return path


def read_csv(path) -> Dict[str, np.ndarray]:
    """Numeric CSV back into a column mapping."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    table = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return {name: table[:, i] for i, name in enumerate(names)}


def write_field(path, field: Field, header: Optional[Mapping] = None) -> Path:
    """Field snapshot as (x, value) with t and grid in the sidecar."""
    meta = {"t": field.time_stamp, "grid": field.grid.describe(), "tail_mass": field.tail_mass,
            "truncated": field.truncated, "blown_up": field.blown_up}
    meta.update(header or {})
    return write_csv(path, {"x": field.grid.x, "value": field.values}, meta)


def cache_key(kind: str, **params) -> str:
    blob = json.dumps({"kind": kind, **_jsonable(params)}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ArtifactCache:
    """
    Build-once cache of kernel profiles and spectral bases.
    """

    def __init__(self, root: Optional[str] = None):
        self.root = Path(root or settings.cache_dir)
        self.root.mkdir(parents=True, exist_ok=True)

    # kernel profiles

    @staticmethod
    def profile_key(params: ModelParams) -> str:
        # eta does not enter the kernel
        return cache_key("profile", alpha=params.alpha, beta=params.beta, dim=params.dim,
                         points=settings.profile_points, z_min=settings.profile_z_min, z_max=settings.profile_z_max,
                         panels=settings.quadrature_panels, budget=settings.quadrature_budget,
                         rtol=settings.quadrature_rtol, stable_points=settings.stable_points,
                         stable_r_min=settings.stable_r_min, stable_r_far=settings.stable_r_far)

    def save_profile(self, profile: KernelProfile) -> Path:
        key = self.profile_key(profile.params)
        header = {"params": profile.params.summary(), "near_origin": profile.near_origin,
                  "near_coeffs": list(profile.near_coeffs), "tail_constant": profile.tail_constant,
                  "panels": profile.panels, "build_info": profile.build_info}
        path = write_csv(self.root / f"profile-{key}.csv", {"z": profile.grid, "phi": profile.values}, header)
        logger.info(f"Cached kernel profile at {path}")
        return path

    def load_profile(self, params: ModelParams) -> Optional[KernelProfile]:
        path = self.root / f"profile-{self.profile_key(params)}.csv"
        if not path.exists():
            return None
        table = read_csv(path)
        header = read_json(path.with_suffix(".json"))
        logger.info(f"Loaded cached kernel profile {path.name}")
        return KernelProfile(params=params, grid=table["z"], values=table["phi"], near_origin=header["near_origin"],
                             near_coeffs=tuple(header["near_coeffs"]), tail_constant=header["tail_constant"],
                             panels=header["panels"], build_info=header.get("build_info", {}))

    def kernel_profile(self, params: ModelParams) -> KernelProfile:
        """Cached profile for `params`, built and saved on a miss."""
        profile = self.load_profile(params)
        if profile is None:
            profile = build_kernel_profile(params)
            self.save_profile(profile)
        return profile

    # spectral bases

    @staticmethod
    def basis_key(alpha: float, radius: float, n_grid: int, n_modes: int) -> str:
        return cache_key("basis", alpha=alpha, radius=radius, n_grid=n_grid, n_modes=n_modes)

    def save_basis(self, basis: SpectralBasis) -> Path:
        key = self.basis_key(basis.alpha, basis.radius, basis.grid.points - 2, basis.count)
        columns = {"x": basis.interior}
        columns.update({f"phi_{n + 1}": basis.vectors[n] for n in range(basis.count)})
        header = {**basis.describe(), "eigenvalues": basis.eigenvalues}
        return write_csv(self.root / f"basis-{key}.csv", columns, header)

    def load_basis(self, alpha: float, radius: float, n_grid: int, n_modes: int) -> Optional[SpectralBasis]:
        path = self.root / f"basis-{self.basis_key(alpha, radius, n_grid, n_modes)}.csv"
        if not path.exists():
            return None
        table = read_csv(path)
        header = read_json(path.with_suffix(".json"))
        vectors = np.vstack([table[f"phi_{n + 1}"] for n in range(n_modes)])
        return SpectralBasis(alpha=alpha, radius=radius, grid=SpaceGrid(half_width=radius, points=n_grid + 2),
                             eigenvalues=np.asarray(header["eigenvalues"], dtype=float), vectors=vectors,
                             approximate=header["approximate"])

    def spectral_basis(self, alpha: float, radius: float, n_grid: int, n_modes: int) -> SpectralBasis:
        basis = self.load_basis(alpha, radius, n_grid, n_modes)
        if basis is None:
            basis = build_basis(alpha, radius, n_grid, n_modes)
            self.save_basis(basis)
        return basis
