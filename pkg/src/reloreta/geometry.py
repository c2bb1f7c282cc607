"""Head geometry, electrode montages, and dipole source grids.

Everything here is an immutable value object; the operations are pure and
deterministic so grids and montages can be rebuilt bit-identically from a
config.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._util import seeded_rng


class GeometryError(ValueError):
    """Invalid geometry input or an empty/unsatisfiable construction."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HeadModel:
    """Homogeneous spherical conductor: scalp radius and a single conductivity."""

    radius_mm: float
    conductivity_s_per_m: float
    center_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.radius_mm > 0:
            raise GeometryError(f"radius_mm must be positive, got {self.radius_mm}")
        if not self.conductivity_s_per_m > 0:
            raise GeometryError(
                f"conductivity_s_per_m must be positive, got {self.conductivity_s_per_m}"
            )
        object.__setattr__(self, "center_mm", tuple(float(c) for c in self.center_mm))


@dataclass(frozen=True)
class ElectrodeArray:
    """M labelled scalp electrode positions (mm)."""

    positions_mm: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        pos = _readonly(self.positions_mm)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 2:
            raise GeometryError(f"need an (M, 3) array with M >= 2, got {pos.shape}")
        labels = tuple(str(l) for l in self.labels)
        if len(labels) != pos.shape[0]:
            raise GeometryError("labels and positions length mismatch")
        if len(set(labels)) != len(labels):
            raise GeometryError("electrode labels must be unique")
        object.__setattr__(self, "positions_mm", pos)
        object.__setattr__(self, "labels", labels)

    @property
    def n_electrodes(self) -> int:
        return self.positions_mm.shape[0]


@dataclass(frozen=True)
class SourceGrid:
    """K candidate dipole locations (mm) on a regular lattice."""

    positions_mm: np.ndarray
    spacing_mm: float

    def __post_init__(self):
        pos = _readonly(self.positions_mm)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise GeometryError(f"need a (K, 3) array with K >= 1, got {pos.shape}")
        if not self.spacing_mm > 0:
            raise GeometryError(f"spacing_mm must be positive, got {self.spacing_mm}")
        if pos.shape[0] > 1:
            d, _ = cKDTree(pos).query(pos, k=2)
            if d[:, 1].min() < self.spacing_mm - 1e-9:
                raise GeometryError(
                    f"grid points closer than spacing: {d[:, 1].min():g} mm < {self.spacing_mm:g} mm"
                )
        object.__setattr__(self, "positions_mm", pos)

    @property
    def n_voxels(self) -> int:
        return self.positions_mm.shape[0]

    @property
    def key(self) -> str:
        h = hashlib.sha1()
        h.update(np.float64(self.spacing_mm).tobytes())
        h.update(self.positions_mm.tobytes())
        return h.hexdigest()[:12]


@dataclass(frozen=True)
class DipoleSourceSpec:
    """A single dipole (extent 0) or an extended patch of equal-moment dipoles."""

    center_mm: tuple[float, float, float]
    moment: tuple[float, float, float]
    extent_mm: float = 0.0
    n_dipoles: int = 1

    def __post_init__(self):
        object.__setattr__(self, "center_mm", tuple(float(c) for c in self.center_mm))
        object.__setattr__(self, "moment", tuple(float(c) for c in self.moment))
        if self.extent_mm < 0:
            raise GeometryError("extent_mm must be non-negative")
        if self.n_dipoles < 1:
            raise GeometryError("n_dipoles must be positive")
        if (self.extent_mm == 0) != (self.n_dipoles == 1):
            raise GeometryError("extent_mm == 0 iff n_dipoles == 1")


def build_sphere_grid(
    radius_mm: float,
    spacing_mm: float,
    margin_mm: float = 0.0,
    origin_mm: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> SourceGrid:
    """Cubic lattice restricted to the sphere interior.

    Returns all lattice points (optionally offset by ``origin_mm``) whose
    distance from the head center is at most ``radius_mm - margin_mm``,
    ordered lexicographically by (x, y, z).
    """
    if spacing_mm <= 0:
        raise GeometryError("spacing_mm must be positive")
    if margin_mm < 0:
        raise GeometryError("margin_mm must be non-negative")
    if spacing_mm >= radius_mm:
        raise GeometryError(
            f"empty grid: spacing {spacing_mm:g} mm does not fit inside radius {radius_mm:g} mm"
        )
    rmax = radius_mm - margin_mm
    origin = np.asarray(origin_mm, dtype=float)
    nmax = int(np.floor((rmax + np.abs(origin).max()) / spacing_mm)) + 1
    axis = np.arange(-nmax, nmax + 1, dtype=float) * spacing_mm
    pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = pts + origin
    keep = np.linalg.norm(pts, axis=1) <= rmax + 1e-9
    pts = pts[keep]
    if pts.shape[0] == 0:
        raise GeometryError(
            f"empty grid: spacing {spacing_mm:g} mm leaves no lattice point "
            f"within radius {rmax:g} mm"
        )
    return SourceGrid(positions_mm=pts, spacing_mm=spacing_mm)


def _ang(theta_deg: float, phi_deg: float) -> np.ndarray:
    """Unit vector from polar angle (from vertex) and azimuth (from +x, CCW)."""
    t, p = np.deg2rad(theta_deg), np.deg2rad(phi_deg)
    return np.array([np.cos(p) * np.sin(t), np.sin(p) * np.sin(t), np.cos(t)])


def _mid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m = a + b
    return m / np.linalg.norm(m)


def standard_1020_electrodes(radius_mm: float) -> ElectrodeArray:
    """The 19 classical 10-20 scalp sites plus Oz, scaled to the given radius.

    Coordinate frame: +x right, +y anterior, +z superior; Cz at the vertex.
    Outer-ring sites sit at 72 degrees from the vertex, the inner ring at 36.
    """
    if not radius_mm > 0:
        raise GeometryError("radius_mm must be positive")
    u = {
        "Cz": np.array([0.0, 0.0, 1.0]),
        "Fz": _ang(36, 90),
        "Pz": _ang(36, 270),
        "Oz": _ang(72, 270),
        "Fp1": _ang(72, 108),
        "Fp2": _ang(72, 72),
        "F7": _ang(72, 144),
        "F8": _ang(72, 36),
        "T3": _ang(72, 180),
        "T4": _ang(72, 0),
        "T5": _ang(72, 216),
        "T6": _ang(72, 324),
        "O1": _ang(72, 252),
        "O2": _ang(72, 288),
        "C3": _ang(36, 180),
        "C4": _ang(36, 0),
    }
    u["F3"] = _mid(u["F7"], u["Fz"])
    u["F4"] = _mid(u["F8"], u["Fz"])
    u["P3"] = _mid(u["T5"], u["Pz"])
    u["P4"] = _mid(u["T6"], u["Pz"])
    labels = (
        "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz",
        "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1", "O2", "Oz",
    )
    pos = np.array([u[l] for l in labels]) * radius_mm
    return ElectrodeArray(positions_mm=pos, labels=labels)


def extended_source_dipoles(
    spec: DipoleSourceSpec, grid: SourceGrid, seed: int
) -> list[tuple[int, np.ndarray]]:
    """Realize a source spec as (voxel index, moment) pairs on the grid.

    The grid point nearest the requested center always carries the first
    dipole; the remaining ``n_dipoles - 1`` are drawn without replacement
    from grid points within ``extent_mm`` of the center. Every dipole gets
    an equal share of the total moment, so the vector sum is conserved.
    """
    center = np.asarray(spec.center_mm, dtype=float)
    tree = cKDTree(grid.positions_mm)
    _, center_idx = tree.query(center)
    center_idx = int(center_idx)

    share = np.asarray(spec.moment, dtype=float) / spec.n_dipoles
    out = [(center_idx, share.copy())]
    n_rest = spec.n_dipoles - 1
    if n_rest:
        candidates = sorted(set(tree.query_ball_point(center, r=spec.extent_mm)) - {center_idx})
        if len(candidates) < n_rest:
            raise GeometryError(
                f"extended source needs {n_rest} grid points within "
                f"{spec.extent_mm:g} mm of {tuple(center)} but only "
                f"{len(candidates)} are available (short by {n_rest - len(candidates)})"
            )
        rng = seeded_rng(seed, "extended-source")
        chosen = rng.choice(np.asarray(candidates, dtype=int), size=n_rest, replace=False)
        out.extend((int(i), share.copy()) for i in chosen)
    return out


def geometry_to_json(model: HeadModel, electrodes: ElectrodeArray, grid: SourceGrid) -> dict:
    """JSON-ready dict matching the CLI geometry schema."""
    return {
        "radius_mm": model.radius_mm,
        "conductivity_s_per_m": model.conductivity_s_per_m,
        "electrodes": [
            {"label": lab, "pos_mm": [float(c) for c in pos]}
            for lab, pos in zip(electrodes.labels, electrodes.positions_mm)
        ],
        "grid": {
            "spacing_mm": grid.spacing_mm,
            "positions_mm": grid.positions_mm.tolist(),
        },
    }


def geometry_from_json(doc: dict) -> tuple[HeadModel, ElectrodeArray, SourceGrid]:
    model = HeadModel(
        radius_mm=float(doc["radius_mm"]),
        conductivity_s_per_m=float(doc["conductivity_s_per_m"]),
    )
    electrodes = ElectrodeArray(
        positions_mm=np.array([e["pos_mm"] for e in doc["electrodes"]], dtype=float),
        labels=tuple(e["label"] for e in doc["electrodes"]),
    )
    grid = SourceGrid(
        positions_mm=np.array(doc["grid"]["positions_mm"], dtype=float),
        spacing_mm=float(doc["grid"]["spacing_mm"]),
    )
    return model, electrodes, grid
