"""Forward-model uncertainty transforms: tilt, jitter, conductivity,
geometry, and grid-resolution mismatch between forward and inverse models.

Convention: the electrode perturbations (tilt, jitter) distort the forward
(data-generating) montage while the inverse solver keeps the nominal
positions; conductivity and geometry factors distort the inverse model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import seeded_rng
from .forward import LeadField, assemble_leadfield
from .geometry import (
    ElectrodeArray,
    GeometryError,
    HeadModel,
    SourceGrid,
    build_sphere_grid,
)


@dataclass(frozen=True)
class PerturbationSpec:
    tilt_deg: float = 0.0
    jitter_mm: float = 0.0
    conductivity_factor: float = 1.0
    geometry_factor: float = 1.0
    inverse_spacing_mm: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.conductivity_factor <= 0:
            raise GeometryError("conductivity_factor must be positive")
        if self.geometry_factor <= 0:
            raise GeometryError("geometry_factor must be positive")
        if self.inverse_spacing_mm <= 0:
            raise GeometryError("inverse_spacing_mm must be positive")
        if self.jitter_mm < 0:
            raise GeometryError("jitter_mm must be non-negative")

    def to_json(self) -> dict:
        return {
            "tilt_deg": self.tilt_deg,
            "jitter_mm": self.jitter_mm,
            "conductivity_factor": self.conductivity_factor,
            "geometry_factor": self.geometry_factor,
            "inverse_spacing_mm": self.inverse_spacing_mm,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PerturbationSpec":
        return cls(**doc)


def tilt_electrodes(arr: ElectrodeArray, degrees: float) -> ElectrodeArray:
    """Roll the montage about the anterior-posterior (y) axis.

    Positive angles move the vertex toward the left ear (-x).
    """
    if abs(degrees) >= 90:
        raise GeometryError("tilt must satisfy |degrees| < 90")
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    rot = np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    pos = arr.positions_mm @ rot.T
    return ElectrodeArray(positions_mm=pos, labels=arr.labels)


def jitter_electrodes(arr: ElectrodeArray, sigma_mm: float, seed: int) -> ElectrodeArray:
    """Independent Gaussian displacement per electrode, re-projected on-scalp."""
    if sigma_mm < 0:
        raise GeometryError("sigma_mm must be non-negative")
    if sigma_mm == 0:
        return arr
    rng = seeded_rng(seed, "electrode-jitter")
    radii = np.linalg.norm(arr.positions_mm, axis=1, keepdims=True)
    moved = arr.positions_mm + sigma_mm * rng.standard_normal(arr.positions_mm.shape)
    norms = np.linalg.norm(moved, axis=1, keepdims=True)
    if norms.min() <= 0:
        raise GeometryError("jitter collapsed an electrode onto the head center")
    return ElectrodeArray(positions_mm=moved * (radii / norms), labels=arr.labels)


def distort_model(model: HeadModel, spec: PerturbationSpec) -> HeadModel:
    """Inverse-side head model with scaled conductivity and radius."""
    return HeadModel(
        radius_mm=model.radius_mm * spec.geometry_factor,
        conductivity_s_per_m=model.conductivity_s_per_m * spec.conductivity_factor,
        center_mm=model.center_mm,
    )


def build_inverse_problem(
    fwd_model: HeadModel,
    fwd_electrodes: ElectrodeArray,
    spec: PerturbationSpec,
    forward_spacing_mm: float | None = None,
    margin_mm: float = 5.0,
) -> tuple[HeadModel, ElectrodeArray, SourceGrid, LeadField]:
    """Assemble the mismatched inverse problem from a clean forward setup.

    Returns ``(inverse model, perturbed forward electrodes, inverse grid,
    inverse lead field)``. The inverse lead field uses the nominal montage
    projected onto the (possibly rescaled) inverse sphere; tilt and jitter
    apply only to the returned forward montage. When forward and inverse
    grid spacings differ, the inverse lattice is offset by half the forward
    spacing so no inverse voxel coincides with a forward one.
    """
    inv_model = distort_model(fwd_model, spec)

    fwd_pert = tilt_electrodes(fwd_electrodes, spec.tilt_deg)
    fwd_pert = jitter_electrodes(fwd_pert, spec.jitter_mm, spec.seed)

    inv_electrodes = ElectrodeArray(
        positions_mm=fwd_electrodes.positions_mm * spec.geometry_factor,
        labels=fwd_electrodes.labels,
    )

    origin = (0.0, 0.0, 0.0)
    if forward_spacing_mm is not None and forward_spacing_mm != spec.inverse_spacing_mm:
        half = forward_spacing_mm / 2.0
        origin = (half, half, half)
    inv_grid = build_sphere_grid(
        inv_model.radius_mm, spec.inverse_spacing_mm, margin_mm, origin_mm=origin
    )
    inv_lf = assemble_leadfield(inv_model, inv_electrodes, inv_grid)
    return inv_model, fwd_pert, inv_grid, inv_lf
