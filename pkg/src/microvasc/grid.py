"""Uniform hexahedral tissue mesh and the vessel-surface coupling measure.

The Dirac surface measure concentrated on the vessel walls is discretised
by equal-area point sampling of each cylinder's lateral surface on an
(arc length, angle) lattice; each sample carries area 2*pi*R*l/(n_ax*n_ang)
and is charged to the finite volume cell containing it, so per-segment
area sums are exact by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .network import DomainBox, VascularNetwork


class TissueGrid:
    """Cell-centered uniform grid tiling a box; linear index i + nx*(j + ny*k)."""

    def __init__(self, box: DomainBox, cells_per_axis):
        counts = tuple(int(c) for c in cells_per_axis)
        if len(counts) != 3 or any(c < 2 for c in counts):
            raise ValidationError("need at least 2 cells per axis")
        self.box = box
        self.cells_per_axis = counts
        self.spacing = box.extent / np.array(counts, dtype=float)
        self.cell_volume = float(np.prod(self.spacing))
        self.n_cells = counts[0] * counts[1] * counts[2]

    def ijk_to_linear(self, i: int, j: int, k: int) -> int:
        nx, ny, _ = self.cells_per_axis
        return i + nx * (j + ny * k)

    def linear_to_ijk(self, idx: int) -> tuple[int, int, int]:
        nx, ny, _ = self.cells_per_axis
        return idx % nx, (idx // nx) % ny, idx // (nx * ny)

    def cell_center(self, idx: int) -> np.ndarray:
        ijk = np.array(self.linear_to_ijk(idx), dtype=float)
        return self.box.lower + (ijk + 0.5) * self.spacing

    def locate(self, point: np.ndarray) -> tuple[int, bool]:
        """Cell containing `point`; clamps to the nearest cell when outside.

        Returns (linear index, clamped flag).
        """
        rel = (np.asarray(point, float) - self.box.lower) / self.spacing
        raw = np.floor(rel).astype(int)
        counts = np.array(self.cells_per_axis)
        clipped = np.clip(raw, 0, counts - 1)
        clamped = bool(np.any(raw != clipped))
        i, j, k = clipped
        return self.ijk_to_linear(int(i), int(j), int(k)), clamped

    def cell_centers(self) -> np.ndarray:
        """(n_cells, 3) array of cell centers in linear-index order."""
        nx, ny, nz = self.cells_per_axis
        xs = self.box.lower[0] + (np.arange(nx) + 0.5) * self.spacing[0]
        ys = self.box.lower[1] + (np.arange(ny) + 0.5) * self.spacing[1]
        zs = self.box.lower[2] + (np.arange(nz) + 0.5) * self.spacing[2]
        K, J, I = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.column_stack([I.ravel(), J.ravel(), K.ravel()])


def build_grid(box: DomainBox, cells_per_axis) -> TissueGrid:
    return TissueGrid(box, cells_per_axis)


@dataclass
class SegmentCoupling:
    """Surface samples of one cylindrical segment."""

    cells: np.ndarray  # (n_samples,) linear cell indices, ring-major order
    s: np.ndarray  # (n_samples,) arc lengths of the sample rings
    sample_area: float  # m^2, identical for every sample of this segment
    n_axial: int
    n_angular: int

    @property
    def total_area(self) -> float:
        return self.sample_area * len(self.cells)


@dataclass
class SurfaceCoupling:
    per_segment: dict[int, SegmentCoupling] = field(default_factory=dict)
    clamped_samples: int = 0  # samples that fell outside the grid

    def total_area(self) -> float:
        return sum(sc.total_area for sc in self.per_segment.values())


def _frame(orientation: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors orthogonal to `orientation` and to each other."""
    helper = np.array([1.0, 0.0, 0.0])
    if abs(orientation[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(orientation, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(orientation, e1)
    return e1, e2


def build_surface_coupling(
    grid: TissueGrid,
    net: VascularNetwork,
    n_axial: int | None = None,
    n_angular: int = 8,
) -> SurfaceCoupling:
    """Sample every cylinder's lateral surface on a midpoint (s, theta) lattice.

    n_axial defaults per segment to max(4, 2*ceil(l/h)) with h the minimum
    cell spacing, so each cell crossed by a vessel receives samples.
    """
    if n_angular < 2 or (n_axial is not None and n_axial < 2):
        raise ValidationError("need at least two samples per direction")
    h_min = float(np.min(grid.spacing))
    coupling = SurfaceCoupling()
    angles = None
    for sid in sorted(net.segments):
        seg = net.segments[sid]
        length, orientation = net.segment_geometry(sid)
        x0 = net.nodes[seg.node_a].position
        na = n_axial if n_axial is not None else max(4, 2 * math.ceil(length / h_min))
        thetas = (np.arange(n_angular) + 0.5) * (2.0 * math.pi / n_angular)
        e1, e2 = _frame(orientation)
        ring_offsets = (
            seg.radius * np.cos(thetas)[:, None] * e1[None, :]
            + seg.radius * np.sin(thetas)[:, None] * e2[None, :]
        )  # (n_angular, 3)
        s_vals = (np.arange(na) + 0.5) * (length / na)
        cells = np.empty(na * n_angular, dtype=np.int64)
        s_arr = np.empty(na * n_angular)
        idx = 0
        for ia, s in enumerate(s_vals):
            ring_center = x0 + s * orientation
            for off in ring_offsets:
                cell, clamped = grid.locate(ring_center + off)
                if clamped:
                    coupling.clamped_samples += 1
                cells[idx] = cell
                s_arr[idx] = s
                idx += 1
        area = 2.0 * math.pi * seg.radius * length / (na * n_angular)
        coupling.per_segment[sid] = SegmentCoupling(cells, s_arr, area, na, n_angular)
    return coupling


def circumferential_average(
    field: np.ndarray, coupling: SurfaceCoupling, seg_id: int, s: float
) -> float:
    """Mean of the cell field over the sample ring nearest to arc length s."""
    sc = coupling.per_segment[seg_id]
    ring_len = sc.n_angular
    ring_s = sc.s[::ring_len]
    ring = int(np.argmin(np.abs(ring_s - s)))
    cells = sc.cells[ring * ring_len : (ring + 1) * ring_len]
    return float(np.mean(field[cells]))


def project_1d_to_surface(
    net: VascularNetwork, nodal_field: dict[int, float], seg_id: int, s: float
) -> float:
    """Extend the 1D field to the wall ring at arc length s (linear interp)."""
    seg = net.segments[seg_id]
    length, _ = net.segment_geometry(seg_id)
    if not 0.0 <= s <= length * (1.0 + 1e-12):
        raise ValidationError(f"arc length {s} outside segment {seg_id}")
    t = min(max(s / length, 0.0), 1.0)
    return (1.0 - t) * nodal_field[seg.node_a] + t * nodal_field[seg.node_b]
