"""Coupled stationary oxygen transport with Kedem-Katchalsky wall flux and
Michaelis-Menten tissue consumption, solved by damped fixed-point iteration.

Partial pressures stay in mmHg; every transport coefficient multiplying
them is in SI, so both compartment balances carry units of mmHg*m^3/s.
The 1D advective-diffusive flux carries the cross-section factor pi*R^2,
which makes the 1D volumetric flow identical to the flow solver's and the
junction balance conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, StateError, ValidationError
from .flow import FlowParameters, FlowState, _sparse_solve, face_velocities
from .grid import SurfaceCoupling, TissueGrid
from .network import VascularNetwork


@dataclass
class OxygenParameters:
    diffusion_vessel: float = 5.00e-5  # m^2/s
    diffusion_tissue: float = 1.35e-7  # m^2/s
    wall_permeability: float = 3.50e-5  # m/s
    max_consumption: float = 3.00  # mmHg/s
    po2_half: float = 1.00  # mmHg
    arterial_po2: float = 75.0  # mmHg
    venous_po2: float = 38.0  # mmHg

    def __post_init__(self):
        for name in ("diffusion_vessel", "diffusion_tissue", "po2_half",
                     "arterial_po2", "venous_po2"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"{name} must be positive")
        for name in ("wall_permeability", "max_consumption"):
            if getattr(self, name) < 0.0:
                raise ValidationError(f"{name} must be nonnegative")


def michaelis_menten(po2: float, params: OxygenParameters) -> float:
    """Saturating consumption rate m0 * po2 / (po2 + po2_half) in mmHg/s."""
    if po2 < 0.0:
        raise ValidationError("partial pressure must be nonnegative")
    return params.max_consumption * po2 / (po2 + params.po2_half)


def kedem_katchalsky_flux(
    p_v_wall: float,
    p_t_wall: float,
    po2_v_wall: float,
    po2_t_wall: float,
    flow_params: FlowParameters,
    oxy_params: OxygenParameters,
) -> float:
    """Oxygen wall flux [mmHg*m/s]: advective drag plus diffusive permeation."""
    from .flow import starling_flux

    jp = starling_flux(p_v_wall, p_t_wall, flow_params)
    mean = 0.5 * (po2_v_wall + po2_t_wall)
    return (1.0 - flow_params.reflection) * jp * mean + oxy_params.wall_permeability * (
        po2_v_wall - po2_t_wall
    )


@dataclass
class OxygenState:
    po2_t: np.ndarray  # per-cell, mmHg
    po2_v: dict[int, float]  # per-node, mmHg
    iterations: int
    update_norm: float
    history: list[float] = field(default_factory=list)


class TransportOperator:
    """Affine operator in (po2_t, po2_v) for a frozen consumption linearization.

    The matrix splits into a fixed part (convection, diffusion, exchange,
    Dirichlet rows) and a diagonal consumption part rebuilt each Picard
    iteration from the previous iterate.
    """

    def __init__(self, net, grid, node_index, base, rhs, cell_volume, oxy, dirichlet):
        self.net = net
        self.grid = grid
        self.node_index = node_index
        self.base = base
        self.rhs = rhs
        self.cell_volume = cell_volume
        self.params = oxy
        self.dirichlet = dirichlet

    def matrix_for(self, po2_prev: np.ndarray) -> sp.csr_matrix:
        """Base matrix plus the Picard-linearized Michaelis-Menten sink."""
        n = self.base.shape[0]
        coeff = np.zeros(n)
        cells = self.grid.n_cells
        coeff[:cells] = (
            self.cell_volume
            * self.params.max_consumption
            / (np.maximum(po2_prev[:cells], 0.0) + self.params.po2_half)
        )
        return self.base + sp.diags(coeff)


def assemble_transport_operator(
    net: VascularNetwork,
    grid: TissueGrid,
    coupling: SurfaceCoupling,
    flow: FlowState,
    flow_params: FlowParameters,
    params: OxygenParameters,
) -> TransportOperator:
    node_order = sorted(net.nodes)
    node_index = {nid: grid.n_cells + i for i, nid in enumerate(node_order)}
    n = grid.n_cells + len(node_order)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    rhs = np.zeros(n)

    dirichlet = {}
    for nid in net.boundary_nodes():
        node = net.nodes[nid]
        if node.boundary_po2 is None:
            raise StateError(
                f"boundary node {nid} has no oxygen value; run "
                "arterial/venous classification first"
            )
        dirichlet[nid] = node.boundary_po2

    _tissue_transport_entries(grid, flow, flow_params, params, rows, cols, vals)
    _vessel_transport_entries(
        net, flow, params, node_index, dirichlet, rows, cols, vals
    )
    _exchange_entries(
        net, grid, coupling, flow, flow_params, params, node_index, dirichlet,
        rows, cols, vals,
    )

    for nid, value in sorted(dirichlet.items()):
        r = node_index[nid]
        rows.append(np.array([r]))
        cols.append(np.array([r]))
        vals.append(np.array([1.0]))
        rhs[r] = value

    base = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return TransportOperator(
        net, grid, node_index, base, rhs, grid.cell_volume, params, dirichlet
    )


def _tissue_transport_entries(grid, flow, flow_params, params, rows, cols, vals):
    """Upwinded convection with the Darcy face velocities plus diffusion.

    Outer boundary faces are zero-flux for both terms, which realises the
    zero-total-flux boundary condition exactly (the Darcy normal velocity
    vanishes there by the Neumann flow condition).
    """
    nx, ny, nz = grid.cells_per_axis
    dx, dy, dz = grid.spacing
    areas = [dy * dz, dx * dz, dx * dy]
    diff_t = [params.diffusion_tissue * a / h for a, h in zip(areas, grid.spacing)]
    idx = np.arange(grid.n_cells).reshape((nz, ny, nx))
    faces = face_velocities(grid, flow.p_t, flow_params)
    for (axis, t, area, v) in zip((2, 1, 0), diff_t, areas, faces):
        lo = np.take(idx, range(idx.shape[axis] - 1), axis=axis).ravel()
        hi = np.take(idx, range(1, idx.shape[axis]), axis=axis).ravel()
        vflat = v.ravel() * area  # volumetric face flow lo -> hi
        up = np.where(vflat > 0.0, lo, hi)
        # diffusion
        for a, b in ((lo, hi), (hi, lo)):
            rows.append(a)
            cols.append(a)
            vals.append(np.full(a.shape, t))
            rows.append(a)
            cols.append(b)
            vals.append(np.full(a.shape, -t))
        # upwinded advection: flux = vflat * po2[up], out of lo, into hi
        rows.append(lo)
        cols.append(up)
        vals.append(vflat)
        rows.append(hi)
        cols.append(up)
        vals.append(-vflat)


def _vessel_transport_entries(
    net, flow, params, node_index, dirichlet, rows, cols, vals
):
    for sid in sorted(net.segments):
        seg = net.segments[sid]
        length, _ = net.segment_geometry(sid)
        area = math.pi * seg.radius**2
        q = flow.u_v[sid] * area  # volumetric flow node_a -> node_b
        d = params.diffusion_vessel * area / length
        ia, ib = node_index[seg.node_a], node_index[seg.node_b]
        up = ia if q > 0.0 else ib
        entries = [
            (ia, ia, d), (ia, ib, -d), (ib, ib, d), (ib, ia, -d),
            (ia, up, q), (ib, up, -q),
        ]
        for r, c, v in entries:
            nid = seg.node_a if r == ia else seg.node_b
            if nid in dirichlet:
                continue
            rows.append(np.array([r]))
            cols.append(np.array([c]))
            vals.append(np.array([v]))


def _exchange_entries(
    net, grid, coupling, flow, flow_params, params, node_index, dirichlet,
    rows, cols, vals,
):
    """Kedem-Katchalsky coupling over the shared sample set.

    Per sample the flux is linear in the unknown partial pressures:
    J = (1-sigma)*J_p*(po2_v + po2_t)/2 + L*(po2_v - po2_t).
    """
    sigma = flow_params.reflection
    lpo2 = params.wall_permeability
    for sid in sorted(net.segments):
        seg = net.segments[sid]
        sc = coupling.per_segment[sid]
        length, _ = net.segment_geometry(sid)
        w_b = sc.s / length
        w_a = 1.0 - w_b
        jp = flow.sample_jp[sid]
        adv = 0.5 * (1.0 - sigma) * jp
        cv = (adv + lpo2) * sc.sample_area  # coefficient on po2_v_wall
        ct = (adv - lpo2) * sc.sample_area  # coefficient on po2_t
        cells = sc.cells
        ia, ib = node_index[seg.node_a], node_index[seg.node_b]
        m = len(cells)
        # tissue rows: -J*area moved left
        rows.append(cells)
        cols.append(cells)
        vals.append(-ct)
        rows.append(cells)
        cols.append(np.full(m, ia))
        vals.append(-cv * w_a)
        rows.append(cells)
        cols.append(np.full(m, ib))
        vals.append(-cv * w_b)
        # vessel rows: +J*area, split by nodal weight
        for node_id, node_row, w in ((seg.node_a, ia, w_a), (seg.node_b, ib, w_b)):
            if node_id in dirichlet:
                continue
            m_idx = np.full(m, node_row)
            rows.append(m_idx)
            cols.append(np.full(m, ia))
            vals.append(w * cv * w_a)
            rows.append(m_idx)
            cols.append(np.full(m, ib))
            vals.append(w * cv * w_b)
            rows.append(m_idx)
            cols.append(cells)
            vals.append(w * ct)
    return rows, cols, vals


_PICARD_LINEAR_TOL = 1.0e-12


def _picard_solve(matrix, rhs, lu):
    """Direct solve reusing the first factorization as a preconditioner.

    Only the consumption diagonal changes between fixed-point iterations,
    so the LU of the first matrix remains an excellent preconditioner;
    subsequent solves use preconditioned GMRES at back-substitution cost,
    falling back to a fresh factorization if GMRES stalls.
    """
    csc = matrix.tocsc()
    if lu is None:
        lu = spla.splu(csc)
        return lu.solve(rhs), lu
    precond = spla.LinearOperator(csc.shape, lu.solve)
    x, info = spla.gmres(csc, rhs, M=precond, rtol=_PICARD_LINEAR_TOL, maxiter=50)
    if info != 0:
        lu = spla.splu(csc)
        x = lu.solve(rhs)
    return x, lu


def solve_oxygen(
    operator: TransportOperator,
    params: OxygenParameters,
    initial_guess: np.ndarray | None = None,
    damping: float = 0.5,
    tol: float = 1.0e-8,
    max_iter: int = 200,
) -> OxygenState:
    """Damped Picard iteration on the consumption linearization.

    x_{n+1} = (1-theta) x_n + theta * solve(A(x_n) x = b); stops when the
    relative update drops below tol. With zero consumption the problem is
    linear and the first solve is exact.
    """
    if not 0.0 < damping <= 1.0:
        raise ValidationError("damping factor must lie in (0, 1]")
    if tol <= 0.0:
        raise ValidationError("tolerance must be positive")
    n = operator.base.shape[0]
    x = np.zeros(n) if initial_guess is None else np.array(initial_guess, float)
    dir_rows = np.array(
        [operator.node_index[nid] for nid in sorted(operator.dirichlet)], dtype=int
    )
    dir_vals = np.array(
        [operator.dirichlet[nid] for nid in sorted(operator.dirichlet)]
    )
    history: list[float] = []
    linear = operator.params.max_consumption == 0.0
    iterations = 0
    lu = None
    for it in range(1, max_iter + 1):
        matrix = operator.matrix_for(x)
        y, lu = _picard_solve(matrix, operator.rhs, lu)
        x_new = y if linear else (1.0 - damping) * x + damping * y
        if dir_rows.size:
            x_new[dir_rows] = dir_vals  # damping must not relax pinned values
        denom = np.linalg.norm(x_new)
        update = np.linalg.norm(x_new - x) / (denom if denom > 0 else 1.0)
        history.append(update)
        x = x_new
        iterations = it
        if linear or update <= tol:
            break
    else:
        raise ConvergenceError(
            f"fixed point did not converge in {max_iter} iterations "
            f"(last update {history[-1]:.3e})",
            history,
        )

    cells = operator.grid.n_cells
    po2_t = x[:cells]
    po2_v = {
        nid: float(x[operator.node_index[nid]]) for nid in sorted(operator.net.nodes)
    }
    # boundedness: clip rounding-level violations only
    po2_t = np.clip(po2_t, 0.0, None)
    return OxygenState(
        po2_t=po2_t,
        po2_v=po2_v,
        iterations=iterations,
        update_norm=history[-1],
        history=history,
    )
