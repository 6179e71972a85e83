"""Axisymmetric finite-volume thermal model of a suspended microchannel.

The domain is a cylinder of fluid (radius ``channel_inner_radius``) wrapped
in a thin solid wall and surrounded by stagnant air out to ``ambient_radius``,
where the temperature rise is pinned to zero.  Both channel ends are likewise
pinned to zero, modelling the heat-sinking anchors.  Heat enters through two
heater bands deposited in the wall and leaves by conduction and by fluid
enthalpy transport; advection is discretized first-order upwind so the scheme
obeys the discrete maximum principle at any flow rate.

A bundle of ``channel_count`` identical parallel channels is modelled as a
single channel carrying ``Q / channel_count`` and receiving
``P / channel_count`` per heater.  Temperatures are physical (identical in
every channel); power ratios are channel-count invariant because the steady
problem is linear in the sources.
"""

import math
import threading
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MeshError, SolverError

FLUID, WALL, AIR = 0, 1, 2
REGION_NAMES = ("fluid", "wall", "air")

DEFAULT_SOLVER_RTOL = 1e-10
ENERGY_RTOL = 1e-6
# below this injected power (W) relative checks are meaningless in double
# precision; error scales are taken against the floor instead
POWER_SCALE_FLOOR = 1e-30


@dataclass(frozen=True)
class SensorGeometry:
    """Physical layout of the channel, heater bands and thermopile junctions.

    All lengths in metres.  Axial positions are measured from the upstream
    anchor; the cavity spans ``[0, cavity_length]``.
    """

    channel_inner_radius: float = 10e-6
    wall_thickness: float = 1.7e-6  # 0.5 um + 1.2 um nitride layers
    channel_count: int = 5
    cavity_length: float = 1.6e-3
    ambient_radius: float = 450e-6
    heater_up_center: float = 0.5e-3
    heater_down_center: float = 1.1e-3
    heater_width: float = 100e-6
    tc_junction_up: float = 0.6e-3
    tc_junction_down: float = 1.0e-3
    tc_band_width: float = 20e-6
    junction_count: int = 26
    symmetric: bool = True

    def __post_init__(self):
        if not (0.0 < self.channel_inner_radius):
            raise ValueError("channel_inner_radius must be positive")
        if not (0.0 < self.wall_thickness):
            raise ValueError("wall_thickness must be positive")
        outer = self.channel_inner_radius + self.wall_thickness
        if not (outer < self.ambient_radius):
            raise ValueError("channel wall must lie inside ambient_radius")
        if self.channel_count < 1 or self.junction_count < 1:
            raise ValueError("channel_count and junction_count must be >= 1")
        length = self.cavity_length
        if length <= 0.0:
            raise ValueError("cavity_length must be positive")
        for name, lo, hi in (
            ("heater_up", *self._band(self.heater_up_center, self.heater_width)),
            ("heater_down", *self._band(self.heater_down_center, self.heater_width)),
            ("tc_junction_up", *self._band(self.tc_junction_up, self.tc_band_width)),
            ("tc_junction_down", *self._band(self.tc_junction_down, self.tc_band_width)),
        ):
            if not (0.0 < lo and hi < length):
                raise ValueError(f"{name} band must lie strictly inside the cavity")
        if self.symmetric:
            tol = 1e-12 * length
            if abs(self.heater_up_center + self.heater_down_center - length) > tol:
                raise ValueError("symmetric layout requires mirrored heater centers")
            if abs(self.tc_junction_up + self.tc_junction_down - length) > tol:
                raise ValueError("symmetric layout requires mirrored junction positions")

    @staticmethod
    def _band(center, width):
        return center - 0.5 * width, center + 0.5 * width


@dataclass(frozen=True)
class MaterialSet:
    """Thermal properties (SI units).

    ``wall_axial_conductance_boost`` folds the metal leads running along the
    wall into an enhanced axial wall conductivity; radial wall conduction is
    not boosted.
    """

    k_fluid: float = 0.60
    k_wall: float = 3.0
    k_air: float = 0.026
    rho_cp_fluid: float = 4.18e6
    wall_axial_conductance_boost: float = 2.0

    def __post_init__(self):
        for name in ("k_fluid", "k_wall", "k_air", "rho_cp_fluid"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.wall_axial_conductance_boost < 1.0:
            raise ValueError("wall_axial_conductance_boost must be >= 1")


@dataclass(frozen=True)
class GridSpec:
    """Cell counts for the (r, z) grid; air cells grow geometrically."""

    n_axial: int = 320
    radial_cells_fluid: int = 4
    radial_cells_wall: int = 2
    radial_cells_air: int = 12
    radial_grading: float = 1.35

    def __post_init__(self):
        for name in ("n_axial", "radial_cells_fluid", "radial_cells_wall", "radial_cells_air"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if self.radial_grading < 1.0:
            raise ValueError("radial_grading must be >= 1")

    def refined(self, factor: int = 2) -> "GridSpec":
        """Spec with every cell count multiplied by ``factor``."""
        return replace(
            self,
            n_axial=self.n_axial * factor,
            radial_cells_fluid=self.radial_cells_fluid * factor,
            radial_cells_wall=self.radial_cells_wall * factor,
            radial_cells_air=self.radial_cells_air * factor,
        )


class Mesh:
    """Immutable axisymmetric grid with region tags and element cell maps.

    Cells are indexed ``flat = ir * n_axial + iz``.  Regions are radial
    bands, so the region tag depends on the ring index only; fluid/wall and
    wall/air interfaces coincide with radial faces by construction.
    """

    def __init__(self, geom: SensorGeometry, grid: GridSpec):
        self.geom = geom
        self.grid = grid

        a = geom.channel_inner_radius
        b = a + geom.wall_thickness
        rad = geom.ambient_radius
        length = geom.cavity_length

        r_faces = np.concatenate(
            [
                np.linspace(0.0, a, grid.radial_cells_fluid + 1),
                np.linspace(a, b, grid.radial_cells_wall + 1)[1:],
                _graded_faces(b, rad, grid.radial_cells_air, grid.radial_grading)[1:],
            ]
        )
        self.r_faces = r_faces
        self.z_faces = np.linspace(0.0, length, grid.n_axial + 1)
        self.r_centers = 0.5 * (r_faces[:-1] + r_faces[1:])
        self.z_centers = 0.5 * (self.z_faces[:-1] + self.z_faces[1:])
        self.dz = length / grid.n_axial

        self.n_r = grid.radial_cells_fluid + grid.radial_cells_wall + grid.radial_cells_air
        self.n_z = grid.n_axial
        self.n_cells = self.n_r * self.n_z

        self.ring_region = np.concatenate(
            [
                np.full(grid.radial_cells_fluid, FLUID, dtype=np.int8),
                np.full(grid.radial_cells_wall, WALL, dtype=np.int8),
                np.full(grid.radial_cells_air, AIR, dtype=np.int8),
            ]
        )
        # annulus cross-sections and volumes
        self.ring_area = math.pi * (r_faces[1:] ** 2 - r_faces[:-1] ** 2)
        self.cell_volume = self.ring_area * self.dz  # per ring; equal along z

        self.fluid_rings = np.arange(grid.radial_cells_fluid)
        self.wall_rings = np.arange(
            grid.radial_cells_fluid, grid.radial_cells_fluid + grid.radial_cells_wall
        )
        self.surface_ring = int(self.wall_rings[-1])  # outermost wall ring

        self.heater_up_z = self._axial_band("heater", geom.heater_up_center, geom.heater_width)
        self.heater_down_z = self._axial_band("heater", geom.heater_down_center, geom.heater_width)
        self.tc_up_z = self._axial_band("thermopile junction", geom.tc_junction_up, geom.tc_band_width, allow_narrow=True)
        self.tc_down_z = self._axial_band("thermopile junction", geom.tc_junction_down, geom.tc_band_width, allow_narrow=True)

    def _axial_band(self, what, center, width, allow_narrow=False):
        if not allow_narrow and width < self.dz:
            raise MeshError(
                f"element unresolved: {what} width {width:g} m is narrower than "
                f"one axial cell ({self.dz:g} m)"
            )
        # Select cells whose centers fall in [center - w/2, center + w/2],
        # working in cell-index units with a tiny tolerance so band edges
        # that coincide with cell centers resolve identically for an
        # element and its mirror image.
        c_idx = center / self.dz - 0.5
        half = 0.5 * width / self.dz
        k_min = max(math.ceil(c_idx - half - 1e-6), 0)
        k_max = min(math.floor(c_idx + half + 1e-6), self.n_z - 1)
        if k_max < k_min:
            lo, hi = center - 0.5 * width, center + 0.5 * width
            raise MeshError(
                f"element unresolved: no cell centers in {what} band [{lo:g}, {hi:g}] m"
            )
        return np.arange(k_min, k_max + 1)

    def total_volume(self) -> float:
        return float(np.sum(self.cell_volume) * self.n_z)

    def cell_region(self) -> np.ndarray:
        """Region tag per cell, shape (n_r, n_z)."""
        return np.repeat(self.ring_region[:, None], self.n_z, axis=1)


def _graded_faces(r0, r1, n, growth):
    """Faces of n cells from r0 to r1 with geometric width growth."""
    if growth == 1.0:
        return np.linspace(r0, r1, n + 1)
    w0 = (r1 - r0) * (growth - 1.0) / (growth**n - 1.0)
    widths = w0 * growth ** np.arange(n)
    faces = np.concatenate([[r0], r0 + np.cumsum(widths)])
    faces[-1] = r1  # kill accumulation error on the boundary face
    return faces


def build_mesh(geom: SensorGeometry, grid: GridSpec) -> Mesh:
    """Construct the axisymmetric mesh; rejects unresolvable element maps."""
    return Mesh(geom, grid)


def mean_velocity(q_flow: float, geom: SensorGeometry) -> float:
    """Mean axial fluid velocity (m/s) for a total flow q_flow (m^3/s).

    Each of the parallel channels carries q_flow / channel_count; negative
    flow means reversed direction.
    """
    if not math.isfinite(q_flow):
        raise ValueError("flow rate must be finite")
    area = math.pi * geom.channel_inner_radius**2
    return q_flow / geom.channel_count / area


@dataclass(frozen=True)
class TemperatureField:
    """Steady temperature rise above ambient on a mesh.

    ``rise`` has shape (n_r, n_z).  The operating point records total flow
    (m^3/s) and total heater powers (W); the solve itself runs per channel.
    """

    mesh: Mesh
    rise: np.ndarray
    q_flow: float
    p_up: float
    p_down: float
    solver_residual: float
    energy_residual: float

    def surface_rise(self) -> np.ndarray:
        """Wall-surface temperature rise per axial cell."""
        return self.rise[self.mesh.surface_ring, :]


class _Operator:
    """Assembled FVM operator for one flow rate (factorization cached)."""

    def __init__(self, mesh: Mesh, mats: MaterialSet, q_flow: float, profile: str):
        self.mesh = mesh
        self.q_flow = q_flow
        matrix, boundary_g, flux = _assemble(mesh, mats, q_flow, profile)
        self.boundary_g = boundary_g  # (axial-end conductance per ring, outer conductance)
        self.flux = flux  # advective W/K per fluid ring, signed
        self.matrix = matrix
        try:
            self.lu = spla.splu(matrix.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"factorization failed (singular system?): {exc}") from None

    def solve(self, source: np.ndarray) -> np.ndarray:
        return self.lu.solve(source)


def _assemble(mesh, mats, q_flow, profile):
    nr, nz = mesh.n_r, mesh.n_z
    dz = mesh.dz
    geom = mesh.geom

    k_rad = np.choose(mesh.ring_region, [mats.k_fluid, mats.k_wall, mats.k_air])
    k_ax = np.choose(
        mesh.ring_region,
        [mats.k_fluid, mats.k_wall * mats.wall_axial_conductance_boost, mats.k_air],
    )

    # axial conduction per ring: internal faces and half-cell links to the
    # Dirichlet end faces
    g_ax = k_ax * mesh.ring_area / dz
    g_ax_end = k_ax * mesh.ring_area / (0.5 * dz)

    # radial conduction between ring ir and ir+1 through the exact
    # cylindrical-shell resistance, split at the material interface face
    rc = mesh.r_centers
    rf = mesh.r_faces[1:-1]  # internal radial faces
    shell = np.log(rf / rc[:-1]) / k_rad[:-1] + np.log(rc[1:] / rf) / k_rad[1:]
    g_rad = 2.0 * math.pi * dz / shell
    g_outer = 2.0 * math.pi * dz * k_rad[-1] / math.log(geom.ambient_radius / rc[-1])

    # per-ring advective flux (W/K), signed with the flow
    q_chan = q_flow / geom.channel_count
    flux = np.zeros(nr)
    nf = mesh.fluid_rings.size
    r_in = mesh.r_faces[: nf + 1][:-1]
    r_out = mesh.r_faces[1 : nf + 1]
    a = geom.channel_inner_radius
    if profile == "plug":
        ring_q = q_chan * (r_out**2 - r_in**2) / a**2
    elif profile == "parabolic":
        u_mean = q_chan / (math.pi * a**2)
        ring_q = 2.0 * u_mean * math.pi * (
            (r_out**2 - r_in**2) - (r_out**4 - r_in**4) / (2.0 * a**2)
        )
    else:
        raise ValueError(f"unknown velocity profile {profile!r}")
    flux[mesh.fluid_rings] = mats.rho_cp_fluid * ring_q

    def flat(ir, iz):
        return ir * nz + iz

    rows, cols, vals = [], [], []
    diag = np.zeros((nr, nz))

    iz = np.arange(nz)

    # axial conduction
    for ir in range(nr):
        g = g_ax[ir]
        left = flat(ir, iz[:-1])
        right = flat(ir, iz[1:])
        rows += [left, right]
        cols += [right, left]
        vals += [np.full(nz - 1, -g), np.full(nz - 1, -g)]
        diag[ir, :-1] += g
        diag[ir, 1:] += g
        diag[ir, 0] += g_ax_end[ir]
        diag[ir, -1] += g_ax_end[ir]

    # radial conduction
    for ir in range(nr - 1):
        g = g_rad[ir]
        inner = flat(ir, iz)
        outer = flat(ir + 1, iz)
        rows += [inner, outer]
        cols += [outer, inner]
        vals += [np.full(nz, -g), np.full(nz, -g)]
        diag[ir, :] += g
        diag[ir + 1, :] += g
    diag[nr - 1, :] += g_outer

    # upwinded advection in fluid rings
    for ir in mesh.fluid_rings:
        f = flux[ir]
        if f == 0.0:
            continue
        mag = abs(f)
        diag[ir, :] += mag  # every cell has one outflow face
        if f > 0.0:
            rows.append(flat(ir, iz[1:]))
            cols.append(flat(ir, iz[:-1]))
        else:
            rows.append(flat(ir, iz[:-1]))
            cols.append(flat(ir, iz[1:]))
        vals.append(np.full(nz - 1, -mag))

    rows.append(np.arange(nr * nz))
    cols.append(np.arange(nr * nz))
    vals.append(diag.ravel())

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nr * nz, nr * nz),
    ).tocsr()
    return matrix, (g_ax_end, g_outer), flux


def _source_vector(mesh, p_up, p_down):
    geom = mesh.geom
    src = np.zeros((mesh.n_r, mesh.n_z))
    for power, band in ((p_up, mesh.heater_up_z), (p_down, mesh.heater_down_z)):
        vol = mesh.cell_volume[mesh.wall_rings]
        total = vol.sum() * band.size
        per_chan = power / geom.channel_count
        src[np.ix_(mesh.wall_rings, band)] += per_chan * vol[:, None] / total
    return src.ravel()


def _energy_residual(op, temp, p_in_chan):
    g_ax_end, g_outer = op.boundary_g
    cond = float(
        np.dot(g_ax_end, temp[:, 0])
        + np.dot(g_ax_end, temp[:, -1])
        + g_outer * np.sum(temp[-1, :])
    )
    flux = op.flux
    enth = float(
        np.dot(np.maximum(flux, 0.0), temp[:, -1])
        + np.dot(np.maximum(-flux, 0.0), temp[:, 0])
    )
    return abs(p_in_chan - (cond + enth)) / max(abs(p_in_chan), POWER_SCALE_FLOOR)


def solve_steady(
    mesh: Mesh,
    mats: MaterialSet,
    q_flow: float,
    p_up: float,
    p_down: float,
    profile: str = "plug",
    allow_negative_power: bool = False,
    rtol: float = DEFAULT_SOLVER_RTOL,
    _operator: "_Operator | None" = None,
) -> TemperatureField:
    """Solve the steady temperature field for total powers (p_up, p_down) in W.

    Conduction acts everywhere, upwinded advection in the fluid only, and
    the rise is pinned to zero at r = ambient_radius and both channel ends.
    Raises SolverError when the relative residual stays above ``rtol`` or
    when the energy balance (injected power vs boundary conduction plus
    enthalpy outflow) misses by more than 1e-6 relative.
    """
    if not allow_negative_power and (p_up < 0.0 or p_down < 0.0):
        raise ValueError("heater powers must be nonnegative (superposition mode is flagged)")
    op = _operator if _operator is not None else _Operator(mesh, mats, q_flow, profile)

    src = _source_vector(mesh, p_up, p_down)
    sol = op.solve(src)

    norm_b = float(np.linalg.norm(src))
    residuals = []
    if norm_b == 0.0:
        sol = np.zeros_like(sol)
        res = 0.0
    else:
        scale = max(norm_b, POWER_SCALE_FLOOR)
        res = float(np.linalg.norm(op.matrix @ sol - src)) / scale
        residuals.append(res)
        if res > rtol:  # one step of iterative refinement, then give up
            sol = sol + op.solve(src - op.matrix @ sol)
            res = float(np.linalg.norm(op.matrix @ sol - src)) / scale
            residuals.append(res)
            if res > rtol:
                raise SolverError(
                    f"steady solve did not reach relative residual {rtol:g}", residuals
                )

    temp = sol.reshape(mesh.n_r, mesh.n_z)
    p_in_chan = (p_up + p_down) / mesh.geom.channel_count
    bal = _energy_residual(op, temp, p_in_chan)
    if bal > ENERGY_RTOL:
        raise SolverError(f"energy balance off by {bal:g} relative", residuals)

    return TemperatureField(
        mesh=mesh,
        rise=temp,
        q_flow=q_flow,
        p_up=p_up,
        p_down=p_down,
        solver_residual=res,
        energy_residual=bal,
    )


def delta_t_thermopile(field: TemperatureField, geom: SensorGeometry = None) -> float:
    """Thermopile temperature difference: downstream minus upstream junction.

    Junction readings are mean wall-surface rises over the junction bands.
    """
    mesh = field.mesh
    if geom is not None and geom != mesh.geom:
        raise ValueError("field was solved on a mesh with different geometry")
    surface = field.rise[mesh.surface_ring, :]
    return float(surface[mesh.tc_down_z].mean() - surface[mesh.tc_up_z].mean())


def axial_profile(field: TemperatureField):
    """Wall-surface rise along the channel, (z, rise) with Dirichlet endpoints.

    Returns one sample per axial cell plus the two zero-rise end anchors.
    """
    mesh = field.mesh
    z = np.concatenate([[0.0], mesh.z_centers, [mesh.geom.cavity_length]])
    rise = np.concatenate([[0.0], field.surface_rise(), [0.0]])
    return z, rise


class SensorModel:
    """Mesh + materials bundle that caches one factorization per flow rate.

    Solves are pure functions of (Q, P1, P2) and may run concurrently on
    one instance; the operator cache is guarded by a lock.
    """

    def __init__(
        self,
        geom: SensorGeometry = None,
        mats: MaterialSet = None,
        grid: GridSpec = None,
        profile: str = "plug",
        max_cached_operators: int = 64,
    ):
        self.geom = geom if geom is not None else SensorGeometry()
        self.mats = mats if mats is not None else MaterialSet()
        self.grid = grid if grid is not None else GridSpec()
        self.profile = profile
        self.mesh = build_mesh(self.geom, self.grid)
        self._max_cached = max_cached_operators
        self._operators: dict[float, _Operator] = {}
        self._cache_lock = threading.Lock()

    def _operator(self, q_flow: float) -> _Operator:
        with self._cache_lock:
            op = self._operators.get(q_flow)
            if op is None:
                if len(self._operators) >= self._max_cached:
                    self._operators.pop(next(iter(self._operators)))
                op = _Operator(self.mesh, self.mats, q_flow, self.profile)
                self._operators[q_flow] = op
        return op

    def solve(self, q_flow, p_up, p_down, allow_negative_power=False) -> TemperatureField:
        return solve_steady(
            self.mesh,
            self.mats,
            q_flow,
            p_up,
            p_down,
            profile=self.profile,
            allow_negative_power=allow_negative_power,
            _operator=self._operator(q_flow),
        )

    def unit_fields(self, q_flow):
        """Fields for unit power on each heater alone (superposition basis)."""
        return self.solve(q_flow, 1.0, 0.0), self.solve(q_flow, 0.0, 1.0)
