"""Neutral-atom layouts and their Ising coefficients.

Rydberg atoms at positions r_i (micrometers) interact through a van der Waals
tail V_ij = C6 / |r_i - r_j|^6.  In the Pauli basis this contributes

    J_ij = C6 / (4 |r_i - r_j|^6)
    h_i  = -sum_{j != i} J_ij + delta / 2

with delta the final detuning of the global drive; all energies are in rad/us.
Because the fields inherit a coupling-dependent bias that global control
cannot remove per qubit, the detuning is conventionally set from the realized
couplings so the bias cancels on average; both readings of "average" are
implemented (see delta_rule).

Distances are computed as sqrt(dx*dx + dy*dy) and sixth powers as three exact
squarings, so scaling all positions by a power of two rescales every coupling
exactly by the corresponding power of 64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import InputInstance, TermId, Topology, canonical_index

# van der Waals coefficient, rad/us * um^6
C6_DEFAULT = 862690.0 * 2.0 * np.pi

DELTA_MODES = ("literal", "per-qubit-cancel")


@dataclass(frozen=True)
class AtomLayout:
    """2-D atom positions in micrometers, optionally within a plane."""

    positions: np.ndarray  # (n, 2)
    bounds: tuple[float, float] | None = None  # plane (width, height), origin at 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError(f"positions must have shape (n, 2), got {pos.shape}")
        if self.bounds is not None:
            w, h = self.bounds
            if np.any(pos[:, 0] < 0) or np.any(pos[:, 0] > w) or np.any(pos[:, 1] < 0) or np.any(pos[:, 1] > h):
                raise ValueError("positions fall outside the plane bounds")
        pos = np.array(pos, copy=True)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of programmable values in dimensionless device units."""

    lo: float = -0.05
    hi: float = 0.05
    step: float = 0.01

    def __post_init__(self):
        if self.step <= 0 or self.hi <= self.lo:
            raise ValueError("need step > 0 and hi > lo")
        ratio = (self.hi - self.lo) / self.step
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("(hi - lo) must be an integer multiple of step")

    def levels(self) -> np.ndarray:
        count = int(round((self.hi - self.lo) / self.step)) + 1
        return np.linspace(self.lo, self.hi, count)


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(entropy))))


def pair_distance(positions: np.ndarray, i: int, j: int) -> float:
    dx = positions[i, 0] - positions[j, 0]
    dy = positions[i, 1] - positions[j, 1]
    return float(np.sqrt(dx * dx + dy * dy))


def coupling_from_distance(r: float, c6: float = C6_DEFAULT) -> float:
    """J = C6 / (4 r^6); sixth power as three squarings for exact 2x scaling."""
    if r <= 0:
        raise ValueError("distance must be positive")
    r2 = r * r
    return c6 / (4.0 * (r2 * r2 * r2))


def distance_from_coupling(j: float, c6: float = C6_DEFAULT) -> float:
    """Inverse of coupling_from_distance."""
    if j <= 0:
        raise ValueError("coupling must be positive")
    return float((c6 / (4.0 * j)) ** (1.0 / 6.0))


def atoms_to_ising(
    layout: AtomLayout, delta: float, c6: float = C6_DEFAULT
) -> tuple[dict[tuple[int, int], float], np.ndarray]:
    """Couplings over all atom pairs and the per-atom fields, in rad/us."""
    if not np.isfinite(delta):
        raise ValueError("delta must be finite")
    n = layout.n
    couplings: dict[tuple[int, int], float] = {}
    fields = np.full(n, delta / 2.0)
    for i in range(n):
        for j in range(i + 1, n):
            r = pair_distance(layout.positions, i, j)
            if r == 0.0:
                raise ValueError(f"atoms {i} and {j} are coincident")
            val = coupling_from_distance(r, c6)
            couplings[(i, j)] = val
            fields[i] -= val
            fields[j] -= val
    return couplings, fields


def delta_rule(layout: AtomLayout, mode: str = "literal", c6: float = C6_DEFAULT) -> float:
    """Final detuning from the realized couplings.

    ``literal``          delta = 2 * mean over pairs of J_ij
    ``per-qubit-cancel`` delta = 2 * mean over atoms of sum_j J_ij, which makes
                         the fields vanish on average (exactly, on symmetric
                         layouts).
    """
    if layout.n < 2:
        raise ValueError("need at least two atoms")
    couplings, _ = atoms_to_ising(layout, delta=0.0, c6=c6)
    values = np.array(list(couplings.values()))
    if mode == "literal":
        return float(2.0 * values.mean())
    if mode == "per-qubit-cancel":
        row_sums = np.zeros(layout.n)
        for (i, j), val in couplings.items():
            row_sums[i] += val
            row_sums[j] += val
        return float(2.0 * row_sums.mean())
    raise ValueError(f"unknown delta mode {mode!r}; choose from {DELTA_MODES}")


def random_square_layout(
    seed: int,
    side: float = 10.6,
    max_shift: float = 4.8,
    shift_step: float = 0.3,
    inward: bool = True,
) -> AtomLayout:
    """Four atoms on a square, each shifted along its diagonal.

    Every atom moves toward (or away from, with ``inward=False``) the square's
    center by a shift drawn uniformly from {0, shift_step, ..., max_shift};
    the grid matches the position precision the hardware accepts.
    """
    corners = np.array([[0.0, 0.0], [side, 0.0], [0.0, side], [side, side]])
    center = np.array([side / 2.0, side / 2.0])
    if max_shift == 0.0:
        shifts = np.zeros(4)
    else:
        levels = int(round(max_shift / shift_step))
        if abs(levels * shift_step - max_shift) > 1e-9:
            raise ValueError("max_shift must be an integer multiple of shift_step")
        shifts = _rng(seed).integers(0, levels + 1, size=4) * shift_step
    direction = 1.0 if inward else -1.0
    positions = []
    for corner, shift in zip(corners, shifts):
        unit = (center - corner) / np.sqrt(np.sum((center - corner) ** 2))
        positions.append(corner + direction * shift * unit)
    return AtomLayout(np.array(positions))


@dataclass(frozen=True)
class TilingReport:
    n_tiles: int
    max_cross_coupling: float
    threshold: float
    flagged: bool


def tile_layout(
    layout: AtomLayout,
    bounds: tuple[float, float],
    corners: int = 4,
    threshold: float = 1e-4,
    c6: float = C6_DEFAULT,
) -> tuple[AtomLayout, TilingReport]:
    """Copy a small layout to the corners of the computing plane.

    Tiling multiplies the shots harvested per run; copies must stay far enough
    apart that cross-tile couplings are negligible.  The report carries the
    maximum coupling between atoms of different tiles and flags it when it
    exceeds ``threshold`` (rad/us).
    """
    if corners not in (1, 2, 4):
        raise ValueError("corner count must be 1, 2 or 4")
    width, height = bounds
    pos = layout.positions
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    span = hi - lo
    if span[0] > width or span[1] > height:
        raise ValueError("tile does not fit within the plane bounds")
    anchors = [
        (0.0 - lo[0], 0.0 - lo[1]),  # bottom-left
        (width - hi[0], height - hi[1]),  # top-right
        (width - hi[0], 0.0 - lo[1]),  # bottom-right
        (0.0 - lo[0], height - hi[1]),  # top-left
    ][:corners]
    tiles = [pos + np.array(shift) for shift in anchors]
    for a in range(len(tiles)):
        for b in range(a + 1, len(tiles)):
            alo, ahi = tiles[a].min(axis=0), tiles[a].max(axis=0)
            blo, bhi = tiles[b].min(axis=0), tiles[b].max(axis=0)
            if np.all(ahi >= blo) and np.all(bhi >= alo):
                raise ValueError("tiles overlap; plane too small for this layout")
    all_pos = np.concatenate(tiles, axis=0)
    max_cross = 0.0
    m = layout.n
    for a in range(len(tiles)):
        for b in range(a + 1, len(tiles)):
            for i in range(m):
                for j in range(m):
                    r = float(
                        np.sqrt(np.sum((tiles[a][i] - tiles[b][j]) ** 2))
                    )
                    max_cross = max(max_cross, coupling_from_distance(r, c6))
    report = TilingReport(len(tiles), max_cross, threshold, max_cross > threshold)
    return AtomLayout(all_pos, bounds=bounds), report


def layout_instance(
    layout: AtomLayout,
    delta: float | None = None,
    delta_mode: str = "literal",
    c6: float = C6_DEFAULT,
) -> InputInstance:
    """Programmed input equivalent to a layout: complete graph, rad/us units.

    When ``delta`` is omitted it is derived from the couplings via delta_rule.
    """
    if delta is None:
        delta = delta_rule(layout, mode=delta_mode, c6=c6)
    couplings, fields = atoms_to_ising(layout, delta, c6=c6)
    topology = Topology.complete(layout.n)
    index = canonical_index(topology)
    theta = np.zeros(topology.D)
    for (i, j), val in couplings.items():
        theta[index[TermId.pair(i, j)]] = val
    for i in range(layout.n):
        theta[index[TermId.single(i)]] = fields[i]
    return InputInstance(topology, theta)


def normalize_by_max_coupling(instance: InputInstance) -> InputInstance:
    """Rescale theta so the largest |coupling| is 1 (device units).

    Unit normalization is always an explicit step; nothing in this package
    rescales implicitly.
    """
    n_edges = len(instance.topology.edges)
    if n_edges == 0:
        raise ValueError("instance has no couplings to normalize by")
    scale = float(np.max(np.abs(instance.theta[:n_edges])))
    if scale == 0.0:
        raise ValueError("all couplings are zero")
    return InputInstance(instance.topology, instance.theta / scale)


def random_grid_instance(topology: Topology, grid: GridSpec | None = None, seed: int = 0) -> InputInstance:
    """Every coupling and field drawn i.i.d. uniformly from the grid levels."""
    grid = grid or GridSpec()
    levels = grid.levels()
    idx = _rng(seed).integers(0, levels.size, size=topology.D)
    return InputInstance(topology, levels[idx])


def random_grid_instances(
    topology: Topology, count: int, grid: GridSpec | None = None, seed: int = 0
) -> list[InputInstance]:
    """Independent random instances with per-instance derived seeds."""
    grid = grid or GridSpec()
    levels = grid.levels()
    out = []
    for k in range(count):
        idx = _rng(seed, k).integers(0, levels.size, size=topology.D)
        out.append(InputInstance(topology, levels[idx]))
    return out


def random_uniform_instances(
    topology: Topology, count: int, lo: float = -0.05, hi: float = 0.05, seed: int = 0
) -> list[InputInstance]:
    """Continuous-uniform instances; generic position for identifiability."""
    out = []
    for k in range(count):
        theta = _rng(seed, k).uniform(lo, hi, size=topology.D)
        out.append(InputInstance(topology, theta))
    return out
