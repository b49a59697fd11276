"""Occupancy-grid world model: generation, inflation, file I/O, collision queries.

The grid discretizes the obstacle region of a rectangular arena. Cells are
booleans (True = occupied) stored row-major with row 0 at the minimum-y edge.
Positions are continuous world coordinates in meters; a position collides if
its containing cell is occupied or if it lies outside the grid extent.
Points exactly on the far edges belong to the last row/column, so a start or
goal placed on the arena boundary is still a valid query point.

Generated maps follow the benchmark layout: random circular obstacles inside
a central base band, inflated by a configurable radius, with free strips at
the bottom and top of the arena for the start and goal states.

Map file format (text)::

    width_cells height_cells resolution_m origin_x origin_y
    <height_cells rows of width_cells characters, '0' free / '1' occupied,
     first row = minimum-y edge>
"""

import dataclasses
from pathlib import Path

import numpy as np
from scipy import ndimage


class MapError(Exception):
    """Raised for malformed map files or infeasible map generation."""


@dataclasses.dataclass(frozen=True)
class OccupancyGrid:
    """Binary occupancy grid. Immutable after construction.

    cells has shape (height_cells, width_cells); cells[0] is the min-y row.
    """

    width_cells: int
    height_cells: int
    resolution: float
    origin: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != (self.height_cells, self.width_cells):
            raise ValueError(
                f"cells shape {cells.shape} != "
                f"({self.height_cells}, {self.width_cells})"
            )
        origin = np.asarray(self.origin, dtype=float).reshape(2)
        cells.setflags(write=False)
        origin.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", origin)

    @property
    def extent(self):
        """Physical size (width_m, height_m)."""
        return (self.width_cells * self.resolution,
                self.height_cells * self.resolution)

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.width_cells == other.width_cells
                and self.height_cells == other.height_cells
                and self.resolution == other.resolution
                and np.array_equal(self.origin, other.origin)
                and np.array_equal(self.cells, other.cells))


@dataclasses.dataclass(frozen=True)
class MapSpec:
    """Parameters for procedural benchmark map generation.

    The base band (where obstacles live) sits between the bottom and top
    free margins and is horizontally centered in the extended arena.
    min_separation is the minimum obstacle center-to-center distance; None
    picks a default that keeps a narrow passage open between any two
    inflated obstacles.
    """

    base_size: tuple = (3.0, 3.0)
    extended_size: tuple = (3.0, 5.0)
    obstacle_count: int = 10
    obstacle_radius: float = 0.15
    inflation_radius: float = 0.15
    free_margins: tuple = (1.0, 1.0)
    rng_seed: int = 0
    resolution: float = 0.1
    min_separation: float | None = None

    def validate(self):
        bw, bh = self.base_size
        ew, eh = self.extended_size
        if ew < bw or eh < bh:
            raise ValueError("extended_size must be >= base_size componentwise")
        if self.obstacle_radius <= 0:
            raise ValueError("obstacle_radius must be positive")
        if self.inflation_radius < 0:
            raise ValueError("inflation_radius must be nonnegative")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.obstacle_count < 0:
            raise ValueError("obstacle_count must be nonnegative")
        bottom, top = self.free_margins
        if bottom < 0 or top < 0:
            raise ValueError("free_margins must be nonnegative")
        if bottom + top > eh:
            raise ValueError("free_margins exceed extended height")


def _cell_centers(grid: OccupancyGrid):
    """World coordinates of all cell centers, shapes (h, w) for x and y."""
    xs = grid.origin[0] + (np.arange(grid.width_cells) + 0.5) * grid.resolution
    ys = grid.origin[1] + (np.arange(grid.height_cells) + 0.5) * grid.resolution
    return np.meshgrid(xs, ys)


def sample_obstacle_centers(spec: MapSpec) -> np.ndarray:
    """Draw obstacle center positions for a map spec, shape (K, 2).

    Rejection-samples centers inside the base band with a minimum pairwise
    separation, keeping inflated discs out of the free margins. Raises
    MapError if placement fails after bounded retries.
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    bw, bh = spec.base_size
    ew, eh = spec.extended_size
    bottom, _ = spec.free_margins
    r_total = spec.obstacle_radius + spec.inflation_radius
    sep = spec.min_separation
    if sep is None:
        sep = 2.0 * r_total + 0.25

    x_lo = (ew - bw) / 2.0
    x_hi = x_lo + bw
    y_lo = bottom + r_total
    y_hi = bottom + bh - r_total
    if y_hi < y_lo and spec.obstacle_count > 0:
        raise MapError("base band too small for obstacle radius")

    for _round in range(20):
        centers = []
        for _ in range(spec.obstacle_count):
            placed = False
            for _attempt in range(200):
                c = rng.uniform([x_lo, y_lo], [x_hi, y_hi])
                if all(np.hypot(*(c - p)) >= sep for p in centers):
                    centers.append(c)
                    placed = True
                    break
            if not placed:
                break
        if len(centers) == spec.obstacle_count:
            return np.array(centers).reshape(len(centers), 2)
    raise MapError(
        f"could not place {spec.obstacle_count} obstacles with "
        f"separation {sep:.2f} m in the base band"
    )


def rasterize_discs(centers: np.ndarray, spec: MapSpec) -> OccupancyGrid:
    """Grid of extended_size whose cells are occupied iff the cell center
    lies within obstacle_radius of some disc center (pre-inflation)."""
    ew, eh = spec.extended_size
    w = int(round(ew / spec.resolution))
    h = int(round(eh / spec.resolution))
    cells = np.zeros((h, w), dtype=bool)
    grid = OccupancyGrid(w, h, spec.resolution, np.zeros(2), cells)
    if len(centers):
        cx, cy = _cell_centers(grid)
        occ = np.zeros((h, w), dtype=bool)
        for c in centers:
            occ |= (cx - c[0]) ** 2 + (cy - c[1]) ** 2 <= spec.obstacle_radius ** 2
        grid = OccupancyGrid(w, h, spec.resolution, np.zeros(2), occ)
    return grid


def generate_map(spec: MapSpec) -> OccupancyGrid:
    """Generate a benchmark map: place obstacles, rasterize, inflate.

    Deterministic for a fixed rng_seed. The free-margin strips contain no
    occupied cells by construction.
    """
    centers = sample_obstacle_centers(spec)
    grid = rasterize_discs(centers, spec)
    return inflate(grid, spec.inflation_radius)


def inflate(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Dilate occupied cells: output cell is occupied iff some input occupied
    cell center lies within radius of its center (Euclidean). radius=0 is the
    identity."""
    if radius < 0:
        raise ValueError("inflation radius must be nonnegative")
    if radius == 0 or not grid.cells.any():
        return grid
    reach = int(np.floor(radius / grid.resolution))
    offs = np.arange(-reach, reach + 1)
    di, dj = np.meshgrid(offs, offs, indexing="ij")
    footprint = (di ** 2 + dj ** 2) * grid.resolution ** 2 <= radius ** 2
    cells = ndimage.binary_dilation(grid.cells, structure=footprint)
    return OccupancyGrid(grid.width_cells, grid.height_cells,
                         grid.resolution, grid.origin, cells)


def position_to_cell(grid: OccupancyGrid, position) -> tuple:
    """(row, col) of the cell containing a 2D position; positions exactly on
    the far edge map to the last row/column."""
    p = np.asarray(position, dtype=float)
    col = int(np.floor((p[0] - grid.origin[0]) / grid.resolution))
    row = int(np.floor((p[1] - grid.origin[1]) / grid.resolution))
    w_m, h_m = grid.extent
    if p[0] - grid.origin[0] == w_m:
        col = grid.width_cells - 1
    if p[1] - grid.origin[1] == h_m:
        row = grid.height_cells - 1
    return row, col


def is_colliding(grid: OccupancyGrid, position) -> bool:
    """True iff the position's cell is occupied or the position lies outside
    the grid extent. For 3D positions only (x, y) are tested; the map is
    treated as vertically stacked."""
    p = np.asarray(position, dtype=float)
    row, col = position_to_cell(grid, p[:2])
    if row < 0 or row >= grid.height_cells or col < 0 or col >= grid.width_cells:
        return True
    return bool(grid.cells[row, col])


def collides_batch(grid: OccupancyGrid, positions: np.ndarray) -> np.ndarray:
    """Vectorized is_colliding over positions of shape (..., d), d >= 2."""
    p = np.asarray(positions, dtype=float)
    x = p[..., 0] - grid.origin[0]
    y = p[..., 1] - grid.origin[1]
    w_m, h_m = grid.extent
    col = np.floor(x / grid.resolution).astype(np.int64)
    row = np.floor(y / grid.resolution).astype(np.int64)
    col = np.where(x == w_m, grid.width_cells - 1, col)
    row = np.where(y == h_m, grid.height_cells - 1, row)
    oob = (row < 0) | (row >= grid.height_cells) | \
          (col < 0) | (col >= grid.width_cells)
    row_c = np.clip(row, 0, grid.height_cells - 1)
    col_c = np.clip(col, 0, grid.width_cells - 1)
    return oob | grid.cells[row_c, col_c]


def save_map(grid: OccupancyGrid, path) -> None:
    """Write a grid in the text map format (row 0 first)."""
    lines = [f"{grid.width_cells} {grid.height_cells} {grid.resolution:.17g} "
             f"{grid.origin[0]:.17g} {grid.origin[1]:.17g}"]
    for row in grid.cells:
        lines.append("".join("1" if c else "0" for c in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_map(path) -> OccupancyGrid:
    """Parse a text map file; raises MapError on malformed input."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MapError(f"{path}: empty map file")
    header = lines[0].split()
    if len(header) != 5:
        raise MapError(f"{path}: header must have 5 fields, got {len(header)}")
    try:
        w, h = int(header[0]), int(header[1])
        resolution = float(header[2])
        origin = np.array([float(header[3]), float(header[4])])
    except ValueError as exc:
        raise MapError(f"{path}: bad header: {exc}") from exc
    if resolution <= 0:
        raise MapError(f"{path}: resolution must be positive")
    if w <= 0 or h <= 0:
        raise MapError(f"{path}: grid dimensions must be positive")
    rows = lines[1:]
    if len(rows) != h:
        raise MapError(f"{path}: expected {h} rows, got {len(rows)}")
    cells = np.zeros((h, w), dtype=bool)
    for i, row in enumerate(rows):
        row = row.strip()
        if len(row) != w:
            raise MapError(f"{path}: row {i} has length {len(row)}, expected {w}")
        bad = set(row) - {"0", "1"}
        if bad:
            raise MapError(f"{path}: row {i} has non-binary symbols {sorted(bad)}")
        cells[i] = np.frombuffer(row.encode(), dtype=np.uint8) == ord("1")
    return OccupancyGrid(w, h, resolution, origin, cells)
