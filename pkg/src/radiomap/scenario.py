"""Synthetic urban propagation scenarios.

Stands in for a drive/flight survey plus a ray-tracing run: a box-building
city with one rooftop transmitter, a deterministic log-distance prediction
field (the "simulated" RSRP), and a ground-truth field that adds a constant
bias, a spatially correlated slow-fading field, and white measurement noise
on top of it.  The measured-minus-simulated residual therefore decomposes
exactly into bias + fading + noise, which is the structure the estimation
schemes assume.

Everything is frozen at generation time and fully determined by
(config, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataset import Dataset, FeatureMode, Sample

MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class Building:
    """Axis-aligned box from ground level up to ``height``."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float
    height: float

    def __post_init__(self):
        if not (self.min_x < self.max_x and self.min_y < self.max_y and self.height > 0):
            raise ValueError(f"degenerate building {self}")

    def contains_interior(self, p) -> bool:
        """Strictly inside the footprint and below the roof (face points on
        the footprint boundary or at roof height stay flyable)."""
        x, y, z = p
        return (self.min_x < x < self.max_x
                and self.min_y < y < self.max_y
                and 0.0 <= z < self.height)

    def overlaps_footprint(self, other: "Building") -> bool:
        return (self.min_x < other.max_x and other.min_x < self.max_x
                and self.min_y < other.max_y and other.min_y < self.max_y)


@dataclass(frozen=True)
class Transmitter:
    position: tuple[float, float, float]
    power_db: float = 0.0          # reference RSRP at 1 m
    frequency_hz: float = 2.645e9

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValueError("frequency must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs of the synthetic world; defaults mirror a dense campus block."""

    area_length: float = 300.0
    area_width: float = 280.0
    height_min: float = 0.0
    height_max: float = 50.0
    grid_nx: int = 30
    grid_ny: int = 28
    grid_nz: int = 5
    building_count: int = 8
    building_side_min: float = 20.0
    building_side_max: float = 60.0
    building_height_min: float = 6.0
    building_height_max: float = 38.6
    tx_power_db: float = 0.0
    frequency_hz: float = 2.645e9
    path_loss_exponent: float = 2.7
    blockage_loss_db: float = 15.0
    bias_db: float = 3.0
    shadowing_std_db: float = 6.0
    shadowing_corr_length_m: float = 30.0
    noise_std_db: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.area_length <= 0 or self.area_width <= 0:
            raise ValueError("area dimensions must be positive")
        if self.height_max <= self.height_min:
            raise ValueError("height span must be positive")
        if min(self.grid_nx, self.grid_ny, self.grid_nz) < 1:
            raise ValueError("grid resolution must be >= 1 per axis")
        if self.building_count < 0:
            raise ValueError("building_count must be >= 0")
        if not (0 < self.building_side_min <= self.building_side_max):
            raise ValueError("need 0 < building_side_min <= building_side_max")
        if not (0 < self.building_height_min <= self.building_height_max):
            raise ValueError("need 0 < building_height_min <= building_height_max")
        if self.shadowing_std_db < 0 or self.noise_std_db < 0:
            raise ValueError("field standard deviations must be >= 0")
        if self.shadowing_corr_length_m <= 0:
            raise ValueError("correlation length must be positive")
        if self.path_loss_exponent <= 0 or self.frequency_hz <= 0:
            raise ValueError("propagation parameters must be positive")

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls(**json.loads(text))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def path_loss_db(tx, rx, frequency_hz: float, exponent: float) -> float:
    """Log-distance loss anchored at the 1 m free-space value."""
    d = max(float(np.linalg.norm(np.asarray(rx, float) - np.asarray(tx, float))), 0.1)
    fspl_1m = 20.0 * math.log10(frequency_hz) - 147.55
    return fspl_1m + 10.0 * exponent * math.log10(d)


def _segment_hits_box(tx: np.ndarray, rx: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Slab test of segments tx->rx[i] against one box; touching counts.

    rx is (N, 3); returns a boolean (N,) mask.
    """
    direction = rx - tx
    t_enter = np.zeros(rx.shape[0])
    t_exit = np.ones(rx.shape[0])
    alive = np.ones(rx.shape[0], dtype=bool)
    for axis in range(3):
        d = direction[:, axis]
        parallel = d == 0.0
        inside = (lo[axis] <= tx[axis]) & (tx[axis] <= hi[axis])
        alive &= ~parallel | inside
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (lo[axis] - tx[axis]) / d
            t1 = (hi[axis] - tx[axis]) / d
        near = np.minimum(t0, t1)
        far = np.maximum(t0, t1)
        use = ~parallel
        t_enter[use] = np.maximum(t_enter[use], near[use])
        t_exit[use] = np.minimum(t_exit[use], far[use])
    return alive & (t_enter <= t_exit)


def ray_blockage(tx, rx, buildings) -> int:
    """Number of distinct buildings the tx->rx segment intersects."""
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if np.array_equal(tx, rx):
        raise ValueError("tx and rx must differ")
    return int(_blockage_counts(tx, rx.reshape(1, 3), buildings)[0])


def _blockage_counts(tx: np.ndarray, rx: np.ndarray, buildings) -> np.ndarray:
    counts = np.zeros(rx.shape[0], dtype=int)
    for b in buildings:
        lo = np.array([b.min_x, b.min_y, 0.0])
        hi = np.array([b.max_x, b.max_y, b.height])
        counts += _segment_hits_box(tx, rx, lo, hi)
    return counts


@dataclass(frozen=True, eq=False)
class Scenario:
    """A generated world with frozen fields over the candidate grid."""

    config: ScenarioConfig
    seed: int
    buildings: tuple[Building, ...]
    transmitter: Transmitter
    grid_x: np.ndarray
    grid_y: np.ndarray
    grid_z: np.ndarray
    positions: np.ndarray       # (N, 3) candidate points, buildings carved out
    grid_ijk: np.ndarray        # (N, 3) integer grid indices of each candidate
    gamma_sim: np.ndarray       # (N,) deterministic prediction
    fading: np.ndarray          # (N,) correlated slow-fading component
    noise: np.ndarray           # (N,) white measurement noise
    _index: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "_index",
            {tuple(p): i for i, p in enumerate(map(tuple, self.positions))},
        )

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def gamma_meas(self) -> np.ndarray:
        return self.gamma_sim + self.config.bias_db + self.fading + self.noise

    def candidate_index(self, p) -> int:
        key = tuple(float(v) for v in p)
        if key not in self._index:
            raise ValueError(f"position {key} is not on the candidate grid")
        return self._index[key]


def simulated_rsrp(scenario: Scenario, p) -> float:
    return float(scenario.gamma_sim[scenario.candidate_index(p)])


def measured_rsrp(scenario: Scenario, p) -> float:
    return float(scenario.gamma_meas[scenario.candidate_index(p)])


def generate_scenario(config: ScenarioConfig, seed: int | None = None) -> Scenario:
    """Build a deterministic world from (config, seed).

    Buildings are rejection-sampled without footprint overlap; the transmitter
    sits 2 m above a random rooftop (area center at mid-height span when there
    are no buildings).  Grid points strictly inside a building are dropped.
    """
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)

    buildings = _place_buildings(config, rng)

    if buildings:
        b = buildings[int(rng.integers(len(buildings)))]
        tx_pos = (0.5 * (b.min_x + b.max_x), 0.5 * (b.min_y + b.max_y), b.height + 2.0)
    else:
        tx_pos = (0.5 * config.area_length, 0.5 * config.area_width,
                  0.5 * (config.height_min + config.height_max))
    tx = Transmitter(tx_pos, config.tx_power_db, config.frequency_hz)

    grid_x = np.linspace(0.0, config.area_length, config.grid_nx)
    grid_y = np.linspace(0.0, config.area_width, config.grid_ny)
    grid_z = np.linspace(config.height_min, config.height_max, config.grid_nz)
    ii, jj, kk = np.meshgrid(np.arange(config.grid_nx), np.arange(config.grid_ny),
                             np.arange(config.grid_nz), indexing="ij")
    ijk = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])
    points = np.column_stack([grid_x[ijk[:, 0]], grid_y[ijk[:, 1]], grid_z[ijk[:, 2]]])

    keep = np.ones(points.shape[0], dtype=bool)
    for b in buildings:
        inside = ((b.min_x < points[:, 0]) & (points[:, 0] < b.max_x)
                  & (b.min_y < points[:, 1]) & (points[:, 1] < b.max_y)
                  & (points[:, 2] >= 0.0) & (points[:, 2] < b.height))
        keep &= ~inside
    positions = points[keep]
    ijk = ijk[keep]
    if positions.shape[0] < 100:
        raise ValueError(
            f"only {positions.shape[0]} candidate points survive building "
            "exclusion; raise the grid resolution or lower the density"
        )

    # deterministic prediction field
    tx_arr = np.asarray(tx.position)
    dist = np.maximum(np.linalg.norm(positions - tx_arr, axis=1), 0.1)
    fspl_1m = 20.0 * math.log10(config.frequency_hz) - 147.55
    loss = fspl_1m + 10.0 * config.path_loss_exponent * np.log10(dist)
    blocked = _blockage_counts(tx_arr, positions, buildings)
    gamma_sim = config.tx_power_db - loss - config.blockage_loss_db * blocked

    # correlated slow fading: smoothed white noise, re-centered and re-scaled
    # on the full grid so the stored field has mean 0 and std sigma_s
    white = rng.standard_normal((config.grid_nx, config.grid_ny, config.grid_nz))
    if config.shadowing_std_db > 0.0:
        sigmas = []
        for axis_values, n in ((grid_x, config.grid_nx), (grid_y, config.grid_ny),
                               (grid_z, config.grid_nz)):
            spacing = (axis_values[-1] - axis_values[0]) / (n - 1) if n > 1 else None
            sigmas.append(config.shadowing_corr_length_m / spacing if spacing else 0.0)
        smooth = gaussian_filter(white, sigma=sigmas, mode="reflect")
        smooth -= smooth.mean()
        spread = smooth.std()
        if spread <= 0.0:
            raise ValueError("degenerate fading field; grid too small")
        fading_grid = smooth * (config.shadowing_std_db / spread)
    else:
        fading_grid = np.zeros_like(white)
    fading = fading_grid[ijk[:, 0], ijk[:, 1], ijk[:, 2]]

    noise = (rng.standard_normal(positions.shape[0]) * config.noise_std_db
             if config.noise_std_db > 0.0 else np.zeros(positions.shape[0]))

    scenario = Scenario(
        config=config, seed=seed, buildings=tuple(buildings), transmitter=tx,
        grid_x=grid_x, grid_y=grid_y, grid_z=grid_z,
        positions=positions, grid_ijk=ijk,
        gamma_sim=gamma_sim, fading=fading, noise=noise,
    )
    if config.shadowing_std_db > 0.0:
        realized = float(scenario.fading.std())
        if abs(realized - config.shadowing_std_db) > 0.2 * config.shadowing_std_db:
            raise ValueError(
                f"candidate fading std {realized:.2f} strays from the configured "
                f"{config.shadowing_std_db:.2f}; too many points excluded"
            )
    return scenario


def _place_buildings(config: ScenarioConfig, rng: np.random.Generator) -> list[Building]:
    buildings: list[Building] = []
    attempts = 0
    side_lo = min(config.building_side_min, config.area_length, config.area_width)
    while len(buildings) < config.building_count:
        attempts += 1
        if attempts > MAX_PLACEMENT_ATTEMPTS:
            raise ValueError(
                f"could not place {config.building_count} non-overlapping buildings "
                f"in {MAX_PLACEMENT_ATTEMPTS} attempts; lower the count or size"
            )
        sx = rng.uniform(side_lo, min(config.building_side_max, config.area_length))
        sy = rng.uniform(side_lo, min(config.building_side_max, config.area_width))
        x0 = rng.uniform(0.0, config.area_length - sx)
        y0 = rng.uniform(0.0, config.area_width - sy)
        h = rng.uniform(config.building_height_min, config.building_height_max)
        candidate = Building(x0, y0, x0 + sx, y0 + sy, h)
        if any(candidate.overlaps_footprint(b) for b in buildings):
            continue
        buildings.append(candidate)
    return buildings


def generate_dataset(scenario: Scenario,
                     feature_mode: FeatureMode = FeatureMode.POSITION_PLUS_SIM) -> Dataset:
    """One fully measured sample per candidate grid point."""
    meas = scenario.gamma_meas
    samples = [
        Sample(tuple(float(v) for v in scenario.positions[i]),
               float(scenario.gamma_sim[i]), float(meas[i]))
        for i in range(len(scenario))
    ]
    return Dataset(samples, feature_mode)


def buildings_to_csv(buildings) -> str:
    lines = ["minx,miny,maxx,maxy,height"]
    lines += [f"{b.min_x!r},{b.min_y!r},{b.max_x!r},{b.max_y!r},{b.height!r}"
              for b in buildings]
    return "\n".join(lines) + "\n"
