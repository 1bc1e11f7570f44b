"""Sample containers, residuals, and feature standardization for 3D RSRP maps.

A dataset is an ordered collection of map points.  Every sample carries a
position in local metric coordinates and the simulated RSRP at that position;
the measured RSRP is optional because sparse surveys leave most points
unmeasured.  Interpolation features are either the bare position (3-D) or the
position extended with the simulated RSRP (4-D).  Because meters and dB live
on different scales, all interpolators in this package operate on z-scored
features produced by :class:`FeatureScaler`.
"""

from __future__ import annotations

import io
import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

CSV_HEADER = ("x", "y", "z", "rsrp_sim", "rsrp_meas")


class CsvParseError(ValueError):
    """Malformed dataset CSV; ``line`` is the 1-based offending line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class FeatureMode(Enum):
    """Input features handed to interpolators."""

    POSITION_ONLY = "pos"          # 3-D, schemes fit raw RSRP
    POSITION_PLUS_SIM = "pos+sim"  # 4-D, schemes fit the residual

    @classmethod
    def parse(cls, text: str) -> "FeatureMode":
        for mode in cls:
            if text == mode.value:
                return mode
        raise ValueError(f"unknown feature mode {text!r}; expected 'pos' or 'pos+sim'")

    @property
    def n_dims(self) -> int:
        return 3 if self is FeatureMode.POSITION_ONLY else 4

    @property
    def tag(self) -> str:
        """Filesystem/column safe name."""
        return self.value.replace("+", "_")


@dataclass(frozen=True)
class Sample:
    """One map point: position (m), simulated RSRP (dB), optional measured RSRP (dB)."""

    position: tuple[float, float, float]
    gamma_sim: float
    gamma_meas: float | None = None

    def __post_init__(self):
        # normalize numpy scalars so repr/round-trips stay plain-float
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "gamma_sim", float(self.gamma_sim))
        if self.gamma_meas is not None:
            object.__setattr__(self, "gamma_meas", float(self.gamma_meas))
        if len(self.position) != 3:
            raise ValueError(f"position must have 3 coordinates: {self.position}")
        values = (*self.position, self.gamma_sim)
        if self.gamma_meas is not None:
            values = (*values, self.gamma_meas)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite sample: {self}")

    @property
    def residual(self) -> float | None:
        """Measured minus simulated RSRP, or None when unmeasured."""
        if self.gamma_meas is None:
            return None
        return self.gamma_meas - self.gamma_sim


class Dataset:
    """Ordered, immutable collection of samples with a feature mode."""

    def __init__(self, samples, feature_mode: FeatureMode = FeatureMode.POSITION_PLUS_SIM):
        self.samples = tuple(samples)
        if not self.samples:
            raise ValueError("dataset must contain at least one sample")
        self.feature_mode = feature_mode
        self._positions = np.array([s.position for s in self.samples], dtype=float)
        self._gamma_sim = np.array([s.gamma_sim for s in self.samples], dtype=float)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def positions(self) -> np.ndarray:
        """(N, 3) positions in meters."""
        return self._positions

    @property
    def gamma_sim(self) -> np.ndarray:
        """(N,) simulated RSRP in dB."""
        return self._gamma_sim

    @property
    def measured_mask(self) -> np.ndarray:
        return np.array([s.gamma_meas is not None for s in self.samples])

    @property
    def fully_measured(self) -> bool:
        return bool(self.measured_mask.all())

    def gamma_meas(self) -> np.ndarray:
        """(N,) measured RSRP in dB; raises if any sample is unmeasured."""
        missing = np.flatnonzero(~self.measured_mask)
        if missing.size:
            raise ValueError(f"sample {missing[0]} has no measured RSRP")
        return np.array([s.gamma_meas for s in self.samples], dtype=float)

    def features(self, mode: FeatureMode | None = None) -> np.ndarray:
        """(N, 3) or (N, 4) feature matrix depending on the feature mode."""
        mode = self.feature_mode if mode is None else mode
        if mode is FeatureMode.POSITION_ONLY:
            return self._positions.copy()
        return np.column_stack([self._positions, self._gamma_sim])


def compute_residuals(dataset: Dataset) -> np.ndarray:
    """Per-sample measured-minus-simulated RSRP in dB, in dataset order."""
    return dataset.gamma_meas() - dataset.gamma_sim


def load_dataset(csv_text: str, feature_mode: FeatureMode = FeatureMode.POSITION_PLUS_SIM) -> Dataset:
    """Parse dataset CSV text (header ``x,y,z,rsrp_sim,rsrp_meas``).

    The measured column may be empty per row.  Raises :class:`CsvParseError`
    naming the offending 1-based line on malformed input.
    """
    reader = csv.reader(io.StringIO(csv_text))
    rows = list(reader)
    if not rows:
        raise CsvParseError(1, "empty input, expected header x,y,z,rsrp_sim,rsrp_meas")
    header = tuple(f.strip() for f in rows[0])
    if header != CSV_HEADER:
        raise CsvParseError(1, f"bad header {','.join(header)!r}, expected {','.join(CSV_HEADER)!r}")

    samples = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not f.strip() for f in row):
            continue  # blank line
        fields = [f.strip() for f in row]
        if len(fields) < 4:
            raise CsvParseError(lineno, f"expected at least 4 values, got {len(fields)}")
        if len(fields) > 5:
            raise CsvParseError(lineno, f"expected at most 5 values, got {len(fields)}")
        try:
            x, y, z, sim = (float(fields[i]) for i in range(4))
        except ValueError:
            raise CsvParseError(lineno, f"non-numeric field in {','.join(fields)!r}") from None
        meas = None
        if len(fields) == 5 and fields[4]:
            try:
                meas = float(fields[4])
            except ValueError:
                raise CsvParseError(lineno, f"non-numeric rsrp_meas {fields[4]!r}") from None
        try:
            samples.append(Sample((x, y, z), sim, meas))
        except ValueError as exc:
            raise CsvParseError(lineno, str(exc)) from None
    if not samples:
        raise CsvParseError(1, "no data rows")
    return Dataset(samples, feature_mode)


def dataset_to_csv(dataset: Dataset) -> str:
    """Serialize with round-trip exact float text (shortest repr)."""
    lines = [",".join(CSV_HEADER)]
    for s in dataset.samples:
        meas = "" if s.gamma_meas is None else repr(s.gamma_meas)
        lines.append(f"{s.position[0]!r},{s.position[1]!r},{s.position[2]!r},{s.gamma_sim!r},{meas}")
    return "\n".join(lines) + "\n"


def load_dataset_file(path, feature_mode: FeatureMode = FeatureMode.POSITION_PLUS_SIM) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return load_dataset(fh.read(), feature_mode)


def save_dataset_file(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset_to_csv(dataset))


@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension z-scoring fitted on the full candidate set.

    Degenerate dimensions (zero spread) keep std 1 so the transform stays
    invertible.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("need a nonempty (N, d) feature matrix")
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        std = np.where(std > 0.0, std, 1.0)
        return cls(mean=mean, std=std)

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != self.mean.shape[0]:
            raise ValueError(
                f"feature dimension {features.shape[-1]} != scaler dimension {self.mean.shape[0]}"
            )
        return (features - self.mean) / self.std

    def inverse_transform(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=float) * self.std + self.mean


def fit_scaler(dataset: Dataset, mode: FeatureMode | None = None) -> FeatureScaler:
    """Fit a z-score scaler on the dataset's feature matrix."""
    return FeatureScaler.fit(dataset.features(mode))
