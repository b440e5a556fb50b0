"""Curve datasets: synthetic latency-task generation and file round-trips.

The synthetic task mimics delayed functional responses: a smooth random
amplitude curve drives the target, a step curve marks where the amplitude
is active, and the input channels observe the amplitude shifted by an
unknown latency, passed through channel-specific linear filters and white
noise.  Multi-channel inputs are concatenated into a single curve over a
stacked grid whose quadrature weights integrate each channel segment
separately.

Datasets are stored as line-oriented text: a small header (size, label
flag and both grids) followed by one ``input=``/``target=`` (and optional
``label=``) record per sample.  Floats are rendered with 17 significant
digits, so a write/read round-trip reproduces values bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError
from .funcspace import Curve, CurveVec, Grid

__all__ = [
    "CurveDataset",
    "SynthSpec",
    "generate_synthetic",
    "save_dataset",
    "load_dataset",
    "stacked_channel_grid",
    "load_feature_csv",
]

FORMAT_TAG = "movkl-dataset v1"
CHANNEL_GAP = 0.25


@dataclass
class CurveDataset:
    """Paired input and target curves, with optional step-label targets."""

    inputs: CurveVec
    targets: CurveVec
    labels: CurveVec | None = None

    def __post_init__(self):
        if self.inputs.n != self.targets.n:
            raise DimensionError(
                f"{self.inputs.n} inputs paired with {self.targets.n} targets"
            )
        if self.labels is not None:
            if self.labels.n != self.targets.n:
                raise DimensionError("label count does not match target count")
            if self.labels.grid != self.targets.grid:
                raise DimensionError("labels must live on the output grid")
            vals = self.labels.values
            if np.any(np.minimum(np.abs(vals), np.abs(vals - 1.0)) > 1e-9):
                raise DataError("label curves must be {0, 1}-valued")

    @property
    def n(self) -> int:
        return self.inputs.n

    @property
    def input_grid(self) -> Grid:
        return self.inputs.grid

    @property
    def output_grid(self) -> Grid:
        return self.targets.grid


@dataclass
class SynthSpec:
    """Parameters of the synthetic delayed-response task."""

    n_samples: int
    grid_size: int
    latency: int = 0
    channel_count: int = 1
    noise_std: float = 0.0
    seed: int = 0
    random_filters: bool = True

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("need at least one sample")
        if self.grid_size < 2:
            raise ValueError("grid size must be at least 2")
        if not 0 <= self.latency < self.grid_size:
            raise ValueError("latency must lie in [0, grid_size)")
        if self.channel_count < 1:
            raise ValueError("need at least one channel")
        if self.noise_std < 0:
            raise ValueError("noise std must be nonnegative")


def stacked_channel_grid(grid_size: int, channels: int) -> Grid:
    """Concatenated copies of the unit grid, one segment per channel.

    Segments are separated by a gap that carries no quadrature weight, so
    inner products integrate each channel independently.
    """
    base = Grid.uniform(0.0, 1.0, grid_size)
    offsets = np.arange(channels) * (1.0 + CHANNEL_GAP)
    points = np.concatenate([base.points + off for off in offsets])
    weights = np.tile(base.weights, channels)
    return Grid(points, weights)


def generate_synthetic(spec: SynthSpec) -> CurveDataset:
    """Deterministic synthetic dataset for the latency task.

    Each amplitude curve is a rectified sum of a handful of random
    sinusoids: four slow components plus three faster detail components,
    all well below the grid Nyquist rate.  Targets equal the amplitude and
    labels flag samples above a tenth of the curve's peak.  Each input
    channel observes the amplitude ``latency`` grid steps earlier through
    a channel-specific linear filter (a moving-average smoother composed
    with mean removal and a random gain) plus white observation noise, so
    the fine structure of a curve is only partially recoverable from its
    channels.  With ``random_filters`` off the channels pass the delayed
    amplitude through unchanged.
    """
    rng = np.random.default_rng(spec.seed)
    m = spec.grid_size
    out_grid = Grid.uniform(0.0, 1.0, m)
    t = out_grid.points
    step = 1.0 / (m - 1)
    shift = spec.latency * step

    gains = rng.uniform(2.5, 5.0, spec.channel_count)
    halfwidths = rng.integers(10, 21, spec.channel_count)
    halfwidths = np.minimum(halfwidths, (m - 1) // 2)

    targets = np.empty((spec.n_samples, m))
    labels = np.empty((spec.n_samples, m))
    inputs = np.empty((spec.n_samples, spec.channel_count * m))
    for i in range(spec.n_samples):
        freqs = np.concatenate([rng.uniform(0.3, 2.2, 4),
                                rng.uniform(4.0, 10.0, 3)])
        amps = np.concatenate([rng.uniform(0.3, 0.9, 4),
                               rng.uniform(0.2, 0.5, 3)])
        phases = rng.uniform(0.0, 2.0 * np.pi, 7)

        def amplitude(u):
            waves = amps[:, None] * np.sin(
                2.0 * np.pi * freqs[:, None] * u[None, :] + phases[:, None]
            )
            return np.maximum(waves.sum(axis=0), 0.0)

        targets[i] = amplitude(t)
        peak = targets[i].max()
        labels[i] = (targets[i] > 0.1 * peak).astype(float) if peak > 0 else 0.0
        delayed = amplitude(t - shift)
        for c in range(spec.channel_count):
            if spec.random_filters:
                filtered = _boxcar(delayed, int(halfwidths[c]))
                filtered = gains[c] * (filtered - filtered.mean())
            else:
                filtered = delayed
            noise = rng.normal(0.0, spec.noise_std, m) if spec.noise_std > 0 else 0.0
            inputs[i, c * m:(c + 1) * m] = filtered + noise

    in_grid = stacked_channel_grid(m, spec.channel_count)
    return CurveDataset(
        inputs=CurveVec(in_grid, inputs),
        targets=CurveVec(out_grid, targets),
        labels=CurveVec(out_grid, labels),
    )


def _boxcar(values: np.ndarray, halfwidth: int) -> np.ndarray:
    if halfwidth <= 0:
        return values.copy()
    kernel = np.ones(2 * halfwidth + 1) / (2 * halfwidth + 1)
    padded = np.pad(values, halfwidth, mode="edge")
    return np.convolve(padded, kernel, mode="valid")


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def _fmt(values) -> str:
    return ",".join(format(float(v), ".17g") for v in values)


def save_dataset(path, ds: CurveDataset) -> None:
    """Write the line-oriented text format (17 significant digits)."""
    lines = [
        FORMAT_TAG,
        f"n={ds.n}",
        f"has_labels={int(ds.labels is not None)}",
        "input_grid_points=" + _fmt(ds.input_grid.points),
        "input_grid_weights=" + _fmt(ds.input_grid.weights),
        "output_grid_points=" + _fmt(ds.output_grid.points),
        "output_grid_weights=" + _fmt(ds.output_grid.weights),
    ]
    for i in range(ds.n):
        lines.append("input=" + _fmt(ds.inputs.values[i]))
        lines.append("target=" + _fmt(ds.targets.values[i]))
        if ds.labels is not None:
            lines.append("label=" + _fmt(ds.labels.values[i]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, path):
        with open(path, "r", encoding="utf-8") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0
        self.path = path

    def next_field(self, key: str) -> str:
        if self.pos >= len(self.lines):
            raise DataError(f"{self.path}: unexpected end of file, wanted '{key}='")
        line = self.lines[self.pos]
        self.pos += 1
        prefix = key + "="
        if not line.startswith(prefix):
            raise DataError(
                f"{self.path}:{self.pos}: expected '{key}=...', got {line[:40]!r}"
            )
        return line[len(prefix):]

    def floats(self, key: str) -> np.ndarray:
        raw = self.next_field(key)
        try:
            values = np.array([float(v) for v in raw.split(",")]) if raw else np.array([])
        except ValueError as exc:
            raise DataError(f"{self.path}:{self.pos}: bad number in '{key}': {exc}")
        if values.size and not np.all(np.isfinite(values)):
            raise DataError(
                f"{self.path}:{self.pos}: non-finite value in '{key}'"
            )
        return values


def load_dataset(path) -> CurveDataset:
    """Read and fully validate the text format written by save_dataset."""
    r = _Reader(path)
    if r.pos >= len(r.lines) or r.lines[0] != FORMAT_TAG:
        raise DataError(f"{path}: not a '{FORMAT_TAG}' file")
    r.pos = 1
    try:
        n = int(r.next_field("n"))
        has_labels = int(r.next_field("has_labels"))
    except ValueError as exc:
        raise DataError(f"{path}: bad header: {exc}")
    if n < 1:
        raise DataError(f"{path}: dataset is empty")
    if has_labels not in (0, 1):
        raise DataError(f"{path}: has_labels must be 0 or 1")
    try:
        in_grid = Grid(r.floats("input_grid_points"), r.floats("input_grid_weights"))
        out_grid = Grid(r.floats("output_grid_points"), r.floats("output_grid_weights"))
    except ValueError as exc:
        raise DataError(f"{path}: bad grid: {exc}")

    inputs = np.empty((n, in_grid.size))
    targets = np.empty((n, out_grid.size))
    labels = np.empty((n, out_grid.size)) if has_labels else None
    for i in range(n):
        inputs[i] = _record(r, "input", in_grid.size, i)
        targets[i] = _record(r, "target", out_grid.size, i)
        if has_labels:
            labels[i] = _record(r, "label", out_grid.size, i)
    if r.pos != len(r.lines):
        raise DataError(f"{path}:{r.pos + 1}: trailing content after {n} records")
    return CurveDataset(
        inputs=CurveVec(in_grid, inputs),
        targets=CurveVec(out_grid, targets),
        labels=None if labels is None else CurveVec(out_grid, labels),
    )


def _record(r: _Reader, key: str, size: int, index: int) -> np.ndarray:
    values = r.floats(key)
    if values.size != size:
        raise DataError(
            f"{r.path}:{r.pos}: record {index}: '{key}' has {values.size} "
            f"values, expected {size}"
        )
    return values


def load_feature_csv(path, channels: int, input_len: int, output_len: int,
                     has_labels: bool = False) -> CurveDataset:
    """Import pre-extracted feature curves from a plain CSV file.

    Expected row layout (one row per segment, comma separated):
    ``channels * input_len`` input feature values (channel blocks
    concatenated in channel order), then ``output_len`` target amplitude
    values, then, when ``has_labels`` is set, ``output_len`` binary
    movement labels.  Channel segments and targets are placed on unit
    grids, matching the synthetic generator's layout.  Band-pass filtering
    and feature extraction from raw recordings happen upstream; this
    reader only ingests already-extracted curves.
    """
    expected = channels * input_len + output_len * (2 if has_labels else 1)
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = np.array([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad number: {exc}")
            if row.size != expected:
                raise DataError(
                    f"{path}:{lineno}: row has {row.size} values, expected {expected}"
                )
            if not np.all(np.isfinite(row)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.stack(rows)
    in_len = channels * input_len
    in_grid = stacked_channel_grid(input_len, channels)
    out_grid = Grid.uniform(0.0, 1.0, output_len)
    labels = None
    if has_labels:
        labels = CurveVec(out_grid, table[:, in_len + output_len:])
    return CurveDataset(
        inputs=CurveVec(in_grid, table[:, :in_len]),
        targets=CurveVec(out_grid, table[:, in_len:in_len + output_len]),
        labels=labels,
    )
