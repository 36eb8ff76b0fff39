"""Synthetic spatial regression: Gaussian-bump bases on a candidate lattice.

A smooth field is built by convolving a discrete latent process at grid
centers with an isotropic Gaussian kernel, so choosing grid points is a
feature-selection problem: each candidate feature is one bump evaluated at
the sensor locations, at one of several widths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

# Fixed sources for the default synthetic field, relative to the domain box:
# (center_x, center_y, width, amplitude).
FIELD_SOURCES = (
    (0.25, 0.30, 0.15, 1.0),
    (0.70, 0.70, 0.20, -0.8),
    (0.80, 0.20, 0.12, 0.6),
)


@dataclass(frozen=True)
class SpatialConfig:
    """Domain, candidate lattice, bump scales, and observation setup."""

    domain: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (1.0, 1.0))
    grid_shape: tuple[int, int] = (12, 12)
    scales: tuple[float, ...] | None = None  # None -> diagonal * (1/4, 1/8, 1/16)
    sensors: np.ndarray | None = None  # explicit coordinates, else sampled
    n_sensors: int = 100
    noise_sd: float = 0.1
    train_frac: float = 0.7

    def __post_init__(self):
        (x0, y0), (x1, y1) = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ValueError("domain box must have positive extent")
        if self.grid_shape[0] < 1 or self.grid_shape[1] < 1:
            raise ValueError("grid_shape entries must be positive")
        if self.scales is not None and any(s <= 0 for s in self.scales):
            raise ValueError("bump scales must be strictly positive")
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError("train_frac must lie in (0, 1)")
        if self.noise_sd < 0.0:
            raise ValueError("noise_sd must be nonnegative")

    @property
    def diagonal(self) -> float:
        (x0, y0), (x1, y1) = self.domain
        return float(np.hypot(x1 - x0, y1 - y0))

    def resolved_scales(self) -> tuple[float, ...]:
        if self.scales is not None:
            return tuple(self.scales)
        diag = self.diagonal
        return (diag / 4.0, diag / 8.0, diag / 16.0)


def lattice_centers(config: SpatialConfig) -> np.ndarray:
    """Regular lattice of candidate centers, cell midpoints of the grid."""
    (x0, y0), (x1, y1) = config.domain
    nx, ny = config.grid_shape
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def bump_design(
    config: SpatialConfig, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate every candidate bump at the given points.

    Returns (design, centers, widths): design is n_points x M with one column
    per (center, scale) pair; centers and widths give each feature's center
    coordinates and bandwidth.
    """
    points = np.asarray(points, dtype=float)
    base = lattice_centers(config)
    designs = []
    centers = []
    widths = []
    for scale in config.resolved_scales():
        sq = ((points[:, None, :] - base[None, :, :]) ** 2).sum(axis=2)
        designs.append(np.exp(-sq / (2.0 * scale**2)))
        centers.append(base)
        widths.append(np.full(base.shape[0], scale))
    return (
        np.concatenate(designs, axis=1),
        np.concatenate(centers, axis=0),
        np.concatenate(widths),
    )


def synthetic_field(points: np.ndarray, config: SpatialConfig) -> np.ndarray:
    """Default smooth target: a fixed mixture of Gaussian sources."""
    points = np.asarray(points, dtype=float)
    (x0, y0), (x1, y1) = config.domain
    span = np.array([x1 - x0, y1 - y0])
    origin = np.array([x0, y0])
    diag = config.diagonal
    values = np.zeros(points.shape[0])
    for cx, cy, width, amplitude in FIELD_SOURCES:
        center = origin + span * np.array([cx, cy])
        sq = ((points - center) ** 2).sum(axis=1)
        values += amplitude * np.exp(-sq / (2.0 * (width * diag) ** 2))
    return values


def sample_sensors(config: SpatialConfig, rng: np.random.Generator) -> np.ndarray:
    """Sensor coordinates: explicit from the config, else uniform in the box."""
    if config.sensors is not None:
        sensors = np.asarray(config.sensors, dtype=float)
        if sensors.ndim != 2 or sensors.shape[1] != 2:
            raise ValueError("sensors must be an (n, 2) coordinate array")
    else:
        (x0, y0), (x1, y1) = config.domain
        sensors = np.column_stack(
            [
                rng.uniform(x0, x1, config.n_sensors),
                rng.uniform(y0, y1, config.n_sensors),
            ]
        )
    if sensors.shape[0] < 20:
        raise ValueError("spatial demo requires at least 20 sensors")
    if np.ptp(sensors, axis=0).max() <= 0.0:
        raise DataError("all sensors are collocated; the design is degenerate")
    return sensors
