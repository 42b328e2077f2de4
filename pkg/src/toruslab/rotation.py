"""Asymptotic directions, rotation numbers, and fiber direction maps.

A geodesic on the universal cover that escapes to infinity has an asymptotic
direction delta(c) = lim c(t)/|c(t)| on the circle; its projection to the
projective line is the rotation number rho = tan(theta), with the vertical
direction mapped to infinity. At finite horizon T the direction is estimated
from the tail of a sampled trajectory; the estimator quality (Cauchy spread
over dyadic tail windows) and the width of the Euclidean strip containing
the orbit are reported alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotEscaping
from .flow import Trajectory, integrate, unit_phase_point
from .metric import MetricSpec
from .parallel import tmap

ESCAPE_NORM = 10.0


@dataclass(frozen=True)
class ProjectiveDirection:
    """Direction modulo sign: an angle theta in [0, pi).

    theta == pi/2 represents the vertical direction (rho = infinity).
    Constructing from a finite slope caches it so the round trip
    slope -> theta -> slope is exact.
    """

    theta: float
    _rho: float | None = None

    @staticmethod
    def from_angle(theta: float) -> "ProjectiveDirection":
        th = math.fmod(theta, math.pi)
        if th < 0.0:
            th += math.pi
        return ProjectiveDirection(th)

    @staticmethod
    def from_slope(rho: float) -> "ProjectiveDirection":
        if math.isinf(rho):
            return ProjectiveDirection(math.pi / 2.0, math.inf)
        th = math.atan(rho)
        if th < 0.0:
            th += math.pi
        return ProjectiveDirection(th, rho)

    @staticmethod
    def from_vector(x: float, y: float) -> "ProjectiveDirection":
        if x == 0.0:
            return ProjectiveDirection(math.pi / 2.0, math.inf)
        return ProjectiveDirection.from_angle(math.atan2(y, x))

    @property
    def rho(self) -> float:
        if self._rho is not None:
            return self._rho
        if self.theta == math.pi / 2.0:
            return math.inf
        return math.tan(self.theta)

    def angle_to(self, other: "ProjectiveDirection") -> float:
        """Projective angular distance in [0, pi/2]."""
        d = abs(self.theta - other.theta) % math.pi
        return min(d, math.pi - d)


@dataclass
class DirectionEstimate:
    """Finite-horizon estimate of the asymptotic direction of a geodesic."""

    direction: np.ndarray
    projective: ProjectiveDirection
    cauchy_error: float
    strip_half_width: float

    @property
    def angle(self) -> float:
        return math.atan2(self.direction[1], self.direction[0])


@dataclass
class FiberMapSample:
    """Sampled lift of the fiber direction map at a base point.

    ``angles`` are the fiber angles (strictly increasing in [0, 2 pi)),
    ``lifted`` the continuously unwrapped direction estimates. The
    monotonicity defect is the most negative increment clamped at zero; the
    degree defect compares the wrap-around increment against 2 pi.
    """

    base_point: tuple[float, float]
    angles: np.ndarray
    lifted: np.ndarray
    monotonicity_defect: float
    degree_defect: float


def asymptotic_direction(tr: Trajectory, tail_fraction: float = 0.25) -> DirectionEstimate:
    """Estimate delta(c) from the trailing part of a sampled trajectory.

    The direction is the mean of the normalized tail positions; the Cauchy
    error is the largest angular spread over dyadic tail windows; the strip
    half width is the largest distance of any sample from the line through
    c(0) with the estimated direction.
    """
    if tr.degraded:
        raise ValueError("refusing direction estimate on a degraded trajectory")
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError(f"tail_fraction must be in (0, 1], got {tail_fraction}")
    pos = tr.positions - tr.positions[0]
    norms = np.hypot(pos[:, 0], pos[:, 1])
    if norms[-1] <= ESCAPE_NORM:
        raise NotEscaping(
            f"|c(T)| = {norms[-1]:.3g} <= {ESCAPE_NORM}; horizon too short or "
            "orbit not escaping"
        )

    n = len(tr.t)
    tail_start = int(n * (1.0 - tail_fraction))
    tail_start = min(max(tail_start, 1), n - 2)
    units = pos[tail_start:] / norms[tail_start:, None]
    mean = units.sum(axis=0)
    mean /= np.hypot(mean[0], mean[1])

    # Angular spread over dyadic tail windows [T(1 - 2^-k), T].
    cauchy = 0.0
    for k in range(1, 6):
        start = int(n * (1.0 - 0.5**k))
        start = min(max(start, 1), n - 2)
        w = pos[start:] / norms[start:, None]
        wm = w.sum(axis=0)
        wm /= np.hypot(wm[0], wm[1])
        cosang = np.clip(w @ wm, -1.0, 1.0)
        spread = float(np.max(np.arccos(cosang)))
        cauchy = max(cauchy, spread)

    # Distance from each sample to the line through c(0) with the estimate.
    cross = np.abs(pos[:, 0] * mean[1] - pos[:, 1] * mean[0])
    return DirectionEstimate(
        direction=mean,
        projective=ProjectiveDirection.from_vector(mean[0], mean[1]),
        cauchy_error=cauchy,
        strip_half_width=float(cross.max()),
    )


def rotation_number(d: DirectionEstimate) -> ProjectiveDirection:
    """Project the oriented direction estimate to the projective line."""
    return d.projective


def direction_angle_series(m, x, y, angles, T, rtol=1e-10, atol=1e-12):
    """Oriented direction-estimate angles for several initial fiber angles.

    Shared helper for fiber-map sampling and the foliation module; sampling
    along each trajectory is kept sparse because only the tail matters.
    """
    sample_step = max(T / 512.0, 0.05)

    def one(a):
        p = unit_phase_point(m, x, y, a)
        tr = integrate(m, p, T, rtol=rtol, atol=atol, sample_step=sample_step)
        try:
            est = asymptotic_direction(tr)
        except NotEscaping as exc:
            raise NotEscaping(str(exc), fiber_angle=a) from exc
        return est.angle

    return np.array(tmap(one, angles))


def sample_fiber_map(
    m: MetricSpec,
    x: tuple[float, float],
    n: int = 64,
    T: float = 1000.0,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> FiberMapSample:
    """Sample the fiber direction map at ``x`` over n equispaced angles.

    Returns the continuously unwrapped lift together with its monotonicity
    and degree defects. NotEscaping carries the offending fiber angle.
    """
    if n < 16:
        raise ValueError(f"need at least 16 fiber angles, got {n}")
    angles = np.arange(n) * (2.0 * math.pi / n)
    raw = direction_angle_series(m, x[0], x[1], angles, T, rtol=rtol, atol=atol)
    # Close the circle with the first angle again to estimate the degree.
    closed = np.concatenate([raw, raw[:1]])
    lifted = np.unwrap(closed)
    increments = np.diff(lifted[:-1])
    mono = float(min(0.0, increments.min())) if len(increments) else 0.0
    degree = float(abs(lifted[-1] - lifted[0] - 2.0 * math.pi))
    return FiberMapSample(
        base_point=(float(x[0]), float(x[1])),
        angles=angles,
        lifted=lifted[:-1],
        monotonicity_defect=mono,
        degree_defect=degree,
    )


def fiber_map_to_csv(sample: FiberMapSample, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("fiber_angle,lifted_direction\n")
        for a, d in zip(sample.angles, sample.lifted):
            fh.write(f"{a:.17g},{d:.17g}\n")
