"""Geodesic flow on the universal cover.

Trajectories live on R^2 with unit-speed velocities (the unit tangent
bundle); lifted coordinates are never wrapped here. Negative time is reached
by integrating the reversed vector (x, y, -vx, -vy) and flipping, which is
exactly the geodesic traversed in the opposite direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NotLiouville, ToleranceFailure
from .metric import MetricSpec, conformal_factor, conformal_factor_grid

UNIT_SPEED_TOL = 1e-9


@dataclass(frozen=True)
class PhasePoint:
    """Point of the unit tangent bundle over the universal cover."""

    x: float
    y: float
    vx: float
    vy: float

    def reversed(self) -> "PhasePoint":
        return PhasePoint(self.x, self.y, -self.vx, -self.vy)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])


def unit_phase_point(m: MetricSpec, x: float, y: float, angle: float) -> PhasePoint:
    """Unit-speed phase point with Euclidean direction ``angle``.

    For a conformal metric the fiber frame (e1, e2)/sqrt(lam) is orthonormal,
    so the fiber-circle parameter coincides with the Euclidean angle of the
    velocity.
    """
    lam, _, _ = conformal_factor(m, x, y)
    s = 1.0 / math.sqrt(lam)
    return PhasePoint(x, y, s * math.cos(angle), s * math.sin(angle))


def speed_error(m: MetricSpec, p: PhasePoint) -> float:
    lam, _, _ = conformal_factor(m, p.x, p.y)
    return abs(lam * (p.vx * p.vx + p.vy * p.vy) - 1.0)


@dataclass
class Trajectory:
    """Time-sampled lifted geodesic with quality diagnostics.

    ``states`` has one (x, y, vx, vy) row per entry of ``t``; times are
    strictly increasing and span [0, T] or [-T, T]. ``energy_drift`` is the
    worst unit-speed violation seen before per-step renormalization;
    ``first_integral_drift`` is populated for Liouville metrics only.
    """

    metric_id: str
    t: np.ndarray
    states: np.ndarray
    energy_drift: float
    first_integral_drift: float | None
    stats: dict = field(default_factory=dict)
    degraded: bool = False

    @property
    def x(self):
        return self.states[:, 0]

    @property
    def y(self):
        return self.states[:, 1]

    @property
    def vx(self):
        return self.states[:, 2]

    @property
    def vy(self):
        return self.states[:, 3]

    @property
    def positions(self):
        return self.states[:, :2]

    def phase_point(self, i: int) -> PhasePoint:
        return PhasePoint(*self.states[i])

    def slice(self, t0: float, t1: float) -> "Trajectory":
        """Sub-trajectory restricted to sample times in [t0, t1]."""
        mask = (self.t >= t0 - 1e-12) & (self.t <= t1 + 1e-12)
        return Trajectory(
            metric_id=self.metric_id,
            t=self.t[mask],
            states=self.states[mask],
            energy_drift=self.energy_drift,
            first_integral_drift=self.first_integral_drift,
            stats=self.stats,
            degraded=self.degraded,
        )


def geodesic_rhs(m: MetricSpec, p: PhasePoint):
    """Phase velocity (xdot, ydot, vxdot, vydot) of the geodesic equation."""
    args = m.kernel_args()
    return _kernels.rhs(*args, p.x, p.y, p.vx, p.vy)


def first_integral(m: MetricSpec, p: PhasePoint) -> float:
    """Classical Liouville first integral F = lam (g vx^2 - f vy^2)."""
    if not m.is_liouville:
        raise NotLiouville(f"first integral defined for liouville metrics, got {m.variant}")
    lam = float(m.f(p.x) + m.g(p.y))
    return lam * (float(m.g(p.y)) * p.vx**2 - float(m.f(p.x)) * p.vy**2)


def first_integral_samples(m: MetricSpec, tr: Trajectory) -> np.ndarray:
    if not m.is_liouville:
        raise NotLiouville(f"first integral defined for liouville metrics, got {m.variant}")
    fx = m.f(tr.x)
    gy = m.g(tr.y)
    return (fx + gy) * (gy * tr.vx**2 - fx * tr.vy**2)


def integrate(
    m: MetricSpec,
    p0: PhasePoint,
    T: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    sample_step: float = 0.05,
    h_max: float = 0.25,
    degraded_tol: float = 1e-6,
) -> Trajectory:
    """Integrate the unit-speed geodesic from ``p0`` over [0, T].

    The adaptive stepper lands exactly on each sample time. Velocity is
    projected back to unit speed after every accepted step; the projection
    magnitude is reported in the trajectory stats and the pre-projection
    deviation in ``energy_drift``. Raises ToleranceFailure on step-size
    underflow.
    """
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    err = speed_error(m, p0)
    if err > UNIT_SPEED_TOL:
        raise ValueError(f"initial point violates unit speed by {err:.3e}")

    n = max(2, int(math.ceil(T / sample_step)) + 1)
    ts = np.linspace(0.0, T, n)
    out = np.empty((n, 4))
    args = m.kernel_args()
    drift, renorm, n_steps, n_rej, h_min, status = _kernels.integrate_core(
        *args, p0.as_array(), ts, rtol, atol, h_max, out
    )
    if status == _kernels.STATUS_STEP_UNDERFLOW:
        raise ToleranceFailure(
            f"step size underflow at t ~ {ts[0]:.3g}..{T:.3g} (h_min {h_min:.3e})"
        )
    tr = Trajectory(
        metric_id=m.metric_id,
        t=ts,
        states=out,
        energy_drift=float(drift),
        first_integral_drift=None,
        stats={
            "n_steps": int(n_steps),
            "n_rejected": int(n_rej),
            "h_min": float(h_min),
            "renorm_max": float(renorm),
            "rtol": rtol,
            "atol": atol,
        },
        degraded=bool(drift > degraded_tol),
    )
    if m.is_liouville:
        F = first_integral_samples(m, tr)
        tr.first_integral_drift = float(np.max(np.abs(F - F[0])))
    return tr


def integrate_symmetric(
    m: MetricSpec,
    p0: PhasePoint,
    T: float,
    **kwargs,
) -> Trajectory:
    """Integrate over the symmetric window [-T, T] through ``p0``.

    The backward half is the forward integration of the reversed vector,
    flipped in time and velocity.
    """
    fwd = integrate(m, p0, T, **kwargs)
    bwd = integrate(m, p0.reversed(), T, **kwargs)
    t = np.concatenate([-bwd.t[::-1], fwd.t[1:]])
    back_states = bwd.states[::-1].copy()
    back_states[:, 2:] *= -1.0
    states = np.concatenate([back_states, fwd.states[1:]], axis=0)
    drift = max(fwd.energy_drift, bwd.energy_drift)
    fdrift = None
    if fwd.first_integral_drift is not None:
        fdrift = max(fwd.first_integral_drift, bwd.first_integral_drift)
    stats = dict(fwd.stats)
    stats["n_steps"] += bwd.stats["n_steps"]
    stats["n_rejected"] += bwd.stats["n_rejected"]
    stats["h_min"] = min(fwd.stats["h_min"], bwd.stats["h_min"])
    stats["renorm_max"] = max(fwd.stats["renorm_max"], bwd.stats["renorm_max"])
    return Trajectory(
        metric_id=m.metric_id,
        t=t,
        states=states,
        energy_drift=drift,
        first_integral_drift=fdrift,
        stats=stats,
        degraded=fwd.degraded or bwd.degraded,
    )


def trajectory_to_csv(tr: Trajectory, path) -> None:
    """Write the trajectory as CSV with 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,x,y,vx,vy\n")
        for i in range(len(tr.t)):
            row = (tr.t[i], *tr.states[i])
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
