"""Conformal metric families on the unit torus T^2 = R^2/Z^2.

All supported metrics are conformal, lambda(x, y) * (dx^2 + dy^2), with the
conformal factor built from finite Fourier data:

* ``flat``       lambda = 1
* ``liouville``  lambda = f(x) + g(y) with f, g positive trigonometric
  polynomials (the classical integrable family)
* ``conformal``  lambda = exp(2 u(x, y)) with u a 2D trigonometric polynomial

Coordinates are global Euclidean coordinates on the universal cover R^2; the
deck group is exactly the integer translations. Every evaluation routine
returns exact term-wise derivatives of the Fourier series, never finite
differences.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedSpec, PositivityViolation

TWO_PI = 2.0 * math.pi

VARIANT_CODES = {"flat": 0, "liouville": 1, "conformal": 2}


@dataclass(frozen=True)
class TrigPoly:
    """Real 1-periodic trigonometric polynomial.

    p(s) = mean + sum_k ( a_k cos(2 pi k s) + b_k sin(2 pi k s) )

    ``harmonics`` is a tuple of (k, a_k, b_k) with distinct integer k >= 1.
    """

    mean: float
    harmonics: tuple[tuple[int, float, float], ...] = ()

    def __post_init__(self):
        seen = set()
        for k, a, b in self.harmonics:
            if int(k) != k or k < 1:
                raise MalformedSpec(f"harmonic frequency must be integer >= 1, got {k}")
            if k in seen:
                raise MalformedSpec(f"duplicate harmonic frequency {k}")
            seen.add(k)
            float(a), float(b)

    def lower_bound(self) -> float:
        """Sufficient lower bound: mean - sum_k sqrt(a_k^2 + b_k^2)."""
        return self.mean - sum(math.hypot(a, b) for _, a, b in self.harmonics)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full_like(s, self.mean)
        for k, a, b in self.harmonics:
            w = TWO_PI * k
            out = out + a * np.cos(w * s) + b * np.sin(w * s)
        return out

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for k, a, b in self.harmonics:
            w = TWO_PI * k
            out = out + w * (-a * np.sin(w * s) + b * np.cos(w * s))
        return out

    def packed(self) -> np.ndarray:
        """(n, 3) float array of (k, a, b) rows for the integrator kernels."""
        if not self.harmonics:
            return np.zeros((0, 3))
        return np.array([[float(k), a, b] for k, a, b in self.harmonics])


@dataclass(frozen=True)
class TrigPoly2D:
    """Real 1-periodic trigonometric polynomial on the torus.

    u(x, y) = mean + sum ( a cos(2 pi (k x + l y)) + b sin(2 pi (k x + l y)) )

    ``harmonics`` is a tuple of (k, l, a, b) with distinct integer pairs
    (k, l) != (0, 0); realness is built in by the explicit cos/sin basis.
    """

    mean: float
    harmonics: tuple[tuple[int, int, float, float], ...] = ()

    def __post_init__(self):
        seen = set()
        for k, l, a, b in self.harmonics:
            if int(k) != k or int(l) != l:
                raise MalformedSpec(f"frequency pair must be integers, got ({k}, {l})")
            if (k, l) == (0, 0):
                raise MalformedSpec("frequency pair (0, 0) belongs in 'mean'")
            if (k, l) in seen:
                raise MalformedSpec(f"duplicate frequency pair ({k}, {l})")
            seen.add((k, l))

    def amplitude_sum(self) -> float:
        return sum(math.hypot(a, b) for _, _, a, b in self.harmonics)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.full(np.broadcast(x, y).shape, self.mean)
        for k, l, a, b in self.harmonics:
            ph = TWO_PI * (k * x + l * y)
            out = out + a * np.cos(ph) + b * np.sin(ph)
        return out

    def packed(self) -> np.ndarray:
        """(n, 4) float array of (k, l, a, b) rows."""
        if not self.harmonics:
            return np.zeros((0, 4))
        return np.array([[float(k), float(l), a, b] for k, l, a, b in self.harmonics])


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """Certified conformal metric on the torus. Immutable after construction.

    Build through :func:`build_metric`; direct construction skips the
    positivity certificate.
    """

    variant: str
    f: TrigPoly | None = None
    g: TrigPoly | None = None
    u: TrigPoly2D | None = None
    min_lambda: float = 1.0
    metric_id: str = ""

    @property
    def variant_code(self) -> int:
        return VARIANT_CODES[self.variant]

    @property
    def is_liouville(self) -> bool:
        return self.variant == "liouville"

    def kernel_args(self):
        """Packed scalars/arrays consumed by the numba flow kernels."""
        f0 = self.f.mean if self.f is not None else 0.0
        fh = self.f.packed() if self.f is not None else np.zeros((0, 3))
        g0 = self.g.mean if self.g is not None else 0.0
        gh = self.g.packed() if self.g is not None else np.zeros((0, 3))
        u0 = self.u.mean if self.u is not None else 0.0
        uh = self.u.packed() if self.u is not None else np.zeros((0, 4))
        return self.variant_code, f0, fh, g0, gh, u0, uh

    def to_dict(self) -> dict:
        d = {"variant": self.variant}
        if self.f is not None:
            d["f"] = _trigpoly_to_dict(self.f)
        if self.g is not None:
            d["g"] = _trigpoly_to_dict(self.g)
        if self.u is not None:
            d["u"] = _trigpoly2d_to_dict(self.u)
        return d


def _trigpoly_to_dict(p: TrigPoly) -> dict:
    return {
        "mean": p.mean,
        "harmonics": [{"k": k, "cos": a, "sin": b} for k, a, b in p.harmonics],
    }


def _trigpoly2d_to_dict(p: TrigPoly2D) -> dict:
    return {
        "mean": p.mean,
        "harmonics": [
            {"k": k, "l": l, "cos": a, "sin": b} for k, l, a, b in p.harmonics
        ],
    }


def _trigpoly_from_dict(d, name) -> TrigPoly:
    if not isinstance(d, dict) or "mean" not in d:
        raise MalformedSpec(f"'{name}' must be an object with a 'mean' field")
    try:
        harm = tuple(
            (int(h["k"]), float(h.get("cos", 0.0)), float(h.get("sin", 0.0)))
            for h in d.get("harmonics", [])
        )
        return TrigPoly(mean=float(d["mean"]), harmonics=harm)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedSpec(f"bad harmonic entry in '{name}': {exc}") from exc


def _trigpoly2d_from_dict(d, name) -> TrigPoly2D:
    if not isinstance(d, dict):
        raise MalformedSpec(f"'{name}' must be an object")
    try:
        harm = tuple(
            (
                int(h["k"]),
                int(h["l"]),
                float(h.get("cos", 0.0)),
                float(h.get("sin", 0.0)),
            )
            for h in d.get("harmonics", [])
        )
        return TrigPoly2D(mean=float(d.get("mean", 0.0)), harmonics=harm)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedSpec(f"bad harmonic entry in '{name}': {exc}") from exc


def _sampled_min_lambda(m: MetricSpec, n: int = 64) -> float:
    s = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(s, s, indexing="ij")
    lam, _, _ = conformal_factor_grid(m, X, Y)
    return float(lam.min())


def build_metric(raw) -> MetricSpec:
    """Construct a certified MetricSpec from a parsed JSON-style dict.

    The positivity certificate is the sufficient coefficient bound
    (mean minus total harmonic amplitude); specs failing it are rejected
    with the worst sampled conformal factor attached, even if the factor is
    actually positive everywhere.
    """
    if isinstance(raw, MetricSpec):
        return raw
    if not isinstance(raw, dict):
        raise MalformedSpec(f"metric spec must be a dict, got {type(raw).__name__}")
    variant = raw.get("variant")
    if variant not in VARIANT_CODES:
        raise MalformedSpec(
            f"variant must be one of {sorted(VARIANT_CODES)}, got {variant!r}"
        )

    f = g = u = None
    if variant == "flat":
        min_lambda = 1.0
    elif variant == "liouville":
        if "f" not in raw or "g" not in raw:
            raise MalformedSpec("liouville spec requires 'f' and 'g'")
        f = _trigpoly_from_dict(raw["f"], "f")
        g = _trigpoly_from_dict(raw["g"], "g")
        min_lambda = f.lower_bound() + g.lower_bound()
    else:
        if "u" not in raw:
            raise MalformedSpec("conformal spec requires 'u'")
        u = _trigpoly2d_from_dict(raw["u"], "u")
        min_lambda = math.exp(2.0 * (u.mean - u.amplitude_sum()))

    canon = json.dumps(
        MetricSpec(variant=variant, f=f, g=g, u=u).to_dict(), sort_keys=True
    )
    metric_id = hashlib.sha256(canon.encode()).hexdigest()[:12]
    m = MetricSpec(
        variant=variant, f=f, g=g, u=u, min_lambda=min_lambda, metric_id=metric_id
    )

    if min_lambda <= 0.0:
        worst = _sampled_min_lambda(m)
        raise PositivityViolation(
            f"positivity certificate failed: coefficient bound {min_lambda:.6g} <= 0 "
            f"(worst sampled lambda {worst:.6g})",
            worst_lambda=worst,
        )
    return m


def load_metric(path) -> MetricSpec:
    """Read a metric spec JSON file and certify it."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedSpec(f"invalid JSON in {path}: {exc}") from exc
    return build_metric(raw)


def conformal_factor(m: MetricSpec, x: float, y: float):
    """Pointwise conformal factor and its exact first derivatives.

    Returns (lambda, d lambda/dx, d lambda/dy).
    """
    lam, lx, ly = conformal_factor_grid(m, np.float64(x), np.float64(y))
    return float(lam), float(lx), float(ly)


def conformal_factor_grid(m: MetricSpec, x, y):
    """Vectorized conformal factor; broadcasts over numpy inputs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    if m.variant == "flat":
        return np.ones(shape), np.zeros(shape), np.zeros(shape)
    if m.variant == "liouville":
        lam = m.f(x) + m.g(y) + np.zeros(shape)
        lx = m.f.deriv(x) + np.zeros(shape)
        ly = m.g.deriv(y) + np.zeros(shape)
        return lam, lx, ly
    # conformal: lambda = exp(2u)
    u = np.zeros(shape) + m.u.mean
    ux = np.zeros(shape)
    uy = np.zeros(shape)
    for k, l, a, b in m.u.harmonics:
        ph = TWO_PI * (k * x + l * y)
        c, s = np.cos(ph), np.sin(ph)
        u = u + a * c + b * s
        dc = TWO_PI * (-a * s + b * c)
        ux = ux + k * dc
        uy = uy + l * dc
    lam = np.exp(2.0 * u)
    return lam, 2.0 * ux * lam, 2.0 * uy * lam


def conformal_factor_hessian(m: MetricSpec, x, y):
    """lambda together with exact first and second derivatives.

    Returns (lam, lx, ly, lxx, lxy, lyy); used by the variational machinery.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    if m.variant == "flat":
        z = np.zeros(shape)
        return np.ones(shape), z, z.copy(), z.copy(), z.copy(), z.copy()
    if m.variant == "liouville":
        lam = m.f(x) + m.g(y) + np.zeros(shape)
        lx = m.f.deriv(x) + np.zeros(shape)
        ly = m.g.deriv(y) + np.zeros(shape)
        lxx = np.zeros(shape)
        lyy = np.zeros(shape)
        for k, a, b in m.f.harmonics:
            w = TWO_PI * k
            lxx = lxx - w * w * (a * np.cos(w * x) + b * np.sin(w * x))
        for k, a, b in m.g.harmonics:
            w = TWO_PI * k
            lyy = lyy - w * w * (a * np.cos(w * y) + b * np.sin(w * y))
        return lam, lx, ly, lxx, np.zeros(shape), lyy
    u = np.zeros(shape) + m.u.mean
    ux = np.zeros(shape)
    uy = np.zeros(shape)
    uxx = np.zeros(shape)
    uxy = np.zeros(shape)
    uyy = np.zeros(shape)
    for k, l, a, b in m.u.harmonics:
        ph = TWO_PI * (k * x + l * y)
        c, s = np.cos(ph), np.sin(ph)
        u = u + a * c + b * s
        d1 = TWO_PI * (-a * s + b * c)
        d2 = -TWO_PI * TWO_PI * (a * c + b * s)
        ux = ux + k * d1
        uy = uy + l * d1
        uxx = uxx + k * k * d2
        uxy = uxy + k * l * d2
        uyy = uyy + l * l * d2
    lam = np.exp(2.0 * u)
    lx = 2.0 * ux * lam
    ly = 2.0 * uy * lam
    lxx = (2.0 * uxx + 4.0 * ux * ux) * lam
    lxy = (2.0 * uxy + 4.0 * ux * uy) * lam
    lyy = (2.0 * uyy + 4.0 * uy * uy) * lam
    return lam, lx, ly, lxx, lxy, lyy


def christoffel(m: MetricSpec, x: float, y: float):
    """Christoffel symbols of a conformal metric at (x, y).

    Returns the four independent symbols (G111, G112, G211, G212):

        G111 = lx / (2 lam)    G112 = ly / (2 lam)
        G211 = -G112           G212 = G111

    The remaining symbols follow from conformal symmetry:
    G122 = -G111 and G222 = G112.
    """
    lam, lx, ly = conformal_factor(m, x, y)
    a = lx / (2.0 * lam)
    b = ly / (2.0 * lam)
    return a, b, -b, a
