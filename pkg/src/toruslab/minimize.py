"""Discrete curve shortening and minimal-axis machinery.

Curves are polylines on the universal cover; the length functional is the
chord midpoint rule sum_i sqrt(lam(mid_i)) |dv_i|. Shortening follows the
classical alternating scheme: vertices of one parity are relocated to the
local minimum of the two adjacent chords while the other parity stays fixed,
then the parities swap. Same-parity vertex stars are disjoint, so each
half-sweep decreases the total length monotonically and vectorizes cleanly.

Convergence of the slow transversal modes is diffusive in the vertex
spacing, so the driver works coarse-to-fine: converge on a coarse polyline,
split every chord at its midpoint, and continue until the target spacing is
reached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import NoConvergence, Unclassified
from .flow import Trajectory
from .metric import MetricSpec, conformal_factor_grid, conformal_factor_hessian

H_MAX_DEFAULT = 0.25
DAMPINGS = (1.0, 0.5, 0.25, 0.1, 0.02, 0.004)


@dataclass(frozen=True)
class HomotopyClass:
    """Integer translation class (p, q), not both zero.

    No gcd normalization: (2, 0) is a different class from (1, 0);
    ``primitive`` flags gcd == 1.
    """

    p: int
    q: int

    def __post_init__(self):
        if self.p == 0 and self.q == 0:
            raise ValueError("homotopy class must be nonzero")

    @property
    def primitive(self) -> bool:
        return math.gcd(self.p, self.q) == 1

    @property
    def vector(self) -> np.ndarray:
        return np.array([float(self.p), float(self.q)])

    @property
    def norm(self) -> float:
        return math.hypot(self.p, self.q)

    @property
    def normal(self) -> np.ndarray:
        """Unit normal, the direction rotated by -pi/2: (q, -p)/|tau|."""
        return np.array([self.q, -self.p]) / self.norm

    @property
    def offset_spacing(self) -> float:
        """Gap between transversal offsets of lattice translates."""
        return math.gcd(self.p, self.q) / self.norm

    def offset_step_vector(self) -> np.ndarray:
        """Lattice vector shifting the transversal offset by one spacing."""
        g = math.gcd(self.p, self.q)
        p0, q0 = self.p // g, self.q // g
        # Solve q0*mm - p0*nn = 1.
        _, mm, nn = _ext_gcd(q0, -p0)
        return np.array([float(mm), float(nn)])


def _ext_gcd(a: int, b: int):
    if b == 0:
        return abs(a), (1 if a >= 0 else -1), 0
    g, x, y = _ext_gcd(b, a % b)
    return g, y, x - (a // b) * y


@dataclass
class PolyCurve:
    """Polyline curve, either open (fixed endpoints) or closed-with-period.

    Closed curves satisfy vertices[-1] == vertices[0] + (p, q) exactly; the
    final vertex is the translate of the first, so only the first n-1 are
    free.
    """

    vertices: np.ndarray
    kind: str  # "closed" | "open"
    cls: HomotopyClass | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if len(self.vertices) < 8:
            raise ValueError(f"need >= 8 vertices, got {len(self.vertices)}")
        if self.kind == "closed":
            if self.cls is None:
                raise ValueError("closed curve requires a homotopy class")
            if not np.all(self.vertices[-1] == self.vertices[0] + self.cls.vector):
                raise ValueError("closed curve must end exactly at start + (p, q)")
        elif self.kind != "open":
            raise ValueError(f"kind must be 'closed' or 'open', got {self.kind!r}")

    @property
    def max_chord(self) -> float:
        d = np.diff(self.vertices, axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).max())

    def transversal_offset(self) -> float:
        """Mean signed distance from the origin along the class normal."""
        if self.cls is None:
            raise ValueError("offset defined for closed curves only")
        return float(np.mean(self.vertices[:-1] @ self.cls.normal))

    def translated(self, shift) -> "PolyCurve":
        return PolyCurve(self.vertices + np.asarray(shift, float), self.kind, self.cls)


def seed_line(a, b, n: int) -> np.ndarray:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return a * (1.0 - t) + b * t


def refine(c: PolyCurve) -> PolyCurve:
    """Split every chord at its midpoint (length is unchanged)."""
    v = c.vertices
    mids = 0.5 * (v[:-1] + v[1:])
    out = np.empty((2 * len(v) - 1, 2))
    out[0::2] = v
    out[1::2] = mids
    return PolyCurve(out, c.kind, c.cls)


def length(m: MetricSpec, c: PolyCurve) -> float:
    """Metric length of the polyline by the chord midpoint rule."""
    return float(_chord_lengths(m, c.vertices).sum())


def _chord_lengths(m: MetricSpec, verts: np.ndarray) -> np.ndarray:
    mids = 0.5 * (verts[:-1] + verts[1:])
    lam, _, _ = conformal_factor_grid(m, mids[:, 0], mids[:, 1])
    d = np.diff(verts, axis=0)
    return np.sqrt(lam) * np.hypot(d[:, 0], d[:, 1])


def _pair_energy(m: MetricSpec, a, v, b):
    """Vectorized energy of the two chords around each candidate vertex."""
    m1 = 0.5 * (a + v)
    m2 = 0.5 * (v + b)
    lam1, _, _ = conformal_factor_grid(m, m1[:, 0], m1[:, 1])
    lam2, _, _ = conformal_factor_grid(m, m2[:, 0], m2[:, 1])
    d1 = v - a
    d2 = b - v
    return np.sqrt(lam1) * np.hypot(d1[:, 0], d1[:, 1]) + np.sqrt(lam2) * np.hypot(
        d2[:, 0], d2[:, 1]
    )


def _grad_hess(m: MetricSpec, a, v, b):
    """Gradient and Hessian of the two-chord energy at each vertex."""
    g = np.zeros_like(v)
    H = np.zeros((len(v), 2, 2))
    for other, sign in ((a, 1.0), (b, -1.0)):
        mid = 0.5 * (v + other)
        lam, lx, ly, lxx, lxy, lyy = conformal_factor_hessian(
            m, mid[:, 0], mid[:, 1]
        )
        w = np.sqrt(lam)
        gw = np.stack([lx, ly], axis=1) / (2.0 * w[:, None])
        # Hessian of w = sqrt(lam).
        hw = np.empty((len(v), 2, 2))
        hw[:, 0, 0] = lxx / (2 * w) - lx * lx / (4 * lam * w)
        hw[:, 0, 1] = hw[:, 1, 0] = lxy / (2 * w) - lx * ly / (4 * lam * w)
        hw[:, 1, 1] = lyy / (2 * w) - ly * ly / (4 * lam * w)

        d = sign * (v - other)
        L = np.hypot(d[:, 0], d[:, 1])
        u = sign * d / L[:, None]
        g += 0.5 * gw * L[:, None] + w[:, None] * u
        uu = u[:, :, None] * u[:, None, :]
        eye = np.eye(2)[None, :, :]
        H += (
            0.25 * hw * L[:, None, None]
            + 0.5 * (gw[:, :, None] * u[:, None, :] + u[:, :, None] * gw[:, None, :])
            + w[:, None, None] * (eye - uu) / L[:, None, None]
        )
    return g, H


def _relocate(m: MetricSpec, verts, iv, ia, ib, offs_a, offs_b, h_max):
    """Move the vertices ``iv`` toward the local two-chord minimum.

    Damped Newton with a gradient fallback; every accepted move strictly
    decreases its own local energy, and same-parity stars are disjoint, so
    the global length cannot increase.
    """
    v = verts[iv]
    a = verts[ia] + offs_a
    b = verts[ib] + offs_b
    E0 = _pair_energy(m, a, v, b)
    g, H = _grad_hess(m, a, v, b)

    # Modified Newton: shift the spectrum so the 2x2 system is safely
    # positive definite (the tangential mode is flat for collinear chords,
    # and the factor can be indefinite near length saddles).
    h11, h12, h22 = H[:, 0, 0], H[:, 0, 1], H[:, 1, 1]
    mean = 0.5 * (h11 + h22)
    lmin = mean - np.sqrt((0.5 * (h11 - h22)) ** 2 + h12**2)
    shift = np.maximum(0.0, -lmin) + 1e-8 * np.abs(mean) + 1e-300
    h11 = h11 + shift
    h22 = h22 + shift
    det = h11 * h22 - h12 * h12
    step = np.empty_like(v)
    step[:, 0] = (h22 * g[:, 0] - h12 * g[:, 1]) / det
    step[:, 1] = (-h12 * g[:, 0] + h11 * g[:, 1]) / det
    # Bounded local moves keep the homotopy class.
    sn = np.hypot(step[:, 0], step[:, 1])
    clip = np.minimum(1.0, (0.5 * h_max) / np.maximum(sn, 1e-30))
    step *= clip[:, None]

    best = v.copy()
    Ebest = E0.copy()
    improved = np.zeros(len(v), dtype=bool)
    for s in DAMPINGS:
        trial = v - s * step
        Et = _pair_energy(m, a, trial, b)
        take = (~improved) & (Et < E0)
        best[take] = trial[take]
        Ebest[take] = Et[take]
        improved |= take

    # Rebalance along the flat valley of the two-chord minimum: slide toward
    # the local geodesic midpoint. The two-chord energy there never exceeds
    # the current one, so the move is gated on non-increase only; this keeps
    # vertices equidistributed instead of clustering tangentially.
    d1 = best - a
    d2 = b - best
    L1 = np.hypot(d1[:, 0], d1[:, 1])
    L2 = np.hypot(d2[:, 0], d2[:, 1])
    chord = b - a
    cn = np.hypot(chord[:, 0], chord[:, 1])
    that = chord / np.maximum(cn, 1e-30)[:, None]
    delta = 0.25 * (L2 - L1)
    delta = np.clip(delta, -0.45 * cn, 0.45 * cn)
    trial = best + delta[:, None] * that
    Et = _pair_energy(m, a, trial, b)
    take = Et <= Ebest
    best[take] = trial[take]
    verts[iv] = best


def _parity_classes(c: PolyCurve):
    """Index/offset bookkeeping for the two half-sweeps."""
    n = len(c.vertices)
    classes = []
    if c.kind == "open":
        for par in (1, 0):
            iv = np.arange(1 + par, n - 1, 2)
            if len(iv):
                classes.append((iv, iv - 1, iv + 1, 0.0, 0.0))
    else:
        nf = n - 1  # free vertices; last vertex mirrors the first
        tau = c.cls.vector
        for par in (0, 1):
            iv = np.arange(par, nf, 2)
            if not len(iv):
                continue
            ia = (iv - 1) % nf
            ib = (iv + 1) % nf
            offs_a = np.where((iv == 0)[:, None], -tau[None, :], 0.0)
            offs_b = np.where((iv == nf - 1)[:, None], tau[None, :], 0.0)
            classes.append((iv, ia, ib, offs_a, offs_b))
    return classes


@dataclass
class ShortenResult:
    curve: PolyCurve
    converged: bool
    sweeps: int
    length: float
    grad_max: float


def gradient_norm(m: MetricSpec, c: PolyCurve) -> float:
    """Largest local two-chord gradient over the free vertices."""
    worst = 0.0
    for iv, ia, ib, offs_a, offs_b in _parity_classes(c):
        v = c.vertices[iv]
        a = c.vertices[ia] + offs_a
        b = c.vertices[ib] + offs_b
        g, _ = _grad_hess(m, a, v, b)
        worst = max(worst, float(np.hypot(g[:, 0], g[:, 1]).max()))
    return worst


def birkhoff_shorten(
    m: MetricSpec,
    c: PolyCurve,
    max_iters: int = 20000,
    tol: float = 1e-13,
    h_max: float = H_MAX_DEFAULT,
    raise_on_failure: bool = False,
) -> ShortenResult:
    """Shorten a polyline by alternating local chord minimizations.

    Length is non-increasing every sweep; iteration stops when the per-sweep
    decrease falls below ``tol``. On hitting ``max_iters`` the best iterate
    is returned flagged (or NoConvergence is raised when requested).
    """
    work = PolyCurve(c.vertices.copy(), c.kind, c.cls)
    classes = _parity_classes(work)
    verts = work.vertices
    L_prev = length(m, work)
    sweeps = 0
    converged = False
    while sweeps < max_iters:
        for iv, ia, ib, offs_a, offs_b in classes:
            _relocate(m, verts, iv, ia, ib, offs_a, offs_b, h_max)
        if work.kind == "closed":
            verts[-1] = verts[0] + work.cls.vector
        sweeps += 1
        L = length(m, work)
        drop = L_prev - L
        L_prev = L
        if drop < tol:
            converged = True
            break
    if not converged and raise_on_failure:
        raise NoConvergence(f"no convergence after {sweeps} sweeps (last drop {drop:.3e})")
    return ShortenResult(
        curve=work,
        converged=converged,
        sweeps=sweeps,
        length=L_prev,
        grad_max=gradient_norm(m, work),
    )


def shorten_to_scale(
    m: MetricSpec,
    c: PolyCurve,
    h_target: float = 0.01,
    tol: float = 1e-13,
    max_iters: int = 20000,
) -> ShortenResult:
    """Coarse-to-fine shortening until the vertex spacing reaches h_target."""
    res = birkhoff_shorten(m, c, max_iters=max_iters, tol=tol)
    while res.curve.max_chord > h_target:
        res = birkhoff_shorten(m, refine(res.curve), max_iters=max_iters, tol=tol)
    return res


@dataclass
class AxisRecord:
    """Converged closed-with-period geodesic with minimality metadata."""

    curve: PolyCurve
    length: float
    transversal_offset: float
    minimal: bool
    converged: bool = True
    grad_max: float = 0.0


def minimal_axis(
    m: MetricSpec,
    cls: HomotopyClass,
    n_starts: int = 8,
    h_target: float = 0.01,
    dedup_tol: float = 1e-4,
    minimal_rel_tol: float = 1e-6,
    tol: float = 1e-13,
) -> list[AxisRecord]:
    """Shorten transversally offset straight seeds and collect the axes.

    Seeds are straight class-(p, q) lines at ``n_starts`` equispaced
    transversal offsets across one offset period. Converged curves are
    deduplicated modulo lattice translation (Hausdorff distance), marked
    minimal when within ``minimal_rel_tol`` of the shortest, and sorted by
    canonical transversal offset.
    """
    if n_starts < 4:
        raise ValueError(f"need at least 4 starts, got {n_starts}")
    spacing = cls.offset_spacing
    step_vec = cls.offset_step_vector()
    nv = max(8, 2 * math.ceil(cls.norm / 0.2 / 2))
    n_hat = cls.normal

    results = []
    for j in range(n_starts):
        base = (j / n_starts) * spacing * n_hat
        seed = PolyCurve(seed_line(base, base + cls.vector, nv + 1), "closed", cls)
        res = shorten_to_scale(m, seed, h_target=h_target, tol=tol)
        results.append(res)

    # Canonicalize offsets into [0, spacing) by lattice translation.
    canon = []
    for res in results:
        off = res.curve.transversal_offset()
        k = math.floor(off / spacing)
        curve = res.curve.translated(-k * step_vec)
        canon.append((curve, res))

    deduped: list[tuple[PolyCurve, ShortenResult]] = []
    for curve, res in canon:
        dup = False
        for kept_curve, _ in deduped:
            if _curves_match(curve, kept_curve, dedup_tol):
                dup = True
                break
        if not dup:
            deduped.append((curve, res))

    if not deduped:
        raise NoConvergence("no seed converged to an axis")

    min_len = min(res.length for _, res in deduped)
    floor = math.sqrt(m.min_lambda) * cls.norm
    records = []
    for curve, res in deduped:
        if res.length < floor - 1e-9:
            raise NoConvergence(
                f"converged length {res.length:.6g} below flat lower bound {floor:.6g}"
            )
        records.append(
            AxisRecord(
                curve=curve,
                length=res.length,
                transversal_offset=curve.transversal_offset(),
                minimal=res.length <= min_len * (1.0 + minimal_rel_tol),
                converged=res.converged,
                grad_max=res.grad_max,
            )
        )
    records.sort(key=lambda r: r.transversal_offset)
    return records


def _curves_match(a: PolyCurve, b: PolyCurve, tol: float) -> bool:
    """Symmetric Hausdorff comparison, b tiled one period both ways."""
    tau = b.cls.vector
    tiled = np.concatenate([b.vertices - tau, b.vertices, b.vertices + tau])
    d_ab = cKDTree(tiled).query(a.vertices)[0].max()
    if d_ab > tol:
        return False
    tau = a.cls.vector
    tiled = np.concatenate([a.vertices - tau, a.vertices, a.vertices + tau])
    d_ba = cKDTree(tiled).query(b.vertices)[0].max()
    return d_ba <= tol


def distance(
    m: MetricSpec,
    a,
    b,
    h_target: float = 0.01,
    tol: float = 1e-13,
) -> float:
    """Geodesic distance on the universal cover.

    Shortens the straight chord; for separations beyond one lattice cell,
    also shortens seeds detoured through transversally shifted midpoints
    (corridors through neighboring lattice cells) and returns the minimum.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    sep = float(np.hypot(*(b - a)))
    if sep == 0.0:
        raise ValueError("distance requires distinct points")
    nv = max(8, 2 * math.ceil(sep / 0.2 / 2))

    seeds = [seed_line(a, b, nv + 1)]
    if sep > 1.0:
        n_hat = np.array([-(b - a)[1], (b - a)[0]]) / sep
        mid = 0.5 * (a + b)
        for delta in (-1.0, -0.5, 0.5, 1.0):
            way = mid + delta * n_hat
            half = max(4, nv // 2)
            bent = np.concatenate(
                [seed_line(a, way, half + 1), seed_line(way, b, half + 1)[1:]]
            )
            seeds.append(bent)

    best = math.inf
    failures = 0
    for sv in seeds:
        try:
            res = shorten_to_scale(m, PolyCurve(sv, "open"), h_target=h_target, tol=tol)
        except NoConvergence:
            failures += 1
            continue
        best = min(best, res.length)
    if not math.isfinite(best):
        raise NoConvergence(f"all {failures} distance seeds failed")
    return best


def trajectory_polyline_length(m: MetricSpec, tr: Trajectory, t0: float, t1: float) -> float:
    """Metric length of the sampled trajectory between two sample times."""
    mask = (tr.t >= t0 - 1e-12) & (tr.t <= t1 + 1e-12)
    verts = tr.positions[mask]
    if len(verts) < 2:
        raise ValueError("window contains fewer than two samples")
    return float(_chord_lengths(m, verts).sum())


def is_minimal_segment(
    m: MetricSpec,
    tr: Trajectory,
    t0: float,
    t1: float,
    tol: float = 1e-4,
    h_target: float = 0.01,
):
    """Test whether the trajectory window realizes the endpoint distance.

    Returns (minimal, gap) with gap = sampled arclength minus shortest
    connecting length; minimal iff gap <= tol * (t1 - t0).
    """
    if not (tr.t[0] - 1e-12 <= t0 < t1 <= tr.t[-1] + 1e-12):
        raise ValueError(f"window [{t0}, {t1}] outside trajectory span")
    mask = (tr.t >= t0 - 1e-12) & (tr.t <= t1 + 1e-12)
    verts = tr.positions[mask]
    arc = float(_chord_lengths(m, verts).sum())
    d = distance(m, verts[0], verts[-1], h_target=h_target)
    gap = arc - d
    return bool(gap <= tol * (t1 - t0)), gap


@dataclass
class AsymptoticType:
    """Forward/backward nearest-axis classification of a trajectory."""

    forward_axis: int
    backward_axis: int
    forward_shift: tuple[int, int]
    backward_shift: tuple[int, int]
    forward_gaps: list[float]
    backward_gaps: list[float]


def _axis_lift_trees(axes: list[AxisRecord], bbox_lo, bbox_hi):
    """KD-trees for every lattice lift of every axis near a bounding box."""
    lifts = []
    for idx, rec in enumerate(axes):
        cls = rec.curve.cls
        tau = cls.vector
        step = rec.curve.cls.offset_step_vector()
        spacing = cls.offset_spacing
        n_hat = cls.normal
        # Transversal range of lifts that can come near the box.
        corners = np.array(
            [
                [bbox_lo[0], bbox_lo[1]],
                [bbox_lo[0], bbox_hi[1]],
                [bbox_hi[0], bbox_lo[1]],
                [bbox_hi[0], bbox_hi[1]],
            ]
        )
        offs = corners @ n_hat
        base_off = rec.transversal_offset
        j_lo = math.floor((offs.min() - base_off) / spacing) - 1
        j_hi = math.ceil((offs.max() - base_off) / spacing) + 1
        for j in range(j_lo, j_hi + 1):
            shift = j * step
            verts = rec.curve.vertices + shift
            # Tile along the translation axis to cover the box span.
            s = corners @ (tau / cls.norm)
            v0 = verts[0] @ (tau / cls.norm)
            k_lo = math.floor((s.min() - v0) / cls.norm) - 1
            k_hi = math.ceil((s.max() - v0) / cls.norm) + 1
            tiles = [verts + k * tau for k in range(k_lo, k_hi + 1)]
            pts = np.concatenate(tiles)
            lifts.append((idx, (int(round(shift[0])), int(round(shift[1]))), cKDTree(pts)))
    return lifts


def asymptotic_type(
    m: MetricSpec,
    tr: Trajectory,
    axes: list[AxisRecord],
    asym_tol: float = 1e-3,
    n_dyadic: int = 5,
) -> AsymptoticType:
    """Classify the forward/backward asymptotic axes of a trajectory.

    Nearest-axis distances are sampled at dyadic times toward each end of
    the trajectory window; a side is classified when the distances trend
    downward and the final value is below ``asym_tol``. Raises Unclassified
    otherwise.
    """
    if not axes:
        raise ValueError("need at least one candidate axis")
    lo = tr.positions.min(axis=0) - 1.0
    hi = tr.positions.max(axis=0) + 1.0
    lifts = _axis_lift_trees(axes, lo, hi)

    n = len(tr.t)
    mid = n // 2
    out = {}
    for label, idx_seq in (
        ("forward", [n - 1 - int((n - 1 - mid) * 0.5**k) for k in range(n_dyadic, 0, -1)] + [n - 1]),
        ("backward", [int(mid * 0.5**k) for k in range(n_dyadic, 0, -1)][::-1] + [0]),
    ):
        pts = tr.positions[idx_seq]
        dists = np.array([[tree.query(pts)[0][i] for i in range(len(pts))]
                          for _, _, tree in lifts])
        # Nearest lift at the far end of the window decides the candidate.
        cand = int(np.argmin(dists[:, -1]))
        gaps = dists[cand].tolist()
        axis_idx, shift, _ = lifts[cand]
        if gaps[-1] > asym_tol or gaps[-1] > gaps[0] + asym_tol:
            raise Unclassified(
                f"{label} distances do not decay: first {gaps[0]:.3g}, "
                f"last {gaps[-1]:.3g} (tol {asym_tol:.3g})"
            )
        out[label] = (axis_idx, shift, gaps)

    return AsymptoticType(
        forward_axis=out["forward"][0],
        backward_axis=out["backward"][0],
        forward_shift=out["forward"][1],
        backward_shift=out["backward"][1],
        forward_gaps=out["forward"][2],
        backward_gaps=out["backward"][2],
    )


def axis_to_csv(rec: AxisRecord, path) -> None:
    """Axis export: vertex list with a metadata header."""
    cls = rec.curve.cls
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(
            f"# class=({cls.p},{cls.q}) length={rec.length:.17g} "
            f"minimal={str(rec.minimal).lower()} offset={rec.transversal_offset:.17g}\n"
        )
        fh.write("x,y\n")
        for vx, vy in rec.curve.vertices:
            fh.write(f"{vx:.17g},{vy:.17g}\n")
