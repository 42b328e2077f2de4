"""Compiled scalar kernels for the geodesic flow.

Everything here is numba-jitted and operates on the packed Fourier arrays
produced by ``MetricSpec.kernel_args``: variant code 0/1/2 for
flat/liouville/conformal, (k, a, b) rows for the 1D polynomials f and g and
(k, l, a, b) rows for the 2D exponent u.

The integrator is an explicit Dormand-Prince 5(4) pair with FSAL, elementary
step-size control, and a projection of the velocity back onto the unit-speed
bundle after every accepted step. The projection magnitude is reported, not
hidden: ``energy_drift`` is the largest |lam |v|^2 - 1| seen before
renormalization.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1


@njit(cache=True, nogil=True, inline="always")
def lam_eval(variant, f0, fh, g0, gh, u0, uh, x, y):
    """Conformal factor and first derivatives at a point."""
    if variant == 0:
        return 1.0, 0.0, 0.0
    if variant == 1:
        lam = f0 + g0
        lx = 0.0
        ly = 0.0
        for i in range(fh.shape[0]):
            w = TWO_PI * fh[i, 0]
            c = math.cos(w * x)
            s = math.sin(w * x)
            lam += fh[i, 1] * c + fh[i, 2] * s
            lx += w * (-fh[i, 1] * s + fh[i, 2] * c)
        for i in range(gh.shape[0]):
            w = TWO_PI * gh[i, 0]
            c = math.cos(w * y)
            s = math.sin(w * y)
            lam += gh[i, 1] * c + gh[i, 2] * s
            ly += w * (-gh[i, 1] * s + gh[i, 2] * c)
        return lam, lx, ly
    u = u0
    ux = 0.0
    uy = 0.0
    for i in range(uh.shape[0]):
        k = uh[i, 0]
        l = uh[i, 1]
        ph = TWO_PI * (k * x + l * y)
        c = math.cos(ph)
        s = math.sin(ph)
        u += uh[i, 2] * c + uh[i, 3] * s
        d1 = TWO_PI * (-uh[i, 2] * s + uh[i, 3] * c)
        ux += k * d1
        uy += l * d1
    lam = math.exp(2.0 * u)
    return lam, 2.0 * ux * lam, 2.0 * uy * lam


@njit(cache=True, nogil=True, inline="always")
def rhs(variant, f0, fh, g0, gh, u0, uh, x, y, vx, vy):
    """Geodesic equation right-hand side for a conformal metric.

    With a = lx/(2 lam), b = ly/(2 lam):
        ax = -a (vx^2 - vy^2) - 2 b vx vy
        ay = +b (vx^2 - vy^2) - 2 a vx vy
    """
    lam, lx, ly = lam_eval(variant, f0, fh, g0, gh, u0, uh, x, y)
    a = lx / (2.0 * lam)
    b = ly / (2.0 * lam)
    d = vx * vx - vy * vy
    c = 2.0 * vx * vy
    return vx, vy, -a * d - b * c, b * d - a * c


# Dormand-Prince 5(4) tableau.
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
)
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


@njit(cache=True, nogil=True)
def integrate_core(
    variant, f0, fh, g0, gh, u0, uh, y0, ts, rtol, atol, hmax, out
):
    """Integrate the unit-speed geodesic flow, landing on every sample time.

    ``ts`` must be strictly increasing starting at 0; ``out`` is an
    (len(ts), 4) array receiving (x, y, vx, vy) at the sample times.

    Returns (energy_drift, renorm_max, n_steps, n_rejected, h_min, status).
    """
    x = y0[0]
    y = y0[1]
    vx = y0[2]
    vy = y0[3]
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = vx
    out[0, 3] = vy

    t = ts[0]
    h = min(hmax, 1e-3)
    energy_drift = 0.0
    renorm_max = 0.0
    n_steps = 0
    n_rej = 0
    h_min_seen = hmax

    k1x, k1y, k1vx, k1vy = rhs(variant, f0, fh, g0, gh, u0, uh, x, y, vx, vy)

    for j in range(1, ts.shape[0]):
        t_next = ts[j]
        while t < t_next:
            if h > t_next - t:
                h = t_next - t
            if h < 1e-13:
                return energy_drift, renorm_max, n_steps, n_rej, h_min_seen, STATUS_STEP_UNDERFLOW

            ax = x + h * _A21 * k1x
            ay = y + h * _A21 * k1y
            avx = vx + h * _A21 * k1vx
            avy = vy + h * _A21 * k1vy
            k2x, k2y, k2vx, k2vy = rhs(variant, f0, fh, g0, gh, u0, uh, ax, ay, avx, avy)

            ax = x + h * (_A31 * k1x + _A32 * k2x)
            ay = y + h * (_A31 * k1y + _A32 * k2y)
            avx = vx + h * (_A31 * k1vx + _A32 * k2vx)
            avy = vy + h * (_A31 * k1vy + _A32 * k2vy)
            k3x, k3y, k3vx, k3vy = rhs(variant, f0, fh, g0, gh, u0, uh, ax, ay, avx, avy)

            ax = x + h * (_A41 * k1x + _A42 * k2x + _A43 * k3x)
            ay = y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y)
            avx = vx + h * (_A41 * k1vx + _A42 * k2vx + _A43 * k3vx)
            avy = vy + h * (_A41 * k1vy + _A42 * k2vy + _A43 * k3vy)
            k4x, k4y, k4vx, k4vy = rhs(variant, f0, fh, g0, gh, u0, uh, ax, ay, avx, avy)

            ax = x + h * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x)
            ay = y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y)
            avx = vx + h * (_A51 * k1vx + _A52 * k2vx + _A53 * k3vx + _A54 * k4vx)
            avy = vy + h * (_A51 * k1vy + _A52 * k2vy + _A53 * k3vy + _A54 * k4vy)
            k5x, k5y, k5vx, k5vy = rhs(variant, f0, fh, g0, gh, u0, uh, ax, ay, avx, avy)

            ax = x + h * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x)
            ay = y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y)
            avx = vx + h * (_A61 * k1vx + _A62 * k2vx + _A63 * k3vx + _A64 * k4vx + _A65 * k5vx)
            avy = vy + h * (_A61 * k1vy + _A62 * k2vy + _A63 * k3vy + _A64 * k4vy + _A65 * k5vy)
            k6x, k6y, k6vx, k6vy = rhs(variant, f0, fh, g0, gh, u0, uh, ax, ay, avx, avy)

            nx = x + h * (_B1 * k1x + _B3 * k3x + _B4 * k4x + _B5 * k5x + _B6 * k6x)
            ny = y + h * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
            nvx = vx + h * (_B1 * k1vx + _B3 * k3vx + _B4 * k4vx + _B5 * k5vx + _B6 * k6vx)
            nvy = vy + h * (_B1 * k1vy + _B3 * k3vy + _B4 * k4vy + _B5 * k5vy + _B6 * k6vy)
            k7x, k7y, k7vx, k7vy = rhs(variant, f0, fh, g0, gh, u0, uh, nx, ny, nvx, nvy)

            # Embedded 4th-order error estimate (FSAL: k7 doubles as next k1).
            ex = h * (_E1 * k1x + _E3 * k3x + _E4 * k4x + _E5 * k5x + _E6 * k6x + _E7 * k7x)
            ey = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
            evx = h * (_E1 * k1vx + _E3 * k3vx + _E4 * k4vx + _E5 * k5vx + _E6 * k6vx + _E7 * k7vx)
            evy = h * (_E1 * k1vy + _E3 * k3vy + _E4 * k4vy + _E5 * k5vy + _E6 * k6vy + _E7 * k7vy)

            sc = atol + rtol * max(abs(x), abs(nx))
            err = (ex / sc) ** 2
            sc = atol + rtol * max(abs(y), abs(ny))
            err += (ey / sc) ** 2
            sc = atol + rtol * max(abs(vx), abs(nvx))
            err += (evx / sc) ** 2
            sc = atol + rtol * max(abs(vy), abs(nvy))
            err += (evy / sc) ** 2
            err = math.sqrt(err / 4.0)

            if err <= 1.0:
                if h < h_min_seen:
                    h_min_seen = h
                t += h
                x, y = nx, ny
                lam, _, _ = lam_eval(variant, f0, fh, g0, gh, u0, uh, x, y)
                sp2 = lam * (nvx * nvx + nvy * nvy)
                dev = abs(sp2 - 1.0)
                if dev > energy_drift:
                    energy_drift = dev
                scale = 1.0 / math.sqrt(sp2)
                rmag = abs(scale - 1.0)
                if rmag > renorm_max:
                    renorm_max = rmag
                vx = nvx * scale
                vy = nvy * scale
                k1x, k1y, k1vx, k1vy = rhs(
                    variant, f0, fh, g0, gh, u0, uh, x, y, vx, vy
                )
                n_steps += 1
                if err == 0.0:
                    fac = 5.0
                else:
                    fac = 0.9 * err ** -0.2
                    if fac > 5.0:
                        fac = 5.0
                    elif fac < 0.2:
                        fac = 0.2
                h = min(h * fac, hmax)
            else:
                n_rej += 1
                fac = 0.9 * err ** -0.2
                if fac < 0.1:
                    fac = 0.1
                h *= fac
        out[j, 0] = x
        out[j, 1] = y
        out[j, 2] = vx
        out[j, 3] = vy
    return energy_drift, renorm_max, n_steps, n_rej, h_min_seen, STATUS_OK
