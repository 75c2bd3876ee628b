"""Special functions needed by the analytic outage and throughput formulas.

Everything here is a pure function of its arguments.  Scalar inputs give
Python floats; numpy arrays broadcast elementwise.  The classical functions
(J0, I0, I1, erf) are delegated to scipy's cephes routines, which exceed the
accuracy required here; the composite functions (half-order Laguerre, Marcum
Q1, Lambert W) are implemented locally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.special as sp

from .errors import NumericError

__all__ = [
    "FnEvalResult",
    "bessel_j0",
    "bessel_i0",
    "bessel_i1",
    "laguerre_half",
    "erf",
    "q_func",
    "marcum_q1",
    "marcum_q1_info",
    "lambert_w0",
]

# Gaussian tail is below double-precision underflow past this |a-b| gap, so
# Marcum Q1 saturates at 0 or 1 and the series can be skipped entirely.
_MARCUM_SATURATION_GAP = 40.0
_MARCUM_TERM_RTOL = 1e-16
_MARCUM_CHUNK = 128
_MARCUM_MAX_TERMS = 2_000_000


@dataclass(frozen=True)
class FnEvalResult:
    """A function value together with an estimated truncation-error bound."""

    value: float
    abs_err_bound: float


def _validate_finite(name, x):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite, got {x!r}")


def _as_float_or_array(x, out):
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def bessel_j0(x):
    """Bessel function of the first kind, order zero."""
    x = np.asarray(x, dtype=float)
    _validate_finite("bessel_j0 argument", x)
    return _as_float_or_array(x, sp.j0(x))


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero.

    Large arguments are evaluated through the exponentially scaled form;
    results above the double-precision range come back as inf.
    """
    x = np.asarray(x, dtype=float)
    _validate_finite("bessel_i0 argument", x)
    ax = np.abs(x)
    with np.errstate(over="ignore"):
        out = np.where(ax > 700.0, sp.i0e(ax) * np.exp(ax), sp.i0(x))
    return _as_float_or_array(x, out)


def bessel_i1(x):
    """Modified Bessel function of the first kind, order one."""
    x = np.asarray(x, dtype=float)
    _validate_finite("bessel_i1 argument", x)
    ax = np.abs(x)
    with np.errstate(over="ignore"):
        out = np.where(ax > 700.0, np.sign(x) * sp.i1e(ax) * np.exp(ax), sp.i1(x))
    return _as_float_or_array(x, out)


def laguerre_half(x):
    """Laguerre function of order 1/2 for non-positive arguments.

    Uses L_{1/2}(x) = e^{x/2} [(1-x) I0(-x/2) - x I1(-x/2)], rewritten with
    exponentially scaled Bessels so it stays stable for arbitrarily large
    negative x (where it grows like 2 sqrt(-x/pi)).
    """
    x = np.asarray(x, dtype=float)
    _validate_finite("laguerre_half argument", x)
    if np.any(x > 0):
        raise ValueError("laguerre_half is only supported for x <= 0")
    u = -x / 2.0  # >= 0; identity becomes (1+2u) I0(u) e^-u + 2u I1(u) e^-u
    out = (1.0 + 2.0 * u) * sp.i0e(u) + 2.0 * u * sp.i1e(u)
    return _as_float_or_array(x, out)


def erf(x):
    """Error function."""
    x = np.asarray(x, dtype=float)
    _validate_finite("erf argument", x)
    return _as_float_or_array(x, sp.erf(x))


def q_func(z):
    """Gaussian Q-function, the standard normal tail probability."""
    z = np.asarray(z, dtype=float)
    _validate_finite("q_func argument", z)
    return _as_float_or_array(z, 0.5 * sp.erfc(z / np.sqrt(2.0)))


def _marcum_series(a, b):
    """Marcum Q1 core: canonical series, vectorized over flat float arrays.

    Returns (q, err) where err bounds the series truncation per element.
    For b > a the direct series for Q1 is summed; otherwise the
    complementary series for 1-Q1, which avoids cancellation when Q1 -> 1.
    """
    q = np.empty_like(a)
    err = np.zeros_like(a)

    # Saturated tails: |a-b| so large that Q1 is 0 or 1 to double precision.
    sat_hi = a - b >= _MARCUM_SATURATION_GAP
    sat_lo = b - a >= _MARCUM_SATURATION_GAP
    q[sat_hi] = 1.0
    q[sat_lo] = 0.0

    # a = 0 reduces to the Rayleigh tail; b = 0 integrates the whole support.
    triv_b = (b == 0) & ~sat_hi
    q[triv_b] = 1.0
    triv_a = (a == 0) & (b > 0) & ~sat_lo
    q[triv_a] = np.exp(-0.5 * b[triv_a] ** 2)

    rest = ~(sat_hi | sat_lo | triv_a | triv_b)
    if not rest.any():
        return q, err

    ar, br = a[rest], b[rest]
    direct = br > ar
    pref = np.exp(-0.5 * (ar - br) ** 2)
    ab = ar * br
    log_ratio = np.where(direct, np.log(ar / br), np.log(br / ar))
    total = np.zeros_like(ar)
    done = np.zeros(ar.shape, dtype=bool)
    tail = np.zeros_like(ar)
    k0 = np.where(direct, 0, 1)

    k = 0
    while k < _MARCUM_MAX_TERMS:
        ks = np.arange(k, k + _MARCUM_CHUNK)
        active = ~done
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        kk = ks[None, :]
        valid = kk >= k0[idx, None]
        with np.errstate(divide="ignore", over="ignore"):
            terms = np.exp(kk * log_ratio[idx, None]) * sp.ive(kk, ab[idx, None])
        terms = np.where(valid, terms, 0.0)
        total[idx] += terms.sum(axis=1)
        last = terms[:, -1]
        conv = last <= _MARCUM_TERM_RTOL * np.maximum(total[idx], 1e-300)
        tail[idx] = last
        done[idx] = conv
        k += _MARCUM_CHUNK
        if done.all():
            break
    if not done.all():
        raise NumericError("Marcum Q1 series did not converge")

    qr = np.where(direct, pref * total, 1.0 - pref * total)
    q[rest] = np.clip(qr, 0.0, 1.0)
    # crude geometric bound on the dropped tail
    err[rest] = pref * tail * 2.0
    return q, err


def marcum_q1(a, b):
    """First-order Marcum Q function Q1(a, b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _validate_finite("marcum_q1 argument a", a)
    _validate_finite("marcum_q1 argument b", b)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marcum_q1 requires a >= 0 and b >= 0")
    aa, bb = np.broadcast_arrays(a, b)
    q, _ = _marcum_series(aa.ravel().astype(float), bb.ravel().astype(float))
    out = q.reshape(aa.shape)
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return float(out)
    return out


def marcum_q1_info(a, b):
    """Marcum Q1 with its series truncation-error estimate."""
    a = float(a)
    b = float(b)
    _validate_finite("marcum_q1 argument a", a)
    _validate_finite("marcum_q1 argument b", b)
    if a < 0 or b < 0:
        raise ValueError("marcum_q1 requires a >= 0 and b >= 0")
    q, err = _marcum_series(np.array([a]), np.array([b]))
    return FnEvalResult(value=float(q[0]), abs_err_bound=float(err[0]))


_INV_E = -np.exp(-1.0)


def lambert_w0(x):
    """Principal branch of the Lambert W function, w e^w = x for x >= -1/e."""
    x = np.asarray(x, dtype=float)
    _validate_finite("lambert_w0 argument", x)
    if np.any(x < _INV_E - 1e-12):
        raise ValueError("lambert_w0 requires x >= -1/e")
    xc = np.clip(x, _INV_E, None)

    # log-based start, with the branch-point series near x = -1/e
    w = np.where(xc > np.e, np.log(np.maximum(xc, 1e-300)), np.log1p(xc))
    near = xc < -0.25
    if np.any(near):
        p = np.sqrt(2.0 * (np.e * xc + 1.0))
        w = np.where(near, -1.0 + p - p**2 / 3.0, w)

    for _ in range(60):
        ew = np.exp(w)
        f = w * ew - xc
        wp1 = w + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
            step = f / denom
        step = np.where((f != 0) & np.isfinite(step), step, 0.0)
        w = w - step
        if np.all(np.abs(step) <= 1e-16 * (1.0 + np.abs(w))):
            break

    resid = np.abs(w * np.exp(w) - xc)
    if np.any(resid > 1e-10 * np.maximum(np.abs(xc), 1e-30) + 1e-300):
        raise NumericError("lambert_w0 iteration failed to converge")
    return _as_float_or_array(x, w)
