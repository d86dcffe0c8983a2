"""Hot per-path stepping kernels with two interchangeable backends.

The numba backend (default when numba imports) runs explicit per-path loops
under ``@njit``; the numpy backend runs the same arithmetic vectorized over a
batch of paths.  Select with the ``PATHLIFT_BACKEND`` environment variable
(``numba`` or ``numpy``) or ``set_backend``; ``benchmarks/bench_backends.py``
times one against the other.

Kernel step (Heun predictor-corrector for the Stratonovich frame-bundle
equation, shared by the deterministic development which feeds w' dt in place
of Brownian increments):

    v1   = u db                      (ambient increment)
    x~   = x + v1,   u~_a = u_a - kappa <v1, u_a>_G x
    v2   = u~ db
    x+   = x + (v1 + v2)/2
    u+_a = u_a - kappa/2 (<v1,u_a>_G x + <v2,u~_a>_G x~)

followed by point re-projection and frame repair (tangent projection, then
modified Gram-Schmidt).  The tangency-projection coefficient is O(|db|^3)
per step and is reported separately (``tan_max``); the repair guard proper
(``rep_max``) covers the point defect and the post-projection Gram
corrections, which stay O(|db|^4).

Kernels never depend on the damped-transport state: with constant Ricci the
damped scalars (tau, tau^{-1}, Q, z) are deterministic functions of time,
precomputed once per call and fed in as per-step weights.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore
        def deco(fn):
            return fn

        return deco


_VALID = ("numba", "numpy")
_BACKEND = os.environ.get("PATHLIFT_BACKEND", "numba" if HAVE_NUMBA else "numpy")
if _BACKEND not in _VALID:
    raise RuntimeError(f"PATHLIFT_BACKEND must be one of {_VALID}, got {_BACKEND!r}")
if _BACKEND == "numba" and not HAVE_NUMBA:
    _BACKEND = "numpy"


def get_backend() -> str:
    return _BACKEND


def set_backend(name: str) -> None:
    global _BACKEND
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}")
    if name == "numba" and not HAVE_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")
    _BACKEND = name


# ---------------------------------------------------------------------------
# damped scalar system (constant Ricci = ric_c * I)
# ---------------------------------------------------------------------------


def _rk4_factor(a: float) -> float:
    """One classical RK4 step of y' = lam*y is multiplication by this factor
    (a = lam * dt)."""
    return 1.0 + a + a * a / 2.0 + a**3 / 6.0 + a**4 / 24.0


def scalar_damped_path(ric_c: float, n: int, dt: float) -> dict:
    """Deterministic damped scalars on the node grid for Ric = ric_c * I:

        tau' = -(ric_c/2) tau   (damped transport, tau(0)=1, RK4)
        ti'  = +(ric_c/2) ti    (its inverse, integrated independently)
        q    = int ti^2         (Gram accumulation, Simpson on the half grid)
        z'   = -(ric_c/2) z + ti(s)   (unit damped response, RK4)
    """
    lam = -0.5 * ric_c
    f_full, f_half = _rk4_factor(lam * dt), _rk4_factor(lam * dt / 2)
    g_full, g_half = _rk4_factor(-lam * dt), _rk4_factor(-lam * dt / 2)

    tau = np.empty(n + 1)
    ti = np.empty(n + 1)
    tau_m = np.empty(n)
    ti_m = np.empty(n)
    q = np.empty(n + 1)
    z = np.empty(n + 1)
    tau[0], ti[0], q[0], z[0] = 1.0, 1.0, 0.0, 0.0
    for j in range(n):
        tau_m[j] = tau[j] * f_half
        ti_m[j] = ti[j] * g_half
        tau[j + 1] = tau[j] * f_full
        ti[j + 1] = ti[j] * g_full
        q[j + 1] = q[j] + (dt / 6.0) * (ti[j] ** 2 + 4.0 * ti_m[j] ** 2 + ti[j + 1] ** 2)
        k1 = lam * z[j] + ti[j]
        k2 = lam * (z[j] + 0.5 * dt * k1) + ti_m[j]
        k3 = lam * (z[j] + 0.5 * dt * k2) + ti_m[j]
        k4 = lam * (z[j] + dt * k3) + ti[j + 1]
        z[j + 1] = z[j] + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return {
        "tau": tau,
        "tauinv": ti,
        "tau_mid": tau_m,
        "tauinv_mid": ti_m,
        "q": q,
        "z": z,
        "tu_drift": float(np.max(np.abs(tau * ti - 1.0))),
    }


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------


@njit(cache=True)
def _summaries_nb(kind, kappa, x0, u0, dw, part, w_ito, w_ric, w_zb, w_strat,
                  xs, us, acc, rep_out, tan_out):
    B, n, d = dw.shape
    D = x0.shape[0]
    P = part.shape[0]
    g0 = -1.0 if kind == 2 else 1.0  # ambient metric weight on coordinate 0
    x = np.empty(D)
    xn = np.empty(D)
    F = np.empty((d, D))
    Fn = np.empty((d, D))
    v1 = np.empty(D)
    v2 = np.empty(D)
    xp = np.empty(D)
    c1 = np.empty(d)
    c2 = np.empty(d)
    for b in range(B):
        for i in range(D):
            x[i] = x0[i]
        for a in range(d):
            for i in range(D):
                F[a, i] = u0[i, a]
        rep = 0.0
        tan = 0.0
        p = 0
        for j in range(n):
            while p < P and part[p] == j:
                for i in range(D):
                    xs[b, p, i] = x[i]
                    for a in range(d):
                        us[b, p, i, a] = F[a, i]
                p += 1
            for a in range(d):
                db = dw[b, j, a]
                acc[b, 0, a] += w_ito[j] * db
                acc[b, 1, a] += w_ric[j] * db
                acc[b, 2, a] += w_zb[j] * db
                acc[b, 3, a] += w_strat[j] * db
                acc[b, 4, a] += db
            if kind == 0:
                for i in range(D):
                    mv = 0.0
                    for a in range(d):
                        mv += F[a, i] * dw[b, j, a]
                    x[i] += mv
                continue
            for i in range(D):
                mv = 0.0
                for a in range(d):
                    mv += F[a, i] * dw[b, j, a]
                v1[i] = mv
                xp[i] = x[i] + mv
            for a in range(d):
                s = g0 * v1[0] * F[a, 0]
                for i in range(1, D):
                    s += v1[i] * F[a, i]
                c1[a] = s
            for a in range(d):
                for i in range(D):
                    Fn[a, i] = F[a, i] - kappa * c1[a] * x[i]
            for i in range(D):
                mv = 0.0
                for a in range(d):
                    mv += Fn[a, i] * dw[b, j, a]
                v2[i] = mv
            for a in range(d):
                s = g0 * v2[0] * Fn[a, 0]
                for i in range(1, D):
                    s += v2[i] * Fn[a, i]
                c2[a] = s
            for i in range(D):
                xn[i] = x[i] + 0.5 * (v1[i] + v2[i])
            for a in range(d):
                for i in range(D):
                    Fn[a, i] = F[a, i] - 0.5 * kappa * (c1[a] * x[i] + c2[a] * xp[i])
            # repair: normalize the point, project + Gram-Schmidt the frame
            s = g0 * xn[0] * xn[0]
            for i in range(1, D):
                s += xn[i] * xn[i]
            if kind == 2:
                s = -s
            nrm = np.sqrt(s)
            if abs(nrm - 1.0) > rep:
                rep = abs(nrm - 1.0)
            for i in range(D):
                x[i] = xn[i] / nrm
            for a in range(d):
                t = g0 * Fn[a, 0] * x[0]
                for i in range(1, D):
                    t += Fn[a, i] * x[i]
                if abs(t) > tan:
                    tan = abs(t)
                for i in range(D):
                    Fn[a, i] -= kappa * t * x[i]
                for b0 in range(a):
                    t2 = g0 * Fn[b0, 0] * Fn[a, 0]
                    for i in range(1, D):
                        t2 += Fn[b0, i] * Fn[a, i]
                    if abs(t2) > rep:
                        rep = abs(t2)
                    for i in range(D):
                        Fn[a, i] -= t2 * Fn[b0, i]
                nr = g0 * Fn[a, 0] * Fn[a, 0]
                for i in range(1, D):
                    nr += Fn[a, i] * Fn[a, i]
                nr = np.sqrt(nr)
                if abs(nr - 1.0) > rep:
                    rep = abs(nr - 1.0)
                for i in range(D):
                    Fn[a, i] /= nr
            for a in range(d):
                for i in range(D):
                    F[a, i] = Fn[a, i]
        while p < P and part[p] == n:
            for i in range(D):
                xs[b, p, i] = x[i]
                for a in range(d):
                    us[b, p, i, a] = F[a, i]
            p += 1
        rep_out[b] = rep
        tan_out[b] = tan


@njit(cache=True)
def _develop_nb(kind, kappa, x0, u0, dw, xs, us, rep_out, tan_out):
    B, n, d = dw.shape
    D = x0.shape[0]
    g0 = -1.0 if kind == 2 else 1.0
    x = np.empty(D)
    xn = np.empty(D)
    F = np.empty((d, D))
    Fn = np.empty((d, D))
    v1 = np.empty(D)
    v2 = np.empty(D)
    xp = np.empty(D)
    c1 = np.empty(d)
    c2 = np.empty(d)
    for b in range(B):
        for i in range(D):
            x[i] = x0[i]
            xs[b, 0, i] = x0[i]
        for a in range(d):
            for i in range(D):
                F[a, i] = u0[i, a]
                us[b, 0, i, a] = u0[i, a]
        rep = 0.0
        tan = 0.0
        for j in range(n):
            if kind == 0:
                for i in range(D):
                    mv = 0.0
                    for a in range(d):
                        mv += F[a, i] * dw[b, j, a]
                    x[i] += mv
                    xs[b, j + 1, i] = x[i]
                    for a in range(d):
                        us[b, j + 1, i, a] = F[a, i]
                continue
            for i in range(D):
                mv = 0.0
                for a in range(d):
                    mv += F[a, i] * dw[b, j, a]
                v1[i] = mv
                xp[i] = x[i] + mv
            for a in range(d):
                s = g0 * v1[0] * F[a, 0]
                for i in range(1, D):
                    s += v1[i] * F[a, i]
                c1[a] = s
            for a in range(d):
                for i in range(D):
                    Fn[a, i] = F[a, i] - kappa * c1[a] * x[i]
            for i in range(D):
                mv = 0.0
                for a in range(d):
                    mv += Fn[a, i] * dw[b, j, a]
                v2[i] = mv
            for a in range(d):
                s = g0 * v2[0] * Fn[a, 0]
                for i in range(1, D):
                    s += v2[i] * Fn[a, i]
                c2[a] = s
            for i in range(D):
                xn[i] = x[i] + 0.5 * (v1[i] + v2[i])
            for a in range(d):
                for i in range(D):
                    Fn[a, i] = F[a, i] - 0.5 * kappa * (c1[a] * x[i] + c2[a] * xp[i])
            s = g0 * xn[0] * xn[0]
            for i in range(1, D):
                s += xn[i] * xn[i]
            if kind == 2:
                s = -s
            nrm = np.sqrt(s)
            if abs(nrm - 1.0) > rep:
                rep = abs(nrm - 1.0)
            for i in range(D):
                x[i] = xn[i] / nrm
                xs[b, j + 1, i] = x[i]
            for a in range(d):
                t = g0 * Fn[a, 0] * x[0]
                for i in range(1, D):
                    t += Fn[a, i] * x[i]
                if abs(t) > tan:
                    tan = abs(t)
                for i in range(D):
                    Fn[a, i] -= kappa * t * x[i]
                for b0 in range(a):
                    t2 = g0 * Fn[b0, 0] * Fn[a, 0]
                    for i in range(1, D):
                        t2 += Fn[b0, i] * Fn[a, i]
                    if abs(t2) > rep:
                        rep = abs(t2)
                    for i in range(D):
                        Fn[a, i] -= t2 * Fn[b0, i]
                nr = g0 * Fn[a, 0] * Fn[a, 0]
                for i in range(1, D):
                    nr += Fn[a, i] * Fn[a, i]
                nr = np.sqrt(nr)
                if abs(nr - 1.0) > rep:
                    rep = abs(nr - 1.0)
                for i in range(D):
                    Fn[a, i] /= nr
            for a in range(d):
                for i in range(D):
                    F[a, i] = Fn[a, i]
                    us[b, j + 1, i, a] = F[a, i]
        rep_out[b] = rep
        tan_out[b] = tan


@njit(cache=True, inline="always")
def _gd(a, b, kind):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    if kind == 2:
        s -= 2.0 * a[0] * b[0]
    return s


@njit(cache=True)
def _transport_nb(kind, kappa, xs, u0, us, diag):
    """Frame transport along a given point path: Heun with chord increments."""
    n = xs.shape[0] - 1
    D = xs.shape[1]
    d = u0.shape[1]
    F = np.empty((d, D))
    Fn = np.empty((d, D))
    delta = np.empty(D)
    for a in range(d):
        for i in range(D):
            F[a, i] = u0[i, a]
            us[0, i, a] = u0[i, a]
    rep = 0.0
    tan = 0.0
    for j in range(n):
        x0 = xs[j]
        x1 = xs[j + 1]
        for i in range(D):
            delta[i] = x1[i] - x0[i]
        if kind == 0:
            for a in range(d):
                for i in range(D):
                    us[j + 1, i, a] = F[a, i]
            continue
        for a in range(d):
            c1 = _gd(delta, F[a], kind)
            for i in range(D):
                Fn[a, i] = F[a, i] - kappa * c1 * x0[i]
            c2 = _gd(delta, Fn[a], kind)
            for i in range(D):
                Fn[a, i] = F[a, i] - 0.5 * kappa * (c1 * x0[i] + c2 * x1[i])
        for a in range(d):
            t = _gd(Fn[a], x1, kind)
            if abs(t) > tan:
                tan = abs(t)
            for i in range(D):
                Fn[a, i] -= kappa * t * x1[i]
            for b0 in range(a):
                t2 = _gd(Fn[b0], Fn[a], kind)
                if abs(t2) > rep:
                    rep = abs(t2)
                for i in range(D):
                    Fn[a, i] -= t2 * Fn[b0, i]
            nr = np.sqrt(_gd(Fn[a], Fn[a], kind))
            if abs(nr - 1.0) > rep:
                rep = abs(nr - 1.0)
            for i in range(D):
                Fn[a, i] /= nr
        for a in range(d):
            for i in range(D):
                F[a, i] = Fn[a, i]
                us[j + 1, i, a] = Fn[a, i]
    diag[0] = rep
    diag[1] = tan


# ---------------------------------------------------------------------------
# numpy backend (same arithmetic, vectorized over the batch axis)
# ---------------------------------------------------------------------------


def _gd_np(a, b, kind):
    s = np.einsum("...i,...i->...", a, b)
    if kind == 2:
        s = s - 2.0 * a[..., 0] * b[..., 0]
    return s


def _step_np(kind, kappa, x, F, db):
    """Vectorized Heun step + repair.  x (B,D), F (B,d,D), db (B,d).
    Returns xn, Fn, rep (B,), tan (B,)."""
    B = x.shape[0]
    if kind == 0:
        xn = x + np.einsum("baD,ba->bD", F, db)
        return xn, F, np.zeros(B), np.zeros(B)

    v1 = np.einsum("baD,ba->bD", F, db)
    xp = x + v1
    c1 = _gd_np(v1[:, None, :], F, kind)  # (B,d)
    Fp = F - kappa * c1[:, :, None] * x[:, None, :]
    v2 = np.einsum("baD,ba->bD", Fp, db)
    c2 = _gd_np(v2[:, None, :], Fp, kind)
    xn = x + 0.5 * (v1 + v2)
    Fn = F - 0.5 * kappa * (
        c1[:, :, None] * x[:, None, :] + c2[:, :, None] * xp[:, None, :]
    )

    s = _gd_np(xn, xn, kind)
    if kind == 2:
        s = -s
    nrm = np.sqrt(s)
    rep = np.abs(nrm - 1.0)
    xn = xn / nrm[:, None]
    d = F.shape[1]
    tan = np.zeros(B)
    Fn = Fn.copy()
    for a in range(d):
        t = _gd_np(Fn[:, a, :], xn, kind)
        tan = np.maximum(tan, np.abs(t))
        Fn[:, a, :] -= kappa * t[:, None] * xn
        for b0 in range(a):
            t2 = _gd_np(Fn[:, b0, :], Fn[:, a, :], kind)
            rep = np.maximum(rep, np.abs(t2))
            Fn[:, a, :] -= t2[:, None] * Fn[:, b0, :]
        nr = np.sqrt(_gd_np(Fn[:, a, :], Fn[:, a, :], kind))
        rep = np.maximum(rep, np.abs(nr - 1.0))
        Fn[:, a, :] /= nr[:, None]
    return xn, Fn, rep, tan


def _summaries_np(kind, kappa, x0, u0, dw, part, w_ito, w_ric, w_zb, w_strat,
                  xs, us, acc, rep_out, tan_out):
    B, n, d = dw.shape
    D = x0.shape[0]
    P = part.shape[0]
    dwt = np.ascontiguousarray(dw.transpose(1, 0, 2))
    x = np.tile(x0, (B, 1))
    F = np.tile(u0.T, (B, 1, 1))  # (B,d,D)
    rep = np.zeros(B)
    tan = np.zeros(B)
    p = 0
    for j in range(n):
        while p < P and part[p] == j:
            xs[:, p, :] = x
            us[:, p, :, :] = F.transpose(0, 2, 1)
            p += 1
        db = dwt[j]
        acc[:, 0, :] += w_ito[j] * db
        acc[:, 1, :] += w_ric[j] * db
        acc[:, 2, :] += w_zb[j] * db
        acc[:, 3, :] += w_strat[j] * db
        acc[:, 4, :] += db
        x, F, r, t = _step_np(kind, kappa, x, F, db)
        rep = np.maximum(rep, r)
        tan = np.maximum(tan, t)
    while p < P and part[p] == n:
        xs[:, p, :] = x
        us[:, p, :, :] = F.transpose(0, 2, 1)
        p += 1
    rep_out[:] = rep
    tan_out[:] = tan


def _develop_np(kind, kappa, x0, u0, dw, xs, us, rep_out, tan_out):
    B, n, d = dw.shape
    dwt = np.ascontiguousarray(dw.transpose(1, 0, 2))
    x = np.tile(x0, (B, 1))
    F = np.tile(u0.T, (B, 1, 1))
    rep = np.zeros(B)
    tan = np.zeros(B)
    xs[:, 0, :] = x
    us[:, 0, :, :] = F.transpose(0, 2, 1)
    for j in range(n):
        x, F, r, t = _step_np(kind, kappa, x, F, dwt[j])
        rep = np.maximum(rep, r)
        tan = np.maximum(tan, t)
        xs[:, j + 1, :] = x
        us[:, j + 1, :, :] = F.transpose(0, 2, 1)
    rep_out[:] = rep
    tan_out[:] = tan


def _transport_np(kind, kappa, xs, u0, us, diag):
    n = xs.shape[0] - 1
    d = u0.shape[1]
    us[0] = u0
    F = u0.T[None, :, :].copy()  # (1,d,D)
    rep = 0.0
    tan = 0.0
    for j in range(n):
        if kind == 0:
            us[j + 1] = F[0].T
            continue
        x0 = xs[j][None, :]
        x1 = xs[j + 1][None, :]
        delta = x1 - x0
        c1 = _gd_np(delta[:, None, :], F, kind)
        Fp = F - kappa * c1[:, :, None] * x0[:, None, :]
        c2 = _gd_np(delta[:, None, :], Fp, kind)
        Fn = F - 0.5 * kappa * (c1[:, :, None] * x0[:, None, :] + c2[:, :, None] * x1[:, None, :])
        Fn = Fn.copy()
        for a in range(d):
            t = _gd_np(Fn[:, a, :], x1, kind)
            tan = max(tan, float(np.abs(t[0])))
            Fn[:, a, :] -= kappa * t[:, None] * x1
            for b0 in range(a):
                t2 = _gd_np(Fn[:, b0, :], Fn[:, a, :], kind)
                rep = max(rep, float(np.abs(t2[0])))
                Fn[:, a, :] -= t2[:, None] * Fn[:, b0, :]
            nr = np.sqrt(_gd_np(Fn[:, a, :], Fn[:, a, :], kind))
            rep = max(rep, float(np.abs(nr[0] - 1.0)))
            Fn[:, a, :] /= nr[:, None]
        F = Fn
        us[j + 1] = F[0].T
    diag[0] = rep
    diag[1] = tan


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------


def path_summaries(kind: int, kappa: float, ric_c: float, dt: float,
                   x0: np.ndarray, u0: np.ndarray, dw: np.ndarray,
                   part_idx: np.ndarray) -> dict:
    """Stream one batch of paths and return everything the integration-by-
    parts engine needs, without storing the paths themselves.

    dw: (B, n, d) driving increments.  part_idx: sorted node indices at which
    point/frame snapshots are recorded (must end with n).
    """
    dw = np.ascontiguousarray(dw, dtype=np.float64)
    B, n, d = dw.shape
    D = x0.shape[0]
    part = np.asarray(part_idx, dtype=np.int64)
    if part.size == 0 or part[-1] != n or np.any(np.diff(part) <= 0):
        raise ValueError("part_idx must be strictly increasing and end at n")

    sc = scalar_damped_path(ric_c, n, dt)
    z, ti = sc["z"], sc["tauinv"]
    w_ito = ti[:-1].copy()
    w_ric = 0.5 * ric_c * z[:-1]
    w_zb = z[:-1].copy()
    w_strat = 0.5 * (z[:-1] + z[1:])

    xs = np.empty((B, part.size, D))
    us = np.empty((B, part.size, D, d))
    acc = np.zeros((B, 5, d))
    rep = np.empty(B)
    tan = np.empty(B)
    impl = _summaries_nb if _BACKEND == "numba" else _summaries_np
    impl(kind, float(kappa), np.asarray(x0, float), np.asarray(u0, float), dw,
         part, w_ito, w_ric, w_zb, w_strat, xs, us, acc, rep, tan)
    return {
        "xs": xs, "us": us,
        "ito_v": acc[:, 0], "ito_ric": acc[:, 1], "ito_zb": acc[:, 2],
        "strat_zb": acc[:, 3], "beta1": acc[:, 4],
        "rep_max": rep, "tan_max": tan,
        "part_idx": part,
        "scalars": sc,
        "z_part": z[part], "q_part": sc["q"][part], "tau_part": sc["tau"][part],
        "backend": _BACKEND,
    }


def develop_paths(kind: int, kappa: float, x0: np.ndarray, u0: np.ndarray,
                  dw: np.ndarray) -> tuple:
    """Full development of a batch: returns xs (B,n+1,D), us (B,n+1,D,d),
    rep_max (B,), tan_max (B,)."""
    dw = np.ascontiguousarray(dw, dtype=np.float64)
    B, n, d = dw.shape
    D = x0.shape[0]
    xs = np.empty((B, n + 1, D))
    us = np.empty((B, n + 1, D, d))
    rep = np.empty(B)
    tan = np.empty(B)
    impl = _develop_nb if _BACKEND == "numba" else _develop_np
    impl(kind, float(kappa), np.asarray(x0, float), np.asarray(u0, float),
         dw, xs, us, rep, tan)
    return xs, us, rep, tan


def transport_frames(kind: int, kappa: float, xs: np.ndarray, u0: np.ndarray) -> tuple:
    """Horizontal transport of u0 along a single given point path."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    n1, D = xs.shape
    us = np.empty((n1, D, u0.shape[1]))
    diag = np.zeros(2)
    impl = _transport_nb if _BACKEND == "numba" else _transport_np
    impl(kind, float(kappa), xs, np.asarray(u0, float), us, diag)
    return us, float(diag[0]), float(diag[1])
