"""Compiled element kernels; same contracts as ``_kernels_numpy``."""
import numpy as np
from numba import njit, prange

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def _det(a):
    if a.shape[0] == 2:
        return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    return (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))


@njit(**_OPTS)
def _inv(a, det, out):
    if a.shape[0] == 2:
        out[0, 0] = a[1, 1] / det
        out[0, 1] = -a[0, 1] / det
        out[1, 0] = -a[1, 0] / det
        out[1, 1] = a[0, 0] / det
        return
    out[0, 0] = (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]) / det
    out[0, 1] = (a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]) / det
    out[0, 2] = (a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]) / det
    out[1, 0] = (a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]) / det
    out[1, 1] = (a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]) / det
    out[1, 2] = (a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]) / det
    out[2, 0] = (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]) / det
    out[2, 1] = (a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]) / det
    out[2, 2] = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]) / det


@njit(**_OPTS)
def _pullback_point(Xe, ge, jac, inv, g):
    """Physical gradients ``g`` at one quadrature point; returns det."""
    nl, d = Xe.shape
    for i in range(d):
        for m in range(d):
            s = 0.0
            for a in range(nl):
                s += Xe[a, i] * ge[a, m]
            jac[i, m] = s
    det0 = _det(jac)
    _inv(jac, det0, inv)
    for a in range(nl):
        for i in range(d):
            s = 0.0
            for m in range(d):
                s += ge[a, m] * inv[m, i]
            g[a, i] = s
    return det0


@njit(parallel=True, **_OPTS)
def jacobian_dets(X, grads):
    E, nq, nl, d = grads.shape
    out = np.empty((E, nq))
    for e in prange(E):
        jac = np.empty((d, d))
        for q in range(nq):
            for i in range(d):
                for m in range(d):
                    s = 0.0
                    for a in range(nl):
                        s += X[e, a, i] * grads[e, q, a, m]
                    jac[i, m] = s
            out[e, q] = _det(jac)
    return out


@njit(parallel=True, **_OPTS)
def neohooke(X, U, grads, weights, lam, mu, tangent):
    E, nq, nl, d = grads.shape
    nd = nl * d
    r = np.zeros((E, nl, d))
    K = np.zeros((E, nd, nd)) if tangent else np.zeros((E, 0, 0))
    jmin = np.empty(E)
    for e in prange(E):
        jac = np.empty((d, d))
        inv = np.empty((d, d))
        g = np.empty((nl, d))
        h = np.empty((nl, d))
        F = np.empty((d, d))
        Finv = np.empty((d, d))
        Ci = np.empty((d, d))
        S = np.empty((d, d))
        P = np.empty((d, d))
        M = np.empty((d, d))
        Mg = np.empty((nl, d))
        # first pass: J only, so folded elements are reported without log()
        jm = np.inf
        for q in range(nq):
            _pullback_point(X[e], grads[e, q], jac, inv, g)
            for i in range(d):
                for j in range(d):
                    s = 1.0 if i == j else 0.0
                    for a in range(nl):
                        s += U[e, a, i] * g[a, j]
                    F[i, j] = s
            J = _det(F)
            if J < jm:
                jm = J
        jmin[e] = jm
        if jm <= 0.0:
            continue
        for q in range(nq):
            det0 = _pullback_point(X[e], grads[e, q], jac, inv, g)
            wd = weights[e, q] * abs(det0)
            for i in range(d):
                for j in range(d):
                    s = 1.0 if i == j else 0.0
                    for a in range(nl):
                        s += U[e, a, i] * g[a, j]
                    F[i, j] = s
            J = _det(F)
            _inv(F, J, Finv)
            lnJ = np.log(J)
            for i in range(d):
                for j in range(d):
                    s = 0.0
                    for k in range(d):
                        s += Finv[i, k] * Finv[j, k]
                    Ci[i, j] = s
            for i in range(d):
                for j in range(d):
                    S[i, j] = lam * lnJ * Ci[i, j] + mu * ((1.0 if i == j else 0.0) - Ci[i, j])
            for i in range(d):
                for j in range(d):
                    s = 0.0
                    for k in range(d):
                        s += F[i, k] * S[k, j]
                    P[i, j] = s
            for a in range(nl):
                for i in range(d):
                    s = 0.0
                    for j in range(d):
                        s += P[i, j] * g[a, j]
                    r[e, a, i] += wd * s
            if not tangent:
                continue
            c = mu - lam * lnJ
            for a in range(nl):
                for i in range(d):
                    s = 0.0
                    for j in range(d):
                        s += Finv[j, i] * g[a, j]
                    h[a, i] = s
            for i in range(d):
                for j in range(d):
                    M[i, j] = c * Ci[i, j] + S[i, j]
            for a in range(nl):
                for n in range(d):
                    s = 0.0
                    for l in range(d):
                        s += g[a, l] * M[l, n]
                    Mg[a, n] = s
            for a in range(nl):
                for b in range(nl):
                    geo = 0.0
                    for n in range(d):
                        geo += Mg[a, n] * g[b, n]
                    for i in range(d):
                        row = a * d + i
                        for k in range(d):
                            v = lam * h[a, i] * h[b, k] + c * h[b, i] * h[a, k]
                            if i == k:
                                v += geo
                            K[e, row, b * d + k] += wd * v
    return r, K, jmin


@njit(parallel=True, **_OPTS)
def linear(X, grads, weights, lam, mu):
    E, nq, nl, d = grads.shape
    nd = nl * d
    K = np.zeros((E, nd, nd))
    dmin = np.empty(E)
    for e in prange(E):
        jac = np.empty((d, d))
        inv = np.empty((d, d))
        g = np.empty((nl, d))
        dm = np.inf
        for q in range(nq):
            det0 = _pullback_point(X[e], grads[e, q], jac, inv, g)
            if det0 < dm:
                dm = det0
            wd = weights[e, q] * abs(det0)
            for a in range(nl):
                for b in range(nl):
                    gg = 0.0
                    for l in range(d):
                        gg += g[a, l] * g[b, l]
                    for i in range(d):
                        row = a * d + i
                        for k in range(d):
                            v = lam * g[a, i] * g[b, k] + mu * g[a, k] * g[b, i]
                            if i == k:
                                v += mu * gg
                            K[e, row, b * d + k] += wd * v
        dmin[e] = dm
    return K, dmin


@njit(parallel=True, **_OPTS)
def mass(X, vals, grads, weights):
    E, nq, nl, d = grads.shape
    out = np.zeros((E, nl, nl))
    for e in prange(E):
        jac = np.empty((d, d))
        for q in range(nq):
            for i in range(d):
                for m in range(d):
                    s = 0.0
                    for a in range(nl):
                        s += X[e, a, i] * grads[e, q, a, m]
                    jac[i, m] = s
            wd = weights[e, q] * abs(_det(jac))
            for a in range(nl):
                for b in range(nl):
                    out[e, a, b] += wd * vals[e, q, a] * vals[e, q, b]
    return out
