"""Vectorised numpy element kernels.

Shapes used throughout: ``X``/``U`` are local control data ``(E, nl, d)``,
``grads`` are parametric basis gradients ``(E, nq, nl, d)``, ``vals`` are
basis values ``(E, nq, nl)`` and ``weights`` are parametric quadrature
weights ``(E, nq)``.
"""
import numpy as np


def _pullback(X, grads):
    jac = np.einsum("eai,eqam->eqim", X, grads)
    det = np.linalg.det(jac)
    inv = np.linalg.inv(jac)
    g = np.einsum("eqam,eqmi->eqai", grads, inv)
    return det, g


def jacobian_dets(X, grads):
    return np.linalg.det(np.einsum("eai,eqam->eqim", X, grads))


def neohooke(X, U, grads, weights, lam, mu, tangent):
    """Element residuals and tangents of the neo-Hookean weak form.

    Returns ``(r, K, jmin)`` with ``r`` of shape ``(E, nl, d)``, ``K`` of
    shape ``(E, nl*d, nl*d)`` (zeros if ``tangent`` is false) and the
    per-element minimum of ``J = det F``. When some ``J <= 0`` the
    residual is left at zero and only ``jmin`` is meaningful.
    """
    E, nl, d = X.shape
    det0, g = _pullback(X, grads)
    eye = np.eye(d)
    F = eye + np.einsum("eai,eqaj->eqij", U, g)
    J = np.linalg.det(F)
    jmin = J.min(axis=1)
    r = np.zeros((E, nl, d))
    K = np.zeros((E, nl * d, nl * d))
    if np.any(J <= 0.0):
        return r, K, jmin
    Finv = np.linalg.inv(F)
    Ci = np.einsum("eqij,eqkj->eqik", Finv, Finv)
    lnJ = np.log(J)
    S = lam * lnJ[..., None, None] * Ci + mu * (eye - Ci)
    P = np.einsum("eqij,eqjk->eqik", F, S)
    wd = weights * np.abs(det0)
    r = np.einsum("eq,eqij,eqaj->eai", wd, P, g)
    if tangent:
        h = np.einsum("eqji,eqaj->eqai", Finv, g)
        c = mu - lam * lnJ
        M = c[..., None, None] * Ci + S
        geo = np.einsum("eq,eqal,eqln,eqbn->eab", wd, g, M, g)
        Kt = lam * np.einsum("eq,eqai,eqbk->eaibk", wd, h, h)
        Kt += np.einsum("eq,eqbi,eqak->eaibk", wd * c, h, h)
        Kt += geo[:, :, None, :, None] * eye[None, None, :, None, :]
        K = Kt.reshape(E, nl * d, nl * d)
    return r, K, jmin


def linear(X, grads, weights, lam, mu):
    """Element stiffness matrices of linear (Hooke) elasticity on ``X``."""
    E, nl, d = X.shape
    det0, g = _pullback(X, grads)
    wd = weights * np.abs(det0)
    eye = np.eye(d)
    K = lam * np.einsum("eq,eqai,eqbk->eaibk", wd, g, g)
    K += mu * np.einsum("eq,eqak,eqbi->eaibk", wd, g, g)
    gg = np.einsum("eq,eqal,eqbl->eab", wd, g, g)
    K += mu * gg[:, :, None, :, None] * eye[None, None, :, None, :]
    return K.reshape(E, nl * d, nl * d), det0.min(axis=1)


def mass(X, vals, grads, weights):
    jac = np.einsum("eai,eqam->eqim", X, grads)
    wd = weights * np.abs(np.linalg.det(jac))
    return np.einsum("eq,eqa,eqb->eab", wd, vals, vals)
