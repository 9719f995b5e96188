"""Pure numpy implementation of the cell-propagation kernel.

Each cell carries six real moments of the coefficients,

    P0 = int 1/p,  P1 = (1/h) int (x - mid)/p,   likewise Q0, Q1 for q and R0, R1 for r,

from which the fourth-order Magnus exponent of ``Y' = [[0, 1/p], [q - z r, 0]] Y``
is ``Omega = [[d, P0], [c0, -d]]`` with ``c0 = Q0 - z R0``, ``c1 = Q1 - z R1`` and
``d = P1 c0 - P0 c1``.  Because ``Omega`` is traceless, ``exp(Omega)`` is
``cosh(s) I + sinh(s)/s Omega`` with ``s**2 = d**2 + P0 c0``.  Magnitudes are
kept in log form: every step matrix is scaled by ``exp(-Re s)``.

Products over cells are formed with a Hillis-Steele prefix scan so that the
work is vectorised over cells and spectral parameters at once.
"""
from __future__ import annotations

import numpy as np

_SERIES_CUT = 1e-6


def step_matrices(P0, P1, Q0, Q1, R0, R1, zs, inverse: bool = False):
    """Scaled step matrices ``exp(+-Omega) * exp(-g)`` and their log scales ``g``.

    Returns ``E`` of shape ``(nz, n, 2, 2)``, ``g`` of shape ``(nz, n)`` and the
    exponent data ``(d, P0, c0, s2)`` used for zero counting.
    """
    zs = np.asarray(zs, complex)[:, None]
    c0 = Q0[None, :] - zs * R0[None, :]
    c1 = Q1[None, :] - zs * R1[None, :]
    d = P1[None, :] * c0 - P0[None, :] * c1
    p0 = np.broadcast_to(P0[None, :], c0.shape)
    s2 = d * d + p0 * c0
    s = np.sqrt(s2)
    s = np.where(s.real < 0, -s, s)
    g = s.real
    ep = np.exp(1j * s.imag)                  # exp(s - g)
    # exp(-s - g) = conj(ep) (1 + expm1(-2g)); the split keeps tiny real parts
    # of s, which carry complex-step derivative information
    half_m = 0.5 * np.expm1(-2.0 * g) * np.conj(ep)
    ch = ep.real + half_m
    small = np.abs(s2) < _SERIES_CUT
    with np.errstate(divide="ignore", invalid="ignore"):
        sh = np.where(small, 0.0, (1j * ep.imag - half_m) / s)
    sh_series = (1.0 + s2 / 6.0 + s2 * s2 / 120.0) * np.exp(-g)
    sh = np.where(small, sh_series, sh)
    sign = -1.0 if inverse else 1.0
    E = np.empty(c0.shape + (2, 2), complex)
    E[..., 0, 0] = ch + sign * sh * d
    E[..., 0, 1] = sign * sh * p0
    E[..., 1, 0] = sign * sh * c0
    E[..., 1, 1] = ch - sign * sh * d
    return E, g, (d, p0, c0, s2)


def _normalise(M, logs):
    scale = np.max(np.abs(M.reshape(M.shape[:-2] + (-1,))), axis=-1)
    scale = np.where(scale > 0, scale, 1.0)
    return M / scale[..., None, None], logs + np.log(scale)


def prefix_products(E, g):
    """Inclusive prefix products ``E[k] @ ... @ E[0]`` along axis 1 (log-scaled)."""
    P = E.copy()
    logs = g.copy()
    n = P.shape[1]
    step = 1
    while step < n:
        newP = P.copy()
        newP[:, step:] = P[:, step:] @ P[:, :-step]
        newlogs = logs.copy()
        newlogs[:, step:] = logs[:, step:] + logs[:, :-step]
        P, logs = _normalise(newP, newlogs)
        step *= 2
    return P, logs


def _count_zeros(u0, v0, u1, d, p0, c0, s2):
    """Zeros of the first component in each cell, start excluded, end included."""
    u0 = u0.real
    v0 = v0.real
    u1 = u1.real
    d = d.real
    p0 = p0.real
    s2 = s2.real
    osc = s2 < 0
    omega = np.sqrt(np.where(osc, -s2, 1.0))
    B = (d * u0 + p0 * v0) / omega
    phi = np.arctan2(B, u0)
    n_osc = np.floor((omega - phi - 0.5 * np.pi) / np.pi) - np.floor((-phi - 0.5 * np.pi) / np.pi)
    n_mono = ((u0 > 0) & (u1 <= 0)) | ((u0 < 0) & (u1 >= 0))
    return np.where(osc, n_osc, n_mono.astype(float)).astype(np.int64)


def transfer(P0, P1, Q0, Q1, R0, R1, zs):
    """Transfer matrices over all cells for each ``z`` in ``zs``.

    Returns ``(T, logs, counts)``: ``T`` mantissas ``(nz, 2, 2)`` with
    ``Y(L) = exp(logs) T Y(0)``, and zeros in ``(0, L]`` of the first components of
    the columns started from ``(1, 0)`` and ``(0, 1)`` (``-1`` for complex ``z``).
    """
    zs = np.atleast_1d(np.asarray(zs, complex))
    nz = zs.size
    n = P0.size
    E, g, (d, p0, c0, s2) = step_matrices(P0, P1, Q0, Q1, R0, R1, zs)
    pref, logs = prefix_products(E, g)
    T = pref[:, -1]
    Tlog = logs[:, -1]
    counts = np.full((nz, 2), -1, dtype=np.int64)
    real = zs.imag == 0
    if np.any(real):
        # node states of both columns: Y_k = pref[k-1] Y_0 (mantissas suffice for signs)
        I = np.broadcast_to(np.eye(2, dtype=complex), (nz, 1, 2, 2))
        nodes = np.concatenate([I, pref[:, :-1]], axis=1)[real]
        nxt = pref[real]
        for col in range(2):
            u0 = nodes[..., 0, col]
            v0 = nodes[..., 1, col]
            u1 = nxt[..., 0, col]
            cnt = _count_zeros(u0, v0, u1, d[real], p0[real], c0[real], s2[real])
            counts[real, col] = cnt.sum(axis=1)
    return T, Tlog, counts


def propagate(P0, P1, Q0, Q1, R0, R1, z, y0, reverse: bool = False):
    """Node values of the solution with ``Y = y0`` at the first (or last) node.

    Returns ``(Y, logs)`` with ``Y`` of shape ``(n + 1, 2)`` holding mantissas and
    ``logs`` the per-node log scale.
    """
    n = P0.size
    y0 = np.asarray(y0, complex)
    E, g, _ = step_matrices(P0, P1, Q0, Q1, R0, R1, np.array([z]), inverse=reverse)
    if reverse:
        E = E[:, ::-1]
        g = g[:, ::-1]
    pref, logs = prefix_products(E, g)
    Y = np.empty((n + 1, 2), complex)
    L = np.empty(n + 1)
    Y[0] = y0
    L[0] = 0.0
    Y[1:] = pref[0] @ y0
    L[1:] = logs[0]
    scale = np.max(np.abs(Y), axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    Y /= scale[:, None]
    L += np.log(scale)
    if reverse:
        Y = Y[::-1].copy()
        L = L[::-1].copy()
    return Y, L
