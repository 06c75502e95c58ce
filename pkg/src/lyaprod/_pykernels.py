"""Pure numpy implementations of the chain and LCD inner loops.

Same contract as the compiled ``_ckernels`` module: every function advances
its state arrays in place over one batch of matrices and reports how many
steps completed.  A step "collapses" (the chain dies) when the quantity whose
log would be accumulated is at most ``rtol * ||A||_F``.
"""

import math

import numpy as np


def top_steps(mats, fro, x, out, every, count, rtol):
    """Advance a single vector; returns (steps, n_out, count, died)."""
    n_out = 0
    xn = math.sqrt(float(x @ x))
    for s in range(mats.shape[0]):
        y = mats[s] @ x
        ny = math.sqrt(float(y @ y))
        if ny <= rtol * fro[s] * xn:
            return s, n_out, count, True
        x[:] = y
        xn = ny
        count += 1
        if count >= every or ny > 1e100 or ny < 1e-100:
            out[n_out] = math.log(ny)
            n_out += 1
            x /= ny
            xn = 1.0
            count = 0
    return mats.shape[0], n_out, count, False


def pair_steps(mats, fro, frame, out, rtol):
    """Advance an orthonormal pair (rows of ``frame``); out[s] = log area ratio."""
    for s in range(mats.shape[0]):
        u = mats[s] @ frame[0]
        v = mats[s] @ frame[1]
        nu = math.sqrt(float(u @ u))
        if nu <= rtol * fro[s]:
            return s, True
        u /= nu
        v -= (u @ v) * u
        v -= (u @ v) * u
        nv = math.sqrt(float(v @ v))
        if nv <= rtol * fro[s]:
            return s, True
        out[s] = math.log(nu) + math.log(nv)
        frame[0] = u
        frame[1] = v / nv
    return mats.shape[0], False


def _qr_frame(m):
    """Orthonormalize the rows of m; returns (rows of Q, positive diag of R)."""
    q, r = np.linalg.qr(m.T)
    d = np.diag(r).copy()
    sign = np.where(d < 0, -1.0, 1.0)
    return (q * sign).T, np.abs(d)


def qr_steps(mats, fro, frame, out, rtol):
    """Benettin step on a k-frame (rows of ``frame``); out[s, j] = log R_jj."""
    for s in range(mats.shape[0]):
        m = frame @ mats[s].T
        q, d = _qr_frame(m)
        if np.any(d <= rtol * fro[s]):
            return s, True
        out[s] = np.log(d)
        frame[:] = q
    return mats.shape[0], False


def complement(frame):
    """Unit vector orthogonal to the n-1 orthonormal rows of ``frame``."""
    n = frame.shape[1]
    q, _ = np.linalg.qr(frame.T, mode="complete")
    return q[:, n - 1]


def least_steps(mats, fro, frame, out, rtol):
    """Distance recursion: out[s] = log(1 / ||A^-T v||), v normal to the frame.

    A^-T v is normal to span(A frame), so 1 / ||A^-T v|| is the distance of
    A v from that span.
    """
    for s in range(mats.shape[0]):
        a = mats[s]
        v = complement(frame)
        try:
            z = np.linalg.solve(a.T, v)
        except np.linalg.LinAlgError:
            return s, True
        nz = math.sqrt(float(z @ z))
        if not math.isfinite(nz) or 1.0 / nz <= rtol * fro[s]:
            return s, True
        q, d = _qr_frame(frame @ a.T)
        if np.any(d <= rtol * fro[s]):
            return s, True
        out[s] = -math.log(nz)
        frame[:] = q
    return mats.shape[0], False


def lcd_scan(x, gamma, kappa, step, i_start, i_stop):
    """First i in [i_start, i_stop) with theta = i*step admissible, else -1."""
    xx = float(x @ x)
    chunk = max(1, 2**16 // max(1, x.shape[0]))
    for lo in range(i_start, i_stop, chunk):
        hi = min(i_stop, lo + chunk)
        theta = np.arange(lo, hi, dtype=np.float64) * step
        tx = theta[:, None] * x[None, :]
        d2 = ((tx - np.rint(tx)) ** 2).sum(axis=1)
        bound = np.minimum(gamma * gamma * theta * theta * xx, kappa * kappa)
        hit = np.flatnonzero(d2 < bound)
        if hit.size:
            return lo + int(hit[0])
    return -1
