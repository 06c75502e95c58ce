"""Explicit dense-product references for short chains.

These form B_N directly and are only meaningful while B_N stays well inside
floating-point range (n <= 6, N <= 8 or so).  They share no code with the
renormalized recursions in :mod:`lyaprod.chain`.
"""

import numpy as np


def product(mats):
    """B_N = A_N ... A_1 for mats = [A_1, ..., A_N]."""
    B = np.eye(mats.shape[1])
    for a in mats:
        B = a @ B
    return B


def log_norm_image(mats, x0):
    x0 = np.asarray(x0, dtype=float)
    return float(np.log(np.linalg.norm(product(mats) @ (x0 / np.linalg.norm(x0)))))


def log_wedge_image(mats, x0, y0):
    """log area of (B x0, B y0) for unit x0, y0, as |R_11 R_22| of a dense QR.

    The Gram form |u|^2 |v|^2 - <u, v>^2 cancels catastrophically once B
    squeezes the pair together; Householder QR keeps full relative accuracy.
    """
    B = product(mats)
    u = B @ (x0 / np.linalg.norm(x0))
    v = B @ (y0 / np.linalg.norm(y0))
    r = np.linalg.qr(np.column_stack([u, v]), mode="r")
    with np.errstate(divide="ignore"):
        return float(np.log(abs(r[0, 0])) + np.log(abs(r[1, 1])))


def log_abs_det(mats):
    sign, logdet = np.linalg.slogdet(product(mats))
    return float(logdet) if sign != 0 else -np.inf


def log_last_column_distance(mats):
    """log dist(B e_n, span(B e_1, ..., B e_{n-1})) by least-squares projection."""
    B = product(mats)
    H, c = B[:, :-1], B[:, -1]
    coef, *_ = np.linalg.lstsq(H, c, rcond=None)
    return float(np.log(np.linalg.norm(c - H @ coef)))
