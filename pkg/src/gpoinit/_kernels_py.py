"""Vectorized numpy implementations of the residual/Jacobian kernels.

These mirror ``_kernels.pyx`` exactly and are used whenever the compiled
extension is unavailable (or ``GPOINIT_PURE_PYTHON=1`` is set).
"""

import numpy as np

from .constants import CAPPED_RESIDUAL_PX, EPS_DEPTH, EPS_POINT_DEPTH


def gpo_linearize(rays, pix, fidx, KR, tau, n, jac=True):
    """Homography-transfer residuals ``pix - pi(KR_f (u - tau_f n.u))``.

    rays  (N, 3) world-frame rays of the reference-frame pixels
    pix   (N, 2) observed pixels in the target frames
    fidx  (N,)   row of KR / tau used by each observation
    KR    (F, 3, 3) K @ R_i per target frame
    tau   (F, 3) scaled translations
    n     (3,)   plane normal

    Returns ``(r, Jn, Jt, bad)``; Jn is taken w.r.t. a left rotation
    increment of the normal (dn = delta x n), Jt w.r.t. tau_f. ``bad`` marks
    transfers with vanishing depth, whose residual is capped and Jacobian
    zeroed.
    """
    s = rays @ n
    w = rays - tau[fidx] * s[:, None]
    KRf = KR[fidx]
    y = np.einsum("nij,nj->ni", KRf, w)
    z = y[:, 2]
    bad = np.abs(z) <= EPS_DEPTH
    zs = np.where(bad, 1.0, z)
    proj = y[:, :2] / zs[:, None]
    r = pix - proj
    r[bad] = CAPPED_RESIDUAL_PX
    if not jac:
        return r, None, None, bad
    iz = 1.0 / zs
    # d pi / d y, shape (N, 2, 3)
    Jpi = np.zeros((len(z), 2, 3))
    Jpi[:, 0, 0] = iz
    Jpi[:, 1, 1] = iz
    Jpi[:, 0, 2] = -proj[:, 0] * iz
    Jpi[:, 1, 2] = -proj[:, 1] * iz
    JpiKR = np.einsum("nij,njk->nik", Jpi, KRf)
    Jt = JpiKR * s[:, None, None]
    a = np.einsum("nij,nj->ni", JpiKR, tau[fidx])
    uxn = np.cross(rays, n)
    Jn = -a[:, :, None] * uxn[:, None, :]
    Jt[bad] = 0.0
    Jn[bad] = 0.0
    return r, Jn, Jt, bad


def ba_linearize(points, lidx, cidx, R, C, pix, fx, fy, cx, cy, jac=True):
    """Reprojection residuals ``pi(K R_c (P_l - C_c)) - pix``.

    Returns ``(r, JP, JC, bad)`` with Jacobians w.r.t. the landmark and the
    camera centre. ``bad`` marks points at non-positive depth.
    """
    Rc = R[cidx]
    x = np.einsum("nij,nj->ni", Rc, points[lidx] - C[cidx])
    z = x[:, 2]
    bad = z <= EPS_POINT_DEPTH
    zs = np.where(bad, 1.0, z)
    iz = 1.0 / zs
    u = x[:, 0] * iz
    v = x[:, 1] * iz
    r = np.column_stack([fx * u + cx, fy * v + cy]) - pix
    r[bad] = CAPPED_RESIDUAL_PX
    if not jac:
        return r, None, None, bad
    Jx = np.zeros((len(z), 2, 3))
    Jx[:, 0, 0] = fx * iz
    Jx[:, 0, 2] = -fx * u * iz
    Jx[:, 1, 1] = fy * iz
    Jx[:, 1, 2] = -fy * v * iz
    JP = np.einsum("nij,njk->nik", Jx, Rc)
    JP[bad] = 0.0
    return r, JP, -JP, bad


def accumulate_normal_equations(J, r, cols, nparams):
    """Scatter per-observation blocks into dense ``A = J^T J`` and ``g = J^T r``.

    J (N, 2, W), r (N, 2), cols (N, W) global column of each local column
    (negative entries are skipped).
    """
    JtJ = np.einsum("nka,nkb->nab", J, J)
    Jtr = np.einsum("nka,nk->na", J, r)
    valid = cols >= 0
    pair = valid[:, :, None] & valid[:, None, :]
    flat = cols[:, :, None] * nparams + cols[:, None, :]
    A = np.bincount(flat[pair], weights=JtJ[pair], minlength=nparams * nparams)
    g = np.bincount(cols[valid], weights=Jtr[valid], minlength=nparams)
    return A.reshape(nparams, nparams), g
