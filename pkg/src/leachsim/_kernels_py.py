"""Pure numpy fallback for the compiled stencil kernels.

Same algorithm and return conventions as ``_kernels.pyx``; results agree
to rounding, not bitwise.
"""

import numpy as np


def stencil_apply(fx, fy, fz, diag, x, out=None):
    acc = diag * x
    for axis, f in enumerate((fx, fy, fz)):
        acc += f * (x - np.roll(x, 1, axis=axis))
        acc += np.roll(f, -1, axis=axis) * (x - np.roll(x, -1, axis=axis))
    if out is None:
        return acc
    out[...] = acc
    return out


def stencil_pcg(fx, fy, fz, diag, b, x, tol, maxiter, null=None):
    dinv = diag + fx + np.roll(fx, -1, axis=0) + fy + np.roll(fy, -1, axis=1) \
        + fz + np.roll(fz, -1, axis=2)
    dinv = 1.0 / dinv
    bnorm = float(np.sqrt(np.vdot(b, b)))
    if bnorm == 0.0:
        x[...] = 0.0
        return 0, 0.0, 0
    r = b - stencil_apply(fx, fy, fz, diag, x)
    rnorm = float(np.sqrt(np.vdot(r, r)))
    it = 0
    status = 1
    if rnorm <= tol * bnorm:
        status = 0
    else:
        z = dinv * r
        p = z.copy()
        rz = float(np.vdot(r, z))
        while it < maxiter:
            it += 1
            q = stencil_apply(fx, fy, fz, diag, p)
            pq = float(np.vdot(p, q))
            if not pq > 0.0:
                status = 2
                break
            alpha = rz / pq
            x += alpha * p
            r -= alpha * q
            rnorm = float(np.sqrt(np.vdot(r, r)))
            if np.isnan(rnorm):
                status = 2
                break
            if rnorm <= tol * bnorm:
                status = 0
                break
            z = dinv * r
            rz_new = float(np.vdot(r, z))
            p = z + (rz_new / rz) * p
            rz = rz_new
    if null is not None:
        x -= float(np.vdot(null, x)) * null
    return it, rnorm / bnorm, status
