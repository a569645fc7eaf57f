"""Pure-Python (numpy) implementation of the hot kernels.

Interface mirrors the compiled ``_kernels`` module exactly.
"""

import numpy as np

PHI_FLOOR = 1e-6


def mos_stamp(sign, beta, vto, gamma, phi, lam, nd, ng, ns, nb, gmin, x, G, rhs,
              out_id, out_region, out_swap):
    """Evaluate every MOSFET at ``x`` and add its linearized stamp to G and rhs.

    ``x``, ``G`` and ``rhs`` include the ground row/column at index 0.  Regions
    are encoded 0 cutoff, 1 triode, 2 saturation.
    """
    vd, vg, vs, vb = x[nd], x[ng], x[ns], x[nb]
    vds = sign * (vd - vs)
    swap = vds < 0.0
    # reflected, drain/source-ordered terminal voltages
    vref = np.where(swap, vd, vs)
    vgs = sign * (vg - vref)
    vbs = sign * (vb - vref)
    vds = np.abs(vds)

    arg = phi - vbs
    clamped = arg <= PHI_FLOOR
    root = np.sqrt(np.where(clamped, PHI_FLOOR, arg))
    vt = vto + gamma * (root - np.sqrt(phi))
    dvt = np.where(clamped, 0.0, -gamma / (2.0 * root))
    vov = vgs - vt
    on = vov > 0.0
    sat = vds >= vov
    clm = 1.0 + lam * vds

    core_t = beta * (vov * vds - 0.5 * vds * vds)
    core_s = 0.5 * beta * vov * vov
    core = np.where(sat, core_s, core_t)
    gm = np.where(sat, beta * vov, beta * vds) * clm
    gds = np.where(sat, 0.0, beta * (vov - vds) * clm) + core * lam
    core = np.where(on, core * clm, 0.0)
    gm = np.where(on, gm, 0.0)
    gds = np.where(on, gds, 0.0) + gmin
    gmb = -gm * dvt
    ide = core + gmin * vds

    # back to terminal frame: d id / d v_terminal
    s_i = np.where(swap, -sign, sign)
    gtot = gm + gds + gmb
    dg = np.where(swap, -gm, gm)
    db = np.where(swap, -gmb, gmb)
    dd = np.where(swap, gtot, gds)
    dsrc = np.where(swap, -gds, -gtot)
    i_d = s_i * ide
    ieq = i_d - (dd * vd + dg * vg + dsrc * vs + db * vb)

    n1 = G.shape[0]
    rows = np.concatenate([nd, nd, nd, nd, ns, ns, ns, ns])
    cols = np.concatenate([nd, ng, ns, nb, nd, ng, ns, nb])
    vals = np.concatenate([dd, dg, dsrc, db, -dd, -dg, -dsrc, -db])
    G += np.bincount(rows * n1 + cols, vals, minlength=n1 * n1).reshape(n1, n1)
    rhs -= np.bincount(nd, ieq, minlength=n1)
    rhs += np.bincount(ns, ieq, minlength=n1)

    out_id[:] = i_d
    out_region[:] = np.where(on, np.where(sat, 2, 1), 0)
    out_swap[:] = swap


def solve(A, b):
    """Solve ``A x = b`` (LAPACK LU with partial pivoting)."""
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise ZeroDivisionError("singular matrix") from None
    if not np.all(np.isfinite(x)):
        raise ZeroDivisionError("singular matrix")
    return x
