"""Derivative-free Nelder-Mead simplex descent.

Small, deterministic implementation so the design optimizer has exact
control over the convergence rule (relative spread of the simplex values)
and over tie-breaking. Works on plain float vectors.
"""

import numpy as np


def minimize_simplex(fn, x0, steps, rel_tol: float = 1e-6, max_iter: int = 500):
    """Minimize fn(x) from x0 with per-axis initial steps.

    fn returns a finite float (callers encode constraint violations as
    large finite penalties). Iterates until the value spread across the
    simplex satisfies (worst - best) <= rel_tol * (|best| + tiny) or
    max_iter iterations have run. Returns (x_best, f_best, n_eval).
    Fully deterministic; ties are broken by vertex order.
    """
    x0 = np.asarray(x0, dtype=float)
    steps = np.asarray(steps, dtype=float)
    ndim = x0.size
    if ndim == 0:
        return x0, float(fn(x0)), 1

    verts = [x0.copy()]
    for i in range(ndim):
        v = x0.copy()
        v[i] += steps[i] if steps[i] != 0.0 else 1.0
        verts.append(v)
    vals = [float(fn(v)) for v in verts]
    n_eval = len(verts)

    tiny = 1e-300
    for _ in range(max_iter):
        order = sorted(range(ndim + 1), key=lambda i: (vals[i], i))
        verts = [verts[i] for i in order]
        vals = [vals[i] for i in order]
        if vals[-1] - vals[0] <= rel_tol * (abs(vals[0]) + tiny):
            break

        centroid = np.mean(verts[:-1], axis=0)
        xr = centroid + (centroid - verts[-1])
        fr = float(fn(xr))
        n_eval += 1
        if fr < vals[0]:
            xe = centroid + 2.0 * (centroid - verts[-1])
            fe = float(fn(xe))
            n_eval += 1
            if fe < fr:
                verts[-1], vals[-1] = xe, fe
            else:
                verts[-1], vals[-1] = xr, fr
        elif fr < vals[-2]:
            verts[-1], vals[-1] = xr, fr
        else:
            xc = centroid + 0.5 * (verts[-1] - centroid)
            fc = float(fn(xc))
            n_eval += 1
            if fc < vals[-1]:
                verts[-1], vals[-1] = xc, fc
            else:
                for i in range(1, ndim + 1):
                    verts[i] = verts[0] + 0.5 * (verts[i] - verts[0])
                    vals[i] = float(fn(verts[i]))
                n_eval += ndim

    best = min(range(ndim + 1), key=lambda i: (vals[i], i))
    return verts[best].copy(), vals[best], n_eval
