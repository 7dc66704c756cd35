"""Independent reference computations shared by the tests (sympy and finite differences)."""

import itertools

import numpy as np
import sympy as sp


def sympy_derivatives(text, names, point, order=3):
    """Exact derivative arrays of a sympy-parsed expression (``^`` read as power)."""
    syms = sp.symbols(names)
    f = sp.sympify(text.replace("^", "**"), locals=dict(zip(names, syms)))
    n = len(names)
    sub = dict(zip(syms, point))
    out = [float(f.subs(sub))]
    for deg in range(1, order + 1):
        arr = np.zeros((n,) * deg)
        for idx in itertools.product(range(n), repeat=deg):
            arr[idx] = float(sp.diff(f, *[syms[i] for i in idx]).subs(sub))
        out.append(arr)
    return out


def fd_partial(f, p, idx, h):
    """Nested central difference for the mixed partial over ``idx``."""
    p = np.asarray(p, float)
    if not idx:
        return f(p)
    e = np.zeros_like(p)
    e[idx[0]] = h
    return (fd_partial(f, p + e, idx[1:], h) - fd_partial(f, p - e, idx[1:], h)) / (2 * h)


def fd_richardson(f, p, idx, h=1e-2, levels=3):
    """Romberg table of central differences at ``h, h/2, ...``; error O(h^(2 levels))."""
    row = [fd_partial(f, p, idx, h / 2**m) for m in range(levels)]
    for m in range(1, levels):
        row = [(4**m * row[i + 1] - row[i]) / (4**m - 1) for i in range(len(row) - 1)]
    return row[0]


def sympy_metric_geometry(entries, names, point):
    """Christoffel symbols ``G[k,i,j]`` and ``R[i,j,k,l] = (R(d_i,d_j) d_k)^l`` with R = [nabla_j, nabla_i] + nabla_[,].

    Metric derivatives come from sympy; the contractions are done numerically at
    the point (symbolic inversion of trigonometric matrices is far too slow).
    """
    syms = sp.symbols(names)
    loc = dict(zip(names, syms))
    n = len(names)
    sub = dict(zip(syms, point))
    gs = [[sp.sympify(str(e).replace("^", "**"), locals=loc) for e in row] for row in entries]
    g = np.array([[float(gs[a][b].subs(sub)) for b in range(n)] for a in range(n)])
    dg = np.array([[[float(sp.diff(gs[a][b], syms[m]).subs(sub)) for m in range(n)] for b in range(n)] for a in range(n)])
    ddg = np.array([[[[float(sp.diff(gs[a][b], syms[m], syms[r]).subs(sub)) for r in range(n)] for m in range(n)] for b in range(n)] for a in range(n)])
    gi = np.linalg.inv(g)
    # first kind L[l, i, j] = 1/2 (d_i g_lj + d_j g_li - d_l g_ij); dg[a, b, m] = d_m g_ab
    L = 0.5 * (np.einsum("lji->lij", dg) + np.einsum("lij->lij", dg) - np.einsum("ijl->lij", dg))
    dL = 0.5 * (np.einsum("ljir->lijr", ddg) + np.einsum("lijr->lijr", ddg) - np.einsum("ijlr->lijr", ddg))
    G = np.einsum("kl,lij->kij", gi, L)
    dgi = -np.einsum("ka,abr,bl->klr", gi, dg, gi)
    dG = np.einsum("klr,lij->kijr", dgi, L) + np.einsum("kl,lijr->kijr", gi, dL)  # d_r G[k,i,j]
    R = np.zeros((n,) * 4)
    for i, j, k, l in itertools.product(range(n), repeat=4):
        std = dG[l, j, k, i] - dG[l, i, k, j] + G[l, i, :] @ G[:, j, k] - G[l, j, :] @ G[:, i, k]
        R[i, j, k, l] = -std
    return G, R
