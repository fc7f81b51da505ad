"""Bivariate polynomials in a monomial basis, batched over elements.

Element bases are represented by coefficient arrays over the monomials
``xi**i * eta**j`` of the scaled local coordinates ``xi = (x - c_T) / h_T``,
``eta = (y - c_T) / h_T``.  The ordering of monomials is by total degree,
then by decreasing power of ``xi``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def exponents(degree: int) -> tuple:
    return tuple((n - j, j) for n in range(degree + 1) for j in range(n + 1))


def n_monomials(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def _index(degree: int) -> dict:
    return {e: i for i, e in enumerate(exponents(degree))}


def eval_monomials(xi, eta, degree):
    """Values of all monomials, shape ``xi.shape + (n_monomials,)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    px = [np.ones_like(xi)]
    py = [np.ones_like(eta)]
    for _ in range(degree):
        px.append(px[-1] * xi)
        py.append(py[-1] * eta)
    return np.stack([px[i] * py[j] for i, j in exponents(degree)], axis=-1)


def eval_monomial_grads(xi, eta, degree):
    """Derivatives w.r.t. (xi, eta), shape ``xi.shape + (n_monomials, 2)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    px = [np.ones_like(xi)]
    py = [np.ones_like(eta)]
    for _ in range(degree):
        px.append(px[-1] * xi)
        py.append(py[-1] * eta)
    zero = np.zeros_like(xi)
    out = []
    for i, j in exponents(degree):
        dx = i * px[i - 1] * py[j] if i > 0 else zero
        dy = j * px[i] * py[j - 1] if j > 0 else zero
        out.append(np.stack([dx, dy], axis=-1))
    return np.stack(out, axis=-2)


def embed(coef, degree_from, degree_to):
    """Re-express coefficients over the monomials of a higher degree."""
    coef = np.asarray(coef)
    if degree_to == degree_from:
        return coef
    out = np.zeros(coef.shape[:-1] + (n_monomials(degree_to),))
    out[..., : n_monomials(degree_from)] = coef
    return out


@lru_cache(maxsize=None)
def _product_table(da: int, db: int):
    idx = _index(da + db)
    ea, eb = exponents(da), exponents(db)
    table = np.empty((len(ea), len(eb)), dtype=int)
    for a, (i1, j1) in enumerate(ea):
        for b, (i2, j2) in enumerate(eb):
            table[a, b] = idx[(i1 + i2, j1 + j2)]
    return table


def multiply(a, da, b, db):
    """Product of batched polynomials ``a`` (deg da) and ``b`` (deg db).

    Leading dimensions broadcast; the result has degree ``da + db``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    table = _product_table(da, db)
    lead = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(lead + (n_monomials(da + db),))
    prod = a[..., :, None] * b[..., None, :]
    prod = np.broadcast_to(prod, lead + table.shape)
    flat_out = out.reshape(-1, out.shape[-1])
    flat_prod = prod.reshape(-1, table.size)
    for col, target in enumerate(table.ravel()):
        flat_out[:, target] += flat_prod[:, col]
    return out


def homogeneous_indices(degree: int) -> np.ndarray:
    """Indices of the monomials of exact total degree ``degree``."""
    start = n_monomials(degree - 1) if degree > 0 else 0
    return np.arange(start, n_monomials(degree))


def legendre_on_unit(s, n):
    """Shifted Legendre polynomials P_i(2s - 1), i < n; shape ``s.shape + (n,)``."""
    s = np.asarray(s, dtype=float)
    x = 2.0 * s - 1.0
    out = [np.ones_like(x)]
    if n > 1:
        out.append(x)
    for i in range(2, n):
        out.append(((2 * i - 1) * x * out[-1] - (i - 1) * out[-2]) / i)
    return np.stack(out[:n], axis=-1)


@lru_cache(maxsize=None)
def _derivative_table(degree: int, axis: int):
    idx = _index(max(degree - 1, 0))
    rows, cols, vals = [], [], []
    for a, (i, j) in enumerate(exponents(degree)):
        p = (i, j)[axis]
        if p == 0:
            continue
        e = (i - 1, j) if axis == 0 else (i, j - 1)
        rows.append(a)
        cols.append(idx[e])
        vals.append(float(p))
    return np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(vals)


def derivative(coef, degree, axis):
    """Partial derivative w.r.t. xi (axis 0) or eta (axis 1); degree drops by one."""
    coef = np.asarray(coef, dtype=float)
    rows, cols, vals = _derivative_table(degree, axis)
    out = np.zeros(coef.shape[:-1] + (n_monomials(max(degree - 1, 0)),))
    for r, c, v in zip(rows, cols, vals):
        out[..., c] += v * coef[..., r]
    return out
