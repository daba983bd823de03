"""Shared random-problem generators for the test suite.

All generators take a numpy Generator so tests stay reproducible.
"""

from __future__ import annotations

import numpy as np

from spsd.linalg import CharPoly, companion_matrix


def random_stable_coeffs(rng, l, rmin=0.15, rmax=0.85):
    """Monic real polynomial of degree l with root moduli in [rmin, rmax]."""
    roots = []
    remaining = l
    while remaining > 0:
        radius = rng.uniform(rmin, rmax)
        if remaining >= 2 and rng.random() < 0.5:
            angle = rng.uniform(0.2, np.pi - 0.2)
            z = radius * np.exp(1j * angle)
            roots += [z, np.conj(z)]
            remaining -= 2
        else:
            roots.append(radius * rng.choice([-1.0, 1.0]))
            remaining -= 1
    coeffs = np.poly(np.array(roots)).real
    return CharPoly(l, coeffs[1:])


def random_standard_cm(rng, l, **kw):
    """Random companion matrix with spectrum strictly inside the unit disc."""
    return companion_matrix(random_stable_coeffs(rng, l, **kw))


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.normal(size=(n, n)))
    return Q * np.sign(np.diag(R))


def random_cm_matrix(rng, n, **kw):
    """Random dense matrix with eigenvalue moduli strictly in (0, 1)."""
    B = random_standard_cm(rng, n, **kw)
    Q = random_orthogonal(rng, n)
    return Q @ B @ Q.T


def random_upper_cm_hessenberg(rng, n, **kw):
    """Random upper Hessenberg matrix with nonzero subdiagonal in the disc.

    Built as D B D^{-1} with B a companion matrix and D upper triangular,
    which preserves both the Hessenberg structure and the spectrum.
    """
    B = random_standard_cm(rng, n, **kw)
    D = np.triu(rng.uniform(-0.5, 0.5, size=(n, n)))
    np.fill_diagonal(D, rng.uniform(0.5, 2.0, size=n) * rng.choice([-1.0, 1.0], size=n))
    Dinv = np.linalg.inv(D)
    C = D @ B @ Dinv
    # structural zeros below the subdiagonal are exact by construction,
    # up to roundoff from the inverse; snap them
    for j in range(n - 2):
        C[j + 2 :, j] = 0.0
    return C


def random_psd(rng, n, rank=None, scale=1.0):
    r = n if rank is None else rank
    G = rng.normal(size=(n, r))
    return scale * (G @ G.T)


def stein_residual(A, sigma, rhs):
    """Frobenius norm of A sigma A^T - sigma + rhs."""
    return float(np.linalg.norm(A @ sigma @ A.T - sigma + rhs))
