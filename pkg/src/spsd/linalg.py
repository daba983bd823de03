"""Dense matrix kernels and canonical-form machinery.

Everything here works on plain ``numpy`` float64 arrays. Public index
arguments and reported index sets are 1-based (first coordinate is 1),
matching the usual linear-algebra convention; slicing internally is 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, SingularMatrixError, SpectrumError, UsageError

__all__ = [
    "CharPoly",
    "SpectralSplit",
    "StandardizerResult",
    "UnitDiscReport",
    "char_poly",
    "companion_matrix",
    "contraction_matrix",
    "eigen_moduli_in_unit_disc",
    "hessenberg_standardizer",
    "solve_linear_system",
    "solve_triangular_system",
    "symmetric_eigendecomposition",
    "toeplitz_symmetric",
    "unit_diag",
]

#: Relative pivot threshold below which a linear system counts as singular.
PIVOT_RTOL = 1e-13

#: Relative numerical-rank threshold for symmetric eigendecompositions.
RANK_RTOL = 1e-10


def as_square(A, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite, square, float64 2-d array or raise UsageError."""
    M = np.asarray(A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise UsageError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise UsageError(f"{name} has non-finite entries")
    return M


def unit_diag(n: int, position: int) -> np.ndarray:
    """n x n matrix with a single 1 on the diagonal at `position` (1-based)."""
    if not 1 <= position <= n:
        raise UsageError(f"position must be in 1..{n}, got {position}")
    E = np.zeros((n, n))
    E[position - 1, position - 1] = 1.0
    return E


@dataclass(frozen=True, eq=False)
class CharPoly:
    """Monic characteristic polynomial lambda^l + sum a_i lambda^(l-i).

    `coefficients` holds (a_1, ..., a_l); the leading 1 is implicit.
    """

    degree: int
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.degree,):
            raise UsageError(
                f"need {self.degree} coefficients, got shape {c.shape}"
            )
        object.__setattr__(self, "coefficients", c)

    def evaluate(self, lam: complex) -> complex:
        acc = complex(1.0)
        for a in self.coefficients:
            acc = acc * lam + a
        return acc


def char_poly(A) -> CharPoly:
    """Characteristic polynomial by the Faddeev-LeVerrier recurrence.

    Chosen over root-finding because downstream consumers need the
    coefficients themselves, not the spectrum. Exact for integer matrices up
    to rounding.
    """
    A = as_square(A, "char_poly input")
    n = A.shape[0]
    coeffs = np.empty(n)
    M = np.array(A)
    for k in range(1, n + 1):
        coeffs[k - 1] = -np.trace(M) / k
        if k < n:
            M = A @ (M + coeffs[k - 1] * np.eye(n))
    return CharPoly(n, coeffs)


def companion_matrix(p: CharPoly) -> np.ndarray:
    """Standard companion form: first row -(a_1..a_l), unit subdiagonal."""
    l = p.degree
    C = np.zeros((l, l))
    C[0, :] = -p.coefficients
    if l > 1:
        C[1:, :-1] = np.eye(l - 1)
    return C


@dataclass(frozen=True)
class UnitDiscReport:
    """Result of the open-unit-disc spectrum test."""

    is_member: bool
    moduli: tuple[float, ...]


def eigen_moduli_in_unit_disc(A) -> UnitDiscReport:
    """Test whether every eigenvalue modulus lies strictly in (0, 1).

    Zero moduli fail the test (the interval is open at both ends). Moduli
    are reported sorted ascending.
    """
    A = as_square(A)
    try:
        lams = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:  # QR iteration cap exceeded
        raise NumericalError(f"eigenvalue iteration failed: {exc}") from exc
    moduli = np.sort(np.abs(lams))
    ok = bool(moduli[0] > 0.0 and moduli[-1] < 1.0)
    return UnitDiscReport(ok, tuple(float(m) for m in moduli))


def require_unit_disc(A, name: str = "matrix") -> None:
    """Raise SpectrumError unless all eigenvalue moduli are in (0, 1)."""
    rep = eigen_moduli_in_unit_disc(A)
    if not rep.is_member:
        bad = min(rep.moduli) if min(rep.moduli) <= 0.0 else max(rep.moduli)
        raise SpectrumError(
            f"{name} has eigenvalue modulus {bad:.6g} outside the open "
            f"interval (0, 1); moduli = {rep.moduli}"
        )


def contraction_matrix(p: CharPoly) -> np.ndarray:
    """Contraction-related coefficient matrix of a monic polynomial.

    The l x l matrix G whose solve against the first unit vector yields the
    Toeplitz generator of the standard-form solution. Coefficients outside
    1..l count as zero.
    """
    l = p.degree
    a = np.zeros(2 * l + 2)
    a[1 : l + 1] = p.coefficients  # a[j] == a_j, a[0] == 0
    G = np.zeros((l, l))
    G[0, 0] = 1.0 - np.sum(p.coefficients**2)
    for j in range(2, l + 1):
        s = 0.0
        for k in range(1, l + 1):
            left = a[k + 1 - j] if k + 1 - j >= 0 else 0.0
            s += a[k] * (left + a[k + j - 1])
        G[0, j - 1] = -s
    for i in range(2, l + 1):
        G[i - 1, 0] = a[i - 1]
        for j in range(2, l + 1):
            if i == j:
                G[i - 1, j - 1] = 1.0 + a[2 * i - 2]
            else:
                G[i - 1, j - 1] = (a[i - j] if i - j >= 0 else 0.0) + a[i + j - 2]
    return G


def toeplitz_symmetric(first_column) -> np.ndarray:
    """Symmetric Toeplitz matrix T with T[i, j] = c[|i - j|]."""
    c = np.asarray(first_column, dtype=float)
    idx = np.abs(np.subtract.outer(np.arange(c.size), np.arange(c.size)))
    return c[idx]


@dataclass(frozen=True, eq=False)
class StandardizerResult:
    """Upper-triangular D with standard = D C D^{-1} in companion form."""

    D: np.ndarray
    standard: np.ndarray


def hessenberg_standardizer(C) -> StandardizerResult:
    """Reduce an upper Hessenberg contraction to standard companion form.

    Parameters
    ----------
    C : array_like
        Square upper Hessenberg matrix with nonzero subdiagonal, zeros below
        it, and eigenvalue moduli strictly inside (0, 1).

    Returns
    -------
    StandardizerResult
        ``D`` stacks the last rows of C^(l-1), ..., C^0; it is upper
        triangular with determinant prod_i c_{i+1,i}^i. ``standard`` is the
        conjugation D C D^{-1}, snapped to exact companion structure; its
        first row is the negated characteristic-coefficient vector.

    Raises
    ------
    UsageError
        If C is not upper Hessenberg or a subdiagonal entry is zero.
    SpectrumError
        If the eigenvalue moduli leave the open unit disc.
    """
    C = as_square(C, "Hessenberg input")
    l = C.shape[0]
    scale = max(1.0, float(np.linalg.norm(C)))
    for j in range(l - 2):
        tail = C[j + 2 :, j]
        if np.max(np.abs(tail), initial=0.0) > 1e-12 * scale:
            raise UsageError("matrix has nonzeros below the subdiagonal")
    sub = np.diag(C, -1)
    if l > 1 and np.any(sub == 0.0):
        raise UsageError("zero subdiagonal entry; matrix is not reducible")
    require_unit_disc(C, "Hessenberg input")

    D = np.zeros((l, l))
    row = np.zeros(l)
    row[-1] = 1.0
    D[l - 1] = row
    for i in range(l - 2, -1, -1):
        row = row @ C
        D[i] = row
    D = np.triu(D)  # structural zeros below the diagonal

    # right-division by the triangular D; row-relative pivoting keeps the
    # wildly scaled rows of strongly contracting inputs solvable
    standard = solve_triangular_system(D.T, (D @ C).T, lower=True).T
    # The conjugation is exactly companion-shaped; snap the known pattern
    # and keep only the first row numeric.
    expected = np.zeros((l, l))
    if l > 1:
        expected[1:, :-1] = np.eye(l - 1)
    drift = np.linalg.norm(standard[1:] - expected[1:])
    if drift > 1e-6 * (1.0 + np.linalg.norm(standard)):
        raise NumericalError(
            f"standardized form deviates from companion structure by {drift:.3g}"
        )
    snapped = expected
    snapped[0] = standard[0]
    return StandardizerResult(D=D, standard=snapped)


@dataclass(frozen=True, eq=False)
class SpectralSplit:
    """Ordered symmetric eigendecomposition S = Q^T diag(eigenvalues) Q.

    Rows of `orthogonal` are eigenvectors, sorted by descending eigenvalue,
    so the strictly positive eigenvalues sit at positions 1..rank.
    `positive_indices` is that (1-based) index set.
    """

    orthogonal: np.ndarray
    eigenvalues: np.ndarray
    positive_indices: tuple[int, ...]
    rank: int


def symmetric_eigendecomposition(S) -> SpectralSplit:
    """Eigendecomposition of a symmetric PSD matrix with rank detection.

    Eigenvalues at or below tau_rank = RANK_RTOL * lambda_max are clamped to
    zero; eigenvalues below -RANK_RTOL * ||S||_F fail the PSD precondition.
    Each eigenvector's largest-magnitude entry is made positive so the split
    is deterministic.
    """
    S = as_square(S, "symmetric input")
    nrm = float(np.linalg.norm(S))
    if np.linalg.norm(S - S.T) > 1e-10 * max(nrm, 1e-300):
        raise UsageError("matrix is not symmetric within tolerance")
    Ssym = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(Ssym)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    Q = V.T[order]
    if w.size and w[-1] < -RANK_RTOL * nrm:
        raise UsageError(
            f"matrix is not positive semidefinite: eigenvalue {w[-1]:.6g}"
        )
    tau = RANK_RTOL * max(float(w[0]) if w.size else 0.0, 0.0)
    w = np.where(w > tau, w, 0.0)
    for row in Q:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0.0:
            row *= -1.0
    xi = int(np.count_nonzero(w))
    return SpectralSplit(
        orthogonal=Q,
        eigenvalues=w,
        positive_indices=tuple(range(1, xi + 1)),
        rank=xi,
    )


def solve_triangular_system(T, b, lower: bool = False) -> np.ndarray:
    """Solve T x = b by substitution for a triangular matrix T.

    The diagonal entries are the pivots and each is tested against its own
    row only, so triangles whose rows live on wildly different scales (the
    standardizers of strongly contracting monodromy matrices) stay solvable
    as long as every row is dominated by its diagonal to within PIVOT_RTOL.
    Entries on the ignored side of the diagonal are never read.
    """
    T = as_square(T, "triangular matrix")
    B = np.asarray(b, dtype=float)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    n = T.shape[0]
    if B.shape[0] != n:
        raise UsageError(f"rhs has {B.shape[0]} rows, expected {n}")
    X = np.array(B)
    order = range(n) if lower else range(n - 1, -1, -1)
    for k in order:
        row = T[k, : k + 1] if lower else T[k, k:]
        if abs(T[k, k]) <= PIVOT_RTOL * float(np.max(np.abs(row))):
            raise SingularMatrixError(
                f"diagonal entry {T[k, k]:.3g} in row {k + 1} is negligible "
                "relative to its row"
            )
        if lower:
            X[k] = (X[k] - T[k, :k] @ X[:k]) / T[k, k]
        else:
            X[k] = (X[k] - T[k, k + 1 :] @ X[k + 1 :]) / T[k, k]
    return X[:, 0] if vector else X


def solve_linear_system(M, b) -> np.ndarray:
    """Solve M x = b by Gaussian elimination with partial pivoting.

    `b` may be a vector or a matrix of stacked right-hand sides. A pivot of
    magnitude below PIVOT_RTOL * ||M||_inf raises SingularMatrixError.
    """
    M = as_square(M, "system matrix")
    B = np.asarray(b, dtype=float)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    n = M.shape[0]
    if B.shape[0] != n:
        raise UsageError(f"rhs has {B.shape[0]} rows, expected {n}")
    norm_inf = float(np.max(np.sum(np.abs(M), axis=1)))
    if norm_inf == 0.0:
        raise SingularMatrixError("system matrix is zero")
    threshold = PIVOT_RTOL * norm_inf

    U = np.array(M)
    X = np.array(B)
    for k in range(n):
        p = k + int(np.argmax(np.abs(U[k:, k])))
        if abs(U[p, k]) < threshold:
            raise SingularMatrixError(
                f"pivot {U[p, k]:.3g} in column {k + 1} below threshold "
                f"{threshold:.3g}"
            )
        if p != k:
            U[[k, p]] = U[[p, k]]
            X[[k, p]] = X[[p, k]]
        factors = U[k + 1 :, k] / U[k, k]
        U[k + 1 :, k:] -= np.outer(factors, U[k, k:])
        X[k + 1 :] -= np.outer(factors, X[k])
    for k in range(n - 1, -1, -1):
        X[k] = (X[k] - U[k, k + 1 :] @ X[k + 1 :]) / U[k, k]
    return X[:, 0] if vector else X
