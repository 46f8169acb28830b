"""Dense complex linear algebra on vectorized quantum states.

Density matrices and operators are plain ``(d, d)`` complex numpy arrays;
superoperators are ``(d*d, d*d)`` complex arrays acting on column-stacked
states.  The vectorization convention is fixed package-wide:

    vec stacks columns, so  vec(A @ X @ B) == kron(B.T, A) @ vec(X).

For a qubit with basis order (ground, excited) the vectorized components
are therefore ordered (gg, eg, ge, ee).  This ordering was confirmed
empirically against the reference 4x4 generator matrices of the thermal
qubit (see tests/test_model.py).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateFixedPointError,
    NoFixedPointError,
    NumericalInputError,
    SingularOperatorError,
    ValidationError,
)

# Condition-number ceiling beyond which solve() refuses to proceed.
COND_LIMIT = 1e12


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stack a square matrix into a length d**2 vector."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"vec expects a square matrix, got shape {m.shape}")
    return m.reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`; exact round trip."""
    v = np.asarray(v).reshape(-1)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValidationError(f"unvec expects a square length, got {v.size}")
    return v.reshape((d, d), order="F")


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with the standard block layout."""
    return np.kron(np.asarray(a), np.asarray(b))


def left_mul(x: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> x @ rho."""
    d = x.shape[0]
    return kron(np.eye(d), x)


def right_mul(x: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> rho @ x."""
    d = x.shape[0]
    return kron(x.T, np.eye(d))


def sandwich(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> a @ rho @ b."""
    return kron(b.T, a)


def trace_dual(d: int) -> np.ndarray:
    """vec(identity): the row vector implementing rho -> Tr[rho]."""
    return vec(np.eye(d)).astype(complex)


def expm(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Matrix exponential of t*a (scaling-and-squaring via scipy)."""
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise NumericalInputError("expm input contains NaN or Inf")
    if not np.isfinite(t):
        raise NumericalInputError("expm time parameter is not finite")
    if t == 0.0:
        return np.eye(a.shape[0], dtype=complex)
    return scipy.linalg.expm(t * a)


def expm_integral(a: np.ndarray, t: float) -> np.ndarray:
    """Integral of the propagator, int_0^t expm(a, s) ds.

    Evaluated through the augmented block exponential
    expm([[a, I], [0, 0]] * t), whose upper-right block is the integral.
    This stays finite and accurate even when ``a`` is singular, where the
    resolvent form a^{-1} (e^{t a} - 1) breaks down.
    """
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise NumericalInputError("expm_integral input contains NaN or Inf")
    n = a.shape[0]
    aug = np.zeros((2 * n, 2 * n), dtype=complex)
    aug[:n, :n] = a
    aug[:n, n:] = np.eye(n)
    return scipy.linalg.expm(t * aug)[:n, n:]


def solve(a: np.ndarray, b: np.ndarray, role: str = "operator") -> np.ndarray:
    """Solve a @ x = b with a residual check.

    ``role`` names the matrix in error messages (for example
    "no-jump generator tail") so failures point at the physical object.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericalInputError(f"solve input for '{role}' contains NaN or Inf")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"solve expects a square matrix for '{role}'")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularOperatorError(role, f"condition estimate {cond:.3g}")
    try:
        x = scipy.linalg.solve(a, b)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - cond catches first
        raise SingularOperatorError(role, str(exc)) from exc
    resid = np.linalg.norm(a @ x - b)
    if resid > 1e-10 * max(np.linalg.norm(b), 1e-300) and cond <= 1e8:
        raise SingularOperatorError(role, f"residual {resid:.3g} too large")
    return x


def eig_near(a: np.ndarray, target: complex, tol: float):
    """Eigenpair of ``a`` with eigenvalue nearest ``target``.

    Raises NoFixedPointError if nothing lies within ``tol`` of the target
    and DegenerateFixedPointError when two eigenvalues are within ``tol``
    of the target and of each other.  The eigenvector is returned
    unnormalized; callers fix the physical normalization.
    """
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise NumericalInputError("eig_near input contains NaN or Inf")
    vals, vecs = scipy.linalg.eig(a)
    order = np.argsort(np.abs(vals - target))
    best = order[0]
    if np.abs(vals[best] - target) > tol:
        raise NoFixedPointError(
            f"no eigenvalue within {tol:g} of {target} "
            f"(closest: {vals[best]!r})"
        )
    if len(vals) > 1:
        second = order[1]
        if (
            np.abs(vals[second] - target) <= tol
            and np.abs(vals[second] - vals[best]) <= tol
        ):
            raise DegenerateFixedPointError(target, [vals[best], vals[second]])
    return vals[best], vecs[:, best]


def hermitize(x: np.ndarray) -> np.ndarray:
    """Project onto the Hermitian part, (x + x^dagger) / 2."""
    return (x + x.conj().T) / 2.0


def is_hermitian(m: np.ndarray, tol: float = 1e-12) -> bool:
    """Hermiticity predicate with explicit tolerance."""
    m = np.asarray(m)
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def min_eigval(m: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part (positivity diagnostics)."""
    return float(np.linalg.eigvalsh(hermitize(np.asarray(m, dtype=complex)))[0])


def is_positive_semidefinite(m: np.ndarray, tol: float = 1e-9) -> bool:
    """PSD predicate: no eigenvalue of the Hermitian part below -tol."""
    return min_eigval(m) >= -tol


def is_hurwitz(a: np.ndarray, margin: float = 0.0) -> bool:
    """True when every eigenvalue has real part < -margin."""
    vals = np.linalg.eigvals(np.asarray(a, dtype=complex))
    return bool(np.max(vals.real) < -margin)


def random_density(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random full-rank density matrix (Ginibre construction)."""
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random Hermitian matrix with O(1) entries."""
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return hermitize(g)
