"""Dense complex-matrix kernel.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Every public
function rejects non-finite input.  Tensor products use the row-major
Kronecker layout ``(i*rows_b + k, j*cols_b + l)`` throughout the package.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
MERGE_TOL = 1e-8
PSD_CLAMP_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)


class HermitianEig(NamedTuple):
    eigenvalues: np.ndarray  # ascending, real
    eigenvectors: np.ndarray  # orthonormal columns


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D complex array, rejecting NaN/Inf.

    1-D input is treated as a column vector.
    """
    m = np.asarray(a, dtype=complex)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf entries")
    return m


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=complex)


def multiply(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def adjoint(a) -> np.ndarray:
    return as_matrix(a).conj().T


def _require_square(a: np.ndarray) -> None:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"square matrix required, got shape {a.shape}")


def trace(a) -> complex:
    a = as_matrix(a)
    _require_square(a)
    return complex(np.trace(a))


def tensor(*factors) -> np.ndarray:
    """Kronecker product of one or more matrices (or column vectors)."""
    if not factors:
        raise ValueError("tensor() needs at least one factor")
    out = as_matrix(factors[0])
    for f in factors[1:]:
        out = np.kron(out, as_matrix(f))
    return out


def frobenius(a) -> float:
    return float(np.linalg.norm(as_matrix(a)))


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, frobenius(a))
    return frobenius(a - a.conj().T) <= tol * scale


def _checked_hermitian(a) -> np.ndarray:
    a = as_matrix(a)
    _require_square(a)
    if not is_hermitian(a):
        raise ValueError("matrix is not self-adjoint within tolerance")
    return 0.5 * (a + a.conj().T)


def hermitian_eig(a) -> HermitianEig:
    """Eigendecomposition of a self-adjoint matrix (symmetrized first)."""
    h = _checked_hermitian(a)
    w, v = np.linalg.eigh(h)
    return HermitianEig(w, v)


def _merge_values(values: np.ndarray, tol: float) -> list[list[int]]:
    """Group indices whose values chain together within ``tol``."""
    order = np.argsort(values.real, kind="stable")
    groups: list[list[int]] = []
    for idx in order:
        if groups and abs(values[idx] - values[groups[-1][-1]]) <= tol:
            groups[-1].append(int(idx))
        else:
            groups.append([int(idx)])
    return groups


def spectral_projectors(a, tol: float = MERGE_TOL) -> list[tuple[float, np.ndarray]]:
    """Distinct eigenvalues (merged at ``tol``) with their eigenprojectors, ascending."""
    w, v = hermitian_eig(a)
    out = []
    for group in _merge_values(w.astype(complex), tol):
        cols = v[:, group]
        out.append((float(np.mean(w[group])), cols @ cols.conj().T))
    return out


def matrix_function(a, f: Callable[[float], complex], tol: float = MERGE_TOL) -> np.ndarray:
    """Apply ``f`` to the spectrum of a self-adjoint matrix.

    Eigenvalues whose images agree within ``tol`` share one merged
    eigenspace and the averaged image value.
    """
    w, v = hermitian_eig(a)
    fw = np.array([complex(f(float(x))) for x in w])
    if not np.all(np.isfinite(fw)):
        raise ValueError("function is undefined on the spectrum")
    for group in _merge_values(fw, tol):
        fw[group] = np.mean(fw[group])
    return (v * fw) @ v.conj().T


def matrix_sqrt(a) -> np.ndarray:
    """Positive square root of a PSD matrix; eigenvalues in [-1e-10, 0) clamp to 0."""
    w, v = hermitian_eig(a)
    if w[0] < -PSD_CLAMP_TOL:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3g})")
    s = np.sqrt(np.clip(w, 0.0, None))
    out = (v * s) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def is_psd(a, tol: float = PSD_CLAMP_TOL) -> bool:
    w, _ = hermitian_eig(a)
    return bool(w[0] >= -tol)


def ket(*components) -> np.ndarray:
    return as_matrix(np.array(components, dtype=complex).reshape(-1, 1))


def basis(d: int, i: int) -> np.ndarray:
    e = np.zeros((d, 1), dtype=complex)
    e[i, 0] = 1.0
    return e


def projector(v) -> np.ndarray:
    v = as_matrix(v)
    return v @ v.conj().T


def partial_trace(a, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep`` (subsystem order preserved)."""
    a = as_matrix(a)
    dims = list(dims)
    n = len(dims)
    if a.shape != (int(np.prod(dims)),) * 2:
        raise ValueError("dims do not match matrix shape")
    t = a.reshape(dims + dims)
    for k in sorted(set(range(n)) - set(keep), reverse=True):
        t = np.trace(t, axis1=k, axis2=k + t.ndim // 2)
    d = int(np.prod([dims[k] for k in sorted(keep)]))
    return t.reshape(d, d)


def commutator(a, b) -> np.ndarray:
    return multiply(a, b) - multiply(b, a)


def to_json(a) -> dict:
    a = as_matrix(a)
    flat = a.reshape(-1)
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "re": [float(x) for x in flat.real],
        "im": [float(x) for x in flat.imag],
    }


def from_json(obj: dict) -> np.ndarray:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    if re.size != rows * cols or im.size != rows * cols:
        raise ValueError("entries length does not match rows*cols")
    return as_matrix((re + 1j * im).reshape(rows, cols))
