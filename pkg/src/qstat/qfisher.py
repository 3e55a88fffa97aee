"""Quantum scores, information matrices and the bounds relating them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares, nnls

from . import qmat
from .qcore import (
    DensityMatrix,
    Povm,
    Pvm,
    bloch_operator,
    fibonacci_sphere,
    probabilities,
    spin_pvm,
)

SUPPORT_CUTOFF = 1e-12
SLD_NULL_TOL = 1e-9
COND_LIMIT = 1e10
BALL_MARGIN = 1e-6
FD_STEP = 1e-6


class SingularInformation(ArithmeticError):
    """Quantum information matrix too ill-conditioned to invert."""


@dataclass
class ParametricModel:
    """theta -> rho(theta) together with its partial derivatives.

    ``derivative_at(theta, i)`` returns d rho / d theta_i.  When it is None,
    central finite differences are used, with a Richardson-style agreement
    check between steps h and 2h.
    """

    dim: int
    param_dim: int
    state_at: Callable[[np.ndarray], np.ndarray]
    derivative_at: Callable[[np.ndarray, int], np.ndarray] | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    name: str = "model"
    bloch_of: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    bloch_jacobian: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def rho(self, theta) -> np.ndarray:
        return DensityMatrix(self.state_at(np.asarray(theta, dtype=float))).mat

    def drho(self, theta, i: int) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.derivative_at is not None:
            d = qmat.as_matrix(self.derivative_at(theta, i))
        else:
            d = _finite_difference(self.state_at, theta, i)
        if not qmat.is_hermitian(d, 1e-9):
            raise ValueError("model derivative is not self-adjoint")
        if abs(np.trace(d)) > 1e-9:
            raise ValueError("model derivative is not traceless")
        return 0.5 * (d + d.conj().T)

    def derivatives(self, theta) -> list[np.ndarray]:
        return [self.drho(theta, i) for i in range(self.param_dim)]

    def in_domain(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        lo = -np.inf if self.lower is None else self.lower
        hi = np.inf if self.upper is None else self.upper
        return bool(np.all(theta > lo) and np.all(theta < hi))


def _finite_difference(f, theta: np.ndarray, i: int) -> np.ndarray:
    e = np.zeros_like(theta)
    e[i] = 1.0

    def central(h):
        return (qmat.as_matrix(f(theta + h * e)) - qmat.as_matrix(f(theta - h * e))) / (2 * h)

    d1, d2 = central(FD_STEP), central(2 * FD_STEP)
    if qmat.frobenius(d1 - d2) > 1e-5:
        raise ArithmeticError("finite-difference derivative is unstable at this point")
    return (4 * d1 - d2) / 3


# ---------------------------------------------------------------------------
# built-in models


def _bloch_density(a) -> np.ndarray:
    return 0.5 * (qmat.identity(2) + bloch_operator(a))


def pure_qubit() -> ParametricModel:
    """Pure qubit at polar angles (theta, phi), half-angle ket convention."""

    def bloch(t):
        th, ph = t
        return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])

    def jac(t):
        th, ph = t
        return np.array(
            [
                [math.cos(th) * math.cos(ph), -math.sin(th) * math.sin(ph)],
                [math.cos(th) * math.sin(ph), math.sin(th) * math.cos(ph)],
                [-math.sin(th), 0.0],
            ]
        )

    return ParametricModel(
        dim=2,
        param_dim=2,
        state_at=lambda t: _bloch_density(bloch(t)),
        derivative_at=lambda t, i: 0.5 * bloch_operator(jac(t)[:, i]),
        lower=np.array([0.0, -np.inf]),
        upper=np.array([math.pi, np.inf]),
        name="pure_qubit",
        bloch_of=bloch,
        bloch_jacobian=jac,
    )


def bloch_ball() -> ParametricModel:
    """Qubit rho = (1 + a.sigma)/2 parametrized by a itself, |a| <= 1 - 1e-6."""

    def state(a):
        if np.linalg.norm(a) > 1 - BALL_MARGIN:
            raise ValueError("Bloch-ball model needs |a| <= 1 - 1e-6")
        return _bloch_density(a)

    return ParametricModel(
        dim=2,
        param_dim=3,
        state_at=state,
        derivative_at=lambda a, i: 0.5 * bloch_operator(np.eye(3)[i]),
        lower=np.full(3, -1.0),
        upper=np.full(3, 1.0),
        name="bloch_ball",
        bloch_of=lambda a: np.asarray(a, dtype=float),
        bloch_jacobian=lambda a: np.eye(3),
    )


def n_copies(base: ParametricModel, n: int) -> ParametricModel:
    """rho(theta)^{(x) n} with product-rule derivatives."""
    if n < 1:
        raise ValueError("need at least one copy")
    if base.dim ** n > 64:
        raise ValueError(f"joint dimension {base.dim ** n} exceeds 64")

    def state(t):
        return qmat.tensor(*([base.rho(t)] * n))

    def deriv(t, i):
        r, d = base.rho(t), base.drho(t, i)
        return sum(qmat.tensor(*[d if k == j else r for k in range(n)]) for j in range(n))

    return ParametricModel(
        dim=base.dim ** n,
        param_dim=base.param_dim,
        state_at=state,
        derivative_at=deriv,
        lower=base.lower,
        upper=base.upper,
        name=f"{base.name}^{n}",
    )


def linear_reparametrization(base: ParametricModel, a: np.ndarray) -> ParametricModel:
    """Model in eta with theta = A eta."""
    a = np.asarray(a, dtype=float)
    return ParametricModel(
        dim=base.dim,
        param_dim=a.shape[1],
        state_at=lambda eta: base.rho(a @ eta),
        derivative_at=lambda eta, i: sum(a[k, i] * base.drho(a @ eta, k) for k in range(a.shape[0])),
        name=f"{base.name}@linear",
    )


# ---------------------------------------------------------------------------
# scores and information


def sld(rho, drho) -> np.ndarray:
    """Symmetric logarithmic derivative: solves drho = (L rho + rho L)/2 on the support.

    Components connecting two null directions of rho are set to zero, and
    an error is raised if drho has weight there.
    """
    r = qmat.as_matrix(rho)
    d = qmat.as_matrix(drho)
    if not qmat.is_hermitian(d, 1e-9):
        raise ValueError("derivative is not self-adjoint")
    w, v = qmat.hermitian_eig(r)
    dd = v.conj().T @ d @ v
    cutoff = SUPPORT_CUTOFF * r.shape[0]
    denom = w[:, None] + w[None, :]
    on_support = denom > cutoff
    off = ~on_support
    if np.any(off) and np.max(np.abs(dd[off])) > SLD_NULL_TOL:
        raise ArithmeticError("derivative has weight between null directions of rho")
    lam = np.where(on_support, 2 * dd / np.where(on_support, denom, 1.0), 0.0)
    out = v @ lam @ v.conj().T
    return 0.5 * (out + out.conj().T)


def sld_residual(rho, drho, lam) -> float:
    r, d, l = (qmat.as_matrix(x) for x in (rho, drho, lam))
    return qmat.frobenius(d - 0.5 * (l @ r + r @ l))


def quantum_info_from(rho, drhos: Sequence[np.ndarray]) -> np.ndarray:
    r = qmat.as_matrix(rho)
    lams = [sld(r, d) for d in drhos]
    p = len(lams)
    out = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            val = 0.5 * np.trace(r @ (lams[i] @ lams[j] + lams[j] @ lams[i])).real
            out[i, j] = out[j, i] = val
    return out


def quantum_info(model: ParametricModel, theta) -> np.ndarray:
    return quantum_info_from(model.rho(theta), model.derivatives(theta))


def classical_fisher_from(rho, drhos: Sequence[np.ndarray], m: Povm) -> np.ndarray:
    r = qmat.as_matrix(rho)
    if r.shape[0] != m.dim:
        raise ValueError("measurement and model dimensions differ")
    p = np.array([np.trace(r @ e).real for e in m.elements])
    dp = np.array([[np.trace(d @ e).real for e in m.elements] for d in drhos])
    keep = p > SUPPORT_CUTOFF * r.shape[0]
    dk = dp[:, keep]
    out = (dk / p[keep]) @ dk.T
    return 0.5 * (out + out.T)


def classical_fisher(model: ParametricModel, theta, m: Povm) -> np.ndarray:
    return classical_fisher_from(model.rho(theta), model.derivatives(theta), m)


class GapCheck(NamedTuple):
    min_gap_eigenvalue: float
    holds: bool


def check_braunstein_caves(model: ParametricModel, theta, m: Povm, tol: float = 1e-8) -> GapCheck:
    gap = quantum_info(model, theta) - classical_fisher(model, theta, m)
    mn = float(np.linalg.eigvalsh(0.5 * (gap + gap.T))[0])
    return GapCheck(mn, mn >= -tol)


def sld_pvm(model: ParametricModel, theta, i: int = 0) -> Pvm:
    """Measurement of the i-th SLD; it attains the one-parameter information bound."""
    lam = sld(model.rho(theta), model.drho(theta, i))
    pairs = qmat.spectral_projectors(lam)
    return Pvm(tuple(v for v, _ in pairs), tuple(p for _, p in pairs))


def safe_inverse(info: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse of a symmetric PSD matrix and its condition number."""
    w, v = np.linalg.eigh(0.5 * (info + info.T))
    if w[0] <= 0:
        raise SingularInformation("information matrix is singular")
    cond = float(w[-1] / w[0])
    if cond > COND_LIMIT:
        raise SingularInformation(f"information matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    return (v / w) @ v.T, cond


class TraceStatistic(NamedTuple):
    value: float
    condition: float


def gill_massar_trace(model: ParametricModel, theta, m: Povm, n: int = 1) -> TraceStatistic:
    """trace(I_Q^{-1} I(theta; M^{(n)}) / n) with I_Q the one-copy quantum information."""
    iq_inv, cond = safe_inverse(quantum_info(model, theta))
    joint = model if n == 1 else n_copies(model, n)
    info = classical_fisher(joint, theta, m)
    return TraceStatistic(float(np.trace(iq_inv @ info)) / n, cond)


def quantum_info_additivity_check(base: ParametricModel, n: int, theta) -> np.ndarray:
    """Eigenvalue ratios of I_Q(n copies) to n * I_Q(one copy)."""
    if n < 1 or n > 3:
        raise ValueError("additivity check supports 1 <= n <= 3 copies")
    one = quantum_info(base, theta)
    many = quantum_info(n_copies(base, n), theta)
    return np.linalg.eigvalsh(many) / np.linalg.eigvalsh(n * one)


# ---------------------------------------------------------------------------
# special measurements


def _spin_ket(axis: int, sign: int) -> np.ndarray:
    e = np.eye(3)[axis] * sign
    w, v = np.linalg.eigh(bloch_operator(e))
    return v[:, [1]]


PAIR_LABELS = ("+x+x", "-x-x", "+y+y", "-y-y", "+z+z", "-z-z", "singlet")


def pair_povm_7() -> Povm:
    """Seven-outcome joint measurement on two qubits.

    Half-projectors onto |+w,+w> and |-w,-w> for w in x, y, z, plus the
    singlet projector.  Labels are 1..7 in the order of PAIR_LABELS.
    """
    elems = []
    for axis in range(3):
        for sign in (1, -1):
            k = _spin_ket(axis, sign)
            elems.append(0.5 * qmat.projector(qmat.tensor(k, k)))
    singlet = qmat.ket(0, 1, -1, 0) / math.sqrt(2)
    elems.append(qmat.projector(singlet))
    return Povm(tuple(range(1, 8)), tuple(elems))


def pair_probabilities(a) -> np.ndarray:
    """Closed form of trace((rho(a) (x) rho(a)) M_k) for the seven pair outcomes."""
    a = np.asarray(a, dtype=float)
    out = []
    for w in range(3):
        out.append(0.125 * (1 + a[w]) ** 2)
        out.append(0.125 * (1 - a[w]) ** 2)
    out.append(0.25 * (1 - a @ a))
    return np.array(out)


# ---------------------------------------------------------------------------
# achieving a target information matrix with randomized spin measurements


@dataclass
class RandomizedSpinMeasurement:
    weights: np.ndarray
    directions: np.ndarray  # shape (k, 3)

    @property
    def deficit(self) -> float:
        return float(max(0.0, 1.0 - self.weights.sum()))

    def as_povm(self) -> Povm:
        """Single POVM: outcome (k, +-1) with weight w_k, plus a blank outcome."""
        labels, elems = [], []
        for k, (w, n) in enumerate(zip(self.weights, self.directions)):
            pvm = spin_pvm(n)
            for lab, p in pvm.outcomes:
                labels.append(2 * k + (0 if lab == 1 else 1))
                elems.append(w * p)
        labels.append(-1)
        elems.append(self.deficit * qmat.identity(2))
        return Povm(tuple(labels), tuple(elems))


def spin_fisher(bloch: np.ndarray, jac: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Fisher information of spin_pvm(n) for a qubit model at Bloch point ``bloch``."""
    g = jac.T @ n
    c = float(bloch @ n)
    denom = 1.0 - c * c
    if denom <= SUPPORT_CUTOFF:
        # one outcome is certain; only the impossible outcome carries a 0/0 term
        return np.zeros((len(g), len(g)))
    return np.outer(g, g) / denom


def _qubit_geometry(model: ParametricModel, theta):
    if model.dim != 2 or model.bloch_of is None or model.bloch_jacobian is None:
        raise ValueError("target information needs a built-in qubit model")
    theta = np.asarray(theta, dtype=float)
    return model.bloch_of(theta), model.bloch_jacobian(theta)


def _candidate_directions(a: np.ndarray, jac: np.ndarray, iq: np.ndarray, j: np.ndarray) -> list[np.ndarray]:
    """One spin direction per eigen-component of I_Q^{-1/2} J I_Q^{-1/2}."""
    w, v = np.linalg.eigh(iq)
    iq_half = (v * np.sqrt(w)) @ v.T
    iq_mhalf = (v / np.sqrt(w)) @ v.T
    mu, e = np.linalg.eigh(iq_mhalf @ j @ iq_mhalf)
    r2 = float(a @ a)
    gd = jac.copy()
    if r2 < 1 - 1e-9:
        gd = jac + np.outer(a, a @ jac) / (1 - r2)
    out = []
    for k in range(len(mu)):
        if mu[k] <= 1e-14:
            continue
        f = iq_half @ e[:, k]
        n = gd @ np.linalg.solve(iq, f)
        nn = np.linalg.norm(n)
        if nn > 1e-12:
            out.append(n / nn)
    return out


def achieve_target_information(
    model: ParametricModel, theta, target, n_grid: int = 200
) -> RandomizedSpinMeasurement:
    """Randomized spin measurement whose Fisher information equals ``target``.

    Nonnegative least squares over eigen-aligned directions and a Fibonacci
    grid of candidates, then joint local refinement of the active set.
    """
    j = np.asarray(target, dtype=float)
    a, jac = _qubit_geometry(model, theta)
    iq = quantum_info(model, theta)
    iq_inv, _ = safe_inverse(iq)
    if np.linalg.norm(j - j.T) > 1e-9 or np.linalg.eigvalsh(0.5 * (j + j.T))[0] < -1e-9:
        raise ValueError("target information must be symmetric positive semidefinite")
    if float(np.trace(iq_inv @ j)) > 1 + 1e-9:
        raise ValueError("target is infeasible: trace(I_Q^{-1} J) exceeds 1")
    p = j.shape[0]
    if np.allclose(j, 0, atol=1e-14):
        return RandomizedSpinMeasurement(np.zeros(0), np.zeros((0, 3)))

    iu = np.triu_indices(p)
    scale = np.where(iu[0] == iu[1], 1.0, math.sqrt(2))

    def vec(m):
        return m[iu] * scale

    # the eigen-aligned directions usually suffice on their own; the grid
    # is only brought in when they do not
    dirs = _candidate_directions(a, jac, iq, j)
    w = np.zeros(0)
    if dirs:
        cols = np.column_stack([vec(spin_fisher(a, jac, n)) for n in dirs])
        w, res = nnls(cols, vec(j))
    if not dirs or res > 1e-10:
        dirs = dirs + list(fibonacci_sphere(n_grid))
        cols = np.column_stack([vec(spin_fisher(a, jac, n)) for n in dirs])
        w, _ = nnls(cols, vec(j))
    active = np.flatnonzero(w > 1e-12)
    weights = w[active]
    directions = np.array([dirs[k] for k in active])

    def fisher_of(ws, ds):
        return sum(wk * spin_fisher(a, jac, d) for wk, d in zip(ws, ds))

    if np.linalg.norm(fisher_of(weights, directions) - j) > 1e-10:
        x0 = np.concatenate([weights, directions.reshape(-1)])
        k = len(weights)

        def resid(x):
            ws = x[:k]
            ds = x[k:].reshape(k, 3)
            ds = ds / np.linalg.norm(ds, axis=1, keepdims=True)
            return vec(fisher_of(ws, ds) - j)

        lo = np.concatenate([np.zeros(k), np.full(3 * k, -np.inf)])
        sol = least_squares(resid, x0, bounds=(lo, np.inf), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        weights = sol.x[:k]
        directions = sol.x[k:].reshape(k, 3)
        directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)

    keep = weights > 1e-12
    if weights[keep].sum() > 1 + 1e-6:
        raise ArithmeticError("no randomized spin measurement with total weight <= 1 was found")
    return RandomizedSpinMeasurement(weights[keep], directions[keep])
