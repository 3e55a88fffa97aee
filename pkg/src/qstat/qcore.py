"""States, evolution, composition and measurement of finite quantum systems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence, Union

import numpy as np

from . import qmat
from .qmat import PAULI, SIGMA_X, SIGMA_Y, SIGMA_Z

NORM_TOL = 1e-12
TRACE_TOL = 1e-10
PVM_TOL = 1e-10
POVM_TOL = 1e-9
PHASE_TOL = 1e-12
MIN_SAMPLED_PROB = 1e-15


# ---------------------------------------------------------------------------
# random streams


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Child streams extend the key, so trial ``i`` of a run always sees the
    same numbers no matter how trials are distributed over workers.  A
    stream is single-owner: do not draw from it on two threads.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be unsigned")
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        object.__setattr__(self, "_gen", np.random.Generator(np.random.PCG64(ss)))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, (*self.path, int(index)))

    def random(self, size=None):
        return self._gen.random(size)


# ---------------------------------------------------------------------------
# states


def _canonical_phase(v: np.ndarray) -> np.ndarray:
    flat = v.reshape(-1)
    for z in flat:
        if abs(z) > PHASE_TOL:
            return v * (abs(z) / z)
    return v


@dataclass(frozen=True, eq=False)
class PureState:
    """Unit column vector with canonical global phase.

    The first component of modulus above 1e-12 is made real and
    nonnegative, so two kets describing the same state compare equal.
    """

    ket: np.ndarray

    def __post_init__(self):
        v = qmat.as_matrix(self.ket)
        if v.shape[1] != 1:
            raise ValueError("a ket must be a column vector")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state vector is not normalized (norm {norm!r})")
        object.__setattr__(self, "ket", _canonical_phase(v))

    @classmethod
    def from_vector(cls, v) -> "PureState":
        v = qmat.as_matrix(v)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("zero vector has no state")
        return cls(v / norm)

    @property
    def dim(self) -> int:
        return self.ket.shape[0]

    @property
    def amplitudes(self) -> np.ndarray:
        return self.ket.reshape(-1)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(qmat.projector(self.ket))

    def overlap(self, other: "PureState") -> complex:
        return complex((self.ket.conj().T @ other.ket)[0, 0])

    def fidelity(self, other: "PureState") -> float:
        return abs(self.overlap(other)) ** 2


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    mat: np.ndarray

    def __post_init__(self):
        m = qmat.as_matrix(self.mat)
        if m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if not qmat.is_hermitian(m):
            raise ValueError("density matrix is not self-adjoint")
        m = 0.5 * (m + m.conj().T)
        if not qmat.is_psd(m):
            raise ValueError("density matrix is not positive semidefinite")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {np.trace(m).real!r}, not 1")
        object.__setattr__(self, "mat", m)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def purity(self) -> float:
        return float(np.trace(self.mat @ self.mat).real)

    def is_pure(self, tol: float = 1e-10) -> bool:
        return abs(self.purity() - 1.0) <= tol

    def density(self) -> "DensityMatrix":
        return self


State = Union[PureState, DensityMatrix]


@dataclass(frozen=True)
class BlochVector:
    ax: float
    ay: float
    az: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.ax, self.ay, self.az)):
            raise ValueError("Bloch vector components must be finite")

    @classmethod
    def from_array(cls, a) -> "BlochVector":
        ax, ay, az = (float(x) for x in np.asarray(a, dtype=float).reshape(3))
        return cls(ax, ay, az)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.ax, self.ay, self.az])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def density_of(state: State) -> DensityMatrix:
    return state.density()


def polar_to_ket(theta: float, phi: float) -> PureState:
    """cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>, Bloch vector u(theta, phi)."""
    if not (0.0 <= theta <= math.pi) or not (0.0 <= phi < 2 * math.pi):
        raise ValueError("theta must lie in [0, pi] and phi in [0, 2 pi)")
    return PureState(qmat.ket(math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)))


def polar_to_unit(theta: float, phi: float) -> np.ndarray:
    st = math.sin(theta)
    return np.array([st * math.cos(phi), st * math.sin(phi), math.cos(theta)])


def unit_to_polar(u) -> tuple[float, float]:
    x, y, z = np.asarray(u, dtype=float) / np.linalg.norm(u)
    theta = math.acos(max(-1.0, min(1.0, z)))
    phi = math.atan2(y, x) % (2 * math.pi)
    return theta, phi


def bloch_operator(v) -> np.ndarray:
    """v . sigma for a real 3-vector."""
    vx, vy, vz = np.asarray(v, dtype=float).reshape(3)
    return vx * SIGMA_X + vy * SIGMA_Y + vz * SIGMA_Z


def bloch_to_density(a: BlochVector) -> DensityMatrix:
    if a.norm > 1 + 1e-10:
        raise ValueError(f"Bloch vector length {a.norm} exceeds 1")
    return DensityMatrix(0.5 * (qmat.identity(2) + bloch_operator(a.vector)))


def density_to_bloch(rho: DensityMatrix) -> BlochVector:
    if rho.dim != 2:
        raise ValueError("Bloch representation needs a qubit density matrix")
    return BlochVector(*(float(np.trace(rho.mat @ s).real) for s in PAULI))


def bloch_of(state: State) -> np.ndarray:
    return density_to_bloch(state.density()).vector


@dataclass(frozen=True)
class Ensemble:
    components: tuple[tuple[float, State], ...]

    def __post_init__(self):
        comps = tuple((float(w), s) for w, s in self.components)
        weights = np.array([w for w, _ in comps])
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("ensemble weights must be nonnegative and sum to 1")
        if len({s.dim for _, s in comps}) != 1:
            raise ValueError("ensemble members have different dimensions")
        object.__setattr__(self, "components", comps)


def mix(ens: Ensemble) -> DensityMatrix:
    total = sum(w * s.density().mat for w, s in ens.components)
    return DensityMatrix(total)


# ---------------------------------------------------------------------------
# evolution


def unitary_from_hamiltonian(h, t: float) -> np.ndarray:
    """exp(-i H t) with hbar = 1."""
    return qmat.matrix_function(h, lambda x: np.exp(-1j * x * t))


def is_unitary(u, tol: float = 1e-10) -> bool:
    u = qmat.as_matrix(u)
    if u.shape[0] != u.shape[1]:
        return False
    return qmat.frobenius(u.conj().T @ u - np.eye(u.shape[0])) <= tol * max(1.0, math.sqrt(u.shape[0]))


def apply_unitary(state: State, u) -> State:
    u = qmat.as_matrix(u)
    if not is_unitary(u):
        raise ValueError("matrix is not unitary")
    if u.shape[0] != state.dim:
        raise ValueError("unitary and state dimensions differ")
    if isinstance(state, PureState):
        return PureState.from_vector(u @ state.ket)
    return DensityMatrix(u @ state.mat @ u.conj().T)


def evolve(state: State, h, t: float) -> State:
    h = qmat.as_matrix(h)
    if h.shape[0] != state.dim:
        raise ValueError("Hamiltonian and state dimensions differ")
    return apply_unitary(state, unitary_from_hamiltonian(h, t))


# ---------------------------------------------------------------------------
# measurements


@dataclass(frozen=True, eq=False)
class Povm:
    """Labelled positive elements summing to the identity."""

    labels: tuple
    elements: tuple[np.ndarray, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        elements = tuple(qmat.as_matrix(e) for e in self.elements)
        if len(labels) != len(elements) or not elements:
            raise ValueError("need one label per element and at least one outcome")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be distinct")
        d = elements[0].shape[0]
        for e in elements:
            if e.shape != (d, d):
                raise ValueError("elements must share one square shape")
            if not qmat.is_hermitian(e) or not qmat.is_psd(e):
                raise ValueError("element is not self-adjoint positive semidefinite")
        if qmat.frobenius(sum(elements) - np.eye(d)) > POVM_TOL:
            raise ValueError("elements do not sum to the identity")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "elements", tuple(0.5 * (e + e.conj().T) for e in elements))

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def outcomes(self) -> list[tuple]:
        return list(zip(self.labels, self.elements))


class Pvm(Povm):
    """A Povm whose elements are mutually orthogonal projectors."""

    def __post_init__(self):
        super().__post_init__()
        for i, p in enumerate(self.elements):
            if qmat.frobenius(p @ p - p) > PVM_TOL:
                raise ValueError(f"element {self.labels[i]!r} is not idempotent")
            for q in self.elements[i + 1:]:
                if qmat.frobenius(p @ q) > PVM_TOL:
                    raise ValueError("projectors are not mutually orthogonal")


def pvm_from_vectors(vectors: Sequence, labels: Sequence | None = None) -> Pvm:
    """Rank-one PVM from an orthonormal basis."""
    labels = list(range(len(vectors))) if labels is None else list(labels)
    return Pvm(tuple(labels), tuple(qmat.projector(v) for v in vectors))


def spin_pvm(v) -> Pvm:
    """Spin measurement along unit vector v: outcomes +1 and -1."""
    v = np.asarray(v, dtype=float).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("spin direction must be a unit vector")
    vs = bloch_operator(v)
    one = qmat.identity(2)
    return Pvm((1, -1), (0.5 * (one + vs), 0.5 * (one - vs)))


def probabilities(rho: DensityMatrix | State, m: Povm) -> np.ndarray:
    """Trace-rule outcome probabilities in outcome order."""
    r = rho.density().mat
    if r.shape[0] != m.dim:
        raise ValueError("state and measurement dimensions differ")
    p = np.array([np.trace(r @ e).real for e in m.elements])
    return p


def outcome_distribution(rho: DensityMatrix | State, m: Povm) -> list[tuple]:
    return list(zip(m.labels, probabilities(rho, m).tolist()))


def _sampling_cdf(p: np.ndarray) -> np.ndarray:
    p = np.where(p < MIN_SAMPLED_PROB, 0.0, p)
    cdf = np.cumsum(p)
    return cdf / cdf[-1]


def sample_indices(rho: DensityMatrix | State, m: Povm, size: int, rng: RngStream) -> np.ndarray:
    """Inverse-CDF sampling of outcome indices, outcomes taken in listed order."""
    cdf = _sampling_cdf(probabilities(rho, m))
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


def sample_outcomes(rho: DensityMatrix | State, m: Povm, size: int, rng: RngStream) -> list:
    labels = m.labels
    return [labels[i] for i in sample_indices(rho, m, size, rng)]


class Measurement(NamedTuple):
    label: object
    posterior: State
    probability: float


def measure(state: State, m: Pvm, rng: RngStream) -> Measurement:
    """Sample a simple measurement and return the projected posterior state."""
    if not isinstance(m, Pvm):
        raise TypeError("measure() needs a Pvm; use naimark_dilation for a general Povm")
    p = probabilities(state, m)
    i = int(sample_indices(state, m, 1, rng)[0])
    proj = m.elements[i]
    if isinstance(state, PureState):
        post: State = PureState.from_vector(proj @ state.ket)
    else:
        post = DensityMatrix(proj @ state.mat @ proj / p[i])
    return Measurement(m.labels[i], post, float(p[i]))


def condition_on(state: State, m: Pvm, label) -> Measurement:
    """Posterior and probability for a forced outcome (no sampling)."""
    i = m.labels.index(label)
    p = probabilities(state, m)[i]
    if p <= 0:
        raise ValueError(f"outcome {label!r} has probability zero")
    proj = m.elements[i]
    if isinstance(state, PureState):
        return Measurement(label, PureState.from_vector(proj @ state.ket), float(p))
    return Measurement(label, DensityMatrix(proj @ state.mat @ proj / p), float(p))


def expectation(rho: DensityMatrix | State, x) -> float:
    x = qmat.as_matrix(x)
    if not qmat.is_hermitian(x):
        raise ValueError("observable must be self-adjoint")
    r = rho.density().mat
    if r.shape != x.shape:
        raise ValueError("state and observable dimensions differ")
    val = np.trace(r @ x)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val)):
        raise ArithmeticError("expectation has a non-negligible imaginary part")
    return float(val.real)


def observable_to_pvm(x) -> Pvm:
    """Spectral PVM of a self-adjoint matrix, ascending eigenvalue labels."""
    pairs = qmat.spectral_projectors(x)
    return Pvm(tuple(v for v, _ in pairs), tuple(p for _, p in pairs))


def pvm_to_observable(m: Pvm) -> np.ndarray:
    return sum(float(lab) * p for lab, p in m.outcomes)


def _merge_distribution(pairs: Iterable[tuple[float, float]], tol: float = qmat.MERGE_TOL):
    merged: list[list[float]] = []
    for value, prob in sorted(pairs):
        if merged and abs(value - merged[-1][0]) <= tol:
            merged[-1][1] += prob
        else:
            merged.append([value, prob])
    return [(v, p) for v, p in merged]


def unconscious_physicist_check(rho, x, f: Callable[[float], float]):
    """Distribution of f(meas X) versus distribution of meas f(X)."""
    pvm = observable_to_pvm(x)
    dist1 = _merge_distribution((float(f(lab)), p) for lab, p in outcome_distribution(rho, pvm))
    fx = observable_to_pvm(qmat.matrix_function(x, f))
    dist2 = _merge_distribution(outcome_distribution(rho, fx))
    return dist1, dist2


def lift_observable(x, side: str, other_dim: int) -> np.ndarray:
    x = qmat.as_matrix(x)
    if not qmat.is_hermitian(x):
        raise ValueError("observable must be self-adjoint")
    other = qmat.identity(other_dim)
    if side == "first":
        return qmat.tensor(x, other)
    if side == "second":
        return qmat.tensor(other, x)
    raise ValueError("side must be 'first' or 'second'")


def orthonormal_frame(n) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing n to a right-handed orthonormal frame.

    The seed axis is the coordinate axis least aligned with n.
    """
    n = np.asarray(n, dtype=float).reshape(3)
    n = n / np.linalg.norm(n)
    seed = np.eye(3)[int(np.argmin(np.abs(n)))]
    e1 = seed - (seed @ n) * n
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def triad_vectors(plane_normal=(0.0, 0.0, 1.0)) -> list[np.ndarray]:
    e1, e2 = orthonormal_frame(plane_normal)
    return [math.cos(2 * math.pi * k / 3) * e1 + math.sin(2 * math.pi * k / 3) * e2 for k in range(3)]


def triad_povm(plane_normal=(0.0, 0.0, 1.0)) -> Povm:
    n = np.asarray(plane_normal, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-10:
        raise ValueError("plane normal must be a unit vector")
    one = qmat.identity(2)
    elems = tuple((one + bloch_operator(v)) / 3 for v in triad_vectors(n))
    return Povm((0, 1, 2), elems)


def fibonacci_sphere(k: int) -> np.ndarray:
    """k roughly equispaced unit vectors (golden-angle spiral), shape (k, 3)."""
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    r = np.sqrt(1 - z * z)
    ang = math.pi * (3 - math.sqrt(5)) * i
    return np.column_stack([r * np.cos(ang), r * np.sin(ang), z])


OCTAHEDRON = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float
)


def sphere_elements_raw(points) -> list[np.ndarray]:
    pts = np.asarray(points, dtype=float)
    k = len(pts)
    one = qmat.identity(2)
    return [(one + bloch_operator(v)) / k for v in pts]


def sphere_povm(k: int, points=None) -> Povm:
    """Discretized uniform spin POVM on k sphere points.

    Each point gets weight 4 pi / k of the density (1 + v.sigma) / 4 pi; the
    elements are then symmetrized with S^{-1/2} so they sum to the identity
    exactly.
    """
    if k < 4:
        raise ValueError("sphere_povm needs at least 4 points")
    pts = fibonacci_sphere(k) if points is None else np.asarray(points, dtype=float)
    if len(pts) != k:
        raise ValueError("number of points does not match k")
    raw = sphere_elements_raw(pts)
    s_inv_half = qmat.matrix_function(sum(raw), lambda x: x ** -0.5)
    elems = tuple(s_inv_half @ e @ s_inv_half for e in raw)
    return Povm(tuple(range(k)), elems)


class NaimarkDilation(NamedTuple):
    ancilla_dim: int
    joint_unitary: np.ndarray
    ancilla_pvm: Pvm
    ancilla_state: PureState


def _complete_to_unitary(cols: np.ndarray, known: Sequence[int], n: int) -> np.ndarray:
    """Fill the remaining columns of an n x n matrix with an orthonormal complement.

    Candidates are standard basis vectors in index order, orthogonalized
    twice (modified Gram-Schmidt) against everything placed so far.
    """
    u = np.zeros((n, n), dtype=complex)
    u[:, list(known)] = cols
    basis_cols = [u[:, j] for j in known]
    free = [j for j in range(n) if j not in set(known)]
    cand = 0
    for j in free:
        while True:
            if cand >= n:
                raise ArithmeticError("unitary completion ran out of candidates")
            v = np.zeros(n, dtype=complex)
            v[cand] = 1.0
            cand += 1
            for _ in range(2):
                for b in basis_cols:
                    v = v - (b.conj() @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-6:
                break
        v = v / nv
        u[:, j] = v
        basis_cols.append(v)
    return u


def naimark_dilation(m: Povm) -> NaimarkDilation:
    """Unitary coupling to an n-level ancilla realizing ``m`` as an ancilla PVM.

    Joint space ordering is system (x) ancilla; the ancilla starts in |0>.
    U|psi>|0> = sum_i sqrt(M_i)|psi> (x) |i>.
    """
    d, n = m.dim, len(m)
    dn = d * n
    iso = sum(qmat.tensor(qmat.matrix_sqrt(e), qmat.basis(n, i)) for i, e in enumerate(m.elements))
    if qmat.frobenius(iso.conj().T @ iso - np.eye(d)) > 1e-8:
        raise ArithmeticError("isometry is not isometric; the POVM is invalid")
    known = [j * n for j in range(d)]
    u = _complete_to_unitary(iso, known, dn)
    anc = Pvm(tuple(m.labels), tuple(qmat.tensor(qmat.identity(d), qmat.projector(qmat.basis(n, i))) for i in range(n)))
    return NaimarkDilation(n, u, anc, PureState(qmat.basis(n, 0)))


def dilation_probabilities(dil: NaimarkDilation, rho: DensityMatrix | State) -> np.ndarray:
    joint = qmat.tensor(rho.density().mat, dil.ancilla_state.density().mat)
    out = dil.joint_unitary @ joint @ dil.joint_unitary.conj().T
    return np.array([np.trace(out @ p).real for p in dil.ancilla_pvm.elements])


# ---------------------------------------------------------------------------
# random constructions for batteries


def random_pure_state(d: int, rng: RngStream) -> PureState:
    g = rng.generator
    return PureState.from_vector(g.normal(size=d) + 1j * g.normal(size=d))


def random_density(d: int, rng: RngStream, rank: int | None = None) -> DensityMatrix:
    g = rng.generator
    r = d if rank is None else rank
    a = g.normal(size=(d, r)) + 1j * g.normal(size=(d, r))
    m = a @ a.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_bloch(rng: RngStream, max_radius: float = 1.0) -> BlochVector:
    g = rng.generator
    v = g.normal(size=3)
    v /= np.linalg.norm(v)
    return BlochVector.from_array(v * max_radius * g.random() ** (1 / 3))


def random_unit(rng: RngStream) -> np.ndarray:
    v = rng.generator.normal(size=3)
    return v / np.linalg.norm(v)


def random_povm(d: int, n_outcomes: int, rng: RngStream) -> Povm:
    """Random POVM: positive matrices normalized by S^{-1/2} . S^{-1/2}."""
    g = rng.generator
    raw = []
    for _ in range(n_outcomes):
        r = int(g.integers(1, d + 1))
        a = g.normal(size=(d, r)) + 1j * g.normal(size=(d, r))
        raw.append(a @ a.conj().T)
    s_inv_half = qmat.matrix_function(sum(raw), lambda x: x ** -0.5)
    return Povm(tuple(range(n_outcomes)), tuple(s_inv_half @ e @ s_inv_half for e in raw))


def random_pvm(d: int, rng: RngStream) -> Pvm:
    g = rng.generator
    q, _ = np.linalg.qr(g.normal(size=(d, d)) + 1j * g.normal(size=(d, d)))
    return pvm_from_vectors([q[:, i] for i in range(d)])


def random_hermitian(d: int, rng: RngStream) -> np.ndarray:
    g = rng.generator
    a = g.normal(size=(d, d)) + 1j * g.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


# ---------------------------------------------------------------------------
# JSON fixtures


def state_to_json(state: State) -> dict:
    if isinstance(state, PureState):
        return {"kind": "pure", **qmat.to_json(state.ket)}
    return {"kind": "density", **qmat.to_json(state.mat)}


def povm_to_json(m: Povm) -> dict:
    kind = "pvm" if isinstance(m, Pvm) else "povm"
    return {
        "kind": kind,
        "outcomes": [{"label": lab, **qmat.to_json(e)} for lab, e in m.outcomes],
    }


def ensemble_to_json(ens: Ensemble) -> dict:
    return {
        "kind": "ensemble",
        "components": [{"weight": w, "state": state_to_json(s)} for w, s in ens.components],
    }


def from_json(obj: dict):
    kind = obj.get("kind")
    if kind == "pure":
        return PureState.from_vector(qmat.from_json(obj))
    if kind == "density":
        return DensityMatrix(qmat.from_json(obj))
    if kind in ("pvm", "povm"):
        cls = Pvm if kind == "pvm" else Povm
        outs = obj["outcomes"]
        return cls(tuple(o["label"] for o in outs), tuple(qmat.from_json(o) for o in outs))
    if kind == "ensemble":
        return Ensemble(tuple((c["weight"], from_json(c["state"])) for c in obj["components"]))
    raise ValueError(f"unknown fixture kind {kind!r}")
