"""Teleportation of one qubit through a shared singlet.

Qubit order throughout is (teleportee, Alice's half, Bob's half).  Outcome
labels 1..4 stand for the Bell states Phi1, Phi2, Psi1, Psi2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import qmat
from .qcore import PureState, Pvm, RngStream, measure, unit_to_polar

_S = 1 / math.sqrt(2)

BELL_NAMES = {1: "Phi1", 2: "Phi2", 3: "Psi1", 4: "Psi2"}


class BellBasis(NamedTuple):
    phi1: PureState
    phi2: PureState
    psi1: PureState
    psi2: PureState


def bell_basis() -> BellBasis:
    return BellBasis(
        PureState(qmat.ket(_S, 0, 0, _S)),
        PureState(qmat.ket(_S, 0, 0, -_S)),
        PureState(qmat.ket(0, _S, _S, 0)),
        PureState(qmat.ket(0, _S, -_S, 0)),
    )


def _bell_vector(label: int) -> np.ndarray:
    return {
        1: qmat.ket(_S, 0, 0, _S),
        2: qmat.ket(_S, 0, 0, -_S),
        3: qmat.ket(0, _S, _S, 0),
        4: qmat.ket(0, _S, -_S, 0),
    }[label]


def make_singlet() -> PureState:
    return PureState(qmat.ket(0, _S, -_S, 0))


def _singlet_raw() -> np.ndarray:
    return qmat.ket(0, _S, -_S, 0)


def alice_bell_pvm() -> Pvm:
    one = qmat.identity(2)
    return Pvm(
        (1, 2, 3, 4),
        tuple(qmat.tensor(qmat.projector(_bell_vector(k)), one) for k in (1, 2, 3, 4)),
    )


# Bob's conditional states are (-b, a), (b, a), (-a, b), (-a, -b); each
# correction maps its state back to (a, b).
CORRECTIONS = {
    1: np.array([[0, 1], [-1, 0]], dtype=complex),
    2: np.array([[0, 1], [1, 0]], dtype=complex),
    3: np.array([[-1, 0], [0, 1]], dtype=complex),
    4: -np.eye(2, dtype=complex),
}

CORRECTION_NAMES = {1: "flip+sign", 2: "flip", 3: "sign", 4: "minus-identity"}


def correction_for(outcome: int) -> np.ndarray:
    try:
        return CORRECTIONS[outcome].copy()
    except KeyError:
        raise ValueError(f"unknown Bell outcome {outcome!r}") from None


def joint_state(input_state: PureState) -> np.ndarray:
    """Unnormalized-phase 8-vector input (x) singlet, before any canonicalization."""
    if input_state.dim != 2:
        raise ValueError("teleportation input must be a qubit")
    return qmat.tensor(input_state.ket, _singlet_raw())


def bob_conditional(vec8: np.ndarray, outcome: int) -> np.ndarray:
    """Bob's (unnormalized) qubit given Alice's Bell outcome: (<B| (x) 1) vec8."""
    bra = qmat.tensor(_bell_vector(outcome).conj().T, qmat.identity(2))
    return bra @ vec8


def bell_expansion(input_state: PureState) -> list[tuple[int, np.ndarray]]:
    """The four Bell-conditional Bob qubits, each scaled to unit norm.

    ``input (x) singlet == sum_k 1/2 * B_k (x) chi_k``.
    """
    vec = joint_state(input_state)
    return [(k, 2 * bob_conditional(vec, k)) for k in (1, 2, 3, 4)]


@dataclass(frozen=True)
class TeleportTranscript:
    input: PureState
    outcome: int
    outcome_prob: float
    bob_pre: PureState
    correction: np.ndarray
    bob_final: PureState

    @property
    def fidelity(self) -> float:
        return self.input.fidelity(self.bob_final)

    def to_json(self) -> dict:
        theta, phi = unit_to_polar(_bloch(self.input))
        return {
            "theta": theta,
            "phi": phi,
            "outcome": BELL_NAMES[self.outcome],
            "outcome_prob": self.outcome_prob,
            "correction": CORRECTION_NAMES[self.outcome],
            "fidelity": self.fidelity,
        }


def _bloch(state: PureState) -> np.ndarray:
    v = state.ket.reshape(-1)
    a = 2 * np.conj(v[0]) * v[1]
    return np.array([a.real, a.imag, abs(v[0]) ** 2 - abs(v[1]) ** 2])


def _finish(input_state: PureState, outcome: int, prob: float, post8: np.ndarray) -> TeleportTranscript:
    chi = bob_conditional(post8, outcome)
    bob_pre = PureState.from_vector(chi)
    u = correction_for(outcome)
    bob_final = PureState.from_vector(u @ bob_pre.ket)
    return TeleportTranscript(input_state, outcome, prob, bob_pre, u, bob_final)


def teleport(input_state: PureState, rng: RngStream) -> TeleportTranscript:
    """Run the protocol once, sampling Alice's Bell measurement."""
    vec = joint_state(input_state)
    res = measure(PureState.from_vector(vec), alice_bell_pvm(), rng)
    return _finish(input_state, int(res.label), res.probability, res.posterior.ket)


def teleport_conditioned(input_state: PureState, outcome: int) -> TeleportTranscript:
    """Run the protocol with Alice's outcome forced, for exhaustive checks."""
    vec = joint_state(input_state)
    proj = alice_bell_pvm().elements[outcome - 1]
    post = proj @ vec
    prob = float(np.linalg.norm(post) ** 2)
    return _finish(input_state, outcome, prob, post / math.sqrt(prob))


def bob_marginal(input_state: PureState) -> np.ndarray:
    """Bob's density before Alice's message: sum_k 1/4 |chi_k><chi_k|."""
    return sum(0.25 * qmat.projector(chi) for _, chi in bell_expansion(input_state))


def alice_outcome_probabilities(input_state: PureState) -> np.ndarray:
    vec = joint_state(input_state)
    return np.array([np.linalg.norm(p @ vec) ** 2 for p in alice_bell_pvm().elements])
