"""Workbench runs: each returns a deterministic report payload plus its checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.stats import binomtest

from . import qcore, qfisher, qmat
from .estimate import Strategy, monte_carlo_risk
from .qcore import RngStream
from .teleport import BELL_NAMES, teleport

SCHEMA = "qstat-report/1"
COMMANDS = ("teleport-demo", "bounds-check", "tomography", "pair-gain", "naimark-check", "delft-demo")


class InvalidInput(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    seed: int = 12345
    n: int | None = None
    reps: int | None = None
    truth: list[float] | None = None
    strategy: list[str] | None = None
    output: str | None = None
    format: str = "json"
    workers: int = 1
    povm: str = "triad"
    alpha: str | None = None
    beta: str | None = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise InvalidInput(f"unknown command {self.command!r}")
        if self.seed < 0:
            raise InvalidInput("seed must be nonnegative")
        if self.n is not None and self.n <= 0:
            raise InvalidInput("n must be positive")
        if self.reps is not None and self.reps < 0:
            raise InvalidInput("reps must be nonnegative")
        if self.workers < 1:
            raise InvalidInput("workers must be at least 1")
        if self.format not in ("json", "csv"):
            raise InvalidInput("format must be json or csv")

    def echo(self) -> dict:
        """Config fields that determine the payload (output location excluded)."""
        d = {k: v for k, v in self.__dict__.items() if k != "output"}
        return d


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), **self.detail}


@dataclass
class RunResult:
    results: dict
    checks: list[Check]
    tables: dict[str, list[dict]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _f(x) -> float:
    return float(x)


# ---------------------------------------------------------------------------


def run_teleport_demo(cfg: RunConfig) -> RunResult:
    n = cfg.n or 1000
    root = RngStream(cfg.seed)
    transcripts = []
    counts = {name: 0 for name in BELL_NAMES.values()}
    min_fid = math.inf
    for i in range(n):
        rng = root.child(i)
        state = qcore.random_pure_state(2, rng)
        t = teleport(state, rng)
        rec = {"seed": cfg.seed, "trial": i, **t.to_json()}
        transcripts.append(rec)
        counts[rec["outcome"]] += 1
        min_fid = min(min_fid, t.fidelity)
    freqs = {k: v / n for k, v in counts.items()}
    checks = [Check("min_fidelity", min_fid >= 1 - 1e-12, {"value": min_fid, "tolerance": 1e-12})]
    if n >= 100:
        sigma = math.sqrt(0.25 * 0.75 / n)
        worst = max(abs(f - 0.25) / sigma for f in freqs.values())
        checks.append(Check("outcome_frequencies_3sigma", worst <= 3.0, {"max_z": worst}))
    results = {"n": n, "outcome_frequencies": freqs, "min_fidelity": min_fid, "transcripts": transcripts}
    return RunResult(results, checks, {"transcripts": transcripts})


# ---------------------------------------------------------------------------


def one_parameter_submodel(model: qfisher.ParametricModel, theta, direction) -> qfisher.ParametricModel:
    """eta -> model(theta + eta * direction), evaluated near eta = 0."""
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(direction, dtype=float)
    return qfisher.ParametricModel(
        dim=model.dim,
        param_dim=1,
        state_at=lambda eta: model.rho(theta + eta[0] * d),
        derivative_at=lambda eta, i: sum(d[k] * model.drho(theta + eta[0] * d, k) for k in range(len(d))),
        name=f"{model.name}|line",
    )


def _random_model_point(k: int, rng: RngStream):
    g = rng.generator
    if k % 2 == 0:
        a = qcore.random_bloch(rng, 0.95).vector
        return qfisher.bloch_ball(), a
    return qfisher.pure_qubit(), np.array([g.uniform(0.1, math.pi - 0.1), g.uniform(0, 2 * math.pi)])


def _bounds_row(model, theta, mid: str, m: qcore.Povm) -> dict:
    gap = qfisher.check_braunstein_caves(model, theta, m)
    gm = qfisher.gill_massar_trace(model, theta, m)
    return {
        "model": model.name,
        "theta": " ".join(f"{x:.12g}" for x in np.atleast_1d(theta)),
        "measurement": mid,
        "trace_statistic": gm.value,
        "min_gap_eigenvalue": gap.min_gap_eigenvalue,
        "condition_number": gm.condition,
    }


def run_bounds_check(cfg: RunConfig) -> RunResult:
    reps = 500 if cfg.reps is None else cfg.reps
    root = RngStream(cfg.seed)
    rows = []
    for k in range(reps):
        rng = root.child(k)
        model, theta = _random_model_point(k, rng)
        m = qcore.random_povm(2, int(rng.generator.integers(2, 7)), rng)
        rows.append({"seed": cfg.seed, "stream": k, **_bounds_row(model, theta, f"random-povm-{k}", m)})
    sld_rows = []
    for k in range(min(reps, 20)):
        rng = root.child(reps + k)
        model, theta = _random_model_point(k, rng)
        direction = rng.generator.normal(size=model.param_dim)
        sub = one_parameter_submodel(model, theta, direction / np.linalg.norm(direction))
        row = _bounds_row(sub, np.zeros(1), f"sld-pvm-{k}", qfisher.sld_pvm(sub, np.zeros(1)))
        sld_rows.append({"seed": cfg.seed, "stream": reps + k, **row})
    all_rows = rows + sld_rows
    min_gap = min((r["min_gap_eigenvalue"] for r in all_rows), default=0.0)
    max_trace = max((r["trace_statistic"] for r in all_rows), default=0.0)
    max_sld_gap = max((abs(r["min_gap_eigenvalue"]) for r in sld_rows), default=0.0)
    checks = [
        Check("braunstein_caves", min_gap >= -1e-8, {"min_gap_eigenvalue": min_gap, "tolerance": 1e-8}),
        Check("gill_massar_single_copy", max_trace <= 1 + 1e-8, {"max_trace_statistic": max_trace}),
        Check("sld_pvm_attains_bound", max_sld_gap <= 1e-8, {"max_abs_gap": max_sld_gap}),
    ]
    results = {"reps": reps, "rows": len(all_rows), "min_gap_eigenvalue": min_gap, "max_trace_statistic": max_trace,
               "max_sld_gap": max_sld_gap}
    return RunResult(results, checks, {"bounds": all_rows})


# ---------------------------------------------------------------------------


DEFAULT_PURE_TRUTH = [math.pi / 3, 1.0]
DEFAULT_MIXED_TRUTH = list(np.full(3, 0.017 / math.sqrt(3)))


def run_tomography(cfg: RunConfig) -> RunResult:
    truth = cfg.truth
    if cfg.strategy:
        try:
            strategies = [Strategy(s) for s in cfg.strategy]
        except ValueError as exc:
            raise InvalidInput(str(exc)) from None
    elif truth is not None and len(truth) == 3:
        strategies = [Strategy.FIXED_XYZ, Strategy.PAIR_7]
    else:
        strategies = [Strategy.TWO_STAGE, Strategy.ALIGNED]
    if truth is None:
        truth = DEFAULT_PURE_TRUTH if strategies[0].pure else DEFAULT_MIXED_TRUTH
    if len({s.pure for s in strategies}) != 1:
        raise InvalidInput("pure-state and mixed-state strategies cannot share one truth")
    n = cfg.n or 4096
    reps = 500 if cfg.reps is None else cfg.reps
    reports = {}
    for s in strategies:
        try:
            reports[s] = monte_carlo_risk(s, truth, n, reps, cfg.seed, cfg.workers)
        except ValueError as exc:
            raise InvalidInput(str(exc)) from None
    checks = []
    for s, r in reports.items():
        if s is Strategy.PAIR_7:
            if np.linalg.norm(truth) <= 0.1:
                checks.append(Check(f"{s.value}_exceeds_multilocal_bound", r.bound_statistic > 1.0,
                                    {"bound_statistic": r.bound_statistic}))
            continue
        ceiling = 1.0 + 3 * r.bound_se
        checks.append(Check(f"{s.value}_multilocal_ceiling", r.bound_statistic <= ceiling,
                            {"bound_statistic": r.bound_statistic, "ceiling": ceiling}))
    if Strategy.TWO_STAGE in reports and Strategy.ALIGNED in reports:
        two, ali = reports[Strategy.TWO_STAGE], reports[Strategy.ALIGNED]
        wins = int(np.sum(two.quadratic_losses() < ali.quadratic_losses()))
        p = binomtest(wins, reps, 0.5, alternative="greater").pvalue if reps else 1.0
        checks.append(Check("two_stage_dominates_aligned",
                            two.bound_statistic > ali.bound_statistic and p < 1e-3,
                            {"wins": wins, "reps": reps, "sign_test_p": float(p)}))
    if Strategy.FIXED_XYZ in reports and Strategy.PAIR_7 in reports:
        ratio = reports[Strategy.PAIR_7].bound_statistic / reports[Strategy.FIXED_XYZ].bound_statistic
        checks.append(Check("pair_gain_over_fixed_xyz", ratio >= 1.15, {"ratio": ratio}))
    rows = [r.row() for r in reports.values()]
    results = {"n": n, "reps": reps, "truth": [_f(x) for x in truth],
               "strategies": {s.value: _risk_json(r) for s, r in reports.items()}}
    return RunResult(results, checks, {"risk": rows})


def _risk_json(r) -> dict:
    return {
        "v_hat": r.v_hat.tolist(),
        "monte_carlo_se": r.monte_carlo_se.tolist(),
        "bound_statistic": r.bound_statistic,
        "bound_statistic_se": r.bound_se,
    }


def run_pair_gain(cfg: RunConfig) -> RunResult:
    truth = np.asarray(cfg.truth if cfg.truth is not None else DEFAULT_MIXED_TRUTH, dtype=float)
    if truth.shape != (3,) or np.linalg.norm(truth) >= 1:
        raise InvalidInput("pair-gain needs a Bloch-vector truth inside the ball")
    gm = qfisher.gill_massar_trace(qfisher.bloch_ball(), truth, qfisher.pair_povm_7(), 2)
    checks = [Check("pair_fisher_gain", gm.value > 1.1, {"trace_statistic": gm.value, "expected": 1.5})]
    results: dict[str, Any] = {"truth": truth.tolist(), "pair_trace_statistic": gm.value}
    tables: dict[str, list[dict]] = {}
    reps = 500 if cfg.reps is None else cfg.reps
    if reps >= 2:
        n = cfg.n or 10_000
        if n % 2:
            raise InvalidInput("pair-gain needs an even n")
        xyz = monte_carlo_risk(Strategy.FIXED_XYZ, truth, n, reps, cfg.seed, cfg.workers)
        pair = monte_carlo_risk(Strategy.PAIR_7, truth, n, reps, cfg.seed, cfg.workers)
        ratio = pair.bound_statistic / xyz.bound_statistic
        checks.append(Check("pair_mle_improvement", ratio >= 1.15, {"ratio": ratio, "threshold": 1.15}))
        results.update(n=n, reps=reps, improvement_ratio=ratio,
                       strategies={"fixed-xyz": _risk_json(xyz), "pair-7": _risk_json(pair)})
        tables["risk"] = [xyz.row(), pair.row()]
    return RunResult(results, checks, tables)


# ---------------------------------------------------------------------------


def load_povm(spec: str) -> tuple[str, qcore.Povm]:
    if spec == "triad":
        return spec, qcore.triad_povm()
    if spec == "pair7":
        return spec, qfisher.pair_povm_7()
    if spec == "pvm":
        return spec, qcore.spin_pvm([0.0, 0.0, 1.0])
    if spec.startswith("sphere:"):
        try:
            k = int(spec.split(":", 1)[1])
            return spec, qcore.sphere_povm(k)
        except ValueError as exc:
            raise InvalidInput(str(exc)) from None
    path = Path(spec)
    if not path.exists():
        raise InvalidInput(f"unknown POVM {spec!r}")
    try:
        obj = qcore.from_json(json.loads(path.read_text()))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"invalid POVM fixture: {exc}") from None
    if not isinstance(obj, qcore.Povm):
        raise InvalidInput("fixture is not a POVM")
    return path.name, obj


def run_naimark_check(cfg: RunConfig) -> RunResult:
    name, m = load_povm(cfg.povm)
    reps = 100 if cfg.reps is None else cfg.reps
    dil = qcore.naimark_dilation(m)
    root = RngStream(cfg.seed)
    worst = 0.0
    for k in range(reps):
        rho = qcore.random_density(m.dim, root.child(k))
        dev = np.max(np.abs(qcore.dilation_probabilities(dil, rho) - qcore.probabilities(rho, m)))
        worst = max(worst, float(dev))
    tol = 1e-9
    checks = [Check("dilation_matches_trace_rule", worst < tol, {"max_deviation": worst, "tolerance": tol})]
    unit_dev = qmat.frobenius(dil.joint_unitary.conj().T @ dil.joint_unitary - np.eye(dil.joint_unitary.shape[0]))
    checks.append(Check("joint_unitary", unit_dev < 1e-9, {"deviation": unit_dev}))
    results = {"povm": name, "outcomes": len(m), "ancilla_dim": dil.ancilla_dim,
               "joint_dim": dil.joint_unitary.shape[0], "reps": reps, "max_deviation": worst}
    return RunResult(results, checks, {"naimark": [dict(results)]})


# ---------------------------------------------------------------------------


HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def _parse_complex(s: str | None, default: complex) -> complex:
    if s is None:
        return default
    try:
        return complex(s.replace(" ", ""))
    except ValueError:
        raise InvalidInput(f"cannot parse complex number {s!r}") from None


def _delft_states(alpha: complex, beta: complex) -> dict:
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-12:
        raise InvalidInput("alpha and beta must satisfy |alpha|^2 + |beta|^2 = 1")
    sup = qcore.PureState.from_vector([alpha, beta]).density()
    comps = [(abs(alpha) ** 2, qcore.PureState(qmat.basis(2, 0))), (abs(beta) ** 2, qcore.PureState(qmat.basis(2, 1)))]
    mixture = qcore.mix(qcore.Ensemble(tuple((w, s) for w, s in comps if w > 0)))
    return {
        name: {"direct": rho, "rotated": qcore.apply_unitary(rho, HADAMARD)}
        for name, rho in (("superposition", sup), ("mixture", mixture))
    }


COMPUTATIONAL = qcore.pvm_from_vectors([qmat.basis(2, 0), qmat.basis(2, 1)], labels=(0, 1))


def delft_tables(alpha: complex, beta: complex) -> dict:
    """Outcome distributions of the coherent superposition and the classical mixture,
    measured directly and after the basis-rotation unitary."""
    return {
        name: {stage: qcore.probabilities(rho, COMPUTATIONAL).tolist() for stage, rho in stages.items()}
        for name, stages in _delft_states(alpha, beta).items()
    }


def run_delft_demo(cfg: RunConfig) -> RunResult:
    alpha = _parse_complex(cfg.alpha, 1 / math.sqrt(2))
    beta = _parse_complex(cfg.beta, 1 / math.sqrt(2))
    tables = delft_tables(alpha, beta)
    expected_rot = [abs(alpha + beta) ** 2 / 2, abs(alpha - beta) ** 2 / 2]
    expected_direct = [abs(alpha) ** 2, abs(beta) ** 2]
    analytic_err = max(
        np.max(np.abs(np.array(tables["superposition"]["rotated"]) - expected_rot)),
        np.max(np.abs(np.array(tables["mixture"]["rotated"]) - [0.5, 0.5]))
        if abs(alpha) > 0 and abs(beta) > 0 else 0.0,
        np.max(np.abs(np.array(tables["superposition"]["direct"]) - expected_direct)),
        np.max(np.abs(np.array(tables["mixture"]["direct"]) - expected_direct)),
    )
    checks = [Check("analytic_tables", analytic_err <= 1e-12, {"max_error": float(analytic_err)})]
    n = cfg.n or 100_000
    root = RngStream(cfg.seed)
    states = _delft_states(alpha, beta)
    empirical: dict[str, dict] = {}
    worst_z = 0.0
    k = 0
    for name in ("superposition", "mixture"):
        empirical[name] = {}
        for stage in ("direct", "rotated"):
            p0 = tables[name][stage][0]
            idx = qcore.sample_indices(states[name][stage], COMPUTATIONAL, n, root.child(k))
            k += 1
            freq = float(np.mean(idx == 0))
            empirical[name][stage] = [freq, 1 - freq]
            sd = math.sqrt(p0 * (1 - p0) / n)
            z = abs(freq - p0) / sd if sd > 0 else (0.0 if abs(freq - p0) < 1e-12 else math.inf)
            worst_z = max(worst_z, z)
    checks.append(Check("monte_carlo_3sigma", worst_z <= 3.0, {"max_z": worst_z}))
    results = {"alpha": [alpha.real, alpha.imag], "beta": [beta.real, beta.imag], "n": n,
               "analytic": tables, "empirical": empirical}
    rows = [
        {"scenario": name, "basis": stage, "p0": tables[name][stage][0], "p1": tables[name][stage][1],
         "f0": empirical[name][stage][0], "f1": empirical[name][stage][1], "n": n, "seed": cfg.seed}
        for name in ("superposition", "mixture") for stage in ("direct", "rotated")
    ]
    return RunResult(results, checks, {"delft": rows})


RUNNERS = {
    "teleport-demo": run_teleport_demo,
    "bounds-check": run_bounds_check,
    "tomography": run_tomography,
    "pair-gain": run_pair_gain,
    "naimark-check": run_naimark_check,
    "delft-demo": run_delft_demo,
}


def execute(cfg: RunConfig) -> RunResult:
    cfg.validate()
    return RUNNERS[cfg.command](cfg)


def report_payload(cfg: RunConfig, result: RunResult) -> dict:
    return {
        "schema": SCHEMA,
        "command": cfg.command,
        "config": cfg.echo(),
        "passed": result.passed,
        "checks": [c.to_json() for c in result.checks],
        "results": result.results,
    }
