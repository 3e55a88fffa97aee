"""Estimation strategies for qubit tomography and their Monte Carlo risk.

Pure-state strategies estimate polar angles (theta, phi); mixed-state
strategies estimate the Bloch vector a.  Measurement outcomes are drawn as
binomial / multinomial counts with trace-rule probabilities, which is
equivalent to sampling every particle separately.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import qfisher
from .qcore import (
    RngStream,
    bloch_to_density,
    BlochVector,
    orthonormal_frame,
    polar_to_unit,
    probabilities,
    spin_pvm,
    unit_to_polar,
    DensityMatrix,
)
from .qmat import tensor

BALL_RADIUS = 1 - 1e-6
NEWTON_MAX_ITER = 50
NEWTON_GRAD_TOL = 1e-9
GRID_SIZE = 64


class Strategy(str, enum.Enum):
    TWO_STAGE = "two-stage"
    ALIGNED = "aligned"
    FIXED_XYZ = "fixed-xyz"
    PAIR_7 = "pair-7"

    @property
    def pure(self) -> bool:
        return self in (Strategy.TWO_STAGE, Strategy.ALIGNED)


class MleFailure(ArithmeticError):
    pass


@dataclass
class TrialResult:
    estimate: np.ndarray
    truth: np.ndarray
    n: int
    seed: int
    path: tuple[int, ...] = ()
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# spin-count likelihood on the sphere


def spin_loglik(u: np.ndarray, dirs: np.ndarray, plus: np.ndarray, total: np.ndarray) -> float:
    c = dirs @ u
    minus = total - plus
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(plus > 0, plus * np.log1p(c), 0.0) + np.where(minus > 0, minus * np.log1p(-c), 0.0)
    val = float(np.sum(terms))
    return val if math.isfinite(val) else -math.inf


def _spin_grad_u(u, dirs, plus, total) -> np.ndarray:
    c = dirs @ u
    minus = total - plus
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(plus > 0, plus / (1 + c), 0.0) - np.where(minus > 0, minus / (1 - c), 0.0)
    return coef @ dirs


class _Chart:
    """Gnomonic chart u(x) = (r + x0 e1 + x1 e2)/|.| around a centre r."""

    def __init__(self, centre: np.ndarray):
        self.r = centre / np.linalg.norm(centre)
        self.e1, self.e2 = orthonormal_frame(self.r)
        self.basis = np.column_stack([self.e1, self.e2])

    def point(self, x) -> np.ndarray:
        w = self.r + self.basis @ x
        return w / np.linalg.norm(w)

    def grad(self, x, dirs, plus, total) -> np.ndarray:
        w = self.r + self.basis @ x
        nw = np.linalg.norm(w)
        u = w / nw
        gu = _spin_grad_u(u, dirs, plus, total)
        proj = gu - (gu @ u) * u
        return self.basis.T @ proj / nw


def _newton_chart(chart: _Chart, dirs, plus, total) -> tuple[np.ndarray, bool]:
    x = np.zeros(2)
    scale = max(1.0, float(np.sum(total)))
    f = spin_loglik(chart.point(x), dirs, plus, total)
    if not math.isfinite(f):
        # centre sits on a zero-probability point; start from the best nearby ring point
        ring = [0.05 * np.array([math.cos(t), math.sin(t)]) for t in np.arange(16) * math.pi / 8]
        vals = [spin_loglik(chart.point(r), dirs, plus, total) for r in ring]
        k = int(np.argmax(vals))
        x, f = ring[k], vals[k]
        if not math.isfinite(f):
            return x, False
    for _ in range(NEWTON_MAX_ITER):
        g = chart.grad(x, dirs, plus, total)
        if not np.all(np.isfinite(g)):
            return x, False
        if np.linalg.norm(g) < NEWTON_GRAD_TOL * scale:
            return x, True
        h = 1e-6 * (1 + np.linalg.norm(x))
        hess = np.column_stack(
            [
                (chart.grad(x + h * e, dirs, plus, total) - chart.grad(x - h * e, dirs, plus, total)) / (2 * h)
                for e in np.eye(2)
            ]
        )
        hess = 0.5 * (hess + hess.T)
        if not np.all(np.isfinite(hess)):
            return x, False
        # Newton step with |eigenvalues|, so indefinite curvature still gives an ascent direction
        evals, evecs = np.linalg.eigh(hess)
        curv = np.maximum(np.abs(evals), 1e-9 * scale)
        step = evecs @ ((evecs.T @ g) / curv)
        t = 1.0
        while t > 1e-12:
            xn = x + t * step
            fn = spin_loglik(chart.point(xn), dirs, plus, total)
            if fn >= f:
                break
            t *= 0.5
        else:
            return x, np.linalg.norm(g) < 1e-6 * scale
        x, f = xn, fn
        if np.linalg.norm(x) > 1e6:
            return x, False
    g = chart.grad(x, dirs, plus, total)
    return x, bool(np.linalg.norm(g) < 1e-6 * scale)


def _grid_best(dirs, plus, total) -> np.ndarray:
    best, best_u = -math.inf, np.array([0.0, 0.0, 1.0])
    for th in (np.arange(GRID_SIZE) + 0.5) * math.pi / GRID_SIZE:
        for ph in np.arange(GRID_SIZE) * 2 * math.pi / GRID_SIZE:
            u = polar_to_unit(th, ph)
            val = spin_loglik(u, dirs, plus, total)
            if val > best:
                best, best_u = val, u
    return best_u


def spin_mle(dirs, plus, total, start) -> np.ndarray:
    """Maximum-likelihood spin direction from +1 counts along given directions.

    Newton iteration in a chart centred on ``start``; if it leaves the chart
    or stalls, restart from the best point of a 64 x 64 polar grid.
    """
    dirs = np.asarray(dirs, dtype=float)
    plus = np.asarray(plus, dtype=float)
    total = np.asarray(total, dtype=float)
    chart = _Chart(np.asarray(start, dtype=float))
    x, ok = _newton_chart(chart, dirs, plus, total)
    if ok:
        return chart.point(x)
    chart = _Chart(_grid_best(dirs, plus, total))
    x, ok = _newton_chart(chart, dirs, plus, total)
    if not ok:
        raise MleFailure("spin-direction likelihood maximization did not converge")
    return chart.point(x)


# ---------------------------------------------------------------------------
# pure-state strategies


def _spin_counts(bloch: np.ndarray, dirs: np.ndarray, sizes: Sequence[int], rng: RngStream) -> np.ndarray:
    rho = bloch_to_density(BlochVector.from_array(_shrink(bloch)))
    p_plus = np.array([probabilities(rho, spin_pvm(d))[0] for d in dirs])
    return rng.generator.binomial(np.asarray(sizes), np.clip(p_plus, 0.0, 1.0))


def _shrink(a: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(a)
    return a if r <= 1.0 else a / r


def stage_sizes(n: int) -> tuple[int, int, int]:
    """(per-axis stage-1 size, first stage-2 half, second stage-2 half)."""
    if n < 100:
        raise ValueError("adaptive strategies need n >= 100")
    m1 = math.isqrt(n - 1) + 1 if n > 1 else 1  # ceil(sqrt(n))
    rest = n - 3 * m1
    return m1, rest // 2, rest - rest // 2


def _stage_one(u: np.ndarray, n: int, rng: RngStream):
    m1, h1, h2 = stage_sizes(n)
    axes = np.eye(3)
    plus1 = _spin_counts(u, axes, [m1] * 3, rng)
    rough = 2 * plus1 / m1 - 1
    if np.linalg.norm(rough) == 0:
        rough = np.array([0.0, 0.0, 1.0])
    rough = rough / np.linalg.norm(rough)
    return axes, plus1, np.array([m1] * 3), rough, (h1, h2)


def _polar(u: np.ndarray) -> np.ndarray:
    return np.array(unit_to_polar(u))


def two_stage_pure(n: int, truth, rng: RngStream) -> TrialResult:
    """Rough xyz estimate on ceil(sqrt n) particles per axis, then spin
    measurements on two directions orthogonal to the rough direction; the
    estimate maximizes the stage-2 likelihood in the rough hemisphere.
    """
    truth = np.asarray(truth, dtype=float)
    u = polar_to_unit(*truth)
    axes, plus1, tot1, rough, (h1, h2) = _stage_one(u, n, rng)
    e1, e2 = orthonormal_frame(rough)
    dirs2 = np.array([e1, e2])
    plus2 = _spin_counts(u, dirs2, [h1, h2], rng)
    est = spin_mle(dirs2, plus2, np.array([h1, h2]), rough)
    return TrialResult(_polar(est), truth, n, rng.seed, rng.path, {"rough": rough, "stage2_plus": plus2})


def aligned_strategy(n: int, truth, rng: RngStream) -> TrialResult:
    """Same staging as two_stage_pure, but all stage-2 particles are measured
    along the rough direction itself.  The fit uses stage-1 and stage-2
    counts together, since stage-2 counts alone only fix the angle to the
    rough direction.
    """
    truth = np.asarray(truth, dtype=float)
    u = polar_to_unit(*truth)
    axes, plus1, tot1, rough, (h1, h2) = _stage_one(u, n, rng)
    dirs2 = np.array([rough, rough])
    plus2 = _spin_counts(u, dirs2, [h1, h2], rng)
    dirs = np.vstack([axes, dirs2])
    est = spin_mle(dirs, np.concatenate([plus1, plus2]), np.concatenate([tot1, [h1, h2]]), rough)
    return TrialResult(_polar(est), truth, n, rng.seed, rng.path, {"rough": rough, "stage2_plus": plus2})


# ---------------------------------------------------------------------------
# mixed-state strategies


def project_to_ball(a, radius: float = 1.0) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    r = np.linalg.norm(a)
    return a if r <= radius else a * (radius / r)


def xyz_sizes(n: int) -> list[int]:
    return [n // 3 + (1 if i < n % 3 else 0) for i in range(3)]


def fixed_xyz(n: int, truth, rng: RngStream) -> TrialResult:
    """n/3 particles per axis; a_i = (#plus - #minus)/(n/3), projected onto the ball."""
    a = np.asarray(truth, dtype=float)
    if np.linalg.norm(a) >= 1:
        raise ValueError("fixed_xyz needs a mixed (interior) truth")
    sizes = np.array(xyz_sizes(n))
    plus = _spin_counts(a, np.eye(3), sizes, rng)
    raw = (2 * plus - sizes) / sizes
    return TrialResult(project_to_ball(raw), a, n, rng.seed, rng.path, {"raw": raw})


def pair_loglik(a, counts) -> float:
    p = qfisher.pair_probabilities(a)
    if np.any(p[counts > 0] <= 0):
        return -math.inf
    return float(np.sum(np.where(counts > 0, counts * np.log(np.where(p > 0, p, 1.0)), 0.0)))


def _pair_grad_hess(a, c):
    cp, cm, cs = c[0:6:2], c[1:6:2], c[6]
    r2 = float(a @ a)
    g = 2 * cp / (1 + a) - 2 * cm / (1 - a) - 2 * cs * a / (1 - r2)
    h = np.diag(-2 * cp / (1 + a) ** 2 - 2 * cm / (1 - a) ** 2)
    h -= cs * (2 * np.eye(3) / (1 - r2) + 4 * np.outer(a, a) / (1 - r2) ** 2)
    return g, h


def pair_moment_estimate(counts) -> np.ndarray:
    """Unbiased moment estimator: P(+w+w) - P(-w-w) = a_w / 2."""
    c = np.asarray(counts, dtype=float)
    f = c / c.sum()
    return 2 * (f[0:6:2] - f[1:6:2])


def pair_mle(counts, start=None) -> np.ndarray:
    """Projected Newton ascent of the (concave) seven-outcome log-likelihood."""
    c = np.asarray(counts, dtype=float)
    scale = max(1.0, c.sum())
    starts = [project_to_ball(pair_moment_estimate(c) if start is None else start, 0.9), np.zeros(3)]
    for a in starts:
        f = pair_loglik(a, c)
        for _ in range(NEWTON_MAX_ITER):
            g, h = _pair_grad_hess(a, c)
            if np.linalg.norm(g) < NEWTON_GRAD_TOL * scale:
                return a
            try:
                step = -np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                step = g / scale
            t = 1.0
            while t > 1e-12:
                an = project_to_ball(a + t * step, BALL_RADIUS)
                fn = pair_loglik(an, c)
                if fn >= f:
                    break
                t *= 0.5
            else:
                break
            if np.allclose(an, a, rtol=0, atol=1e-15):
                return a
            a, f = an, fn
        else:
            g, _ = _pair_grad_hess(a, c)
            if np.linalg.norm(g) < 1e-6 * scale or np.linalg.norm(a) >= BALL_RADIUS - 1e-12:
                return a
    raise MleFailure("pair-measurement likelihood maximization did not converge")


def pair_strategy_7(n: int, truth, rng: RngStream) -> TrialResult:
    a = np.asarray(truth, dtype=float)
    if n % 2:
        raise ValueError("pair strategy needs an even number of particles")
    if np.linalg.norm(a) >= 1:
        raise ValueError("pair strategy needs a mixed (interior) truth")
    rho = bloch_to_density(BlochVector.from_array(a)).mat
    p = probabilities(DensityMatrix(tensor(rho, rho)), qfisher.pair_povm_7())
    p = np.clip(p, 0.0, None)
    counts = rng.generator.multinomial(n // 2, p / p.sum())
    return TrialResult(pair_mle(counts), a, n, rng.seed, rng.path, {"counts": counts})


STRATEGIES: dict[Strategy, Callable[[int, np.ndarray, RngStream], TrialResult]] = {
    Strategy.TWO_STAGE: two_stage_pure,
    Strategy.ALIGNED: aligned_strategy,
    Strategy.FIXED_XYZ: fixed_xyz,
    Strategy.PAIR_7: pair_strategy_7,
}


# ---------------------------------------------------------------------------
# Monte Carlo risk


def model_for(strategy: Strategy) -> qfisher.ParametricModel:
    return qfisher.pure_qubit() if strategy.pure else qfisher.bloch_ball()


def check_truth(strategy: Strategy, truth) -> np.ndarray:
    t = np.asarray(truth, dtype=float)
    if strategy.pure:
        if t.shape != (2,):
            raise ValueError(f"{strategy.value} needs a pure truth (theta, phi)")
        if not (0 < t[0] < math.pi):
            raise ValueError("pure truth must avoid the poles (theta in (0, pi))")
    else:
        if t.shape != (3,):
            raise ValueError(f"{strategy.value} needs a Bloch-vector truth (ax, ay, az)")
        if np.linalg.norm(t) >= BALL_RADIUS:
            raise ValueError("mixed-state strategies need |a| < 1")
    return t


def trial_error(strategy: Strategy, result: TrialResult) -> np.ndarray:
    e = result.estimate - result.truth
    if strategy.pure:
        e[1] = (e[1] + math.pi) % (2 * math.pi) - math.pi
    return e


def _run_chunk(args) -> list[np.ndarray]:
    strategy, truth, n, seed, indices = args
    fn = STRATEGIES[strategy]
    root = RngStream(seed)
    return [trial_error(strategy, fn(n, truth, root.child(i))) for i in indices]


def run_trials(strategy, truth, n: int, reps: int, seed: int, workers: int = 1) -> np.ndarray:
    """Errors of ``reps`` independent trials, row i from child stream i."""
    strategy = Strategy(strategy)
    truth = check_truth(strategy, truth)
    if reps == 0:
        return np.zeros((0, len(truth)))
    if workers <= 1:
        rows = _run_chunk((strategy, truth, n, seed, range(reps)))
    else:
        chunks = [list(range(reps))[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [(strategy, truth, n, seed, c) for c in chunks]))
        rows = [None] * reps
        for c, part in zip(chunks, parts):
            for i, e in zip(c, part):
                rows[i] = e
    return np.array(rows)


def _fsum_mean_outer(errors: np.ndarray) -> np.ndarray:
    p = errors.shape[1]
    out = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            out[i, j] = out[j, i] = math.fsum(errors[:, i] * errors[:, j]) / len(errors)
    return out


@dataclass
class RiskReport:
    strategy: str
    n: int
    reps: int
    seed: int
    truth: np.ndarray
    v_hat: np.ndarray
    monte_carlo_se: np.ndarray
    bound_statistic: float
    bound_se: float
    errors: np.ndarray = field(repr=False)

    def quadratic_losses(self) -> np.ndarray:
        """Per-trial n (e^T I_Q e), for paired comparisons."""
        iq = qfisher.quantum_info(model_for(Strategy(self.strategy)), self.truth)
        return self.n * np.einsum("ri,ij,rj->r", self.errors, iq, self.errors)

    def row(self) -> dict:
        out = {
            "strategy": self.strategy,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "truth": " ".join(f"{x:.12g}" for x in self.truth),
        }
        p = len(self.truth)
        for i in range(p):
            for j in range(i, p):
                out[f"v{i}{j}"] = float(self.v_hat[i, j])
                out[f"se{i}{j}"] = float(self.monte_carlo_se[i, j])
        out["bound_statistic"] = self.bound_statistic
        out["monte_carlo_se"] = self.bound_se
        return out


def bound_statistic(v_hat: np.ndarray, iq: np.ndarray) -> float:
    return float(np.trace(np.linalg.solve(iq, np.linalg.inv(v_hat))))


def risk_from_errors(strategy, truth, n: int, seed: int, errors: np.ndarray) -> RiskReport:
    strategy = Strategy(strategy)
    reps = len(errors)
    if reps < 2:
        raise ValueError("a risk report needs at least two trials")
    v_hat = n * _fsum_mean_outer(errors)
    outer = n * np.einsum("ri,rj->rij", errors, errors)
    se = outer.std(axis=0, ddof=1) / math.sqrt(reps)
    iq = qfisher.quantum_info(model_for(strategy), truth)
    stat = bound_statistic(v_hat, iq)
    # jackknife over trials
    total = outer.sum(axis=0)
    loo = (total[None] - outer) / (reps - 1)
    iq_inv = np.linalg.inv(iq)
    loo_stats = np.einsum("ij,rji->r", iq_inv, np.linalg.inv(loo))
    jack_se = float(math.sqrt((reps - 1) / reps * np.sum((loo_stats - loo_stats.mean()) ** 2)))
    return RiskReport(strategy.value, n, reps, seed, np.asarray(truth, float), v_hat, se, stat, jack_se, errors)


def monte_carlo_risk(strategy, truth, n: int, reps: int, seed: int, workers: int = 1) -> RiskReport:
    errors = run_trials(strategy, truth, n, reps, seed, workers)
    return risk_from_errors(strategy, truth, n, seed, errors)
