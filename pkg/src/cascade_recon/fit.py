"""Coupling reconstruction by minimizing the observed-cascade free energy.

The optimizer is projected gradient descent over the box
``[alpha_min, alpha_max]^|E|`` with a backtracking line search (Armijo
sufficient decrease on the projected step).  Accepted steps never increase
the objective, every iterate stays inside the box, and the whole procedure
is deterministic for a given dataset and configuration.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DatasetError
from .graph import Network
from .cascades import MaskSpec, ObservedCascade, group_cascades
from .dmp import dmp_forward
from .gradient import (
    GroupSummary,
    _group_gradient,
    _group_value,
    dmp_forward_with_gradients,
    summarize_dataset,
)

__all__ = [
    "FitConfig",
    "FitResult",
    "projected_gradient_descent",
    "dmprec_fit",
    "group_cascades",
    "identifiable_edges",
    "l1_coupling_error",
]


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings shared by the reconstruction methods."""

    alpha_init: float = 0.5
    alpha_min: float = 1e-6
    alpha_max: float = 1.0 - 1e-6
    max_iters: int = 2000
    tol: float = 1e-7            # relative decrease per accepted step
    step_init: float = 1.0
    step_shrink: float = 0.5
    armijo: float = 1e-4
    deterministic: bool = True

    def validate(self) -> None:
        if not 0.0 < self.alpha_min < self.alpha_init < self.alpha_max < 1.0:
            raise ValueError("need 0 < alpha_min < alpha_init < alpha_max < 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.step_shrink < 1.0:
            raise ValueError("step_shrink must be in (0, 1)")


@dataclass(eq=False)
class FitResult:
    """Outcome of a reconstruction run."""

    couplings_hat: np.ndarray
    iterations: int
    free_energy_trajectory: list[float]
    converged: bool
    wall_time: float
    # per accepted step: (iteration, free_energy, step_size, grad_inf_norm)
    diagnostics: list[tuple[int, float, float, float]] = field(default_factory=list)


def projected_gradient_descent(
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    value_only: Callable[[np.ndarray], float],
    x0: np.ndarray,
    lower: float,
    upper: float,
    config: FitConfig,
) -> tuple[np.ndarray, list[float], list[tuple[int, float, float, float]], bool, int]:
    """Monotone projected gradient descent with backtracking.

    Returns ``(x, trajectory, diagnostics, converged, iterations)``.  The
    line search warm-starts at twice the previously accepted step; a step
    whose projection does not move the iterate signals a stationary point
    of the box-constrained problem.
    """
    x = np.clip(np.asarray(x0, dtype=np.float64), lower, upper)
    f, g = value_and_grad(x)
    trajectory = [f]
    diagnostics = [(0, f, 0.0, float(np.abs(g).max(initial=0.0)))]
    step = config.step_init
    converged = False
    iterations = 0
    for it in range(1, config.max_iters + 1):
        eta = step
        candidate = None
        f_candidate = None
        while eta > 1e-18:
            trial = np.clip(x - eta * g, lower, upper)
            dx = x - trial
            if not np.any(dx):
                break  # box-stationary: the projected step is zero
            f_trial = value_only(trial)
            if f_trial <= f - config.armijo * float(g @ dx):
                candidate, f_candidate = trial, f_trial
                break
            eta *= config.step_shrink
        if candidate is None:
            converged = True
            break
        iterations = it
        rel_decrease = (f - f_candidate) / max(abs(f), 1.0)
        x = candidate
        f, g = value_and_grad(x)
        trajectory.append(f)
        diagnostics.append((it, f, eta, float(np.abs(g).max(initial=0.0))))
        step = eta * 2.0
        if rel_decrease < config.tol:
            converged = True
            break
    return x, trajectory, diagnostics, converged, iterations


def _dataset_objective(
    summaries: list[GroupSummary],
    net: Network,
    horizon: int,
    threads: int,
):
    """Value-only and value+gradient callables over grouped observations."""

    def run_many(work):
        if threads > 1 and len(summaries) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(work, summaries))
        return [work(s) for s in summaries]

    def value_only(alpha: np.ndarray) -> float:
        def work(summ):
            trace = dmp_forward(net, alpha, summ.sources, horizon)
            return _group_value(trace, summ)[0]

        return float(sum(run_many(work)))

    def value_and_grad(alpha: np.ndarray) -> tuple[float, np.ndarray]:
        def work(summ):
            trace, gtrace = dmp_forward_with_gradients(net, alpha, summ.sources, horizon)
            val, _, grad = _group_gradient(trace, gtrace, summ, net.n_edges)
            return val, grad

        results = run_many(work)
        value = float(sum(v for v, _ in results))
        gradient = np.zeros(net.n_edges)
        for _, grad in results:
            gradient += grad
        return value, gradient

    return value_and_grad, value_only


def dmprec_fit(
    dataset: Sequence[ObservedCascade],
    net: Network,
    config: FitConfig | None = None,
    threads: int = 1,
) -> FitResult:
    """Reconstruct couplings from partially observed cascades.

    Minimizes the message-passing free energy of the dataset by projected
    gradient descent from the uniform ``alpha_init`` starting point.  One
    forward+sensitivity run per distinct source set per gradient
    evaluation; deterministic for any ``threads`` value.
    """
    config = config or FitConfig()
    config.validate()
    if not dataset:
        raise DatasetError("empty dataset")
    horizons = {obs.horizon for obs in dataset}
    if len(horizons) != 1:
        raise DatasetError(f"cascades with mismatched horizons: {sorted(horizons)}")
    horizon = horizons.pop()
    summaries = summarize_dataset(dataset)

    value_and_grad, value_only = _dataset_objective(summaries, net, horizon, threads)
    x0 = np.full(net.n_edges, config.alpha_init)
    start = time.perf_counter()
    x, trajectory, diagnostics, converged, iterations = projected_gradient_descent(
        value_and_grad, value_only, x0, config.alpha_min, config.alpha_max, config
    )
    wall = time.perf_counter() - start
    if not np.all(np.isfinite(trajectory)):
        raise DatasetError("free energy is not finite; dataset or network is corrupt")
    return FitResult(x, iterations, trajectory, converged, wall, diagnostics)


def identifiable_edges(net: Network, mask: MaskSpec) -> np.ndarray:
    """Edge ids whose couplings the data can constrain at all.

    Excludes in-edges of hidden nodes with no outgoing edge: such a node's
    activation time is never seen and never influences anything visible.
    """
    included = [
        e
        for e in range(net.n_edges)
        if not (
            int(net.edge_dst[e]) in mask.hidden_nodes
            and net.out_degree(int(net.edge_dst[e])) == 0
        )
    ]
    return np.array(included, dtype=np.intp)


def l1_coupling_error(est, truth, included) -> float:
    """Mean absolute coupling error over the included edges."""
    included = np.asarray(included, dtype=np.intp)
    if included.size == 0:
        raise ValueError("no edges included in the error metric")
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return float(np.abs(est[included] - truth[included]).sum() / included.size)
