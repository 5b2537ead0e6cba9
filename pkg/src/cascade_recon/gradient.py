"""Forward-mode differentiation of the message-passing dynamics and the
approximate negative log-likelihood ("free energy") of observed cascades.

The derivative recursion mirrors the forward one: for every message edge e
and every parameter edge f it tracks ``d_theta[t, e, f]`` and
``d_phi[t, e, f]``, the sensitivities of the two messages to the coupling
on f.  Both start at zero (initial messages do not depend on couplings)
and are advanced alongside theta/phi; within a time step all d_theta
updates complete before any d_phi update, because the phi sensitivity
consumes the fresh d_theta slice.

Every observation is a half-open window (lo, hi] on the recorded
activation time, so each observed node contributes
``-log(S(lo) - S(hi))`` with ``S(u) = p_susceptible(u)`` for u <= T-1 and
``S(T) = 0``: exact times, horizon censoring and snapshot intervals are
all instances of this one rule, and the gradient uses the matching
differences of ``d_p_susceptible``.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DatasetError
from .graph import Network, validate_couplings
from .cascades import ObservedCascade, group_cascades
from .dmp import DmpTrace, dmp_forward, initial_susceptible, _leave_one_out, _loo_rows, _cavity

__all__ = [
    "GradTrace",
    "FreeEnergyReport",
    "EPS_LOG",
    "dmp_forward_with_gradients",
    "observed_negative_log_likelihood",
    "free_energy_gradient",
    "population_free_energy",
]

EPS_LOG = 1e-12  # lower clamp for log arguments and gradient denominators


@dataclass(frozen=True, eq=False)
class GradTrace:
    """Coupling sensitivities of messages and marginals.

    ``param_edges`` lists the edge ids the trailing axis refers to, so a
    caller can differentiate with respect to a subset of couplings (one
    slice at a time) when the full |E| x |E| tensor is too large.
    """

    horizon: int
    param_edges: np.ndarray          # (F,)
    d_theta: np.ndarray              # (T+1, |E|, F)
    d_phi: np.ndarray                # (T+1, |E|, F)
    d_p_susceptible: np.ndarray      # (T+1, N, F)

    def d_activation(self, t: int) -> np.ndarray:
        """Sensitivity of the activation marginal at step t, shape (N, F)."""
        if t == 0:
            return np.zeros_like(self.d_p_susceptible[0])
        return self.d_p_susceptible[t - 1] - self.d_p_susceptible[t]


@dataclass(frozen=True, eq=False)
class FreeEnergyReport:
    """Value and gradient of the observed-cascade free energy."""

    value: float
    gradient: np.ndarray             # (|E|,)
    per_node: dict[int, float]


def dmp_forward_with_gradients(
    net: Network,
    couplings,
    sources,
    horizon: int,
    param_edges: Sequence[int] | None = None,
) -> tuple[DmpTrace, GradTrace]:
    """Forward pass with sensitivities to the selected couplings."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    alpha = validate_couplings(net, couplings)
    ps0 = initial_susceptible(net, sources)
    T, E, N = horizon, net.n_edges, net.n_nodes
    params = np.arange(E, dtype=np.intp) if param_edges is None else np.asarray(param_edges, dtype=np.intp)
    F = params.shape[0]
    col_of = np.full(E, -1, dtype=np.intp)
    col_of[params] = np.arange(F, dtype=np.intp)
    own_rows = np.flatnonzero(col_of >= 0)
    own_cols = col_of[own_rows]

    theta = np.ones((T + 1, E))
    phi = np.empty((T + 1, E))
    phi[0] = 1.0 - ps0[net.edge_src]
    p_s = np.empty((T + 1, N))
    p_s[0] = ps0
    m = np.empty((T + 1, N))
    m[0] = 1.0 - ps0
    d_theta = np.zeros((T + 1, E, F))
    d_phi = np.zeros((T + 1, E, F))
    d_ps = np.zeros((T + 1, N, F))

    ps0_src = ps0[net.edge_src]
    cavmat = net.padded_cavity        # (E, cmax), pad index E
    in_mat = net.padded_in_edges      # (N, dmax), pad index E
    pad_row = np.zeros((1, F))

    full_prev, loo_prev = _leave_one_out(net, theta[0])
    cav_prev = _cavity(net, full_prev, loo_prev)
    # cavity_sum[e] = sum_l d_theta[t, cav_l] * prod_{n != l} theta[t, cav_n]
    cavity_sum_prev = np.zeros((E, F))

    for t in range(1, T + 1):
        theta[t] = theta[t - 1] - alpha * phi[t - 1]
        d_theta[t] = d_theta[t - 1] - alpha[:, None] * d_phi[t - 1]
        d_theta[t][own_rows, own_cols] -= phi[t - 1][own_rows]

        full_t, loo_t = _leave_one_out(net, theta[t])
        cav_t = _cavity(net, full_t, loo_t)
        phi[t] = (1.0 - alpha) * phi[t - 1] + ps0_src * (cav_prev - cav_t)

        dth_pad = np.concatenate([d_theta[t], pad_row])
        th_pad = np.append(theta[t], 1.0)
        w = _loo_rows(th_pad[cavmat])
        cavity_sum_t = np.einsum("nd,ndf->nf", w, dth_pad[cavmat])
        d_phi[t] = (1.0 - alpha)[:, None] * d_phi[t - 1]
        d_phi[t][own_rows, own_cols] -= phi[t - 1][own_rows]
        d_phi[t] += ps0_src[:, None] * (cavity_sum_prev - cavity_sum_t)

        p_s[t] = ps0 * full_t
        m[t] = p_s[t - 1] - p_s[t]
        loo_pad = np.append(loo_t, 1.0)
        d_ps[t] = ps0[:, None] * np.einsum("nd,ndf->nf", loo_pad[in_mat], dth_pad[in_mat])

        cav_prev = cav_t
        cavity_sum_prev = cavity_sum_t

    trace = DmpTrace(T, ps0, theta, phi, p_s, m)
    gtrace = GradTrace(T, params, d_theta, d_phi, d_ps)
    return trace, gtrace


# ---------------------------------------------------------------------------
# observation summaries and the free energy


@dataclass(frozen=True, eq=False)
class GroupSummary:
    """Aggregated observation windows for cascades sharing one source set.

    Each row is one (node, lo, hi) observation window with its multiplicity
    across the group's cascades; source nodes are excluded (their exact-0
    observation is conditioned on, not generated by the model).
    """

    sources: tuple[int, ...]
    nodes: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    counts: np.ndarray
    n_cascades: int


def summarize_dataset(dataset: Sequence[ObservedCascade]) -> list[GroupSummary]:
    """Group cascades by source set and aggregate observation windows."""
    groups = group_cascades(dataset)
    out = []
    for sources, cascades in groups.items():
        counter: Counter = Counter()
        for obs in cascades:
            vis = np.flatnonzero(~obs.hidden & (obs.hi > 0))
            for i in vis:
                counter[(int(i), int(obs.lo[i]), int(obs.hi[i]))] += 1
        keys = sorted(counter)
        nodes = np.array([k[0] for k in keys], dtype=np.intp)
        lo = np.array([k[1] for k in keys], dtype=np.int64)
        hi = np.array([k[2] for k in keys], dtype=np.int64)
        counts = np.array([counter[k] for k in keys], dtype=np.float64)
        out.append(GroupSummary(sources, nodes, lo, hi, counts, len(cascades)))
    return out


def _padded_susceptibility(trace: DmpTrace) -> np.ndarray:
    """S(u) table with the convention S(T) = 0 (a recorded time is always
    at most T), shape (T+1, N); valid lookups use u in [0, T]."""
    S = trace.p_susceptible.copy()
    S[trace.horizon] = 0.0
    return S


def _group_value(trace: DmpTrace, summ: GroupSummary) -> tuple[float, np.ndarray, np.ndarray]:
    S = _padded_susceptibility(trace)
    terms = S[summ.lo, summ.nodes] - S[summ.hi, summ.nodes]
    clamped = np.maximum(terms, EPS_LOG)
    contrib = -summ.counts * np.log(clamped)
    return float(contrib.sum()), contrib, clamped


def _group_gradient(trace, gtrace, summ, n_edges):
    value, contrib, clamped = _group_value(trace, summ)
    D = gtrace.d_p_susceptible.copy()
    D[trace.horizon] = 0.0
    dterm = D[summ.lo, summ.nodes, :] - D[summ.hi, summ.nodes, :]
    grad_cols = -((summ.counts / clamped)[:, None] * dterm).sum(axis=0)
    grad = np.zeros(n_edges)
    grad[gtrace.param_edges] = grad_cols
    return value, contrib, grad


def observed_negative_log_likelihood(
    dataset: Sequence[ObservedCascade],
    net: Network,
    couplings,
) -> float:
    """Free energy of a dataset: sum over observed nodes of
    ``-log P(observation window)`` under the message-passing marginals."""
    horizon = _common_horizon(dataset)
    value = 0.0
    for summ in summarize_dataset(dataset):
        trace = dmp_forward(net, couplings, summ.sources, horizon)
        value += _group_value(trace, summ)[0]
    return value


def _common_horizon(dataset: Sequence[ObservedCascade]) -> int:
    horizons = {obs.horizon for obs in dataset}
    if len(horizons) != 1:
        raise DatasetError(f"cascades with mismatched horizons: {sorted(horizons)}")
    return horizons.pop()


def free_energy_gradient(
    dataset: Sequence[ObservedCascade],
    net: Network,
    couplings,
    param_edges: Sequence[int] | None = None,
    threads: int = 1,
) -> FreeEnergyReport:
    """Free energy and its exact gradient with respect to every coupling.

    One forward+sensitivity run is performed per distinct source set and
    shared by all cascades in that group.  Group results are reduced in a
    fixed order, so the output is identical for any ``threads`` value.
    """
    horizon = _common_horizon(dataset)
    summaries = summarize_dataset(dataset)

    def work(summ: GroupSummary):
        trace, gtrace = dmp_forward_with_gradients(
            net, couplings, summ.sources, horizon, param_edges=param_edges
        )
        return _group_gradient(trace, gtrace, summ, net.n_edges)

    if threads > 1 and len(summaries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, summaries))
    else:
        results = [work(s) for s in summaries]

    value = 0.0
    gradient = np.zeros(net.n_edges)
    per_node: dict[int, float] = {}
    for summ, (val, contrib, grad) in zip(summaries, results):
        value += val
        gradient += grad
        for node, c in zip(summ.nodes, contrib):
            per_node[int(node)] = per_node.get(int(node), 0.0) + float(c)
    return FreeEnergyReport(value, gradient, per_node)


def population_free_energy(
    net: Network,
    couplings_star,
    couplings,
    sources,
    horizon: int,
    observed: Sequence[int] | None = None,
) -> tuple[float, np.ndarray]:
    """Infinite-sample limit of the free energy for one initial condition.

    The data distribution is generated by ``couplings_star``; the model is
    evaluated at ``couplings``.  Returns (value, gradient).  On a tree the
    gradient vanishes at ``couplings == couplings_star`` because the
    activation masses and the final susceptibility sum to one identically.
    """
    ref = dmp_forward(net, couplings_star, sources, horizon)
    trace, gtrace = dmp_forward_with_gradients(net, couplings, sources, horizon)
    T = horizon
    nodes = range(net.n_nodes) if observed is None else observed
    value = 0.0
    grad_cols = np.zeros(gtrace.param_edges.shape[0])
    for i in nodes:
        for t in range(1, T):
            w = ref.p_activate[t, i]
            if w == 0.0:
                continue
            term = max(trace.p_activate[t, i], EPS_LOG)
            value -= w * np.log(term)
            grad_cols -= (w / term) * gtrace.d_activation(t)[i]
        w = ref.p_susceptible[T - 1, i]
        if w != 0.0:
            term = max(trace.p_susceptible[T - 1, i], EPS_LOG)
            value -= w * np.log(term)
            grad_cols -= (w / term) * gtrace.d_p_susceptible[T - 1, i]
    gradient = np.zeros(net.n_edges)
    gradient[gtrace.param_edges] = grad_cols
    return float(value), gradient
