"""Forward dynamic message passing for the discrete-time SI model.

The engine propagates two quantities per directed edge (k, i):

- ``theta[t, e]``: probability that no activation signal has crossed the
  edge by time t;
- ``phi[t, e]``: probability that k is already active but the signal has
  not crossed the edge yet.

Node marginals follow as products of incoming ``theta`` messages:
``p_susceptible[t, i]`` is the probability that i is still susceptible at
time t, and ``p_activate[t, i]`` the probability that it activates exactly
at step t.  The scheme is exact when the graph is a tree and yields a
lower bound on susceptibility probabilities otherwise; the subset-state
oracle in this module provides the exact reference for small graphs.

All "product over incoming edges except one" terms are evaluated with
prefix/suffix products — never by dividing the full product — so couplings
equal to 1 (messages hitting exactly 0) stay numerically safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DatasetError
from .graph import Network, validate_couplings
from .cascades import Cascade, _as_source_array

__all__ = [
    "DmpTrace",
    "dmp_forward",
    "activation_marginal",
    "exact_marginals_oracle",
    "exact_cascade_probability",
]


@dataclass(frozen=True, eq=False)
class DmpTrace:
    """Full message and marginal history of one forward run."""

    horizon: int
    initial_susceptible: np.ndarray  # (N,) indicator: 0 at sources, 1 elsewhere
    theta: np.ndarray                # (T+1, |E|)
    phi: np.ndarray                  # (T+1, |E|)
    p_susceptible: np.ndarray        # (T+1, N)
    p_activate: np.ndarray           # (T+1, N); row 0 is 1 - initial_susceptible


def initial_susceptible(net: Network, sources) -> np.ndarray:
    """Indicator vector of "not a source"."""
    src = _as_source_array(net, sources)
    out = np.ones(net.n_nodes)
    out[src] = 0.0
    return out


def _loo_rows(vals: np.ndarray) -> np.ndarray:
    """Row-wise leave-one-out products, shape-preserving, no division."""
    n, d = vals.shape
    if d == 1:
        return np.ones_like(vals)
    prefix = np.ones((n, d + 1))
    np.cumprod(vals, axis=1, out=prefix[:, 1:])
    suffix = np.ones((n, d + 1))
    suffix[:, :d] = np.cumprod(vals[:, ::-1], axis=1)[:, ::-1]
    return prefix[:, :d] * suffix[:, 1:]


def _leave_one_out(net: Network, theta_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-node full products of incoming theta and per-edge products
    excluding that edge.

    Returns ``(full, loo)`` where ``full[i] = prod over in-edges of i`` and
    ``loo[f] = full[dst(f)] / theta_t[f]`` computed without division.
    """
    mat = net.padded_in_edges
    vals = np.append(theta_t, 1.0)[mat]
    full = vals.prod(axis=1)
    loo_pad = np.ones(net.n_edges + 1)
    if mat.shape[1] > 1:
        loo_pad[mat.ravel()] = _loo_rows(vals).ravel()
    return full, loo_pad[: net.n_edges]


def _cavity(net: Network, full: np.ndarray, loo: np.ndarray) -> np.ndarray:
    """Per edge (k, i): product of theta over in-edges of k except the one
    arriving from i (all of them when (i, k) is not an edge)."""
    rev = net.reverse_edge
    out = full[net.edge_src]
    has_rev = rev >= 0
    out[has_rev] = loo[rev[has_rev]]
    return out


def dmp_forward(net: Network, couplings, sources, horizon: int) -> DmpTrace:
    """Run the forward message-passing recursion up to ``horizon``.

    Update order within a step: all theta first, then all phi (phi's
    source-activation term needs the fresh theta slice).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    alpha = validate_couplings(net, couplings)
    ps0 = initial_susceptible(net, sources)
    T, E, N = horizon, net.n_edges, net.n_nodes

    theta = np.ones((T + 1, E))
    phi = np.empty((T + 1, E))
    phi[0] = 1.0 - ps0[net.edge_src]
    p_s = np.empty((T + 1, N))
    p_s[0] = ps0
    m = np.empty((T + 1, N))
    m[0] = 1.0 - ps0

    ps0_src = ps0[net.edge_src]
    full_prev, loo_prev = _leave_one_out(net, theta[0])
    cav_prev = _cavity(net, full_prev, loo_prev)
    for t in range(1, T + 1):
        theta[t] = theta[t - 1] - alpha * phi[t - 1]
        full_t, loo_t = _leave_one_out(net, theta[t])
        cav_t = _cavity(net, full_t, loo_t)
        phi[t] = (1.0 - alpha) * phi[t - 1] + ps0_src * (cav_prev - cav_t)
        p_s[t] = ps0 * full_t
        m[t] = p_s[t - 1] - p_s[t]
        cav_prev = cav_t
    return DmpTrace(T, ps0, theta, phi, p_s, m)


def activation_marginal(trace: DmpTrace, node: int, t: int) -> float:
    """Probability that ``node`` activates exactly at step ``t``."""
    if not 0 <= t <= trace.horizon:
        raise ValueError(f"time {t} outside [0, {trace.horizon}]")
    return float(trace.p_activate[t, node])


# ---------------------------------------------------------------------------
# exact reference for small graphs


def _infection_probs(in_edges, in_srcs, one_minus_alpha, mask, j):
    p_stay = 1.0
    for e, k in zip(in_edges[j], in_srcs[j]):
        if (mask >> k) & 1:
            p_stay *= one_minus_alpha[e]
    return 1.0 - p_stay


def exact_marginals_oracle(net: Network, couplings, sources, horizon: int) -> np.ndarray:
    """Exact susceptibility marginals, shape (horizon+1, N).

    Evolves the full probability distribution over infected subsets of the
    synchronous SI chain, so memory and work grow with the number of
    reachable subsets (worst case 2^N).  Intended for N up to ~12; refuses
    N > 20.
    """
    if net.n_nodes > 20:
        raise CapacityError(f"exact oracle limited to 20 nodes, got {net.n_nodes}")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    alpha = validate_couplings(net, couplings)
    src = _as_source_array(net, sources)
    N = net.n_nodes
    one_minus_alpha = 1.0 - alpha
    in_edges = [net.in_edges(i) for i in range(N)]
    in_srcs = [net.edge_src[net.in_edges(i)] for i in range(N)]
    # nodes whose infection probability can ever be positive given the mask
    in_bits = np.zeros(N, dtype=np.int64)
    for i in range(N):
        for e, k in zip(in_edges[i], in_srcs[i]):
            if alpha[e] > 0.0:
                in_bits[i] |= np.int64(1) << np.int64(k)

    mask0 = 0
    for s in src:
        mask0 |= 1 << int(s)

    out = np.empty((horizon + 1, N))
    dist: dict[int, float] = {mask0: 1.0}
    out[0] = _susceptible_marginals(dist, N)
    for t in range(1, horizon + 1):
        new_dist: dict[int, float] = {}
        for mask, prob in dist.items():
            frontier = [
                j
                for j in range(N)
                if not (mask >> j) & 1 and (in_bits[j] & mask)
            ]
            pjs = [
                _infection_probs(in_edges, in_srcs, one_minus_alpha, mask, j)
                for j in frontier
            ]
            masks = [mask]
            probs = [prob]
            for j, pj in zip(frontier, pjs):
                bit = 1 << j
                if pj <= 0.0:
                    continue
                if pj >= 1.0:
                    masks = [m | bit for m in masks]
                    continue
                qj = 1.0 - pj
                masks = masks + [m | bit for m in masks]
                probs = [pr * qj for pr in probs] + [pr * pj for pr in probs]
            for m_, pr in zip(masks, probs):
                new_dist[m_] = new_dist.get(m_, 0.0) + pr
        dist = new_dist
        out[t] = _susceptible_marginals(dist, N)
    return out


def _susceptible_marginals(dist: dict[int, float], n: int) -> np.ndarray:
    masks = np.fromiter(dist.keys(), dtype=np.int64, count=len(dist))
    probs = np.fromiter(dist.values(), dtype=np.float64, count=len(dist))
    out = np.empty(n)
    for i in range(n):
        out[i] = probs[((masks >> i) & 1) == 0].sum()
    return out


def exact_cascade_probability(net: Network, couplings, cascade: Cascade) -> float:
    """Probability of a recorded activation-time vector under the chain.

    The recorded times determine the full state path (censored nodes stay
    susceptible through step horizon-1), so the probability is the product
    of one-step transition factors.  Independent of any likelihood formula:
    uses only the chain's per-step infection probabilities.
    """
    T = cascade.horizon
    times = np.asarray(cascade.times)
    if times.shape[0] != net.n_nodes:
        raise DatasetError("cascade does not match the network")
    alpha = validate_couplings(net, couplings)
    one_minus_alpha = 1.0 - alpha
    in_edges = [net.in_edges(i) for i in range(net.n_nodes)]
    in_srcs = [net.edge_src[net.in_edges(i)] for i in range(net.n_nodes)]
    prob = 1.0
    for t in range(T - 1):
        mask = 0
        for i in range(net.n_nodes):
            if times[i] <= t:
                mask |= 1 << i
        for j in range(net.n_nodes):
            if times[j] <= t:
                continue
            pj = _infection_probs(in_edges, in_srcs, one_minus_alpha, mask, j)
            prob *= pj if times[j] == t + 1 else 1.0 - pj
            if prob == 0.0:
                return 0.0
    return prob
