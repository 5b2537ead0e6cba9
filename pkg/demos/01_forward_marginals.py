"""Forward marginals three ways: message passing, exact enumeration, Monte Carlo.

Builds a small loopy graph, computes per-node susceptibility probabilities
with the message-passing engine, and checks them against the exact
subset-state distribution and a large simulation.  On loopy graphs the
message-passing values sit at or below the exact ones (they are a lower
bound); on trees they coincide.
"""

import numpy as np

from cascade_recon import (
    Network,
    dmp_forward,
    exact_marginals_oracle,
    monte_carlo_marginals,
)

rng = np.random.default_rng(1)

# a 6-node graph with two triangles sharing an edge, both directions
links = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4), (4, 5)]
edges = []
for u, v in links:
    edges += [(str(u), str(v)), (str(v), str(u))]
net = Network([str(i) for i in range(6)], edges)
alpha = rng.uniform(0.1, 0.9, net.n_edges)
T = 8
sources = [0]

trace = dmp_forward(net, alpha, sources, T)
exact = exact_marginals_oracle(net, alpha, sources, T)
mc = monte_carlo_marginals(net, alpha, sources, T, runs=200_000, rng=2)

print(f"graph: {net.n_nodes} nodes, {net.n_edges} directed edges, source {sources}, T={T}")
print(f"{'node':>4} {'P_S(T) mp':>10} {'exact':>10} {'monte carlo':>12}")
for i in range(net.n_nodes):
    print(f"{i:>4} {trace.p_susceptible[T, i]:>10.5f} {exact[T, i]:>10.5f} {mc[T, i]:>12.5f}")

gap = exact - trace.p_susceptible
print(f"\nmax underestimation (exact - mp): {gap.max():.5f}  (never negative: {gap.min() >= -1e-12})")

total = trace.p_activate[:T].sum(axis=0) + trace.p_susceptible[T - 1]
print(f"activation masses + final susceptibility sum to one: max dev {np.abs(total - 1).max():.2e}")
