"""Reconstruction optimizer: consistency, invariants, error metric."""

import numpy as np
import pytest

from cascade_recon import (
    FitConfig,
    MaskSpec,
    Network,
    apply_mask,
    dmprec_fit,
    generate_dataset,
    identifiable_edges,
    l1_coupling_error,
    observe_fully,
    parse_edge_list,
)

from conftest import chain_net, random_tree_net, random_couplings


def _full_dataset(net, truth, M, T, seed, sources="random"):
    return [observe_fully(c) for c in generate_dataset(net, truth, M, sources, T, seed)]


def _censored_geometric_mle(taus, T):
    n_act = (taus < T).sum()
    survived = (taus[taus < T] - 1).sum() + (taus == T).sum() * (T - 1)
    return n_act / (n_act + survived)


class TestDmprecFit:
    def test_single_edge_matches_closed_form_mle(self):
        net, _ = parse_edge_list("0\t1\n")
        T = 10
        dataset = _full_dataset(net, [0.3], 20000, T, seed=6, sources=[0])
        taus = np.array([obs.hi[1] for obs in dataset])
        mle = _censored_geometric_mle(taus, T)
        res = dmprec_fit(dataset, net)
        assert res.converged
        assert abs(res.couplings_hat[0] - mle) <= 0.005
        assert abs(res.couplings_hat[0] - 0.3) <= 0.02

    def test_star_tree_recovery(self, rng):
        edges = []
        for leaf in range(1, 5):
            edges += [("0", str(leaf)), (str(leaf), "0")]
        net = Network([str(i) for i in range(5)], edges)
        truth = random_couplings(net, rng, 0.1, 0.9)
        dataset = _full_dataset(net, truth, 10000, 10, seed=13)
        res = dmprec_fit(dataset, net)
        assert np.abs(res.couplings_hat - truth).mean() <= 0.02

    def test_monotone_trajectory_and_box(self, rng):
        net = random_tree_net(7, rng)
        truth = random_couplings(net, rng)
        dataset = _full_dataset(net, truth, 300, 6, seed=2)
        cfg = FitConfig(alpha_min=0.01, alpha_max=0.99)
        res = dmprec_fit(dataset, net, cfg)
        traj = res.free_energy_trajectory
        assert all(b <= a for a, b in zip(traj, traj[1:]))
        assert res.couplings_hat.min() >= 0.01
        assert res.couplings_hat.max() <= 0.99

    def test_more_data_helps_on_trees(self, rng):
        wins = 0
        for seed in range(5):
            local = np.random.default_rng(seed)
            net = random_tree_net(8, local)
            truth = random_couplings(net, local, 0.05, 0.95)
            small = _full_dataset(net, truth, 200, 8, seed=100 + seed)
            large = _full_dataset(net, truth, 3200, 8, seed=100 + seed)
            e_small = l1_coupling_error(
                dmprec_fit(small, net).couplings_hat, truth, np.arange(net.n_edges)
            )
            e_large = l1_coupling_error(
                dmprec_fit(large, net).couplings_hat, truth, np.arange(net.n_edges)
            )
            wins += e_large < e_small
        assert wins == 5

    def test_permutation_invariance(self, rng):
        net = random_tree_net(6, rng)
        truth = random_couplings(net, rng)
        dataset = _full_dataset(net, truth, 200, 6, seed=3)
        res = dmprec_fit(dataset, net)

        # relabel nodes: new label of node i is perm[i]; rebuild everything
        perm = rng.permutation(net.n_nodes)
        relabel = {net.labels[i]: f"{perm[i]:02d}" for i in range(net.n_nodes)}
        edges = [
            (relabel[net.labels[int(net.edge_src[e])]], relabel[net.labels[int(net.edge_dst[e])]])
            for e in range(net.n_edges)
        ]
        net2 = Network(sorted(relabel.values()), edges)
        to_new = {i: net2.label_index[relabel[net.labels[i]]] for i in range(net.n_nodes)}
        from cascade_recon import ObservedCascade

        dataset2 = []
        for obs in dataset:
            lo = np.empty_like(obs.lo)
            hi = np.empty_like(obs.hi)
            hidden = np.zeros_like(obs.hidden)
            for i in range(net.n_nodes):
                lo[to_new[i]] = obs.lo[i]
                hi[to_new[i]] = obs.hi[i]
                hidden[to_new[i]] = obs.hidden[i]
            dataset2.append(ObservedCascade(obs.horizon, lo, hi, hidden))
        res2 = dmprec_fit(dataset2, net2)
        # bit-exact equality is unattainable: relabeling reorders the
        # in-edge products, and float multiplication is not associative
        for e in range(net.n_edges):
            i, j = net.edge_pair(e)
            e2 = net2.edge_id(to_new[i], to_new[j])
            assert res.couplings_hat[e] == pytest.approx(res2.couplings_hat[e2], abs=1e-9)

    def test_threads_bit_identical(self, rng):
        net = random_tree_net(8, rng)
        truth = random_couplings(net, rng)
        dataset = _full_dataset(net, truth, 400, 6, seed=9)
        a = dmprec_fit(dataset, net, threads=1)
        b = dmprec_fit(dataset, net, threads=8)
        np.testing.assert_array_equal(a.couplings_hat, b.couplings_hat)
        assert a.free_energy_trajectory == b.free_energy_trajectory

    def test_snapshot_observations_still_fit(self, rng):
        net = random_tree_net(7, rng)
        truth = random_couplings(net, rng, 0.2, 0.8)
        data = generate_dataset(net, truth, 4000, "random", 8, seed=30)
        mask = MaskSpec(frozenset(), (2, 4, 6, 8))
        dataset = [apply_mask(c, mask) for c in data]
        res = dmprec_fit(dataset, net)
        assert l1_coupling_error(res.couplings_hat, truth, np.arange(net.n_edges)) <= 0.1


class TestIdentifiableEdges:
    def test_hidden_leaf_excluded(self):
        net = chain_net(3)
        mask = MaskSpec(frozenset({2}), None)
        included = identifiable_edges(net, mask)
        assert net.edge_id(1, 2) not in included
        assert net.edge_id(0, 1) in included

    def test_no_hidden_all_included(self):
        net = chain_net(4)
        assert identifiable_edges(net, MaskSpec(frozenset(), None)).size == net.n_edges

    def test_hidden_with_out_edges_kept(self):
        net, _ = parse_edge_list("0\t1\n1\t2\n")
        included = identifiable_edges(net, MaskSpec(frozenset({1}), None))
        assert net.edge_id(0, 1) in included


class TestErrorMetric:
    def test_zero_when_equal(self):
        assert l1_coupling_error([0.2, 0.8], [0.2, 0.8], [0, 1]) == 0.0

    def test_arithmetic(self):
        assert l1_coupling_error([0.5, 0.5], [0.1, 0.9], [0, 1]) == pytest.approx(0.4)

    def test_constant_half_against_uniform_truth(self, rng):
        truth = rng.uniform(0, 1, 210)
        err = l1_coupling_error(np.full(210, 0.5), truth, np.arange(210))
        # E|U - 0.5| = 0.25 for U ~ Uniform(0, 1)
        assert abs(err - 0.25) <= 0.02

    def test_empty_inclusion_rejected(self):
        with pytest.raises(ValueError):
            l1_coupling_error([0.5], [0.5], [])
