"""Quick end-to-end check of the Python bindings."""

import numpy as np

import vonneumann_hierarchy as vnh


def trace_norm(m):
    return np.linalg.svd(np.asarray(m), compute_uv=False).sum()


def main():
    assert [vnh.partition_alternating_sum(n) for n in range(1, 8)] == [1, 0, 0, 0, 0, 0, 0]
    assert vnh.bell(5) == 52 and vnh.stirling2(5, 2) == 15

    system = vnh.System.random(seed=1, orders=[2, 3])
    print(system)
    h2 = np.asarray(system.hamiltonian(2))
    assert np.allclose(h2, h2.conj().T)

    rng = np.random.default_rng(0)
    g0 = vnh.CorrelationState([0.3 * np.eye(2), np.zeros((4, 4)), np.zeros((8, 8))])
    for t in (0.1, 0.5, 1.0):
        gap = vnh.solve(system, g0, t).distance(vnh.solve_oracle(system, g0, t))
        assert gap <= 1e-9, gap

    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    f = a + a.conj().T
    free = system.without_interaction()
    assert trace_norm(free.cumulant(0.7, [[0], [1], [2]], f)) <= 1e-11
    assert trace_norm(system.cumulant(0.7, [[0], [1], [2]], f)) > 1e-6

    g1 = np.diag([0.7, 0.3])
    created = trace_norm(vnh.chaos(system, g1, 2, 0.5))
    assert created > 1e-6 and trace_norm(vnh.chaos(free, g1, 2, 0.5)) <= 1e-11

    dens = vnh.DensityState([0.02 * np.diag([0.6, 0.4]), 0.0004 * np.eye(4) / 4], physical=True)
    n0 = dens.particle_number()
    direct = np.asarray(dens.evolve(system, 0.8).marginal(1))
    via_marginals = np.asarray(vnh.marginal_at(system, dens, 1, 0.8))
    assert np.abs(direct - via_marginals).max() <= 1e-12
    assert abs(np.trace(via_marginals).real - n0) <= 1e-12
    print("dispersion", dens.dispersion(np.diag([0.0, 1.0])))

    report = vnh.verify("combinatorics")
    assert report["pass"] and all(c["pass"] for c in report["checks"])

    try:
        vnh.CorrelationState([np.eye(3)]).expand().evolve(system, 0.1)
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("dimension mismatch not reported")
    print("smoke test passed")


if __name__ == "__main__":
    main()
