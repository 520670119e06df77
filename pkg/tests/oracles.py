"""Independent reference computations shared by the test modules."""

import itertools

import numpy as np

from fedqkernel.kernelml import dual_objective


def bruteforce_dual_optimum(kernel, y, penalty):
    """Exact dual optimum of the box-and-hyperplane QP by enumerating all
    3**m assignments of each variable to {0, C, free} and solving the KKT
    linear system of the free block. Independent of the SMO code path."""
    m = y.size
    q = np.outer(y, y) * kernel
    best = 0.0  # alpha = 0 is always feasible with objective 0
    for assign in itertools.product((0, 1, 2), repeat=m):
        assign = np.array(assign)
        free = np.flatnonzero(assign == 2)
        upper = np.flatnonzero(assign == 1)
        alphas = np.zeros(m)
        alphas[upper] = penalty
        if free.size:
            kkt = np.zeros((free.size + 1, free.size + 1))
            kkt[:-1, :-1] = q[np.ix_(free, free)]
            kkt[:-1, -1] = y[free]
            kkt[-1, :-1] = y[free]
            rhs = np.concatenate([
                1.0 - q[np.ix_(free, upper)] @ alphas[upper],
                [-float(y[upper] @ alphas[upper])],
            ])
            solution, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            if np.max(np.abs(kkt @ solution - rhs)) > 1e-7:
                continue  # inconsistent stationarity system, not a KKT point
            alphas[free] = solution[:-1]
        if np.any(alphas < -1e-9) or np.any(alphas > penalty + 1e-9):
            continue
        if abs(float(y @ alphas)) > 1e-7:
            continue
        best = max(best, dual_objective(kernel, y, np.clip(alphas, 0, penalty)))
    return best


def random_psd_kernel(rng, m):
    basis = rng.normal(size=(m, m + 2))
    k = basis @ basis.T / (m + 2)
    return k + 1e-6 * np.eye(m)
