"""Reference computations that share no code path with the package solvers."""

from itertools import combinations

import numpy as np


def dense_system(net, omega):
    """Constraint system written out from the network data directly.

    Distribution factors come from one angle solve per bus for a unit
    transfer to the reference bus, not from the package PTDF.
    """
    inj_fixed = net.mu + omega - net.d
    F = np.zeros((net.m, net.v))
    for j in range(net.v):
        unit = np.zeros(net.v)
        unit[j] += 1.0
        unit[net.ref_bus] -= 1.0
        F[:, j] = dc_flows(net, unit)
    G = np.vstack([np.eye(net.n), -np.eye(net.n), F @ net.H, -F @ net.H])
    base = F @ inj_fixed
    h = np.concatenate([net.pmax, -net.pmin, net.fmax - base, -net.fmin + base])
    keep = np.isfinite(h)
    total = float(np.sum(net.d - net.mu - omega))
    return G[keep], h[keep], total


def dc_flows(net, injection):
    """Branch flows for a balanced nodal injection by solving for angles."""
    L = net.incidence.T @ (net.susceptances[:, None] * net.incidence)
    keep = np.arange(net.v) != net.ref_bus
    theta = np.zeros(net.v)
    theta[keep] = np.linalg.solve(L[np.ix_(keep, keep)], injection[keep])
    return net.susceptances * (net.incidence @ theta)


def enumerate_vertices(net, omega, tol=1e-7):
    """Minimum cost over all vertices of the feasible set, by exhaustion.

    Returns ``(objective, vertex)`` or ``(None, None)`` when no vertex is feasible.
    """
    G, h, total = dense_system(net, omega)
    n = net.n
    e = np.ones(n)
    best, best_p = None, None
    for rows in combinations(range(len(h)), n - 1):
        B = np.vstack([G[list(rows)], e])
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        p = np.linalg.solve(B, np.append(h[list(rows)], total))
        if np.all(G @ p <= h + tol):
            cost = float(net.c @ p)
            if best is None or cost < best - 1e-12 * max(1.0, abs(cost)):
                best, best_p = cost, p
    return best, best_p


def linprog_opf(net, omega):
    """HiGHS reference: (status, objective) with status 0 optimal, 2 infeasible."""
    from scipy.optimize import linprog

    G, h, total = dense_system(net, omega)
    res = linprog(net.c, A_ub=G, b_ub=h, A_eq=np.ones((1, net.n)), b_eq=[total],
                  bounds=[(None, None)] * net.n, method="highs")
    return res.status, (res.fun if res.status == 0 else None)
