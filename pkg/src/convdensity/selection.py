"""Pointwise bandwidth selection by pairwise comparison against thresholds.

For each point the rule scores every bandwidth h with a bias proxy (the
largest thresholded disagreement between estimates at joined bandwidths) plus
eight times the bound envelope, and picks the minimizer:

    chosen(x) = argmin_h [ proxy_h(x) + 8 * bound_env(x, h) ].

A purely algebraic consequence of the argmin (used as a hard acceptance
check) is |est_chosen(x) - est_h(x)| <= 2 proxy_h(x) + 16 bound_env(x, h)
for every grid member h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LatticeClosureViolated


def _join_index(grid):
    """J[i, j] = grid index of the coordinatewise maximum of members i, j."""
    exps = np.asarray(grid.exponents)
    size = grid.size
    out = np.empty((size, size), dtype=np.int64)
    for i in range(size):
        joins = np.maximum(exps[i], exps)
        for j in range(size):
            idx = grid.index_of(joins[j])
            if idx < 0:
                raise LatticeClosureViolated(
                    f"join of members {i} and {j} lies outside the grid"
                )
            out[i, j] = idx
    return out


def bias_proxy_row(surface, join, i):
    """All bias proxies at evaluation point i; shape (size,).

    proxy_h = max over members e of
        [ |est_{h v e} - est_e| - 4 bound_{h v e} - 4 bound_e ]_+
    """
    f = surface.estimates[i]
    b = surface.bounds[i]
    terms = np.abs(f[join] - f[None, :]) - 4.0 * b[join] - 4.0 * b[None, :]
    return np.maximum(terms, 0.0).max(axis=1)


def bias_proxy(surface, h_index, x_index, join=None):
    """Bias proxy for one (point, bandwidth) pair; reference implementation."""
    if join is None:
        join = _join_index(surface.grid)
    return float(bias_proxy_row(surface, join, x_index)[h_index])


@dataclass
class SelectionResult:
    """Outcome of the pointwise rule with per-point diagnostics."""

    eval_points: np.ndarray
    chosen_index: np.ndarray       # (m,) grid indices
    chosen_h: np.ndarray           # (m, d)
    chosen_exponents: np.ndarray   # (m, d) ints
    estimate: np.ndarray           # (m,)
    objective: np.ndarray          # (m,) minimized objective value
    boundary_hit: np.ndarray       # (m,) True when chosen exponent touches the range
    proxies: np.ndarray = None     # (m, size) optional diagnostics
    objectives: np.ndarray = None  # (m, size)


def select(surface, diagnostics=False, chunk=256):
    """Apply the pointwise selection rule to a complete surface.

    Ties in the objective are broken toward the largest bandwidth volume,
    then lexicographically smallest exponent vector; since members are sorted
    in exactly that order, the first minimizing index wins regardless of any
    prior permutation of the inputs.
    """
    grid = surface.grid
    m = surface.m
    size = grid.size
    join = _join_index(grid)
    exps = np.asarray(grid.exponents)

    chosen = np.empty(m, dtype=np.int64)
    objective = np.empty(m)
    all_prox = np.empty((m, size)) if diagnostics else None
    all_obj = np.empty((m, size)) if diagnostics else None

    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        f = surface.estimates[start:stop]                      # (c, size)
        b = surface.bounds[start:stop]
        terms = (np.abs(f[:, join] - f[:, None, :])
                 - 4.0 * b[:, join] - 4.0 * b[:, None, :])     # (c, size, size)
        prox = np.maximum(terms, 0.0).max(axis=2)
        obj = prox + 8.0 * surface.bounds_sup[start:stop]
        # first minimal index in canonical member order
        idx = np.argmin(obj, axis=1)
        chosen[start:stop] = idx
        objective[start:stop] = obj[np.arange(stop - start), idx]
        if diagnostics:
            all_prox[start:stop] = prox
            all_obj[start:stop] = obj

    chosen_exp = exps[chosen] if m else np.empty((0, grid.d), dtype=np.int64)
    boundary = np.any((chosen_exp == grid.k_min) | (chosen_exp == grid.k_max), axis=1) \
        if m else np.zeros(0, dtype=bool)
    return SelectionResult(
        eval_points=surface.eval_points,
        chosen_index=chosen,
        chosen_h=grid.members[chosen] if m else np.empty((0, grid.d)),
        chosen_exponents=chosen_exp,
        estimate=surface.estimates[np.arange(m), chosen] if m else np.empty(0),
        objective=objective,
        boundary_hit=boundary,
        proxies=all_prox,
        objectives=all_obj,
    )


def selection_inequality_gap(surface, result):
    """Largest violation of the argmin consequence over all points and members.

    Returns max over (x, h) of
        |est_chosen(x) - est_h(x)| - 2 proxy_h(x) - 16 bound_env(x, h);
    algebra guarantees this is <= 0 up to floating-point slack, so anything
    above ~1e-12 is an implementation bug.
    """
    grid = surface.grid
    join = _join_index(grid)
    worst = -np.inf
    for i in range(surface.m):
        prox = bias_proxy_row(surface, join, i)
        lhs = np.abs(surface.estimates[i, result.chosen_index[i]]
                     - surface.estimates[i])
        gap = lhs - 2.0 * prox - 16.0 * surface.bounds_sup[i]
        worst = max(worst, float(gap.max()))
    return worst


def result_to_csv(result, header=True):
    """CSV rows: point coordinates, chosen exponents, estimate, objective, flag."""
    import io

    d = result.eval_points.shape[1] if result.eval_points.ndim == 2 else 1
    buf = io.StringIO()
    if header:
        cols = [f"x_{j+1}" for j in range(d)]
        cols += [f"k_{j+1}" for j in range(d)]
        cols += ["estimate", "objective", "boundary_hit"]
        buf.write(",".join(cols) + "\n")
    for i in range(result.eval_points.shape[0]):
        row = [f"{v:.17g}" for v in np.atleast_1d(result.eval_points[i])]
        row += [str(int(k)) for k in np.atleast_1d(result.chosen_exponents[i])]
        row += [f"{result.estimate[i]:.17g}", f"{result.objective[i]:.17g}",
                str(int(result.boundary_hit[i]))]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
