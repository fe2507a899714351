"""The estimator family over a bandwidth grid, with its error thresholds.

For each bandwidth h the estimate at x is the empirical mean of
M(Z_i - x, h); its dispersion is tracked through the empirical second moment
of the same values and folded into a Bernstein-style error bound

    bound = sqrt(2 L s2 / n) + 4 C L / (3 n prod h_j (h_j ^ 1)^gamma_j)

where L is a logarithmic penalty and C the sup-norm constant of the
deconvolution kernel.  The selection step consumes the envelope of these
bounds over all coordinatewise-larger bandwidths.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


def penalty(h, n, p, consts):
    """Logarithmic penalty entering the error bounds.

    4 ln(sup_bound) + 6 ln(n) + (8p + 26) sum_j (1 + gamma_j) |ln h_j|.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    gamma = np.asarray(consts.gamma, dtype=float)
    logs = np.sum((1.0 + gamma) * np.abs(np.log(h)))
    return float(4.0 * np.log(consts.sup_bound) + 6.0 * np.log(float(n))
                 + (8.0 * p + 26.0) * logs)


def _bound_from_parts(second_moment, h, n, p, consts, pen=None):
    """Error bound given a second-moment value (empirical or true)."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    gamma = np.asarray(consts.gamma, dtype=float)
    if pen is None:
        pen = penalty(h, n, p, consts)
    denom = float(np.prod(h * np.minimum(h, 1.0) ** gamma))
    tail = 4.0 * consts.sup_bound * pen / (3.0 * n * denom)
    return np.sqrt(2.0 * pen * np.asarray(second_moment) / n) + tail, pen


def kernel_values_at(table, sample, x):
    """Values M(Z_i - x, h) for a single evaluation point x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return table(sample.points - x[None, :])


def estimate_at(sample, table, x):
    """Kernel-type estimate: mean of M(Z_i - x, h) over the sample."""
    return float(np.mean(kernel_values_at(table, sample, x)))


def empirical_second_moment(sample, table, x):
    """Empirical second moment: mean of M(Z_i - x, h)^2."""
    return float(np.mean(kernel_values_at(table, sample, x) ** 2))


def error_bound(sample, table, x, consts, p):
    """Empirical error bound for the estimate at x and the table's bandwidth."""
    s2 = empirical_second_moment(sample, table, x)
    value, _ = _bound_from_parts(s2, table.h, sample.n, p, consts)
    return float(value)


def error_bound_true(second_moment, h, n, consts, p):
    """Error bound evaluated with a known (quadrature) second moment."""
    value, _ = _bound_from_parts(second_moment, h, n, p, consts)
    return float(value)


@dataclass
class EstimatorSurface:
    """All per-(point, bandwidth) quantities needed by the selection rule.

    Arrays are (m, size): ``estimates``, ``second_moments``, ``bounds`` and
    the envelope ``bounds_sup`` (supremum of bounds over coordinatewise
    larger members).  ``penalties`` is per member.
    """

    grid: object
    eval_points: np.ndarray
    estimates: np.ndarray
    second_moments: np.ndarray
    bounds: np.ndarray
    bounds_sup: np.ndarray
    penalties: np.ndarray
    p: float
    n: int

    @property
    def m(self):
        return self.eval_points.shape[0]

    def to_csv(self):
        """Long-format debug dump: x, h, estimate, second moment, bounds."""
        d = self.grid.d
        buf = io.StringIO()
        head = [f"x_{j+1}" for j in range(d)] + [f"h_{j+1}" for j in range(d)]
        head += ["estimate", "second_moment", "bound", "bound_sup"]
        buf.write(",".join(head) + "\n")
        for i in range(self.m):
            for g, h in enumerate(self.grid.members):
                row = list(self.eval_points[i]) + list(h)
                row += [self.estimates[i, g], self.second_moments[i, g],
                        self.bounds[i, g], self.bounds_sup[i, g]]
                buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()


def _dominating_mask(grid):
    """mask[i, j] is True when member j >= member i coordinatewise."""
    exps = np.asarray(grid.exponents)
    return np.all(exps[None, :, :] >= exps[:, None, :], axis=2)


def _bounds_envelope(grid, bounds):
    """Supremum of bounds over coordinatewise-larger members, per row."""
    if grid.size == 1:
        return bounds.copy()
    if grid.mode == "isotropic":
        # members sorted by volume descending = exponent descending on the
        # diagonal, so each row's envelope is a prefix running max
        return np.maximum.accumulate(bounds, axis=1)
    mask = _dominating_mask(grid)
    out = np.empty_like(bounds)
    for j in range(grid.size):
        out[:, j] = bounds[:, mask[j]].max(axis=1)
    return out


def binned_estimates(table, sample, eval_points):
    """Binned FFT fast path (d = 1): snap data and points to the table pitch.

    Observations and evaluation points are rounded to the nearest multiple of
    the table step, after which every estimate is a discrete correlation of
    the bin counts with kernel values at exact step multiples (one FFT
    convolution serves all points).  The absolute error is at most the
    Lipschitz constant of M times the step.
    """
    from scipy.signal import fftconvolve

    if table.d != 1:
        raise NotImplementedError("binned path only implemented for d = 1")
    z = sample.points[:, 0]
    x = eval_points[:, 0]
    step = float(table.step[0])
    zi = np.round(z / step).astype(np.int64)
    xi = np.round(x / step).astype(np.int64)
    i0 = int(zi.min())
    counts = np.bincount(zi - i0).astype(float)
    lo = float(table.window[0, 0])
    kmax = int(np.ceil(max(abs(table.window[0, 0]), abs(table.window[0, 1])) / step)) + 1
    nodes = lo + step * np.arange(table.values.size)
    mv = np.interp(np.arange(-kmax, kmax + 1) * step, nodes, table.values,
                   left=0.0, right=0.0)

    def correlate(weights):
        # E[r] = sum_i counts[i] * weights_at(i0 + i - r) = conv[r - i0 + kmax]
        conv = fftconvolve(counts, weights[::-1])
        pos = xi - i0 + kmax
        ok = (pos >= 0) & (pos < conv.size)
        out = np.zeros(x.size)
        out[ok] = conv[pos[ok]]
        return out / sample.n

    return correlate(mv), correlate(mv ** 2)


def build_surface(sample, grid, tables, eval_points, consts, p, method="direct"):
    """Evaluate the whole estimator family on a set of points.

    ``tables`` must align with ``grid.members``.  ``method`` chooses the
    direct O(n m) summation (reference path) or the binned approximation
    ('binned'; 'auto' switches when n * m exceeds 1e8).
    """
    eval_points = np.atleast_2d(np.asarray(eval_points, dtype=float))
    if eval_points.size == 0:
        eval_points = eval_points.reshape(0, grid.d)
    m = eval_points.shape[0]
    size = grid.size
    if len(tables) != size:
        raise ValueError("need one kernel table per grid member")

    estimates = np.empty((m, size))
    second = np.empty((m, size))
    bounds = np.empty((m, size))
    pens = np.empty(size)

    use_binned = method == "binned" or (
        method == "auto" and sample.n * max(m, 1) > 1e8 and grid.d == 1
    )

    offsets = None
    if m and not use_binned:
        # one flattened offset set serves every kernel table
        offsets = (sample.points[:, None, :]
                   - eval_points[None, :, :]).reshape(-1, grid.d)

    for g, table in enumerate(tables):
        pens[g] = penalty(table.h, sample.n, p, consts)
        if m == 0:
            continue
        if use_binned:
            f, s2 = binned_estimates(table, sample, eval_points)
        else:
            vals = table(offsets).reshape(sample.n, m)
            f = vals.mean(axis=0)
            s2 = (vals ** 2).mean(axis=0)
        estimates[:, g] = f
        second[:, g] = s2
        b, _ = _bound_from_parts(s2, table.h, sample.n, p, consts, pen=pens[g])
        bounds[:, g] = b

    return EstimatorSurface(
        grid=grid,
        eval_points=eval_points,
        estimates=estimates,
        second_moments=second,
        bounds=bounds,
        bounds_sup=_bounds_envelope(grid, bounds) if m else bounds.copy(),
        penalties=pens,
        p=float(p),
        n=sample.n,
    )
