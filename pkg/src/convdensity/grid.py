"""Finite truncations of the geometric bandwidth lattice {e^k}^d.

Members are kept while their sup-noise scale (the Bernstein term of the
stochastic error) stays below a fixed cap: below that scale the variance
penalty dominates any bounded bias, so smaller bandwidths cannot win the
selection.  Full mode enumerates the whole exponent box, isotropic mode its
diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGrid

G_CAP = 1.0


def noise_scales(h, n, gamma):
    """Root-mean-square and sup noise scales of the estimator at bandwidth h.

    Returns the pair

        F = sqrt(ln n + sum |ln h_j|) / (sqrt(n) prod h_j^(1/2) (h_j ^ 1)^gamma_j)
        G = (ln n + sum |ln h_j|) / (n prod h_j (h_j ^ 1)^gamma_j)

    Both are coordinatewise antitone in h.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), h.shape)
    logs = np.log(float(n)) + np.sum(np.abs(np.log(h)))
    caps = np.minimum(h, 1.0) ** gamma
    f = np.sqrt(logs) / (np.sqrt(float(n)) * np.prod(np.sqrt(h) * caps))
    g = logs / (float(n) * np.prod(h * caps))
    return float(f), float(g)


@dataclass(frozen=True)
class BandwidthGrid:
    """Ordered collection of multi-bandwidths h = (e^{k_1}, ..., e^{k_d}).

    Members are sorted by volume descending, ties broken lexicographically on
    the exponent vectors, so iteration order is deterministic.  ``exponents``
    mirrors ``members`` as integer vectors.
    """

    mode: str
    k_min: int
    k_max: int
    n: int
    gamma: tuple
    exponents: tuple          # tuple of d-tuples of ints
    members: np.ndarray = field(repr=False)  # (size, d) float array

    @property
    def d(self):
        return self.members.shape[1]

    @property
    def size(self):
        return self.members.shape[0]

    def volumes(self):
        return np.prod(self.members, axis=1)

    def index_of(self, exponent):
        """Index of an exponent vector, or -1 if absent."""
        return self._lookup().get(tuple(int(k) for k in exponent), -1)

    def _lookup(self):
        if not hasattr(self, "_lookup_cache"):
            object.__setattr__(
                self, "_lookup_cache",
                {exp: i for i, exp in enumerate(self.exponents)},
            )
        return self._lookup_cache

    def describe(self):
        """Human-readable summary rows: range, size, noise-scale extremes."""
        fs, gs = zip(*(noise_scales(h, self.n, self.gamma) for h in self.members))
        return {
            "mode": self.mode,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "size": self.size,
            "rms_scale_min": min(fs),
            "rms_scale_max": max(fs),
            "sup_scale_min": min(gs),
            "sup_scale_max": max(gs),
        }


def _default_k_min(n, d, gamma, k_max):
    """Smallest k whose isotropic bandwidth passes the sup-scale cap."""
    k = k_max
    while k > -200:
        h = np.full(d, np.exp(float(k - 1)))
        _, g = noise_scales(h, n, gamma)
        if g > G_CAP:
            break
        k -= 1
    return k


def build_grid(n, d, gamma, mode="isotropic", k_min=None, k_max=None):
    """Build the truncated bandwidth lattice for sample size ``n``.

    Unless overridden, exponents range from the smallest k whose isotropic
    member still satisfies the sup-scale cap, up to k_max = 0 (bandwidths
    above 1 mainly serve heavy smoothing and need an explicit override).
    Members violating the cap are dropped; raises EmptyGrid when none
    survive.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    if mode not in ("full", "isotropic"):
        raise ValueError(f"unknown grid mode {mode!r}")
    gamma = tuple(float(g) for g in np.broadcast_to(np.asarray(gamma, dtype=float), (d,)))
    if k_max is None:
        k_max = 0
    if k_min is None:
        k_min = _default_k_min(n, d, gamma, k_max)
    k_min, k_max = int(k_min), int(k_max)
    if k_min > k_max:
        raise ValueError("k_min must not exceed k_max")

    ks = range(k_min, k_max + 1)
    if mode == "isotropic":
        candidates = [(k,) * d for k in ks]
    else:
        grids = np.meshgrid(*([list(ks)] * d), indexing="ij")
        candidates = [tuple(int(v) for v in row)
                      for row in np.stack([g.ravel() for g in grids], axis=-1)]

    kept = []
    for exp in candidates:
        h = np.exp(np.asarray(exp, dtype=float))
        _, g = noise_scales(h, n, gamma)
        if g <= G_CAP:
            kept.append(exp)
    if not kept:
        raise EmptyGrid(
            f"no bandwidth in k range [{k_min}, {k_max}] passes the "
            f"sup-scale cap at n={n}"
        )

    # volume descending = exponent-sum descending; ties lexicographic
    kept.sort(key=lambda exp: (-sum(exp), exp))
    members = np.exp(np.asarray(kept, dtype=float))
    return BandwidthGrid(
        mode=mode,
        k_min=k_min,
        k_max=k_max,
        n=int(n),
        gamma=gamma,
        exponents=tuple(kept),
        members=members,
    )
