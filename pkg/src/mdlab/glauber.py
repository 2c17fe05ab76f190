"""Random-scan heat-bath (Glauber) dynamics for CW(rho) at beta = 1.

One update picks a site uniformly and redraws it from
``rho(x) exp(x**2/(2n) + x s_rest / n)``, which is the conditional law used to
build the random-index exchangeable pair.  A sweep is ``n`` updates.

Randomness comes from a numpy ``Generator`` and is drawn in blocks before
being handed to the compiled kernel, so a chain is a deterministic function of
its seed.  Independent chains get seeds from :func:`chain_seeds`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numba
import numpy as np

from .curie_weiss import RhoMeasure, site_conditional


def chain_seeds(root_seed: int, n_chains: int) -> list[np.random.SeedSequence]:
    """Per-chain seed sequences: ``SeedSequence(root_seed).spawn(n_chains)``."""
    return np.random.SeedSequence(root_seed).spawn(n_chains)


@numba.njit(cache=True)
def _site_probs(points, log_w, n, s_rest, out):
    m = -np.inf
    for v in range(points.shape[0]):
        x = points[v]
        out[v] = log_w[v] + x * x / (2.0 * n) + x * s_rest / n
        if out[v] > m:
            m = out[v]
    tot = 0.0
    for v in range(points.shape[0]):
        out[v] = np.exp(out[v] - m)
        tot += out[v]
    for v in range(points.shape[0]):
        out[v] /= tot


@numba.njit(cache=True)
def _run_updates(state, counts, points, log_w, sites, uniforms):
    n = state.shape[0]
    nv = points.shape[0]
    probs = np.empty(nv)
    S = 0.0
    for v in range(nv):
        S += counts[v] * points[v]
    for t in range(sites.shape[0]):
        i = sites[t]
        cur = state[i]
        s_rest = S - points[cur]
        _site_probs(points, log_w, n, s_rest, probs)
        u = uniforms[t]
        acc = 0.0
        new = nv - 1
        for v in range(nv):
            acc += probs[v]
            if u < acc:
                new = v
                break
        state[i] = new
        counts[cur] -= 1
        counts[new] += 1
        S = s_rest + points[new]


@dataclass
class GlauberRun:
    n: int
    seed: int
    burn_in_sweeps: int
    thin: int
    s_values: np.ndarray
    counts: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return len(self.s_values)


class GlauberChain:
    """A single chain; state is the vector of support indices."""

    def __init__(self, rho: RhoMeasure, n: int, seed):
        if n < 2:
            raise ValueError("Glauber dynamics needs n >= 2")
        self.rho = rho
        self.n = n
        self.rng = np.random.default_rng(seed)
        self.points = np.ascontiguousarray(rho.points, dtype=np.float64)
        self.log_w = np.log(rho.weights)
        self.state = self.rng.choice(len(rho.points), size=n, p=rho.weights).astype(np.int64)
        self.counts = np.bincount(self.state, minlength=len(rho.points)).astype(np.int64)

    @property
    def S(self) -> float:
        return float(self.counts @ self.points)

    def sweeps(self, k: int) -> None:
        total = k * self.n
        block = 1 << 20
        while total > 0:
            m = min(total, block)
            sites = self.rng.integers(0, self.n, size=m)
            u = self.rng.random(m)
            _run_updates(self.state, self.counts, self.points, self.log_w, sites, u)
            total -= m


def iter_glauber(rho: RhoMeasure, n: int, seed, burn_in_sweeps: int, n_samples: int,
                 thin: int = 1, record_counts: bool = False,
                 chunk: int = 10_000) -> Iterator[tuple[np.ndarray, np.ndarray | None]]:
    """Yield blocks of ``S_n`` samples (and count vectors if requested)."""
    chain = GlauberChain(rho, n, seed)
    chain.sweeps(burn_in_sweeps)
    left = n_samples
    while left > 0:
        m = min(chunk, left)
        s = np.empty(m)
        c = np.empty((m, len(rho.points)), dtype=np.int64) if record_counts else None
        for j in range(m):
            chain.sweeps(thin)
            s[j] = chain.S
            if c is not None:
                c[j] = chain.counts
        yield s, c
        left -= m


def glauber_sampler(rho: RhoMeasure, n: int, seed: int, burn_in_sweeps: int = 1000,
                    n_samples: int = 10_000, thin: int = 1,
                    record_counts: bool = False) -> GlauberRun:
    s_blocks, c_blocks = [], []
    for s, c in iter_glauber(rho, n, seed, burn_in_sweeps, n_samples, thin, record_counts):
        s_blocks.append(s)
        if c is not None:
            c_blocks.append(c)
    return GlauberRun(n=n, seed=seed, burn_in_sweeps=burn_in_sweeps, thin=thin,
                      s_values=np.concatenate(s_blocks) if s_blocks else np.empty(0),
                      counts=np.concatenate(c_blocks) if c_blocks else None)


def empirical_pmf(s_samples: np.ndarray, step: float, labels: np.ndarray) -> np.ndarray:
    """Empirical mass on the given lattice labels."""
    lab = np.rint(np.asarray(s_samples) / step).astype(np.int64)
    idx = np.searchsorted(labels, lab)
    if np.any(idx >= len(labels)) or np.any(labels[np.minimum(idx, len(labels) - 1)] != lab):
        raise ValueError("sample outside the lattice support")
    return np.bincount(idx, minlength=len(labels)) / len(lab)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# ---------------------------------------------------------------------------
# exact kernel on the full configuration space (small n)


def configuration_sums(rho: RhoMeasure, n: int) -> np.ndarray:
    """Tensor of shape ``(|supp|,) * n`` holding ``S`` for each configuration."""
    s = len(rho.points)
    S = np.zeros((s,) * n)
    for i in range(n):
        shape = [1] * n
        shape[i] = s
        S = S + rho.points.reshape(shape)
    return S


def apply_sweep(rho: RhoMeasure, n: int, P: np.ndarray, sweeps: int = 1) -> np.ndarray:
    """Push a configuration distribution through ``sweeps`` random-scan sweeps.

    ``P`` has shape ``(|supp|,) * n``.  One update at site ``i`` maps ``P`` to
    ``pi_i(x_i | rest) * sum_{x_i} P``; a random-scan update averages that over
    ``i``.
    """
    s = len(rho.points)
    S = configuration_sums(rho, n)
    cond = []
    for i in range(n):
        shape = [1] * n
        shape[i] = s
        x_i = rho.points.reshape(shape)
        idx = np.broadcast_to(np.arange(s).reshape(shape), S.shape)
        probs = site_conditional(rho, n, S - x_i)  # (..., s) over candidate values
        cond.append(np.take_along_axis(probs, idx[..., None], axis=-1)[..., 0])
    for _ in range(sweeps * n):
        nxt = np.zeros_like(P)
        for i in range(n):
            nxt += cond[i] * P.sum(axis=i, keepdims=True)
        P = nxt / n
    return P
