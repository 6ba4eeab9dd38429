"""Finite-width Monte Carlo check of the infinite-width kernel.

Random finite networks with Gaussian weights (variance sigma_w^2 / fan-in)
and biases (variance sigma_b^2) are sampled and the empirical covariance of
one output unit across networks is compared to the deterministic kernel.

Sampling marginalizes the weights exactly, layer by layer: conditioned on
the previous layer's post-activations h, the next pre-activations are
Gaussian with covariance sigma_w^2 (h h^T / N) + sigma_b^2 11^T across
points, independent across units. For Gaussian parameters this holds at any
finite width, so the sampled joint law of the outputs is identical to
materializing every weight matrix, at a fraction of the random-number cost.
Everything is deterministic given (seed, widths, n_networks): batches draw
from child generators spawned from the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import NetworkHyperparams, _common_squared_norm
from .activations import get_activation

_JACKKNIFE_SHARDS = 10
_BATCH_VALUE_BUDGET = 3_000_000


@dataclass(frozen=True)
class FiniteNetSample:
    """Empirical output covariance over a sample of finite-width networks."""

    widths: tuple[int, ...]
    n_networks: int
    seed: int
    empirical_k: np.ndarray
    stderr: np.ndarray


@dataclass(frozen=True)
class NormalityStats:
    """Per-point skewness and excess kurtosis of the sampled outputs."""

    skewness: np.ndarray
    excess_kurtosis: np.ndarray


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Batched factor L with L L^T = cov, tolerating singular matrices."""
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]


def _batch_plan(n_networks: int, max_width: int) -> list[int]:
    size = max(1, min(n_networks, _BATCH_VALUE_BUDGET // max(max_width, 1)))
    full, rem = divmod(n_networks, size)
    return [size] * full + ([rem] if rem else [])


def _iter_output_batches(points: np.ndarray, hp: NetworkHyperparams,
                         widths: tuple[int, ...], n_networks: int, seed: int,
                         units: int):
    """Yield (start_index, outputs (B, n_points, units)) batches."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"points must be (n, d_in), got shape {x.shape}")
    _common_squared_norm(x)
    if len(widths) != hp.depth:
        raise ValueError(f"{len(widths)} widths for depth {hp.depth}")
    if any(int(w) != w or w < 1 for w in widths):
        raise ValueError(f"widths must be integers >= 1, got {widths}")
    if n_networks < 1:
        raise ValueError(f"n_networks must be >= 1, got {n_networks}")
    act = get_activation(hp.phi)
    n, d_in = x.shape

    k0 = x @ x.T / d_in
    ones = np.ones((n, n))
    l0 = _psd_factor(hp.sigma_w2 * k0 + hp.sigma_b2 * ones)

    plan = _batch_plan(n_networks, max(widths))
    streams = np.random.SeedSequence(seed).spawn(len(plan))
    start = 0
    for batch, ss in zip(plan, streams):
        rng = np.random.default_rng(ss)
        z = np.einsum("pq,bqj->bpj", l0, rng.standard_normal((batch, n, widths[0])))
        for layer in range(1, hp.depth + 1):
            h = act.fn(z)
            fan_in = widths[layer - 1]
            with np.errstate(over="ignore"):
                k_emp = np.einsum("bpn,bqn->bpq", h, h) / fan_in
                cov = hp.sigma_w2 * k_emp + hp.sigma_b2 * ones
            if not np.all(np.isfinite(cov)):
                raise ArithmeticError(
                    f"layer {layer}: non-finite activations (exploding variance)"
                )
            width_out = widths[layer] if layer < hp.depth else units
            eps = rng.standard_normal((batch, n, width_out))
            z = _psd_factor(cov) @ eps
        yield start, z
        start += batch


def sample_empirical_kernel(points: np.ndarray, hp: NetworkHyperparams,
                            widths, n_networks: int, seed: int,
                            average_units: int = 1) -> FiniteNetSample:
    """Average output-product matrix over n_networks random networks.

    ``average_units`` > 1 averages the product over that many i.i.d. output
    units per network (variance reduction only; unbiased either way).
    Standard errors come from a delete-one jackknife over 10 contiguous
    shards of the network sample.
    """
    widths = tuple(int(w) for w in np.atleast_1d(widths))
    n = np.asarray(points).shape[0]
    n_shards = min(_JACKKNIFE_SHARDS, n_networks)
    shard_sums = np.zeros((n_shards, n, n))
    shard_counts = np.zeros(n_shards, dtype=np.int64)
    for start, z in _iter_output_batches(points, hp, widths, n_networks, seed,
                                         units=average_units):
        grams = np.einsum("bpu,bqu->bpq", z, z) / average_units
        ids = (np.arange(start, start + z.shape[0]) * n_shards) // n_networks
        for shard in np.unique(ids):
            sel = ids == shard
            shard_sums[shard] += grams[sel].sum(axis=0)
            shard_counts[shard] += int(sel.sum())

    total = shard_sums.sum(axis=0)
    empirical = total / n_networks
    if n_shards > 1:
        loo = (total[None] - shard_sums) / (n_networks - shard_counts)[:, None, None]
        center = loo.mean(axis=0)
        stderr = np.sqrt((n_shards - 1) / n_shards
                         * ((loo - center) ** 2).sum(axis=0))
    else:
        stderr = np.full((n, n), np.nan)
    return FiniteNetSample(widths=widths, n_networks=n_networks, seed=seed,
                           empirical_k=empirical, stderr=stderr)


def gaussianity_check(points: np.ndarray, hp: NetworkHyperparams, width: int,
                      n_networks: int, seed: int) -> NormalityStats:
    """Skewness and excess kurtosis of the output at every point.

    Both shrink toward zero as the width grows (central limit behaviour of
    the last-layer sum); a width-1 network is visibly non-Gaussian.
    """
    widths = (int(width),) * hp.depth
    n = np.asarray(points).shape[0]
    raw = np.zeros((4, n))
    for _, z in _iter_output_batches(points, hp, widths, n_networks, seed, units=1):
        out = z[:, :, 0]
        for p in range(4):
            raw[p] += (out ** (p + 1)).sum(axis=0)
    m1, m2, m3, m4 = raw / n_networks
    c2 = m2 - m1 ** 2
    c3 = m3 - 3 * m1 * m2 + 2 * m1 ** 3
    c4 = m4 - 4 * m1 * m3 + 6 * m1 ** 2 * m2 - 3 * m1 ** 4
    return NormalityStats(
        skewness=c3 / c2 ** 1.5,
        excess_kurtosis=c4 / c2 ** 2 - 3.0,
    )
