"""Deep-network kernel construction.

The covariance of an infinitely wide fully-connected network is built by a
deterministic recursion: a base case from the raw inputs,

    K0(x, x') = sigma_b^2 + sigma_w^2 (x . x') / d_in,

then one step per hidden layer,

    Kl(x, x') = sigma_b^2 + sigma_w^2 * F(K_{l-1}(x, x'),
                                          K_{l-1}(x, x), K_{l-1}(x', x')),

where F is the two-point expectation tabulated in :mod:`nngp.lookup`. With
all inputs rescaled to a common norm every diagonal entry is identical at
every layer, so the per-layer state is one scalar variance plus the
off-diagonal covariances, and each step is a vectorized interpolation.

For ReLU the step also has a closed form (the arccosine kernel), used both
as an independent check of the lookup pipeline and as the fast path for
inputs of unequal norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .activations import get_activation
from .lookup import LookupTable, TableRangeError, expectation_direct, interpolate

DEFAULT_NOISE = 1e-10
_NORM_RTOL = 1e-6


@dataclass(frozen=True)
class NetworkHyperparams:
    """Depth, variances, nonlinearity and observation noise of one network.

    Fully identifies a kernel. sigma_w2 = 0 is allowed (bias-only network).
    """

    depth: int
    sigma_w2: float
    sigma_b2: float
    phi: str
    noise: float = DEFAULT_NOISE

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise ValueError(f"depth must be an integer >= 1, got {self.depth}")
        for name in ("sigma_w2", "sigma_b2", "noise"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        get_activation(self.phi)


@dataclass(frozen=True)
class KernelMatrix:
    """Kernel blocks over train and test points at one layer.

    ``entries`` holds the rows for the training points against all points,
    i.e. the [K_DD | K_D,test] blocks; test-test off-diagonals are never
    computed (only the test diagonal is needed for the posterior variance).
    With no test points ``entries`` is the full symmetric Gram matrix.
    """

    entries: np.ndarray
    n_train: int
    test_diag: np.ndarray
    layer: int
    point_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.point_ids is None:
            n = self.entries.shape[1]
            object.__setattr__(self, "point_ids", np.arange(n))

    @property
    def n_test(self) -> int:
        return self.entries.shape[1] - self.n_train

    @property
    def kdd(self) -> np.ndarray:
        """Train-train block, (n_train, n_train)."""
        return self.entries[:, : self.n_train]

    @property
    def kxd(self) -> np.ndarray:
        """Test-train block, (n_test, n_train)."""
        return self.entries[:, self.n_train:].T

    def symmetry_error(self) -> float:
        k = self.kdd
        scale = max(float(np.abs(k).max()), 1e-300)
        return float(np.abs(k - k.T).max()) / scale

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.kdd)[0])


def base_kernel(x: np.ndarray, x2: np.ndarray, hp: NetworkHyperparams) -> float:
    """Input-layer covariance sigma_b^2 + sigma_w^2 (x . x') / d_in."""
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape or x.ndim != 1:
        raise ValueError(f"inputs must be 1D of equal dimension, got {x.shape} and {x2.shape}")
    d_in = x.size
    return float(hp.sigma_b2 + hp.sigma_w2 * (x @ x2) / d_in)


def step_kernel(k_xy: float, k_xx: float, k_yy: float, hp: NetworkHyperparams,
                table: LookupTable) -> float:
    """One layer of the recurrence through the lookup table.

    Requires k_xx = k_yy (guaranteed by constant-norm preprocessing).
    """
    if abs(k_xx - k_yy) > _NORM_RTOL * max(abs(k_xx), abs(k_yy), 1e-30):
        raise ValueError(
            f"equal marginal variances required, got k_xx = {k_xx}, k_yy = {k_yy}; "
            f"preprocess inputs to a common norm"
        )
    return hp.sigma_b2 + hp.sigma_w2 * interpolate(table, k_xy, k_xx)


def analytic_relu_step(k_xy, k_xx, k_yy, hp: NetworkHyperparams):
    """Closed-form ReLU step (arccosine kernel), valid for unequal variances.

    Accepts scalars or broadcastable arrays.
    """
    k_xx = np.asarray(k_xx, dtype=np.float64)
    k_yy = np.asarray(k_yy, dtype=np.float64)
    k_xy = np.asarray(k_xy, dtype=np.float64)
    if np.any(k_xx <= 0.0) or np.any(k_yy <= 0.0):
        raise ValueError("marginal variances must be positive")
    denom = np.sqrt(k_xx * k_yy)
    if np.any(np.abs(k_xy) > denom * (1.0 + 1e-8) + 1e-15):
        raise ValueError("|k_xy| <= sqrt(k_xx k_yy) violated")
    cos_t = np.clip(k_xy / denom, -1.0, 1.0)
    theta = np.arccos(cos_t)
    out = hp.sigma_b2 + (hp.sigma_w2 / (2.0 * math.pi)) * denom * (
        np.sin(theta) + (math.pi - theta) * cos_t
    )
    return float(out) if out.ndim == 0 else out


def _step_offdiag(k_vec: np.ndarray, q: float, hp: NetworkHyperparams,
                  table: LookupTable, layer: int):
    """Advance off-diagonal covariances one layer at shared variance q."""
    try:
        f = interpolate(table, k_vec, q)
    except TableRangeError as exc:
        raise TableRangeError(f"layer {layer}: {exc}") from exc
    return hp.sigma_b2 + hp.sigma_w2 * f


def _step_diag(q: float, hp: NetworkHyperparams, table: LookupTable, layer: int) -> float:
    try:
        f = interpolate(table, q, q)
    except TableRangeError as exc:
        raise TableRangeError(f"layer {layer}: {exc}") from exc
    return hp.sigma_b2 + hp.sigma_w2 * f


def _common_squared_norm(x: np.ndarray) -> float:
    norms = np.einsum("ij,ij->i", x, x)
    lo, hi = float(norms.min()), float(norms.max())
    if hi - lo > _NORM_RTOL * max(hi, 1e-30):
        raise ValueError(
            f"inputs must share one squared norm (found range [{lo}, {hi}]); "
            f"preprocess inputs first"
        )
    return float(norms.mean())


def iter_kernel_layers(train_inputs: np.ndarray, hp: NetworkHyperparams,
                       table: LookupTable, test_inputs: np.ndarray | None = None):
    """Yield the KernelMatrix at layers 0..depth.

    Cost per layer is O(n_train^2 + n_train n_test) interpolations; the
    train-train block is computed on its upper triangle and mirrored.
    """
    x_train = np.asarray(train_inputs, dtype=np.float64)
    n_train = x_train.shape[0]
    if test_inputs is None:
        x_all = x_train
    else:
        x_all = np.vstack([x_train, np.asarray(test_inputs, dtype=np.float64)])
    d_in = x_all.shape[1]
    n_all = x_all.shape[0]
    rho = _common_squared_norm(x_all) / d_in

    q = hp.sigma_b2 + hp.sigma_w2 * rho
    if q > table.grid.s_max:
        raise TableRangeError(
            f"layer 0: base variance {q} exceeds s_max = {table.grid.s_max}"
        )
    entries = hp.sigma_b2 + hp.sigma_w2 * (x_train @ x_all.T) / d_in
    iu, ju = np.triu_indices(n_train, k=1)
    idx = np.arange(n_train)
    entries[idx, idx] = q
    n_test = n_all - n_train

    def snapshot(layer):
        return KernelMatrix(
            entries=entries.copy(), n_train=n_train,
            test_diag=np.full(n_test, q), layer=layer,
        )

    yield snapshot(0)
    for layer in range(1, hp.depth + 1):
        upper = _step_offdiag(entries[iu, ju], q, hp, table, layer)
        cross = (_step_offdiag(entries[:, n_train:].ravel(), q, hp, table, layer)
                 .reshape(n_train, n_test)) if n_test else entries[:, n_train:]
        q = _step_diag(q, hp, table, layer)
        entries[iu, ju] = upper
        entries[ju, iu] = upper
        entries[idx, idx] = q
        if n_test:
            entries[:, n_train:] = cross
        yield snapshot(layer)


def build_kernel_matrix(train_inputs: np.ndarray, hp: NetworkHyperparams,
                        table: LookupTable,
                        test_inputs: np.ndarray | None = None) -> KernelMatrix:
    """Kernel at the output layer over train (and optionally test) points."""
    out = None
    for out in iter_kernel_layers(train_inputs, hp, table, test_inputs):
        pass
    return out


@dataclass(frozen=True)
class AngularProfile:
    """Kernel value versus input angle, one row per layer 0..depth.

    Inputs follow the unit-norm convention (||x||^2 = d_in), so row 0 is
    sigma_b^2 + sigma_w^2 cos(theta).
    """

    thetas: np.ndarray
    values: np.ndarray


def angular_profile(hp: NetworkHyperparams, table: LookupTable | None = None,
                    n_angles: int = 181) -> AngularProfile:
    """K^l as a function of the angle between two constant-norm inputs.

    Uses the lookup table when given; otherwise requires ReLU and iterates
    the closed-form step.
    """
    thetas = np.linspace(0.0, math.pi, n_angles)
    k = hp.sigma_b2 + hp.sigma_w2 * np.cos(thetas)
    q = hp.sigma_b2 + hp.sigma_w2
    values = np.empty((hp.depth + 1, n_angles))
    values[0] = k
    for layer in range(1, hp.depth + 1):
        if table is not None:
            k = _step_offdiag(k, q, hp, table, layer)
            q = _step_diag(q, hp, table, layer)
        elif hp.phi == "relu":
            if q <= 0.0:
                k = np.full_like(k, hp.sigma_b2)
                q = hp.sigma_b2
            else:
                k = analytic_relu_step(k, q, q, hp)
                q = hp.sigma_b2 + hp.sigma_w2 * q / 2.0
        else:
            raise ValueError(f"no analytic step for phi = {hp.phi!r}; pass a lookup table")
        values[layer] = k
    return AngularProfile(thetas=thetas, values=values)


def cholesky_with_jitter(k: np.ndarray, jitter0: float = DEFAULT_NOISE,
                         max_tries: int = 10) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of k + jitter*I, escalating jitter by 10x."""
    jitter = 0.0
    for attempt in range(max_tries + 1):
        try:
            chol = np.linalg.cholesky(k + jitter * np.eye(k.shape[0]))
            return chol, jitter
        except np.linalg.LinAlgError:
            jitter = jitter0 if jitter == 0.0 else jitter * 10.0
    raise ArithmeticError(
        f"Cholesky failed after {max_tries} jitter escalations (last jitter {jitter / 10.0})"
    )


def _full_kernel_general(points: np.ndarray, hp: NetworkHyperparams,
                         table: LookupTable | None) -> np.ndarray:
    """Full Gram matrix for points of possibly unequal norm.

    ReLU uses the closed-form step; other nonlinearities fall back to
    per-pair direct quadrature (fine for the small grids prior draws use).
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d_in = x.shape
    k = hp.sigma_b2 + hp.sigma_w2 * (x @ x.T) / d_in

    norms = np.einsum("ij,ij->i", x, x)
    const_norm = float(norms.max() - norms.min()) <= _NORM_RTOL * max(float(norms.max()), 1e-30)
    if const_norm and table is not None:
        q = float(k[0, 0])
        iu, ju = np.triu_indices(n, k=1)
        idx = np.arange(n)
        for layer in range(1, hp.depth + 1):
            off = _step_offdiag(k[iu, ju], q, hp, table, layer)
            q = _step_diag(q, hp, table, layer)
            k[iu, ju] = off
            k[ju, iu] = off
            k[idx, idx] = q
        return k

    if hp.phi == "relu":
        for _ in range(hp.depth):
            d = np.diag(k).copy()
            k = analytic_relu_step(k, d[:, None], d[None, :], hp)
        return k

    act = get_activation(hp.phi)
    grid = table.grid if table is not None else None
    iu, ju = np.triu_indices(n, k=0)
    for _ in range(hp.depth):
        d = np.diag(k).copy()
        nxt = np.empty_like(k)
        for a, b in zip(iu, ju):
            f = expectation_direct(act, k[a, b], d[a], d[b], grid)
            nxt[a, b] = hp.sigma_b2 + hp.sigma_w2 * f
            nxt[b, a] = nxt[a, b]
        k = nxt
    return k


def sample_prior(points: np.ndarray, hp: NetworkHyperparams,
                 table: LookupTable | None, n_draws: int, seed: int,
                 jitter0: float = DEFAULT_NOISE) -> np.ndarray:
    """Draw zero-mean Gaussian functions with the depth-L kernel as covariance.

    Returns (n_draws, n_points); deterministic given the seed. The grid may
    be a 1D array of scalar inputs or an (n, d) array; equal-norm grids go
    through the lookup table, unequal norms use the general kernel path.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    k = _full_kernel_general(x, hp, table)
    n = k.shape[0]
    if n_draws == 0:
        return np.empty((0, n))
    chol, _ = cholesky_with_jitter(k, jitter0)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, n_draws))
    return (chol @ z).T
