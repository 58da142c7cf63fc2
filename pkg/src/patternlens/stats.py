"""Streaming sufficient statistics for pattern estimation.

For every linear neuron we track the input mean, the mean input-output
product, output mean and variance, and the same moments conditioned on
the sign regime of the output (strictly positive vs. the rest).  Exact
zeros land in the negative regime, mirroring the closed-ReLU convention
used by the network engine.

All moments are kept as running means with numerically stable incremental
updates, so a single pass over data larger than memory suffices, and two
accumulators built over disjoint shards can be merged into the same
result (up to float rounding) as a single pass over the concatenation.

:class:`LayerStats` holds every neuron of one linear layer vectorized;
:class:`NeuronStats` is the single-neuron object with the same math.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, DimensionError


def _merge_mean(mean_a, mean_b, na, nb):
    """Combine two means with counts; counts may be per-column arrays."""
    n = na + nb
    frac = np.divide(nb, n, out=np.zeros_like(np.asarray(n, dtype=float)), where=n > 0)
    return mean_a + (mean_b - mean_a) * frac


class LayerStats:
    """Moments for all m neurons of a linear layer with k-dim inputs."""

    def __init__(self, k: int, m: int):
        self.k = int(k)
        self.m = int(m)
        self.n = 0
        self.n_pos = np.zeros(m)
        self.mean_x = np.zeros(k)
        self.mean_y = np.zeros(m)
        self.m2_y = np.zeros(m)
        self.mean_xy = np.zeros((k, m))
        self.mean_x_pos = np.zeros((k, m))
        self.mean_y_pos = np.zeros(m)
        self.mean_xy_pos = np.zeros((k, m))
        self.mean_x_neg = np.zeros((k, m))
        self.mean_y_neg = np.zeros(m)
        self.mean_xy_neg = np.zeros((k, m))

    @property
    def n_neg(self) -> np.ndarray:
        return self.n - self.n_pos

    @property
    def var_y(self) -> np.ndarray:
        """Population variance of each neuron's output."""
        if self.n == 0:
            return np.zeros(self.m)
        return self.m2_y / self.n

    def update(self, x: np.ndarray, y: np.ndarray) -> None:
        """Accumulate a single observation (x: (k,), y: (m,))."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape != (self.k,) or y.shape != (self.m,):
            raise DimensionError(
                f"expected x ({self.k},) and y ({self.m},), got {x.shape}, {y.shape}"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("non-finite observation")
        self.n += 1
        inv = 1.0 / self.n
        self.mean_x += (x - self.mean_x) * inv
        delta = y - self.mean_y
        self.mean_y += delta * inv
        self.m2_y += delta * (y - self.mean_y)
        self.mean_xy += (x[:, None] * y[None, :] - self.mean_xy) * inv

        pos = y > 0
        self.n_pos += pos
        inv_pos = np.divide(1.0, self.n_pos, out=np.zeros(self.m), where=self.n_pos > 0)
        inv_neg = np.divide(1.0, self.n_neg, out=np.zeros(self.m), where=self.n_neg > 0)
        wp = pos * inv_pos
        wn = (~pos) * inv_neg
        self.mean_x_pos += (x[:, None] - self.mean_x_pos) * wp[None, :]
        self.mean_y_pos += (y - self.mean_y_pos) * wp
        self.mean_xy_pos += (x[:, None] * y[None, :] - self.mean_xy_pos) * wp[None, :]
        self.mean_x_neg += (x[:, None] - self.mean_x_neg) * wn[None, :]
        self.mean_y_neg += (y - self.mean_y_neg) * wn
        self.mean_xy_neg += (x[:, None] * y[None, :] - self.mean_xy_neg) * wn[None, :]

    def update_batch(self, X: np.ndarray, Y: np.ndarray) -> None:
        """Accumulate a batch (X: (b, k), Y: (b, m)) in one vectorized step.

        The batch is summarized first and then merged, which keeps the
        result within merge tolerance of sample-at-a-time accumulation.
        """
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise DimensionError(f"bad batch shapes {X.shape}, {Y.shape}")
        if X.shape[1] != self.k or Y.shape[1] != self.m:
            raise DimensionError(
                f"expected ({self.k},), ({self.m},) observations, got {X.shape[1:]}, {Y.shape[1:]}"
            )
        if X.shape[0] == 0:
            return
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("non-finite observation in batch")
        other = LayerStats(self.k, self.m)
        b = X.shape[0]
        other.n = b
        other.mean_x = X.mean(axis=0)
        other.mean_y = Y.mean(axis=0)
        other.m2_y = ((Y - other.mean_y) ** 2).sum(axis=0)
        other.mean_xy = X.T @ Y / b

        P = (Y > 0).astype(np.float64)
        npos = P.sum(axis=0)
        nneg = b - npos
        inv_pos = np.divide(1.0, npos, out=np.zeros(self.m), where=npos > 0)
        inv_neg = np.divide(1.0, nneg, out=np.zeros(self.m), where=nneg > 0)
        other.n_pos = npos
        other.mean_x_pos = (X.T @ P) * inv_pos
        other.mean_y_pos = (Y * P).sum(axis=0) * inv_pos
        other.mean_xy_pos = (X.T @ (Y * P)) * inv_pos
        N = 1.0 - P
        other.mean_x_neg = (X.T @ N) * inv_neg
        other.mean_y_neg = (Y * N).sum(axis=0) * inv_neg
        other.mean_xy_neg = (X.T @ (Y * N)) * inv_neg
        self.merge(other)

    def merge(self, other: "LayerStats") -> None:
        """Fold another accumulator over the same layer into this one."""
        if other.k != self.k or other.m != self.m:
            raise DimensionError("cannot merge stats of different layer geometry")
        if other.n == 0:
            return
        na, nb = self.n, other.n
        delta = other.mean_y - self.mean_y
        self.mean_x = _merge_mean(self.mean_x, other.mean_x, na, nb)
        self.mean_y = _merge_mean(self.mean_y, other.mean_y, na, nb)
        self.m2_y = self.m2_y + other.m2_y + delta * delta * (na * nb / (na + nb))
        self.mean_xy = _merge_mean(self.mean_xy, other.mean_xy, na, nb)

        np_a, np_b = self.n_pos, other.n_pos
        self.mean_x_pos = _merge_mean(self.mean_x_pos, other.mean_x_pos, np_a, np_b)
        self.mean_y_pos = _merge_mean(self.mean_y_pos, other.mean_y_pos, np_a, np_b)
        self.mean_xy_pos = _merge_mean(self.mean_xy_pos, other.mean_xy_pos, np_a, np_b)
        nn_a, nn_b = self.n_neg, other.n_neg
        self.mean_x_neg = _merge_mean(self.mean_x_neg, other.mean_x_neg, nn_a, nn_b)
        self.mean_y_neg = _merge_mean(self.mean_y_neg, other.mean_y_neg, nn_a, nn_b)
        self.mean_xy_neg = _merge_mean(self.mean_xy_neg, other.mean_xy_neg, nn_a, nn_b)
        self.n_pos = np_a + np_b
        self.n = na + nb

    def neuron(self, j: int) -> "NeuronStats":
        """Extract the single-neuron view of neuron j."""
        if not 0 <= j < self.m:
            raise DimensionError(f"neuron index {j} out of range for {self.m} neurons")
        out = NeuronStats(self.k)
        src = LayerStats(self.k, 1)
        src.n = self.n
        src.n_pos = self.n_pos[j : j + 1].copy()
        src.mean_x = self.mean_x.copy()
        src.mean_y = self.mean_y[j : j + 1].copy()
        src.m2_y = self.m2_y[j : j + 1].copy()
        src.mean_xy = self.mean_xy[:, j : j + 1].copy()
        src.mean_x_pos = self.mean_x_pos[:, j : j + 1].copy()
        src.mean_y_pos = self.mean_y_pos[j : j + 1].copy()
        src.mean_xy_pos = self.mean_xy_pos[:, j : j + 1].copy()
        src.mean_x_neg = self.mean_x_neg[:, j : j + 1].copy()
        src.mean_y_neg = self.mean_y_neg[j : j + 1].copy()
        src.mean_xy_neg = self.mean_xy_neg[:, j : j + 1].copy()
        out._inner = src
        return out


class NeuronStats:
    """Streaming moments of one neuron: inputs x against its output y.

    Fields mirror what the closed-form fits consume: count_total,
    count_pos, mean_x_all/pos/neg, mean_y_all/pos/neg, mean_xy_all/pos/neg
    and var_y.  The positive regime is y > 0 strictly.
    """

    def __init__(self, k: int):
        self._inner = LayerStats(k, 1)

    @property
    def k(self) -> int:
        return self._inner.k

    @property
    def count_total(self) -> int:
        return self._inner.n

    @property
    def count_pos(self) -> int:
        return int(self._inner.n_pos[0])

    @property
    def count_neg(self) -> int:
        return self.count_total - self.count_pos

    @property
    def mean_x_all(self) -> np.ndarray:
        return self._inner.mean_x

    @property
    def mean_x_pos(self) -> np.ndarray:
        return self._inner.mean_x_pos[:, 0]

    @property
    def mean_x_neg(self) -> np.ndarray:
        return self._inner.mean_x_neg[:, 0]

    @property
    def mean_y_all(self) -> float:
        return float(self._inner.mean_y[0])

    @property
    def mean_y_pos(self) -> float:
        return float(self._inner.mean_y_pos[0])

    @property
    def mean_y_neg(self) -> float:
        return float(self._inner.mean_y_neg[0])

    @property
    def mean_xy_all(self) -> np.ndarray:
        return self._inner.mean_xy[:, 0]

    @property
    def mean_xy_pos(self) -> np.ndarray:
        return self._inner.mean_xy_pos[:, 0]

    @property
    def mean_xy_neg(self) -> np.ndarray:
        return self._inner.mean_xy_neg[:, 0]

    @property
    def var_y(self) -> float:
        return float(self._inner.var_y[0])

    def merge(self, other: "NeuronStats") -> None:
        self._inner.merge(other._inner)


def accumulate(stats: NeuronStats, x, y: float) -> NeuronStats:
    """Fold one observation (input vector x, scalar output y) into stats.

    Returns the updated stats object for chaining; the update is in place.
    """
    y = float(y)
    if not np.isfinite(y):
        raise DataError("non-finite output value")
    stats._inner.update(np.asarray(x, dtype=np.float64), np.array([y]))
    return stats
