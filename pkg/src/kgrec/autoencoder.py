"""Mask-gated single-hidden-layer autoencoder, trained to overfit one user.

Shapes: the rating vector x has length m (items), the hidden layer length n
(features).  W1 is m x n, W2 is n x m, and both are elementwise-gated by the
item-feature mask (W1 by the mask, W2 by its transpose).  Forward pass:

    h = sigmoid(x @ (W1 * M))        o = sigmoid(h @ (W2 * M^T))

Loss is E = 1/2 * sum_i (x_i - o_i)^2, minimized by plain full-gradient
descent on the single rating vector.  The gate is applied inside the update
as well, so off-mask weights are exactly zero at every epoch, not just
approximately.

Default storage keeps only the gated positions (coordinate arrays); a dense
backend with explicit masking is retained for small-scale cross-checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Catalog, MaskMatrix
from .errors import KgrecError

log = logging.getLogger(__name__)


class TrainingDivergedError(KgrecError):
    """Loss became non-finite; training aborts rather than clamping."""


class NotTrainedError(KgrecError):
    pass


class AlreadyTrainedError(KgrecError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.  Activation is fixed: sigmoid, no regularization."""

    epochs: int = 1000
    learning_rate: float = 0.03
    seed: int = 0
    rated_only_loss: bool = False  # experimental: restrict E to rated positions

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, branch form."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def reconstruction_loss(x: np.ndarray, o: np.ndarray) -> float:
    """E = 1/2 * sum_i (x_i - o_i)^2."""
    x = np.asarray(x, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    if x.shape != o.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {o.shape}")
    d = x - o
    return 0.5 * float(d @ d)


@dataclass(frozen=True)
class RatingVector:
    """Normalized input vector: rated positions hold stars/5, the rest 0."""

    values: np.ndarray
    rated: frozenset

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("rating vector must be 1-D")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("rating values must lie in [0, 1]")
        unrated = np.ones(len(v), dtype=bool)
        idx = list(self.rated)
        unrated[idx] = False
        if np.any(v[unrated] != 0.0):
            raise ValueError("unrated positions must be exactly 0")

    @classmethod
    def from_stars(cls, catalog: Catalog, stars: dict[str, float],
                   scale_max: float = 5.0) -> "RatingVector":
        values = np.zeros(len(catalog))
        rated = set()
        for item_id, s in stars.items():
            row = catalog.row(item_id)
            values[row] = float(s) / scale_max
            rated.add(row)
        return cls(values=values, rated=frozenset(rated))

    def __len__(self) -> int:
        return len(self.values)


class UserAutoencoder:
    """One user's gated autoencoder.

    Weights are drawn with Glorot-uniform bounds sqrt(6/(m+n)) at the gated
    positions only, in canonical coordinate order, so sparse and dense
    backends start from bit-identical values for a given seed.
    """

    def __init__(self, mask: MaskMatrix, config: TrainConfig, backend: str = "sparse"):
        if mask.nnz == 0:
            raise ValueError("mask has no entries; nothing to train")
        if backend not in ("sparse", "dense"):
            raise ValueError(f"unknown backend {backend!r}")
        self.mask = mask
        self.config = config
        self.backend = backend
        self.trained = False
        self.final_loss: float | None = None
        self.loss_history: list[float] = []

        m, n = mask.m, mask.n
        self._r1 = mask.rows            # W1 coords, sorted by (item, feature)
        self._c1 = mask.cols
        self._r2, self._c2 = mask.transpose_coords()  # W2 coords (feature, item)

        limit = math.sqrt(6.0 / (m + n))
        rng = np.random.default_rng(config.seed)
        w1 = rng.uniform(-limit, limit, mask.nnz)
        w2 = rng.uniform(-limit, limit, mask.nnz)
        if backend == "sparse":
            self._w1 = w1
            self._w2 = w2
        else:
            self._W1 = np.zeros((m, n))
            self._W1[self._r1, self._c1] = w1
            self._W2 = np.zeros((n, m))
            self._W2[self._r2, self._c2] = w2
            self._Md = mask.dense()

    # --- weight access -------------------------------------------------

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (W1, W2) copies; off-mask positions are exactly zero."""
        if self.backend == "dense":
            return self._W1.copy(), self._W2.copy()
        W1 = np.zeros((self.mask.m, self.mask.n))
        W1[self._r1, self._c1] = self._w1
        W2 = np.zeros((self.mask.n, self.mask.m))
        W2[self._r2, self._c2] = self._w2
        return W1, W2

    def set_weights(self, W1: np.ndarray, W2: np.ndarray) -> None:
        """Install explicit weights (fixtures, permutation checks).  Off-mask
        entries of the arguments are ignored: the gate wins."""
        W1 = np.asarray(W1, dtype=np.float64)
        W2 = np.asarray(W2, dtype=np.float64)
        if W1.shape != (self.mask.m, self.mask.n) or W2.shape != (self.mask.n, self.mask.m):
            raise ValueError("weight shapes do not conform to the mask")
        if self.backend == "sparse":
            self._w1 = W1[self._r1, self._c1].copy()
            self._w2 = W2[self._r2, self._c2].copy()
        else:
            self._W1 = W1 * self._Md
            self._W2 = W2 * self._Md.T

    # --- forward / backward ---------------------------------------------

    def _check_input(self, x: RatingVector) -> np.ndarray:
        xv = x.values
        if len(xv) != self.mask.m:
            raise ValueError(f"rating vector length {len(xv)} != item count {self.mask.m}")
        return xv

    def forward(self, x: RatingVector) -> tuple[np.ndarray, np.ndarray]:
        """Hidden activations h (length n) and reconstruction o (length m)."""
        xv = self._check_input(x)
        if self.backend == "sparse":
            z1 = np.bincount(self._c1, weights=xv[self._r1] * self._w1, minlength=self.mask.n)
            h = sigmoid(z1)
            z2 = np.bincount(self._c2, weights=h[self._r2] * self._w2, minlength=self.mask.m)
            o = sigmoid(z2)
        else:
            h = sigmoid(xv @ (self._W1 * self._Md))
            o = sigmoid(h @ (self._W2 * self._Md.T))
        return h, o

    def loss(self, x: RatingVector) -> float:
        _, o = self.forward(x)
        return self._loss_of(x, o)

    def _loss_of(self, x: RatingVector, o: np.ndarray) -> float:
        if self.config.rated_only_loss:
            idx = sorted(x.rated)
            return reconstruction_loss(x.values[idx], o[idx])
        return reconstruction_loss(x.values, o)

    def _grad_data(self, x: RatingVector) -> tuple[np.ndarray, np.ndarray, float]:
        """Gradient values at the gated coordinates plus the current loss."""
        xv = self._check_input(x)
        h, o = self.forward(x)
        g2 = (o - xv) * o * (1.0 - o)          # dE/dz2
        if self.config.rated_only_loss:
            keep = np.zeros(self.mask.m, dtype=bool)
            keep[list(x.rated)] = True
            g2 = np.where(keep, g2, 0.0)
        if self.backend == "sparse":
            dw2 = h[self._r2] * g2[self._c2]
            back = np.bincount(self._r2, weights=self._w2 * g2[self._c2], minlength=self.mask.n)
        else:
            W2m = self._W2 * self._Md.T
            dW2_full = np.outer(h, g2) * self._Md.T
            back = W2m @ g2
        g1 = back * h * (1.0 - h)              # dE/dz1
        if self.backend == "sparse":
            dw1 = xv[self._r1] * g1[self._c1]
            return dw1, dw2, self._loss_of(x, o)
        dW1_full = np.outer(xv, g1) * self._Md
        return dW1_full, dW2_full, self._loss_of(x, o)

    def backward(self, x: RatingVector) -> tuple[np.ndarray, np.ndarray]:
        """Dense analytic gradients (dW1, dW2); off-mask entries are exactly 0."""
        d1, d2, _ = self._grad_data(x)
        if self.backend == "dense":
            return d1, d2
        dW1 = np.zeros((self.mask.m, self.mask.n))
        dW1[self._r1, self._c1] = d1
        dW2 = np.zeros((self.mask.n, self.mask.m))
        dW2[self._r2, self._c2] = d2
        return dW1, dW2

    # --- training --------------------------------------------------------

    def train(self, x: RatingVector) -> "UserAutoencoder":
        """Run exactly `epochs` full-gradient steps on the single vector x."""
        if self.trained:
            raise AlreadyTrainedError("this autoencoder was already trained")
        cfg = self.config
        self.loss_history = [self.loss(x)]
        r = cfg.learning_rate
        for epoch in range(cfg.epochs):
            d1, d2, _ = self._grad_data(x)
            if self.backend == "sparse":
                self._w1 -= r * d1
                self._w2 -= r * d2
            else:
                # the gate is re-applied every step, exactly as specified;
                # it is idempotent since off-mask gradients are already zero
                self._W1 = self._W1 * self._Md - r * d1
                self._W2 = self._W2 * self._Md.T - r * d2
            e = self.loss(x)
            if not math.isfinite(e):
                W1, W2 = self.weights()
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}: "
                    f"max|W1|={np.abs(W1).max():.3g} max|W2|={np.abs(W2).max():.3g}")
            self.loss_history.append(e)
        self.trained = True
        self.final_loss = self.loss_history[-1]
        log.debug("trained: epochs=%d lr=%g loss %.6g -> %.6g",
                  cfg.epochs, r, self.loss_history[0], self.final_loss)
        return self

    # --- persistence ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Text format: header fields, then two 'i j value' coordinate sections.
        Values use 17 significant digits so a load round-trips exactly."""
        path = Path(path)
        W1, W2 = self.weights()
        with path.open("w", encoding="utf-8") as fh:
            fh.write(f"m {self.mask.m}\n")
            fh.write(f"n {self.mask.n}\n")
            fh.write(f"seed {self.config.seed}\n")
            fh.write(f"epochs {self.config.epochs}\n")
            fh.write(f"lr {self.config.learning_rate:.17g}\n")
            fh.write(f"final_loss {self.final_loss if self.final_loss is not None else math.nan:.17g}\n")
            fh.write(f"W1 {self.mask.nnz}\n")
            for i, j in zip(self._r1, self._c1):
                fh.write(f"{i} {j} {W1[i, j]:.17g}\n")
            fh.write(f"W2 {self.mask.nnz}\n")
            for i, j in zip(self._r2, self._c2):
                fh.write(f"{i} {j} {W2[i, j]:.17g}\n")

    @classmethod
    def load(cls, path: str | Path) -> "UserAutoencoder":
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            header: dict[str, str] = {}
            for _ in range(6):
                key, val = fh.readline().split()
                header[key] = val
            m, n = int(header["m"]), int(header["n"])
            seed, epochs = int(header["seed"]), int(header["epochs"])
            lr = float(header["lr"])
            final_loss = float(header["final_loss"])

            tag, nnz1 = fh.readline().split()
            assert tag == "W1"
            entries1 = []
            for _ in range(int(nnz1)):
                i, j, v = fh.readline().split()
                entries1.append((int(i), int(j), float(v)))
            tag, nnz2 = fh.readline().split()
            assert tag == "W2"
            entries2 = []
            for _ in range(int(nnz2)):
                i, j, v = fh.readline().split()
                entries2.append((int(i), int(j), float(v)))

        mask = MaskMatrix(m, n, [(i, j) for i, j, _ in entries1])
        ae = cls(mask, TrainConfig(epochs=epochs, learning_rate=lr, seed=seed))
        W1 = np.zeros((m, n))
        for i, j, v in entries1:
            W1[i, j] = v
        W2 = np.zeros((n, m))
        for i, j, v in entries2:
            W2[i, j] = v
        ae.set_weights(W1, W2)
        if not math.isnan(final_loss):
            ae.trained = True
            ae.final_loss = final_loss
        return ae
