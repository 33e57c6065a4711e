"""Multi-scale sinusoidal location encoding.

A planar coordinate is decomposed into sin/cos components along a small set
of direction vectors at geometrically spaced wavelengths, then passed through
a one-hidden-layer feed-forward head to produce a space embedding. A
single-scale "direct" variant (coordinates straight into the head, normalized
by the study-area extent) is kept as a baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import BadScaleRange, NonFiniteInput

MULTISCALE = "multiscale"
DIRECT = "direct"

ACTIVATIONS = {
    "sigmoid": torch.sigmoid,
    "relu": torch.relu,
    "leaky-relu": lambda t: torch.nn.functional.leaky_relu(t, 0.01),
}


@dataclass(frozen=True)
class ScaleSchedule:
    """Geometric progression of wavelengths from lambda_min to lambda_max."""

    n_scales: int
    lambda_min: float
    lambda_max: float

    @property
    def wavelengths(self) -> np.ndarray:
        s = np.arange(self.n_scales)
        ratio = self.lambda_max / self.lambda_min
        return self.lambda_min * ratio ** (s / (self.n_scales - 1))


def make_schedule(n_scales: int, lambda_min: float, lambda_max: float) -> ScaleSchedule:
    if n_scales < 2:
        raise BadScaleRange(f"need at least 2 scales, got {n_scales}")
    if not (0 < lambda_min < lambda_max):
        raise BadScaleRange(
            f"need 0 < lambda_min < lambda_max, got {lambda_min}, {lambda_max}"
        )
    return ScaleSchedule(n_scales, float(lambda_min), float(lambda_max))


def direction_vectors(n_directions: int) -> np.ndarray:
    """Unit direction vectors: 2 axis-aligned or 3 hexagonal (0, 120, 240 deg)."""
    if n_directions == 2:
        return np.array([[1.0, 0.0], [0.0, 1.0]])
    if n_directions == 3:
        angles = np.deg2rad([0.0, 120.0, 240.0])
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    raise ValueError(f"n_directions must be 2 or 3, got {n_directions}")


def pe_dim(schedule: ScaleSchedule, n_directions: int) -> int:
    return 2 * n_directions * schedule.n_scales


def position_encode(
    x: np.ndarray, schedule: ScaleSchedule, directions: np.ndarray
) -> np.ndarray:
    """Sinusoidal features of shape (..., 2 * n_directions * n_scales).

    Layout: direction-major, then scale, then (sin, cos).
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput(f"non-finite coordinates: {x}")
    proj = x @ directions.T  # (..., D)
    phase = proj[..., :, None] / schedule.wavelengths  # (..., D, S)
    out = np.stack([np.sin(phase), np.cos(phase)], axis=-1)  # (..., D, S, 2)
    return out.reshape(*x.shape[:-1], -1)


@dataclass
class LocEncParams:
    """Location encoder: positional features plus a feed-forward head.

    `weights` holds the head parameters (w1, b1, w2, b2) as torch tensors;
    the owner (the model) is responsible for registering them for training.
    For the `direct` kind, coordinates are affinely normalized to roughly
    [-1, 1] using the study-area center/half-extent before the head.
    """

    schedule: ScaleSchedule
    directions: np.ndarray
    activation: str
    l2_normalize: bool
    weights: dict[str, torch.Tensor]
    kind: str = MULTISCALE
    center: tuple[float, float] = (0.0, 0.0)
    half_extent: tuple[float, float] = (1.0, 1.0)

    @property
    def input_dim(self) -> int:
        if self.kind == DIRECT:
            return 2
        return pe_dim(self.schedule, len(self.directions))

    @property
    def output_dim(self) -> int:
        return self.weights["w2"].shape[0]

    def features(self, x: np.ndarray) -> np.ndarray:
        if self.kind == DIRECT:
            x = np.asarray(x, dtype=np.float64)
            if not np.all(np.isfinite(x)):
                raise NonFiniteInput(f"non-finite coordinates: {x}")
            return (x - np.asarray(self.center)) / np.asarray(self.half_extent)
        return position_encode(x, self.schedule, self.directions)


def encode_location(x: np.ndarray, params: LocEncParams) -> torch.Tensor:
    """Space embeddings for coordinates `x` of shape (2,) or (n, 2)."""
    feats = params.features(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    w1 = params.weights["w1"]
    t = torch.as_tensor(feats, dtype=w1.dtype)
    act = ACTIVATIONS[params.activation]
    hidden = act(t @ w1.T + params.weights["b1"])
    out = hidden @ params.weights["w2"].T + params.weights["b2"]
    if params.l2_normalize:
        out = out / out.norm(dim=-1, keepdim=True)
    if np.asarray(x).ndim == 1:
        return out[0]
    return out


def init_locenc_weights(
    in_dim: int, out_dim: int, rng: np.random.Generator, dtype: torch.dtype
) -> dict[str, torch.Tensor]:
    """One hidden layer of width `out_dim`; uniform(+-1/sqrt(fan_in)) weights."""

    def uniform(shape, fan_in):
        a = 1.0 / np.sqrt(fan_in)
        return torch.tensor(rng.uniform(-a, a, size=shape), dtype=dtype)

    return {
        "w1": uniform((out_dim, in_dim), in_dim),
        "b1": torch.zeros(out_dim, dtype=dtype),
        "w2": uniform((out_dim, out_dim), out_dim),
        "b2": torch.zeros(out_dim, dtype=dtype),
    }
