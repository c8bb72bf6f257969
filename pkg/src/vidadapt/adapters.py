"""Low-rank adapters: motion adapters over temporal attention projections and
spatial adapters over spatial-block outputs.

Both kinds share one residual form, a rank-r product ``down @ up``:

* a motion adapter replaces a frozen projection W by ``W + alpha * down @ up``
  for each of the temporal Q/K/V projections; ``alpha`` is a free scale that
  may be negative,
* a spatial adapter maps block output X to ``X @ (I + down @ up)``.

``up`` is initialised to zeros and ``down`` to Gaussian noise, so a freshly
attached adapter set is exactly transparent: the adapted model computes the
same outputs as the unadapted one.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, SurgeryError
from .params import ParamDict, Parameter, add_param
from .rng import PrngStream
from .tensor import Tensor, as_tensor, matmul

MOTION_PREFIX = "motion_adapter"
SPATIAL_PREFIX = "spatial_adapter"
_PROJ_KEYS = ("q", "k", "v")


@dataclass
class LowRankPair:
    """Rank-r residual factors: down is (in_dim, r), up is (r, out_dim)."""

    down: Tensor
    up: Tensor
    rank: int


def init_lowrank(rng: PrngStream, in_dim: int, out_dim: int, rank: int) -> LowRankPair:
    """down ~ N(0, 1/in_dim), up = 0 exactly."""
    if rank < 1:
        raise ConfigError(f"adapter rank must be >= 1, got {rank}")
    down = rng.normal((in_dim, rank)) * (1.0 / in_dim) ** 0.5
    up = Tensor([[0.0] * out_dim for _ in range(rank)])
    return LowRankPair(Tensor(down), up, rank)


def effective_weight(w, pair: LowRankPair, alpha: float) -> Tensor:
    """W + alpha * (down @ up).  With alpha == 0 the input W is returned
    untouched, which keeps the zero-scale path bit-identical and free."""
    w = as_tensor(w)
    if alpha == 0.0:
        return w
    if pair.down.shape[0] != w.shape[0] or pair.up.shape[1] != w.shape[1]:
        raise SurgeryError(
            f"adapter pair ({pair.down.shape} x {pair.up.shape}) does not wrap weight {w.shape}"
        )
    return w + float(alpha) * matmul(pair.down, pair.up)


def spatial_adapt(x, pair: LowRankPair) -> Tensor:
    """X @ (I + down @ up), computed as X + (X @ down) @ up."""
    x = as_tensor(x)
    c = x.shape[-1]
    if pair.down.shape[0] != c or pair.up.shape[1] != c:
        raise SurgeryError(
            f"spatial adapter ({pair.down.shape} x {pair.up.shape}) does not map channel dim {c}"
        )
    return x + matmul(matmul(x, pair.down), pair.up)


class MotionAdapterSet:
    """One LowRankPair per temporal block per projection in {Q, K, V},
    plus the shared scale alpha."""

    def __init__(self, pairs: list[dict[str, LowRankPair]], alpha: float = 1.0):
        self.pairs = pairs
        self.alpha = float(alpha)

    @classmethod
    def create(cls, rng: PrngStream, n_temporal: int, width: int, d_k: int, rank: int,
               alpha: float = 1.0) -> "MotionAdapterSet":
        pairs = [
            {key: init_lowrank(rng, width, d_k, rank) for key in _PROJ_KEYS}
            for _ in range(n_temporal)
        ]
        return cls(pairs, alpha)

    def parameters(self) -> ParamDict:
        params: ParamDict = {}
        for i, block in enumerate(self.pairs):
            for key in _PROJ_KEYS:
                pair = block[key]
                add_param(params, Parameter(f"{MOTION_PREFIX}.{i}.{key}.down", pair.down))
                add_param(params, Parameter(f"{MOTION_PREFIX}.{i}.{key}.up", pair.up))
        return params

    @classmethod
    def from_params(cls, params: ParamDict, rank: int, alpha: float) -> "MotionAdapterSet":
        blocks: dict[int, dict[str, LowRankPair]] = {}
        for name, p in params.items():
            prefix, idx, key, kind = name.split(".")
            if prefix != MOTION_PREFIX:
                raise SurgeryError(f"unexpected parameter {name!r} in motion adapter set")
            entry = blocks.setdefault(int(idx), {}).setdefault(key, LowRankPair(None, None, rank))
            setattr(entry, kind, p.tensor)
        pairs = []
        for i in range(len(blocks)):
            if i not in blocks or set(blocks[i]) != set(_PROJ_KEYS):
                raise SurgeryError(f"motion adapter block {i} incomplete")
            pairs.append(blocks[i])
        return cls(pairs, alpha)


class SpatialAdapterSet:
    """One square LowRankPair per spatial block output."""

    def __init__(self, pairs: list[LowRankPair]):
        self.pairs = pairs

    @classmethod
    def create(cls, rng: PrngStream, n_blocks: int, width: int, rank: int) -> "SpatialAdapterSet":
        return cls([init_lowrank(rng, width, width, rank) for _ in range(n_blocks)])

    def parameters(self) -> ParamDict:
        params: ParamDict = {}
        for i, pair in enumerate(self.pairs):
            add_param(params, Parameter(f"{SPATIAL_PREFIX}.{i}.down", pair.down))
            add_param(params, Parameter(f"{SPATIAL_PREFIX}.{i}.up", pair.up))
        return params

    @classmethod
    def from_params(cls, params: ParamDict, rank: int) -> "SpatialAdapterSet":
        blocks: dict[int, LowRankPair] = {}
        for name, p in params.items():
            prefix, idx, kind = name.split(".")
            if prefix != SPATIAL_PREFIX:
                raise SurgeryError(f"unexpected parameter {name!r} in spatial adapter set")
            entry = blocks.setdefault(int(idx), LowRankPair(None, None, rank))
            setattr(entry, kind, p.tensor)
        pairs = []
        for i in range(len(blocks)):
            if i not in blocks or blocks[i].down is None or blocks[i].up is None:
                raise SurgeryError(f"spatial adapter block {i} incomplete")
            pairs.append(blocks[i])
        return cls(pairs)
