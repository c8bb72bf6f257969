"""Toy attention-only diffusion denoisers and the weight surgery between them.

Three checkpoint roles exist:

* ``image_base`` — the image denoiser: patch tokens, spatial self-attention
  blocks with timestep/condition embeddings, and an unpatchify head.
* ``image_customized`` — same architecture, fine-tuned weights.
* ``video`` — the image model inflated with temporal attention blocks woven
  between the spatial blocks.  Temporal attention treats each token position
  as a length-F "needle" and attends along the frame axis only.

Inflation zero-initialises every temporal output projection, so a freshly
inflated video model applied per frame is exactly the image model — the
sharp starting point all adapter transparency tests build on.

All forward passes are pure functions of (checkpoint, adapters, inputs);
checkpoints are value-semantic and surgery returns new ones.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .adapters import MotionAdapterSet, SpatialAdapterSet, effective_weight, spatial_adapt
from .errors import ConfigError, RoleError, ShapeError, SurgeryError
from .params import ParamDict, Parameter, add_param, make_param
from .rng import PrngStream
from .tensor import Tensor

ROLE_IMAGE_BASE = "image_base"
ROLE_IMAGE_CUSTOM = "image_customized"
ROLE_VIDEO = "video"
IMAGE_ROLES = (ROLE_IMAGE_BASE, ROLE_IMAGE_CUSTOM)

TEMPORAL_PREFIX = "temporal."
_MLP_RATIO = 2


@dataclass(frozen=True)
class ModelConfig:
    f: int = 8            # frames per video
    h: int = 16           # frame height
    w: int = 16           # frame width
    c: int = 3            # pixel channels
    patch: int = 4        # spatial patch size
    d: int = 64           # token width
    d_k: int = 32         # attention embedding dim
    n_blocks: int = 4     # spatial blocks
    n_temporal: int = 4   # temporal blocks woven after the first n_temporal spatial blocks
    vocab: int = 19       # condition tokens (9 base + 10 reserved rare)
    rank: int = 4         # adapter rank
    t_steps: int = 100    # timestep embedding table size == diffusion steps
    temporal_posemb: bool = True

    def __post_init__(self):
        if min(self.f, self.h, self.w, self.c, self.patch, self.d, self.d_k,
               self.n_blocks, self.vocab, self.rank, self.t_steps) < 1 or self.n_temporal < 0:
            raise ConfigError("all model extents must be positive")
        if self.h % self.patch or self.w % self.patch:
            raise ConfigError(f"H={self.h}, W={self.w} must be divisible by patch={self.patch}")
        if self.d_k > self.d:
            raise ConfigError(f"d_k={self.d_k} must not exceed d={self.d}")
        if self.n_temporal > self.n_blocks:
            raise ConfigError(f"n_temporal={self.n_temporal} must not exceed n_blocks={self.n_blocks}")

    @property
    def tokens(self) -> int:
        return (self.h // self.patch) * (self.w // self.patch)

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch * self.c

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ModelCheckpoint:
    role: str
    config: ModelConfig
    params: ParamDict = field(default_factory=dict)

    def clone(self) -> "ModelCheckpoint":
        params: ParamDict = {}
        for name, p in self.params.items():
            params[name] = make_param(name, p.tensor.data.copy(), p.trainable)
        return ModelCheckpoint(self.role, self.config, params)

    def param_count(self) -> int:
        return sum(p.tensor.size for p in self.params.values())


# -- initialisation ---------------------------------------------------------


def init_image_model(cfg: ModelConfig, rng: PrngStream) -> ModelCheckpoint:
    """Fresh image denoiser.  The output head starts at zero so the untrained
    model predicts zero noise; everything else uses fan-in-scaled Gaussians."""
    p: ParamDict = {}
    d, dk = cfg.d, cfg.d_k

    def gauss(name, shape, fan_in):
        add_param(p, make_param(name, rng.normal(shape) * np.float32(fan_in**-0.5)))

    def const(name, shape, value):
        add_param(p, make_param(name, np.full(shape, value, dtype=np.float32)))

    gauss("patch_embed.w", (cfg.patch_dim, d), cfg.patch_dim)
    const("patch_embed.b", (d,), 0.0)
    add_param(p, make_param("pos_embed", rng.normal((cfg.tokens, d)) * np.float32(0.02)))
    add_param(p, make_param("t_embed", rng.normal((cfg.t_steps, d)) * np.float32(0.02)))
    add_param(p, make_param("cond_embed", rng.normal((cfg.vocab, d)) * np.float32(0.02)))
    for i in range(cfg.n_blocks):
        base = f"spatial.{i}"
        const(f"{base}.ln1.g", (d,), 1.0)
        const(f"{base}.ln1.b", (d,), 0.0)
        gauss(f"{base}.cond_proj", (d, d), d)
        gauss(f"{base}.attn.wq", (d, dk), d)
        gauss(f"{base}.attn.wk", (d, dk), d)
        gauss(f"{base}.attn.wv", (d, dk), d)
        gauss(f"{base}.attn.wo", (dk, d), dk)
        const(f"{base}.ln2.g", (d,), 1.0)
        const(f"{base}.ln2.b", (d,), 0.0)
        gauss(f"{base}.mlp.w1", (d, _MLP_RATIO * d), d)
        const(f"{base}.mlp.b1", (_MLP_RATIO * d,), 0.0)
        gauss(f"{base}.mlp.w2", (_MLP_RATIO * d, d), _MLP_RATIO * d)
        const(f"{base}.mlp.b2", (d,), 0.0)
    const("head.ln.g", (d,), 1.0)
    const("head.ln.b", (d,), 0.0)
    const("head.w", (d, cfg.patch_dim), 0.0)
    const("head.b", (cfg.patch_dim,), 0.0)
    return ModelCheckpoint(ROLE_IMAGE_BASE, cfg, p)


def temporal_param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Shapes of one temporal block's parameters, keyed by suffix."""
    d, dk = cfg.d, cfg.d_k
    return {
        "affine.g": (d,), "affine.b": (d,),
        "pos": (cfg.f, d),
        "wq": (d, dk), "wk": (d, dk), "wv": (d, dk),
        "wo": (dk, d),
    }


def spatial_param_names(ckpt: ModelCheckpoint) -> list[str]:
    return [n for n in ckpt.params if not n.startswith(TEMPORAL_PREFIX)]


def temporal_param_names(ckpt: ModelCheckpoint) -> list[str]:
    return [n for n in ckpt.params if n.startswith(TEMPORAL_PREFIX)]


# -- inflation and weight surgery --------------------------------------------


def inflate(m: ModelCheckpoint, rng: PrngStream) -> ModelCheckpoint:
    """Weave temporal blocks between the spatial blocks of an image model.

    Q/K/V projections are randomly initialised, the output projection and the
    frame positional table start at zero, and the per-channel affine starts at
    identity — so the inflated model applied per frame reproduces the image
    model exactly.
    """
    if m.role != ROLE_IMAGE_BASE:
        raise RoleError(f"inflate requires role {ROLE_IMAGE_BASE!r}, got {m.role!r}")
    v = m.clone()
    v.role = ROLE_VIDEO
    cfg = v.config
    d, dk = cfg.d, cfg.d_k
    for i in range(cfg.n_temporal):
        base = f"temporal.{i}"
        add_param(v.params, make_param(f"{base}.affine.g", np.ones(d, dtype=np.float32)))
        add_param(v.params, make_param(f"{base}.affine.b", np.zeros(d, dtype=np.float32)))
        add_param(v.params, make_param(f"{base}.pos", np.zeros((cfg.f, d), dtype=np.float32)))
        for key in ("wq", "wk", "wv"):
            add_param(v.params, make_param(f"{base}.{key}", rng.normal((d, dk)) * np.float32(d**-0.5)))
        add_param(v.params, make_param(f"{base}.wo", np.zeros((dk, d), dtype=np.float32)))
    return v


def _require_same_config(a: ModelCheckpoint, b: ModelCheckpoint):
    if a.config != b.config:
        raise SurgeryError(f"configs differ: {a.config} vs {b.config}")


def inject_spatial(v: ModelCheckpoint, m_custom: ModelCheckpoint) -> ModelCheckpoint:
    """Replace every spatial parameter of the video model with the customized
    image model's value; temporal parameters are untouched."""
    if v.role != ROLE_VIDEO:
        raise RoleError(f"injection target must have role {ROLE_VIDEO!r}, got {v.role!r}")
    if m_custom.role not in IMAGE_ROLES:
        raise RoleError(f"injection source must be an image model, got {m_custom.role!r}")
    _require_same_config(v, m_custom)
    spatial = set(spatial_param_names(v))
    donor = set(m_custom.params)
    if donor != spatial:
        raise SurgeryError(
            f"spatial name sets differ; missing={sorted(spatial - donor)} extra={sorted(donor - spatial)}"
        )
    out = v.clone()
    for name in spatial:
        out.params[name].tensor.data = m_custom.params[name].tensor.data.copy()
    return out


def interpolate_spatial(m: ModelCheckpoint, m_custom: ModelCheckpoint, lam: float) -> ModelCheckpoint:
    """Per-parameter blend (1 - lam) * m + lam * m_custom between two image models."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"interpolation weight must be in [0, 1], got {lam}")
    if m.role not in IMAGE_ROLES or m_custom.role not in IMAGE_ROLES:
        raise RoleError("interpolation operands must both be image models")
    _require_same_config(m, m_custom)
    if set(m.params) != set(m_custom.params):
        raise SurgeryError("parameter name sets differ")
    if lam == 0.0:
        return m.clone()
    if lam == 1.0:
        out = m_custom.clone()
        out.role = ROLE_IMAGE_CUSTOM
        return out
    out = m.clone()
    out.role = ROLE_IMAGE_CUSTOM
    lam32 = np.float32(lam)
    for name, p in out.params.items():
        p.tensor.data = ((1.0 - lam32) * m.params[name].tensor.data
                         + lam32 * m_custom.params[name].tensor.data).astype(np.float32)
    return out


# -- temporal attention -------------------------------------------------------


@dataclass
class TemporalBlockWeights:
    """Weights of one temporal attention block (see ``needle_attention``)."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    pos: Tensor        # (F, C) frame positional table
    affine_g: Tensor   # (C,) per-channel scale on the Q/K/V path, identity at init
    affine_b: Tensor   # (C,) per-channel shift


def temporal_block_weights(ckpt: ModelCheckpoint, i: int) -> TemporalBlockWeights:
    p = ckpt.params
    base = f"temporal.{i}"
    try:
        return TemporalBlockWeights(
            wq=p[f"{base}.wq"].tensor, wk=p[f"{base}.wk"].tensor, wv=p[f"{base}.wv"].tensor,
            wo=p[f"{base}.wo"].tensor, pos=p[f"{base}.pos"].tensor,
            affine_g=p[f"{base}.affine.g"].tensor, affine_b=p[f"{base}.affine.b"].tensor,
        )
    except KeyError as exc:
        raise RoleError(f"checkpoint has no temporal block {i}") from exc


def needle_attention(x: Tensor, w: TemporalBlockWeights, use_posemb: bool,
                     pairs=None, alpha: float = 0.0) -> Tensor:
    """Self-attention along the frame axis of needle-shaped input [S, F, C].

    The Q/K/V input is the per-channel affine of x, plus the frame positional
    row if enabled; the residual connection adds the attended value back onto
    the *raw* input, so a zero output projection makes the block an identity.
    Motion adapter pairs, when given, perturb the Q/K/V projections at scale
    alpha.
    """
    dk = w.wq.shape[-1]
    a = x * w.affine_g + w.affine_b
    if use_posemb:
        a = a + w.pos
    wq, wk, wv = w.wq, w.wk, w.wv
    if pairs is not None and alpha != 0.0:
        wq = effective_weight(wq, pairs["q"], alpha)
        wk = effective_weight(wk, pairs["k"], alpha)
        wv = effective_weight(wv, pairs["v"], alpha)
    q = T.matmul(a, wq)
    k = T.matmul(a, wk)
    v = T.matmul(a, wv)
    scores = T.matmul(q, T.permute(k, (0, 2, 1))) * float(dk**-0.5)
    attn = T.softmax_last(scores)
    y = T.matmul(T.matmul(attn, v), w.wo)
    return x + y


def temporal_attention(x, w: TemporalBlockWeights, use_posemb: bool = True,
                       pairs=None, alpha: float = 0.0) -> Tensor:
    """Temporal attention over a feature map shaped [F, H, W, C] or
    [B, F, H, W, C]: every spatial location attends along frames only."""
    x = T.as_tensor(x)
    if x.ndim == 4:
        f, h, wd, c = x.shape
        needles = T.reshape(T.permute(x, (1, 2, 0, 3)), (h * wd, f, c))
        out = needle_attention(needles, w, use_posemb, pairs, alpha)
        return T.permute(T.reshape(out, (h, wd, f, c)), (2, 0, 1, 3))
    if x.ndim == 5:
        b, f, h, wd, c = x.shape
        needles = T.reshape(T.permute(x, (0, 2, 3, 1, 4)), (b * h * wd, f, c))
        out = needle_attention(needles, w, use_posemb, pairs, alpha)
        return T.permute(T.reshape(out, (b, h, wd, f, c)), (0, 3, 1, 2, 4))
    raise ShapeError(f"temporal attention expects rank 4 or 5 input, got shape {tuple(x.shape)}")


# -- shared forward pieces ----------------------------------------------------


def _patchify(x: Tensor, cfg: ModelConfig) -> Tensor:
    b = x.shape[0]
    hp, wp, p = cfg.h // cfg.patch, cfg.w // cfg.patch, cfg.patch
    t = T.reshape(x, (b, hp, p, wp, p, cfg.c))
    t = T.permute(t, (0, 1, 3, 2, 4, 5))
    return T.reshape(t, (b, hp * wp, cfg.patch_dim))


def _unpatchify(x: Tensor, cfg: ModelConfig) -> Tensor:
    b = x.shape[0]
    hp, wp, p = cfg.h // cfg.patch, cfg.w // cfg.patch, cfg.patch
    t = T.reshape(x, (b, hp, wp, p, p, cfg.c))
    t = T.permute(t, (0, 1, 3, 2, 4, 5))
    return T.reshape(t, (b, cfg.h, cfg.w, cfg.c))


def _as_index(value, n: int, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.int64)
    if arr.ndim == 0:
        arr = np.full(n, int(arr), dtype=np.int64)
    if arr.shape != (n,):
        raise ShapeError(f"{what} must be scalar or shape ({n},), got {arr.shape}")
    return arr


def _embed_tokens(params: ParamDict, x: Tensor, t_idx: np.ndarray, cond_idx: np.ndarray,
                  cfg: ModelConfig):
    tok = _patchify(x, cfg)
    tok = T.matmul(tok, params["patch_embed.w"].tensor) + params["patch_embed.b"].tensor
    tok = tok + params["pos_embed"].tensor
    emb = T.embedding(params["t_embed"].tensor, t_idx) + T.embedding(params["cond_embed"].tensor, cond_idx)
    return tok, emb


def _spatial_block(params: ParamDict, i: int, tok: Tensor, emb: Tensor, cfg: ModelConfig) -> Tensor:
    base = f"spatial.{i}"
    g = lambda suffix: params[f"{base}.{suffix}"].tensor  # noqa: E731
    a = T.layer_norm(tok, g("ln1.g"), g("ln1.b"))
    cond = T.matmul(emb, g("cond_proj"))
    a = a + T.reshape(cond, (cond.shape[0], 1, cfg.d))
    q = T.matmul(a, g("attn.wq"))
    k = T.matmul(a, g("attn.wk"))
    v = T.matmul(a, g("attn.wv"))
    scores = T.matmul(q, T.permute(k, (0, 2, 1))) * float(cfg.d_k**-0.5)
    y = T.matmul(T.matmul(T.softmax_last(scores), v), g("attn.wo"))
    h = tok + y
    m = T.layer_norm(h, g("ln2.g"), g("ln2.b"))
    m = T.gelu(T.matmul(m, g("mlp.w1")) + g("mlp.b1"))
    m = T.matmul(m, g("mlp.w2")) + g("mlp.b2")
    return h + m


def _head(params: ParamDict, tok: Tensor) -> Tensor:
    h = T.layer_norm(tok, params["head.ln.g"].tensor, params["head.ln.b"].tensor)
    return T.matmul(h, params["head.w"].tensor) + params["head.b"].tensor


# -- full forwards ------------------------------------------------------------


def image_forward(ckpt: ModelCheckpoint, x, t, cond) -> Tensor:
    """Noise prediction for an image batch [B, H, W, C] in the [-1, 1] domain."""
    if ckpt.role not in IMAGE_ROLES:
        raise RoleError(f"image_forward requires an image checkpoint, got role {ckpt.role!r}")
    cfg = ckpt.config
    x = T.as_tensor(x)
    if x.ndim != 4 or x.shape[1:] != (cfg.h, cfg.w, cfg.c):
        raise ShapeError(f"expected [B, {cfg.h}, {cfg.w}, {cfg.c}] input, got {tuple(x.shape)}")
    b = x.shape[0]
    t_idx = _as_index(t, b, "t")
    cond_idx = _as_index(cond, b, "cond")
    tok, emb = _embed_tokens(ckpt.params, x, t_idx, cond_idx, cfg)
    for i in range(cfg.n_blocks):
        tok = _spatial_block(ckpt.params, i, tok, emb, cfg)
    return _unpatchify(_head(ckpt.params, tok), cfg)


def _check_adapter_counts(cfg: ModelConfig, motion, spatial):
    if motion is not None and len(motion.pairs) != cfg.n_temporal:
        raise SurgeryError(f"motion adapter covers {len(motion.pairs)} blocks, model has {cfg.n_temporal}")
    if spatial is not None and len(spatial.pairs) != cfg.n_blocks:
        raise SurgeryError(f"spatial adapter covers {len(spatial.pairs)} blocks, model has {cfg.n_blocks}")


def video_forward(ckpt: ModelCheckpoint, x, t, cond,
                  motion: MotionAdapterSet | None = None,
                  spatial: SpatialAdapterSet | None = None,
                  alpha: float | None = None,
                  temporal_enabled: bool = True) -> Tensor:
    """Noise prediction for a video batch [B, F, H, W, C] in the [-1, 1] domain.

    Spatial blocks run per frame (frames folded into the batch), temporal
    blocks run per needle.  Motion adapters perturb temporal Q/K/V at scale
    `alpha` (defaulting to the set's own scale); spatial adapters wrap each
    spatial block output.  With temporal_enabled=False the temporal blocks are
    skipped entirely and the model degenerates to the frame-wise image model.
    """
    if ckpt.role != ROLE_VIDEO:
        raise RoleError(f"video_forward requires role {ROLE_VIDEO!r}, got {ckpt.role!r}")
    cfg = ckpt.config
    x = T.as_tensor(x)
    if x.ndim != 5 or x.shape[1:] != (cfg.f, cfg.h, cfg.w, cfg.c):
        raise ShapeError(f"expected [B, {cfg.f}, {cfg.h}, {cfg.w}, {cfg.c}] input, got {tuple(x.shape)}")
    _check_adapter_counts(cfg, motion, spatial)
    if alpha is None:
        alpha = motion.alpha if motion is not None else 0.0
    b = x.shape[0]
    bf = b * cfg.f
    t_idx = np.repeat(_as_index(t, b, "t"), cfg.f)
    cond_idx = np.repeat(_as_index(cond, b, "cond"), cfg.f)
    folded = T.reshape(x, (bf, cfg.h, cfg.w, cfg.c))
    tok, emb = _embed_tokens(ckpt.params, folded, t_idx, cond_idx, cfg)
    n = cfg.tokens
    for i in range(cfg.n_blocks):
        tok = _spatial_block(ckpt.params, i, tok, emb, cfg)
        if spatial is not None:
            tok = spatial_adapt(tok, spatial.pairs[i])
        if temporal_enabled and i < cfg.n_temporal:
            w = temporal_block_weights(ckpt, i)
            pairs = motion.pairs[i] if motion is not None else None
            needles = T.reshape(T.permute(T.reshape(tok, (b, cfg.f, n, cfg.d)), (0, 2, 1, 3)),
                                (b * n, cfg.f, cfg.d))
            needles = needle_attention(needles, w, cfg.temporal_posemb, pairs, alpha)
            tok = T.reshape(T.permute(T.reshape(needles, (b, n, cfg.f, cfg.d)), (0, 2, 1, 3)),
                            (bf, n, cfg.d))
    out = _unpatchify(_head(ckpt.params, tok), cfg)
    return T.reshape(out, (b, cfg.f, cfg.h, cfg.w, cfg.c))


def attach(ckpt: ModelCheckpoint,
           motion: MotionAdapterSet | None = None,
           spatial: SpatialAdapterSet | None = None,
           alpha: float | None = None,
           temporal_enabled: bool = True):
    """Bind adapters to a video checkpoint, returning an adapted forward
    function `(x, t, cond) -> eps_hat`.  The checkpoint itself is never
    mutated; dropping the returned function is a complete detach."""
    if ckpt.role != ROLE_VIDEO:
        raise RoleError(f"attach requires role {ROLE_VIDEO!r}, got {ckpt.role!r}")
    _check_adapter_counts(ckpt.config, motion, spatial)

    def forward(x, t, cond):
        return video_forward(ckpt, x, t, cond, motion=motion, spatial=spatial,
                             alpha=alpha, temporal_enabled=temporal_enabled)

    return forward
