"""Forward-only attention, positional encoding and tokenization kernels.

Nothing here trains. The encoder stack is built from seeded random weights
so token-level sensor fusion can be exercised end to end on stub features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SOURCES = (
    "rgb_front", "rgb_left", "rgb_right", "rgb_center",
    "lidar_bev", "dvs_front", "dvs_left", "dvs_right",
)
D_MODEL = 256
HEADS = 8
LAYERS = 6
FFN_MULT = 4
LN_EPS = 1e-5


def sinusoidal_pe(pos, d_model: int) -> np.ndarray:
    """Even dims get sin(pos / 10000^(2i/d)), odd dims the matching cos."""
    if d_model <= 0 or d_model % 2:
        raise ValueError(f"d_model must be a positive even integer, got {d_model}")
    i = np.arange(d_model // 2)
    ang = float(pos) / np.power(10000.0, 2.0 * i / d_model)
    pe = np.empty(d_model)
    pe[0::2] = np.sin(ang)
    pe[1::2] = np.cos(ang)
    return pe


def sinusoidal_pe_2d(h: int, w: int, d_model: int) -> np.ndarray:
    """(H, W, D) grid; the first D/2 dims encode the row, the rest the column."""
    if d_model % 4:
        raise ValueError("2D sinusoidal encoding needs d_model divisible by 4")
    half = d_model // 2
    rows = np.stack([sinusoidal_pe(r, half) for r in range(h)])
    cols = np.stack([sinusoidal_pe(c, half) for c in range(w)])
    out = np.empty((h, w, d_model))
    out[:, :, :half] = rows[:, None, :]
    out[:, :, half:] = cols[None, :, :]
    return out


def learned_pe_2d(h: int, w: int, d_model: int, seed: int = 0) -> np.ndarray:
    """Stand-in for a learnable embedding table: seeded uniform(-1/sqrt(D), 1/sqrt(D))."""
    b = 1.0 / math.sqrt(d_model)
    return np.random.default_rng(seed).uniform(-b, b, size=(h, w, d_model))


def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def scaled_dot_attention(q, k, v) -> np.ndarray:
    q, k, v = (np.asarray(a, dtype=float) for a in (q, k, v))
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("attention inputs must be 2-D")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"Q and K inner dims differ: {q.shape[1]} vs {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"K and V row counts differ: {k.shape[0]} vs {v.shape[0]}")
    a = softmax(q @ k.T / math.sqrt(q.shape[1]), axis=-1)
    return a @ v


@dataclass(frozen=True)
class TokenSequence:
    values: np.ndarray  # (N, D)
    sources: tuple[str, ...]  # one tag per token

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("token values must be (N, D)")
        if len(self.sources) != v.shape[0]:
            raise ValueError("one source tag per token required")
        bad = set(self.sources) - set(SOURCES)
        if bad:
            raise ValueError(f"unknown source tags: {sorted(bad)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("token values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sources", tuple(self.sources))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @staticmethod
    def concat(parts) -> "TokenSequence":
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        if len({p.d for p in parts}) != 1:
            raise ValueError("token dims differ")
        return TokenSequence(
            np.concatenate([p.values for p in parts]),
            tuple(s for p in parts for s in p.sources),
        )

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for s in self.sources:
            out[s] = out.get(s, 0) + 1
        return out


@dataclass(frozen=True)
class AttentionWeights:
    wq: np.ndarray  # (D, D), columns split into heads
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    heads: int = HEADS

    def __post_init__(self):
        d = self.wq.shape[0]
        if self.heads <= 0 or d % self.heads:
            raise ValueError(f"D={d} not divisible by heads={self.heads}")
        for m in (self.wq, self.wk, self.wv, self.wo):
            if m.shape != (d, d):
                raise ValueError("projection matrices must all be (D, D)")

    @property
    def d_model(self) -> int:
        return self.wq.shape[0]

    @staticmethod
    def random(d_model: int = D_MODEL, heads: int = HEADS, seed: int = 0) -> "AttentionWeights":
        b = 1.0 / math.sqrt(d_model)
        rng = np.random.default_rng(seed)
        ws = [rng.uniform(-b, b, size=(d_model, d_model)) for _ in range(4)]
        return AttentionWeights(*ws, heads=heads)

    @staticmethod
    def identity(d_model: int, heads: int = 1) -> "AttentionWeights":
        e = np.eye(d_model)
        return AttentionWeights(e, e.copy(), e.copy(), e.copy(), heads=heads)


def _mha_values(x: np.ndarray, w: AttentionWeights) -> np.ndarray:
    if x.shape[1] != w.d_model:
        raise ValueError(f"token dim {x.shape[1]} != weight dim {w.d_model}")
    dk = w.d_model // w.heads
    q, k, v = x @ w.wq, x @ w.wk, x @ w.wv
    heads = [
        scaled_dot_attention(q[:, h * dk:(h + 1) * dk], k[:, h * dk:(h + 1) * dk], v[:, h * dk:(h + 1) * dk])
        for h in range(w.heads)
    ]
    return np.concatenate(heads, axis=1) @ w.wo


def multi_head_attention(seq: TokenSequence, w: AttentionWeights) -> TokenSequence:
    """Self-attention over the sequence; no residual, source tags carried through."""
    return TokenSequence(_mha_values(seq.values, w), seq.sources)


def tokenize(feature_map, projection, pe, source: str, bias=None) -> TokenSequence:
    """1x1-conv projection of a (C, H, W) map into H*W row-major tokens plus PE.

    ``projection`` is a (C, D) matrix; ``pe`` is an (H, W, D) grid.
    """
    fm = np.asarray(feature_map, dtype=float)
    proj = np.asarray(projection, dtype=float)
    pe = np.asarray(pe, dtype=float)
    if fm.ndim != 3:
        raise ValueError("feature map must be (C, H, W)")
    c, h, w = fm.shape
    if proj.ndim != 2 or proj.shape[0] != c:
        raise ValueError(f"projection expects {proj.shape[0] if proj.ndim == 2 else '?'} channels, map has {c}")
    d = proj.shape[1]
    if pe.shape != (h, w, d):
        raise ValueError(f"PE grid {pe.shape} does not match ({h}, {w}, {d})")
    flat = fm.reshape(c, h * w).T  # row-major over (y, x)
    tok = flat @ proj + pe.reshape(h * w, d)
    if bias is not None:
        tok = tok + np.asarray(bias, dtype=float)
    return TokenSequence(tok, (source,) * (h * w))


def layer_norm(x: np.ndarray, gain: np.ndarray, shift: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * gain + shift


@dataclass(frozen=True)
class EncoderLayerWeights:
    attn: AttentionWeights
    w1: np.ndarray  # (D, 4D)
    b1: np.ndarray
    w2: np.ndarray  # (4D, D)
    b2: np.ndarray
    ln1: tuple[np.ndarray, np.ndarray]
    ln2: tuple[np.ndarray, np.ndarray]

    @staticmethod
    def random(d_model: int = D_MODEL, heads: int = HEADS, seed: int = 0) -> "EncoderLayerWeights":
        rng = np.random.default_rng(seed)
        attn = AttentionWeights.random(d_model, heads, seed=int(rng.integers(2**31)))
        dh = FFN_MULT * d_model
        b = 1.0 / math.sqrt(d_model)
        bh = 1.0 / math.sqrt(dh)
        return EncoderLayerWeights(
            attn=attn,
            w1=rng.uniform(-b, b, size=(d_model, dh)),
            b1=np.zeros(dh),
            w2=rng.uniform(-bh, bh, size=(dh, d_model)),
            b2=np.zeros(d_model),
            ln1=(np.ones(d_model), np.zeros(d_model)),
            ln2=(np.ones(d_model), np.zeros(d_model)),
        )


def encoder_layer(seq: TokenSequence, lw: EncoderLayerWeights) -> TokenSequence:
    """Post-norm block: LN(x + MHA(x)), then LN(h + FFN(h)) with ReLU."""
    x = seq.values
    h = layer_norm(x + _mha_values(x, lw.attn), *lw.ln1)
    f = np.maximum(h @ lw.w1 + lw.b1, 0.0) @ lw.w2 + lw.b2
    return TokenSequence(layer_norm(h + f, *lw.ln2), seq.sources)


@dataclass(frozen=True)
class EncoderStack:
    layers: tuple[EncoderLayerWeights, ...] = field(default_factory=tuple)

    @staticmethod
    def random(n_layers: int = LAYERS, d_model: int = D_MODEL, heads: int = HEADS, seed: int = 0) -> "EncoderStack":
        seeds = np.random.default_rng(seed).integers(2**31, size=n_layers)
        return EncoderStack(tuple(EncoderLayerWeights.random(d_model, heads, int(s)) for s in seeds))

    def __call__(self, seq: TokenSequence) -> TokenSequence:
        for lw in self.layers:
            seq = encoder_layer(seq, lw)
        return seq


def _arrays(obj):
    if isinstance(obj, np.ndarray):
        yield obj
    elif isinstance(obj, (tuple, list)):
        for o in obj:
            yield from _arrays(o)
    elif hasattr(obj, "__dataclass_fields__"):
        for name in obj.__dataclass_fields__:
            yield from _arrays(getattr(obj, name))


def copy_weights(src):
    """Deep copy of a weight container (cross-modal initialisation)."""
    if isinstance(src, np.ndarray):
        return src.copy()
    if isinstance(src, tuple):
        return tuple(copy_weights(s) for s in src)
    if hasattr(src, "__dataclass_fields__"):
        return type(src)(**{k: copy_weights(getattr(src, k)) for k in src.__dataclass_fields__})
    return src


def weights_equal(a, b) -> bool:
    xs, ys = list(_arrays(a)), list(_arrays(b))
    return len(xs) == len(ys) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(xs, ys))


def backbone_stub(source: str, channels: int, h: int, w: int, seed: int = 0) -> np.ndarray:
    """Seeded (C, H, W) feature map standing in for a CNN/point-cloud backbone."""
    if source not in SOURCES:
        raise ValueError(f"unknown source {source!r}")
    rng = np.random.default_rng([seed, SOURCES.index(source)])
    return rng.standard_normal((channels, h, w))


def fuse(feature_maps: dict, d_model: int = D_MODEL, stack: EncoderStack | None = None, seed: int = 0,
         pe: str = "sinusoidal") -> TokenSequence:
    """Tokenize every source, concatenate in SOURCES order and run the encoder."""
    parts = []
    for i, src in enumerate(s for s in SOURCES if s in feature_maps):
        fm = np.asarray(feature_maps[src], dtype=float)
        c, h, w = fm.shape
        b = 1.0 / math.sqrt(c)
        proj = np.random.default_rng([seed, 1000 + i]).uniform(-b, b, size=(c, d_model))
        grid = sinusoidal_pe_2d(h, w, d_model) if pe == "sinusoidal" else learned_pe_2d(h, w, d_model, seed + i)
        parts.append(tokenize(fm, proj, grid, src))
    seq = TokenSequence.concat(parts)
    return stack(seq) if stack is not None else seq


def selftest(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Quick numeric self-checks; returns (name, ok, detail) rows."""
    rng = np.random.default_rng(seed)
    out = []

    pe0 = sinusoidal_pe(0, D_MODEL)
    out.append(("pe_zero_pattern", bool(np.array_equal(pe0, np.tile([0.0, 1.0], D_MODEL // 2))), ""))

    worst = 0.0
    for _ in range(20):
        n, m, dk, dv = rng.integers(1, 9, size=4)
        q, k, v = rng.standard_normal((n, dk)), rng.standard_normal((m, dk)), rng.standard_normal((m, dv))
        ref = np.zeros((n, dv))
        for i in range(n):
            s = [sum(q[i, t] * k[j, t] for t in range(dk)) / math.sqrt(dk) for j in range(m)]
            mx = max(s)
            e = [math.exp(x - mx) for x in s]
            z = sum(e)
            for j in range(m):
                ref[i] += e[j] / z * v[j]
        worst = max(worst, float(np.abs(scaled_dot_attention(q, k, v) - ref).max()))
    out.append(("attention_vs_naive", worst < 1e-12, f"max_abs_diff={worst:.3e}"))

    rows = softmax(rng.uniform(-1e4, 1e4, size=(16, 16))).sum(axis=1)
    out.append(("softmax_rows", bool(np.all(np.abs(rows - 1) <= 1e-9)), f"max_dev={np.abs(rows - 1).max():.3e}"))

    maps = {s: backbone_stub(s, 8, 2, 3, seed) for s in ("rgb_front", "lidar_bev", "dvs_front")}
    stack = EncoderStack.random(n_layers=2, d_model=32, heads=HEADS, seed=seed)
    fused = fuse(maps, d_model=32, stack=stack, seed=seed)
    out.append(("fusion_shapes", fused.values.shape == (18, 32) and bool(np.all(np.isfinite(fused.values))),
                f"tokens={fused.n} dims={fused.d}"))

    clone = copy_weights(stack)
    out.append(("weight_copy", weights_equal(stack, clone) and clone.layers[0].w1 is not stack.layers[0].w1, ""))
    return out
