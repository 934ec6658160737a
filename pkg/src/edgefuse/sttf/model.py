from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..core import nn
from ..core import tensor as T
from ..core.rng import Rng
from ..core.tensor import Tensor
from .fusion import TauPolicy


class SttfConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SttfConfig:
    height: int = 224
    width: int = 224
    patch_size: int = 16
    d: int = 64
    depth: int = 2
    heads: int = 4
    vocab: int = 256
    dec_layers: int = 2
    max_len: int = 32
    gate_channels: int = 4
    kappa: float = 3.0
    theta_patch: float = 0.01
    gamma: float = 1.0
    tau: float = 0.9
    tau_min: float = 0.7
    tau_max: float = 0.99
    policy_hidden: int = 16
    max_new_tokens: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.height % self.patch_size or self.width % self.patch_size:
            raise SttfConfigError(f"{self.height}x{self.width} not divisible by patch {self.patch_size}")
        if self.d % self.heads:
            raise SttfConfigError(f"d={self.d} not divisible by heads={self.heads}")

    @property
    def grid(self) -> tuple[int, int]:
        return self.height // self.patch_size, self.width // self.patch_size

    @property
    def n_patches(self) -> int:
        gh, gw = self.grid
        return gh * gw

    @property
    def patch_dim(self) -> int:
        return 3 * self.patch_size ** 2

    def signature(self) -> tuple:
        return (self.height, self.width, self.patch_size, self.d, self.depth)

    def as_dict(self) -> dict:
        return asdict(self)


SMALL = SttfConfig(height=64, width=64, patch_size=8)


class EventGateCNN(nn.Module):
    """Two 3x3 convs over clamp(count / kappa, 0, 1); output is one change logit per pixel."""

    def __init__(self, channels: int, kappa: float, rng: Rng):
        self.conv1 = nn.Conv2d(2, channels, 3, rng, pad=1)
        self.conv2 = nn.Conv2d(channels, 1, 3, rng, pad=1)
        self.kappa = kappa

    def normalize(self, counts: np.ndarray | Tensor) -> Tensor:
        e = counts if isinstance(counts, Tensor) else Tensor(counts)
        return T.clamp(e * (1.0 / self.kappa), 0.0, 1.0)

    def __call__(self, counts) -> Tensor:
        return self.conv2(T.gelu(self.conv1(self.normalize(counts))))

    def calibrate(self, kernel: str = "identity", gain: float = 12.0, bias: float = -1.0) -> "EventGateCNN":
        """Hand-set weights so the mask fires on pixels carrying events.

        ``identity`` passes each pixel's polarity sum through channel 0;
        ``average`` uses a 3x3 box filter instead. An empty frame gives the
        logit ``bias`` everywhere, so negative bias means an all-zero mask.
        """
        w1 = np.zeros_like(self.conv1.weight.data)
        if kernel == "identity":
            w1[0, :, 1, 1] = 1.0
        elif kernel == "average":
            w1[0, :, :, :] = 1.0 / 9.0
        else:
            raise ValueError(f"unknown calibration kernel {kernel!r}")
        self.conv1.weight.data = w1
        self.conv1.bias.data = np.zeros_like(self.conv1.bias.data)
        w2 = np.zeros_like(self.conv2.weight.data)
        w2[0, 0, 1, 1] = gain
        self.conv2.weight.data = w2
        self.conv2.bias.data = np.full_like(self.conv2.bias.data, bias)
        return self


class PatchEmbed(nn.Module):
    def __init__(self, patch_dim: int, n: int, d: int, rng: Rng):
        self.proj = nn.Linear(patch_dim, d, rng)
        self.pos = nn.param(rng.normal((n, d)) * 0.02)

    def __call__(self, patches: Tensor, idx: np.ndarray) -> Tensor:
        return self.proj(patches) + self.pos[idx]


class TemporalCrossAttention(nn.Module):
    def __init__(self, d: int, heads: int, rng: Rng):
        self.ln_q = nn.LayerNorm(d)
        self.ln_kv = nn.LayerNorm(d)
        self.attn = nn.Attention(d, heads, rng)

    def __call__(self, text: Tensor, tokens: Tensor, bias: np.ndarray | None, probs_out: list | None = None) -> Tensor:
        return self.attend(text, *self.project_kv(tokens), bias, probs_out)

    def project_kv(self, tokens: Tensor) -> tuple[Tensor, Tensor]:
        kv = self.ln_kv(tokens)
        return self.attn.wk(kv), self.attn.wv(kv)

    def attend(self, text: Tensor, k: Tensor, v: Tensor, bias: np.ndarray | None,
               probs_out: list | None = None) -> Tensor:
        return text + self.attn.attend(self.attn.wq(self.ln_q(text)), k, v, bias, probs_out)


class MicroGPT(nn.Module):
    """Causal decoder; ``embed`` maps ids to inputs, ``decode`` maps fused states to logits."""

    def __init__(self, vocab: int, d: int, layers: int, heads: int, max_len: int, rng: Rng):
        self.tok = nn.Embedding(vocab, d, rng, std=0.5)
        self.pos = nn.param(rng.normal((max_len, d)) * 0.02)
        self.blocks = [nn.Block(d, heads, rng) for _ in range(layers)]
        self.ln_f = nn.LayerNorm(d)
        self.head = nn.Linear(d, vocab, rng)
        self.vocab = vocab
        self.max_len = max_len

    def check_ids(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        bad = ids[(ids < 0) | (ids >= self.vocab)]
        if bad.size:
            raise VocabError(f"token id {int(bad[0])} outside vocabulary of size {self.vocab}")
        if len(ids) == 0:
            raise VocabError("empty token sequence")
        if len(ids) >= self.max_len:
            raise VocabError(f"sequence length {len(ids)} reaches context limit {self.max_len}")
        return ids

    def embed(self, ids) -> Tensor:
        ids = self.check_ids(ids)
        return self.tok(ids) + self.pos[np.arange(len(ids))]

    def logits(self, h: Tensor, layers: int | None = None) -> Tensor:
        bias = nn.causal_bias(h.shape[0])
        for blk in self.blocks[: len(self.blocks) if layers is None else layers]:
            h = blk(h, bias=bias)
        return self.head(self.ln_f(h))


class VocabError(ValueError):
    pass


class SttfModel(nn.Module):
    def __init__(self, cfg: SttfConfig = SttfConfig(), rng: Rng | None = None):
        rng = Rng(cfg.seed) if rng is None else rng
        self.cfg = cfg
        self.gate = EventGateCNN(cfg.gate_channels, cfg.kappa, rng.spawn(1)).calibrate()
        r = rng.spawn(2)
        self.embed = PatchEmbed(cfg.patch_dim, cfg.n_patches, cfg.d, r)
        self.blocks = [nn.Block(cfg.d, cfg.heads, r) for _ in range(cfg.depth)]
        self.fusion_gate = nn.param(rng.spawn(3).normal((2 * cfg.d,)) * 0.05)
        self.xattn = TemporalCrossAttention(cfg.d, cfg.heads, rng.spawn(4))
        self.decoder = MicroGPT(cfg.vocab, cfg.d, cfg.dec_layers, cfg.heads, cfg.max_len, rng.spawn(5))
        self.policy = TauPolicy(cfg.policy_hidden, cfg.tau_min, cfg.tau_max, rng.spawn(6))

    def patchify(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        c, h, w = x.shape
        if (h, w) != (self.cfg.height, self.cfg.width) or c != 3:
            raise SttfConfigError(f"frame shape {x.shape} does not match model (3, {self.cfg.height}, {self.cfg.width})")
        return patchify(x, self.cfg.patch_size)


def patchify(x: np.ndarray, p: int) -> np.ndarray:
    """C x H x W -> N x (C*p*p), patches in row-major grid order."""
    c, h, w = x.shape
    g = x.reshape(c, h // p, p, w // p, p).transpose(1, 3, 0, 2, 4)
    return g.reshape((h // p) * (w // p), c * p * p)
