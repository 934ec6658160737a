from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import flops, nn
from ..core import tensor as T
from ..core.rng import Rng
from ..core.tensor import Tensor
from ..sttf.model import MicroGPT, TemporalCrossAttention, patchify

GATE_SLOPE = 6.0
ACTIVE_CHANNEL = 0.5  # a channel counts as active when its gate exceeds this
# initial gate biases are staggered by +/- GATE_SPREAD around the centre, so
# channel c opens once slope*(b - 0.5) > -bias_c and capacity grows with b
GATE_SPREAD = 2.5


class AncConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BranchSpec:
    name: str
    width: int
    depth: int
    heads: int

    def __post_init__(self):
        if self.width % self.heads:
            raise AncConfigError(f"branch {self.name}: width {self.width} not divisible by {self.heads} heads")


# per-frame FLOPs on the 196-token grid come to 1 : 3.85 : 15.72 (see branch_flops)
DEFAULT_BRANCHES = (
    BranchSpec("tiny", 12, 1, 2),
    BranchSpec("small", 32, 2, 4),
    BranchSpec("medium", 80, 3, 4),
)


@dataclass(frozen=True)
class AncConfig:
    height: int = 224
    width: int = 224
    patch_size: int = 16
    d: int = 64
    heads: int = 4
    branches: tuple[BranchSpec, ...] = DEFAULT_BRANCHES
    estimator_channels: int = 4
    kappa: float = 3.0
    temperature: float = 0.5
    threshold: float = 0.1
    gate_bias: float = 0.0
    dec_layers: tuple[int, ...] = (2, 3, 4)
    vocab: int = 256
    max_len: int = 32
    max_new_tokens: int = 4
    straight_through: bool = False
    seed: int = 0
    # estimator calibration: logits = [b0 - a*f, 0, a*f - b2] on the pooled density feature f
    calib_gain: float = 16.0
    calib_low: float = 3.35
    calib_high: float = 7.97
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if len(self.branches) != 3:
            raise AncConfigError(f"exactly K=3 branches are supported, got {len(self.branches)}")
        if self.height % self.patch_size or self.width % self.patch_size:
            raise AncConfigError(f"{self.height}x{self.width} not divisible by patch {self.patch_size}")
        if self.temperature <= 0:
            raise AncConfigError("temperature must be positive")
        if len(self.dec_layers) != 3 or list(self.dec_layers) != sorted(self.dec_layers):
            raise AncConfigError("dec_layers must list 3 non-decreasing depths")

    @property
    def n_patches(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size)

    @property
    def input_dim(self) -> int:
        return 5 * self.patch_size ** 2

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("extra")
        return out


SMALL = AncConfig(height=64, width=64, patch_size=8)


class ComplexityEstimator(nn.Module):
    """Strided conv over normalised events, global mean pool, linear head, softmax over K=3."""

    def __init__(self, channels: int, kappa: float, rng: Rng):
        self.conv = nn.Conv2d(2, channels, 4, rng, stride=4)
        self.head = nn.Linear(channels, 3, rng)
        self.kappa = kappa

    def logits(self, counts) -> Tensor:
        e = counts if isinstance(counts, Tensor) else Tensor(counts)
        f = T.gelu(self.conv(T.clamp(e * (1.0 / self.kappa), 0.0, 1.0)))
        pooled = f.mean(axis=(1, 2)).reshape(1, -1)
        return self.head(pooled).reshape(-1)

    def __call__(self, counts) -> Tensor:
        return T.softmax(self.logits(counts), axis=-1)

    def calibrate(self, gain: float, low: float, high: float) -> "ComplexityEstimator":
        """Channel 0 measures block event density; the head maps it to [low - g*f, 0, g*f - high].

        Density terciles (1/3, 2/3) fall on the Tiny/Small and Small/Medium
        boundaries for the defaults, and an empty frame routes to Tiny.
        """
        w = self.conv.weight.data.copy()
        w[0] = 1.0 / (2 * 16)
        self.conv.weight.data = w
        b = self.conv.bias.data.copy()
        b[0] = 0.0
        self.conv.bias.data = b
        hw = np.zeros_like(self.head.weight.data)
        hw[0] = [-gain, 0.0, gain]
        self.head.weight.data = hw
        self.head.bias.data = np.array([low, 0.0, -high], dtype=np.float32)
        return self


def budget_gate(h_prev: Tensor, h: Tensor, b: float | Tensor, weight: Tensor, bias: Tensor,
                slope: float = GATE_SLOPE) -> tuple[Tensor, Tensor]:
    """Channel gate a = sigmoid(W h_prev + bias + slope*(b - 0.5)); returns (a * h, a).

    ``h_prev`` is a C vector (``h`` is then C or rows x C, gated by the same a)
    or a batch B x C paired row-for-row with ``h``.
    """
    if isinstance(b, Tensor):
        shift = (b - 0.5) * slope
    else:
        shift = slope * (min(max(float(b), 0.0), 1.0) - 0.5)
    batched = h_prev.ndim == 2
    pre = (h_prev if batched else h_prev.reshape(1, -1)) @ weight + bias + shift
    a = T.sigmoid(pre)
    if not batched:
        a = a.reshape(-1)
    return h * a, a


class BudgetGate(nn.Module):
    def __init__(self, c: int, rng: Rng, bias: float, spread: float = GATE_SPREAD):
        self.weight = nn.param(rng.normal((c, c)) * (0.1 / np.sqrt(c)))
        self.bias = nn.param(bias + np.linspace(spread, -spread, c))

    def __call__(self, h_prev_rows: Tensor, h: Tensor, b) -> tuple[Tensor, Tensor]:
        return budget_gate(h_prev_rows.mean(axis=0), h, b, self.weight, self.bias)


class BranchEncoder(nn.Module):
    """Patch embed, ``depth`` gated transformer blocks, projection to the shared width."""

    def __init__(self, spec: BranchSpec, cfg: AncConfig, rng: Rng):
        self.spec = spec
        self.embed = nn.Linear(cfg.input_dim, spec.width, rng)
        self.pos = nn.param(rng.normal((cfg.n_patches, spec.width)) * 0.02)
        self.blocks = [nn.Block(spec.width, spec.heads, rng) for _ in range(spec.depth)]
        self.gates = [BudgetGate(spec.width, rng, cfg.gate_bias) for _ in range(spec.depth)]
        self.proj = nn.Linear(spec.width, cfg.d, rng)

    def __call__(self, inputs: Tensor, b) -> tuple[Tensor, list[Tensor]]:
        h = self.embed(inputs) + self.pos
        gates = []
        for blk, gate in zip(self.blocks, self.gates):
            out = blk(h)
            with flops.stage("budget_gate"):
                h, a = gate(h, out, b)
            gates.append(a)
        return self.proj(h), gates


def branch_flops(spec: BranchSpec, cfg: AncConfig) -> int:
    """Closed-form FLOPs of one branch forward pass, budget gates excluded (same convention as the ledger)."""
    n, d, pin = cfg.n_patches, spec.width, cfg.input_dim

    def linear(rows, din, dout):
        return 2 * rows * din * dout + rows * dout

    def layernorm(rows, c):
        return 7 * rows * c + 4 * rows

    dh = d // spec.heads
    attention = spec.heads * (4 * n * n * dh + 5 * n * n) + linear(n, d, d)
    block = (layernorm(n, d) + 3 * linear(n, d, d) + attention + n * d
             + layernorm(n, d) + linear(n, d, 2 * d) + 2 * n * d + linear(n, 2 * d, d) + n * d)
    return linear(n, pin, d) + n * d + spec.depth * block + linear(n, d, cfg.d)


def gate_flops(spec: BranchSpec, cfg: AncConfig) -> int:
    """Budget-gate FLOPs of one branch: row mean, matvec, bias and shift adds, sigmoid, rescale."""
    n, d = cfg.n_patches, spec.width
    return spec.depth * (2 * n * d + 2 * d * d + 4 * d)


class AncModel(nn.Module):
    def __init__(self, cfg: AncConfig = AncConfig(), rng: Rng | None = None):
        rng = Rng(cfg.seed) if rng is None else rng
        self.cfg = cfg
        self.estimator = ComplexityEstimator(cfg.estimator_channels, cfg.kappa, rng.spawn(11)).calibrate(
            cfg.calib_gain, cfg.calib_low, cfg.calib_high)
        self.branches = [BranchEncoder(s, cfg, rng.spawn(20 + i)) for i, s in enumerate(cfg.branches)]
        self.xattn = TemporalCrossAttention(cfg.d, cfg.heads, rng.spawn(30))
        self.decoder = MicroGPT(cfg.vocab, cfg.d, max(cfg.dec_layers), cfg.heads, cfg.max_len, rng.spawn(31))

    def branch_inputs(self, x: np.ndarray, e: np.ndarray) -> Tensor:
        cfg = self.cfg
        x = np.asarray(x, dtype=np.float32)
        e = np.asarray(getattr(e, "counts", e), dtype=np.float32)
        if x.shape != (3, cfg.height, cfg.width) or e.shape != (2, cfg.height, cfg.width):
            raise AncConfigError(f"inputs {x.shape}/{e.shape} do not match model {cfg.height}x{cfg.width}")
        with flops.stage("input_norm"):
            ev = T.clamp(Tensor(e) * (1.0 / cfg.kappa), 0.0, 1.0)
        p = cfg.patch_size
        return Tensor(np.concatenate([patchify(x, p), patchify(ev.data, p)], axis=1))

    def branch_params(self) -> list[int]:
        return [b.num_params() for b in self.branches]
