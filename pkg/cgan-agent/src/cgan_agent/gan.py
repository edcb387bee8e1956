"""Networks and losses: conditional Wasserstein GAN with gradient penalty.

The generator maps (noise, conditioning window) to one 7-slot action
vector.  Ordinal slots come out of a tanh; the three categorical slots
(quantity branch, order type, side) sample straight-through Gumbel:
the forward value snaps to a legal atom while gradients flow through
the softmax relaxation.  Training on soft mixtures instead lets the
critic win on "is it an atom" and never aligns the type frequencies.
The critic scores a (vector, window) pair; conditioning enters both
networks by plain concatenation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

VECTOR_WIDTH = 7
ORDER_TYPE_VALUES = (-1.0, 0.0, 1.0)  # market, add, cancel
SIDE_VALUES = (1.0, -1.0)  # bid, ask
QTY_TYPE_VALUES = (1.0, -1.0)  # raw count, hundreds


@dataclass(frozen=True)
class GanConfig:
    noise_dim: int = 8
    hidden: tuple[int, ...] = (128, 128)
    gp_weight: float = 10.0
    critic_steps: int = 3
    unroll: tuple[int, ...] = (1, 2, 4)  # k per epoch, last entry repeats
    rollouts_per_epoch: int = 2
    batch_size: int = 128
    epochs: int = 30
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    tau: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 2 or self.critic_steps < 1:
            raise ValueError("epochs, batch_size, critic_steps must be positive")
        if not self.unroll or self.unroll[0] < 1:
            raise ValueError("unroll schedule must start at k >= 1")
        if any(b > a for b, a in zip(self.unroll, self.unroll[1:])):
            raise ValueError("unroll schedule must be non-decreasing")
        if self.gp_weight < 0:
            raise ValueError("gradient-penalty weight must be non-negative")

    def k_at(self, epoch: int) -> int:
        return self.unroll[min(epoch, len(self.unroll) - 1)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GanConfig":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        d["unroll"] = tuple(d["unroll"])
        return cls(**d)


def gumbel_softmax(
    logits: torch.Tensor,
    tau: float,
    hard: bool,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    u = torch.rand(logits.shape, generator=generator, device=logits.device)
    exponential = -torch.log(u.clamp_min(1e-20))
    gumbel = -torch.log(exponential.clamp_min(1e-20))
    y = torch.softmax((logits + gumbel) / tau, dim=-1)
    if hard:
        index = y.argmax(dim=-1, keepdim=True)
        y_hard = torch.zeros_like(y).scatter_(-1, index, 1.0)
        y = y_hard + (y - y.detach())  # straight-through
    return y


def _mlp(sizes: tuple[int, ...]) -> nn.Sequential:
    layers: list[nn.Module] = []
    for a, b in zip(sizes, sizes[1:]):
        layers += [nn.Linear(a, b), nn.LeakyReLU(0.2)]
    return nn.Sequential(*layers)


class Generator(nn.Module):
    def __init__(self, window_width: int, config: GanConfig):
        super().__init__()
        self.noise_dim = config.noise_dim
        self.tau = config.tau
        self.trunk = _mlp((config.noise_dim + window_width,) + config.hidden)
        width = config.hidden[-1]
        self.ordinals = nn.Linear(width, 4)  # depth, cancel_depth, qty_x, qty_100x
        self.qty_logits = nn.Linear(width, len(QTY_TYPE_VALUES))
        self.type_logits = nn.Linear(width, len(ORDER_TYPE_VALUES))
        self.side_logits = nn.Linear(width, len(SIDE_VALUES))
        self.register_buffer("qty_values", torch.tensor(QTY_TYPE_VALUES))
        self.register_buffer("type_values", torch.tensor(ORDER_TYPE_VALUES))
        self.register_buffer("side_values", torch.tensor(SIDE_VALUES))

    def forward(
        self,
        z: torch.Tensor,
        cond: torch.Tensor,
        hard: bool = True,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        h = self.trunk(torch.cat([z, cond], dim=1))
        ordinals = torch.tanh(self.ordinals(h))
        pick = lambda head: gumbel_softmax(head(h), self.tau, hard, generator)
        type_oh = pick(self.type_logits)  # market, add, cancel
        qty_oh = pick(self.qty_logits)  # raw, hundreds
        side = (pick(self.side_logits) @ self.side_values).unsqueeze(1)
        # real encodings zero every slot the order type ignores; mirroring
        # that pattern keeps the critic from separating on structure alone
        is_add = type_oh[:, 1:2]
        is_cancel = type_oh[:, 2:3]
        sized = 1.0 - is_cancel
        return torch.cat(
            [
                ordinals[:, 0:1] * is_add,
                ordinals[:, 1:2] * is_cancel,
                ordinals[:, 2:3] * qty_oh[:, 0:1] * sized,
                ordinals[:, 3:4] * qty_oh[:, 1:2] * sized,
                (qty_oh @ self.qty_values).unsqueeze(1) * sized,
                (type_oh @ self.type_values).unsqueeze(1),
                side,
            ],
            dim=1,
        )

    def sample(
        self, cond: torch.Tensor, generator: torch.Generator | None = None
    ) -> torch.Tensor:
        z = torch.randn(cond.shape[0], self.noise_dim, generator=generator)
        with torch.no_grad():
            return self(z, cond, hard=True, generator=generator)


class Critic(nn.Module):
    def __init__(self, window_width: int, config: GanConfig):
        super().__init__()
        self.net = nn.Sequential(
            _mlp((VECTOR_WIDTH + window_width,) + config.hidden),
            nn.Linear(config.hidden[-1], 1),
        )

    def forward(self, vectors: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([vectors, cond], dim=1)).squeeze(1)


def gradient_penalty(
    critic: Critic,
    real: torch.Tensor,
    fake: torch.Tensor,
    cond: torch.Tensor,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, float]:
    """Penalty term and the mean interpolate gradient norm it saw."""
    eps = torch.rand(real.shape[0], 1, generator=generator, device=real.device)
    mixed = (eps * real + (1.0 - eps) * fake.detach()).requires_grad_(True)
    score = critic(mixed, cond).sum()
    (grads,) = torch.autograd.grad(score, mixed, create_graph=True)
    norms = grads.norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean(), float(norms.mean().detach())


# ---------------------------------------------------------------------------
# checkpoints: weights + config JSON + bounds JSON in one directory


def save_checkpoint(
    out_dir: str | Path,
    generator: Generator,
    critic: Critic,
    config: GanConfig,
    meta,
    gamma: tuple[float, float],
    extra: dict | None = None,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(generator.state_dict(), out / "generator.pt")
    torch.save(critic.state_dict(), out / "critic.pt")
    doc = {
        "config": config.to_dict(),
        "T": meta.T,
        "features": list(meta.features),
        "gamma": {"shape": gamma[0], "scale": gamma[1]},
        **(extra or {}),
    }
    (out / "config.json").write_text(json.dumps(doc, indent=2) + "\n")
    (out / "bounds.json").write_text(
        json.dumps({k: list(v) for k, v in meta.bounds.items()}, indent=2) + "\n"
    )
    return out


def load_checkpoint(ckpt_dir: str | Path):
    """(generator, critic, config, meta, gamma) rebuilt from a directory."""
    from cgan_agent.data import DatasetMeta  # avoids a module cycle

    ckpt = Path(ckpt_dir)
    doc = json.loads((ckpt / "config.json").read_text())
    bounds = json.loads((ckpt / "bounds.json").read_text())
    config = GanConfig.from_dict(doc["config"])
    meta = DatasetMeta(
        T=int(doc["T"]),
        bounds={k: (float(lo), float(hi)) for k, (lo, hi) in bounds.items()},
        features=tuple(doc["features"]),
    )
    generator = Generator(meta.window_width, config)
    generator.load_state_dict(torch.load(ckpt / "generator.pt", map_location="cpu"))
    generator.eval()
    critic = Critic(meta.window_width, config)
    critic.load_state_dict(torch.load(ckpt / "critic.pt", map_location="cpu"))
    critic.eval()
    gamma = (float(doc["gamma"]["shape"]), float(doc["gamma"]["scale"]))
    return generator, critic, config, meta, gamma
