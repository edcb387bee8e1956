"""WGAN-GP training with k-step unrolled rollouts through the simulator.

Each generator iteration first takes `critic_steps` critic updates on
independent minibatches (Wasserstein loss plus gradient penalty), then
one generator update.  At the end of every epoch the generator is
unrolled against a live step server: starting from a freshly reset
window it emits an action, the simulator applies it and returns the
next window, and that generated state conditions the following action.
The rollout length k follows the configured non-decreasing schedule.

Generated vectors carry legal categorical atoms already (straight
through sampling), so a rollout action is applied exactly as a served
vector would be.  A non-finite loss aborts training; the checkpoint
directory keeps the last completed epoch.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
import torch

from cgan_agent.data import load_gamma, load_meta, normalize_window, read_vectors
from cgan_agent.gan import (
    Critic,
    GanConfig,
    Generator,
    gradient_penalty,
    save_checkpoint,
)
from cgan_agent.protocol import StepClient

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


def _check_finite(name: str, value: float, epoch: int) -> None:
    if not math.isfinite(value):
        raise TrainingDiverged(
            f"non-finite {name} loss at epoch {epoch}; "
            "checkpoint keeps the last completed epoch"
        )


def _rollout(
    generator: Generator,
    critic: Critic,
    stepper,
    meta,
    k: int,
    seed: int,
    torch_gen: torch.Generator,
    gamma: tuple[float, float],
    rng: np.random.Generator,
) -> tuple[torch.Tensor, int]:
    """Generator loss summed over a k-step rollout, and the steps taken."""
    cond = torch.from_numpy(normalize_window(stepper.reset(seed), meta)).unsqueeze(0)
    terms = []
    for _ in range(k):
        z = torch.randn(1, generator.noise_dim, generator=torch_gen)
        vec = generator(z, cond, generator=torch_gen)
        terms.append(-critic(vec, cond).mean())
        dt = max(1, int(rng.gamma(gamma[0], gamma[1])))
        window, done = stepper.step([float(x) for x in vec.detach()[0]], dt)
        if done:
            break
        cond = torch.from_numpy(normalize_window(window, meta)).unsqueeze(0)
    return torch.stack(terms).mean(), len(terms)


def train(
    dataset_path: str | Path,
    model_path: str | Path,
    out_dir: str | Path,
    config: GanConfig,
    sim_command: str | None = None,
    stepper=None,
) -> list[dict]:
    """Returns the per-epoch history; the checkpoint lands in out_dir."""
    meta = load_meta(dataset_path)
    vectors, windows, _ = read_vectors(dataset_path, meta)
    gamma = load_gamma(model_path)
    n = len(vectors)

    torch.manual_seed(config.seed)  # layer init draws from the global stream
    torch_gen = torch.Generator().manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    generator = Generator(meta.window_width, config)
    critic = Critic(meta.window_width, config)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr_g, betas=(0.0, 0.9))
    opt_d = torch.optim.Adam(critic.parameters(), lr=config.lr_d, betas=(0.0, 0.9))

    own_stepper = stepper is None
    if own_stepper:
        if sim_command is None:
            raise ValueError("unrolled training needs a simulator command")
        stepper = StepClient(
            sim_command, meta.T, {k: list(v) for k, v in meta.bounds.items()}
        )

    real_v = torch.from_numpy(vectors)
    real_w = torch.from_numpy(windows)

    def batch():
        idx = rng.integers(0, n, config.batch_size)
        return real_v[idx], real_w[idx]

    save_checkpoint(out_dir, generator, critic, config, meta, gamma,
                    extra={"epoch": -1, "history": []})
    history: list[dict] = []
    iters = max(1, n // (config.batch_size * config.critic_steps))
    try:
        for epoch in range(config.epochs):
            k = config.k_at(epoch)
            c_losses, g_losses, gaps, norms = [], [], [], []
            for _ in range(iters):
                for _ in range(config.critic_steps):
                    rv, rw = batch()
                    z = torch.randn(
                        config.batch_size, config.noise_dim, generator=torch_gen
                    )
                    fake = generator(z, rw, generator=torch_gen).detach()
                    penalty, norm = gradient_penalty(
                        critic, rv, fake, rw, generator=torch_gen
                    )
                    d_real = critic(rv, rw).mean()
                    d_fake = critic(fake, rw).mean()
                    loss_c = d_fake - d_real + config.gp_weight * penalty
                    _check_finite("critic", float(loss_c.detach()), epoch)
                    opt_d.zero_grad()
                    loss_c.backward()
                    opt_d.step()
                    c_losses.append(float(loss_c.detach()))
                    gaps.append(float((d_real - d_fake).detach()))
                    norms.append(norm)
                _, rw = batch()
                z = torch.randn(
                    config.batch_size, config.noise_dim, generator=torch_gen
                )
                loss_g = -critic(generator(z, rw, generator=torch_gen), rw).mean()
                _check_finite("generator", float(loss_g.detach()), epoch)
                opt_g.zero_grad()
                loss_g.backward()
                opt_g.step()
                g_losses.append(float(loss_g.detach()))

            rollout_steps = 0
            for r in range(config.rollouts_per_epoch):
                loss_r, steps = _rollout(
                    generator, critic, stepper, meta, k,
                    seed=config.seed * 1_000_000 + epoch * 1_000 + r,
                    torch_gen=torch_gen, gamma=gamma, rng=rng,
                )
                _check_finite("rollout", float(loss_r.detach()), epoch)
                opt_g.zero_grad()
                loss_r.backward()
                opt_g.step()
                rollout_steps += steps

            entry = {
                "epoch": epoch,
                "k": k,
                "critic_loss": sum(c_losses) / len(c_losses),
                "gen_loss": sum(g_losses) / len(g_losses),
                "gap": sum(gaps) / len(gaps),
                "grad_norm": sum(norms) / len(norms),
                "rollout_steps": rollout_steps,
            }
            history.append(entry)
            log.info(
                "epoch %d k=%d critic %.4f gen %.4f gap %.4f |grad| %.3f",
                epoch, k, entry["critic_loss"], entry["gen_loss"],
                entry["gap"], entry["grad_norm"],
            )
            save_checkpoint(out_dir, generator, critic, config, meta, gamma,
                            extra={"epoch": epoch, "history": history})
    finally:
        if own_stepper:
            stepper.close()
    return history
