"""Objective terms: adversarial, latent consistency, cycle consistency and their sum.

Adversarial functions take discriminator *scores*: probabilities in ``log``
mode (sigmoid already applied) and raw outputs in ``least_squares`` mode.
Every L1 term is averaged over elements so the weights do not depend on
resolution.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import Sequence

import torch
import torch.nn.functional as F

EPS = 1e-7

LOSS_FIELDS = ("adv_forward", "adv_reverse", "latent_forward", "latent_reverse",
               "cycle_forward", "cycle_reverse")


@dataclass(frozen=True)
class LossReport:
    adv_forward: float
    adv_reverse: float
    latent_forward: float
    latent_reverse: float
    cycle_forward: float
    cycle_reverse: float
    total: float

    def as_tuple(self):
        return astuple(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def _check_probs(scores: torch.Tensor) -> torch.Tensor:
    if not torch.isfinite(scores).all() or scores.min() < 0 or scores.max() > 1:
        raise ValueError("log-mode scores must lie in [0, 1]")
    return scores.clamp(EPS, 1 - EPS)


def _adv_term(real: torch.Tensor, fake: torch.Tensor, mode: str) -> torch.Tensor:
    if real.shape != fake.shape:
        raise ValueError(f"score maps differ in shape: {tuple(real.shape)} vs {tuple(fake.shape)}")
    if mode == "log":
        return torch.log(_check_probs(real)).mean() + torch.log1p(-_check_probs(fake)).mean()
    if mode == "least_squares":
        return ((real - 1) ** 2).mean() + (fake ** 2).mean()
    raise ValueError(f"unknown gan mode {mode!r}")


def adversarial_forward(d_t_real, d_t_fake, mode="log"):
    """Target-domain adversarial value: E log D(t) + E log(1 - D(fake))."""
    return _adv_term(d_t_real, d_t_fake, mode)


def adversarial_reverse(pairs: Sequence[tuple[torch.Tensor, torch.Tensor]], mode="log"):
    """Sum of the per-source adversarial values; ``pairs`` holds (real, fake) scores."""
    if len(pairs) == 0:
        raise ValueError("need at least one (real, fake) score pair")
    return sum(_adv_term(real, fake, mode) for real, fake in pairs)


def discriminator_loss(real, fake, mode="log"):
    """What a discriminator minimizes: push real scores to 1 and fake scores to 0."""
    if mode == "log":
        return -_adv_term(real, fake, mode)
    return 0.5 * _adv_term(real, fake, mode)


def generator_adversarial_loss(fake, mode="log"):
    """Non-saturating generator target: push fake scores to 1."""
    if mode == "log":
        return -torch.log(_check_probs(fake)).mean()
    if mode == "least_squares":
        return ((fake - 1) ** 2).mean()
    raise ValueError(f"unknown gan mode {mode!r}")


def _l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def latent_consistency_forward(z_src, z_cycle):
    """Mean |h_S(s) - h_T(f(s))|."""
    return _l1(z_src, z_cycle)


def latent_consistency_reverse(z_tgt, z_cycle):
    """Mean |h_T(t) - h_S(g(t))|."""
    return _l1(z_tgt, z_cycle)


def cycle_reverse(t, t_rec):
    return _l1(t, t_rec)


def cycle_forward(s: Sequence[torch.Tensor], s_rec: Sequence[torch.Tensor]):
    """Mean absolute error pooled over the elements of all n reconstructions."""
    if len(s) != len(s_rec) or len(s) == 0:
        raise ValueError(f"need matching non-empty lists, got {len(s)} and {len(s_rec)}")
    total = 0.0
    count = 0
    for a, b in zip(s, s_rec):
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
        total = total + (a - b).abs().sum()
        count += a.numel()
    return total / count


def weighted_total(parts, lambda1=10.0, lambda2=1.0):
    """Weighted sum of the six terms; works on floats and tensors alike."""
    p = parts
    return (p["adv_forward"] + p["adv_reverse"]
            + lambda1 * (p["cycle_reverse"] + p["cycle_forward"])
            + lambda2 * (p["latent_forward"] + p["latent_reverse"]))


def total_loss(parts, lambda1=10.0, lambda2=1.0) -> LossReport:
    """Combine the six component scalars into a :class:`LossReport`.

    ``parts`` is a mapping with the keys in ``LOSS_FIELDS``; values may be
    floats or 0-d tensors.
    """
    missing = [k for k in LOSS_FIELDS if k not in parts]
    if missing:
        raise ValueError(f"missing loss components: {missing}")
    vals = {k: float(torch.as_tensor(parts[k]).detach()) for k in LOSS_FIELDS}
    bad = [k for k, v in vals.items() if not math.isfinite(v)]
    if bad:
        raise FloatingPointError(f"non-finite loss component(s): {', '.join(bad)}")
    return LossReport(**vals, total=weighted_total(vals, lambda1, lambda2))


def cyclegan_reference_loss(d_t_real, d_t_fake, d_s_real, d_s_fake, s, s_rec, t, t_rec,
                            lambda1=10.0, mode="log"):
    """Plain two-domain CycleGAN objective, used as an independent check.

    Written directly in terms of torch's stock criteria. ``s`` / ``s_rec`` may
    be single tensors or one-element lists; more than one source raises.
    """
    if isinstance(s, (list, tuple)) or isinstance(s_rec, (list, tuple)):
        if len(s) != 1 or len(s_rec) != 1:
            raise ValueError("the CycleGAN reference objective is defined for one source only")
        s, s_rec = s[0], s_rec[0]
    if isinstance(d_s_real, (list, tuple)):
        if len(d_s_real) != 1 or len(d_s_fake) != 1:
            raise ValueError("the CycleGAN reference objective is defined for one source only")
        d_s_real, d_s_fake = d_s_real[0], d_s_fake[0]

    if mode == "log":
        def gan(real, fake):
            return (-F.binary_cross_entropy(real, torch.ones_like(real))
                    - F.binary_cross_entropy(fake, torch.zeros_like(fake)))
    else:
        def gan(real, fake):
            return (F.mse_loss(real, torch.ones_like(real))
                    + F.mse_loss(fake, torch.zeros_like(fake)))

    cyc = F.l1_loss(t_rec, t) + F.l1_loss(s_rec, s)
    return gan(d_t_real, d_t_fake) + gan(d_s_real, d_s_fake) + lambda1 * cyc
