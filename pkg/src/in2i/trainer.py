"""Optimization loop, learning-rate schedule, checkpointing and inference helpers."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch
import torch.nn as nn

from . import losses as L
from .baselines import adapt_sources, effective_model
from .blocks import init_weights
from .checkpoint import check_compatible, load_into, read_manifest, save_checkpoint
from .core import Config, torch_generator
from .data import (EpochExhausted, EpochState, SampleBundle, UnpairedMultiModalDataset,
                   epoch_state, next_batch, save_image, start_epoch)
from .discriminator import build_discriminator_bank, discriminate
from .generator import ForwardGenerator, ReverseGenerator, build_generators

log = logging.getLogger(__name__)

CSV_COLUMNS = ["step", "epoch", "adv_fwd", "adv_rev", "lat_fwd", "lat_rev", "cyc_fwd",
               "cyc_rev", "total", "lr_g", "lr_d"]

ABLATION_PRESETS = {
    "adv": {"lambda1": 0.0, "lambda2": 0.0},
    "adv+latent": {"lambda1": 0.0, "lambda2": 1.0},
    "full": {},
}


def lr_at(epoch: int, base: float, epochs: int, decay_start: int) -> float:
    """Constant until ``decay_start``, then linear towards zero.

    The last epoch keeps ``base / (epochs - decay_start)``.
    """
    if epoch < decay_start:
        return base
    return base * min(1.0, (epochs - epoch) / (epochs - decay_start))


@dataclass
class TrainState:
    cfg: Config
    fwd: ForwardGenerator
    rev: ReverseGenerator
    discs: nn.ModuleList
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    sampler: EpochState
    epoch: int = 0
    step: int = 0

    @property
    def nets(self) -> dict[str, nn.Module]:
        return {"fwd": self.fwd, "rev": self.rev, "disc": self.discs}

    @property
    def net_model(self):
        return effective_model(self.cfg.model)

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch
        t = self.cfg.train
        for opt, base in ((self.opt_g, t.lr_generator), (self.opt_d, t.lr_discriminator)):
            for g in opt.param_groups:
                g["lr"] = lr_at(epoch, base, t.epochs, t.decay_start_epoch)

    @property
    def lrs(self) -> tuple[float, float]:
        return self.opt_g.param_groups[0]["lr"], self.opt_d.param_groups[0]["lr"]


def init_state(cfg: Config) -> TrainState:
    t = cfg.train
    model = effective_model(cfg.model)
    torch.manual_seed(t.seed)
    gen = torch_generator(t.seed)
    fwd, rev = build_generators(model)
    discs = build_discriminator_bank(model.domains, model.disc_width)
    for net in (fwd, rev, discs):
        init_weights(net, t.init_std, gen)
    opt_g = torch.optim.Adam(list(fwd.parameters()) + list(rev.parameters()),
                             lr=t.lr_generator, betas=(t.beta1, t.beta2))
    opt_d = torch.optim.Adam(discs.parameters(), lr=t.lr_discriminator, betas=(t.beta1, t.beta2))
    state = TrainState(cfg, fwd, rev, discs, opt_g, opt_d, epoch_state(t.seed))
    state.set_epoch(0)
    return state


def _batch(x):
    return x.unsqueeze(0) if x.dim() == 3 else x


def _set_grad(module: nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def discriminator_step(state: TrainState, s, t, fake_t, fake_s) -> float:
    """Update all n+1 discriminators on real images and detached fakes."""
    mode = state.cfg.model.gan_mode
    d_t, d_s = state.discs[0], state.discs[1:]
    _set_grad(state.discs, True)
    state.opt_d.zero_grad(set_to_none=True)
    loss = L.discriminator_loss(discriminate(d_t, t, mode), discriminate(d_t, fake_t.detach(), mode), mode)
    for d, real, fake in zip(d_s, s, fake_s):
        loss = loss + L.discriminator_loss(discriminate(d, real, mode),
                                           discriminate(d, fake.detach(), mode), mode)
    if not torch.isfinite(loss):
        raise FloatingPointError(f"non-finite discriminator loss at step {state.step}")
    loss.backward()
    state.opt_d.step()
    return float(loss.detach())


def generator_terms(state: TrainState, s, t, fake_t, z_s, fake_s, z_t) -> dict[str, torch.Tensor]:
    """The six generator-side terms; disabled (zero-weight) terms are exact zeros."""
    mode = state.cfg.model.gan_mode
    lam1, lam2 = state.cfg.train.lambda1, state.cfg.train.lambda2
    d_t, d_s = state.discs[0], state.discs[1:]
    zero = torch.zeros((), dtype=fake_t.dtype)
    terms = {
        "adv_forward": L.generator_adversarial_loss(discriminate(d_t, fake_t, mode), mode),
        "adv_reverse": sum(L.generator_adversarial_loss(discriminate(d, f, mode), mode)
                           for d, f in zip(d_s, fake_s)),
        "cycle_forward": zero, "cycle_reverse": zero,
        "latent_forward": zero, "latent_reverse": zero,
    }
    if lam1 > 0 or lam2 > 0:
        rec_s, z_fake_t = state.rev(fake_t)
        rec_t, z_fake_s = state.fwd(fake_s)
        if lam1 > 0:
            terms["cycle_forward"] = L.cycle_forward(s, rec_s)
            terms["cycle_reverse"] = L.cycle_reverse(t, rec_t)
        if lam2 > 0:
            terms["latent_forward"] = L.latent_consistency_forward(z_s, z_fake_t)
            terms["latent_reverse"] = L.latent_consistency_reverse(z_t, z_fake_s)
    return terms


def generator_step(state: TrainState, s, t, fake_t, z_s, fake_s, z_t) -> L.LossReport:
    lam1, lam2 = state.cfg.train.lambda1, state.cfg.train.lambda2
    _set_grad(state.discs, False)
    try:
        terms = generator_terms(state, s, t, fake_t, z_s, fake_s, z_t)
        report = L.total_loss(terms, lam1, lam2)  # raises on a non-finite term
        state.opt_g.zero_grad(set_to_none=True)
        L.weighted_total(terms, lam1, lam2).backward()
        state.opt_g.step()
    finally:
        _set_grad(state.discs, True)
    return report


def train_step(state: TrainState, bundle: SampleBundle) -> L.LossReport:
    """One discriminator update followed by one joint update of both generators.

    The returned report holds the generator objective evaluated in this step.
    """
    s = [_batch(x) for x in adapt_sources(state.cfg.model, bundle.sources)]
    t = _batch(bundle.target)
    state.fwd.train()
    state.rev.train()
    fake_t, z_s = state.fwd(s)
    fake_s, z_t = state.rev(t)
    discriminator_step(state, s, t, fake_t, fake_s)
    try:
        report = generator_step(state, s, t, fake_t, z_s, fake_s, z_t)
    except FloatingPointError as exc:
        raise FloatingPointError(f"step {state.step + 1}, epoch {state.epoch}: {exc}") from exc
    state.step += 1
    return report


def _collate(bundles: Sequence[SampleBundle]) -> SampleBundle:
    if len(bundles) == 1:
        return bundles[0]
    n = len(bundles[0].sources)
    return SampleBundle(
        [torch.stack([b.sources[i] for b in bundles]) for i in range(n)],
        torch.stack([b.target for b in bundles]),
        ",".join(b.sample_id for b in bundles),
        ",".join(b.target_id for b in bundles),
    )


def _sampler_state(st: EpochState) -> dict:
    return {
        "source_rng": st.source_rng.bit_generator.state,
        "target_rng": st.target_rng.bit_generator.state,
        "order": st.order, "pos": st.pos,
        "target_order": st.target_order, "target_pos": st.target_pos,
        "epoch": st.epoch,
    }


def _restore_sampler(st: EpochState, d: dict) -> None:
    st.source_rng.bit_generator.state = d["source_rng"]
    st.target_rng.bit_generator.state = d["target_rng"]
    st.order, st.pos = list(d["order"]), d["pos"]
    st.target_order, st.target_pos = list(d["target_order"]), d["target_pos"]
    st.epoch = d["epoch"]


def save_state(state: TrainState, path) -> Path:
    return save_checkpoint(path, state.cfg, state.nets, state.epoch, state.step,
                           {"g": state.opt_g, "d": state.opt_d}, _sampler_state(state.sampler))


def resume_state(cfg: Config, path) -> TrainState:
    """Rebuild a :class:`TrainState` from a training checkpoint written at an epoch boundary."""
    import json

    path = Path(path)
    manifest = read_manifest(path)
    check_compatible(manifest, cfg)
    state = init_state(cfg)
    load_into(path, state.nets)
    optim = torch.load(path / "optim.pt", weights_only=True)
    state.opt_g.load_state_dict(optim["g"])
    state.opt_d.load_state_dict(optim["d"])
    _restore_sampler(state.sampler, json.loads((path / "sampler.json").read_text()))
    state.step = manifest["step"]
    state.set_epoch(manifest["epoch"] + 1)
    return state


def _fmt(x: float) -> str:
    return repr(float(x))


def run_training(cfg: Config, ds: UnpairedMultiModalDataset, out, resume=None,
                 progress: bool = False) -> Path:
    """Train to completion; returns the final checkpoint directory.

    Writes ``losses.csv`` (one row per step) and ``checkpoints/epoch_XXXX``
    every ``checkpoint_every`` epochs plus at the end of training.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t = cfg.train
    state = resume_state(cfg, resume) if resume is not None else init_state(cfg)
    csv_path = out / "losses.csv"
    mode = "a" if resume is not None and csv_path.exists() else "w"
    size = cfg.model.image_size
    last_ckpt = None
    with open(csv_path, mode, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if mode == "w":
            writer.writerow(CSV_COLUMNS)
        done = False
        for epoch in range(state.epoch, t.epochs):
            state.set_epoch(epoch)
            start_epoch(ds, state.sampler)
            while not done:
                bundles = []
                try:
                    for _ in range(t.batch_size):
                        bundles.append(next_batch(ds, state.sampler, size, cfg.data.random_crop))
                except EpochExhausted:
                    pass
                if not bundles:
                    break
                lr_g, lr_d = state.lrs
                r = train_step(state, _collate(bundles))
                writer.writerow([state.step, epoch, *map(_fmt, r.as_tuple()), _fmt(lr_g), _fmt(lr_d)])
                if progress and state.step % 100 == 0:
                    log.info("step %d epoch %d total %.4f", state.step, epoch, r.total)
                done = t.max_steps is not None and state.step >= t.max_steps
            fh.flush()
            last_epoch = epoch == t.epochs - 1 or done
            if last_epoch or (t.checkpoint_every and (epoch + 1) % t.checkpoint_every == 0):
                last_ckpt = save_state(state, out / "checkpoints" / f"epoch_{epoch:04d}")
            if done:
                break
    if last_ckpt is None:
        last_ckpt = save_state(state, out / "checkpoints" / f"epoch_{state.epoch:04d}")
    (out / "final").write_text(str(last_ckpt.relative_to(out)) + "\n")
    return last_ckpt


# ---------------------------------------------------------------------------
# inference


@dataclass
class Translator:
    cfg: Config
    fwd: ForwardGenerator
    rev: ReverseGenerator

    @classmethod
    def from_checkpoint(cls, path) -> "Translator":
        manifest = read_manifest(path)
        cfg = manifest["config"]
        fwd, rev = build_generators(effective_model(cfg.model))
        load_into(path, {"fwd": fwd, "rev": rev})
        fwd.eval()
        rev.eval()
        return cls(cfg, fwd, rev)

    def check_sources(self, names: Sequence[str]) -> None:
        want = self.cfg.model.domains.source_names
        if list(names) != want:
            raise ValueError(f"sources given as {list(names)}, checkpoint expects {want}")

    @torch.no_grad()
    def translate(self, sources: Sequence[torch.Tensor], cycle: bool = False):
        """Returns the translated target, plus its reverse reconstruction when ``cycle``."""
        s = [_batch(x) for x in adapt_sources(self.cfg.model, sources)]
        fake_t, _ = self.fwd(s)
        if not cycle:
            return fake_t[0]
        rec, _ = self.rev(fake_t)
        return fake_t[0], [r[0] for r in rec]


def translate_dataset(tr: Translator, ds: UnpairedMultiModalDataset, ids: Sequence[str],
                      out=None, cycle: bool = False):
    """Translate every id; optionally write ``<out>/<id>.png`` (and reconstructions)."""
    size = tr.cfg.model.image_size
    results = {}
    for sid in ids:
        sources = ds.load_sources(sid, size)
        res = tr.translate(sources, cycle=cycle)
        results[sid] = res
        if out is not None:
            fake = res[0] if cycle else res
            save_image(fake, Path(out) / f"{sid}.png")
            if cycle:
                for name, r in zip(effective_model(tr.cfg.model).domains.source_names, res[1]):
                    save_image(r, Path(out) / "cycle" / name / f"{sid}.png")
    return results


def forward_cycle_error(tr: Translator, ds: UnpairedMultiModalDataset, ids: Sequence[str]) -> float:
    """Mean |g(f(s)) - s| over ``ids``, pooled across modalities, in [-1, 1] units."""
    size = tr.cfg.model.image_size
    errs = []
    for sid in ids:
        s = adapt_sources(tr.cfg.model, ds.load_sources(sid, size))
        _, rec = tr.translate(ds.load_sources(sid, size), cycle=True)
        errs.append(float(L.cycle_forward(s, rec)))
    return sum(errs) / len(errs)


def score_dataset(tr: Translator, ds: UnpairedMultiModalDataset, ids: Sequence[str]):
    """PSNR / SSIM of each translation against its ground truth, on [0, 1] images."""
    from .data import to_unit
    from .metrics import evaluate_pairs

    size = tr.cfg.model.image_size
    preds = translate_dataset(tr, ds, ids)
    return evaluate_pairs(
        (sid, to_unit(preds[sid]).clamp(0, 1), to_unit(ds.load_ground_truth(sid, size)))
        for sid in ids)
