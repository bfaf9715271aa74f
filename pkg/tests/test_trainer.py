import csv
import dataclasses
import hashlib

import pytest
import torch

from in2i.core import ConfigError
from in2i.data import epoch_state, next_batch, scan_dataset, start_epoch
from in2i.toy import make_toy, toy_config
from in2i.trainer import (CSV_COLUMNS, Translator, generator_terms, init_state, lr_at,
                          resume_state, run_training, train_step)


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    make_toy(root, size=32, count=10, seed=0, n_test=4)
    return root


def _cfg(root, **kw):
    cfg = toy_config(root, size=32, base_width=4, **kw)
    m = dataclasses.replace(cfg.model, n_res_extract=1, n_res_encoder=1, n_res_decoder=1,
                            n_res_reverse_decoder=1)
    return dataclasses.replace(cfg, model=m)


def _bundle(cfg):
    ds = scan_dataset(cfg.data.root, cfg.model.domains)
    st = epoch_state(cfg.train.seed)
    start_epoch(ds, st)
    return next_batch(ds, st, cfg.model.image_size)


def _hash(module):
    h = hashlib.sha256()
    for t in module.state_dict().values():
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def test_lr_schedule():
    assert lr_at(0, 2e-4, 200, 100) == 2e-4
    assert lr_at(99, 2e-4, 200, 100) == 2e-4
    assert lr_at(150, 2e-4, 200, 100) == pytest.approx(1e-4)
    assert lr_at(199, 2e-4, 200, 100) == pytest.approx(2e-6)


def test_step_is_bitwise_reproducible(toy):
    cfg = _cfg(toy)
    reports = []
    for _ in range(2):
        state = init_state(cfg)
        reports.append([train_step(state, _bundle(cfg)).as_tuple() for _ in range(2)])
    assert reports[0] == reports[1]


def test_step_updates_every_network(toy):
    cfg = _cfg(toy)
    state = init_state(cfg)
    before = {k: _hash(v) for k, v in state.nets.items()}
    r = train_step(state, _bundle(cfg))
    assert all(_hash(v) != before[k] for k, v in state.nets.items())
    assert state.step == 1
    assert all(torch.isfinite(torch.tensor(r.as_tuple())))
    assert all(p.requires_grad for p in state.discs.parameters())


def test_generator_update_leaves_discriminators(toy):
    cfg = _cfg(toy)
    state = init_state(cfg)
    b = _bundle(cfg)
    s, t = [x[None] for x in b.sources], b.target[None]
    fake_t, z_s = state.fwd(s)
    fake_s, z_t = state.rev(t)
    from in2i.trainer import generator_step

    before = _hash(state.discs)
    generator_step(state, s, t, fake_t, z_s, fake_s, z_t)
    assert _hash(state.discs) == before
    assert all(p.grad is None for p in state.discs.parameters())


def test_zero_weights_give_zero_terms_and_gradients(toy):
    cfg = _cfg(toy, lambda1=0.0, lambda2=0.0)
    state = init_state(cfg)
    b = _bundle(cfg)
    s, t = [x[None] for x in b.sources], b.target[None]
    fake_t, z_s = state.fwd(s)
    fake_s, z_t = state.rev(t)
    terms = generator_terms(state, s, t, fake_t, z_s, fake_s, z_t)
    for k in ("cycle_forward", "cycle_reverse", "latent_forward", "latent_reverse"):
        assert terms[k].item() == 0.0 and not terms[k].requires_grad
    adv = terms["adv_forward"] + terms["adv_reverse"]
    params = list(state.fwd.parameters()) + list(state.rev.parameters())
    state.fwd.zero_grad()
    state.rev.zero_grad()
    (adv + sum(terms[k] for k in terms if not k.startswith("adv"))).backward()
    g_all = [p.grad.clone() for p in params]
    state.fwd.zero_grad()
    state.rev.zero_grad()
    fake_t, _ = state.fwd(s)
    fake_s, _ = state.rev(t)
    sum(generator_terms(state, s, t, fake_t, z_s, fake_s, z_t)[k]
        for k in ("adv_forward", "adv_reverse")).backward()
    for a, p in zip(g_all, params):
        torch.testing.assert_close(a, p.grad, rtol=0, atol=0)


def test_two_epoch_run(toy, tmp_path):
    cfg = _cfg(toy, epochs=2, decay_start_epoch=1)
    ckpt = run_training(cfg, scan_dataset(toy, cfg.model.domains), tmp_path)
    assert sorted(p.name for p in (tmp_path / "checkpoints").iterdir()) == ["epoch_0000", "epoch_0001"]
    assert (ckpt / "manifest.toml").exists()
    assert (tmp_path / "final").read_text().strip() == "checkpoints/epoch_0001"
    rows = list(csv.reader((tmp_path / "losses.csv").open()))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) - 1 == 6 * 2
    assert [int(r[1]) for r in rows[1:]] == [0] * 6 + [1] * 6


def test_max_steps_and_batching(toy, tmp_path):
    cfg = _cfg(toy, epochs=3, decay_start_epoch=1, batch_size=4, max_steps=3)
    run_training(cfg, scan_dataset(toy, cfg.model.domains), tmp_path)
    rows = list(csv.reader((tmp_path / "losses.csv").open()))[1:]
    # 6 train ids at batch 4 -> 2 steps per epoch
    assert [(r[0], r[1]) for r in rows] == [("1", "0"), ("2", "0"), ("3", "1")]


def test_resume_continues(toy, tmp_path):
    cfg = _cfg(toy, epochs=3, decay_start_epoch=1)
    ds = scan_dataset(toy, cfg.model.domains)
    run_training(cfg, ds, tmp_path / "full")
    short = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, max_steps=6))
    first = run_training(short, ds, tmp_path / "part")
    state = resume_state(cfg, first)
    assert (state.epoch, state.step) == (1, 6)
    assert state.lrs[0] == pytest.approx(lr_at(1, 2e-4, 3, 1))
    run_training(cfg, ds, tmp_path / "part", resume=first)
    full = (tmp_path / "full" / "losses.csv").read_text()
    assert (tmp_path / "part" / "losses.csv").read_text() == full


def test_resume_hash_mismatch(toy, tmp_path):
    cfg = _cfg(toy, epochs=1, decay_start_epoch=0)
    ckpt = run_training(cfg, scan_dataset(toy, cfg.model.domains), tmp_path)
    other = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, gan_mode="log"))
    with pytest.raises(ConfigError, match="hash"):
        resume_state(other, ckpt)


def test_translator(toy, tmp_path):
    cfg = _cfg(toy, epochs=1, decay_start_epoch=0)
    ds = scan_dataset(toy, cfg.model.domains)
    tr = Translator.from_checkpoint(run_training(cfg, ds, tmp_path))
    srcs = ds.load_sources(ds.test_ids[0], (32, 32))
    out = tr.translate(srcs)
    assert out.shape == (3, 32, 32) and out.abs().max() <= 1
    fake, rec = tr.translate(srcs, cycle=True)
    torch.testing.assert_close(fake, out)
    assert [r.shape for r in rec] == [(1, 32, 32)] * 2
    with pytest.raises(ValueError, match="expects"):
        tr.check_sources(["edge", "mask"])


def test_concat_mode_trains(toy, tmp_path):
    cfg = _cfg(toy, epochs=1, decay_start_epoch=0, max_steps=2)
    cfg = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, fusion_mode="concat"))
    tr = Translator.from_checkpoint(run_training(cfg, scan_dataset(toy, cfg.model.domains), tmp_path))
    ds = scan_dataset(toy, cfg.model.domains)
    fake, rec = tr.translate(ds.load_sources(ds.test_ids[0], (32, 32)), cycle=True)
    assert fake.shape == (3, 32, 32) and [r.shape for r in rec] == [(2, 32, 32)]
