"""Command line entry point: ``in2i {train,translate,evaluate,ablate,fuse,make-toy}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import tomli_w

from .core import Config, ConfigError, dumps_config, load_config
from .data import DataError, IMAGE_EXTS, load_image, save_image, scan_dataset, to_unit

log = logging.getLogger("in2i")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _write_resolved(out: Path, cfg: Config | None = None, args: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if cfg is not None:
        text = dumps_config(cfg)
    else:
        text = tomli_w.dumps({"command": {k: v for k, v in args.items() if v is not None}})
    (out / "resolved_config.toml").write_text(text)
    log.info("resolved config:\n%s", text)


def _args_dict(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k == "func":
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) for x in v]
        out[k] = v
    return out


def _train_config(path, data, seed, **overrides) -> Config:
    cfg = load_config(path)
    train = dataclasses.replace(cfg.train, seed=seed, **overrides)
    root = str(data) if data is not None else cfg.data.root
    if root is None:
        raise ConfigError("no dataset given: pass --data or set [data] root")
    from .core import validate_config

    model, train = validate_config(cfg.model, train)
    return Config(model, train, dataclasses.replace(cfg.data, root=root))


def _scan(cfg: Config):
    return scan_dataset(cfg.data.root, cfg.model.domains, cfg.data.n_test, cfg.train.seed)


def cmd_train(args) -> int:
    from .trainer import run_training

    cfg = _train_config(args.config, args.data, args.seed)
    _write_resolved(args.out, cfg)
    ckpt = run_training(cfg, _scan(cfg), args.out, resume=args.resume, progress=True)
    print(ckpt)
    return 0


def cmd_ablate(args) -> int:
    from .trainer import ABLATION_PRESETS, run_training

    for name in args.variants:
        cfg = _train_config(args.config, args.data, args.seed, **ABLATION_PRESETS[name])
        out = args.out / name.replace("+", "_")
        _write_resolved(out, cfg)
        print(run_training(cfg, _scan(cfg), out, progress=True))
    return 0


def _parse_source(text: str) -> tuple[str, Path]:
    if "=" not in text:
        raise ConfigError(f"--source expects name=path, got {text!r}")
    name, path = text.split("=", 1)
    return name, Path(path)


def cmd_translate(args) -> int:
    from .trainer import Translator, translate_dataset

    tr = Translator.from_checkpoint(args.checkpoint)
    _write_resolved(args.out, args=_args_dict(args))
    size = tr.cfg.model.image_size
    if args.data is not None:
        ds = scan_dataset(args.data, tr.cfg.model.domains, seed=tr.cfg.train.seed)
        ids = ds.test_ids if args.split == "test" else ds.train_ids
        translate_dataset(tr, ds, ids, args.out, cycle=args.cycle)
        return 0
    if not args.source:
        raise ConfigError("give --source name=path for every modality, or --data")
    pairs = [_parse_source(s) for s in args.source]
    tr.check_sources([n for n, _ in pairs])
    sources = [load_image(p, m.channels, size)
               for (_, p), m in zip(pairs, tr.cfg.model.domains.sources)]
    stem = pairs[0][1].stem
    res = tr.translate(sources, cycle=args.cycle)
    if args.cycle:
        fake, rec = res
        from .baselines import effective_model

        for name, r in zip(effective_model(tr.cfg.model).domains.source_names, rec):
            save_image(r, args.out / "cycle" / name / f"{stem}.png")
    else:
        fake = res
    save_image(fake, args.out / f"{stem}.png")
    return 0


def _image_files(d: Path) -> dict[str, Path]:
    if not d.is_dir():
        raise DataError(f"{d} is not a directory")
    return {p.name: p for p in sorted(d.iterdir()) if p.suffix.lower() in IMAGE_EXTS}


def cmd_evaluate(args) -> int:
    from .metrics import evaluate_pairs, markdown_table, write_report

    pred, gt = _image_files(args.pred_dir), _image_files(args.gt_dir)
    if not pred and not gt:
        raise DataError("no images found in either directory")
    if set(pred) != set(gt):
        diff = sorted(set(pred) ^ set(gt))
        raise DataError(f"prediction / ground-truth file sets differ: {', '.join(diff)}")

    def triples():
        for name in sorted(pred):
            p = load_image(pred[name], args.channels)
            g = load_image(gt[name], args.channels)
            if p.shape != g.shape:
                raise DataError(f"{name}: prediction {tuple(p.shape)} vs ground truth {tuple(g.shape)}")
            yield name, to_unit(p), to_unit(g)

    report = Path(args.report)
    _write_resolved(report.parent, args=_args_dict(args))
    summary = write_report(evaluate_pairs(triples()), report, label=args.label)
    print(markdown_table([(args.label, summary)]), end="")
    return 0


def cmd_fuse(args) -> int:
    from .baselines import wavelet_fuse

    imgs = [load_image(p, 1) for p in args.inputs]
    fused = wavelet_fuse(imgs, level=args.level, mode=args.boundary)
    first = Path(args.inputs[0])
    out_dir = args.out if args.out is not None else first.parent
    target = out_dir / f"{first.stem}_db4fused.png"
    _write_resolved(out_dir, args=_args_dict(args))
    save_image(fused, target)
    print(target)
    return 0


def cmd_make_toy(args) -> int:
    from .toy import make_toy

    _write_resolved(args.out, args=_args_dict(args))
    make_toy(args.out, args.size, args.count, args.seed, args.test_count)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="in2i", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", type=Path, required=True)
    t.add_argument("--data", type=Path)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--resume", type=Path)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", help="train the loss ablation variants")
    a.add_argument("--config", type=Path, required=True)
    a.add_argument("--data", type=Path)
    a.add_argument("--out", type=Path, required=True)
    a.add_argument("--seed", type=int, required=True)
    a.add_argument("--variants", nargs="+", default=["adv", "adv+latent", "full"],
                   choices=["adv", "adv+latent", "full"])
    a.set_defaults(func=cmd_ablate)

    tr = sub.add_parser("translate", help="run a trained forward generator")
    tr.add_argument("--checkpoint", type=Path, required=True)
    tr.add_argument("--source", action="append", metavar="NAME=PATH")
    tr.add_argument("--data", type=Path)
    tr.add_argument("--split", choices=["train", "test"], default="test")
    tr.add_argument("--out", type=Path, required=True)
    tr.add_argument("--cycle", action="store_true", help="also write reverse reconstructions")
    tr.set_defaults(func=cmd_translate)

    e = sub.add_parser("evaluate", help="PSNR / SSIM against ground truth")
    e.add_argument("--pred-dir", type=Path, required=True)
    e.add_argument("--gt-dir", type=Path, required=True)
    e.add_argument("--report", type=Path, required=True, help="output prefix for .csv and .md")
    e.add_argument("--channels", type=int, default=3)
    e.add_argument("--label", default="prediction")
    e.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("fuse", help="db4 wavelet fusion of single-channel images")
    f.add_argument("inputs", nargs="+", type=Path)
    f.add_argument("--out", type=Path)
    f.add_argument("--level", type=int, default=2)
    f.add_argument("--boundary", default="symmetric")
    f.set_defaults(func=cmd_fuse)

    m = sub.add_parser("make-toy", help="write the synthetic toy dataset")
    m.add_argument("--out", type=Path, required=True)
    m.add_argument("--size", type=int, default=32)
    m.add_argument("--count", type=int, default=64)
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--test-count", type=int)
    m.set_defaults(func=cmd_make_toy)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
