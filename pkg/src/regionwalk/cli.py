"""Command line interface.

Subcommands: synth, train, eval, gradcheck, attn, ablate. Exit codes:
0 success, 2 usage or configuration, 3 I/O, 4 file format, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .dataio import load_dataset, save_dataset, synth_dataset, synth_vocab
from .errors import ConfigError, RegionWalkError
from .graph import NORMALIZATIONS
from .retrieval import REPORT_HEADER, evaluate, write_reports_csv
from .train import (
    Checkpoint,
    TrainConfig,
    config_from_mapping,
    dump_config,
    gradcheck_all,
    parse_config_text,
    train,
    write_history_csv,
)

ABLATE_HEADER = (
    "kind,t2v_r1,t2v_r5,t2v_r10,t2v_medr,t2v_meanr,"
    "v2t_r1,v2t_r5,v2t_r10,v2t_medr,v2t_meanr,sum_recalls"
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regionwalk",
        description="Graph-reasoned video-text retrieval on region features.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark directory")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--pairs", type=int, required=True, help="training pairs")
    p.add_argument("--n", type=int, default=36, help="regions per frame")
    p.add_argument("--d", type=int, default=2048, help="region feature dim")
    p.add_argument("--frames", type=int, default=16, help="frames per video")
    p.add_argument("--vocab", type=int, default=512)
    p.add_argument("--topics", type=int, default=None)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train on a data directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable; wins over --config)",
    )

    p = sub.add_parser("eval", help="score retrieval for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", default=None, help="also write the report CSV here")

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", default="rw", choices=NORMALIZATIONS)
    p.add_argument("--adjacency", default="raw", choices=("raw", "softplus"))
    p.add_argument("--tol", type=float, default=1e-5)

    p = sub.add_parser("attn", help="export per-region attention for a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", required=True, help="attention CSV path")
    p.add_argument(
        "--dump-graph",
        default=None,
        metavar="DIR",
        help="also dump one normalized adjacency CSV per frame",
    )

    p = sub.add_parser("ablate", help="compare normalization kinds end to end")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", default=None, help="also write the comparison CSV here")
    return parser


def _load_config(path: str | None, overrides: list[str]) -> TrainConfig:
    mapping: dict[str, str] = {}
    if path is not None:
        mapping.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    return config_from_mapping(mapping)


def _cmd_synth(args) -> int:
    sizes = {
        "train": args.pairs,
        "val": max(2, args.pairs // 4),
        "test": max(2, args.pairs // 2),
    }
    vocab = synth_vocab(args.vocab, args.topics)
    for split, pairs in sizes.items():
        ds = synth_dataset(
            args.seed,
            pairs,
            n=args.n,
            d=args.d,
            vocab_size=args.vocab,
            noise_scale=args.noise,
            split=split,
            frames_per_video=args.frames,
            num_topics=args.topics,
        )
        save_dataset(args.out, ds, vocab)
    print(f"wrote {sizes} to {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args.config, args.overrides)
    train_set = load_dataset(args.data, "train")
    val_set = load_dataset(args.data, "val")
    ckpt, history = train(train_set, val_set, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt.save(out / "checkpoint.vsck")
    write_history_csv(out / "training_log.csv", history)
    (out / "config.effective").write_text(dump_config(config), encoding="utf-8")
    print(
        f"trained {len(history) - 1} epochs; best val {ckpt.best_val_loss!r} "
        f"at epoch {ckpt.epoch}; wrote {out / 'checkpoint.vsck'}"
    )
    return 0


def _cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    dataset = load_dataset(args.data, args.split)
    t2v, v2t = evaluate(ckpt.model(), dataset)
    print(REPORT_HEADER)
    print(t2v.csv_row())
    print(v2t.csv_row())
    if args.out:
        write_reports_csv(args.out, [t2v, v2t])
    return 0


def _cmd_gradcheck(args) -> int:
    result = gradcheck_all(
        seed=args.seed, kind=args.kind, adjacency=args.adjacency, tolerance=args.tol
    )
    print(result)
    if not result.passed:
        print("gradcheck FAILED", file=sys.stderr)
        return 5
    return 0


def _cmd_attn(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    dataset = load_dataset(args.data, args.split)
    evaluate(
        ckpt.model(),
        dataset,
        attention_path=args.out,
        graph_dump_dir=args.dump_graph,
    )
    print(f"wrote attention rows to {args.out}")
    return 0


def _cmd_ablate(args) -> int:
    config = _load_config(args.config, args.overrides)
    train_set = load_dataset(args.data, "train")
    val_set = load_dataset(args.data, "val")
    test_set = load_dataset(args.data, "test")
    lines = [ABLATE_HEADER]
    for kind in ("none", "row", "sym", "rw"):
        from dataclasses import replace

        cfg = replace(config, normalization=kind)
        ckpt, _ = train(train_set, val_set, cfg)
        t2v, v2t = evaluate(ckpt.model(), test_set)
        total = t2v.sum_of_recalls + v2t.sum_of_recalls
        lines.append(
            f"{kind},{t2v.r_at[1]!r},{t2v.r_at[5]!r},{t2v.r_at[10]!r},"
            f"{t2v.med_r!r},{t2v.mean_r!r},"
            f"{v2t.r_at[1]!r},{v2t.r_at[5]!r},{v2t.r_at[10]!r},"
            f"{v2t.med_r!r},{v2t.mean_r!r},{total!r}"
        )
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "attn": _cmd_attn,
    "ablate": _cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.command](args)
    except RegionWalkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
