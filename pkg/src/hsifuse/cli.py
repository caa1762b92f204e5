"""Command line: ingest, select-bands, build, train, eval, sweep, render.

Every command reads one JSON config (``--config``); ``--set key=value``
overrides dotted keys, ``--seed`` sets every seed, ``--out`` the run
directory. Failures exit nonzero with a JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dataset import load_dataset, save_dataset
from .fiber import BandSelection
from .metrics import SweepGrid, evaluate_model, run_sweep, write_sweep_csv
from .model import KINDS
from .pipeline import (TEST_SEED_OFFSET, Layout, build_datasets, chain_tag, plan_split,
                       select_bands, train_config)
from .render import default_palette, plot_sweep, render_map
from .scene import load_scene, save_scene
from .synth import SYNTHETIC, ingest_arrays
from .train import Checkpoint, predict_logits, set_sequential, train

log = logging.getLogger("hsifuse")


class CliError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1))


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(f"{what} not found at {path}")
    return path


def cmd_ingest(cfg: RunConfig, args) -> dict:
    out = cfg.scene_dir
    if args.synthetic:
        scene = SYNTHETIC[args.synthetic](seed=args.scene_seed)
        save_scene(scene, out)
    elif args.npz:
        names = args.classes.split(",") if args.classes else None
        scene = ingest_arrays(Path(args.npz), out, name=args.name, class_names=names)
    else:
        raise CliError("ingest needs --synthetic or --npz")
    return {"scene": str(out), "name": scene.name, "shape": [scene.C, scene.Hs, scene.Ws],
            "classes": list(scene.class_names)}


def cmd_select_bands(cfg: RunConfig, args) -> dict:
    scene = load_scene(cfg.scene_dir)
    sel, report = select_bands(scene, cfg)
    lay = Layout(cfg)
    sel.save(lay.bands())
    _write_json(lay.bands_report(), report)
    return report


def cmd_build(cfg: RunConfig, args) -> dict:
    scene = load_scene(cfg.scene_dir)
    lay = Layout(cfg)
    sel = BandSelection.load(_need(lay.bands(), "band selection (run select-bands)"))
    ds_train, ds_test = build_datasets(scene, sel, cfg)
    tag = chain_tag(cfg.chain)
    save_dataset(ds_train, lay.data(tag, "train"))
    save_dataset(ds_test, lay.data(tag, "test"))
    _, _, cut = plan_split(scene, cfg)
    return {"train": len(ds_train), "test": len(ds_test), "cut": cut, "tag": tag}


def _kinds(args) -> list:
    return [args.model] if args.model else list(KINDS)


def cmd_train(cfg: RunConfig, args) -> dict:
    lay = Layout(cfg)
    tag = chain_tag(cfg.chain)
    ds = load_dataset(_need(lay.data(tag, "train"), "training set (run build)"))
    done = {}
    for kind in _kinds(args):
        ckpt = train(ds, train_config(cfg, kind), progress=True)
        path = lay.model(tag, kind)
        ckpt.save(path)
        with open(path / "loss_trace.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss"])
            w.writerows([i + 1, f"{v:.8f}"] for i, v in enumerate(ckpt.loss_trace))
        done[kind] = {"path": str(path), "final_loss": ckpt.loss_trace[-1]}
    return done


def cmd_eval(cfg: RunConfig, args) -> dict:
    lay = Layout(cfg)
    tag = chain_tag(cfg.chain)
    ds = load_dataset(_need(lay.data(tag, "test"), "test set (run build)"))
    reports = {}
    for kind in _kinds(args):
        path = lay.model(tag, kind)
        if args.model is None and not path.exists():
            continue
        ckpt = Checkpoint.load(_need(path, f"{kind} checkpoint (run train)"))
        reports[kind] = evaluate_model(ckpt, ds)
    if not reports:
        raise CliError("no checkpoints to evaluate")
    out = lay.eval_dir(tag)
    _write_json(out / "report.json", {k: r.to_json() for k, r in reports.items()})
    names = next(iter(reports.values())).class_names
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model"] + [f"iou_{c}" for c in names] + ["gdice"])
        for kind, r in reports.items():
            w.writerow([kind] + ["" if np.isnan(v) else f"{v:.4f}" for v in r.iou] + [f"{r.gdice:.4f}"])
    return {k: round(r.gdice, 4) for k, r in reports.items()}


def cmd_sweep(cfg: RunConfig, args) -> dict:
    from dataclasses import replace

    scene = load_scene(cfg.scene_dir)
    lay = Layout(cfg)
    sel = BandSelection.load(_need(lay.bands(), "band selection (run select-bands)"))
    _, test_tiles, _ = plan_split(scene, cfg)
    kinds = [args.model] if args.model else list(cfg.sweep.models)
    pools = {}
    for flag in cfg.sweep.contrast:
        tag = chain_tag(replace(cfg.chain, contrast=flag))
        pools[flag] = {k: Checkpoint.load(_need(lay.model(tag, k), f"{tag} {k} checkpoint")) for k in kinds}
    grid = SweepGrid(gammas=cfg.sweep.gammas, As=cfg.sweep.As, contrast=cfg.sweep.contrast)
    rows = run_sweep(scene, sel, pools.get(False) or pools[True], grid, test_tiles,
                     seed=cfg.dataset.seed + TEST_SEED_OFFSET, beta=cfg.chain.beta,
                     contrast_models=pools.get(True))
    out = lay.sweep_dir()
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, scene.class_names, out / "sweep.csv")
    plots = plot_sweep(rows, scene.class_names, out)
    return {"rows": len(rows), "csv": str(out / "sweep.csv"), "plots": [str(p) for p in plots]}


def _parse_box(text):
    if text is None:
        return None
    try:
        box = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise CliError(f"--zoom expects x0,y0,x1,y1, got {text!r}") from None
    if len(box) != 4:
        raise CliError(f"--zoom expects x0,y0,x1,y1, got {text!r}")
    return box


def cmd_render(cfg: RunConfig, args) -> dict:
    scene = load_scene(cfg.scene_dir)
    lay = Layout(cfg)
    out = lay.render_dir()
    out.mkdir(parents=True, exist_ok=True)
    palette = default_palette(scene.class_names)
    zoom = _parse_box(args.zoom)
    written = [render_map(scene.labels, palette, out / "truth.png", scale=args.scale)]
    tag = chain_tag(cfg.chain)
    test_dir = lay.data(tag, "test")
    kinds = _kinds(args)
    if test_dir.exists():
        ds = load_dataset(test_dir)
        xs = [s.meta["x"] for s in ds.samples]
        ys = [s.meta["y"] for s in ds.samples]
        box = (min(xs), min(ys), max(xs) + 16, max(ys) + 16)
        if zoom is not None:
            box = (box[0] + zoom[0], box[1] + zoom[1], box[0] + zoom[2], box[1] + zoom[3])
        written.append(render_map(scene.labels, palette, out / "truth_test.png", zoom=box, scale=args.scale))
        for kind in kinds:
            path = lay.model(tag, kind)
            if not path.exists():
                continue
            logits = predict_logits(Checkpoint.load(path), ds)
            mosaic = scene.labels.copy()
            for s, lg in zip(ds.samples, logits):
                mosaic[s.meta["y"]:s.meta["y"] + 16, s.meta["x"]:s.meta["x"] + 16] = lg.argmax(axis=0)
            written.append(render_map(mosaic, palette, out / f"{tag}_{kind}.png", zoom=box, scale=args.scale))
    return {"files": [str(p) for p in written]}


COMMANDS = {
    "ingest": cmd_ingest,
    "select-bands": cmd_select_bands,
    "build": cmd_build,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", help="run directory (overrides config 'out')")
    common.add_argument("--model", choices=KINDS, help="restrict to one model kind")
    common.add_argument("--sequential", action="store_true", help="single-threaded deterministic kernels")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config key, e.g. train.epochs=50")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="hsifuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("ingest", parents=[common], help="store a scene")
    p.add_argument("--synthetic", choices=sorted(SYNTHETIC))
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--npz", help="npz with 'cube' and 'labels' (or 'abundances')")
    p.add_argument("--name")
    p.add_argument("--classes", help="comma-separated class names")
    sub.add_parser("select-bands", parents=[common], help="fit the 6-band selection")
    sub.add_parser("build", parents=[common], help="build train/test pair datasets")
    sub.add_parser("train", parents=[common], help="train one or all model kinds")
    sub.add_parser("eval", parents=[common], help="evaluate checkpoints on the test set")
    sub.add_parser("sweep", parents=[common], help="darkness x haze robustness sweep")
    p = sub.add_parser("render", parents=[common], help="draw label maps as PNG")
    p.add_argument("--zoom", help="crop x0,y0,x1,y1 relative to the test block")
    p.add_argument("--scale", type=int, default=4)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set:
        key, eq, value = item.partition("=")
        if not eq:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}")
        cfg = cfg.override(key, value)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out:
        cfg = cfg.override("out", args.out)
    return cfg


def main(argv=None) -> int:
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        if args.sequential:
            set_sequential(True)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        cfg.save(Path(cfg.out) / f"config.{command}.json")
        result = COMMANDS[command](cfg, args)
    except Exception as err:  # every failure becomes one JSON line
        sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err),
                                     "command": command}) + "\n")
        return 1
    print(json.dumps(result, indent=1, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
