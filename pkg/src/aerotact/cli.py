"""Command-line harness: fly scenarios, compare modes, build datasets.

Every subcommand takes a YAML scenario config; fixed seeds reproduce
byte-identical CSV logs.  Outputs land in one directory per run:
the four CSV tables, a metrics.json summary, and SVG plots.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import asdict

from . import plots
from .forceknn import generate_dataset
from .metrics import read_logs, run_metrics, write_logs
from .recognition import confusion_matrix, generate_texture_dataset
from .runner import MissionError, compare_sensor_modes, run_scenario, texture_flight
from .scenario import ConfigError, Scenario, load_scenario


def _load(args) -> Scenario:
    scn = load_scenario(args.config)
    if args.seed is not None:
        scn = dataclasses.replace(scn, seed=args.seed)
    return scn


def _out_dir(args, scn: Scenario, suffix: str = "") -> str:
    if args.out_dir:
        return args.out_dir
    return os.path.join("runs", f"{scn.name}{suffix}-seed{scn.seed}")


def _image_path_flag(args):
    # dumping frames only makes sense with frames rendered, so the flag
    # implies the full visual pipeline
    if args.image_path or getattr(args, "dump_frames", False):
        return True
    return None


def _frame_sink(out_dir: str):
    import matplotlib.pyplot as plt

    frame_dir = os.path.join(out_dir, "frames")
    os.makedirs(frame_dir, exist_ok=True)

    def sink(idx: int, image) -> None:
        plt.imsave(
            os.path.join(frame_dir, f"frame_{idx:05d}.png"),
            image.pixels, cmap="gray", vmin=0.0, vmax=1.0,
        )

    return sink


def _write_texture_summary(out_dir: str, conf, segments) -> None:
    with open(os.path.join(out_dir, "confusion.csv"), "w", encoding="utf-8", newline="\n") as fh:
        for row in conf.counts:
            fh.write(",".join(str(int(v)) for v in row) + "\n")
    with open(os.path.join(out_dir, "segments.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("truth,pred,correct\n")
        for truth, pred, ok in segments:
            fh.write(f"{truth.name},{pred.name},{int(ok)}\n")
    plots.plot_confusion(conf, os.path.join(out_dir, "confusion.svg"))


def _cmd_run(args) -> int:
    scn = _load(args)
    out_dir = _out_dir(args, scn, f"-{scn.sensor_mode}")
    os.makedirs(out_dir, exist_ok=True)
    sink = _frame_sink(out_dir) if args.dump_frames else None
    logs, metrics = run_scenario(scn, image_path=_image_path_flag(args), frame_sink=sink)
    write_logs(logs, out_dir, metrics)
    plots.plot_force(logs, os.path.join(out_dir, "force.svg"))
    plots.plot_position_error(logs, os.path.join(out_dir, "position_error.svg"))
    if len(logs.texture):
        truth = logs.texture[:, 1].astype(int)
        pred = logs.texture[:, 17].astype(int)
        plots.plot_confusion(confusion_matrix(truth, pred), os.path.join(out_dir, "confusion.svg"))
    print(f"run '{scn.name}' seed {scn.seed} mode {scn.sensor_mode} -> {out_dir}")
    print(json.dumps(asdict(metrics), indent=2, sort_keys=True))
    return 0


def _cmd_compare_modes(args) -> int:
    scn = _load(args)
    out_dir = _out_dir(args, scn, "-modes")
    os.makedirs(out_dir, exist_ok=True)
    results = compare_sensor_modes(scn, image_path=_image_path_flag(args))
    summary = {}
    for mode, (logs, metrics) in results.items():
        write_logs(logs, os.path.join(out_dir, mode), metrics)
        summary[mode] = asdict(metrics)
    plots.plot_mode_comparison(results, os.path.join(out_dir, "comparison.svg"))
    with open(os.path.join(out_dir, "compare.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"compare-modes '{scn.name}' seed {scn.seed} -> {out_dir}")
    for mode, m in summary.items():
        print(
            f"  {mode:13s} force_rmse {m['force_rmse']:.4f} N, "
            f"pos_rmse {m['pos_rmse_mm']:.4f} mm"
        )
    return 0


def _cmd_texture_flight(args) -> int:
    scn = _load(args)
    if not scn.texture_sequence():
        raise ConfigError("texture-flight config needs push phases with textures")
    out_dir = _out_dir(args, scn, "-textures")
    os.makedirs(out_dir, exist_ok=True)
    sink = _frame_sink(out_dir) if args.dump_frames else None
    logs, metrics, conf, segments = texture_flight(
        scn, image_path=_image_path_flag(args), frame_sink=sink
    )
    write_logs(logs, out_dir, metrics)
    plots.plot_force(logs, os.path.join(out_dir, "force.svg"))
    plots.plot_position_error(logs, os.path.join(out_dir, "position_error.svg"))
    _write_texture_summary(out_dir, conf, segments)
    correct = sum(1 for _, _, ok in segments if ok)
    print(f"texture-flight '{scn.name}' seed {scn.seed} -> {out_dir}")
    print(
        f"  per-frame accuracy {conf.average:.4f}, "
        f"segments {correct}/{len(segments)} correct"
    )
    return 0


def _cmd_gen_dataset(args) -> int:
    scn = load_scenario(args.config)
    out_dir = args.out_dir or "datasets"
    os.makedirs(out_dir, exist_ok=True)
    train = generate_dataset(scn.pad, n=scn.knn.n, seed=scn.knn.seed)
    force_path = os.path.join(out_dir, "force_train.csv")
    train.save_csv(force_path)
    tt = scn.texture_training
    desc, labels = generate_texture_dataset(
        scn.pad, per_class=tt.per_class, seed=tt.seed, texture_seeds=tt.texture_seeds
    )
    tex_path = os.path.join(out_dir, "texture_train.csv")
    with open(tex_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["label"] + [f"d{i}" for i in range(desc.shape[1])]) + "\n")
        for lab, row in zip(labels, desc):
            fh.write(str(int(lab)) + "," + ",".join("%.17g" % v for v in row) + "\n")
    print(f"force table   {len(train)} rows -> {force_path}")
    print(f"texture table {len(labels)} rows -> {tex_path}")
    return 0


def _cmd_metrics(args) -> int:
    path = args.log
    run_dir = os.path.dirname(os.path.abspath(path)) if os.path.isfile(path) else path
    logs = read_logs(run_dir)
    metrics = run_metrics(logs)
    print(json.dumps(asdict(metrics), indent=2, sort_keys=True))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aerotact",
        description="Tactile-sensing aerial manipulation sandbox",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, frames: bool = True):
        p.add_argument("config", help="YAML scenario config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out-dir", default=None, help="output directory")
        p.add_argument(
            "--image-path", action="store_true",
            help="route tactile sensing through rendered images and dot re-tracking",
        )
        if frames:
            p.add_argument(
                "--dump-frames", action="store_true",
                help="save every tactile frame as a PNG (implies --image-path)",
            )

    p = sub.add_parser("run", help="fly one scenario and write logs, metrics, plots")
    add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare-modes", help="fly the scenario once per sensor mode")
    add_common(p, frames=False)
    p.set_defaults(func=_cmd_compare_modes)

    p = sub.add_parser("texture-flight", help="fly a texture sequence and summarize recognition")
    add_common(p)
    p.set_defaults(func=_cmd_texture_flight)

    p = sub.add_parser("gen-dataset", help="write the force and texture training tables")
    p.add_argument("config", help="YAML scenario config")
    p.add_argument("--out-dir", default=None, help="output directory")
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("metrics", help="recompute metrics from an emitted run directory")
    p.add_argument("log", help="run directory or any CSV inside it")
    p.set_defaults(func=_cmd_metrics)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MissionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
