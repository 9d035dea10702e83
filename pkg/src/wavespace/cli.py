"""Command-line front end.

Subcommands: dataset build/inspect, descriptors, train, eval, bench,
interpolate, sweep, export-wav, serve. The eval report writes JSON and
CSV next to rendered PNG figures; sweep and interpolate write wavetable
WAV files (rows concatenated head-to-tail).
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import evaluation as E
from . import model as M
from . import training as T
from .dataset import (
    DEFAULT_STYLES,
    DatasetSpec,
    descriptor_medians,
    generate_synthetic,
    ingest_waveedit,
    kfold,
    load_dataset,
    save_dataset,
)
from .descriptors import NAMES, DescriptorVector, extract
from .errors import WavespaceError
from .wavetable import preprocess
from .wavio import load_frames, save_samples, save_wavetable


def _sig9(value: float) -> float:
    return float(f"{float(value):.9g}")


def _load_model(path):
    from .model import load_checkpoint

    return load_checkpoint(path).model


def _split(dataset, fold_count, fold_index):
    if fold_count < 2:
        return dataset, []
    return kfold(dataset, fold_count=fold_count, fold_index=fold_index)


def _style_anchor(model, style, medians=None):
    """Decoder input at a style's conditioned prior mean."""
    coords, _ = M.select_prior(model.priors, style)
    if medians is None:
        medians = model.extras.get("descriptor_medians", [0.5, 0.5, 0.5, 0.5, 0.0])
    return M.ParamPoint(style_coords=coords, descriptors=DescriptorVector.from_array(medians))


def _encode_endpoint(model, path, frame_length):
    frame = load_frames(path, frame_length)[0]
    waveform = preprocess(frame, model.config.input_length)
    mu, _ = model.encode(waveform)
    return M.ParamPoint(style_coords=mu, descriptors=extract(waveform))


# ---------------------------------------------------------------------------
# subcommands


def cmd_dataset_build(args):
    if args.source == "synthetic":
        spec = DatasetSpec(
            source="synthetic",
            styles=tuple(args.styles.split(",")),
            waveforms_per_style=args.per_style,
            seed=args.seed,
            fold_count=args.fold_count,
        )
        data = generate_synthetic(spec, target_length=args.length)
    else:
        if not args.wav:
            raise WavespaceError("waveedit source needs at least one --wav file")
        data = ingest_waveedit(
            args.wav,
            frame_length=args.frame_length,
            style_assignment=args.assignment,
            num_styles=args.num_styles,
            seed=args.seed,
            target_length=args.length,
        )
        styles = tuple(f"group{i}" for i in range(max(s.style_label for s in data) + 1))
        spec = DatasetSpec(
            source="waveedit",
            styles=styles,
            waveforms_per_style=max(len(data) // len(styles), 1),
            seed=args.seed,
            fold_count=args.fold_count,
        )
    save_dataset(args.out, data, spec)
    print(f"wrote {len(data)} waveforms ({len(spec.styles)} styles) to {args.out}")
    return 0


def cmd_dataset_inspect(args):
    data, spec = load_dataset(args.path)
    labels = [s.style_label for s in data]
    info = {
        "path": args.path,
        "source": spec.source,
        "styles": list(spec.styles),
        "num_samples": len(data),
        "waveform_length": data[0].waveform.length if data else 0,
        "per_style_counts": {name: labels.count(i) for i, name in enumerate(spec.styles)},
        "descriptor_medians": {n: _sig9(v) for n, v in zip(NAMES, descriptor_medians(data))} if data else {},
    }
    print(json.dumps(info, indent=2))
    return 0


def cmd_descriptors(args):
    waveforms = []
    if args.dataset:
        data, _ = load_dataset(args.dataset)
        waveforms = [s.waveform for s in data]
    for path in args.wav:
        for frame in load_frames(path, args.frame_length):
            waveforms.append(preprocess(frame, args.length))
    if not waveforms:
        raise WavespaceError("no input; pass WAV files or --dataset")
    for wf in waveforms:
        d = extract(wf)
        print(json.dumps({name: _sig9(v) for name, v in zip(NAMES, d.as_array())}))
    return 0


def cmd_train(args):
    data, spec = load_dataset(args.dataset)
    train_set, test_set = _split(data, args.fold_count, args.fold_index)
    arch = M.base_config(len(spec.styles)) if args.variant == "ws" else M.small_config(len(spec.styles))
    model = M.Model(arch, style_names=spec.styles, init_seed=args.seed)
    config = T.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        descriptor_loss=args.descriptor_loss,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
    )
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train-log.jsonl")
    holdout = [s.source_id for s in test_set]
    if args.resume:
        model, log = T.resume(
            args.resume, config, train_set, architecture=arch,
            checkpoint_dir=args.out, log_path=log_path, holdout_ids=holdout,
        )
    else:
        model, log = T.train(
            config, train_set, model,
            checkpoint_dir=args.out, log_path=log_path, holdout_ids=holdout,
        )
    last = log.records[-1].as_dict() if log.records else {}
    print(json.dumps({
        "checkpoint": os.path.join(args.out, "final.wsck"),
        "epochs": config.epochs,
        "train_samples": len(train_set),
        "held_out_samples": len(test_set),
        "final": {k: _sig9(v) if isinstance(v, float) else v for k, v in last.items()},
    }, indent=2))
    return 0


def cmd_eval(args):
    from . import plotting

    model = _load_model(args.checkpoint)
    data, _ = load_dataset(args.dataset)
    _, test_set = _split(data, args.fold_count, args.fold_index)
    if not test_set:
        test_set = data
    report = E.evaluate(model, test_set)
    os.makedirs(args.out, exist_ok=True)

    report_path = os.path.join(args.out, "report.json")
    with open(report_path, "w") as fh:
        json.dump(report.as_dict(), fh, indent=2)

    csv_path = os.path.join(args.out, "metrics.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["style", "waveform_mae", "spectral_mse", "count",
                         "assignment_accuracy", "feedback_assignment_accuracy"])
        for style, row in sorted(report.per_style.items()):
            writer.writerow([style] + [_sig9(row[k]) if k != "count" else int(row[k]) for k in (
                "waveform_mae", "spectral_mse", "count", "assignment_accuracy", "feedback_assignment_accuracy")])

    x, x_hat, labels, _, mu = E.reconstruct_batch(model, test_set)
    figures = [
        plotting.plot_reconstructions(
            x, x_hat, os.path.join(args.out, "reconstructions.png"),
            labels=labels, style_names=model.style_names),
        plotting.plot_latent_subspaces(
            mu, labels, model.priors, os.path.join(args.out, "latent.png"),
            style_names=model.style_names),
        plotting.plot_descriptor_profile(
            report.descriptor_mae, os.path.join(args.out, "descriptor_mae.png"), names=NAMES),
    ]
    if args.log:
        figures.append(plotting.plot_training_curves(T.TrainLog.read(args.log), os.path.join(args.out, "curves.png")))
    print(json.dumps({"report": report_path, "csv": csv_path, "figures": figures, **report.as_dict()}, indent=2))
    return 0


def cmd_bench(args):
    model = _load_model(args.checkpoint)
    report = E.bench_rtf(
        model, buffer_length=args.buffer, sample_rate=args.rate, iterations=args.iterations,
    )
    payload = report.as_dict()
    payload["flops"] = E.count_flops(model.config).as_dict()
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
    print(json.dumps(payload, indent=2))
    return 0


def cmd_interpolate(args):
    model = _load_model(args.checkpoint)
    if args.wav_a or args.wav_b:
        if not (args.wav_a and args.wav_b):
            raise WavespaceError("need both --wav-a and --wav-b")
        frame_length = args.frame_length or model.config.input_length
        a = _encode_endpoint(model, args.wav_a, frame_length)
        b = _encode_endpoint(model, args.wav_b, frame_length)
    else:
        a = _style_anchor(model, args.style_a)
        b = _style_anchor(model, args.style_b)
    table = E.interpolate_wavetable(model, a, b, args.rows)
    save_wavetable(args.out, table, sample_rate=args.rate)
    if args.fig:
        from . import plotting

        plotting.plot_wavetable(table, args.fig, title=f"interpolation, {args.rows} rows")
    print(f"wrote {table.num_rows} x {table.length} wavetable to {args.out}")
    return 0


def cmd_sweep(args):
    model = _load_model(args.checkpoint)
    coords = None
    if args.style is not None:
        coords, _ = M.select_prior(model.priors, args.style)
    table = E.descriptor_sweep(model, args.descriptor, lo=args.lo, hi=args.hi, steps=args.steps, style_coords=coords)
    save_wavetable(args.out, table, sample_rate=args.rate)
    if args.fig:
        from . import plotting

        plotting.plot_wavetable(table, args.fig, title=f"{args.descriptor} sweep, {args.steps} steps")
    print(f"wrote {table.num_rows} x {table.length} wavetable to {args.out}")
    return 0


def cmd_export_wav(args):
    model = _load_model(args.checkpoint)
    point = _style_anchor(model, args.style)
    desc = point.descriptors.as_array().copy()
    for item in args.set or []:
        name, _, value = item.partition("=")
        if name not in NAMES or not value:
            raise WavespaceError(f"--set wants name=value with name in {list(NAMES)}, got {item!r}")
        desc[NAMES.index(name)] = float(value)
    coords = point.style_coords.copy()
    if args.x is not None:
        coords[2 * args.style] = args.x
    if args.y is not None:
        coords[2 * args.style + 1] = args.y
    waveform = model.decode(coords, desc)
    save_samples(args.out, waveform.samples, sample_rate=args.rate)
    print(f"wrote {waveform.length}-sample cycle to {args.out}")
    return 0


def cmd_serve(args):
    import asyncio

    from .service import serve

    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise WavespaceError(f"--bind wants addr:port, got {args.bind!r}")
    model = _load_model(args.checkpoint)
    print(f"serving {model.config.variant} on ws://{host}:{port} (decode cap {args.max_exec_hz} Hz)")
    try:
        asyncio.run(serve(model, host=host, port=int(port), max_exec_hz=args.max_exec_hz))
    except KeyboardInterrupt:
        pass
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavespace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="build or inspect dataset caches")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    build = ds_sub.add_parser("build", help="generate or ingest a dataset")
    build.add_argument("--out", required=True)
    build.add_argument("--source", choices=("synthetic", "waveedit"), default="synthetic")
    build.add_argument("--styles", default=",".join(DEFAULT_STYLES))
    build.add_argument("--per-style", type=int, default=128)
    build.add_argument("--seed", type=int, default=0)
    build.add_argument("--length", type=int, default=1024)
    build.add_argument("--fold-count", type=int, default=5)
    build.add_argument("--wav", nargs="*", default=[])
    build.add_argument("--frame-length", type=int, default=256)
    build.add_argument("--assignment", choices=("random", "directory"), default="random")
    build.add_argument("--num-styles", type=int, default=2)
    build.set_defaults(func=cmd_dataset_build)
    inspect = ds_sub.add_parser("inspect", help="summarize a dataset cache")
    inspect.add_argument("path")
    inspect.set_defaults(func=cmd_dataset_inspect)

    desc = sub.add_parser("descriptors", help="one JSON object of descriptor values per waveform")
    desc.add_argument("wav", nargs="*", default=[])
    desc.add_argument("--dataset")
    desc.add_argument("--frame-length", type=int, default=256)
    desc.add_argument("--length", type=int, default=1024)
    desc.set_defaults(func=cmd_descriptors)

    tr = sub.add_parser("train", help="train a model on a dataset cache")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--variant", choices=("ws-small", "ws"), default="ws-small")
    defaults = T.TrainConfig()
    tr.add_argument("--epochs", type=int, default=defaults.epochs)
    tr.add_argument("--batch-size", type=int, default=defaults.batch_size)
    tr.add_argument("--lr", type=float, default=defaults.learning_rate)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--fold-count", type=int, default=5)
    tr.add_argument("--fold-index", type=int, default=0)
    tr.add_argument("--descriptor-loss", action="store_true")
    tr.add_argument("--checkpoint-every", type=int, default=0)
    tr.add_argument("--resume", help="continue from this checkpoint")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="metrics report with figures on the held-out fold")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--fold-count", type=int, default=5)
    ev.add_argument("--fold-index", type=int, default=0)
    ev.add_argument("--log", help="training log for the curves figure")
    ev.set_defaults(func=cmd_eval)

    be = sub.add_parser("bench", help="decode latency / real-time factor")
    be.add_argument("--checkpoint", required=True)
    be.add_argument("--buffer", type=int, default=1024)
    be.add_argument("--rate", type=int, default=48000)
    be.add_argument("--iterations", type=int, default=100)
    be.add_argument("--out")
    be.set_defaults(func=cmd_bench)

    it = sub.add_parser("interpolate", help="wavetable morphing between two points")
    it.add_argument("--checkpoint", required=True)
    it.add_argument("--out", required=True)
    it.add_argument("--rows", type=int, default=16)
    it.add_argument("--style-a", type=int, default=0)
    it.add_argument("--style-b", type=int, default=1)
    it.add_argument("--wav-a")
    it.add_argument("--wav-b")
    it.add_argument("--frame-length", type=int)
    it.add_argument("--rate", type=int, default=48000)
    it.add_argument("--fig")
    it.set_defaults(func=cmd_interpolate)

    sw = sub.add_parser("sweep", help="wavetable stepping one descriptor")
    sw.add_argument("--checkpoint", required=True)
    sw.add_argument("--descriptor", required=True, choices=NAMES)
    sw.add_argument("--out", required=True)
    sw.add_argument("--steps", type=int, default=5)
    sw.add_argument("--lo", type=float)
    sw.add_argument("--hi", type=float)
    sw.add_argument("--style", type=int)
    sw.add_argument("--rate", type=int, default=48000)
    sw.add_argument("--fig")
    sw.set_defaults(func=cmd_sweep)

    ex = sub.add_parser("export-wav", help="decode one point to a single-cycle WAV")
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--style", type=int, default=0)
    ex.add_argument("--x", type=float)
    ex.add_argument("--y", type=float)
    ex.add_argument("--set", action="append", metavar="NAME=VALUE")
    ex.add_argument("--rate", type=int, default=48000)
    ex.set_defaults(func=cmd_export_wav)

    sv = sub.add_parser("serve", help="websocket control endpoint")
    sv.add_argument("--checkpoint", required=True)
    sv.add_argument("--bind", default="127.0.0.1:8765")
    sv.add_argument("--max-exec-hz", type=float, default=30.0)
    sv.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WavespaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
