"""Command-line entry point.

Subcommands: gen-data, train, eval, cv, simulate, serve, print-filter.
Every flag can also be set through an SSVEP_-prefixed environment variable
(e.g. SSVEP_SEED for --seed).  Exit codes: 0 success, 2 usage error,
1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import threading
import time

import numpy as np

from . import dsp, eegio, loopnet, mazebot, ssvepnet, synth
from .backend import backend_name


def _env(flag: str, default):
    return os.environ.get("SSVEP_" + flag.upper().replace("-", "_"), default)


def _add(parser: argparse.ArgumentParser, flag: str, *, type=str, default=None,
         help="", **kw):
    raw = _env(flag, None)
    if raw is not None:
        try:
            default = type(raw) if type is not None else raw
        except ValueError:
            parser.error(f"bad value for SSVEP_{flag.upper().replace('-', '_')}: {raw!r}")
    parser.add_argument(f"--{flag}", type=type, default=default, help=help, **kw)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("1", "true", "yes"):
        return True
    if str(text).lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _pipeline_args(p: argparse.ArgumentParser):
    _add(p, "window-seconds", type=float, default=3.0,
         help="stimulus window length in seconds (1, 2, or 3)")
    _add(p, "offset", type=int, default=dsp.DEFAULT_OFFSET,
         help="window stride in samples")
    _add(p, "band-lo", type=float, default=dsp.DEFAULT_BAND[0])
    _add(p, "band-hi", type=float, default=dsp.DEFAULT_BAND[1])
    _add(p, "nfft", type=int, default=dsp.DEFAULT_NFFT)
    _add(p, "fs", type=int, default=256, help="sampling rate in Hz")
    _add(p, "filter-order", type=int, default=4)
    _add(p, "channel", type=str, default="Oz")


def _train_args(p: argparse.ArgumentParser):
    _add(p, "lr", type=float, default=1e-3)
    _add(p, "batch", type=int, default=32)
    _add(p, "epochs", type=int, default=50)
    _add(p, "train-fraction", type=float, default=0.8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssvepmaze",
        description="SSVEP maze-robot pipeline: synth data, CNN training, "
                    "and the closed-loop command service",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic recording file")
    _add(p, "data", type=str, default=None, help="output recording path")
    _add(p, "trials-per-class", type=int, default=150)
    _add(p, "snr-db", type=float, default=0.0,
         help="in-band SNR in dB; 'inf' disables noise")
    _add(p, "trial-seconds", type=float, default=4.0)
    _add(p, "fs", type=int, default=256)
    _add(p, "seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the CNN on a recording")
    _add(p, "data", type=str, default=None)
    _add(p, "model", type=str, default=None, help="output model path")
    _add(p, "history", type=str, default=None, help="optional history CSV path")
    _pipeline_args(p)
    _train_args(p)
    _add(p, "seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a recording's test split")
    _add(p, "data", type=str, default=None)
    _add(p, "model", type=str, default=None)
    _pipeline_args(p)
    _add(p, "train-fraction", type=float, default=0.8)
    _add(p, "seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="k-fold cross-validation on the train split")
    _add(p, "data", type=str, default=None)
    _add(p, "folds", type=int, default=5)
    _add(p, "report", type=str, default=None, help="per-fold CSV output path")
    _pipeline_args(p)
    _train_args(p)
    _add(p, "seed", type=int, default=0)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("simulate", help="headless closed-loop run with a "
                                        "scripted operator")
    _add(p, "maze", type=str, default=None, help="maze file (generated if absent)")
    _add(p, "maze-size", type=int, default=10)
    _add(p, "model", type=str, default=None, help="model file (trained in-process "
                                                  "if absent)")
    _add(p, "trace", type=str, default=None, help="trace output path")
    _add(p, "snr-db", type=float, default=math.inf)
    _add(p, "seed", type=int, default=0)
    _add(p, "time-scale", type=float, default=0.05,
         help="wall-clock stimulus duration = window-seconds * time-scale")
    _pipeline_args(p)
    _add(p, "mask-blocked", type=_bool, default=True)
    _add(p, "step-limit", type=int, default=4000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the live command service + console "
                                     "stream with an operator-driven source")
    _add(p, "maze", type=str, default=None)
    _add(p, "maze-size", type=int, default=10)
    _add(p, "model", type=str, default=None)
    _add(p, "port-robot", type=int, default=loopnet.DEFAULT_ROBOT_PORT)
    _add(p, "port-console", type=int, default=loopnet.DEFAULT_CONSOLE_PORT)
    _add(p, "snr-db", type=float, default=math.inf)
    _add(p, "seed", type=int, default=0)
    _pipeline_args(p)
    _add(p, "mask-blocked", type=_bool, default=True)
    _add(p, "poll-interval", type=float, default=0.25)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("print-filter", help="print band-pass coefficients "
                                            "(17 significant digits)")
    _pipeline_args(p)
    p.set_defaults(func=cmd_print_filter)
    return parser


def _require(args, parser, *names):
    for name in names:
        if getattr(args, name.replace("-", "_"), None) is None:
            parser.error(f"--{name} is required for this subcommand")


def _window_samples(args) -> int:
    n = args.window_seconds * args.fs
    if abs(n - round(n)) > 1e-9:
        raise SystemExit(f"window-seconds * fs must be an integer, got {n}")
    return int(round(n))


def _load_examples(args):
    rec = eegio.read_recording(args.data)
    filt = dsp.design_bandpass(rec.fs_hz, args.band_lo, args.band_hi,
                               args.filter_order)
    spec = dsp.WindowSpec(window_len=int(round(args.window_seconds * rec.fs_hz)),
                          offset=args.offset)
    return dsp.preprocess_recording(
        rec, args.channel, spec, filt, args.nfft,
        (args.band_lo, args.band_hi), eegio.DEFAULT_CLASS_FREQS,
    )


def _net_config(args) -> ssvepnet.CnnConfig:
    n_bins = dsp.band_bins(args.fs, args.nfft, args.band_lo, args.band_hi).size
    return ssvepnet.CnnConfig(input_len=n_bins)


def _train_config(args) -> ssvepnet.TrainConfig:
    return ssvepnet.TrainConfig(
        learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
        seed=args.seed,
    )


def _write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for h in history:
            w.writerow([
                h.epoch, f"{h.train_loss:.6f}", f"{h.train_acc:.6f}",
                "" if h.val_loss is None else f"{h.val_loss:.6f}",
                "" if h.val_acc is None else f"{h.val_acc:.6f}",
            ])


def _print_metrics(label: str, metrics: ssvepnet.Metrics):
    print(f"{label}: accuracy={metrics.accuracy:.4f} "
          f"mean_ce={metrics.mean_ce:.4f}")
    print("confusion (rows=true, cols=predicted):")
    for row in metrics.confusion:
        print("  " + " ".join(f"{v:6d}" for v in row))


# --------------------------------------------------------------------------


def cmd_gen_data(args, parser):
    _require(args, parser, "data")
    template = synth.SynthConfig(
        stim_freq_hz=eegio.DEFAULT_CLASS_FREQS[0], fs_hz=args.fs,
        duration_s=args.trial_seconds, snr_db=args.snr_db, seed=args.seed,
    )
    rec = synth.generate_dataset(
        eegio.DEFAULT_CLASS_FREQS, args.trials_per_class, template
    )
    eegio.write_recording(rec, args.data)
    print(f"wrote {args.data}: {len(rec.trials)} trials, "
          f"{rec.n_samples} samples at {rec.fs_hz} Hz")
    return 0


def cmd_train(args, parser):
    _require(args, parser, "data", "model")
    examples = _load_examples(args)
    split = eegio.split_dataset(examples, args.train_fraction, args.seed)
    net = _net_config(args)
    params, history = ssvepnet.train(split.train, _train_config(args), net,
                                     val_set=split.test)
    ssvepnet.save_model(params, net, args.model)
    if args.history:
        _write_history(args.history, history)
    metrics = ssvepnet.evaluate(params, split.test, net)
    print(f"trained on {len(split.train)} examples "
          f"({backend_name()} kernels), model -> {args.model}")
    _print_metrics("test", metrics)
    return 0


def cmd_eval(args, parser):
    _require(args, parser, "data", "model")
    params, net = ssvepnet.load_model(args.model)
    examples = _load_examples(args)
    n_bins = dsp.band_bins(args.fs, args.nfft, args.band_lo, args.band_hi).size
    if n_bins != net.input_len:
        raise SystemExit(
            f"shape error: model expects input_len={net.input_len} but the "
            f"pipeline produces {n_bins} feature bins"
        )
    split = eegio.split_dataset(examples, args.train_fraction, args.seed)
    _print_metrics("test", ssvepnet.evaluate(params, split.test, net))
    return 0


def cmd_cv(args, parser):
    _require(args, parser, "data")
    examples = _load_examples(args)
    split = eegio.split_dataset(examples, args.train_fraction, args.seed)
    results = ssvepnet.cross_validate(
        split.train, args.folds, _train_config(args), _net_config(args)
    )
    rows = []
    for i, (tr, val) in enumerate(results):
        rows.append((i, tr.accuracy, tr.mean_ce, val.accuracy, val.mean_ce))
        print(f"fold {i}: train_acc={tr.accuracy:.4f} val_acc={val.accuracy:.4f}")
    mean_val = float(np.mean([r[3] for r in rows]))
    print(f"mean val accuracy: {mean_val:.4f}")
    if args.report:
        with open(args.report, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fold", "train_acc", "train_ce", "val_acc", "val_ce"])
            for r in rows:
                w.writerow([r[0]] + [f"{v:.6f}" for v in r[1:]])
    return 0


def _quick_model(args, seed: int):
    """Train a small model on noiseless synthetic data, in-process."""
    template = synth.SynthConfig(
        stim_freq_hz=eegio.DEFAULT_CLASS_FREQS[0], fs_hz=args.fs,
        duration_s=4.0, snr_db=math.inf, seed=seed,
    )
    rec = synth.generate_dataset(eegio.DEFAULT_CLASS_FREQS, 10, template)
    filt = dsp.design_bandpass(args.fs, args.band_lo, args.band_hi,
                               args.filter_order)
    spec = dsp.WindowSpec(window_len=_window_samples(args), offset=args.offset)
    examples = dsp.preprocess_recording(
        rec, "Oz", spec, filt, args.nfft, (args.band_lo, args.band_hi),
        eegio.DEFAULT_CLASS_FREQS,
    )
    net = _net_config(args)
    cfg = ssvepnet.TrainConfig(epochs=20, seed=seed)
    params, _ = ssvepnet.train(examples, cfg, net)
    return params, net


def _load_or_build_maze(args):
    if args.maze:
        with open(args.maze) as fh:
            return mazebot.load_maze(fh.read())
    return mazebot.generate_maze(args.maze_size, args.maze_size, args.seed)


def cmd_simulate(args, parser):
    t0 = time.time()
    maze = _load_or_build_maze(args)
    if args.model:
        params, net = ssvepnet.load_model(args.model)
    else:
        params, net = _quick_model(args, args.seed)
    source = loopnet.SynthSource(snr_db=args.snr_db, fs_hz=args.fs,
                                 seed=args.seed)
    config = loopnet.ServeConfig(
        robot_port=0, console_port=0, fs_hz=args.fs,
        window_seconds=args.window_seconds, n_fft=args.nfft,
        band=(args.band_lo, args.band_hi), mask_blocked=args.mask_blocked,
        time_scale=args.time_scale,
    )
    service = loopnet.CommandService(params, net, source, config)
    service.start()
    try:
        operator = mazebot.make_bfs_operator(maze)

        def intent_hook(pose, open_dirs):
            intent = operator(pose, open_dirs)
            source.select(intent)
            return intent

        client = loopnet.RobotClient(
            maze,
            loopnet.ClientConfig(
                port=service.robot_port,
                poll_interval_s=max(0.01, 0.25 * args.time_scale),
                step_limit=args.step_limit,
            ),
            intent_hook=intent_hook,
        )
        client.run()
    finally:
        service.stop()
    if args.trace:
        loopnet.write_trace(client.trace, args.trace)
    matched = sum(1 for _, cmd, intent in client.commands if cmd == intent)
    total = len(client.commands)
    accuracy = matched / total if total else 1.0
    shortest = mazebot.bfs_shortest_len(maze)
    print(f"junctions: {total}")
    print(f"command accuracy vs operator intent: {accuracy:.4f}")
    print(f"moves: {client.sim.moves} (shortest path {shortest})")
    print(f"finished: {client.sim.finished}")
    print(f"wall time: {time.time() - t0:.1f}s")
    return 0 if client.sim.finished else 1


def cmd_serve(args, parser):
    maze = _load_or_build_maze(args)
    if args.model:
        params, net = ssvepnet.load_model(args.model)
    else:
        print("no --model given; training a quick synthetic model...")
        params, net = _quick_model(args, args.seed)
    source = loopnet.SynthSource(snr_db=args.snr_db, fs_hz=args.fs,
                                 seed=args.seed)
    sim = mazebot.RobotSim(maze)
    config = loopnet.ServeConfig(
        robot_port=args.port_robot, console_port=args.port_console,
        fs_hz=args.fs, window_seconds=args.window_seconds, n_fft=args.nfft,
        band=(args.band_lo, args.band_hi), mask_blocked=args.mask_blocked,
    )
    service = loopnet.CommandService(params, net, source, config,
                                     world=(maze, sim))
    service.start()
    print(f"robot protocol on port {service.robot_port}, "
          f"console stream on port {service.console_port}")
    client = loopnet.RobotClient(
        maze,
        loopnet.ClientConfig(port=service.robot_port,
                             poll_interval_s=args.poll_interval,
                             step_limit=10**6),
        sim=sim,
    )
    robot_thread = threading.Thread(target=_serve_robot_loop,
                                    args=(client,), daemon=True)
    robot_thread.start()
    try:
        while robot_thread.is_alive():
            robot_thread.join(timeout=0.5)
        print("robot finished; service still running (Ctrl-C to stop)")
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        print("\nshutting down")
    finally:
        service.stop()
    return 0


def _serve_robot_loop(client: loopnet.RobotClient):
    try:
        client.run()
    except Exception as exc:  # noqa: BLE001 - report and leave service up
        print(f"robot loop stopped: {exc}", file=sys.stderr)


def cmd_print_filter(args, parser):
    filt = dsp.design_bandpass(args.fs, args.band_lo, args.band_hi,
                               args.filter_order)
    print(dsp.format_sections(filt))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except SystemExit:
        raise
    except KeyboardInterrupt:
        return 0
    except Exception as exc:  # noqa: BLE001 - uniform runtime error exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
