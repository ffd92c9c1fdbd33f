"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure during training.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import TrainConfig
from .errors import ConfigError, DataError, NumericError


def _parse_int_list(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v != ""]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plifnet",
                                     description="Desk-scale spiking-network trainer "
                                                 "with learnable membrane time constants")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a network from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, required=True)
    p_train.add_argument("--protocol", choices=["A", "B"], required=True)
    p_train.add_argument("--device-threads", type=int, required=True,
                         help="worker thread budget (execution is deterministic "
                              "and single-threaded over batches)")
    p_train.add_argument("--resume", default=None, help="checkpoint to resume from")
    p_train.add_argument("--out", default=None, help="override output directory")
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--network", default=None, help="override structure string")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the test set")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", required=True)

    p_trace = sub.add_parser("trace", help="dump a single-neuron membrane trace")
    p_trace.add_argument("--mode", choices=["constant", "impulses"], required=True)
    p_trace.add_argument("--tau", type=float, required=True)
    p_trace.add_argument("--w", type=float, default=1.0)
    p_trace.add_argument("--i", dest="i_const", type=float, default=1.0)
    p_trace.add_argument("--spike-times", default="",
                         help="comma-separated impulse times (impulses mode)")
    p_trace.add_argument("--duration", type=float, required=True)
    p_trace.add_argument("--dt", type=float, required=True)
    p_trace.add_argument("--analytic", action="store_true",
                         help="use the closed form (constant mode only)")
    p_trace.add_argument("--out", required=True)

    p_frames = sub.add_parser("frames", help="convert an event CSV to a frame cache")
    p_frames.add_argument("--events", required=True)
    p_frames.add_argument("--width", type=int, required=True)
    p_frames.add_argument("--height", type=int, required=True)
    p_frames.add_argument("--timesteps", type=int, required=True)
    p_frames.add_argument("--out", required=True)

    p_maps = sub.add_parser("maps", help="export firing-rate maps from a checkpoint")
    p_maps.add_argument("--config", required=True)
    p_maps.add_argument("--checkpoint", required=True)
    p_maps.add_argument("--layer", type=int, required=True)
    p_maps.add_argument("--channels", required=True, help="comma-separated channel list")
    p_maps.add_argument("--samples", default="0", help="comma-separated test-sample indices")
    p_maps.add_argument("--ts", type=int, default=None, help="cumulative window T_s")
    p_maps.add_argument("--out", required=True)

    p_cmp = sub.add_parser("compare", help="compare completed runs")
    p_cmp.add_argument("--runs", nargs="+", required=True)
    p_cmp.add_argument("--out", default=None)
    return parser


def cmd_train(args) -> int:
    overrides = {"seed": args.seed, "protocol": args.protocol,
                 "device_threads": args.device_threads}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.network is not None:
        overrides["network"] = args.network
    config = TrainConfig.from_yaml(args.config, overrides)
    from .trainer import Trainer
    summary = Trainer(config, resume=args.resume).train()
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    config = TrainConfig.from_yaml(args.config)
    from .trainer import evaluate_checkpoint
    print(json.dumps(evaluate_checkpoint(config, args.checkpoint), sort_keys=True))
    return 0


def cmd_trace(args) -> int:
    from .tools import trace_neuron, write_trace_csv
    spike_times = [float(v) for v in args.spike_times.split(",") if v != ""]
    if args.analytic and args.mode != "constant":
        raise ConfigError("--analytic is only available in constant mode")
    times, v = trace_neuron(args.mode, args.tau, args.w, args.duration, args.dt,
                            i_const=args.i_const, spike_times=spike_times,
                            analytic=args.analytic)
    write_trace_csv(args.out, times, v)
    print(f"wrote {len(times)} samples to {args.out}")
    return 0


def cmd_frames(args) -> int:
    from .data import integrate_frames, parse_events_csv, write_frame_cache
    ev = parse_events_csv(args.events, args.width, args.height)
    frames = integrate_frames(ev, args.timesteps)
    write_frame_cache(args.out, frames)
    print(f"integrated {len(ev)} events into {frames.shape} frames at {args.out}")
    return 0


def cmd_maps(args) -> int:
    from .tools import export_firing_maps
    config = TrainConfig.from_yaml(args.config)
    written = export_firing_maps(config, args.checkpoint, args.out,
                                 layer_index=args.layer,
                                 channels=_parse_int_list(args.channels),
                                 t_s=args.ts,
                                 sample_indices=_parse_int_list(args.samples))
    print(f"wrote {len(written)} maps to {args.out}")
    return 0


def cmd_compare(args) -> int:
    from .tools import compare_runs
    report = compare_runs(args.runs, args.out)
    print(json.dumps({k: report[k] for k in report
                      if k in ("runs", "epochs", "tau_gap_start", "tau_gap_end",
                               "tau_gathered")}, sort_keys=True))
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "trace": cmd_trace,
    "frames": cmd_frames,
    "maps": cmd_maps,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
