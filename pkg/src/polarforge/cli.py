"""Command-line entry point: construct, evolve, simulate, analyze, chart, replay.

Every output file is paired with ``<output>.manifest.json`` holding the
resolved parameters and seed; ``polarforge replay`` re-runs a manifest and
reproduces the outputs byte for byte.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .analysis import chart_to_csv, chart_to_pgm, frozen_channel_chart, reliability_inversions, weight_enumerator_bruteforce
from .channel import CHANNELS, ChannelConfig
from .construct import bhattacharyya_bec, construct_bhattacharyya, construct_rm, design_snr_to_epsilon
from .core import CRC_PRESETS, AVector, CapacityError, CodeSpec
from .decoder import DECODERS, DecoderConfig
from .genalg import GenAlgConfig, run_genalg
from .sim import StoppingRule, default_workers, points_to_csv, run_sweep

log = logging.getLogger("polarforge")

SEED_ENV = "POLARFORGE_SEED"
OUTPUT_KEYS = ("output", "history", "csv")
INPUT_KEYS = ("avector",)
CRC_CHOICES = ("crc4", "crc8", "crc16", "crc24")


class UsageError(Exception):
    pass


def _usage(fn, *args, **kw):
    """Build a config object, turning validation failures into usage errors."""
    try:
        return fn(*args, **kw)
    except CapacityError:
        raise
    except ValueError as e:
        raise UsageError(str(e)) from None


# --------------------------------------------------------------------------- parser


def _add_code(p, with_n=True):
    if with_n:
        p.add_argument("-N", type=int, required=True, help="code length (power of two)")
        p.add_argument("-k", type=int, required=True, help="payload bits")
    p.add_argument("--crc", choices=CRC_CHOICES, help="append a CRC to the payload")


def _add_run(p):
    p.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV}, else random)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: available CPUs)")
    p.add_argument("--min-errors", type=int, default=100, help="stop after this many block errors")
    p.add_argument("--max-frames", type=int, default=1_000_000, help="stop after this many frames")


def _add_decoder(p, multi):
    nargs = "+" if multi else None
    p.add_argument("--decoder", choices=DECODERS, default="sc")
    p.add_argument("--list-size", type=int, nargs=nargs, default=[8] if multi else 8)
    p.add_argument("--bp-iters", type=int, nargs=nargs, default=[200] if multi else 200)
    p.add_argument("--bp-min-sum", action="store_true", help="scaled min-sum check nodes in BP")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--config", help="key=value file; command-line flags take precedence")

    parser = argparse.ArgumentParser(prog="polarforge", description="Polar code construction and simulation.")
    parser.add_argument("--version", action="version", version=f"polarforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", parents=[common], help="build an A-vector")
    _add_code(p)
    p.add_argument("--method", choices=("bhattacharyya", "rm"), default="bhattacharyya")
    p.add_argument("--design-snr", type=float, help="design Eb/N0 in dB")
    p.add_argument("--design-epsilon", type=float, help="design erasure probability")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("evolve", parents=[common], help="genetic search for a decoder-tailored A-vector")
    _add_code(p)
    p.add_argument("--channel", choices=CHANNELS, default="awgn")
    p.add_argument("--snr-db", type=float, help="design Eb/N0 of the search (awgn, rayleigh)")
    p.add_argument("--epsilon", type=float, help="erasure probability of the search (bec)")
    _add_decoder(p, multi=False)
    p.add_argument("--generations", type=int, default=40)
    p.add_argument("-T", type=int, default=5, help="survivors per generation")
    p.add_argument("--metric", choices=("ber", "bler"), default="ber")
    p.add_argument("--reeval", action="store_true", help="re-simulate elites on fresh noise every generation")
    p.add_argument("--no-rm", action="store_true", help="leave the RM construction out of the initial population")
    _add_run(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--history", help="history CSV (default: <output>.history.csv)")

    p = sub.add_parser("simulate", parents=[common], help="error-rate sweep of an A-vector")
    p.add_argument("--avector", required=True)
    _add_code(p, with_n=False)
    p.add_argument("--channel", choices=CHANNELS, default="awgn")
    p.add_argument("--snr-db", type=float, nargs="+")
    p.add_argument("--epsilon", type=float, nargs="+")
    _add_decoder(p, multi=True)
    p.add_argument("--all-zero", action="store_true", help="transmit the all-zero codeword only")
    _add_run(p)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("analyze", parents=[common], help="exact weight spectrum")
    p.add_argument("--avector", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("chart", parents=[common], help="frozen-channel chart as PGM (and CSV)")
    p.add_argument("--avector", required=True)
    _add_code(p, with_n=False)
    p.add_argument("--design-snr", type=float)
    p.add_argument("--design-epsilon", type=float)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("-o", "--output", required=True, help="PGM path")
    p.add_argument("--csv", help="also write the chart as 0/1 CSV")

    p = sub.add_parser("replay", help="re-run a manifest")
    p.add_argument("manifest")
    p.add_argument("--outdir", help="write outputs here instead of their recorded paths")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _config_tokens(sub: argparse.ArgumentParser, path: str) -> list:
    tokens = []
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        val = val.strip("'\"")
        opt = key.replace("_", "-")
        opt = f"-{opt}" if len(opt) == 1 else f"--{opt}"
        action = sub._option_string_actions.get(opt)
        if action is None or opt in ("--config",):
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        if action.nargs == 0:
            if val.lower() in ("1", "true", "yes", "on"):
                tokens.append(opt)
            elif val.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"{path}:{lineno}: {key} expects true or false")
        elif action.nargs == "+":
            tokens += [opt, *val.replace(",", " ").split()]
        else:
            tokens += [opt, val]
    return tokens


def parse(argv, parser=None) -> argparse.Namespace:
    parser = parser or build_parser()
    argv = list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and argv and argv[0] in COMMANDS:
        try:
            tokens = _config_tokens(_subparser(parser, argv[0]), known.config)
        except OSError as e:
            raise UsageError(f"cannot read config: {e}") from None
        argv = argv[:1] + tokens + argv[1:]
    return parser.parse_args(argv)


# --------------------------------------------------------------------------- helpers


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return secrets.randbits(63)


def _crc(name):
    return CRC_PRESETS[name] if name else None


def _decoder(args, list_size=None, bp_iters=None) -> DecoderConfig:
    return _usage(
        DecoderConfig,
        args.decoder,
        list_size=args.list_size if list_size is None else list_size,
        bp_iters=args.bp_iters if bp_iters is None else bp_iters,
        bp_min_sum=args.bp_min_sum,
    )


def _spec_for(a: AVector, crc_name) -> CodeSpec:
    crc = _crc(crc_name)
    width = crc.width if crc else 0
    return _usage(CodeSpec.from_length, a.N, a.ones - width, crc)


def _write(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        with open(path, "w", newline="") as f:
            f.write(data)


def _params(args) -> dict:
    skip = {"verbose", "config"}
    out = {}
    for k, v in vars(args).items():
        if k in skip:
            continue
        if k in OUTPUT_KEYS + INPUT_KEYS and v is not None:
            v = str(Path(v).resolve())
        out[k] = v
    return out


def _manifest(args, started, outputs, results=None) -> None:
    params = _params(args)
    doc = {
        "tool": "polarforge",
        "version": __version__,
        "command": args.command,
        "params": params,
        "seed": params.get("seed"),
        "inputs": [params[k] for k in INPUT_KEYS if params.get(k)],
        "outputs": [str(Path(o).resolve()) for o in outputs],
        "started": started,
        "finished": _now(),
    }
    if results:
        doc["results"] = results
    _write(f"{outputs[0]}.manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# --------------------------------------------------------------------------- commands


def cmd_construct(args) -> int:
    started = _now()
    spec = _usage(CodeSpec.from_length, args.N, args.k, _crc(args.crc))
    if args.method == "rm":
        a = construct_rm(spec)
    else:
        if (args.design_snr is None) == (args.design_epsilon is None):
            raise UsageError("bhattacharyya needs exactly one of --design-snr and --design-epsilon")
        a = _usage(construct_bhattacharyya, spec, design_snr_db=args.design_snr, epsilon=args.design_epsilon)
    a.save(args.output)
    _manifest(args, started, [args.output], {"avector_hex": a.to_hex()})
    print(f"{args.output}: N={a.N} ones={a.ones} positions={a.positions()}")
    return 0


def cmd_evolve(args) -> int:
    started = _now()
    args.seed = _resolve_seed(args)
    if args.workers is None:
        args.workers = default_workers()
    if args.history is None:
        args.history = f"{args.output}.history.csv"
    spec = _usage(CodeSpec.from_length, args.N, args.k, _crc(args.crc))
    param = args.epsilon if args.channel == "bec" else args.snr_db
    if param is None:
        raise UsageError(f"{args.channel} channel needs {'--epsilon' if args.channel == 'bec' else '--snr-db'}")
    _usage(ChannelConfig, args.channel, snr_db=args.snr_db, epsilon=args.epsilon)
    cfg = _usage(
        GenAlgConfig,
        spec=spec,
        snr_genalg=param,
        decoder=_decoder(args),
        channel=args.channel,
        n_pop_max=args.generations,
        T=args.T,
        metric=args.metric,
        stop=_usage(StoppingRule, args.min_errors, args.max_frames),
        seed=args.seed,
        include_rm=not args.no_rm,
        reeval=args.reeval,
        workers=args.workers,
    )
    rows = []

    def record(pop, history):
        g, rate, a = history[-1]
        best = pop.best().fitness
        rows.append((g, rate, best.errors, best.frames, a.to_hex()))

    res = run_genalg(cfg, callback=record)
    res.best.a.save(args.output)
    lines = ["generation,best_rate,errors,frames,avector_hex"]
    lines += [f"{g},{r:.6e},{e},{f},{h}" for g, r, e, f, h in rows]
    _write(args.history, "\n".join(lines) + "\n")
    results = {
        "best_rate": res.best.fitness.rate,
        "best_hex": res.best.a.to_hex(),
        "simulations": res.simulations,
        "history": [{"generation": g, "best_rate": r, "avector_hex": h} for g, r, _, _, h in rows],
    }
    _manifest(args, started, [args.output, args.history], results)
    print(f"{args.output}: best {args.metric} {res.best.fitness.rate:.4e} after {args.generations} generations")
    return 0


def cmd_simulate(args) -> int:
    started = _now()
    args.seed = _resolve_seed(args)
    if args.workers is None:
        args.workers = default_workers()
    a = AVector.load(args.avector)
    spec = _spec_for(a, args.crc)
    values = args.epsilon if args.channel == "bec" else args.snr_db
    if not values:
        raise UsageError(f"{args.channel} channel needs {'--epsilon' if args.channel == 'bec' else '--snr-db'}")
    grids = {"snr": values, "list_size": args.list_size, "bp_iters": args.bp_iters}
    multi = [name for name, g in grids.items() if len(g) > 1]
    if len(multi) > 1:
        raise UsageError("sweep one of --snr-db/--epsilon, --list-size, --bp-iters at a time")
    dec = _decoder(args, list_size=args.list_size[0], bp_iters=args.bp_iters[0])
    ch = _usage(ChannelConfig, args.channel, snr_db=values[0] if args.channel != "bec" else None,
                epsilon=values[0] if args.channel == "bec" else None)
    stop = _usage(StoppingRule, args.min_errors, args.max_frames)
    dec.validate(spec)
    kw = dict(stop=stop, seed=args.seed, workers=args.workers, all_zero=args.all_zero)
    extra = ()
    if multi == ["list_size"]:
        points = run_sweep(spec, a, dec, ch, list_sizes=args.list_size, **kw)
        extra = ("list_size",)
    elif multi == ["bp_iters"]:
        points = run_sweep(spec, a, dec, ch, bp_iters=args.bp_iters, **kw)
        extra = ("bp_iters",)
    else:
        points = run_sweep(spec, a, dec, ch, snr_list=values, **kw)
    _write(args.output, points_to_csv(points, extra))
    _manifest(args, started, [args.output], {"decoder": dec.label(), "points": len(points)})
    for p in points:
        print(f"{p.decoder} {args.channel}={p.snr_db:g}: frames={p.frames} ber={p.ber:.3e} bler={p.bler:.3e}")
    return 0


def cmd_analyze(args) -> int:
    started = _now()
    a = AVector.load(args.avector)
    s = weight_enumerator_bruteforce(a, workers=args.workers or 1)
    lines = ["weight,count"] + [f"{d},{c}" for d, c in s.as_dict().items()]
    _write(args.output, "\n".join(lines) + "\n")
    _manifest(args, started, [args.output], {"min_distance": s.min_distance, "multiplicity": s[s.min_distance]})
    print(f"{args.output}: d_min={s.min_distance} A_dmin={s[s.min_distance]}")
    return 0


def cmd_chart(args) -> int:
    started = _now()
    a = AVector.load(args.avector)
    spec = _spec_for(a, args.crc)
    if (args.design_snr is None) == (args.design_epsilon is None):
        raise UsageError("chart needs exactly one of --design-snr and --design-epsilon")
    eps = args.design_epsilon
    if eps is None:
        eps = _usage(design_snr_to_epsilon, args.design_snr, spec.rate)
    z = _usage(bhattacharyya_bec, a.n, eps)
    chart = _usage(frozen_channel_chart, a, z, args.width)
    _write(args.output, chart_to_pgm(chart))
    outputs = [args.output]
    if args.csv:
        _write(args.csv, chart_to_csv(chart))
        outputs.append(args.csv)
    inv = reliability_inversions(a, z)
    _manifest(args, started, outputs, {"rows": chart.shape[0], "width": chart.shape[1], "inversions": inv})
    print(f"{args.output}: {chart.shape[0]}x{chart.shape[1]} chart, {inv} reliability inversions")
    return 0


def cmd_replay(args) -> int:
    doc = json.loads(Path(args.manifest).read_text())
    params = dict(doc["params"])
    if args.outdir:
        for k in OUTPUT_KEYS:
            if params.get(k):
                params[k] = str(Path(args.outdir) / Path(params[k]).name)
    params.setdefault("verbose", args.verbose)
    params["config"] = None
    ns = argparse.Namespace(**params)
    return COMMANDS[doc["command"]](ns)


COMMANDS = {
    "construct": cmd_construct,
    "evolve": cmd_evolve,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "chart": cmd_chart,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parse(argv, parser)
    except UsageError as e:
        print(f"polarforge: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"polarforge {args.command}: error: {e}", file=sys.stderr)
        return 2
    except CapacityError as e:
        print(f"polarforge {args.command}: capacity error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as e:
        print(f"polarforge {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
