"""Command-line front end: ``picdtc <subcommand> ...``."""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .chain import ConfigError, CouplingConfig
from .decoding import DecodeError
from .density import default_chain_length, rank_gf2, transfer_function
from .streamfile import FormatError, decode_stream, encode_payload
from .trellis import TrellisError, build_trellis, parse_octal


class UsageError(Exception):
    pass


def _code_args(p, gf2=True):
    p.add_argument("--gf", default="5", help="feedforward polynomial, octal (default 5)")
    if gf2:
        p.add_argument("--gf2", default="3", help="second-input polynomial, octal (default 3)")
    p.add_argument("--gb", default="7", help="feedback polynomial, octal (default 7)")


def _coupling_args(p):
    p.add_argument("--K", type=int, help="block length")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--Kc", type=int, help="coupled bits per block")
    g.add_argument("--lam", help="coupling ratio, e.g. 1/2 (sets Kc = floor(lam*K))")
    p.add_argument("--m", type=int, help="coupling memory")
    p.add_argument("--L", type=int, help="chain length")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="picdtc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="DE thresholds over a lambda x m grid")
    _code_args(p)
    p.add_argument("--lams", default="1", help="comma list or start:stop:step (default 1)")
    p.add_argument("--ms", default="1", help="comma list of coupling memories (default 1)")
    p.add_argument("--L", type=int, help="chain length (default 100, or 10m for m > 10)")
    p.add_argument("--precision", type=float, default=1e-4)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--name", default="threshold", help="output file stem")

    p = sub.add_parser("ber", help="Monte Carlo BER sweep")
    p.add_argument("--config", type=Path, help="key = value config file; flags override it")
    p.add_argument("--gf")
    p.add_argument("--gf2")
    p.add_argument("--gb")
    _coupling_args(p)
    p.add_argument("--eps", help="comma list or start:stop:step")
    p.add_argument("--trials", type=int, help="trial cap per point")
    p.add_argument("--min-erasures", type=int, help="stop a point after this many residual erasures")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-sweeps", type=int)
    p.add_argument("--max-inner-iters", type=int)
    p.add_argument("--upper-order", choices=("random", "natural"),
                   help="input order seen by the upper encoder (default random)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--name", default="ber", help="output file stem")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("encode", help="encode a payload file into a stream file")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    _code_args(p)
    _coupling_args(p)
    p.add_argument("--interleaver-seed", type=int, default=0)
    p.add_argument("--erase", type=float, default=0.0, help="pass the stream through a BEC")
    p.add_argument("--seed", type=int, default=0, help="channel seed for --erase")

    p = sub.add_parser("decode", help="decode a stream file")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path, help="decoded payload")
    p.add_argument("--flags", type=Path, help="erasure flags (default OUTPUT.erasures)")
    p.add_argument("--max-sweeps", type=int, default=20)
    p.add_argument("--max-inner-iters", type=int, default=30)

    p = sub.add_parser("ranksearch", help="rank second-input generators by threshold")
    _code_args(p, gf2=False)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--candidates", help="comma list of octal polynomials")
    g.add_argument("--max-degree", type=int, help="all nonzero polynomials up to this degree")
    p.add_argument("--lam", default="1")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--L", type=int)
    p.add_argument("--precision", type=float, default=1e-4)
    p.add_argument("--out", type=Path, help="CSV path (default stdout)")

    p = sub.add_parser("transfer-dump", help="grid dump of the exact transfer function")
    _code_args(p)
    p.add_argument("--points", type=int, default=5, help="grid points per axis")
    p.add_argument("--out", type=Path, help="CSV path (default stdout)")
    return parser


def _emit(text: str, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_threshold(args):
    try:
        lams = ex.parse_float_list(args.lams)
        ms = ex.parse_int_list(args.ms)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not lams or not ms:
        raise UsageError("threshold grid is empty")
    if any(not 0 <= lam <= 1 for lam in lams) or any(m < 1 for m in ms):
        raise UsageError("need 0 <= lambda <= 1 and m >= 1")
    rec = ex.threshold_table(args.gf, args.gf2, args.gb, lams, ms, args.L, args.precision,
                             progress=lambda r: print(ex.fmt(r["lambda"]), r["m"], ex.fmt(r["eps_bp"]),
                                                      file=sys.stderr))
    csv_text = ex.threshold_csv(rec)
    ex.write_outputs(args.out, args.name, csv_text, rec)
    sys.stdout.write(csv_text)


def ber_config(args) -> ex.ExperimentConfig:
    values = {}
    if args.config is not None:
        base = ex.ExperimentConfig.from_text(args.config.read_text())
        values = base.to_dict()
    flags = {"g_f": args.gf, "g_f2": args.gf2, "g_b": args.gb, "K": args.K, "Kc": args.Kc,
             "lambda": args.lam, "m": args.m, "L": args.L, "epsilons": args.eps,
             "trials": args.trials, "min_erasures": args.min_erasures, "seed": args.seed,
             "max_sweeps": args.max_sweeps, "max_inner_iters": args.max_inner_iters,
             "upper_order": args.upper_order, "output_dir": args.out}
    flags = {k: v for k, v in flags.items() if v is not None}
    if "lambda" in flags or "Kc" in flags:
        values.pop("Kc", None)
    return ex.ExperimentConfig.from_mapping(values | flags)


def cmd_ber(args):
    cfg = ber_config(args)
    if not cfg.epsilons:
        raise UsageError("no epsilon values given")

    def progress(pt):
        print(f"eps={ex.fmt(pt.epsilon)} trials={pt.trials} ber={ex.fmt(pt.ber)}", file=sys.stderr)

    rec = ex.ber_sweep(cfg, workers=args.workers, progress=progress)
    csv_text = ex.ber_csv(rec)
    ex.write_outputs(cfg.output_dir, args.name, csv_text, rec)
    sys.stdout.write(csv_text)


def _stream_header(args) -> dict:
    K = 1000 if args.K is None else args.K
    m = 1 if args.m is None else args.m
    L = 10 if args.L is None else args.L
    if args.lam is not None:
        Kc = CouplingConfig.from_lambda(K, args.lam, m, L).Kc
    else:
        Kc = K // 2 - (K // 2) % m if args.Kc is None else args.Kc
    return {"g_f": parse_octal(args.gf).octal, "g_f2": parse_octal(args.gf2).octal,
            "g_b": parse_octal(args.gb).octal, "K": K, "Kc": Kc, "m": m, "L": L,
            "interleaver_seed": args.interleaver_seed}


def cmd_encode(args):
    if not 0.0 <= args.erase <= 1.0:
        raise UsageError("--erase must lie in [0, 1]")
    data = encode_payload(args.input.read_bytes(), _stream_header(args), args.erase, args.seed)
    args.output.write_bytes(data)


def cmd_decode(args):
    payload, flags = decode_stream(args.input.read_bytes(), args.max_sweeps, args.max_inner_iters)
    args.output.write_bytes(payload)
    flags_path = args.flags or args.output.with_name(args.output.name + ".erasures")
    flags_path.write_bytes(flags)
    erased = int(np.unpackbits(np.frombuffer(flags, np.uint8)).sum())
    print(f"{len(payload)} bytes, {erased} erased bits", file=sys.stderr)


def all_candidates(max_degree: int) -> list[str]:
    if max_degree < 0:
        raise UsageError("--max-degree must be non-negative")
    return [format(c, "o") for c in range(1, 2 ** (max_degree + 1))]


def cmd_ranksearch(args):
    if args.candidates is not None:
        cands = [c.strip() for c in args.candidates.split(",") if c.strip()]
    else:
        cands = all_candidates(args.max_degree)
    if not cands:
        raise UsageError("candidate list is empty")
    L = default_chain_length(args.m) if args.L is None else args.L
    ranked = rank_gf2(args.gf, args.gb, cands, lam=args.lam, m=args.m, L=L, precision=args.precision)
    rows = [{"rank": i + 1, "candidate": c, "eps_bp": e} for i, (c, e) in enumerate(ranked)]
    _emit(ex.to_csv(("rank", "candidate", "eps_bp"), rows), args.out)


def cmd_transfer_dump(args):
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    tf = transfer_function(build_trellis(args.gf, args.gf2, args.gb))
    grid = np.linspace(0.0, 1.0, args.points)
    rows = []
    for q1, q2, qp in itertools.product(grid, repeat=3):
        e1, e2 = tf(q1, q2, qp)
        rows.append({"q1": q1, "q2": q2, "qp": qp, "e1": float(e1), "e2": float(e2)})
    _emit(ex.to_csv(("q1", "q2", "qp", "e1", "e2"), rows), args.out)


COMMANDS = {
    "threshold": cmd_threshold,
    "ber": cmd_ber,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "ranksearch": cmd_ranksearch,
    "transfer-dump": cmd_transfer_dump,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (UsageError, ConfigError, TrellisError) as exc:
        parser.error(str(exc))  # exits with status 2
    except FormatError as exc:
        print(f"picdtc: format error: {exc}", file=sys.stderr)
        return 3
    except DecodeError as exc:
        print(f"picdtc: decoder inconsistency: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"picdtc: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
