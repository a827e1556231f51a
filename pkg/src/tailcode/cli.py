"""Command-line driver: ``tailcode <subcommand> [flags]``.

Exit status is 0 on success, 2 on usage errors and 1 when a computation or
input fails.  Every run prints a reproducibility line (version, seed and a
hash of the effective configuration) on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

from . import __version__
from .codec import Bitstream, decode, encode, encode_varints, decode_varints, parse_scheme
from .errors import BadParameter, TailcodeError
from .families import Family, heavy_q, parse_family_spec, prop1_q
from .harness import (
    REDUNDANCY_HEADER,
    SUMMARY_HEADER,
    ExperimentConfig,
    convergence_experiment,
    csv_text,
    lower_bounds,
    parse_experiment_config,
    svg_text,
)
from .minimax import minimax_redundancy, tail_redundancy_curve
from .pmf import kl_divergence, tail_kl, tail_mass

REFERENCE_LAWS = {"block": prop1_q, "heavy": heavy_q}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser() -> argparse.ArgumentParser:
    """The top-level parser; subcommand parsers are kept in ``parser.subcommands``."""
    parser = _Parser(prog="tailcode", description="Tail redundancy, minimax games and censoring codes.")
    parser.add_argument("--version", action="version", version=f"tailcode {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def family_arg(p, required=True):
        p.add_argument("--family", required=required, help="family description file")

    def out_args(p, formats=("csv", "json")):
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--format", choices=formats, default=formats[0], help="output format")

    parser.subcommands = sub.choices

    p = sub.add_parser("family", help="list the members of a family")
    family_arg(p)
    p.add_argument("--m", type=int, help="also report each member's tail mass at m")
    out_args(p, ("json", "csv"))

    p = sub.add_parser("kl", help="divergence of every member from a reference law")
    family_arg(p)
    p.add_argument("--q", required=True,
                   help="reference law: 'block', 'heavy', or a family file whose first member is used")
    p.add_argument("--m", type=int, help="restrict the sum to symbols >= m")
    out_args(p)

    p = sub.add_parser("minimax", help="minimax redundancy of n-letter blocks")
    family_arg(p)
    p.add_argument("--n", type=int, default=1, help="block length (default 1)")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--format", choices=("json",), default="json")

    p = sub.add_parser("tail-redundancy", help="tail redundancy curve over a grid of thresholds")
    family_arg(p)
    p.add_argument("--m-grid", type=_int_list, default=[4, 16, 64, 256], help="increasing thresholds")
    out_args(p)

    p = sub.add_parser("bounds", help="Bayes, Hellinger and packing lower bounds per n")
    family_arg(p)
    p.add_argument("--n-grid", type=_int_list, default=[1, 2, 4, 8], help="block lengths")
    out_args(p)

    p = sub.add_parser("encode", help="compress a sequence of positive integers")
    p.add_argument("--scheme", default="censor", help="censor, sqrt or mixture")
    p.add_argument("--m", type=int, help="censoring threshold, or the mixture grid maximum")
    p.add_argument("--in", dest="input", required=True, help="input file ('-' for stdin)")
    p.add_argument("--input-format", choices=("text", "varint"), default="text",
                   help="whitespace-separated integers or a raw varint stream")
    p.add_argument("--out", required=True, help="container output file")

    p = sub.add_parser("decode", help="decompress a container")
    p.add_argument("--in", dest="input", required=True, help="container file ('-' for stdin)")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--output-format", choices=("text", "varint"), default="text")

    p = sub.add_parser("experiment", help="convergence experiment; flags override the config file")
    p.add_argument("--config", help="experiment config file")
    family_arg(p, required=False)
    p.add_argument("--scheme", help="censor, sqrt or mixture")
    p.add_argument("--m", type=int, help="censoring threshold, or the mixture grid maximum")
    p.add_argument("--n-grid", type=_int_list)
    p.add_argument("--m-grid", type=_int_list, help="thresholds for the tail estimate (largest is used)")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--summary", help="also write the per-n summary CSV here")
    out_args(p, ("csv", "svg", "json"))
    return parser


# -- helpers --------------------------------------------------------------


def _read_family(path: str) -> tuple[Family, str]:
    text = Path(path).read_text(encoding="utf-8")
    return parse_family_spec(text), text


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n"


def _json_default(value):
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _finite(value):
    return value if value is None or math.isfinite(value) else str(value)


def _rows_out(rows: list[dict], header, fmt: str) -> str:
    if fmt == "json":
        return _json([{k: _finite(r.get(k)) if isinstance(r.get(k), float) else r.get(k) for k in header}
                      for r in rows])
    return csv_text(rows, header)


def _digest(*parts) -> str:
    return hashlib.sha256(repr(parts).encode()).hexdigest()[:12]


# -- subcommands ----------------------------------------------------------


def cmd_family(args) -> tuple[str, int | None]:
    family, text = _read_family(args.family)
    rows = []
    for label, p in zip(family.labels, family.members):
        row = {"label": label, "runs": p.n_runs, "support_size": p.support_size,
               "min_symbol": p.min_symbol, "max_symbol": p.max_symbol,
               "residual_tail_mass": p.residual_tail_mass}
        if args.m is not None:
            row["tail_mass"] = tail_mass(p, args.m)
        rows.append(row)
    header = list(rows[0])
    if args.format == "json":
        payload = {"name": family.name, "construction": family.construction.value,
                   "exchangeable_blocks": [list(b) for b in family.exchangeable_blocks],
                   "members": rows}
        _emit(_json(payload), args.out)
    else:
        _emit(csv_text(rows, header), args.out)
    return _digest(text, args.m), None


def _reference(name: str):
    if name in REFERENCE_LAWS:
        return REFERENCE_LAWS[name](), name
    text = Path(name).read_text(encoding="utf-8")
    return parse_family_spec(text).members[0], text


def cmd_kl(args):
    family, text = _read_family(args.family)
    q, q_text = _reference(args.q)
    rows = []
    for label, p in zip(family.labels, family.members):
        value = kl_divergence(p, q) if args.m is None else tail_kl(p, q, args.m)
        rows.append({"member": label, "kl_bits": value})
    _emit(_rows_out(rows, ("member", "kl_bits"), args.format), args.out)
    return _digest(text, q_text, args.m), None


def cmd_minimax(args):
    family, text = _read_family(args.family)
    solution = minimax_redundancy(family, args.n)
    report = {"family": family.name, "n": args.n, **solution.to_dict()}
    _emit(_json(report), args.out)
    return _digest(text, args.n), None


def cmd_tail(args):
    family, text = _read_family(args.family)
    curve = tail_redundancy_curve(family, args.m_grid)
    rows = [{"m": pt.m, "tail": pt.tail, "tail_tilde": pt.tail_tilde, "converged": pt.converged,
             "gap": pt.gap} for pt in curve]
    _emit(_rows_out(rows, ("m", "tail", "tail_tilde", "converged", "gap"), args.format), args.out)
    return _digest(text, tuple(args.m_grid)), None


def cmd_bounds(args):
    family, text = _read_family(args.family)
    rows = []
    for n in args.n_grid:
        row = {"n": n, **lower_bounds(family, n)}
        try:
            row["minimax"] = minimax_redundancy(family, n).value / n
        except TailcodeError:
            row["minimax"] = None
        rows.append(row)
    header = ("n", "bayes_lb", "hellinger_lb", "packing_lb", "minimax")
    _emit(_rows_out(rows, header, args.format), args.out)
    return _digest(text, tuple(args.n_grid)), None


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def cmd_encode(args):
    data = _read_input(args.input)
    if args.input_format == "varint":
        xs = decode_varints(data)
    else:
        try:
            xs = [int(tok) for tok in data.decode("ascii").split()]
        except (UnicodeDecodeError, ValueError) as exc:
            raise BadParameter(f"input is not whitespace-separated integers: {exc}") from None
    stream = encode(xs, parse_scheme(args.scheme, args.m))
    Path(args.out).write_bytes(stream.to_bytes())
    sys.stderr.write(f"encoded {len(xs)} symbols into {stream.payload_bits} payload bits\n")
    return _digest(hashlib.sha256(data).hexdigest(), args.scheme, args.m), None


def cmd_decode(args):
    data = _read_input(args.input)
    xs = decode(Bitstream.from_bytes(data))
    if args.output_format == "varint":
        payload = encode_varints(xs)
        if args.out:
            Path(args.out).write_bytes(payload)
        else:
            sys.stdout.buffer.write(payload)
    else:
        _emit("\n".join(str(x) for x in xs) + "\n", args.out)
    return _digest(hashlib.sha256(data).hexdigest()), None


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        path = Path(args.config)
        config = parse_experiment_config(path.read_text(encoding="utf-8"), path.parent)
    elif args.family:
        config = ExperimentConfig(Path(args.family).read_text(encoding="utf-8"))
    else:
        raise UsageError("experiment needs --config or --family")
    overrides = {}
    if args.config and args.family:
        overrides["family_text"] = Path(args.family).read_text(encoding="utf-8")
    for flag, key in (("scheme", "scheme"), ("m", "m"), ("trials", "trials"), ("seed", "seed")):
        if getattr(args, flag) is not None:
            overrides[key] = getattr(args, flag)
    if args.n_grid is not None:
        overrides["n_grid"] = tuple(args.n_grid)
    if args.m_grid is not None:
        overrides["m_grid"] = tuple(args.m_grid)
    if not overrides:
        return config
    fields = {k: getattr(config, k) for k in config.__dataclass_fields__}
    return ExperimentConfig(**{**fields, **overrides})


def cmd_experiment(args):
    config = _experiment_config(args)
    result = convergence_experiment(config)
    summary = list(result.summary)
    if args.format == "svg":
        _emit(svg_text(summary), args.out)
    elif args.format == "json":
        _emit(_json({"members": [{k: _finite(v) if isinstance(v, float) else v for k, v in r.items()}
                                 for r in result.member_rows()],
                     "summary": [{k: _finite(v) if isinstance(v, float) else v for k, v in r.items()}
                                 for r in summary]}), args.out)
    else:
        _emit(csv_text(result.member_rows(), REDUNDANCY_HEADER), args.out)
    if args.summary:
        Path(args.summary).write_text(csv_text(summary, SUMMARY_HEADER), encoding="utf-8")
    return config.digest(), config.seed


COMMANDS = {
    "family": cmd_family,
    "kl": cmd_kl,
    "minimax": cmd_minimax,
    "tail-redundancy": cmd_tail,
    "bounds": cmd_bounds,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "experiment": cmd_experiment,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    digest, seed, status = "none", getattr(args, "seed", None), 0
    try:
        digest, used_seed = COMMANDS[args.command](args)
        seed = used_seed if used_seed is not None else seed
    except UsageError as exc:
        parser.subcommands[args.command].print_usage(sys.stderr)
        sys.stderr.write(f"tailcode {args.command}: error: {exc}\n")
        status = 2
    except (TailcodeError, OSError, ValueError) as exc:
        sys.stderr.write(f"tailcode {args.command}: {type(exc).__name__}: {exc}\n")
        status = 1
    seed_text = "none" if seed is None else str(seed)
    sys.stderr.write(f"tailcode {__version__} command={args.command} seed={seed_text} config={digest}\n")
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
