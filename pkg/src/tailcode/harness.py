"""Monte Carlo and exhaustive redundancy measurements, convergence experiments
and their CSV/SVG reports.

Redundancy of a scheme on member ``p`` at block length ``n`` is estimated as the
sample mean of ``(ideal_length(X^n) + log2 p(X^n)) / n`` over iid draws, which
is unbiased for ``D(p^n || q) / n``.  Trial ``t`` of member ``k`` draws from a
Philox generator keyed by ``(k, seed + t)``, so results do not depend on how
trials are scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .codec import Censoring, Direct, Mixture, SqrtCensoring, ideal_lengths, parse_scheme, resolve
from .errors import BadParameter, GuardExceeded, ParseError, UnresolvedTail
from .families import Family, _grid, parse_family_spec
from .minimax import bayes_redundancy, family_packing_bound, hellinger_lower_bound, tail_minimax
from .pmf import Pmf, fsum, symbols_from_uniforms

SAMPLING_RESIDUAL_LIMIT = 1e-12
EXHAUSTIVE_GUARD = 10**7
Z95 = 1.959963984540054

REDUNDANCY_HEADER = (
    "family", "scheme", "n", "m", "trials", "member",
    "redundancy_per_symbol", "stderr", "ci95_lo", "ci95_hi",
)
SUMMARY_HEADER = (
    "family", "scheme", "n", "m", "trials", "sup_redundancy_per_symbol",
    "t_estimate", "bayes_lb", "hellinger_lb", "packing_lb",
)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("TAILCODE_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    threads = thread_count()
    if threads == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def scheme_m(scheme, n: int) -> int | str:
    scheme = resolve(scheme, n)
    if isinstance(scheme, Censoring):
        return scheme.m
    if isinstance(scheme, Mixture):
        return scheme.thresholds[-1]
    return ""


# -- sampling -------------------------------------------------------------


def samplable(p: Pmf, n: int) -> Pmf:
    """``p`` with its residual dropped when the chance of ever sampling it in
    ``n`` draws is negligible; otherwise :class:`UnresolvedTail`."""
    if not p.has_residual:
        return p
    if p.residual_tail_mass * n > SAMPLING_RESIDUAL_LIMIT:
        raise UnresolvedTail(
            f"residual mass {p.residual_tail_mass:.3g} is too large to sample {n} symbols exactly"
        )
    return Pmf._checked(p.starts, p.lengths, p.probs / p.atom_mass, 0.0, None, None)


def trial_generator(member: int, seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(member << 64) | ((seed + trial) & (2**64 - 1))))


def draw_trials(p: Pmf, member: int, n: int, trials: int, seed: int) -> np.ndarray:
    """Row ``t`` holds trial ``t``: ``n`` run picks then ``n`` offsets from its own stream."""
    uniforms = np.empty((trials, 2 * n))
    for t in range(trials):
        uniforms[t] = trial_generator(member, seed, t).random(2 * n)
    return symbols_from_uniforms(p, uniforms[:, :n], uniforms[:, n:])


def log2_likelihood(p: Pmf, batch: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log2(p.probs_at(batch)).sum(axis=1)


# -- Monte Carlo ----------------------------------------------------------


@dataclass(frozen=True)
class MemberRedundancy:
    label: str
    mean: float
    stderr: float
    ci95_lo: float
    ci95_hi: float


@dataclass(frozen=True)
class RedundancyReport:
    family: str
    scheme: str
    n: int
    m: int | str
    trials: int
    seed: int
    members: tuple[MemberRedundancy, ...]

    @property
    def sup(self) -> MemberRedundancy:
        return max(self.members, key=lambda r: r.mean)

    @property
    def mean(self) -> float:
        return float(np.mean([r.mean for r in self.members]))

    def rows(self) -> list[dict]:
        base = {"family": self.family, "scheme": self.scheme, "n": self.n, "m": self.m,
                "trials": self.trials}
        out = []
        for r in self.members + (MemberRedundancy("sup", self.sup.mean, self.sup.stderr,
                                                  self.sup.ci95_lo, self.sup.ci95_hi),):
            out.append({**base, "member": r.label, "redundancy_per_symbol": r.mean,
                        "stderr": r.stderr, "ci95_lo": r.ci95_lo, "ci95_hi": r.ci95_hi})
        return out


def _summarize(label: str, values: np.ndarray) -> MemberRedundancy:
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return MemberRedundancy(label, mean, stderr, mean - Z95 * stderr, mean + Z95 * stderr)


def measure_redundancy(family: Family, scheme, n: int, trials: int, seed: int = 0) -> RedundancyReport:
    """Monte Carlo per-symbol redundancy of ``scheme`` on every member."""
    if n < 1 or trials < 1:
        raise BadParameter("n and trials must be positive")
    members = [samplable(p, n) for p in family.members]

    def one(k: int) -> MemberRedundancy:
        batch = draw_trials(members[k], k, n, trials, seed)
        per_symbol = (ideal_lengths(batch, scheme) + log2_likelihood(members[k], batch)) / n
        return _summarize(family.labels[k], per_symbol)

    results = _ordered_map(one, list(range(len(members))))
    return RedundancyReport(family.name, _scheme_name(scheme), n, scheme_m(scheme, n), trials,
                            seed, tuple(results))


def _scheme_name(scheme) -> str:
    return scheme.name


# -- exhaustive -----------------------------------------------------------


@dataclass(frozen=True)
class ExhaustiveReport:
    n: int
    labels: tuple[str, ...]
    values: tuple[float, ...]

    @property
    def sup(self) -> float:
        return max(self.values)


def _support(p: Pmf) -> tuple[np.ndarray, np.ndarray]:
    symbols = np.array([x for x, _ in p.atoms(limit=EXHAUSTIVE_GUARD)], dtype=np.int64)
    return symbols, p.probs_at(symbols)


def exact_member_redundancy(p: Pmf, scheme, n: int, chunk: int = 200_000) -> float:
    """``D(p^n || q) / n`` by enumerating every sequence over p's support."""
    if p.has_residual:
        raise UnresolvedTail("exhaustive enumeration needs a fully materialized member")
    symbols, probs = _support(p)
    size = len(symbols) ** n
    if size > EXHAUSTIVE_GUARD:
        raise GuardExceeded(f"{len(symbols)}**{n} sequences exceed {EXHAUSTIVE_GUARD}")
    s = len(symbols)
    log_probs = np.log2(probs)
    parts = []
    for start in range(0, size, chunk):
        idx = np.arange(start, min(size, start + chunk), dtype=np.int64)
        digits = np.empty((len(idx), n), dtype=np.int64)
        rest = idx
        for j in range(n - 1, -1, -1):
            digits[:, j] = rest % s
            rest = rest // s
        batch = symbols[digits]
        loglik = log_probs[digits].sum(axis=1)
        weight = np.exp2(loglik)
        parts.append(fsum(weight * (ideal_lengths(batch, scheme) + loglik)))
    return math.fsum(parts) / n


def exhaustive_redundancy(family: Family, scheme, n: int) -> ExhaustiveReport:
    values = _ordered_map(lambda k: exact_member_redundancy(family.members[k], scheme, n),
                          list(range(len(family))))
    return ExhaustiveReport(n, family.labels, tuple(values))


# -- experiments ----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    family_text: str
    scheme: str = "sqrt"
    m: int | None = None
    n_grid: tuple[int, ...] = (64, 256, 1024)
    trials: int = 200
    seed: int = 0
    m_grid: tuple[int, ...] = (4, 16, 64, 256)
    name: str | None = None
    lower_bounds: bool = True

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or not self.n_grid:
            raise BadParameter("n grid must be nonempty and increasing")
        if self.trials < 1:
            raise BadParameter("trials must be at least 1")

    def family(self) -> Family:
        family = parse_family_spec(self.family_text)
        if self.name:
            family = Family(family.members, family.labels, family.construction,
                            {**family.params, "name": self.name}, family.exchangeable_blocks)
        return family

    def scheme_obj(self):
        return parse_scheme(self.scheme, self.m)

    def digest(self) -> str:
        text = repr((self.family_text, self.scheme, self.m, self.n_grid, self.trials, self.seed,
                     self.m_grid, self.name, self.lower_bounds))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def parse_experiment_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse ``key=value`` experiment settings.

    Keys: ``family`` (path to a family file), ``family.<key>`` (inline family
    lines), ``scheme``, ``m``, ``n_grid``, ``trials``, ``seed``, ``m_grid``,
    ``name``, ``lower_bounds`` (``yes``/``no``).
    """
    values: dict[str, tuple[str, int]] = {}
    inline: list[str] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ParseError(f"expected key=value, got {content!r}", number)
        key, value = (s.strip() for s in content.split("=", 1))
        if key.startswith("family."):
            inline.append(f"{key[7:]}={value}")
        elif key in values:
            raise ParseError(f"duplicate key {key!r}", number)
        else:
            values[key] = (value, number)
    if "family" in values:
        path = Path(values.pop("family")[0])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        family_text = path.read_text(encoding="utf-8")
    elif inline:
        family_text = "\n".join(inline)
    else:
        raise ParseError("experiment needs family= or family.<key>= lines", 1)
    kwargs: dict = {"family_text": family_text}
    for key, (value, line) in values.items():
        if key in ("n_grid", "m_grid"):
            kwargs[key] = tuple(_grid(value, line, integers=True))
        elif key in ("trials", "seed", "m"):
            kwargs[key] = int(value)
        elif key in ("scheme", "name"):
            kwargs[key] = value
        elif key == "lower_bounds":
            kwargs[key] = value.lower() in ("1", "yes", "true", "on")
        else:
            raise ParseError(f"unknown experiment key {key!r}", line)
    return ExperimentConfig(**kwargs)


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    reports: tuple[RedundancyReport, ...]
    summary: tuple[dict, ...]
    t_estimate: float

    def member_rows(self) -> list[dict]:
        return [row for rep in self.reports for row in rep.rows()]


def lower_bounds(family: Family, n: int) -> dict[str, float | None]:
    """Per-symbol Bayes, Hellinger and packing lower bounds (``None`` when the
    exact computation is out of reach)."""
    out: dict[str, float | None] = {"bayes_lb": None, "hellinger_lb": None, "packing_lb": None}
    packing = family_packing_bound(family, n)
    if packing.members:
        out["packing_lb"] = packing.value / n
    try:
        best = bayes_redundancy(family, None, n).value
        if len(packing.members) >= 2:
            packed = np.zeros(len(family))
            packed[list(packing.members)] = 1.0 / len(packing.members)
            best = max(best, bayes_redundancy(family, packed, n).value)
        out["bayes_lb"] = best / n
    except (GuardExceeded, UnresolvedTail):
        pass
    try:
        out["hellinger_lb"] = hellinger_lower_bound(family, None, n) / n
    except UnresolvedTail:
        pass
    return out


def convergence_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Measured sup redundancy per ``n`` next to the tail-redundancy estimate
    and the lower bounds."""
    family = config.family()
    scheme = config.scheme_obj()
    try:
        t_estimate = tail_minimax(family, config.m_grid[-1]).value
    except UnresolvedTail:
        t_estimate = math.nan
    reports, summary = [], []
    for n in config.n_grid:
        rep = measure_redundancy(family, scheme, n, config.trials, config.seed)
        reports.append(rep)
        row = {"family": rep.family, "scheme": rep.scheme, "n": n, "m": rep.m,
               "trials": config.trials, "sup_redundancy_per_symbol": rep.sup.mean,
               "t_estimate": t_estimate}
        if config.lower_bounds:
            row.update(lower_bounds(family, n))
        else:
            row.update({"bayes_lb": None, "hellinger_lb": None, "packing_lb": None})
        summary.append(row)
    return ExperimentResult(config, tuple(reports), tuple(summary), t_estimate)


# -- output ---------------------------------------------------------------


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_text(rows: Sequence[dict], header: Sequence[str] = REDUNDANCY_HEADER) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(row.get(col)) for col in header])
    return buf.getvalue()


def emit_csv(rows: Sequence[dict], path, header: Sequence[str] = REDUNDANCY_HEADER) -> None:
    Path(path).write_text(csv_text(rows, header), encoding="utf-8")


SVG_SERIES = ("sup_redundancy_per_symbol", "bayes_lb", "hellinger_lb", "packing_lb")
_COLORS = ("#1f77b4", "#2ca02c", "#9467bd", "#8c564b")


def svg_text(rows: Sequence[dict], width: int = 640, height: int = 400) -> str:
    """Per-symbol redundancy against log2 n, one polyline per series, with the
    tail-redundancy estimate as a dashed horizontal rule."""
    pad = 50
    xs = [math.log2(r["n"]) for r in rows]
    values = [r.get(k) for r in rows for k in SVG_SERIES + ("t_estimate",)]
    finite = [v for v in values if isinstance(v, (int, float)) and math.isfinite(v)]
    lo, hi = (min(finite + [0.0]), max(finite + [1e-9])) if finite else (0.0, 1.0)
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (hi - lo) or 1.0

    def px(x):
        return pad + (x - x_lo) / x_span * (width - 2 * pad)

    def py(y):
        return height - pad - (y - lo) / y_span * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12">log2 n</text>',
        f'<text x="14" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 14 {height / 2:.0f})" '
        f'text-anchor="middle">bits per symbol</text>',
    ]
    for key, color in zip(SVG_SERIES, _COLORS):
        pts = [(px(x), py(r[key])) for x, r in zip(xs, rows)
               if isinstance(r.get(key), (int, float)) and math.isfinite(r[key])]
        if not pts:
            continue
        coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}">'
                     f"<title>{key}</title></polyline>")
    t_values = [r.get("t_estimate") for r in rows]
    if t_values and isinstance(t_values[0], (int, float)) and math.isfinite(t_values[0]):
        y = py(t_values[0])
        parts.append(f'<line x1="{pad}" y1="{y:.2f}" x2="{width - pad}" y2="{y:.2f}" '
                     f'stroke="red" stroke-dasharray="6 4"><title>t_estimate</title></line>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(rows: Sequence[dict], path) -> None:
    Path(path).write_text(svg_text(rows), encoding="utf-8")
