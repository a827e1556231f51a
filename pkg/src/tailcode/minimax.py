"""Minimax, Bayes and tail-redundancy games over finite families, plus the
lower bounds and sequence utilities used to interpret them.

Every game here has the form ``inf_q max_k f_k(q)`` where

    f_k(q) = const_k - sum_c mass[k, c] * log2 Q_c

and ``Q_c`` is the probability ``q`` gives to cell ``c``.  A cell is a set of
symbols on which the optimal ``q`` is constant per symbol: a single symbol, a
run on which every member is uniform, an exchangeable block, or (for blocks of
``n`` letters) a type class.  The payoff is convex in ``q`` and linear in a
prior over members, so the game is solved through its concave dual

    g(prior) = min_q sum_k prior_k f_k(q),

whose inner minimizer is the prior-weighted mixture of the cell masses.
Exponentiated-gradient ascent on the prior (which reduces to Blahut-Arimoto for
the full-support game) produces both a primal ``q`` and a dual certificate; the
reported duality gap is their difference.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import (
    BadInput,
    BadParameter,
    BadPartition,
    GuardExceeded,
    LengthMismatch,
    NotConvergedWarning,
    UnresolvedTail,
)
from .families import Family
from .pmf import NORMALIZATION_TOL, Pmf, _as_float, _segments, fsum, hellinger, point_mass

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100_000
TYPE_GUARD = 500_000
LN2 = math.log(2.0)

__all__ = [
    "MinimaxSolution",
    "BayesResult",
    "Game",
    "solve_game",
    "minimax_redundancy",
    "bayes_redundancy",
    "tail_minimax",
    "tail_minimax_tilde",
    "normalized_tail_minimax",
    "tail_redundancy_curve",
    "hellinger_lower_bound",
    "packing_lower_bound",
    "family_packing_bound",
    "partition_diameter",
    "totally_bounded_partition",
    "fekete_limit",
    "max_sequence_limit",
    "shtarkov_redundancy",
    "grid_search_game",
    "detect_divergence",
    "minimax_growth",
]


# -- games ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Game:
    """Payoff data of ``inf_q max_k const_k - sum_c mass[k, c] log2 Q_c``."""

    mass: np.ndarray
    const: np.ndarray
    # (starts, lengths) per cell when cells are symbol sets; None for type classes
    cells: list[tuple[np.ndarray, np.ndarray]] | None = None

    @property
    def n_members(self) -> int:
        return self.mass.shape[0]

    @property
    def n_cells(self) -> int:
        return self.mass.shape[1]

    def payoffs(self, Q: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(self.mass > 0, self.mass * np.log2(np.where(Q > 0, Q, 1.0)), 0.0)
            missing = np.any((self.mass > 0) & (Q <= 0), axis=1)
        out = self.const - logs.sum(axis=1)
        out[missing] = math.inf
        return out


def _plogp(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log2(np.where(x > 0, x, 1.0)), 0.0)


def _cell_game(family: Family, m: int, merge_blocks: bool, tilde: bool = False,
               normalize: bool = False) -> tuple[Game, np.ndarray]:
    """Single-letter game restricted to symbols ``>= m``; returns it with the
    members' tail masses."""
    for label, p in zip(family.labels, family.members):
        if p.has_residual:
            raise UnresolvedTail(f"member {label} has an unresolved residual tail above {m}")
    seg_starts, seg_lengths, table = _segments(family.members, lo=m)
    lengths = _as_float(seg_lengths)
    seg_mass = table * lengths
    plogp = (_plogp(table) * lengths).sum(axis=1)

    # each exchangeable block (clipped to x >= m) becomes one cell spanning the
    # whole block; every other segment is a cell of its own
    cell_mass, cell_len, cells = [], [], []
    in_block = np.zeros(len(seg_starts), dtype=bool)
    if merge_blocks:
        for lo, hi in family.exchangeable_blocks:
            start = max(lo, m)
            if start >= hi:
                continue
            inside = (seg_starts >= start) & (seg_starts < hi)
            if not inside.any():
                continue
            in_block |= inside
            cell_mass.append(seg_mass[:, inside].sum(axis=1))
            cell_len.append(float(hi - start))
            cells.append(_index_pair(start, hi - start))
    for c in np.flatnonzero(~in_block):
        cell_mass.append(seg_mass[:, c])
        cell_len.append(float(lengths[c]))
        cells.append((seg_starts[c:c + 1], seg_lengths[c:c + 1]))
    mass = np.stack(cell_mass, axis=1) if cell_mass else np.zeros((len(family), 0))
    cell_len = np.array(cell_len)
    tau = mass.sum(axis=1)
    const = plogp + (mass * np.log2(np.maximum(cell_len, 1.0))).sum(axis=1)
    if tilde:
        const = const - _plogp(tau)
    if normalize:
        keep = tau > 0
        scale = np.where(keep, 1.0 / np.where(keep, tau, 1.0), 0.0)
        mass, const = mass[keep] * scale[keep, None], const[keep] * scale[keep]
    return Game(mass, const, cells), tau


def _index_pair(start: int, length: int) -> tuple[np.ndarray, np.ndarray]:
    dtype = object if start + length > 2**63 - 1 else np.int64
    return np.array([start], dtype=dtype), np.array([length], dtype=dtype)


def _compositions(total: int, parts: int):
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 2 - prev)
        yield tuple(out)


def _type_game(family: Family, n: int, guard: int = TYPE_GUARD) -> Game:
    """Game over length-``n`` blocks with outputs grouped into type classes."""
    for label, p in zip(family.labels, family.members):
        if p.has_residual:
            raise UnresolvedTail(f"member {label} has an unresolved residual tail")
    _, seg_lengths, table = _segments(family.members)
    cell_mass = table * _as_float(seg_lengths)
    supports = [np.flatnonzero(row > 0) for row in cell_mass]
    count = sum(math.comb(n + len(s) - 1, len(s) - 1) for s in supports)
    if count > guard:
        raise GuardExceeded(f"{count} type classes exceed the guard {guard}")
    index: dict[tuple, int] = {}
    for support in supports:
        for comp in _compositions(n, len(support)):
            key = tuple((int(c), k) for c, k in zip(support, comp) if k)
            index.setdefault(key, len(index))
    # types stored sparsely: at most n occupied cells per type
    cell_idx = np.zeros((len(index), n), dtype=np.int64)
    counts = np.zeros((len(index), n))
    for key, t in index.items():
        for slot, (c, k) in enumerate(key):
            cell_idx[t, slot], counts[t, slot] = c, k
    log_multinomial = (gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)) / LN2
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mass = np.log2(cell_mass)
    log_prob = np.empty((len(family), len(index)))
    for k in range(len(family)):
        with np.errstate(invalid="ignore"):
            terms = np.where(counts > 0, counts * log_mass[k][cell_idx], 0.0)
        log_prob[k] = log_multinomial + terms.sum(axis=1)
    probs = np.exp2(log_prob)
    const = _plogp(probs).sum(axis=1)
    return Game(probs, const, None)


# -- solver ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MinimaxSolution:
    """Output of a game solve.

    ``value`` is the primal value ``max_k f_k(q_star)``; ``lower_bound`` is the
    best dual (Bayes) value found, so ``duality_gap = value - lower_bound``.
    """

    q_star: Pmf | None
    value: float
    duality_gap: float
    iterations: int
    converged: bool
    prior: np.ndarray
    lower_bound: float
    member_payoffs: np.ndarray = field(repr=False)
    q_cells: np.ndarray = field(repr=False)
    diverging: bool = False
    empty: bool = False

    def to_dict(self) -> dict:
        atoms = []
        if self.q_star is not None and self.q_star.n_runs <= 10_000:
            atoms = [[s, n, p] for s, n, p in self.q_star.runs()]
        return {
            "value": self.value,
            "lower_bound": self.lower_bound,
            "duality_gap": self.duality_gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "diverging": self.diverging,
            "prior": [float(x) for x in self.prior],
            "q_star_runs": atoms,
        }


def _evaluate(game: Game, lam: np.ndarray):
    w = lam @ game.mass
    total = w.sum()
    if total <= 0:
        Q = np.full(game.n_cells, 1.0 / max(game.n_cells, 1))
        return Q, float(lam @ game.const), game.payoffs(Q)
    Q = w / total
    f = game.payoffs(Q)
    with np.errstate(divide="ignore", invalid="ignore"):
        dual = float(lam @ game.const) - fsum(np.where(w > 0, w * np.log2(np.where(w > 0, Q, 1.0)), 0.0))
    return Q, dual, f


def solve_game(
    game: Game,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, float, float, int, bool]:
    """Solve a :class:`Game`; returns ``(Q, prior, primal, dual, iterations, converged)``.

    Dual ascent by exponentiated gradient on the prior with a step size that
    grows after every improving step and halves after a failed one.
    """
    K = game.n_members
    log_lam = np.full(K, -math.log(K)) if init is None else np.log(np.maximum(init, 1e-300))
    lam = np.exp(log_lam - logsumexp(log_lam))
    Q, dual, f = _evaluate(game, lam)
    best = (Q, lam, float(f.max()))
    best_dual, best_lam = dual, lam
    eta = 1.0
    it = 0
    while it < max_iter:
        if best[2] - best_dual <= tol:
            return best[0], best_lam, best[2], best_dual, it, True
        it += 1
        finite = f[np.isfinite(f)]
        cap = (finite.max() if finite.size else 0.0) + 60.0
        step = np.minimum(f, cap)
        cand = log_lam + eta * LN2 * (step - step.max())
        cand -= logsumexp(cand)
        lam_c = np.exp(cand)
        Q_c, dual_c, f_c = _evaluate(game, lam_c)
        if dual_c + 1e-15 * max(1.0, abs(dual)) < dual:
            eta *= 0.5
            if eta < 1e-12:
                break
            continue
        log_lam, lam, Q, dual, f = cand, lam_c, Q_c, dual_c, f_c
        eta = min(eta * 1.5, 1e8)
        if dual > best_dual:
            best_dual, best_lam = dual, lam
        primal = float(f.max())
        if primal < best[2]:
            best = (Q, lam, primal)
    converged = best[2] - best_dual <= tol
    if not converged:
        warnings.warn(
            f"game not solved to {tol:g} after {it} iterations (gap {best[2] - best_dual:.3g})",
            NotConvergedWarning,
            stacklevel=3,
        )
    return best[0], best_lam, best[2], best_dual, it, converged


def _q_from_cells(game: Game, Q: np.ndarray) -> Pmf | None:
    if game.cells is None:
        return None
    runs = []
    for (starts, lengths), mass in zip(game.cells, Q):
        if mass <= 0:
            continue
        size = float(sum(int(n) for n in lengths))
        runs += [(int(s), int(n), mass / size) for s, n in zip(starts, lengths)]
    total = sum(n * p for _, n, p in runs)
    runs = [(s, n, p / total) for s, n, p in runs]
    return Pmf.from_runs(runs)


def _solution(game: Game, tol: float, max_iter: int, m: int = 1) -> MinimaxSolution:
    if game.n_cells == 0 or not np.any(game.mass > 0):
        value = float(game.const.max()) if game.n_members else 0.0
        return MinimaxSolution(
            point_mass(m), value, 0.0, 0, True, np.full(game.n_members, 1.0 / max(game.n_members, 1)),
            value, game.const.copy(), np.zeros(0), empty=True,
        )
    Q, lam, primal, dual, it, ok = solve_game(game, tol, max_iter)
    return MinimaxSolution(
        _q_from_cells(game, Q), primal, max(primal - dual, 0.0), it, ok, lam, dual,
        game.payoffs(Q), Q,
    )


# -- public redundancies ---------------------------------------------------


def minimax_redundancy(
    family: Family, n: int = 1, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> MinimaxSolution:
    """Minimax redundancy of ``n``-letter blocks, ``inf_q sup_p D(p^n || q)``.

    For ``n = 1`` exchangeable blocks of the family are honored; for ``n > 1``
    the game runs over the listed members and ``q_star`` is ``None`` (the
    optimal law lives on type classes, see ``q_cells``).
    """
    if n < 1:
        raise BadParameter("n must be positive")
    if n == 1:
        game, _ = _cell_game(family, 0, merge_blocks=True)
    else:
        game = _type_game(family, n)
    return _solution(game, tol, max_iter)


@dataclass(frozen=True)
class BayesResult:
    value: float
    mixture: Pmf | None
    exact: bool = True
    stderr: float = 0.0

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.value - 1.96 * self.stderr, self.value + 1.96 * self.stderr)


def _check_prior(family: Family, prior) -> np.ndarray:
    pi = np.asarray(prior if prior is not None else np.full(len(family), 1.0 / len(family)), dtype=float)
    if pi.shape != (len(family),) or np.any(pi < 0):
        raise BadParameter("prior must be a non-negative weight per member")
    if abs(fsum(pi) - 1.0) > NORMALIZATION_TOL:
        raise BadParameter("prior weights must sum to 1")
    return pi


def _mutual_information(game: Game, pi: np.ndarray) -> float:
    mix = pi @ game.mass
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(game.mass > 0, np.log2(game.mass / np.where(mix > 0, mix, 1.0)), 0.0)
    return fsum(pi * (game.mass * ratio).sum(axis=1))


def bayes_redundancy(
    family: Family,
    prior=None,
    n: int = 1,
    monte_carlo: bool = False,
    samples: int = 20_000,
    seed: int = 0,
    guard: int = TYPE_GUARD,
) -> BayesResult:
    """Bayes redundancy ``I(theta; X^n)`` of ``prior`` (uniform by default).

    Exact by type-class enumeration; when that exceeds ``guard`` it raises
    :class:`GuardExceeded` unless ``monte_carlo`` is set.
    """
    pi = _check_prior(family, prior)
    if n == 1:
        game, _ = _cell_game(family, 0, merge_blocks=False)
        value = _mutual_information(game, pi)
        from .pmf import mixture

        keep = [i for i in range(len(family)) if pi[i] > 0]
        mix = mixture([family.members[i] for i in keep], pi[keep])
        return BayesResult(value, mix)
    try:
        game = _type_game(family, n, guard)
    except GuardExceeded:
        if not monte_carlo:
            raise
        return _bayes_monte_carlo(family, pi, n, samples, seed)
    return BayesResult(_mutual_information(game, pi), None)


def _bayes_monte_carlo(family: Family, pi, n: int, samples: int, seed: int) -> BayesResult:
    from .pmf import sample

    rng = np.random.Generator(np.random.Philox(seed))
    who = rng.choice(len(family), size=samples, p=pi)
    estimates = np.empty(samples)
    for k in np.unique(who):
        rows = np.flatnonzero(who == k)
        xs = sample(family.members[k], (len(rows), n), rng)
        loglik = np.empty((len(family), len(rows)))
        for j, p in enumerate(family.members):
            with np.errstate(divide="ignore"):
                loglik[j] = np.log2(p.probs_at(xs)).sum(axis=1)
        with np.errstate(divide="ignore"):
            log_mix = logsumexp(loglik * LN2 + np.log(np.where(pi > 0, pi, 1e-300))[:, None], axis=0) / LN2
        estimates[rows] = loglik[k] - log_mix
    return BayesResult(float(estimates.mean()), None, exact=False,
                       stderr=float(estimates.std(ddof=1) / math.sqrt(samples)))


def tail_minimax(family: Family, m: int, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER) -> MinimaxSolution:
    """``inf_q sup_p sum_{x >= m} p(x) log2(p(x)/q(x))``, with ``q`` on ``{x >= m}``.

    Members with no mass at or above ``m`` contribute payoff 0.  The value may
    be negative.
    """
    game, _ = _cell_game(family, int(m), merge_blocks=True)
    return _solution(game, tol, max_iter, int(m))


def tail_minimax_tilde(family: Family, m: int, tol: float = DEFAULT_TOL,
                       max_iter: int = DEFAULT_MAX_ITER) -> MinimaxSolution:
    """Tail game with ``tau_p log2(1/tau_p)`` added to each member's payoff,
    i.e. ``inf_q sup_p tau_p D(p(. | x >= m) || q)``; never negative."""
    game, _ = _cell_game(family, int(m), merge_blocks=True, tilde=True)
    return _solution(game, tol, max_iter, int(m))


def normalized_tail_minimax(family: Family, m: int, tol: float = DEFAULT_TOL,
                            max_iter: int = DEFAULT_MAX_ITER) -> MinimaxSolution:
    """Diagnostic: ``inf_q sup_p (1/tau_p) sum_{x >= m} p log2(p/q)`` over members
    with positive tail mass."""
    game, _ = _cell_game(family, int(m), merge_blocks=True, normalize=True)
    return _solution(game, tol, max_iter, int(m))


@dataclass(frozen=True)
class TailCurvePoint:
    m: int
    tail: float
    tail_tilde: float
    converged: bool
    gap: float


def tail_redundancy_curve(family: Family, m_grid: Sequence[int],
                          tol: float = DEFAULT_TOL) -> list[TailCurvePoint]:
    """Tail-game values along an increasing threshold grid; the last entry is
    the finite-threshold estimate of the limiting tail redundancy."""
    grid = [int(m) for m in m_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise BadParameter("m_grid must be strictly increasing")
    out = []
    for m in grid:
        plain = tail_minimax(family, m, tol)
        tilde = tail_minimax_tilde(family, m, tol)
        out.append(TailCurvePoint(m, plain.value, tilde.value, plain.converged and tilde.converged,
                                  max(plain.duality_gap, tilde.duality_gap)))
    return out


def min_tau_log_tau(family: Family, m: int) -> float:
    """``inf_p tau_p log2 tau_p`` with ``tau_p = p(x >= m)``."""
    return float(_plogp(family.tail_masses(m)).min())


# -- lower bounds ----------------------------------------------------------


def hellinger_matrix(family: Family) -> np.ndarray:
    K = len(family)
    h = np.zeros((K, K))
    for i in range(K):
        for j in range(i + 1, K):
            h[i, j] = h[j, i] = hellinger(family.members[i], family.members[j])
    return h


def hellinger_lower_bound(family: Family, prior=None, n: int = 1) -> float:
    """``E_{i~prior} -log2 E_{j~prior} exp(-n h(p_i, p_j) / 2)`` in bits."""
    pi = _check_prior(family, prior)
    h = hellinger_matrix(family)
    inner = np.exp(-n * h / 2.0) @ pi
    return fsum(pi * -np.log2(inner))


def packing_lower_bound(event_probs: Sequence[float], n_events: int | None = None) -> float:
    """``min(event_probs) * log2(N)`` for ``N`` disjoint events."""
    probs = np.asarray(event_probs, dtype=float)
    count = len(probs) if n_events is None else int(n_events)
    if probs.size == 0 or np.any(probs < 0) or np.any(probs > 1) or not np.all(np.isfinite(probs)):
        raise BadInput("event probabilities must lie in [0, 1]")
    if count < 2:
        raise BadInput("at least two events are needed")
    return float(probs.min()) * math.log2(count)


@dataclass(frozen=True)
class PackingBound:
    value: float
    members: tuple[int, ...]
    event_probs: tuple[float, ...]


def family_packing_bound(family: Family, n: int) -> PackingBound:
    """Packing bound for ``n``-letter blocks.

    Member ``k``'s event is the set of blocks that use only symbols in its
    support and at least one symbol no other member can emit.  These events are
    disjoint, and ``p_k(E_k) = 1 - (1 - u_k)**n`` where ``u_k`` is the mass on
    the member's private symbols.  The best prefix of members sorted by event
    probability is used.
    """
    _, seg_lengths, table = _segments(family.members)
    lengths = _as_float(seg_lengths)
    owners = (table > 0).sum(axis=0)
    private = ((table * lengths) * (owners == 1)).sum(axis=1)
    probs = 1.0 - (1.0 - np.clip(private, 0.0, 1.0)) ** n
    order = np.argsort(-probs, kind="stable")
    best = PackingBound(0.0, (), ())
    for count in range(2, len(order) + 1):
        value = float(probs[order[count - 1]]) * math.log2(count)
        if value > best.value:
            chosen = order[:count]
            best = PackingBound(value, tuple(int(i) for i in chosen), tuple(float(probs[i]) for i in chosen))
    return best


# -- partitions and total boundedness -------------------------------------


def partition_diameter(family: Family, partition: Sequence[Sequence[int]]) -> float:
    """Largest Hellinger distance between two members sharing a cell."""
    seen = [i for cell in partition for i in cell]
    if sorted(seen) != list(range(len(family))):
        raise BadPartition("partition must cover every member index exactly once")
    diameter = 0.0
    for cell in partition:
        for a, b in itertools.combinations(cell, 2):
            diameter = max(diameter, hellinger(family.members[a], family.members[b]))
    return diameter


def totally_bounded_threshold(epsilon: float) -> int:
    """Index ``m`` beyond which every pair of ``u_k`` lies within ``epsilon``."""
    if epsilon <= 0:
        raise BadParameter("epsilon must be positive")
    return math.ceil(math.sqrt(3.0 / epsilon) - 1e-9) + 1


def totally_bounded_partition(epsilon: float, k_max: int) -> list[list[int]]:
    """Partition of ``u_1..u_{k_max}`` (indices 0-based) into singletons up to
    the threshold and one cell holding the rest; ``threshold + 1`` cells."""
    m = totally_bounded_threshold(epsilon)
    if k_max <= m:
        return [[i] for i in range(k_max)]
    return [[i] for i in range(m)] + [list(range(m, k_max))]


# -- sequences -------------------------------------------------------------


@dataclass(frozen=True)
class FeketeReport:
    slope_estimate: float
    violations: tuple[tuple[int, int, float], ...]

    @property
    def subadditive(self) -> bool:
        return not self.violations


def fekete_limit(seq, tol: float = 1e-6, slack=None) -> FeketeReport:
    """Check ``a_{n+m} <= a_n + a_m`` on all available index pairs and return
    ``min a_n / n`` as the limit estimate.

    ``seq`` is a mapping or list of ``(n, a_n)`` pairs; ``slack`` optionally
    maps ``n`` to an extra allowance (e.g. a confidence half-width).
    """
    pairs = list(seq.items()) if isinstance(seq, dict) else [tuple(p) for p in seq]
    values = {}
    for n, a in pairs:
        if n in values:
            raise BadInput(f"index {n} repeated")
        values[int(n)] = float(a)
    if not values:
        raise BadInput("empty sequence")
    slack = slack or {}
    keys = sorted(values)
    violations = []
    for i, n in enumerate(keys):
        for m in keys[i:]:
            if n + m in values:
                allow = tol + slack.get(n, 0.0) + slack.get(m, 0.0) + slack.get(n + m, 0.0)
                excess = values[n + m] - values[n] - values[m]
                if excess > allow:
                    violations.append((n, m, excess))
    return FeketeReport(min(values[n] / n for n in keys), tuple(violations))


def max_sequence_limit(seqs: Sequence[Sequence[float]]) -> list[float]:
    """Elementwise maximum of equally long sequences."""
    if not seqs:
        raise BadInput("no sequences given")
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise LengthMismatch(f"sequence lengths differ: {sorted(lengths)}")
    return [float(v) for v in np.max(np.asarray(seqs, dtype=float), axis=0)]


# -- worst case and diagnostics --------------------------------------------


def shtarkov_redundancy(family: Family) -> float:
    """Worst-case single-letter redundancy ``log2 sum_x max_k p_k(x)``."""
    _, seg_lengths, table = _segments(family.members)
    return math.log2(fsum(_as_float(seg_lengths) * table.max(axis=0)))


def detect_divergence(values: Sequence[float], tol: float = 1e-3, rounds: int = 3) -> bool:
    """True when each of the last ``rounds`` increments exceeds ``tol``."""
    if len(values) < rounds + 1:
        return False
    tail = np.diff(np.asarray(values[-(rounds + 1):], dtype=float))
    return bool(np.all(tail > tol))


def minimax_growth(families: Sequence[Family], tol: float = DEFAULT_TOL) -> list[MinimaxSolution]:
    """Solve single-letter minimax over a nested sequence of growing families
    (e.g. doubling sizes) and flag the last solution as diverging when the
    value keeps increasing across three successive doublings."""
    sols = [minimax_redundancy(f, tol=tol) for f in families]
    if sols and detect_divergence([s.value for s in sols]):
        last = sols[-1]
        sols[-1] = MinimaxSolution(
            last.q_star, last.value, last.duality_gap, last.iterations, last.converged,
            last.prior, last.lower_bound, last.member_payoffs, last.q_cells, diverging=True,
        )
    return sols


def grid_search_game(game: Game, resolution: float = 1e-3, refine: int = 2) -> float:
    """Brute-force ``min_Q max_k f_k(Q)`` over a simplex mesh (at most 3 cells),
    followed by local mesh refinements around the best point."""
    C = game.n_cells
    if C > 3 or game.n_members > 3:
        raise BadInput("grid search is limited to 3 cells and 3 members")
    if C == 1:
        return float(game.payoffs(np.ones(1)).max())
    steps = int(round(1 / resolution))
    if C == 2:
        grid = np.stack([np.arange(steps + 1), steps - np.arange(steps + 1)], axis=1) / steps
    else:
        i, j = np.triu_indices(steps + 1)
        a, b = i, j - i
        grid = np.stack([a, b, steps - a - b], axis=1) / steps
    best_point, best = _mesh_min(game, grid)
    width = resolution
    for _ in range(refine):
        offsets = np.linspace(-width, width, 41)
        if C == 2:
            cand = np.stack([best_point[0] + offsets, 1 - best_point[0] - offsets], axis=1)
        else:
            da, db = np.meshgrid(offsets, offsets)
            a = best_point[0] + da.ravel()
            b = best_point[1] + db.ravel()
            cand = np.stack([a, b, 1 - a - b], axis=1)
        cand = cand[np.all(cand >= 0, axis=1)]
        point, value = _mesh_min(game, cand)
        if value < best:
            best_point, best = point, value
        width /= 20
    return best


def _mesh_min(game: Game, grid: np.ndarray) -> tuple[np.ndarray, float]:
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log2(grid)
        terms = np.where(game.mass[None, :, :] > 0, game.mass[None, :, :] * logs[:, None, :], 0.0)
        terms = np.where((game.mass[None, :, :] > 0) & (grid[:, None, :] <= 0), -np.inf, terms)
    values = (game.const[None, :] - terms.sum(axis=2)).max(axis=1)
    k = int(np.argmin(values))
    return grid[k], float(values[k])
