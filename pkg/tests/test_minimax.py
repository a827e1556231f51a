import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from tailcode.errors import BadInput, BadPartition, GuardExceeded, LengthMismatch
from tailcode.families import (
    Construction,
    Family,
    binary_tail,
    binary_tail_family,
    bounded_logmoment_family,
    prop1_q,
    totally_bounded_family,
)
from tailcode.minimax import (
    _cell_game,
    bayes_redundancy,
    family_packing_bound,
    fekete_limit,
    grid_search_game,
    hellinger_lower_bound,
    max_sequence_limit,
    minimax_growth,
    minimax_redundancy,
    normalized_tail_minimax,
    packing_lower_bound,
    partition_diameter,
    tail_minimax,
    tail_minimax_tilde,
    tail_redundancy_curve,
    totally_bounded_partition,
    totally_bounded_threshold,
)
from tailcode.pmf import kl_divergence, make_pmf, point_mass


def custom(*atom_maps):
    return Family(tuple(make_pmf(a) for a in atom_maps), tuple(f"p{i}" for i in range(len(atom_maps))))


TWO_MEMBER = custom({1: 0.5, 2: 0.5}, {1: 1.0})
TWO_SPIKES = custom({1: 0.9, 5: 0.1}, {1: 0.9, 6: 0.1})


# -- Bayes ---------------------------------------------------------------------


def test_bayes_identity_channel():
    fam = custom({1: 1.0}, {2: 1.0})
    assert bayes_redundancy(fam).value == pytest.approx(1.0)


def test_bayes_two_member_example():
    # H(1/4) - 1/2
    assert bayes_redundancy(TWO_MEMBER, [0.5, 0.5]).value == pytest.approx(0.31127812445913283, abs=1e-12)


def test_bayes_point_prior_is_zero():
    fam = binary_tail_family([0.5, 0.25, 0.125])
    assert bayes_redundancy(fam, [0, 1, 0]).value == pytest.approx(0.0, abs=1e-12)


def test_bayes_guard_and_monte_carlo():
    fam = bounded_logmoment_family(9)
    with pytest.raises(GuardExceeded):
        bayes_redundancy(fam, n=64)
    mc = bayes_redundancy(fam, n=3, monte_carlo=True, guard=10, samples=20_000, seed=1)
    exact = bayes_redundancy(fam, n=3)
    assert not mc.exact
    lo, hi = mc.ci95
    assert lo - 4 * mc.stderr <= exact.value <= hi + 4 * mc.stderr


# -- minimax ----------------------------------------------------------------------


def test_two_member_channel():
    sol = minimax_redundancy(TWO_MEMBER)
    assert sol.value == pytest.approx(0.32192809488736235, abs=1e-6)
    assert sol.duality_gap <= 1e-6
    assert sol.prior == pytest.approx([0.4, 0.6], abs=1e-3)


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8, 16])
def test_disjoint_point_masses(k):
    sol = minimax_redundancy(custom(*({i + 1: 1.0} for i in range(k))))
    assert sol.value == pytest.approx(math.log2(k), abs=1e-6)
    for i in range(k):
        assert sol.q_star.prob(i + 1) == pytest.approx(1 / k, abs=1e-6)


def test_binary_tail_solver_below_block_law():
    fam = binary_tail_family([1 / d for d in range(2, 13)])
    primal = max(kl_divergence(p, prop1_q()) for p in fam)
    assert minimax_redundancy(fam).value <= primal


def test_minimax_n2_matches_capacity_of_product():
    # the block game of two disjoint point masses still carries one bit
    fam = custom({1: 1.0}, {2: 1.0})
    assert minimax_redundancy(fam, n=2).value == pytest.approx(1.0, abs=1e-6)


def test_solution_report_fields():
    report = minimax_redundancy(TWO_MEMBER).to_dict()
    assert set(report) >= {"value", "duality_gap", "iterations", "q_star_runs"}


# -- tail games -------------------------------------------------------------------


def test_tail_singleton_closed_form():
    p = make_pmf({1: 0.75, 9: 0.125, 11: 0.125})
    fam = Family((p,), ("p",))
    assert tail_minimax(fam, 9).value == pytest.approx(0.25 * math.log2(0.25), abs=1e-6)
    assert tail_minimax_tilde(fam, 9).value == pytest.approx(0.0, abs=1e-6)
    q = tail_minimax(fam, 9).q_star
    assert q.prob(9) == pytest.approx(0.5, abs=1e-6)


def test_tail_two_spikes():
    sol = tail_minimax(TWO_SPIKES, 5)
    assert sol.value == pytest.approx(0.1 * math.log2(0.2), abs=1e-6)
    assert sol.q_star.prob(5) == pytest.approx(0.5, abs=1e-4)
    assert tail_minimax_tilde(TWO_SPIKES, 5).value == pytest.approx(0.1, abs=1e-6)


def test_tail_m1_is_full_game():
    fam = binary_tail_family([0.5, 0.25, 0.2])
    assert tail_minimax(fam, 1).value == pytest.approx(minimax_redundancy(fam).value, abs=2e-6)


def test_empty_tail_game():
    fam = custom({1: 0.5, 2: 0.5})
    sol = tail_minimax(fam, 10)
    assert sol.empty and sol.value == 0.0


def test_normalized_diagnostic_of_two_spikes():
    # (1/tau) sum p log2(p/q) with q = 1/2 on each spike: log2(0.1 / 0.5)
    assert normalized_tail_minimax(TWO_SPIKES, 5).value == pytest.approx(math.log2(0.2), abs=1e-6)


def test_curve_requires_increasing_grid():
    with pytest.raises(Exception):
        tail_redundancy_curve(TWO_SPIKES, [4, 4])


def test_bounded_logmoment_curve_vanishes():
    curve = tail_redundancy_curve(bounded_logmoment_family(9), [1, 2, 4, 8])
    tildes = [pt.tail_tilde for pt in curve]
    assert all(b <= a + 2e-6 for a, b in zip(tildes, tildes[1:]))
    assert tildes[-1] <= 0.05


def test_binary_tail_closure_curve():
    fam = binary_tail_family([1 / d for d in range(2, 41)], ["all"])
    curve = tail_redundancy_curve(fam, [4, 16, 64, 256])
    assert curve[-1].tail >= 0.5
    assert [round(pt.tail, 3) for pt in curve] == [1.249, 1.107, 1.064, 1.041]


# -- lower bounds -----------------------------------------------------------------


def test_hellinger_bound_examples():
    assert hellinger_lower_bound(custom({1: 1.0})) == pytest.approx(0.0)
    disjoint = custom({1: 1.0}, {2: 1.0})
    # -log2((1 + e^-1) / 2)
    assert hellinger_lower_bound(disjoint) == pytest.approx(0.5480589169169519, abs=1e-12)
    values = [hellinger_lower_bound(disjoint, n=n) for n in (1, 4, 16, 64)]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert 1 - 1e-12 < values[-1] + 1e-12 <= 1 + 1e-12


def test_packing_bound_examples():
    assert packing_lower_bound([1 - 0.75**4] * 16) == pytest.approx(2.734375)
    assert packing_lower_bound([1.0, 1.0, 1.0, 1.0]) == pytest.approx(2.0)
    assert packing_lower_bound([0.0, 0.5]) == 0.0
    with pytest.raises(BadInput):
        packing_lower_bound([0.5])
    with pytest.raises(BadInput):
        packing_lower_bound([1.5, 0.5])


def test_family_packing_bound_sixteen_binary_tails():
    fam = Family(tuple(binary_tail(0.25, j) for j in range(1, 17)), tuple(str(j) for j in range(16)))
    bound = family_packing_bound(fam, 4)
    assert bound.value == pytest.approx(2.734375)
    assert len(bound.members) == 16


# -- partitions and totally bounded family -------------------------------------------


def test_partition_diameter_examples():
    fam = totally_bounded_family([1, 2, 3, 4])
    assert partition_diameter(fam, [[0], [1], [2], [3]]) == 0.0
    assert partition_diameter(fam, [[0], [1], [2, 3]]) <= 3 / 9
    with pytest.raises(BadPartition):
        partition_diameter(fam, [[0, 1], [1, 2, 3]])
    with pytest.raises(BadPartition):
        partition_diameter(fam, [[0, 1]])


def test_totally_bounded_recipe():
    assert totally_bounded_threshold(0.03) == 11
    cells = totally_bounded_partition(0.03, 14)
    assert len(cells) == 12
    fam = totally_bounded_family(range(1, 15))
    tail_cell = [c for c in cells if len(c) > 1]
    assert partition_diameter(fam, tail_cell + [[i] for c in cells if len(c) == 1 for i in c]) < 0.03


# -- sequence utilities -------------------------------------------------------------


def test_fekete_examples():
    linear = fekete_limit([(n, 3 * n) for n in range(1, 20)])
    assert linear.slope_estimate == pytest.approx(3) and linear.subadditive
    log_seq = fekete_limit([(n, n + math.log2(n)) for n in range(2, 40)])
    assert log_seq.subadditive
    assert log_seq.slope_estimate == pytest.approx(min(1 + math.log2(n) / n for n in range(2, 40)))
    assert not fekete_limit([(n, n * n) for n in range(1, 10)]).subadditive


def test_max_sequence_limit():
    assert max_sequence_limit([[1, 1, 1], [2, 2, 2]]) == [2, 2, 2]
    assert max_sequence_limit([[0.5, 0.25]]) == [0.5, 0.25]
    a = [1 + 1 / m for m in range(1, 200)]
    b = [2 - 1 / m for m in range(1, 200)]
    assert max_sequence_limit([a, b])[-1] == pytest.approx(2, abs=1e-2)
    with pytest.raises(LengthMismatch):
        max_sequence_limit([[1, 2], [1]])


def test_divergence_flag_on_growing_uniforms():
    # minimax redundancy of {uniform on 1..2^k : k <= K} keeps growing with K
    fams = [custom(*({x: 1 / 2**k for x in range(1, 2**k + 1)} for k in range(K + 1))) for K in range(1, 6)]
    sols = minimax_growth(fams)
    assert sols[-1].diverging


def test_no_divergence_flag_on_fixed_family():
    fam = binary_tail_family([0.5, 0.25])
    assert not minimax_growth([fam] * 5)[-1].diverging


# -- properties ---------------------------------------------------------------------


@st.composite
def small_families(draw, max_members=4, max_symbols=6):
    k = draw(st.integers(1, max_members))
    members = []
    for _ in range(k):
        size = draw(st.integers(1, max_symbols))
        symbols = draw(st.lists(st.integers(1, 12), min_size=size, max_size=size, unique=True))
        w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=size, max_size=size)))
        members.append(make_pmf(dict(zip(symbols, w / w.sum()))))
    return Family(tuple(members), tuple(f"p{i}" for i in range(k)))


@given(small_families(), st.data())
@settings(max_examples=40, deadline=None)
def test_duality_sandwich_and_bayes_bound(fam, data):
    sol = minimax_redundancy(fam)
    assert sol.lower_bound <= sol.value + 1e-9
    assert sol.duality_gap <= 1e-6 + 1e-12 or not sol.converged
    assert bayes_redundancy(fam, sol.prior).value <= sol.value + 1e-6
    w = np.array(data.draw(st.lists(st.floats(0.0, 1.0), min_size=len(fam), max_size=len(fam))))
    if w.sum() > 0:
        assert bayes_redundancy(fam, w / w.sum()).value <= sol.value + 1e-6


@given(small_families(), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_lower_bound_ordering(fam, n):
    bayes = bayes_redundancy(fam, None, n).value
    assert hellinger_lower_bound(fam, None, n) <= bayes + 1e-6
    packing = family_packing_bound(fam, n)
    if len(packing.members) >= 2:
        pi = np.zeros(len(fam))
        pi[list(packing.members)] = 1 / len(packing.members)
        assert packing.value <= bayes_redundancy(fam, pi, n).value + 1e-6


@given(small_families(max_members=3, max_symbols=3), st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_solver_matches_grid_search(fam, m):
    game, _ = _cell_game(fam, m, merge_blocks=False)
    if game.n_cells == 0 or game.n_cells > 3:
        return
    sol = tail_minimax(fam, m)
    assert sol.value == pytest.approx(grid_search_game(game), abs=2e-3)
