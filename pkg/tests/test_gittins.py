from fractions import Fraction as F

from dynalloc.gittins import (
    check_decreasing_identity,
    check_index_agreement,
    check_right_inverse,
    check_u_martingale,
    gittins_forward_induction,
    gittins_index,
    index_sequence,
    restart_at_zero,
    restart_representation,
    u_martingale,
)
from dynalloc.prob_core import FiniteSpace, Partition
from dynalloc.stopping import RewardsProcess, m_grid


def test_index_values(a_proj, b_proj):
    assert gittins_index(*a_proj, 0) == (2,)
    assert gittins_index(*a_proj, 1) == (0,)
    assert gittins_index(*b_proj, 0) == (F(12, 5), F(12, 5))
    assert gittins_index(*b_proj, 1) == (4, 0)
    assert gittins_index(*b_proj, 2) == (0, 0)


def test_forward_induction_agrees(a_proj, b_proj):
    assert gittins_forward_induction(*a_proj, 0) == (2,)
    assert gittins_forward_induction(*b_proj, 0) == (F(12, 5), F(12, 5))
    assert check_index_agreement(*b_proj).passed


def test_constant_rewards():
    sp = FiniteSpace(("w",), (1,))
    beta, c, H = F(1, 2), F(1, 3), 4
    rp = RewardsProcess(sp, ((c,),) * H, beta, 1)
    filt = [Partition.trivial(1)] * (H + 1)
    M = index_sequence(rp, filt).M
    # the index is the best reward rate, c, in (1 - beta)-scaled units
    assert all((1 - beta) * M[t][0] == c for t in range(H))
    assert check_decreasing_identity(rp, filt).passed


def test_lower_envelope(b_proj):
    seq = index_sequence(*b_proj)
    assert seq.lower(0, 0) == (F(12, 5), F(12, 5))
    assert seq.lower(0, 1) == (F(12, 5), 0)
    assert seq.lower(0, 2) == (0, 0)


def test_right_inverse_grids(a_proj, b_proj):
    rp, filt = a_proj
    assert check_right_inverse(rp, filt, 0, m_grid(rp, filt, 0)).passed
    rep = check_right_inverse(*b_proj, 0, [0, 1, F(12, 5), 4, 5])
    assert rep.passed
    jumps = rep.details["certified_jumps"]
    assert {"m": F(12, 5), "atom": ("u",), "from": 0, "to": 2} in jumps


def test_perturbed_envelope_breaks_equivalence(b_proj):
    seq = index_sequence(*b_proj)
    bad = seq.lower(0, 1)
    bad = (bad[0] - F(1, 10), bad[1])
    rep = check_right_inverse(*b_proj, 0, [1, F(47, 20), 3], lower={1: bad})
    assert not rep.passed
    assert rep.witness["kind"] == "equivalence"
    assert rep.witness["m"] == F(47, 20)


def test_restart_representation(a_proj, b_proj):
    assert restart_representation(*a_proj, 0, 0) == ((1,), (1,))
    lhs, rhs = restart_representation(*b_proj, 0, 0)
    assert lhs == rhs == (F(3, 2), F(3, 2))
    for m in m_grid(*b_proj, 0):
        lhs, rhs = restart_representation(*b_proj, 0, m)
        assert lhs == rhs
    v0, plain, dec = restart_at_zero(*b_proj, 0)
    assert v0 == plain == dec


def test_u_martingale(a_proj, b_proj):
    U = u_martingale(*a_proj, 0)
    assert U[0] == (0,) and U[1] == (0,)
    assert check_u_martingale(*b_proj, 0).passed
    U = u_martingale(*b_proj, 0)
    assert sum(U[1]) / 2 == 0


def test_decreasing_identity_needs_decreasing_rewards(b_proj):
    rep = check_decreasing_identity(*b_proj)
    assert not rep.passed
    assert rep.witness["reason"] == "rewards not decreasing"
