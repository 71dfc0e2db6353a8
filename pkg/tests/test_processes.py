"""Process-family validation and weighted-combination rules."""

import pytest

from dealerlab.processes import (
    BrownianMartingale,
    CombinationError,
    Constant,
    Deterministic,
    OrnsteinUhlenbeck,
    SmoothRate,
    ZERO,
    combine,
    is_deterministic,
    validate_process,
)


def test_validation_flags_bad_parameters():
    assert validate_process(BrownianMartingale(0.0, -1.0))
    assert validate_process(OrnsteinUhlenbeck(0.0, -0.5, 0.0, 1.0))
    assert validate_process(OrnsteinUhlenbeck(0.0, 0.5, 0.0, -1.0))
    assert validate_process(Deterministic((1.0, 2.0)), n_nodes=3)
    assert not validate_process(Deterministic((1.0, 2.0, 3.0)), n_nodes=3)
    assert not validate_process(BrownianMartingale(0.0, 1.0))


def test_smooth_rate_nesting_depth_one():
    nested = SmoothRate(SmoothRate(Constant(1.0)))
    assert validate_process(nested)
    assert not validate_process(SmoothRate(Constant(1.0)))


def test_is_deterministic():
    assert is_deterministic(ZERO)
    assert is_deterministic(Constant(2.0))
    assert is_deterministic(Deterministic((0.0, 1.0)))
    assert is_deterministic(SmoothRate(Constant(1.0)))
    assert not is_deterministic(BrownianMartingale(0.0, 1.0))
    assert not is_deterministic(SmoothRate(OrnsteinUhlenbeck(0.0, 1.0, 0.0, 1.0)))


def test_combine_merges_shared_targets():
    xi = Constant(-1.0)
    terms = combine([(0.25, xi), (0.25, xi)])
    assert terms == ((0.5, xi),)


def test_combine_drops_zero_terms():
    assert combine([(0.5, ZERO), (0.0, Constant(1.0))]) == ()


def test_combine_merges_equal_stochastic_processes():
    xi = BrownianMartingale(0.0, 1.0)
    terms = combine([(0.25, xi), (0.25, xi), (0.5, ZERO)])
    assert terms == ((0.5, xi),)


def test_combine_allows_deterministic_mix():
    terms = combine([(1.0, Constant(2.0)), (1.0, Deterministic((0.0, 1.0)))])
    assert len(terms) == 2


def test_combine_rejects_mixed_stochastic_kinds():
    with pytest.raises(CombinationError):
        combine(
            [
                (0.5, BrownianMartingale(0.0, 1.0)),
                (0.5, OrnsteinUhlenbeck(0.0, 1.0, 0.0, 1.0)),
            ]
        )
    # same stochastic kind with different parameters stays in the family
    terms = combine([(0.5, BrownianMartingale(0.0, 1.0)), (0.5, BrownianMartingale(0.0, 2.0))])
    assert len(terms) == 2


def test_combine_cancelling_weights():
    xi = Constant(1.0)
    assert combine([(1.0, xi), (-1.0, xi)]) == ()
