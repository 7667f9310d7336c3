import numpy as np
import pytest

from echomem.levels import (
    LevelScheme,
    load_level_scheme,
    select_nlpe_levels,
    transition_frequency,
    _select_excited,
)


def uniform_scheme():
    return LevelScheme(
        ground_energies=tuple(range(6)),
        excited_energies=tuple(range(6)),
        optical_origin=0.0,
        branching=np.full((6, 6), 1.0 / 6.0),
    )


def test_shipped_table_values(scheme):
    assert scheme.ratio(1, 1) == pytest.approx(0.57)
    assert scheme.ratio(3, 3) == pytest.approx(0.44)
    assert scheme.ratio(4, 2) == pytest.approx(0.10)


def test_shipped_table_doubly_stochastic(scheme):
    assert np.all(np.abs(scheme.branching.sum(axis=0) - 1.0) <= 0.02)
    assert np.all(np.abs(scheme.branching.sum(axis=1) - 1.0) <= 0.02)


def test_row_sum_violation_rejected(cfg):
    doc = {k: (list(v) if isinstance(v, list) else v) for k, v in cfg["levels"].items()}
    bad = [list(row) for row in doc["branching"]]
    bad[2] = [0.8 * x for x in bad[2]]  # row sums to 0.80
    doc = dict(doc, branching=bad)
    with pytest.raises(ValueError, match="row 3"):
        load_level_scheme(doc)


def test_negative_ratio_rejected(cfg):
    bad = [list(row) for row in cfg["levels"]["branching"]]
    bad[0][0] = -0.1
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        load_level_scheme(dict(cfg["levels"], branching=bad))


def test_malformed_dimensions_rejected(cfg):
    with pytest.raises(ValueError):
        load_level_scheme(dict(cfg["levels"], branching=[[1.0]]))
    with pytest.raises(ValueError):
        load_level_scheme(dict(cfg["levels"], ground_energies_hz=[0.0, 1.0]))


def test_uniform_table_accepted():
    scheme = uniform_scheme()
    assert scheme.ratio(5, 5) == pytest.approx(1.0 / 6.0)


def test_non_monotone_energies_rejected(cfg):
    doc = dict(cfg["levels"], ground_energies_hz=[0.0, 2e6, 1e6, 3e6, 4e6, 5e6])
    with pytest.raises(ValueError, match="increasing"):
        load_level_scheme(doc)


def test_zefoz_spin_anchor(scheme):
    assert scheme.ground_splitting(3, 4) == pytest.approx(12.456e6)


def test_reference_line_is_zero(scheme):
    # optical origin 0 makes the 1g-1e line the frequency reference
    assert transition_frequency(scheme, 1, 1) == pytest.approx(0.0)


def test_transition_frequency_additivity(scheme):
    rng = np.random.default_rng(7)
    for _ in range(20):
        g, g2, e, e2 = rng.integers(1, 7, size=4)
        lhs = transition_frequency(scheme, g, e) - transition_frequency(scheme, g, e2)
        rhs = scheme.excited_energies[e - 1] - scheme.excited_energies[e2 - 1]
        assert lhs == pytest.approx(rhs, abs=1e-6)
        lhs = transition_frequency(scheme, g, e) - transition_frequency(scheme, g2, e)
        rhs = scheme.ground_energies[g2 - 1] - scheme.ground_energies[g - 1]
        assert lhs == pytest.approx(rhs, abs=1e-6)


def test_index_out_of_range(scheme):
    with pytest.raises(ValueError, match="out of range"):
        transition_frequency(scheme, 0, 1)
    with pytest.raises(ValueError, match="out of range"):
        transition_frequency(scheme, 1, 7)


def test_nlpe_selection_on_shipped_table(scheme, four):
    assert four.ground_pair == (3, 4)
    assert four.signal_excited == 3  # R(3, e) peaks at 0.44
    assert four.auxiliary_excited == 2
    # frozen score table: R(3,e) * (1 - R(4,e)) over the five candidates
    scores = {
        1: 0.06 * 1.00,
        2: 0.18 * 0.90,
        4: 0.10 * 0.58,
        5: 0.01 * 0.96,
        6: 0.21 * 0.70,
    }
    assert max(scores, key=scores.get) == 2
    assert scores[2] == pytest.approx(0.162)
    assert scores[6] == pytest.approx(0.147)


def test_four_level_frequencies(scheme, four):
    assert four.spin_frequency == pytest.approx(12.456e6)
    assert four.signal_frequency == pytest.approx(transition_frequency(scheme, 3, 3))
    assert four.control_frequencies[0] == pytest.approx(transition_frequency(scheme, 4, 3))
    assert four.control_frequencies[1] == pytest.approx(transition_frequency(scheme, 3, 2))


def test_uniform_table_tie_breaks_low():
    four = select_nlpe_levels(uniform_scheme(), (3, 4))
    assert four.signal_excited == 1
    assert four.auxiliary_excited == 2


def test_selection_permutation_covariance(scheme):
    rng = np.random.default_rng(3)
    table = scheme.branching
    base = _select_excited(table, 3, 4)
    for _ in range(10):
        perm = rng.permutation(6)
        permuted = table[:, perm]
        sig, aux = _select_excited(permuted, 3, 4)
        # relabeling excited levels permutes the selection accordingly
        assert perm[sig - 1] + 1 == base[0]
        assert perm[aux - 1] + 1 == base[1]


def test_degenerate_scores_rejected():
    # a permutation table is doubly stochastic, but the g3 row couples to a
    # single excited level, so every auxiliary candidate scores zero
    scheme = LevelScheme(tuple(range(6)), tuple(range(6)), 0.0, np.eye(6))
    with pytest.raises(ValueError, match="degenerate"):
        select_nlpe_levels(scheme, (3, 4))
