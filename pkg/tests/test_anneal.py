import itertools
import math

import numpy as np
import pytest

from neurocomp import anneal as an
from neurocomp.hopfield import PatternSet, hebb_weights
from neurocomp.numerics import RandomStream, binomial_stderr


class FixedStep:
    """A two-state model whose proposal always costs dH."""

    def __init__(self, dH):
        self.dH = dH

    def energy(self, config):
        return 0.0

    def propose(self, config, stream):
        return 1 - config, self.dH

    def is_valid(self, config):
        return True


def test_metropolis_downhill_and_infinite_temperature():
    s = RandomStream(0)
    assert all(an.metropolis_step(FixedStep(-1.0), 0, 5.0, s)[1] for _ in range(100))
    assert all(an.metropolis_step(FixedStep(3.0), 0, 0.0, s)[1] for _ in range(100))


def test_metropolis_rate_is_exp_minus_one():
    s = RandomStream(1)
    n = 100_000
    hits = sum(an.metropolis_step(FixedStep(1.0), 0, 1.0, s)[1] for _ in range(n))
    assert abs(hits / n - math.exp(-1)) < 3 * binomial_stderr(math.exp(-1), n)


def test_glauber_acceptance_limits():
    assert an.glauber_acceptance(0.0, 3.0) == 0.5
    assert an.glauber_acceptance(-1.0, math.inf) == 1.0
    assert an.glauber_acceptance(1.0, math.inf) == 0.0
    assert an.glauber_acceptance(1e6, 1.0) == 0.0
    with pytest.raises(ValueError):
        an.acceptance_function("gibbs-ish")


def test_glauber_two_level_occupancy():
    model = an.TwoLevelModel()
    s = RandomStream(2)
    state, visits, n = 0, 0, 200_000
    for _ in range(n):
        state = an.glauber_step(model, state, 1.0, s)
        visits += state
    expected = math.exp(-1) / (1 + math.exp(-1))
    assert expected == pytest.approx(0.2689, abs=1e-4)
    # successive states are correlated; allow for it with a generous factor on the iid error
    assert abs(visits / n - expected) < 3 * 2 * binomial_stderr(expected, n)


def test_metropolis_is_at_least_glauber():
    for dH, beta in itertools.product([-2.0, -0.1, 0.0, 0.3, 4.0], [0.0, 0.5, 2.0, math.inf]):
        assert an.metropolis_acceptance(dH, beta) >= an.glauber_acceptance(dH, beta)


def test_detailed_balance_examples():
    two = an.TwoLevelModel()
    assert an.detailed_balance_check(an.METROPOLIS, two, 1.0, (0, 1)) < 1e-15
    flat = an.RingModel([1.0, 1.0, 1.0])
    assert an.detailed_balance_check(an.GLAUBER, flat, 0.9, (0, 1)) == 0.0
    spins = an.SpinFlipModel(hebb_weights(PatternSet(np.array([[1, -1, 1]]))).weights)
    states = spins.states()
    assert len(states) == 8
    worst = max(an.detailed_balance_check(an.GLAUBER, spins, 0.7, pair) for pair in itertools.combinations(states, 2))
    assert worst < 1e-12


@pytest.mark.parametrize("kernel", [an.METROPOLIS, an.GLAUBER])
@pytest.mark.parametrize("beta", [0.0, 0.4, 3.0])
def test_boltzmann_distribution_is_stationary(kernel, beta):
    rng = RandomStream(3)
    ring = an.RingModel(list(rng.normal(size=9)))
    w = rng.normal(size=(3, 3))
    spins = an.SpinFlipModel(w + w.T - np.diag(np.diag(w + w.T)), rng.normal(size=3))
    for model in (an.TwoLevelModel(0.2, -0.5), ring, spins):
        assert an.stationarity_residual(kernel, model, beta) < 1e-12
        assert an.max_detailed_balance_residual(kernel, model, beta) < 1e-12


def test_tsp_energy_examples():
    zero = an.TourMatrix(np.zeros((3, 3)), np.zeros((3, 2)))
    assert an.tsp_energy(zero, 2.0, 2.0) == 6.0
    d = an.distance_matrix(an.SEVEN_CITIES)
    for order in (an.TOUR_A, an.TOUR_B):
        tour = an.TourMatrix.from_order(order, an.SEVEN_CITIES)
        assert tour.is_valid() and tour.order() == list(order)
        assert an.tsp_energy(tour, 5.0, 7.0) == pytest.approx(an.tour_length(order, d), abs=1e-12)
    assert an.tour_length(an.TOUR_A, d) < an.tour_length(an.TOUR_B, d)


def test_tsp_energy_invariant_under_rotation_and_reversal():
    d = an.distance_matrix(an.SEVEN_CITIES)
    base = an.tour_length(an.TOUR_A, d)
    for r in range(7):
        rotated = an.TOUR_A[r:] + an.TOUR_A[:r]
        for order in (rotated, rotated[::-1]):
            m = an.TourMatrix.from_order(order, an.SEVEN_CITIES)
            assert an.tsp_energy(m, 1.0, 1.0) == pytest.approx(base, abs=1e-12)
            assert an.canonical_tour(order) == an.canonical_tour(an.TOUR_A)


def test_tsp_model_increment_matches_recomputation():
    model = an.TSPModel(an.SEVEN_CITIES)
    s = RandomStream(4)
    config = model.random_config(s)
    for _ in range(300):
        cand, dH = model.propose(config, s)
        assert model.is_valid(cand)
        assert dH == pytest.approx(model.energy(cand) - model.energy(config), abs=1e-12)
        assert model.energy_matrix(cand) == pytest.approx(model.energy(cand), abs=1e-12)
        config = cand


def test_seven_city_annealing_finds_the_enumerated_optimum():
    best, best_len, count = an.exhaustive_tsp(an.SEVEN_CITIES)
    assert count == math.factorial(6) // 2
    model = an.TSPModel(an.SEVEN_CITIES)
    s = RandomStream(5)
    found = min(
        (an.anneal(model, model.random_config(s), an.Schedule(1.0, 1.15, 20, 40), s) for _ in range(20)),
        key=lambda r: r.best_energy,
    )
    assert found.best_energy == pytest.approx(best_len, abs=1e-12)
    assert an.canonical_tour(found.best_config) == an.canonical_tour(best)


def test_zero_temperature_descends_to_the_local_minimum():
    chain = an.RingModel([9.0, 5.0, 2.0, 0.0, 1.0, 3.0, 6.0, 8.0, 10.0, 12.0])
    res = an.anneal(chain, 8, an.Schedule(math.inf, 1.0, 200, 1), RandomStream(6))
    assert res.best_config == 3 and res.best_energy == 0.0
    with pytest.raises(ValueError):
        an.anneal(chain, 0, an.Schedule(stages=0), RandomStream(0))


def test_kqueens_validity():
    assert an.kqueens_valid([[1]], 1)
    diag = np.zeros((4, 4), int)
    diag[0, 0] = diag[1, 1] = 1
    assert not an.kqueens_valid(diag, 2)
    assert an.kqueens_valid(an.queens_board(an.EIGHT_QUEENS), 8)
    assert not an.kqueens_valid(an.queens_board(range(8)), 8)


def test_kqueens_model_energy_and_annealing():
    model = an.KQueensModel(8)
    assert model.energy(an.EIGHT_QUEENS) == 0.0
    assert model.energy(tuple(range(8))) == 28.0
    s = RandomStream(7)
    config = model.random_config(s)
    for _ in range(200):
        cand, dH = model.propose(config, s)
        assert dH == model.energy(cand) - model.energy(config)
        config = cand
    res = an.anneal(model, model.random_config(s), an.Schedule(0.5, 1.2, 50, 30), s, stop_energy=0.0)
    assert res.best_energy == 0.0 and model.is_valid(res.best_config)


def test_digest_energy_toy_and_mirror():
    toy = an.DigestInstance((6, 4), (7, 3), (6, 1, 3), 10)
    assert an.double_digest_fragments((6, 4), (7, 3)) == [6, 3, 1]
    assert an.digest_energy(toy, (6, 4), (7, 3)) == 0.0
    assert an.digest_energy(toy, (4, 6), (7, 3)) > 0.0
    assert an.digest_energy(toy, (4, 6), (3, 7)) == 0.0
    with pytest.raises(ValueError):
        an.DigestInstance((6, 4), (7, 2), (6, 1, 3), 10)


def test_digest_table_instance():
    inst = an.TABLE_DIGESTS[10000]
    sols = an.exhaustive_digest_solutions(inst)
    assert sols and all(an.digest_energy(inst, s, m) == 0.0 for s, m in sols)
    assert all(an.mirror(c) in sols for c in sols)
    s = RandomStream(8)
    model = an.DigestModel(inst)
    config = model.random_config(s)
    while config in sols:
        config = model.random_config(s)
    assert model.energy(config) > 0.0
    assert model.energy(an.mirror(config)) == pytest.approx(model.energy(config))
    for _ in range(100):
        config, _ = model.propose(config, s)
        assert model.is_valid(config)


def test_digest_annealing_reaches_zero():
    inst = an.TABLE_DIGESTS[10000]
    model = an.DigestModel(inst)
    s = RandomStream(9)
    best = math.inf
    for _ in range(50):
        res = an.anneal(model, model.random_config(s), an.Schedule(1e-3, 1.2, 10, 40), s, stop_energy=0.0)
        best = min(best, res.best_energy)
        if best == 0.0:
            break
    assert best == 0.0


def test_file_roundtrips(tmp_path):
    an.write_tsp(tmp_path / "c.tsp", an.SEVEN_CITIES)
    assert np.array_equal(an.read_tsp(tmp_path / "c.tsp"), an.SEVEN_CITIES)
    inst = an.TABLE_DIGESTS[20000]
    an.write_digest(tmp_path / "d.txt", inst)
    assert an.read_digest(tmp_path / "d.txt") == inst
