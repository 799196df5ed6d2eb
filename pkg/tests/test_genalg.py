import itertools
from collections import Counter

import numpy as np
import pytest

from polarforge.construct import construct_bhattacharyya
from polarforge.core import AVector, CodeSpec, generator_matrix
from polarforge.decoder import DecoderConfig
from polarforge.genalg import (
    INIT_SNR_GRID,
    Fitness,
    FitnessEvaluator,
    GenAlgConfig,
    Individual,
    Population,
    compute_fitness,
    crossover,
    initial_candidates,
    initialize_population,
    mutation,
    population_size,
    run_genalg,
    update_population,
)
from polarforge.sim import StoppingRule

P84 = AVector.from_positions(8, [4, 6, 7, 8])


def _random_avector(rng, N, k):
    bits = np.zeros(N, dtype=np.uint8)
    bits[rng.choice(N, k, replace=False)] = 1
    return AVector(bits)


def _scored_population(T, size, N=16, k=8, seed=0):
    rng = np.random.default_rng(seed)
    members = []
    seen = set()
    while len(members) < size:
        a = _random_avector(rng, N, k)
        if a in seen:
            continue
        seen.add(a)
        members.append(Individual(a, 0, "init", Fitness(float(rng.random()), 1, 10)))
    return Population(members, T)


# ----------------------------------------------------------------------------- sizes


@pytest.mark.parametrize("T", range(1, 9))
def test_population_size_after_update(T):
    assert population_size(T) == (T * T + 3 * T) // 2
    pop = _scored_population(T, max(T, 3), N=32, k=16, seed=T)
    for _ in range(3):
        pop = update_population(pop, np.random.default_rng(T))
        assert len(pop.members) == population_size(T)
        for m in pop.members:
            if m.fitness is None:
                m.fitness = Fitness(float(np.random.default_rng(hash(m.a) % 2**32).random()), 1, 10)


def test_population_size_examples():
    assert population_size(5) == 20
    assert population_size(1) == 2
    assert population_size(3) == 9
    with pytest.raises(ValueError):
        population_size(0)


def test_update_needs_enough_members():
    with pytest.raises(RuntimeError):
        update_population(_scored_population(5, 3), np.random.default_rng(0))


def test_update_layout_and_elite_carry():
    pop = _scored_population(5, 20)
    ranked = pop.ranked()
    new = update_population(pop, np.random.default_rng(1))
    assert [m.a for m in new.members[:5]] == [m.a for m in ranked[:5]]
    assert all(m.fitness is ranked[i].fitness for i, m in enumerate(new.members[:5]))
    assert [m.origin for m in new.members[5:]] == ["mutation"] * 5 + ["crossover"] * 10
    assert all(m.fitness is None for m in new.members[5:])
    assert len({m.a for m in new.members}) == 20
    again = update_population(pop, np.random.default_rng(1), reeval=True)
    assert all(m.fitness is None for m in again.members)


# ----------------------------------------------------------------------------- mutation


def test_mutation_contract():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        N = 1 << int(rng.integers(1, 7))
        a = _random_avector(rng, N, int(rng.integers(1, N)))
        b = mutation(a, rng)
        assert b.ones == a.ones
        assert int(np.count_nonzero(a.bits != b.bits)) == 2


def test_mutation_forced_case():
    assert mutation(AVector([1, 0]), np.random.default_rng(0)).bits.tolist() == [0, 1]


def test_mutation_degenerate():
    with pytest.raises(ValueError):
        mutation(AVector([1, 1, 1, 1]), np.random.default_rng(0))
    with pytest.raises(ValueError):
        mutation(AVector([0, 0, 0, 0]), np.random.default_rng(0))


def test_mutation_is_uniform_over_pairs():
    rng = np.random.default_rng(42)
    trials = 100_000
    counts = Counter()
    for _ in range(trials):
        d = mutation(P84, rng).bits.astype(int) - P84.bits
        counts[(int(np.flatnonzero(d < 0)[0]), int(np.flatnonzero(d > 0)[0]))] += 1
    assert len(counts) == 16
    p = 1 / 16
    sigma = np.sqrt(trials * p * (1 - p))
    assert all(abs(c - trials * p) <= 3 * sigma for c in counts.values())


def test_mutation_support():
    rng = np.random.default_rng(3)
    a = _random_avector(rng, 16, 5)
    children = {mutation(a, rng) for _ in range(20_000)}
    assert len(children) == 5 * 11


# ----------------------------------------------------------------------------- crossover


def test_crossover_identical_parents():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = _random_avector(rng, 32, 13)
        assert crossover(a, a, rng) == a


def test_crossover_repair_reaches_all_weight_two_outputs():
    a1, a2 = AVector([1, 1, 0, 0]), AVector([0, 0, 1, 1])
    rng = np.random.default_rng(0)
    outs = Counter()
    for _ in range(6000):
        audit = []
        child = crossover(a1, a2, rng, audit)
        assert child.ones == 2 and len(audit) == 2
        outs[tuple(child.bits.tolist())] += 1
    expected = {tuple(int(i in c) for i in range(4)) for c in itertools.combinations(range(4), 2)}
    assert set(outs) == expected
    assert all(abs(v / 6000 - 1 / 6) < 0.03 for v in outs.values())


def test_crossover_audit_trail():
    rng = np.random.default_rng(5)
    for _ in range(500):
        a1, a2 = _random_avector(rng, 32, 12), _random_avector(rng, 32, 12)
        audit = []
        child = crossover(a1, a2, rng, audit)
        assert child.ones == 12
        flipped = set(audit)
        left = set(np.flatnonzero(child.bits[:16]).tolist())
        assert left <= set(np.flatnonzero(a1.bits[:16]).tolist()) | flipped
        right = set((np.flatnonzero(child.bits[16:]) + 16).tolist())
        assert right <= set((np.flatnonzero(a2.bits[16:]) + 16).tolist()) | flipped


def test_crossover_mismatched_parents():
    with pytest.raises(ValueError):
        crossover(AVector([1, 0, 0, 0]), AVector([1, 1, 0, 0]), np.random.default_rng(0))
    with pytest.raises(ValueError):
        crossover(AVector([1, 0]), AVector([1, 0, 0, 0]), np.random.default_rng(0))


# ----------------------------------------------------------------------------- fitness / initialisation

SMALL = CodeSpec.from_length(32, 16)


def _small_config(**kw):
    base = dict(spec=SMALL, snr_genalg=2.0, decoder=DecoderConfig("sc"), stop=StoppingRule(20, 4000), seed=3)
    base.update(kw)
    return GenAlgConfig(**base)


def test_initial_grid():
    assert len(INIT_SNR_GRID) == 21 and INIT_SNR_GRID[0] == 0.0 and INIT_SNR_GRID[-1] == 5.0


def test_initialize_population_members():
    cfg = _small_config()
    rng, seed = cfg.streams()
    pop = initialize_population(cfg, rng, FitnessEvaluator(cfg, seed))
    assert len(pop.members) == 20
    assert len({m.a for m in pop.members}) == 20
    assert all(m.a.ones == 16 and m.fitness is not None for m in pop.members)
    assert len(initial_candidates(cfg)) == len(set(initial_candidates(cfg)))


def test_identical_masks_identical_fitness():
    cfg = _small_config()
    a = construct_bhattacharyya(SMALL, design_snr_db=2.0)
    pop = Population([Individual(a), Individual(AVector(a.bits.copy()))], 1)
    compute_fitness(pop, cfg)
    assert pop.members[0].fitness.key() == pop.members[1].fitness.key()
    other = compute_fitness(Population([Individual(a)], 1), cfg)
    assert other.members[0].fitness.key() == pop.members[0].fitness.key()


def test_bec_without_erasures_has_zero_fitness():
    cfg = _small_config(channel="bec", snr_genalg=0.0, stop=StoppingRule(1, 512), n_pop_max=2)
    res = run_genalg(cfg)
    assert all(m.fitness.rate == 0.0 for m in res.population.members)


def test_ranking_is_reproducible():
    cfg = _small_config(n_pop_max=3)
    r1, r2 = run_genalg(cfg), run_genalg(cfg)
    assert [m.a for m in r1.population.ranked()] == [m.a for m in r2.population.ranked()]
    assert [(g, r) for g, r, _ in r1.history] == [(g, r) for g, r, _ in r2.history]


def test_zero_generations_returns_initial_best():
    cfg = _small_config(n_pop_max=0)
    res = run_genalg(cfg)
    assert len(res.history) == 1
    assert res.best.a == res.population.best().a


def test_history_is_monotone_over_twenty_generations():
    cfg = _small_config(n_pop_max=20, stop=StoppingRule(20, 2000))
    res = run_genalg(cfg)
    rates = [r for _, r, _ in res.history]
    assert len(rates) == 21
    assert all(x >= y for x, y in zip(rates, rates[1:]))


def test_reeval_uses_fresh_noise():
    cfg = _small_config(n_pop_max=2, reeval=True)
    res = run_genalg(cfg)
    assert len(res.history) == 3
    assert res.simulations > 20 + 2 * 15


def test_config_validation():
    with pytest.raises(ValueError):
        _small_config(metric="fer")
    with pytest.raises(ValueError):
        _small_config(T=0)
    with pytest.raises(ValueError):
        _small_config(n_pop_max=-1)


# ----------------------------------------------------------------------------- BEC toy problem


def _gf2_rank(m):
    m = m.copy() % 2
    rank = 0
    rows, cols = m.shape
    for c in range(cols):
        piv = np.flatnonzero(m[rank:, c])
        if piv.size == 0:
            continue
        p = rank + piv[0]
        m[[rank, p]] = m[[p, rank]]
        others = np.flatnonzero(m[:, c])
        others = others[others != rank]
        m[others] ^= m[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def _sc_bec_block_erasure(a, eps, patterns=10_000, seed=0):
    """Fraction of erasure patterns on which SC meets an undetermined information bit.

    Given the earlier bits, u_i is determined by the unerased outputs unless row
    i of the generator lies in the span of rows i+1.. restricted to those outputs.
    """
    G = generator_matrix(a.n).astype(np.uint8)
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(patterns):
        keep = rng.random(a.N) >= eps
        sub = G[:, keep]
        for i in a.info_positions:
            if _gf2_rank(sub[i:]) == _gf2_rank(sub[i + 1 :]):
                fails += 1
                break
    return fails / patterns


def test_sc_bec_oracle_small_cases():
    # N=2 with only the better channel: fails iff both outputs are erased
    a = AVector([0, 1])
    assert abs(_sc_bec_block_erasure(a, 0.5, 20_000) - 0.25) < 0.01
    # full-rate code over a channel without erasures never fails
    assert _sc_bec_block_erasure(AVector([1] * 8), 0.0, 100) == 0.0


def test_bec_toy_search_does_not_lose_to_seed():
    spec = CodeSpec.from_length(16, 8)
    cfg = GenAlgConfig(
        spec=spec,
        snr_genalg=0.4,
        channel="bec",
        decoder=DecoderConfig("sc"),
        metric="bler",
        n_pop_max=40,
        stop=StoppingRule(200, 20_000),
        seed=0,
    )
    res = run_genalg(cfg)
    seed_a = construct_bhattacharyya(spec, epsilon=0.4)
    assert res.best.a.ones == 8
    assert _sc_bec_block_erasure(res.best.a, 0.4) <= _sc_bec_block_erasure(seed_a, 0.4)
