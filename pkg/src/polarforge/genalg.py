"""Genetic search over frozen-set masks with Monte-Carlo fitness.

Each generation keeps the ``T`` fittest masks, adds one swap mutant per elite
and one midpoint crossover per unordered elite pair, so the population size
is ``(T**2 + 3T) / 2``.  Fitness is the simulated error rate at the design
SNR; all evaluations reuse one noise seed (common random numbers) and elite
scores are carried forward, which keeps the best-so-far trace monotone.
"""

from __future__ import annotations

import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .channel import ChannelConfig
from .construct import construct_bhattacharyya, construct_rm
from .core import AVector, CodeSpec
from .decoder import DecoderConfig
from .sim import SimPoint, StoppingRule, run_point

log = logging.getLogger(__name__)

INIT_SNR_GRID = tuple(np.round(np.arange(0.0, 5.0 + 1e-9, 0.25), 2))
MAX_DISTINCT_TRIES = 32


def population_size(T: int) -> int:
    if T < 1:
        raise ValueError("T must be >= 1")
    return (T * T + 3 * T) // 2


@dataclass(frozen=True)
class Fitness:
    rate: float
    errors: int  # raw bit or block errors behind ``rate``
    frames: int
    point: SimPoint | None = None

    def key(self):
        return (self.rate, self.errors)


@dataclass
class Individual:
    a: AVector
    born: int = 0
    origin: str = "init"
    fitness: Fitness | None = None


@dataclass
class Population:
    members: list
    T: int
    generation: int = 0

    @property
    def S(self) -> int:
        return population_size(self.T)

    def ranked(self) -> list:
        """Evaluated members, fittest first; ties keep insertion order."""
        ev = [m for m in self.members if m.fitness is not None]
        return sorted(ev, key=lambda m: m.fitness.key())

    def best(self) -> Individual:
        return self.ranked()[0]


@dataclass(frozen=True)
class GenAlgConfig:
    spec: CodeSpec
    snr_genalg: float
    decoder: DecoderConfig = DecoderConfig("sc")
    channel: str = "awgn"
    n_pop_max: int = 40
    T: int = 5
    metric: str = "ber"
    stop: StoppingRule = StoppingRule(100, 1_000_000)
    seed: int = 0
    include_rm: bool = True
    reeval: bool = False
    init_snr_grid: tuple = INIT_SNR_GRID
    workers: int = 1

    def __post_init__(self):
        if self.metric not in ("ber", "bler"):
            raise ValueError("fitness metric must be 'ber' or 'bler'")
        if self.n_pop_max < 0:
            raise ValueError("number of generations must be >= 0")
        population_size(self.T)
        self.decoder.validate(self.spec)
        self.channel_config()

    @property
    def S(self) -> int:
        return population_size(self.T)

    def channel_config(self) -> ChannelConfig:
        if self.channel == "bec":
            return ChannelConfig("bec", epsilon=self.snr_genalg)
        return ChannelConfig(self.channel, snr_db=self.snr_genalg)

    def streams(self):
        """(operator rng, evaluation seed) derived from the master seed."""
        ss = np.random.SeedSequence(self.seed)
        op, ev = ss.spawn(2)
        return np.random.default_rng(op), int(ev.generate_state(1, dtype=np.uint64)[0] >> 1)


# --------------------------------------------------------------------------- operators


def mutation(a: AVector, rng: np.random.Generator) -> AVector:
    """Swap one uniformly chosen non-frozen position with one frozen position."""
    ones = a.info_positions
    zeros = np.flatnonzero(a.bits == 0)
    if ones.size == 0 or zeros.size == 0:
        raise ValueError("mutation needs at least one frozen and one non-frozen position")
    i = ones[rng.integers(ones.size)]
    j = zeros[rng.integers(zeros.size)]
    bits = a.bits.copy()
    bits[i] = 0
    bits[j] = 1
    return AVector(bits)


def crossover(a1: AVector, a2: AVector, rng: np.random.Generator, audit: list | None = None) -> AVector:
    """First half of ``a1`` joined to the second half of ``a2``, then repaired.

    Repair flips uniformly chosen positions of the surplus kind (ones when
    there are too many, zeros when too few) until the weight matches the
    parents.  Flipped positions are appended to ``audit`` when given.
    """
    if a1.N != a2.N or a1.ones != a2.ones:
        raise ValueError("crossover parents must have equal length and weight")
    h = a1.N // 2
    bits = np.concatenate([a1.bits[:h], a2.bits[h:]])
    k = a1.ones
    while (w := int(bits.sum())) != k:
        surplus = 1 if w > k else 0
        cand = np.flatnonzero(bits == surplus)
        j = cand[rng.integers(cand.size)]
        bits[j] ^= 1
        if audit is not None:
            audit.append(int(j))
    return AVector(bits)


def update_population(pop: Population, rng: np.random.Generator, reeval: bool = False) -> Population:
    """Truncation selection plus offspring; offspring differ from every other member."""
    ranked = pop.ranked()
    if len(ranked) < pop.T:
        raise RuntimeError(f"need {pop.T} evaluated members, have {len(ranked)}")
    gen = pop.generation + 1
    elites = ranked[: pop.T]
    members = [
        Individual(e.a, e.born, e.origin, None if reeval else e.fitness) for e in elites
    ]
    seen = {e.a for e in elites}

    def distinct(make):
        child = make()
        for _ in range(MAX_DISTINCT_TRIES):
            if child not in seen:
                break
            child = make()
        seen.add(child)
        return child

    for e in elites:
        members.append(Individual(distinct(lambda: mutation(e.a, rng)), gen, "mutation"))
    for p, q in combinations(elites, 2):
        members.append(Individual(distinct(lambda: crossover(p.a, q.a, rng)), gen, "crossover"))
    return Population(members, pop.T, gen)


# --------------------------------------------------------------------------- fitness


class FitnessEvaluator:
    """Runs the simulator for unevaluated members and caches results per mask.

    All masks are simulated with the same seed, so equal masks get equal
    fitness and competing masks see identical noise frames.
    """

    def __init__(self, config: GenAlgConfig, eval_seed: int, executor: Executor | None = None):
        self.config = config
        self.seed = eval_seed
        self.executor = executor
        self.cache: dict = {}
        self.simulations = 0

    def _fitness(self, point: SimPoint) -> Fitness:
        if self.config.metric == "ber":
            return Fitness(point.ber, point.bit_errs, point.frames, point)
        return Fitness(point.bler, point.blk_errs, point.frames, point)

    def evaluate(self, pop: Population) -> Population:
        todo = []
        for m in pop.members:
            if m.fitness is not None:
                continue
            if m.a in self.cache:
                m.fitness = self.cache[m.a]
            elif m.a not in todo:
                todo.append(m.a)
        cfg = self.config
        args = [(cfg.spec, a, cfg.decoder, cfg.channel_config(), cfg.stop, self.seed) for a in todo]
        if self.executor is not None and len(todo) > 1:
            points = list(self.executor.map(_run_point_star, args))
        else:
            points = [_run_point_star(x) for x in args]
        self.simulations += len(points)
        for a, p in zip(todo, points):
            self.cache[a] = self._fitness(p)
        for m in pop.members:
            if m.fitness is None:
                m.fitness = self.cache[m.a]
        return pop


def _run_point_star(args) -> SimPoint:
    return run_point(*args)


def compute_fitness(pop: Population, config: GenAlgConfig, evaluator: FitnessEvaluator | None = None) -> Population:
    if evaluator is None:
        evaluator = FitnessEvaluator(config, config.streams()[1])
    return evaluator.evaluate(pop)


# --------------------------------------------------------------------------- driver


def initial_candidates(config: GenAlgConfig) -> list:
    spec = config.spec
    out = []
    for snr in config.init_snr_grid:
        a = construct_bhattacharyya(spec, design_snr_db=float(snr))
        if a not in out:
            out.append(a)
    if config.include_rm:
        a = construct_rm(spec)
        if a not in out:
            out.append(a)
    return out


def initialize_population(config: GenAlgConfig, rng: np.random.Generator, evaluator: FitnessEvaluator) -> Population:
    cands = [Individual(a, 0, "init") for a in initial_candidates(config)]
    pop = evaluator.evaluate(Population(cands, config.T, 0))
    keep = pop.ranked()[: config.S]
    seen = {m.a for m in keep}
    best = keep[0].a
    fill = []
    while len(keep) + len(fill) < config.S:
        child = mutation(best, rng)
        for _ in range(MAX_DISTINCT_TRIES):
            if child not in seen:
                break
            child = mutation(best, rng)
        seen.add(child)
        fill.append(Individual(child, 0, "fill"))
    if fill:
        evaluator.evaluate(Population(fill, config.T, 0))
    return Population(keep + fill, config.T, 0)


@dataclass
class GenAlgResult:
    best: Individual
    history: list  # (generation, best rate, best mask) per generation
    population: Population
    baseline: dict = field(default_factory=dict)
    simulations: int = 0


def generation_seed(eval_seed: int, generation: int) -> int:
    ss = np.random.SeedSequence(eval_seed, spawn_key=(generation,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def run_genalg(config: GenAlgConfig, callback=None) -> GenAlgResult:
    """Initialise, then run ``n_pop_max`` rounds of update and evaluation."""
    rng, eval_seed = config.streams()
    pool = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        ev = FitnessEvaluator(config, eval_seed, pool)
        pop = initialize_population(config, rng, ev)
        best = pop.best()
        history = [(0, best.fitness.rate, best.a)]
        log.info("generation 0: best %s = %.4e", config.metric, best.fitness.rate)
        if callback:
            callback(pop, history)
        for g in range(1, config.n_pop_max + 1):
            pop = update_population(pop, rng, config.reeval)
            if config.reeval:
                # fresh noise each generation; elites are simulated again
                ev.seed = generation_seed(eval_seed, g)
                ev.cache.clear()
            ev.evaluate(pop)
            best = pop.best()
            history.append((g, best.fitness.rate, best.a))
            log.info("generation %d: best %s = %.4e", g, config.metric, best.fitness.rate)
            if callback:
                callback(pop, history)
    finally:
        if pool is not None:
            pool.shutdown()
    return GenAlgResult(best=best, history=history, population=pop, simulations=ev.simulations)
