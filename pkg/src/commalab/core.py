"""The (mu, lambda) EA on OneMax.

Individuals are stored word-packed (64 bits per ``uint64``, bit ``i`` of the
string lives in word ``i // 64`` at position ``i % 64``).  Fitness is cached
and updated incrementally while flipping, so a OneMax evaluation of an
offspring costs O(number of flipped bits).

Standard-bit mutation is sampled as ``k ~ Bin(n, 1/n)`` followed by ``k``
distinct uniform positions, which has the same law as flipping every bit
independently with probability ``1/n``.  :func:`mutate_reference` is the
literal per-bit version and is used as an oracle in the tests.

All kernels take a ``numpy.random.Generator``; numba advances the generator's
own state, so the fully compiled loop in :func:`run_until` and the traced
Python loop (one :func:`run_generation` per step) consume identical draws.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .rng import RngStream, as_generator

__all__ = [
    "Individual",
    "Population",
    "GenerationEvent",
    "RunResult",
    "onemax",
    "pack_bits",
    "unpack_bits",
    "mutate",
    "mutate_reference",
    "mutate_many",
    "select_indices",
    "select_next",
    "run_generation",
    "run_until",
    "evolve",
    "offspring_batch",
    "default_budget",
    "benchmark",
]


# ---------------------------------------------------------------------------
# bit packing


def n_words(n: int) -> int:
    return (n + 63) // 64


def pack_bits(bits) -> np.ndarray:
    """Pack a 0/1 array of shape ``(..., n)`` into ``(..., ceil(n/64))`` uint64."""
    bits = np.asarray(bits, dtype=bool)
    n = bits.shape[-1]
    w = n_words(n)
    padded = np.zeros(bits.shape[:-1] + (w * 64,), dtype=bool)
    padded[..., :n] = bits
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words, n: int) -> np.ndarray:
    words = np.ascontiguousarray(np.asarray(words, dtype="<u8"))
    raw = words.view(np.uint8)
    bits = np.unpackbits(raw, axis=-1, bitorder="little")
    return bits[..., :n].astype(bool)


def onemax(bits) -> int:
    """Number of one-bits."""
    return int(np.count_nonzero(np.asarray(bits)))


@nb.njit(cache=True)
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@nb.njit(cache=True)
def _fitness_rows(words):
    out = np.empty(words.shape[0], dtype=np.int64)
    for i in range(words.shape[0]):
        s = 0
        for w in range(words.shape[1]):
            s += _popcount64(words[i, w])
        out[i] = s
    return out


def flip_count_cdf(n: int) -> np.ndarray:
    """CDF table of Bin(n, 1/n), used to sample the number of flipped bits."""
    from .transition import binom_pmf_vector

    pmf = binom_pmf_vector(n, 1.0 / n)
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    return cdf


_CDF_CACHE: dict[int, np.ndarray] = {}


def _cdf(n: int) -> np.ndarray:
    c = _CDF_CACHE.get(n)
    if c is None:
        c = _CDF_CACHE[n] = flip_count_cdf(n)
    return c


# ---------------------------------------------------------------------------
# compiled kernels


@nb.njit(cache=True, inline="always")
def _uniform_index(rng, k):
    j = int(rng.random() * k)
    if j >= k:  # guards the 1 - 2**-53 edge case
        j = k - 1
    return j


@nb.njit(cache=True)
def _make_offspring(pw, pf, ow, of, parent, nflips, n, cdf, rng, posbuf, stop_on_hit):
    """Create ``len(of)`` offspring into ``ow``/``of``.

    Each offspring copies a uniformly chosen parent row and flips
    ``k ~ Bin(n, 1/n)`` distinct uniform positions; fitness is updated per flip.
    Returns the index of the first optimal offspring, or -1.
    """
    mu = pf.shape[0]
    lam = of.shape[0]
    nw = pw.shape[1]
    hit = -1
    for i in range(lam):
        j = _uniform_index(rng, mu)
        parent[i] = j
        for w in range(nw):
            ow[i, w] = pw[j, w]
        u = rng.random()
        k = 0
        while k < n and u > cdf[k]:
            k += 1
        f = pf[j]
        for r in range(k):
            while True:
                pos = _uniform_index(rng, n)
                fresh = True
                for q in range(r):
                    if posbuf[q] == pos:
                        fresh = False
                        break
                if fresh:
                    break
            posbuf[r] = pos
            word = pos >> 6
            mask = np.uint64(1) << np.uint64(pos & 63)
            if ow[i, word] & mask:
                f -= 1
            else:
                f += 1
            ow[i, word] ^= mask
        of[i] = f
        nflips[i] = k
        if f == n and hit < 0:
            hit = i
            if stop_on_hit:
                return hit
    return hit


@nb.njit(cache=True, inline="always")
def _select(of, mu, rng, out, counts, group):
    """Indices of the ``mu`` fittest offspring; boundary ties broken uniformly.

    Counting selection over the fitness range; ``counts`` (length n + 1) and
    ``group`` (length lambda) are scratch buffers.
    """
    lam = of.shape[0]
    fmax = of[0]
    fmin = of[0]
    for i in range(lam):
        if of[i] > fmax:
            fmax = of[i]
        elif of[i] < fmin:
            fmin = of[i]
    for v in range(fmin, fmax + 1):
        counts[v] = 0
    for i in range(lam):
        counts[of[i]] += 1
    cut = fmax
    above = 0
    while above + counts[cut] < mu:
        above += counts[cut]
        cut -= 1
    need = mu - above
    a = 0
    m = 0
    for i in range(lam):
        if of[i] > cut:
            out[a] = i
            a += 1
        elif of[i] == cut:
            group[m] = i
            m += 1
    if m == need:
        for i in range(need):
            out[above + i] = group[i]
        return
    # partial Fisher-Yates: a uniform need-subset of the boundary group
    for i in range(need):
        j = i + _uniform_index(rng, m - i)
        tmp = group[i]
        group[i] = group[j]
        group[j] = tmp
        out[above + i] = group[i]


@nb.njit(cache=True, inline="always")
def _survive(pw, pf, ow, of, idx):
    for i in range(idx.shape[0]):
        s = idx[i]
        for w in range(pw.shape[1]):
            pw[i, w] = ow[s, w]
        pf[i] = of[s]


@nb.njit(cache=True, inline="always")
def _top_stats(pf):
    best = pf[0]
    cnt = 0
    for i in range(pf.shape[0]):
        if pf[i] > best:
            best = pf[i]
            cnt = 1
        elif pf[i] == best:
            cnt += 1
    return best, cnt


@nb.njit(cache=True)
def _run_loop(pw, pf, n, lam, budget, cdf, rng, count_on_survival, target, record, ftop, xtop):
    """Run up to ``budget`` generations in place.

    With ``count_on_survival`` the loop stops once a survivor reaches fitness
    ``target``; otherwise it stops at the first optimal offspring.

    Returns ``(generations, hit_offspring_index)``; the index is -1 when no
    optimum was found.
    """
    mu = pf.shape[0]
    w = pw.shape[1]
    ow = np.empty((lam, w), dtype=np.uint64)
    of = np.empty(lam, dtype=np.int64)
    parent = np.empty(lam, dtype=np.int64)
    nflips = np.empty(lam, dtype=np.int64)
    idx = np.empty(mu, dtype=np.int64)
    posbuf = np.empty(n, dtype=np.int64)
    counts = np.empty(n + 1, dtype=np.int64)
    group = np.empty(lam, dtype=np.int64)
    for t in range(budget):
        hit = _make_offspring(pw, pf, ow, of, parent, nflips, n, cdf, rng, posbuf, not count_on_survival)
        if hit >= 0 and not count_on_survival:
            return t + 1, hit
        _select(of, mu, rng, idx, counts, group)
        _survive(pw, pf, ow, of, idx)
        if record:
            b, c = _top_stats(pf)
            ftop[t + 1] = b
            xtop[t + 1] = c
        if count_on_survival:
            b, c = _top_stats(pf)
            if b >= target:
                return t + 1, 0
    return budget, -1


@nb.njit(cache=True)
def _offspring_fitness_batch(pw, pf, n, lam, reps, cdf, rng):
    """``reps`` independent offspring generations from a frozen parent population."""
    w = pw.shape[1]
    ow = np.empty((lam, w), dtype=np.uint64)
    of = np.empty(lam, dtype=np.int64)
    parent = np.empty(lam, dtype=np.int64)
    nflips = np.empty(lam, dtype=np.int64)
    posbuf = np.empty(n, dtype=np.int64)
    fit = np.empty((reps, lam), dtype=np.int64)
    par = np.empty((reps, lam), dtype=np.int64)
    cp = np.empty((reps, lam), dtype=np.bool_)
    for r in range(reps):
        _make_offspring(pw, pf, ow, of, parent, nflips, n, cdf, rng, posbuf, False)
        for i in range(lam):
            fit[r, i] = of[i]
            par[r, i] = parent[i]
            cp[r, i] = nflips[i] == 0
    return fit, par, cp


# ---------------------------------------------------------------------------
# data types


@dataclass
class Individual:
    bits: np.ndarray
    fitness: int = -1

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.fitness < 0:
            self.fitness = onemax(self.bits)
        elif self.fitness != onemax(self.bits):
            raise ValueError("cached fitness does not match the bit string")

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def distance(self) -> int:
        return self.n - self.fitness

    def __eq__(self, other):
        return isinstance(other, Individual) and np.array_equal(self.bits, other.bits)


@dataclass
class Population:
    """A multiset of ``mu`` packed bit strings with cached fitness values."""

    words: np.ndarray
    fitness: np.ndarray
    n: int
    generation: int = 0

    def __post_init__(self):
        self.words = np.ascontiguousarray(self.words, dtype=np.uint64)
        self.fitness = np.ascontiguousarray(self.fitness, dtype=np.int64)
        if self.words.ndim != 2 or self.words.shape[1] != n_words(self.n):
            raise ValueError("words must have shape (mu, ceil(n/64))")
        if self.words.shape[0] != self.fitness.shape[0]:
            raise ValueError("one fitness value per member required")

    @property
    def mu(self) -> int:
        return self.fitness.shape[0]

    @property
    def members(self) -> list[Individual]:
        bits = unpack_bits(self.words, self.n)
        return [Individual(b, int(f)) for b, f in zip(bits, self.fitness)]

    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.n)

    def histogram(self) -> np.ndarray:
        return np.bincount(self.fitness, minlength=self.n + 1)

    @property
    def f_top(self) -> int:
        return int(self.fitness.max())

    @property
    def x_top(self) -> int:
        return int(np.count_nonzero(self.fitness == self.fitness.max()))

    def copy(self) -> "Population":
        return Population(self.words.copy(), self.fitness.copy(), self.n, self.generation)

    def check(self):
        """Assert that cached fitness values match the packed strings."""
        if not np.array_equal(_fitness_rows(self.words), self.fitness):
            raise AssertionError("fitness cache out of sync")

    @classmethod
    def from_bits(cls, bits, generation: int = 0) -> "Population":
        bits = np.atleast_2d(np.asarray(bits, dtype=bool))
        return cls(pack_bits(bits), bits.sum(axis=1), bits.shape[1], generation)

    @classmethod
    def from_members(cls, members: Sequence[Individual], generation: int = 0) -> "Population":
        return cls.from_bits(np.stack([m.bits for m in members]), generation)

    @classmethod
    def random(cls, n: int, mu: int, rng) -> "Population":
        """``mu`` strings drawn uniformly from {0,1}^n."""
        g = as_generator(rng)
        bits = g.integers(0, 2, size=(mu, n), dtype=np.uint8).astype(bool)
        return cls.from_bits(bits)

    @classmethod
    def at_levels(cls, n: int, levels, rng) -> "Population":
        """One uniformly random string of each requested fitness."""
        g = as_generator(rng)
        levels = np.asarray(levels, dtype=np.int64)
        if levels.min() < 0 or levels.max() > n:
            raise ValueError("fitness levels must lie in [0, n]")
        bits = np.zeros((levels.size, n), dtype=bool)
        for i, f in enumerate(levels):
            bits[i, g.permutation(n)[:f]] = True
        return cls.from_bits(bits)


@dataclass
class GenerationEvent:
    """What happened in one generation; consumed by observers."""

    generation: int
    parent_index: np.ndarray
    parent_fitness: np.ndarray
    offspring_fitness: np.ndarray
    is_copy: np.ndarray
    survivors: np.ndarray
    hit_index: int = -1


@dataclass
class RunResult:
    success: bool
    generations: int
    evaluations: int
    final_f_top: int
    seed: int | None = None
    stream: int | None = None
    telemetry: object | None = None
    f_top: np.ndarray | None = field(default=None, repr=False)
    x_top: np.ndarray | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# public operations


def mutate(x: Individual, rng) -> Individual:
    """Standard-bit mutation of a copy of ``x`` (flip rate 1/n)."""
    g = as_generator(rng)
    n = x.n
    words, fit, _ = _mutants(x, 1, g)
    return Individual(unpack_bits(words[0], n), int(fit[0]))


def mutate_reference(x: Individual, rng) -> Individual:
    """Slow literal mutation: every bit flips independently with prob. 1/n."""
    g = as_generator(rng)
    mask = g.random(x.n) < 1.0 / x.n
    return Individual(x.bits ^ mask)


def mutate_many(x: Individual, reps: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Fitness and flip count of ``reps`` independent mutants of ``x``."""
    _, fit, flips = _mutants(x, int(reps), as_generator(rng))
    return fit, flips


def _mutants(x: Individual, reps: int, g):
    src = pack_bits(x.bits)[None, :]
    fit0 = np.array([x.fitness], dtype=np.int64)
    ow = np.empty((reps, src.shape[1]), dtype=np.uint64)
    of = np.empty(reps, dtype=np.int64)
    parent = np.empty(reps, dtype=np.int64)
    flips = np.empty(reps, dtype=np.int64)
    _make_offspring(src, fit0, ow, of, parent, flips, x.n, _cdf(x.n), g, np.empty(x.n, dtype=np.int64), False)
    return ow, of, flips


def offspring_batch(pop: Population, lam: int, reps: int, rng):
    """Offspring fitness, parent index and copy flag for ``reps`` resampled generations.

    The parent population is left untouched (restart-from-snapshot sampling).
    """
    g = as_generator(rng)
    return _offspring_fitness_batch(pop.words, pop.fitness, pop.n, int(lam), int(reps), _cdf(pop.n), g)


def select_indices(fitness, mu: int, rng) -> np.ndarray:
    """Indices of the ``mu`` largest values; ties at the cut are broken uniformly."""
    fitness = np.ascontiguousarray(fitness, dtype=np.int64)
    if mu < 1:
        raise ValueError("mu must be positive")
    if fitness.shape[0] < mu:
        raise ValueError(f"cannot select mu={mu} survivors from {fitness.shape[0]} offspring")
    out = np.empty(mu, dtype=np.int64)
    n = int(fitness.max())
    _select(fitness, mu, as_generator(rng), out, np.empty(n + 1, dtype=np.int64),
            np.empty(fitness.shape[0], dtype=np.int64))
    return out


def select_next(offspring, mu: int, rng, generation: int = 0) -> Population:
    """Comma selection: the ``mu`` best of the offspring, parents discarded."""
    if isinstance(offspring, Population):
        pool = offspring
    else:
        pool = Population.from_members(list(offspring))
    idx = select_indices(pool.fitness, mu, rng)
    return Population(pool.words[idx], pool.fitness[idx], pool.n, generation)


Observer = Callable[[Population, Population, GenerationEvent], None]


def _step(pop: Population, lam: int, g, stop_on_hit: bool):
    """Offspring creation plus selection.  Returns ``(new_pop or None, event)``.

    With ``stop_on_hit`` the generation is abandoned at the first optimal
    offspring (``new_pop`` is None), mirroring the compiled loop draw for draw.
    """
    mu, n = pop.mu, pop.n
    if lam < mu:
        raise ValueError(f"lambda={lam} < mu={mu}: comma selection is undefined")
    ow = np.empty((lam, pop.words.shape[1]), dtype=np.uint64)
    of = np.empty(lam, dtype=np.int64)
    parent = np.empty(lam, dtype=np.int64)
    nflips = np.empty(lam, dtype=np.int64)
    hit = _make_offspring(pop.words, pop.fitness, ow, of, parent, nflips, n, _cdf(n), g,
                          np.empty(n, dtype=np.int64), stop_on_hit)
    idx = np.empty(mu, dtype=np.int64)
    if stop_on_hit and hit >= 0:
        event = GenerationEvent(pop.generation + 1, parent[: hit + 1], pop.fitness[parent[: hit + 1]],
                                of[: hit + 1], nflips[: hit + 1] == 0, idx[:0], int(hit))
        return None, event
    _select(of, mu, g, idx, np.empty(n + 1, dtype=np.int64), np.empty(lam, dtype=np.int64))
    new = Population(ow[idx], of[idx], n, pop.generation + 1)
    event = GenerationEvent(pop.generation + 1, parent, pop.fitness[parent], of, nflips == 0, idx, int(hit))
    return new, event


def run_generation(pop: Population, lam: int, rng, observers: Sequence[Observer] = ()) -> Population:
    """One generation: ``lam`` (uniform parent, mutate) phases, then comma selection.

    Observers are called as ``obs(old_pop, new_pop, event)``.
    """
    new, event = _step(pop, lam, as_generator(rng), False)
    for obs in observers:
        obs(pop, new, event)
    return new


def default_budget(n: int, mu: int, lam: int) -> int:
    """100 n ln n max(1, e mu / lambda) generations."""
    return int(math.ceil(100 * n * math.log(max(n, 2)) * max(1.0, math.e * mu / lam)))


def run_until(config, rng=None, observers: Sequence[Observer] = (), record_top: bool = False) -> RunResult:
    """Run the EA from a uniform random population until the optimum is found.

    ``config`` needs attributes ``n``, ``mu``, ``lam`` and ``budget`` (generations);
    ``count_on_survival`` (default False) switches from first-evaluation to
    first-survival counting, and a non-empty ``trackers`` set attaches a
    :class:`commalab.potential.Telemetry` observer.

    Evaluations are counted up to and including the first optimal offspring;
    an optimal initial population costs the ``mu`` initial evaluations.
    """
    n, mu, lam = int(config.n), int(config.mu), int(config.lam)
    budget = getattr(config, "budget", None)
    budget = default_budget(n, mu, lam) if budget is None else int(budget)
    survival = bool(getattr(config, "count_on_survival", False))
    trackers = set(getattr(config, "trackers", ()) or ())
    if lam < mu:
        raise ValueError(f"lambda={lam} < mu={mu}: comma selection is undefined")

    stream = rng if isinstance(rng, RngStream) else None
    g = as_generator(rng if rng is not None else getattr(config, "seed", 0))
    pop = Population.random(n, mu, g)

    telemetry = None
    observers = list(observers)
    if trackers:
        from .potential import Telemetry

        telemetry = Telemetry.from_config(config, trackers)
        telemetry.start(pop)
        observers.append(telemetry)

    def result(success, gens, evals, ftop, f_arr=None, x_arr=None):
        return RunResult(success, gens, evals, int(ftop),
                         seed=None if stream is None else stream.seed,
                         stream=None if stream is None else stream.stream,
                         telemetry=telemetry, f_top=f_arr, x_top=x_arr)

    if pop.f_top == n:
        return result(True, 0, mu, n)

    if not observers:
        size = budget + 1 if record_top else 1
        ftop = np.zeros(size, dtype=np.int64)
        xtop = np.zeros(size, dtype=np.int64)
        ftop[0], xtop[0] = pop.f_top, pop.x_top
        gens, hit = _run_loop(pop.words, pop.fitness, n, lam, budget, _cdf(n), g, survival, n, record_top, ftop, xtop)
        ok = hit >= 0
        if ok and not survival:
            evals = mu + (gens - 1) * lam + hit + 1
        else:
            evals = mu + gens * lam
        f_arr = ftop[: gens + 1] if record_top else None
        x_arr = xtop[: gens + 1] if record_top else None
        if record_top and ok and not survival:
            # the hitting generation was cut short before selection
            f_arr, x_arr = f_arr[:-1], x_arr[:-1]
        return result(ok, int(gens), int(evals), n if ok else int(pop.fitness.max()), f_arr, x_arr)

    ftops, xtops = [pop.f_top], [pop.x_top]
    for t in range(budget):
        new, event = _step(pop, lam, g, not survival)
        if new is None:
            evals = mu + t * lam + event.hit_index + 1
            return result(True, t + 1, evals, n, *_maybe(record_top, ftops, xtops))
        for obs in observers:
            obs(pop, new, event)
        pop = new
        ftops.append(pop.f_top)
        xtops.append(pop.x_top)
        if survival and pop.f_top == n:
            return result(True, t + 1, mu + (t + 1) * lam, n, *_maybe(record_top, ftops, xtops))
    return result(False, budget, mu + budget * lam, pop.f_top, *_maybe(record_top, ftops, xtops))


def evolve(pop: Population, lam: int, generations: int, rng, stop_at_optimum: bool = True):
    """Advance ``pop`` by up to ``generations`` compiled generations.

    Returns ``(final_pop, f_top, x_top)`` where the arrays hold the top level
    and its count after every generation (index 0 is the input population).
    With ``stop_at_optimum`` the run ends once a survivor is optimal.
    """
    if lam < pop.mu:
        raise ValueError(f"lambda={lam} < mu={pop.mu}: comma selection is undefined")
    work = pop.copy()
    ftop = np.zeros(generations + 1, dtype=np.int64)
    xtop = np.zeros(generations + 1, dtype=np.int64)
    ftop[0], xtop[0] = work.f_top, work.x_top
    if stop_at_optimum and work.f_top == work.n:
        return work, ftop[:1], xtop[:1]
    target = work.n if stop_at_optimum else work.n + 1
    gens, _ = _run_loop(work.words, work.fitness, work.n, int(lam), int(generations), _cdf(work.n),
                        as_generator(rng), True, target, True, ftop, xtop)
    work.generation = pop.generation + int(gens)
    return work, ftop[: gens + 1], xtop[: gens + 1]


def _maybe(flag, f, x):
    if not flag:
        return None, None
    return np.asarray(f, dtype=np.int64), np.asarray(x, dtype=np.int64)


def benchmark(n: int = 150, mu: int = 10, lam: int = 27, generations: int = 200_000, seed: int = 0) -> dict:
    """Offspring evaluations per second of the compiled loop (single core).

    Runs ``generations`` generations from a random start, counting at survival
    time so a hit does not end the measurement early, and times the loop only.
    """
    g = RngStream(seed).generator
    pop = Population.random(n, mu, g)
    cdf = _cdf(n)
    dummy = np.zeros(1, dtype=np.int64)
    warm = pop.copy()
    _run_loop(warm.words, warm.fitness, n, lam, 10, cdf, g, True, n + 1, False, dummy, dummy)
    t0 = time.perf_counter()
    gens, _ = _run_loop(pop.words, pop.fitness, n, lam, generations, cdf, g, True, n + 1, False, dummy, dummy)
    elapsed = time.perf_counter() - t0
    evals = gens * lam
    return {"n": n, "mu": mu, "lam": lam, "generations": int(gens), "evaluations": int(evals),
            "seconds": elapsed, "evals_per_second": evals / elapsed}
