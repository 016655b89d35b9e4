"""Genetic optimizer over breakpoint sets.

Each generation walks the population: score the individual on the fitness
grid, then apply segment crossover and mutation in place; the next
generation is filled by 3-way tournaments over the scores recorded during
the walk (lower MSE wins, ties to the lowest index). The mutation operator
is either Gaussian noise or rounding mutation, which snaps breakpoints onto
random power-of-two grids so the evolved placement already tolerates the
grids later imposed by quantization.

The RNG is numpy's counter-based Philox, so a (spec, config) pair fixes the
returned table bit-exactly on any platform.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .fxp import fxp_round
from .nonlin import NonLinSpec, eval_ref
from .pwl import (
    FITNESS_STEP,
    MIN_GAP,
    BreakpointSet,
    PwlTable,
    derive_table,
    fitness_grid,
    fxp_round_table,
    repaired_breakpoints,
)


class MutationKind(Enum):
    GAUSSIAN = "gaussian"
    ROUNDING = "rm"


@dataclass(frozen=True)
class GaConfig:
    """Genetic-search hyperparameters."""

    n_breakpoints: int = 7
    population_size: int = 50
    cross_prob: float = 0.7
    mutate_prob: float = 0.2
    rm_prob: float = 0.05
    rm_range: tuple[int, int] = (0, 6)
    iterations: int = 500
    fxp_frac_bits: int = 5
    mutation_kind: MutationKind = MutationKind.ROUNDING
    gaussian_sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_breakpoints < 1:
            raise ValueError(f"n_breakpoints must be >= 1, got {self.n_breakpoints}")
        if self.population_size < 1:
            raise ValueError(f"population_size must be >= 1, got {self.population_size}")
        for name in ("cross_prob", "mutate_prob", "rm_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        ma, mb = self.rm_range
        if not (isinstance(ma, int) and isinstance(mb, int) and 0 <= ma <= mb):
            raise ValueError(f"rm_range must be integers 0 <= ma <= mb, got {self.rm_range}")
        if (mb - ma + 1) * self.rm_prob > 1.0 + 1e-12:
            raise ValueError(
                f"(mb - ma + 1) * rm_prob must not exceed 1, got {self.rm_range} * {self.rm_prob}"
            )
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.fxp_frac_bits < 0:
            raise ValueError(f"fxp_frac_bits must be >= 0, got {self.fxp_frac_bits}")
        if self.gaussian_sigma is not None and self.gaussian_sigma <= 0:
            raise ValueError(f"gaussian_sigma must be positive, got {self.gaussian_sigma}")


@dataclass
class Population:
    individuals: list[BreakpointSet]
    generation: int = 0


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def init_population(cfg: GaConfig, spec: NonLinSpec, rng: np.random.Generator) -> Population:
    """Uniform random breakpoint sets, sorted and spacing-repaired."""
    lo, hi = spec.search_range
    draws = rng.uniform(lo, hi, size=(cfg.population_size, cfg.n_breakpoints))
    individuals = [repaired_breakpoints(row, spec.search_range) for row in draws]
    return Population(individuals=individuals, generation=0)


def crossover(
    a: BreakpointSet,
    b: BreakpointSet,
    rng: np.random.Generator,
    span: tuple[int, int] | None = None,
) -> tuple[BreakpointSet, BreakpointSet]:
    """Exchange a contiguous index range between two parents.

    span forces the swapped range (inclusive on both ends); by default both
    endpoints are drawn uniformly. Children are re-sorted and repaired.
    """
    if len(a) != len(b):
        raise ValueError(f"parents differ in size: {len(a)} vs {len(b)}")
    if a.search_range != b.search_range:
        raise ValueError("parents belong to different search ranges")
    n = len(a)
    if span is None:
        cuts = rng.integers(0, n, size=2)
        i, j = int(cuts.min()), int(cuts.max())
    else:
        i, j = span
        if not 0 <= i <= j < n:
            raise ValueError(f"invalid span {span} for size {n}")
    pa = np.asarray(a.points)
    pb = np.asarray(b.points)
    child_a = pa.copy()
    child_b = pb.copy()
    child_a[i : j + 1] = pb[i : j + 1]
    child_b[i : j + 1] = pa[i : j + 1]
    return (
        repaired_breakpoints(child_a, a.search_range),
        repaired_breakpoints(child_b, b.search_range),
    )


def gaussian_mutate(
    p: BreakpointSet, sigma: float, spec: NonLinSpec, rng: np.random.Generator
) -> BreakpointSet:
    """Perturb every breakpoint with N(0, sigma^2), clip to the range, repair."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    noisy = np.asarray(p.points) + rng.normal(0.0, sigma, size=len(p))
    np.clip(noisy, spec.search_range[0], spec.search_range[1], out=noisy)
    return repaired_breakpoints(noisy, p.search_range)


def _rm_exponent(rand_p: float, rm_prob: float, rm_range: tuple[int, int]) -> int | None:
    """Grid exponent selected by a uniform draw, or None for pass-through.

    Exponent i is chosen when i*rm_prob <= rand_p < (i+1)*rm_prob; at most
    one i in [ma, mb] can match, so an element mutates once or not at all.
    """
    if rm_prob <= 0.0:
        return None
    ma, mb = rm_range
    i = int(rand_p // rm_prob)
    return i if ma <= i <= mb else None


def rounding_mutate(p: BreakpointSet, cfg: GaConfig, rng: np.random.Generator) -> BreakpointSet:
    """Snap randomly chosen breakpoints onto 2^-i grids, i in rm_range.

    Elements whose draw selects no grid pass through unchanged. A snap that
    would land within the minimum gap of a neighbour (or outside the range)
    is reverted rather than pushed apart: pushing would strand the value
    just off its grid and waste a segment on a near-duplicate breakpoint.
    The result is re-sorted and spacing-repaired as a final guard.
    """
    out = np.asarray(p.points).copy()
    lo, hi = p.search_range
    draws = rng.random(len(p))
    for idx, rand_p in enumerate(draws):
        i = _rm_exponent(float(rand_p), cfg.rm_prob, cfg.rm_range)
        if i is None:
            continue
        snapped = float(fxp_round(out[idx], i))
        if not (lo + MIN_GAP <= snapped <= hi - MIN_GAP):
            continue
        others = np.delete(out, idx)
        if others.size and np.abs(others - snapped).min() < MIN_GAP:
            continue
        out[idx] = snapped
    return repaired_breakpoints(out, p.search_range)


def _tournament_picks(fitnesses, rng: np.random.Generator, rounds: int = 3) -> list[int]:
    n = len(fitnesses)
    entrants = rng.integers(0, n, size=(n, rounds))
    picks = []
    for row in entrants:
        picks.append(min((int(c) for c in row), key=lambda c: (fitnesses[c], c)))
    return picks


def tournament_select(
    pop: Population, fitnesses: list[float], rng: np.random.Generator
) -> Population:
    """Next generation from independent 3-way tournaments (lower MSE wins)."""
    if len(fitnesses) != len(pop.individuals):
        raise ValueError(
            f"{len(fitnesses)} fitness values for {len(pop.individuals)} individuals"
        )
    picks = _tournament_picks(fitnesses, rng)
    return Population(
        individuals=[pop.individuals[k] for k in picks],
        generation=pop.generation + 1,
    )


class _Scorer:
    """Fitness-grid MSE of the table derived from a breakpoint set.

    Caches the grid and reference values; scoring an individual costs one
    small reference evaluation at its nodes plus a vectorized sweep.
    """

    def __init__(self, spec: NonLinSpec, step: float = FITNESS_STEP):
        self.spec = spec
        self.xs, self.count = fitness_grid(spec.search_range, step)
        self.fx = np.asarray(eval_ref(spec, self.xs), dtype=float)
        self.lo, self.hi = spec.search_range

    def __call__(self, bset: BreakpointSet) -> float:
        pts = np.asarray(bset.points)
        nodes = np.empty(pts.size + 2)
        nodes[0] = self.lo
        nodes[1:-1] = pts
        nodes[-1] = self.hi
        fv = np.asarray(eval_ref(self.spec, nodes), dtype=float)
        gaps = np.diff(nodes)
        slopes = np.diff(fv) / gaps
        intercepts = fv[:-1] - slopes * nodes[:-1]
        idx = np.searchsorted(pts, self.xs, side="right")
        err = slopes[idx] * self.xs + intercepts[idx] - self.fx
        return float(err @ err) / self.count


def evolve(spec: NonLinSpec, cfg: GaConfig, log: list | None = None) -> PwlTable:
    """Run the full genetic search and return the best table, FXP-rounded.

    Each generation walks the population in index order: an individual is
    scored first, then crossed over with probability cross_prob (partner
    drawn from the rest of the population, both parents replaced in place)
    and mutated with probability mutate_prob. Tournament selection then acts
    on the scores recorded during the walk, so a variation applied after an
    individual was scored is not re-priced until the next generation. That
    lets rounding mutations survive one selection round on the parent's
    fitness, which is what lets coarse power-of-two placements take hold in
    the population at all.

    The winner of a final fresh scoring pass is returned with slopes and
    intercepts rounded to fxp_frac_bits fractional bits. If log is given,
    (generation, best_mse) pairs are appended per generation plus a final
    entry for the returned individual.
    """
    rng = make_rng(cfg.seed)
    pop = init_population(cfg, spec, rng)
    inds = pop.individuals
    scorer = _Scorer(spec)
    fitness = [0.0] * cfg.population_size
    sigma = cfg.gaussian_sigma
    if sigma is None:
        lo, hi = spec.search_range
        sigma = 0.05 * (hi - lo)
    n = cfg.population_size

    for gen in range(cfg.iterations):
        for i in range(n):
            fitness[i] = scorer(inds[i])
            rand_c = rng.random()
            rand_m = rng.random()
            if rand_c < cfg.cross_prob and n > 1:
                j = int(rng.integers(n - 1))
                if j >= i:
                    j += 1
                inds[i], inds[j] = crossover(inds[i], inds[j], rng)
            if rand_m < cfg.mutate_prob:
                if cfg.mutation_kind is MutationKind.GAUSSIAN:
                    inds[i] = gaussian_mutate(inds[i], sigma, spec, rng)
                else:
                    inds[i] = rounding_mutate(inds[i], cfg, rng)
        if log is not None:
            log.append((gen, min(fitness)))
        picks = _tournament_picks(fitness, rng)
        inds = [inds[k] for k in picks]

    fitness = [scorer(ind) for ind in inds]
    best = min(range(n), key=lambda k: (fitness[k], k))
    if log is not None:
        log.append((cfg.iterations, fitness[best]))
    table = derive_table(spec, inds[best])
    return fxp_round_table(table, cfg.fxp_frac_bits)
