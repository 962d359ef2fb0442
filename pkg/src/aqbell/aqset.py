"""Moment-matrix characterization of the almost-quantum correlation set.

The moment matrix Gamma is indexed by the monomial basis; every cell whose
projector product reduces to the same canonical word carries one shared
moment value, orthogonal products vanish, Gamma(1,1) = 1 and Gamma >= 0.
Extremizing a Bell functional over the set is solved in certificate form:
the semidefinite variable Z is a Gram matrix whose per-class entry sums
reproduce the functional's coefficients, the objective min Z[0,0] yields the
bound, and the dual multipliers are (minus) the optimal moment values, from
which the extremal behavior is read off the first row.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import algebra
from .errors import ScenarioMismatchError, SizeGuardError, SolverFailureError
from .scenario import (
    EXTRACTION_TOL,
    Behavior,
    BellFunctional,
    CGVector,
    Scenario,
    from_collins_gisin,
    scenario_basis,
)
from .sdp import SdpProblem, SdpSolution, SdpStatus, SolverConfig, solve

MAX_PARTIES = 3


@dataclass(frozen=True, eq=False)
class WordClass:
    word: algebra.CanonicalWord
    cells: tuple
    monomial_index: int | None  # basis index when the word is itself a basis monomial


@dataclass(frozen=True, eq=False)
class MomentStructure:
    scenario: Scenario
    basis: tuple
    classes: tuple  # WordClass, identity class first
    cell_class: np.ndarray  # (N, N) class index per cell, -1 for the zero class
    monomial_class: np.ndarray  # (N,) class index of each basis monomial
    zero_cells: tuple

    @property
    def size(self) -> int:
        return len(self.basis)


@lru_cache(maxsize=None)
def build_moment_structure(scenario: Scenario) -> MomentStructure:
    if scenario.parties > MAX_PARTIES:
        raise SizeGuardError(f"moment structures support up to {MAX_PARTIES} parties")
    basis = tuple(scenario_basis(scenario))
    index_of = {mono: i for i, mono in enumerate(basis)}
    class_map, zero_cells = algebra.word_classes(scenario)

    classes = []
    cell_class = np.full((len(basis), len(basis)), -1, dtype=int)
    for idx, (word, cells) in enumerate(class_map.items()):
        mono_idx = index_of.get(word.letters)
        classes.append(WordClass(word, tuple(cells), mono_idx))
        rows, cols = zip(*cells)
        cell_class[rows, cols] = idx

    assert classes[0].word == algebra.IDENTITY
    monomial_class = np.array([cell_class[0, j] for j in range(len(basis))])
    # first-row cells and interior cells reducing to the same monomial must
    # already share a class; the scatter construction relies on it
    for idx, wc in enumerate(classes):
        if wc.monomial_index is not None:
            assert monomial_class[wc.monomial_index] == idx

    return MomentStructure(
        scenario=scenario,
        basis=basis,
        classes=tuple(classes),
        cell_class=cell_class,
        monomial_class=monomial_class,
        zero_cells=tuple(zero_cells),
    )


def class_indicator(structure: MomentStructure, class_index: int) -> np.ndarray:
    mat = np.zeros((structure.size, structure.size))
    rows, cols = zip(*structure.classes[class_index].cells)
    mat[rows, cols] = 1.0
    return mat


def objective_matrix(structure: MomentStructure, coeffs: np.ndarray) -> np.ndarray:
    """Scatter per-monomial objective coefficients onto their class cells, so
    that <result, Z> equals sum_g coeffs[g] * (class-g entry sum of Z)."""
    mat = np.zeros((structure.size, structure.size))
    for mono_idx, value in enumerate(coeffs):
        if value != 0.0:
            rows, cols = zip(*structure.classes[structure.monomial_class[mono_idx]].cells)
            mat[rows, cols] = value
    return mat


def class_sums(structure: MomentStructure, mat: np.ndarray) -> np.ndarray:
    """Entry sum of ``mat`` over every word class, in class order."""
    sums = np.zeros(len(structure.classes))
    for idx, wc in enumerate(structure.classes):
        rows, cols = zip(*wc.cells)
        sums[idx] = mat[rows, cols].sum()
    return sums


@dataclass(frozen=True, eq=False)
class CompiledExtremize:
    problem: SdpProblem
    structure: MomentStructure
    functional: BellFunctional
    sense: str
    target: np.ndarray  # functional coefficients, negated for "max"


def compile_extremize(structure: MomentStructure, functional: BellFunctional, sense: str) -> CompiledExtremize:
    """Certificate-form SDP whose optimum is the extremal value.

    min Z[0,0] over Z >= 0 with, for every non-identity word class, the sum
    of Z's entries over the class pinned to the target coefficient of that
    word (zero for words outside the basis; orthogonal cells stay free).
    The extremal value is target[0] - opt, and the dual slack at the
    optimum is the extremizing moment matrix itself.
    """
    if functional.scenario != structure.scenario:
        raise ScenarioMismatchError("functional and moment structure disagree on the scenario")
    if sense not in ("min", "max"):
        raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
    target = functional.coeffs if sense == "min" else -functional.coeffs

    n = structure.size
    m = len(structure.classes) - 1
    stack = np.zeros((m, n, n))
    b = np.zeros(m)
    for idx, wc in enumerate(structure.classes[1:], start=1):
        rows, cols = zip(*wc.cells)
        stack[idx - 1, rows, cols] = 1.0
        if wc.monomial_index is not None:
            b[idx - 1] = target[wc.monomial_index]
    c = np.zeros((n, n))
    c[0, 0] = 1.0
    problem = SdpProblem((n,), (c,), (stack,), b)
    return CompiledExtremize(problem, structure, functional, sense, target)


@dataclass(eq=False)
class AqExtremum:
    value: float
    behavior: Behavior
    certificate: "SosCertificate"  # noqa: F821 - defined in aqbell.nbf
    solution: SdpSolution


def moment_matrix_from_solution(compiled: CompiledExtremize, solution: SdpSolution) -> np.ndarray:
    """Optimal moment matrix, assembled from the dual multipliers."""
    structure = compiled.structure
    gamma = np.zeros((structure.size, structure.size))
    gamma[0, 0] = 1.0
    for idx, wc in enumerate(structure.classes[1:], start=1):
        rows, cols = zip(*wc.cells)
        gamma[rows, cols] = -solution.y[idx - 1]
    return gamma


def aq_extremize(
    functional: BellFunctional, sense: str, config: SolverConfig | None = None
) -> AqExtremum:
    """Extremal value of a functional over the almost-quantum set, with the
    extremal behavior and the certificate matrix."""
    from .nbf import SosCertificate

    structure = build_moment_structure(functional.scenario)
    compiled = compile_extremize(structure, functional, sense)
    solution = solve(compiled.problem, config)
    if solution.status != SdpStatus.OPTIMAL:
        raise SolverFailureError(solution.status.value, solution.message, solution)

    bound = float(compiled.target[0] - solution.primal_objective)
    value = bound if sense == "min" else -bound

    entries = np.empty(structure.size)
    entries[0] = 1.0
    for j in range(1, structure.size):
        entries[j] = -solution.y[structure.monomial_class[j] - 1]
    behavior = from_collins_gisin(CGVector(functional.scenario, entries), EXTRACTION_TOL)

    certificate = SosCertificate(
        scenario=functional.scenario,
        target=compiled.target.copy(),
        lam=bound,
        z=solution.x_blocks[0],
    )
    return AqExtremum(value=value, behavior=behavior, certificate=certificate, solution=solution)


def strictly_feasible_point(structure: MomentStructure) -> np.ndarray:
    """Interior moment matrix from the product-projector model (one
    d-dimensional tensor factor per setting per party): each word's moment
    is prod_k d^(-#distinct settings of party k in the word)."""
    d = structure.scenario.outcomes
    gamma = np.zeros((structure.size, structure.size))
    for wc in structure.classes:
        per_party: dict[int, set] = {}
        for party, setting, _outcome in wc.word.letters:
            per_party.setdefault(party, set()).add(setting)
        value = 1.0
        for settings in per_party.values():
            value /= float(d) ** len(settings)
        rows, cols = zip(*wc.cells)
        gamma[rows, cols] = value
    return gamma


def constraint_residual(structure: MomentStructure, gamma: np.ndarray) -> float:
    """Worst violation of the compiled moment constraints by a matrix:
    per-class entry spread, zero cells, symmetry and normalization."""
    residual = abs(gamma[0, 0] - 1.0)
    residual = max(residual, float(np.abs(gamma - gamma.T).max()))
    for wc in structure.classes:
        rows, cols = zip(*wc.cells)
        values = gamma[rows, cols]
        residual = max(residual, float(values.max() - values.min()))
    for i, j in structure.zero_cells:
        residual = max(residual, abs(gamma[i, j]))
    return residual
