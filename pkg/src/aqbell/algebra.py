"""Symbolic projector algebra: monomials, canonical words, cell classes.

A *letter* ``(party, setting, outcome)`` stands for the projector of one
outcome of one local measurement.  Letters of different parties commute;
within one party, projectors of the same setting are idempotent (same
outcome) or orthogonal (different outcomes).  Products of at most one
letter per party, with the last outcome of every setting dropped, form the
monomial basis used throughout the package.  The product of two basis
monomials reduces to a *canonical word* with at most two letters per party,
identified with its adjoint (because all objectives and constraints are
real, a word and its adjoint always share one moment value).
"""
from __future__ import annotations

import itertools
from typing import NamedTuple, Optional

Letter = tuple  # (party, setting, outcome)
Monomial = tuple  # tuple of Letter, party-sorted, at most one letter per party

_PARTY_NAMES = "ABCDEFGHIJ"


class CanonicalWord(NamedTuple):
    """Reduced projector product; ``letters is None`` encodes the zero word."""

    letters: Optional[tuple]

    @property
    def is_zero(self) -> bool:
        return self.letters is None


ZERO = CanonicalWord(None)
IDENTITY = CanonicalWord(())


def basis_monomials(scenario) -> list:
    """Ordered monomial basis: identity first, then graded by letter count,
    then lexicographic by (party, setting, outcome).

    Size is prod_k (1 + m_k * (d - 1)).
    """
    per_party = []
    for party in range(scenario.parties):
        options = [None]
        for setting in range(scenario.settings[party]):
            for outcome in range(scenario.outcomes - 1):
                options.append((party, setting, outcome))
        per_party.append(options)
    monomials = []
    for combo in itertools.product(*per_party):
        monomials.append(tuple(letter for letter in combo if letter is not None))
    monomials.sort(key=lambda mono: (len(mono), mono))
    expected = 1
    for party in range(scenario.parties):
        expected *= 1 + scenario.settings[party] * (scenario.outcomes - 1)
    assert len(monomials) == expected
    return monomials


def adjoint(letters: tuple) -> tuple:
    """Adjoint of a party-sorted word: reverse the letters within each party."""
    out = []
    i = 0
    while i < len(letters):
        j = i
        while j < len(letters) and letters[j][0] == letters[i][0]:
            j += 1
        out.extend(reversed(letters[i:j]))
        i = j
    return tuple(out)


def canonicalize(u: Monomial, v: Monomial) -> CanonicalWord:
    """Canonical form of the product (adjoint of u) * v.

    Basis monomials are self-adjoint, so this is the reduction of u * v:
    letters commute across parties into party-sorted order; within a party,
    two letters with the same setting merge by idempotence (same outcome) or
    kill the word (different outcomes).  The representative is the
    lexicographically smaller of the reduced word and its adjoint.
    """
    merged: dict[int, list] = {}
    for letter in u:
        merged.setdefault(letter[0], []).append(letter)
    for letter in v:
        merged.setdefault(letter[0], []).append(letter)
    word = []
    for party in sorted(merged):
        seq = merged[party]
        # one letter per party per monomial, so at most two letters meet here
        assert len(seq) <= 2
        if len(seq) == 2 and seq[0][1] == seq[1][1]:
            if seq[0][2] != seq[1][2]:
                return ZERO
            seq = seq[:1]
        word.extend(seq)
    word = tuple(word)
    return CanonicalWord(min(word, adjoint(word)))


def word_classes(scenario):
    """Partition of all basis-pair cells by canonical word.

    Returns ``(classes, zero_cells)`` where ``classes`` maps each non-zero
    canonical word to the list of (row, col) index pairs whose product
    reduces to it, in row-major first-occurrence order (the identity word
    always comes first), and ``zero_cells`` lists the cells whose product
    vanishes by orthogonality.
    """
    basis = basis_monomials(scenario)
    classes: dict[CanonicalWord, list] = {}
    zero_cells: list = []
    for i, u in enumerate(basis):
        for j, v in enumerate(basis):
            word = canonicalize(u, v)
            if word.is_zero:
                zero_cells.append((i, j))
            else:
                classes.setdefault(word, []).append((i, j))
    return classes, zero_cells


def word_key(word: CanonicalWord) -> str:
    """Stable human-readable key, e.g. ``"A0|1*B0|0"``; identity is ``"1"``."""
    if word.is_zero:
        return "ZERO"
    if not word.letters:
        return "1"
    return "*".join(
        f"{_PARTY_NAMES[party]}{outcome}|{setting}" for party, setting, outcome in word.letters
    )


def word_classes_json(scenario) -> dict:
    """Dump of the class partition with ordered, stable keys (for debugging)."""
    classes, zero_cells = word_classes(scenario)
    out = {word_key(word): [list(cell) for cell in cells] for word, cells in classes.items()}
    out["ZERO"] = [list(cell) for cell in zero_cells]
    return out
