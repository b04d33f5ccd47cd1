"""Core types for analog Ising-machine response modelling.

An analog Ising sampler is programmed with couplings on the edges of a fixed
interaction graph plus one longitudinal field per qubit.  Measurement shots at
the end of a run behave like draws from a Gibbs distribution

    P(sigma) = exp(+E_out(sigma)) / Z

over spins sigma_i in {+1, -1}, where E_out is itself an Ising energy whose
couplings and fields depend on the programmed values.  This module fixes the
conventions every other module relies on:

* Canonical parameter layout: the programmed vector ``theta`` lists the edge
  couplings in lexicographic (i, j) order followed by the n fields in qubit
  order, so ``D = len(edges) + n``.
* Each output term (pair coupling or single-qubit field) responds to theta
  through a quadratic map ``c + theta @ beta + theta @ chi @ theta`` with a
  symmetric ``chi`` and a boolean mask pinning unused entries to exactly 0.
* Probabilities are proportional to ``exp(+energy)``; there is no Boltzmann
  minus sign anywhere in this package.

All types are immutable after construction (arrays are marked read-only) and
all operations are pure functions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

MASK_PRESETS = ("full", "physical", "linear", "constants")

_TERM_RE = re.compile(r"^(?:J_(\d+)_(\d+)|h_(\d+))$")


@dataclass(frozen=True, eq=True)
class TermId:
    """One Ising term: a pair coupling J_i_j (i < j) or a single field h_i."""

    i: int
    j: int | None = None

    @classmethod
    def pair(cls, i: int, j: int) -> "TermId":
        if i == j:
            raise ValueError(f"pair term needs two distinct qubits, got ({i}, {j})")
        lo, hi = (i, j) if i < j else (j, i)
        return cls(lo, hi)

    @classmethod
    def single(cls, i: int) -> "TermId":
        return cls(i, None)

    @classmethod
    def parse(cls, text: str) -> "TermId":
        m = _TERM_RE.match(text)
        if m is None:
            raise ValueError(f"unrecognized term name {text!r}")
        if m.group(3) is not None:
            return cls.single(int(m.group(3)))
        return cls.pair(int(m.group(1)), int(m.group(2)))

    @property
    def is_pair(self) -> bool:
        return self.j is not None

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.i,) if self.j is None else (self.i, self.j)

    def sort_key(self) -> tuple[int, int, int]:
        # pairs in lexicographic order first, then singles; matches theta layout
        if self.j is None:
            return (1, self.i, -1)
        return (0, self.i, self.j)

    def __str__(self) -> str:
        if self.j is None:
            return f"h_{self.i}"
        return f"J_{self.i}_{self.j}"


@dataclass(frozen=True)
class Topology:
    """Simple undirected interaction graph: n qubits, edges with i < j."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError(f"qubit count must be positive, got {self.n}")
        norm = []
        for e in self.edges:
            i, j = e
            if i == j:
                raise ValueError(f"self-loop ({i}, {j}) not allowed")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) outside [0, {self.n})")
            norm.append((min(i, j), max(i, j)))
        norm.sort()
        for a, b in zip(norm, norm[1:]):
            if a == b:
                raise ValueError(f"duplicate edge {a}")
        object.__setattr__(self, "edges", tuple(norm))

    @classmethod
    def complete(cls, n: int) -> "Topology":
        return cls(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def chain(cls, n: int) -> "Topology":
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))

    @property
    def D(self) -> int:
        return len(self.edges) + self.n


def canonical_index(topology: Topology) -> dict[TermId, int]:
    """Map every programmable parameter to its slot in theta.

    Edge couplings come first in lexicographic order, then the n fields.  The
    returned map is a bijection onto range(D) and is stable across runs.
    """
    index: dict[TermId, int] = {}
    for k, (i, j) in enumerate(topology.edges):
        index[TermId.pair(i, j)] = k
    base = len(topology.edges)
    for i in range(topology.n):
        index[TermId.single(i)] = base + i
    return index


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class InputInstance:
    """One programmed input: a topology plus its canonical parameter vector."""

    topology: Topology
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.shape != (self.topology.D,):
            raise ValueError(
                f"theta has shape {theta.shape}, expected ({self.topology.D},)"
            )
        object.__setattr__(self, "theta", _readonly(theta))

    @property
    def D(self) -> int:
        return self.topology.D

    def coupling(self, i: int, j: int) -> float:
        return float(self.theta[canonical_index(self.topology)[TermId.pair(i, j)]])

    def field(self, i: int) -> float:
        return float(self.theta[canonical_index(self.topology)[TermId.single(i)]])


@dataclass(frozen=True)
class SampleSet:
    """Weighted spin configurations observed for one programmed input.

    Unit-weight rows are raw measurement shots; fractional weights encode an
    exact distribution (one row per configuration, weight = probability).
    """

    sigma: np.ndarray  # (rows, n), entries +1 / -1
    weights: np.ndarray  # (rows,), nonnegative
    total_weight: float = field(init=False)

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.int8)
        weights = np.asarray(self.weights, dtype=np.float64)
        if sigma.ndim != 2:
            raise ValueError(f"sigma must be 2-D (rows, n), got shape {sigma.shape}")
        if weights.shape != (sigma.shape[0],):
            raise ValueError("one weight per configuration row required")
        if not np.all(np.abs(sigma) == 1):
            raise ValueError("spin entries must be +1 or -1")
        if np.any(weights < 0):
            raise ValueError("sample weights must be nonnegative")
        total = float(np.sum(weights))
        if not total > 0:
            raise ValueError("total sample weight must be positive")
        object.__setattr__(self, "sigma", _readonly(sigma))
        object.__setattr__(self, "weights", _readonly(weights))
        object.__setattr__(self, "total_weight", total)

    @property
    def n(self) -> int:
        return self.sigma.shape[1]

    @property
    def nrows(self) -> int:
        return self.sigma.shape[0]

    def rows(self) -> Iterable[tuple[np.ndarray, float]]:
        for k in range(self.nrows):
            yield self.sigma[k], float(self.weights[k])

    def compacted(self) -> "SampleSet":
        """Merge duplicate configurations, summing their weights.

        The screening loss and its gradient are invariant under this merge,
        which turns shot files with millions of rows into at most 2^n rows.
        """
        uniq, inverse = np.unique(self.sigma, axis=0, return_inverse=True)
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inverse.ravel(), self.weights)
        return SampleSet(uniq, merged)


@dataclass(frozen=True)
class OutputHamiltonian:
    """Effective Ising energy reconstructed from (or predicted for) a device.

    May contain pair terms absent from the input topology; those are the
    spurious couplings a real machine introduces.
    """

    n: int
    terms: Mapping[TermId, float]

    def __post_init__(self):
        clean: dict[TermId, float] = {}
        for term, value in self.terms.items():
            for q in term.qubits:
                if not 0 <= q < self.n:
                    raise ValueError(f"term {term} outside [0, {self.n})")
            clean[term] = float(value)
        object.__setattr__(self, "terms", clean)

    def coupling(self, i: int, j: int) -> float:
        return self.terms.get(TermId.pair(i, j), 0.0)

    def field(self, i: int) -> float:
        return self.terms.get(TermId.single(i), 0.0)


def output_energy(sigma: np.ndarray, ham: OutputHamiltonian) -> float:
    """Energy sum of all pair and field terms; probabilities go as exp(+E)."""
    sigma = np.asarray(sigma)
    if sigma.shape != (ham.n,):
        raise ValueError(f"sigma has shape {sigma.shape}, expected ({ham.n},)")
    total = 0.0
    for term, value in ham.terms.items():
        if term.is_pair:
            total += value * float(sigma[term.i]) * float(sigma[term.j])
        else:
            total += value * float(sigma[term.i])
    return total


@dataclass(frozen=True)
class TermMask:
    """Which beta / chi entries of one response term are free to vary."""

    beta: np.ndarray  # (D,) bool
    chi: np.ndarray  # (D, D) bool, symmetric

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=bool)
        chi = np.asarray(self.chi, dtype=bool)
        if beta.ndim != 1 or chi.shape != (beta.size, beta.size):
            raise ValueError("mask shapes must be (D,) and (D, D)")
        if not np.array_equal(chi, chi.T):
            raise ValueError("chi mask must be symmetric")
        object.__setattr__(self, "beta", _readonly(beta))
        object.__setattr__(self, "chi", _readonly(chi))

    @property
    def D(self) -> int:
        return self.beta.size

    def free_count(self) -> int:
        """Free parameters including the constant offset."""
        upper = np.triu(self.chi)
        return 1 + int(self.beta.sum()) + int(upper.sum())


def mask_preset(name: str, topology: Topology) -> TermMask:
    """Build one of the named mask presets for the given topology.

    ``full``      every beta and chi entry free.
    ``physical``  chi rows/columns of coupling slots whose edge is not in the
                  topology are pinned.  The canonical theta layout only carries
                  couplings for edges that exist, so with canonically built
                  instances this coincides with ``full``; it differs only for
                  hand-built parameter vectors over a larger slot set.
    ``linear``    chi pinned entirely.
    ``constants`` beta and chi pinned; only the offset c is free.
    """
    D = topology.D
    if name == "full" or name == "physical":
        beta = np.ones(D, dtype=bool)
        chi = np.ones((D, D), dtype=bool)
        if name == "physical":
            edge_set = set(topology.edges)
            index = canonical_index(topology)
            for term, slot in index.items():
                if term.is_pair and (term.i, term.j) not in edge_set:
                    chi[slot, :] = False
                    chi[:, slot] = False
        return TermMask(beta, chi)
    if name == "linear":
        return TermMask(np.ones(D, dtype=bool), np.zeros((D, D), dtype=bool))
    if name == "constants":
        return TermMask(np.zeros(D, dtype=bool), np.zeros((D, D), dtype=bool))
    raise ValueError(f"unknown mask preset {name!r}; choose from {MASK_PRESETS}")


@dataclass(frozen=True)
class ResponseTermParams:
    """Quadratic response of one output term: c + theta@beta + theta@chi@theta."""

    c: float
    beta: np.ndarray  # (D,)
    chi: np.ndarray  # (D, D), symmetric
    mask: TermMask

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        chi = np.asarray(self.chi, dtype=np.float64)
        D = self.mask.D
        if beta.shape != (D,) or chi.shape != (D, D):
            raise ValueError(f"beta/chi must have shapes ({D},) and ({D}, {D})")
        if not np.array_equal(chi, chi.T):
            raise ValueError("chi must be symmetric")
        if np.any(beta[~self.mask.beta] != 0.0):
            raise ValueError("pinned beta entries must be exactly 0")
        if np.any(chi[~self.mask.chi] != 0.0):
            raise ValueError("pinned chi entries must be exactly 0")
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "beta", _readonly(beta))
        object.__setattr__(self, "chi", _readonly(chi))

    @classmethod
    def zeros(cls, mask: TermMask) -> "ResponseTermParams":
        D = mask.D
        return cls(0.0, np.zeros(D), np.zeros((D, D)), mask)

    @classmethod
    def pinned(cls, c: float, beta: np.ndarray, chi: np.ndarray, mask: TermMask) -> "ResponseTermParams":
        """Construct after forcing masked entries to 0 (symmetrizes chi first)."""
        beta = np.array(beta, dtype=np.float64)
        chi = np.array(chi, dtype=np.float64)
        chi = (chi + chi.T) / 2.0
        beta[~mask.beta] = 0.0
        chi[~mask.chi] = 0.0
        return cls(c, beta, chi, mask)

    @property
    def D(self) -> int:
        return self.mask.D


def response_eval(theta: np.ndarray, params: ResponseTermParams) -> float:
    """Evaluate one term's quadratic response at a parameter vector."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (params.D,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({params.D},)")
    return float(params.c + theta @ params.beta + theta @ params.chi @ theta)


def default_term_ids(n: int) -> tuple[TermId, ...]:
    """All C(n, 2) pair terms plus all n field terms, in canonical order."""
    pairs = [TermId.pair(i, j) for i in range(n) for j in range(i + 1, n)]
    singles = [TermId.single(i) for i in range(n)]
    return tuple(pairs + singles)


@dataclass(frozen=True)
class ResponseModel:
    """Full device response: one quadratic map per modelled output term."""

    topology: Topology
    terms: Mapping[TermId, ResponseTermParams]

    def __post_init__(self):
        clean: dict[TermId, ResponseTermParams] = {}
        for term, params in sorted(self.terms.items(), key=lambda kv: kv[0].sort_key()):
            if params.D != self.topology.D:
                raise ValueError(f"term {term} has D={params.D}, topology D={self.topology.D}")
            for q in term.qubits:
                if not 0 <= q < self.topology.n:
                    raise ValueError(f"term {term} outside [0, {self.topology.n})")
            clean[term] = params
        object.__setattr__(self, "terms", clean)

    @property
    def D(self) -> int:
        return self.topology.D

    @property
    def n(self) -> int:
        return self.topology.n

    def term_ids(self) -> tuple[TermId, ...]:
        return tuple(self.terms.keys())

    def pair_terms_at(self, i: int) -> tuple[TermId, ...]:
        return tuple(t for t in self.terms if t.is_pair and i in t.qubits)


def zero_model(
    topology: Topology,
    mask: str | TermMask = "physical",
    term_ids: Iterable[TermId] | None = None,
) -> ResponseModel:
    """Response model with every parameter at 0 (the fitting start point)."""
    m = mask_preset(mask, topology) if isinstance(mask, str) else mask
    ids = default_term_ids(topology.n) if term_ids is None else tuple(term_ids)
    return ResponseModel(topology, {t: ResponseTermParams.zeros(m) for t in ids})


def identity_model(
    topology: Topology,
    scale: float = 1.0,
    mask: str | TermMask = "physical",
) -> ResponseModel:
    """Ideal-sampler response: each output term reads its own input slot.

    Every edge coupling and every field maps to itself times ``scale`` (the
    effective inverse temperature); output terms without an input slot (pairs
    that are not edges) stay identically zero.
    """
    m = mask_preset(mask, topology) if isinstance(mask, str) else mask
    index = canonical_index(topology)
    terms: dict[TermId, ResponseTermParams] = {}
    for term in default_term_ids(topology.n):
        beta = np.zeros(topology.D)
        slot = index.get(term)
        if slot is not None:
            if not m.beta[slot]:
                raise ValueError(f"mask pins the diagonal slot of {term}")
            beta[slot] = scale
        terms[term] = ResponseTermParams(0.0, beta, np.zeros((topology.D, topology.D)), m)
    return ResponseModel(topology, terms)


def predict_output(instance: InputInstance, model: ResponseModel) -> OutputHamiltonian:
    """Predicted effective output Hamiltonian for one programmed input."""
    if instance.topology != model.topology:
        raise ValueError("instance and model topologies differ")
    values = {t: response_eval(instance.theta, p) for t, p in model.terms.items()}
    return OutputHamiltonian(model.n, values)


def local_energy(i: int, sigma: np.ndarray, instance: InputInstance, model: ResponseModel) -> float:
    """All predicted output terms incident to qubit i, as seen by its spin.

    Returns sigma_i * F_i(theta) + sigma_i * sum_j sigma_j * F_ij(theta) over
    the modelled pair terms containing i.  Odd in sigma_i by construction and
    affine in the free response parameters.
    """
    sigma = np.asarray(sigma)
    if not 0 <= i < model.n:
        raise ValueError(f"qubit index {i} outside [0, {model.n})")
    if sigma.shape != (model.n,):
        raise ValueError(f"sigma has shape {sigma.shape}, expected ({model.n},)")
    if instance.topology != model.topology:
        raise ValueError("instance and model topologies differ")
    si = float(sigma[i])
    total = 0.0
    single = model.terms.get(TermId.single(i))
    if single is not None:
        total += si * response_eval(instance.theta, single)
    for term in model.pair_terms_at(i):
        jj = term.j if term.i == i else term.i
        total += si * float(sigma[jj]) * response_eval(instance.theta, model.terms[term])
    return total
