"""Exact Gibbs enumeration and sampling; the synthetic stand-in for hardware.

Configuration ordering is frozen: configuration k has sigma_i = +1 when bit i
of k is set (qubit 0 is the least-significant bit), sigma_i = -1 otherwise.
All randomness comes from numpy's Philox counter-based generator, whose bit
stream is stable across numpy releases, so golden sample files stay valid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    InputInstance,
    OutputHamiltonian,
    ResponseModel,
    SampleSet,
    TermId,
    predict_output,
)

MAX_ENUM_QUBITS = 20


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(entropy))))


def all_configurations(n: int) -> np.ndarray:
    """(2^n, n) matrix of spin configurations in the frozen integer order."""
    codes = np.arange(2**n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def config_energies(ham: OutputHamiltonian, sigma: np.ndarray) -> np.ndarray:
    """Vectorized output_energy over the rows of a configuration matrix."""
    sigma = np.asarray(sigma, dtype=np.float64)
    energies = np.zeros(sigma.shape[0])
    for term, value in ham.terms.items():
        if term.is_pair:
            energies += value * sigma[:, term.i] * sigma[:, term.j]
        else:
            energies += value * sigma[:, term.i]
    return energies


@dataclass(frozen=True)
class ProbabilityTable:
    """Exact Gibbs distribution over all 2^n configurations."""

    n: int
    probabilities: np.ndarray  # (2^n,)
    log_z: float

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.shape != (2**self.n,):
            raise ValueError(f"need 2^{self.n} probabilities, got shape {p.shape}")
        if not np.all(p > 0):
            raise ValueError("Gibbs probabilities must all be positive")
        if abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        p = np.array(p, copy=True)
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)


def enumerate_distribution(ham: OutputHamiltonian) -> ProbabilityTable:
    """Exact P(sigma) = exp(+E(sigma)) / Z by full enumeration (n <= 20)."""
    if ham.n > MAX_ENUM_QUBITS:
        raise ValueError(f"enumeration capped at {MAX_ENUM_QUBITS} qubits, got n={ham.n}")
    energies = config_energies(ham, all_configurations(ham.n))
    shift = float(energies.max())
    weights = np.exp(energies - shift)
    total = float(weights.sum())
    log_z = shift + float(np.log(total))
    probs = weights / total
    return ProbabilityTable(ham.n, probs, log_z)


def exact_sample(table: ProbabilityTable, m: int, seed: int) -> SampleSet:
    """m unit-weight i.i.d. configurations; deterministic for a given seed."""
    if m < 0:
        raise ValueError("shot count must be nonnegative")
    cdf = np.cumsum(table.probabilities)
    u = _rng(seed).random(m)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), 2**table.n - 1)
    return SampleSet(all_configurations(table.n)[idx], np.ones(m))


def as_exact_sampleset(table: ProbabilityTable) -> SampleSet:
    """One row per configuration weighted by its probability.

    Feeding this to the screening loss computes exact expectations with no
    sampling noise, which is what every planted-recovery test relies on.
    """
    return SampleSet(all_configurations(table.n), table.probabilities)


def generate_synthetic_dataset(
    planted: ResponseModel,
    instances: list[InputInstance],
    shots: int | None = None,
    seed: int = 0,
):
    """Dataset a device with the planted response would have produced.

    For each instance the output Hamiltonian is predicted, its distribution
    enumerated, and either sampled (``shots`` draws) or returned as an
    exact-weighted sample set (``shots=None``).
    """
    from .estimator import Dataset  # local import to avoid a cycle

    pairs = []
    for k, instance in enumerate(instances):
        table = enumerate_distribution(predict_output(instance, planted))
        if shots is None:
            samples = as_exact_sampleset(table)
        else:
            samples = exact_sample(table, shots, seed=_mix_seed(seed, k))
        pairs.append((instance, samples))
    return Dataset(planted.topology, tuple(pairs))


def _mix_seed(seed: int, k: int) -> int:
    # stable per-instance streams; SeedSequence hashing keeps them independent
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def metropolis_sample(
    ham: OutputHamiltonian,
    m: int,
    seed: int,
    n_chains: int = 64,
    burnin: int = 400,
    thin: int = 2,
) -> SampleSet:
    """Single-site Metropolis sampler, used only as an independent cross-check.

    Runs ``n_chains`` parallel chains and harvests states every ``thin``
    sweeps after burn-in until m rows are collected.  Not a data source for
    fitting; exact enumeration is.
    """
    n = ham.n
    rng = _rng(seed, 0xC0FFEE)
    state = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n_chains, n))
    coupling = np.zeros((n, n))
    fields = np.zeros(n)
    for term, value in ham.terms.items():
        if term.is_pair:
            coupling[term.i, term.j] = coupling[term.j, term.i] = value
        else:
            fields[term.i] = value

    def sweep(state: np.ndarray) -> None:
        for i in range(n):
            local = fields[i] + state @ coupling[:, i]
            delta = -2.0 * state[:, i] * local  # energy change if spin i flips
            accept = rng.random(n_chains) < np.exp(np.minimum(delta, 0.0))
            state[accept, i] *= -1

    for _ in range(burnin):
        sweep(state)
    rows = []
    collected = 0
    while collected < m:
        for _ in range(thin):
            sweep(state)
        take = min(n_chains, m - collected)
        rows.append(state[:take].copy())
        collected += take
    return SampleSet(np.concatenate(rows, axis=0), np.ones(m))
