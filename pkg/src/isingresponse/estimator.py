"""Streaming convex estimation of device response parameters.

For qubit i the screening objective over a dataset of M programmed inputs
theta_k, each with a weighted sample set, is

    L_i(p) = (1/M) * sum_k (1/W_k) * sum_t w_kt * exp(-E_i(sigma_kt, theta_k, p))

where E_i = sigma_i * F_i(theta) + sigma_i * sum_j sigma_j * F_ij(theta) is the
part of the predicted output energy incident to qubit i.  Every F is quadratic
in theta and linear in its free parameters, so E_i is linear in p and L_i is a
positively weighted sum of exponentials of affine functions: smooth, convex,
bounded below by 0, and exactly 1 at p = 0.  With exact per-configuration
weights the gradient vanishes at the data-generating parameters, which is what
makes the fit consistent and lets planted-recovery tests pin tight tolerances.

Internally each per-qubit problem is flattened to a design matrix: row (k, t)
holds, for every local term, the spin sign (sigma_i or sigma_i*sigma_j) times
the term's free feature vector (1, free theta entries, free symmetrized
theta_a*theta_b products).  Per-instance evaluation subtracts the largest
exponent before exponentiating and restores it in log space, so the loss stays
finite long after a naive implementation would overflow.

The default solver is a damped Newton method with Armijo backtracking on the
diagonally rescaled system: the raw quadratic features differ in scale by four
orders of magnitude and first-order methods stall far from the tolerances the
planted tests demand.  Plain gradient descent with backtracking, entropic
(multiplicative two-sided) descent, and cyclic online SGD with eta_0/sqrt(t)
steps remain available through FitConfig.  An l1 penalty, when requested, is
handled by proximal gradient steps with the same backtracking rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    InputInstance,
    OutputHamiltonian,
    ResponseModel,
    ResponseTermParams,
    SampleSet,
    TermId,
    TermMask,
    Topology,
    default_term_ids,
    mask_preset,
)

OPTIMIZERS = (
    "newton",
    "gradient-descent",
    "gradient-descent-backtracking",
    "entropic-descent",
    "online-sgd",
)
WEIGHT_MODES = ("uniform", "shots")


class IdentifiabilityWarning(UserWarning):
    """Raised when the instance set cannot pin down every free parameter."""


@dataclass(frozen=True)
class Dataset:
    """M programmed inputs with the samples observed for each of them."""

    topology: Topology
    pairs: tuple[tuple[InputInstance, SampleSet], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.pairs:
            raise ValueError("empty dataset")
        for instance, samples in self.pairs:
            if instance.topology != self.topology:
                raise ValueError("all instances must share the dataset topology")
            if samples.n != self.topology.n:
                raise ValueError(
                    f"sample set has n={samples.n}, topology has n={self.topology.n}"
                )

    @property
    def M(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class FitConfig:
    optimizer: str = "newton"
    step_size: float = 0.1  # eta_0 for entropic-descent and online-sgd
    tol: float = 1e-6  # gradient inf-norm (prox residual when l1 > 0)
    max_iter: int = 10000
    l1: float = 0.0
    mask: str | TermMask = "physical"
    weight_mode: str = "uniform"
    output_terms: tuple[TermId, ...] | None = None

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.l1 < 0:
            raise ValueError("l1 penalty must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


@dataclass(frozen=True)
class QubitFitStats:
    qubit: int
    loss: float
    grad_norm: float
    iterations: int
    converged: bool
    trace: tuple[float, ...]


@dataclass(frozen=True)
class FitReport:
    per_qubit: tuple[QubitFitStats, ...]
    reconciliation_discrepancy: float
    converged: bool

    @property
    def max_grad_norm(self) -> float:
        return max((s.grad_norm for s in self.per_qubit), default=0.0)


@dataclass(frozen=True)
class IdentifiabilityReport:
    rank: int
    required: int
    sufficient: bool


@dataclass(frozen=True)
class LocalResponse:
    """The response-parameter slice seen by one qubit's screening loss."""

    qubit: int
    topology: Topology
    params: dict[TermId, ResponseTermParams]

    def __post_init__(self):
        for term, p in self.params.items():
            if self.qubit not in term.qubits:
                raise ValueError(f"term {term} does not touch qubit {self.qubit}")
            if p.D != self.topology.D:
                raise ValueError(f"term {term} has D={p.D}, topology D={self.topology.D}")

    def term_order(self) -> tuple[TermId, ...]:
        return tuple(sorted(self.params, key=lambda t: (t.is_pair, t.sort_key())))


# ---------------------------------------------------------------------------
# free-parameter packing


@dataclass(frozen=True)
class _TermLayout:
    term: TermId
    beta_slots: np.ndarray
    chi_a: np.ndarray
    chi_b: np.ndarray
    chi_mult: np.ndarray

    @property
    def size(self) -> int:
        return 1 + self.beta_slots.size + self.chi_a.size


def _layout_for(term: TermId, mask: TermMask) -> _TermLayout:
    beta_slots = np.flatnonzero(mask.beta)
    ia, ib = np.triu_indices(mask.D)
    free = mask.chi[ia, ib]
    ca, cb = ia[free], ib[free]
    mult = np.where(ca == cb, 1.0, 2.0)
    return _TermLayout(term, beta_slots, ca, cb, mult)


def _term_features(theta: np.ndarray, layout: _TermLayout) -> np.ndarray:
    return np.concatenate(
        (
            [1.0],
            theta[layout.beta_slots],
            theta[layout.chi_a] * theta[layout.chi_b] * layout.chi_mult,
        )
    )


def local_layouts(local: LocalResponse) -> tuple[_TermLayout, ...]:
    return tuple(_layout_for(t, local.params[t].mask) for t in local.term_order())


def pack_local(local: LocalResponse) -> np.ndarray:
    """Flatten the free parameters in the documented order.

    Terms come in canonical local order (the field term first, then pair terms
    sorted); within a term: the offset c, free beta entries by slot, then free
    upper-triangular chi entries row-major.
    """
    chunks = []
    for layout in local_layouts(local):
        p = local.params[layout.term]
        chunks.append([p.c])
        chunks.append(p.beta[layout.beta_slots])
        chunks.append(p.chi[layout.chi_a, layout.chi_b])
    return np.concatenate(chunks) if chunks else np.zeros(0)


def unpack_local(template: LocalResponse, vector: np.ndarray) -> LocalResponse:
    """Inverse of pack_local, reusing the template's masks."""
    vector = np.asarray(vector, dtype=np.float64)
    params: dict[TermId, ResponseTermParams] = {}
    pos = 0
    for layout in local_layouts(template):
        mask = template.params[layout.term].mask
        c = float(vector[pos])
        pos += 1
        beta = np.zeros(mask.D)
        beta[layout.beta_slots] = vector[pos : pos + layout.beta_slots.size]
        pos += layout.beta_slots.size
        chi = np.zeros((mask.D, mask.D))
        vals = vector[pos : pos + layout.chi_a.size]
        chi[layout.chi_a, layout.chi_b] = vals
        chi[layout.chi_b, layout.chi_a] = vals
        pos += layout.chi_a.size
        params[layout.term] = ResponseTermParams(c, beta, chi, mask)
    if pos != vector.size:
        raise ValueError(f"parameter vector has {vector.size} entries, expected {pos}")
    return LocalResponse(template.qubit, template.topology, params)


def free_parameter_names(local: LocalResponse) -> list[str]:
    names = []
    for layout in local_layouts(local):
        t = layout.term
        names.append(f"{t}.c")
        names.extend(f"{t}.beta[{s}]" for s in layout.beta_slots)
        names.extend(f"{t}.chi[{a},{b}]" for a, b in zip(layout.chi_a, layout.chi_b))
    return names


# ---------------------------------------------------------------------------
# the per-qubit problem in design-matrix form


class _QubitProblem:
    def __init__(self, qubit, layouts, X, w, starts, counts, weight_mode):
        self.qubit = qubit
        self.layouts = layouts
        self.X = X
        self.w = w
        self.starts = starts
        self.counts = counts
        self.M = starts.size
        self.inst_row = np.repeat(np.arange(self.M), counts)
        self.W = np.add.reduceat(w, starts)
        self.logW = np.log(self.W)
        self.W_tot = float(np.sum(self.W))
        self.weight_mode = weight_mode
        if weight_mode == "uniform":
            self.row_scale = 1.0 / (self.M * self.W[self.inst_row])
        else:
            self.row_scale = np.full(w.size, 1.0 / self.W_tot)
        rms = np.sqrt(np.mean(X**2, axis=0)) if X.size else np.zeros(X.shape[1])
        self.col_scale = np.where(rms > 0, rms, 1.0)

    @property
    def P(self) -> int:
        return self.X.shape[1]

    @classmethod
    def build(cls, local: LocalResponse, dataset: Dataset, weight_mode: str, compact: bool):
        layouts = local_layouts(local)
        i = local.qubit
        blocks, weights, counts = [], [], []
        for instance, samples in dataset.pairs:
            if compact:
                samples = samples.compacted()
            sig = samples.sigma.astype(np.float64)
            feats = [_term_features(instance.theta, lay) for lay in layouts]
            cols = []
            for lay, phi in zip(layouts, feats):
                t = lay.term
                if t.is_pair:
                    jj = t.j if t.i == i else t.i
                    sign = sig[:, i] * sig[:, jj]
                else:
                    sign = sig[:, i]
                cols.append(sign[:, None] * phi[None, :])
            blocks.append(np.concatenate(cols, axis=1))
            weights.append(samples.weights)
            counts.append(samples.nrows)
        X = np.concatenate(blocks, axis=0)
        w = np.concatenate(weights)
        counts = np.array(counts)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        return cls(i, layouts, X, w, starts, counts, weight_mode)

    def instance_log_losses(self, p: np.ndarray) -> np.ndarray:
        neg = -(self.X @ p)
        amax = np.maximum.reduceat(neg, self.starts)
        r = self.w * np.exp(neg - amax[self.inst_row])
        s = np.add.reduceat(r, self.starts)
        return amax + np.log(s) - self.logW

    def loss(self, p: np.ndarray) -> float:
        ell = self.instance_log_losses(p)
        with np.errstate(over="ignore"):
            per_inst = np.exp(ell)
            if self.weight_mode == "uniform":
                return float(np.mean(per_inst))
            return float(np.sum(self.W * per_inst) / self.W_tot)

    def _row_coefficients(self, p: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.w * np.exp(-(self.X @ p)) * self.row_scale

    def grad(self, p: np.ndarray) -> np.ndarray:
        return -(self.X.T @ self._row_coefficients(p))

    def hess(self, p: np.ndarray) -> np.ndarray:
        coef = self._row_coefficients(p)
        return self.X.T @ (self.X * coef[:, None])

    def instance_grad(self, k: int, p: np.ndarray) -> np.ndarray:
        lo = self.starts[k]
        hi = lo + self.counts[k]
        Xk, wk = self.X[lo:hi], self.w[lo:hi]
        with np.errstate(over="ignore"):
            coef = wk * np.exp(-(Xk @ p)) / self.W[k]
        return -(Xk.T @ coef)

    def instance_feature_matrix(self, dataset: Dataset, layout: _TermLayout) -> np.ndarray:
        return np.array([_term_features(inst.theta, layout) for inst, _ in dataset.pairs])


# ---------------------------------------------------------------------------
# public loss / gradient


def _problem_for(i, dataset, local, weight_mode="uniform", compact=False) -> _QubitProblem:
    if local.qubit != i:
        raise ValueError(f"local response is for qubit {local.qubit}, not {i}")
    if local.topology != dataset.topology:
        raise ValueError("local response and dataset topologies differ")
    if not local.params:
        raise ValueError(f"no response terms touch qubit {i}")
    return _QubitProblem.build(local, dataset, weight_mode, compact)


def is_loss(i: int, dataset: Dataset, local: LocalResponse, weight_mode: str = "uniform") -> float:
    """Screening loss for qubit i; exactly 1 at the all-zero response."""
    problem = _problem_for(i, dataset, local, weight_mode)
    return problem.loss(pack_local(local))


def is_loss_grad(i: int, dataset: Dataset, local: LocalResponse, weight_mode: str = "uniform") -> np.ndarray:
    """Exact gradient of is_loss over the free parameters, in pack_local order."""
    problem = _problem_for(i, dataset, local, weight_mode)
    return problem.grad(pack_local(local))


# ---------------------------------------------------------------------------
# solvers


def _grad_inf_norm(g: np.ndarray) -> float:
    return float(np.max(np.abs(g))) if g.size else 0.0


def _solve_newton(problem, p0, tol, max_iter):
    p = p0.copy()
    s = problem.col_scale
    f0 = problem.loss(p)
    trace = [f0]
    for it in range(1, max_iter + 1):
        g = problem.grad(p)
        gn = _grad_inf_norm(g)
        if gn <= tol:
            return p, it - 1, trace, True, gn
        H = problem.hess(p)
        Hs = H / s[:, None] / s[None, :]
        try:
            ds = np.linalg.solve(Hs, -(g / s))
        except np.linalg.LinAlgError:
            ds = np.linalg.lstsq(Hs, -(g / s), rcond=None)[0]
        d = ds / s
        gd = float(g @ d)
        if not np.all(np.isfinite(d)) or gd >= 0:
            d = -g / s**2
            gd = float(g @ d)
        t, accepted, f1 = 1.0, False, f0
        for _ in range(60):
            f1 = problem.loss(p + t * d)
            if f1 <= f0 + 1e-4 * t * gd:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        p = p + t * d
        f0 = f1
        trace.append(f0)
    g = problem.grad(p)
    gn = _grad_inf_norm(g)
    return p, it, trace, gn <= tol, gn


def _solve_gd(problem, p0, tol, max_iter):
    p = p0.copy()
    s2 = problem.col_scale**2
    f0 = problem.loss(p)
    trace = [f0]
    t = 1.0
    for it in range(1, max_iter + 1):
        g = problem.grad(p)
        gn = _grad_inf_norm(g)
        if gn <= tol:
            return p, it - 1, trace, True, gn
        d = -g / s2
        gd = float(g @ d)
        t = min(t * 2.0, 1e15)
        accepted, f1 = False, f0
        for _ in range(60):
            f1 = problem.loss(p + t * d)
            if f1 <= f0 + 1e-4 * t * gd:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        p = p + t * d
        f0 = f1
        trace.append(f0)
    g = problem.grad(p)
    gn = _grad_inf_norm(g)
    return p, it, trace, gn <= tol, gn


def _soft_threshold(x: np.ndarray, radius: float | np.ndarray) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - radius, 0.0)


def _solve_prox(problem, p0, lam, tol, max_iter):
    p = p0.copy()
    f0 = problem.loss(p)
    trace = [f0]
    t = 1.0
    resid = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = problem.grad(p)
        accepted, f1, q, dq = False, f0, p, np.zeros_like(p)
        for _ in range(80):
            q = _soft_threshold(p - t * g, t * lam)
            dq = q - p
            f1 = problem.loss(q)
            bound = f0 + float(g @ dq) + float(dq @ dq) / (2 * t)
            if f1 <= bound + 1e-15 * max(1.0, abs(f0)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        resid = _grad_inf_norm(dq) / t
        p, f0 = q, f1
        trace.append(f0)
        if resid <= tol:
            return p, it, trace, True, resid
        t = min(t * 1.5, 1e15)
    return p, it, trace, resid <= tol, resid


def _solve_entropic(problem, p0, step, tol, max_iter):
    # two-sided multiplicative updates on p = u - v with u, v > 0
    base = np.maximum(np.abs(p0), 1e-2)
    u = np.where(p0 >= 0, base + p0, base)
    v = u - p0
    p = u - v
    best_p, best_f = p.copy(), problem.loss(p)
    trace = [best_f]
    gn = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = problem.grad(p)
        gn = _grad_inf_norm(g)
        if gn <= tol:
            return p, it - 1, trace, True, gn
        eta = step / np.sqrt(it)
        factor = np.exp(np.clip(-eta * g, -60.0, 60.0))
        u = np.clip(u * factor, 1e-150, 1e150)
        v = np.clip(v / factor, 1e-150, 1e150)
        p = u - v
        f = problem.loss(p)
        trace.append(f)
        if f < best_f:
            best_f, best_p = f, p.copy()
    g = problem.grad(best_p)
    gn = _grad_inf_norm(g)
    return best_p, it, trace, gn <= tol, gn


def _solve_online(problem, p0, step, tol, max_iter):
    p = p0.copy()
    M = problem.M
    best_p, best_f = p.copy(), problem.loss(p)
    trace = [best_f]
    gn = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        k = (it - 1) % M
        g_k = problem.instance_grad(k, p)
        p = p - (step / np.sqrt(it)) * g_k
        if it % M == 0 or it == max_iter:
            f = problem.loss(p)
            trace.append(f)
            if f < best_f:
                best_f, best_p = f, p.copy()
            gn = _grad_inf_norm(problem.grad(p))
            if gn <= tol:
                return p, it, trace, True, gn
    g = problem.grad(best_p)
    gn = _grad_inf_norm(g)
    return best_p, it, trace, gn <= tol, gn


# ---------------------------------------------------------------------------
# fitting


def _local_term_ids(qubit: int, term_ids) -> tuple[TermId, ...]:
    mine = [t for t in term_ids if qubit in t.qubits]
    return tuple(sorted(mine, key=lambda t: (t.is_pair, t.sort_key())))


def _resolve_mask(mask, topology: Topology) -> TermMask:
    return mask_preset(mask, topology) if isinstance(mask, str) else mask


def _check_identifiability(problem: _QubitProblem, dataset: Dataset) -> None:
    # every local term shares the preset mask, so one rank check suffices
    layout = max(problem.layouts, key=lambda l: l.size)
    phi = problem.instance_feature_matrix(dataset, layout)
    required = layout.size
    rank = _scaled_rank(phi)
    if rank < required:
        warnings.warn(
            f"qubit {problem.qubit}: instance features have rank {rank} < {required}; "
            "the minimizer is not unique",
            IdentifiabilityWarning,
            stacklevel=3,
        )


def _scaled_rank(phi: np.ndarray) -> int:
    norms = np.max(np.abs(phi), axis=0)
    scaled = phi / np.where(norms > 0, norms, 1.0)
    return int(np.linalg.matrix_rank(scaled))


def fit_qubit_response(
    i: int, dataset: Dataset, config: FitConfig | None = None
) -> tuple[LocalResponse, QubitFitStats]:
    """Minimize qubit i's screening loss over its free response parameters.

    Returns the fitted local slice and convergence statistics.  Non-convergence
    within the iteration budget is reported in the stats, not raised.
    """
    config = config or FitConfig()
    topology = dataset.topology
    term_ids = config.output_terms if config.output_terms is not None else default_term_ids(topology.n)
    local_ids = _local_term_ids(i, term_ids)
    if not local_ids:
        empty = LocalResponse(i, topology, {})
        return empty, QubitFitStats(i, 1.0, 0.0, 0, True, (1.0,))
    mask = _resolve_mask(config.mask, topology)
    template = LocalResponse(i, topology, {t: ResponseTermParams.zeros(mask) for t in local_ids})
    problem = _QubitProblem.build(template, dataset, config.weight_mode, compact=True)
    _check_identifiability(problem, dataset)
    p0 = np.zeros(problem.P)
    if config.l1 > 0:
        p, iters, trace, converged, gn = _solve_prox(problem, p0, config.l1, config.tol, config.max_iter)
    elif config.optimizer == "newton":
        p, iters, trace, converged, gn = _solve_newton(problem, p0, config.tol, config.max_iter)
    elif config.optimizer in ("gradient-descent", "gradient-descent-backtracking"):
        p, iters, trace, converged, gn = _solve_gd(problem, p0, config.tol, config.max_iter)
    elif config.optimizer == "entropic-descent":
        p, iters, trace, converged, gn = _solve_entropic(
            problem, p0, config.step_size, config.tol, config.max_iter
        )
    elif config.optimizer == "online-sgd":
        p, iters, trace, converged, gn = _solve_online(
            problem, p0, config.step_size, config.tol, config.max_iter
        )
    else:  # pragma: no cover - guarded by FitConfig validation
        raise ValueError(f"unknown optimizer {config.optimizer!r}")
    local = unpack_local(template, p)
    stats = QubitFitStats(i, problem.loss(p), gn, iters, converged, tuple(trace))
    return local, stats


def _param_mean(a: ResponseTermParams, b: ResponseTermParams) -> ResponseTermParams:
    return ResponseTermParams((a.c + b.c) / 2.0, (a.beta + b.beta) / 2.0, (a.chi + b.chi) / 2.0, a.mask)


def _param_distance(a: ResponseTermParams, b: ResponseTermParams) -> float:
    return max(
        abs(a.c - b.c),
        float(np.max(np.abs(a.beta - b.beta), initial=0.0)),
        float(np.max(np.abs(a.chi - b.chi), initial=0.0)),
    )


def fit_response(dataset: Dataset, config: FitConfig | None = None) -> tuple[ResponseModel, FitReport]:
    """Fit every qubit independently and reconcile the doubly-estimated pairs.

    Each pair term appears in two local problems; the two estimates are
    averaged and their largest pre-average disagreement is reported.
    """
    config = config or FitConfig()
    topology = dataset.topology
    term_ids = config.output_terms if config.output_terms is not None else default_term_ids(topology.n)
    locals_: dict[int, LocalResponse] = {}
    stats: list[QubitFitStats] = []
    for i in range(topology.n):
        local, st = fit_qubit_response(i, dataset, config)
        locals_[i] = local
        stats.append(st)
    terms: dict[TermId, ResponseTermParams] = {}
    discrepancy = 0.0
    for t in term_ids:
        if t.is_pair:
            a = locals_[t.i].params[t]
            b = locals_[t.j].params[t]
            discrepancy = max(discrepancy, _param_distance(a, b))
            terms[t] = _param_mean(a, b)
        else:
            terms[t] = locals_[t.i].params[t]
    model = ResponseModel(topology, terms)
    report = FitReport(tuple(stats), discrepancy, all(s.converged for s in stats))
    return model, report


def rise_fit(
    samples: SampleSet,
    output_terms: tuple[TermId, ...] | None = None,
    config: FitConfig | None = None,
    with_report: bool = False,
):
    """Single-instance inverse-Ising reconstruction.

    Exactly the constants-only degenerate case of fit_response: a one-instance
    dataset, beta and chi pinned everywhere, the fitted offsets read out as the
    output Hamiltonian.  The l1 penalty, if any, applies to those offsets.
    """
    config = config or FitConfig()
    n = samples.n
    topology = Topology(n, ())
    terms = output_terms if output_terms is not None else default_term_ids(n)
    cfg = replace(config, mask="constants", output_terms=tuple(terms))
    dataset = Dataset(topology, ((InputInstance(topology, np.zeros(n)), samples),))
    model, report = fit_response(dataset, cfg)
    ham = OutputHamiltonian(n, {t: p.c for t, p in model.terms.items()})
    return (ham, report) if with_report else ham


def online_update(
    local: LocalResponse,
    pair: tuple[InputInstance, SampleSet],
    step: float,
) -> LocalResponse:
    """One gradient step on the screening loss of a single incoming pair.

    The caller owns the step schedule; cycling over a fixed dataset with
    eta_t = eta_0 / sqrt(t) converges to the batch minimizer.
    """
    if step < 0:
        raise ValueError("step must be nonnegative")
    instance, samples = pair
    dataset = Dataset(local.topology, ((instance, samples),))
    problem = _problem_for(local.qubit, dataset, local, compact=True)
    p = pack_local(local)
    return unpack_local(local, p - step * problem.instance_grad(0, p))


def identifiability_check(
    instances: list[InputInstance],
    mask: str | TermMask = "full",
) -> IdentifiabilityReport:
    """Rank of the stacked response features against the count needed for uniqueness.

    A quadratic response in D inputs has (D+1)(D+2)/2 free parameters per term
    and a linear one D+1, so that many independent instances are required; the
    check computes the numerical rank of (1, theta, theta x theta) feature
    vectors restricted by the mask.
    """
    if not instances:
        raise ValueError("need at least one instance")
    topology = instances[0].topology
    m = _resolve_mask(mask, topology)
    layout = _layout_for(TermId.single(0), m)
    phi = np.array([_term_features(inst.theta, layout) for inst in instances])
    rank = _scaled_rank(phi)
    required = layout.size
    return IdentifiabilityReport(rank, required, rank == required)
