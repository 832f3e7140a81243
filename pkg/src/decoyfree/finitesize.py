"""Variable-length finite-size key lengths: acceptance-test intervals from
beta quantiles, the Renyi-order optimization, and the finite-key corrections.

All logarithms are base 2 (the printed formulas mix bases; they are
normalized here once). The observed statistics are taken equal to the
expected channel output, i.e. the channel behaves as expected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ExpectedFrequencies
from .constraints import ConstraintSet, Model, _conjugate_rows, _marginal_rows, _reduce_equalities, _zero_support_restriction
from .numerics import beta_quantile, cond_entropy
from .protocol import ProtocolSpec, sift_statistics
from .solver import KeyRateResult, SolverConfig, minimize_relative_entropy

__all__ = [
    "SecurityParams",
    "FiniteScenario",
    "kappa_bounds",
    "alpha_opt",
    "build_finite_constraints",
    "finite_key_length",
]


@dataclass(frozen=True)
class SecurityParams:
    """Security parameters for error verification, privacy amplification and
    acceptance testing; the total security parameter is their sum."""

    eps_ev: float = 1e-12 / 3
    eps_pa: float = 1e-12 / 3
    eps_at: float = 1e-12 / 3

    def __post_init__(self):
        for name in ("eps_ev", "eps_pa", "eps_at"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1): {v}")

    @property
    def eps_sec(self) -> float:
        return self.eps_ev + self.eps_pa + self.eps_at


@dataclass(frozen=True)
class FiniteScenario:
    """Finite-size run description: total signals, generation probability,
    observed statistics, and the Alice dimension entering the correction term."""

    n_total: float
    p_gen: float
    freqs: ExpectedFrequencies
    dim_a: int = 4

    def __post_init__(self):
        if self.n_total < 1:
            raise ValueError("need at least one signal")
        if not 0.0 < self.p_gen < 1.0:
            raise ValueError("finite-size runs need 0 < p_gen < 1")

    @property
    def n_test(self) -> float:
        return (1.0 - self.p_gen) * self.n_total


def _kappa_from_count(count: float, n_total: float, eps_at: float, card_sigma: int):
    """Clopper-Pearson interval half-widths around the per-round event
    frequency count/n_total; degenerate counts use the exact limit
    conventions (quantile 0 or 1)."""
    a_level = eps_at / (2.0 * card_sigma)
    q_hat = count / n_total
    if count <= 0.0:
        kappa_l = 0.0
    else:
        q = beta_quantile(a_level, count, n_total - count + 1.0)
        kappa_l = max(0.0, q_hat - q)
    if n_total - count <= 0.0:
        kappa_u = 1.0 - q_hat
    else:
        q = beta_quantile(1.0 - a_level, count + 1.0, n_total - count)
        kappa_u = max(0.0, q - q_hat)
    return kappa_l, kappa_u


def kappa_bounds(f_obs: float, n_test: float, n_total: float, eps_at: float, card_sigma: int):
    """(kappa_L, kappa_U) for a test-round statistic observed with conditional
    frequency f_obs: the event count is n_test * f_obs, and the acceptance
    interval brackets the per-round test-and-k probability count/n_total
    (the quantity the test-probability-scaled observable measures)."""
    if not 0.0 <= f_obs <= 1.0:
        raise ValueError(f"frequency out of range: {f_obs}")
    return _kappa_from_count(n_test * f_obs, n_total, eps_at, card_sigma)


def alpha_opt(eps_pa: float, dim_a: int, n_sift: float) -> float:
    """Renyi order 1 + sqrt(log2(1/eps_PA) / (log2^2(dim_A + 1) n_sift))."""
    if n_sift <= 0:
        raise ValueError("n_sift must be positive")
    return 1.0 + math.sqrt(math.log2(1.0 / eps_pa) / (math.log2(dim_a + 1) ** 2 * n_sift))


# the announcement alphabet: 20 test pairs plus {sift-and-gen, no-detect}
_CARD_SIGMA = 22


# acceptance intervals narrower than this are widened to it: pure relaxation
# (the bound stays valid) that keeps the interior-point subproblems
# well-conditioned at very large N
_MIN_HALF_WIDTH = 1e-7


def _interval(val: float, kl: float, ku: float) -> tuple:
    lo = val - max(kl, _MIN_HALF_WIDTH)
    hi = val + max(ku, _MIN_HALF_WIDTH)
    return (None if lo <= 1e-14 else lo), hi


def build_finite_constraints(
    model: Model,
    fs: FiniteScenario,
    sp: SecurityParams,
    proto: ProtocolSpec,
) -> ConstraintSet:
    """Feasible set V(F_obs): the fixed Alice marginal plus one acceptance
    interval per announcement statistic. Counts: test pairs use n_test * F_k,
    sift-and-gen uses the surviving generation rounds, the no-detect event is
    announced in every round so it uses n_total * F_perp.
    """
    freqs = fs.freqs
    f5 = freqs.povm_frequencies()
    stats = sift_statistics(proto, freqs)
    f_sg = fs.p_gen * stats.p_kept

    eq = _marginal_rows(model)
    ineq = []
    p_test = 1.0 - fs.p_gen
    for x in range(4):
        for yi in range(5):
            # the interval brackets the per-round (test and k) probability,
            # so the observable carries the test-round probability factor
            ops = [p_test * op for op in model.observables[("povm", x, yi)]]
            val = p_test * float(f5[x, yi])
            kl, ku = kappa_bounds(float(f5[x, yi]), fs.n_test, fs.n_total, sp.eps_at, _CARD_SIGMA)
            lo, hi = _interval(val, kl, ku)
            ineq.append((ops, lo, hi))
    val = float(freqs.p_perp)
    kl, ku = _kappa_from_count(fs.n_total * val, fs.n_total, sp.eps_at, _CARD_SIGMA)
    lo, hi = _interval(val, kl, ku)
    ineq.append((list(model.observables[("perp",)]), lo, min(1.0, hi)))
    n_sift = fs.n_total * f_sg
    kl, ku = _kappa_from_count(n_sift, fs.n_total, sp.eps_at, _CARD_SIGMA)
    lo, hi = _interval(f_sg, kl, ku)
    sg_ops = [op * fs.p_gen for op in model.observables[("sift_gen",)]]
    ineq.append((sg_ops, lo, hi))

    dims = tuple(model.dims)
    eq = _reduce_equalities(eq, dims)
    return ConstraintSet(
        dims=dims,
        block_traces=tuple(model.block_traces),
        eq_rows=tuple((list(o), v) for o, v in eq),
        ineq_rows=tuple((list(o), lo, hi) for o, lo, hi in ineq),
        check_rows=(),
        support=tuple(None for _ in dims),
    )


def finite_key_length(
    model: Model,
    fs: FiniteScenario,
    sp: SecurityParams,
    f_ec: float = 1.2,
    cfg: SolverConfig = SolverConfig(),
    _zero_kappa: bool = False,
    _no_corrections: bool = False,
) -> KeyRateResult:
    """Variable-length key length (bits) and per-signal rate for the scenario.

    length = n_sift * [min_V f] / (F_sg + kappa_U_sg) - f_EC * n_sift * h_cond
             - sqrt(n_sift) (alpha-1) log2^2(dim_A+1) - log2(2/eps_EV)
             - alpha/(alpha-1) (log2(1/(2 eps_PA)) + 2/alpha),  clamped at 0.

    The minimization reuses the Frank-Wolfe machinery on the inflated set and
    the reported length always uses its reliable lower bound. The two private
    flags collapse the acceptance intervals / drop the corrections and exist
    for the asymptotic-consistency checks.
    """
    proto = model.proto
    freqs = fs.freqs
    stats = sift_statistics(proto, freqs)
    f_sg = fs.p_gen * stats.p_kept
    n_sift = fs.n_total * f_sg
    if n_sift <= 0:
        return KeyRateResult(0.0, 0.0, 0.0, 0, 0.0, 0.0, "converged", key_length=0.0)

    if _zero_kappa:
        from .constraints import build_asymptotic_constraints

        proto_gen = ProtocolSpec(proto.kind, p_z=proto.p_z, p_gen=fs.p_gen, cutoff=proto.cutoff)
        model_gen = Model(
            proto=proto_gen,
            src=model.src,
            labels=model.labels,
            weights=model.weights,
            isometries=model.isometries,
            marginals=model.marginals,
            dims=model.dims,
            gmap=model.gmap,
            observables=model.observables,
        )
        cs = build_asymptotic_constraints(model_gen, freqs)
        ku_sg = 0.0
    else:
        cs = build_finite_constraints(model, fs, sp, proto)
        _, ku_sg = _kappa_from_count(n_sift, fs.n_total, sp.eps_at, _CARD_SIGMA)

    from .constraints import restricted_gmap

    gmap = restricted_gmap(model, cs)
    rho, f_min, lb, gap, iters, status, diag = minimize_relative_entropy(gmap, cs, cfg)
    if status == "infeasible":
        return KeyRateResult(math.nan, math.nan, 0.0, 0, math.nan, math.inf, status, key_length=0.0)

    h_cond = cond_entropy(stats.error_table, "bob")
    alpha = alpha_opt(sp.eps_pa, fs.dim_a, n_sift)
    # the G map is normalized per generation round; the key-length display's
    # relative entropy is per round, so the generation probability scales it
    length = n_sift * (fs.p_gen * lb) / (f_sg + ku_sg) - f_ec * n_sift * h_cond
    if not _no_corrections:
        length -= math.sqrt(n_sift) * (alpha - 1.0) * math.log2(fs.dim_a + 1) ** 2
        length -= math.log2(2.0 / sp.eps_ev)
        length -= alpha / (alpha - 1.0) * (math.log2(1.0 / (2.0 * sp.eps_pa)) + 2.0 / alpha)
    length = max(0.0, length)
    residual = cs.residual(rho) if rho is not None else math.inf
    return KeyRateResult(
        primal_value=f_min,
        lower_bound=lb,
        rate=length / fs.n_total,
        iterations=iters,
        final_gap=gap,
        feasibility_residual=residual,
        status=status,
        key_length=length,
        diagnostics=diag,
    )
