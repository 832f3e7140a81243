"""Dense complex linear algebra over labelled registers plus scalar special functions.

All entropic quantities are in bits (log base 2) so they combine directly with
key-rate formulas; natural-log expressions from the literature are converted
once here and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaincinv

__all__ = [
    "RegisterShape",
    "JointDistribution",
    "kron",
    "kron_all",
    "partial_trace",
    "herm_eig",
    "perturbed_log",
    "rel_entropy",
    "poisson_pmf",
    "binary_entropy",
    "beta_quantile",
    "reg_inc_beta",
    "cond_entropy",
]

_HERM_TOL = 1e-12


@dataclass(frozen=True)
class RegisterShape:
    """Ordered (label, dimension) structure of a multi-register system."""

    labels: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.dims):
            raise ValueError("labels and dims must have equal length")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate register labels in {self.labels}")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"register dimensions must be positive: {self.dims}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no register {label!r} in shape {self.labels}") from None


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product."""
    return np.kron(np.asarray(a), np.asarray(b))


def kron_all(*ms: np.ndarray) -> np.ndarray:
    out = np.asarray(ms[0])
    for m in ms[1:]:
        out = np.kron(out, m)
    return out


def partial_trace(m: np.ndarray, shape: RegisterShape, keep) -> np.ndarray:
    """Trace out every register not in `keep`; kept registers stay in original order.

    Preserves the trace exactly up to floating point.
    """
    m = np.asarray(m)
    d = shape.dim
    if m.shape != (d, d):
        raise ValueError(f"matrix shape {m.shape} does not match register shape (dim {d})")
    keep = set(keep)
    unknown = keep - set(shape.labels)
    if unknown:
        raise KeyError(f"unknown register labels {sorted(unknown)}")
    k = len(shape.dims)
    t = m.reshape(shape.dims + shape.dims)
    # einsum indices: row axis i and column axis i share a letter when traced
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = []
    col = []
    out = []
    nxt = 0
    for i, label in enumerate(shape.labels):
        if label in keep:
            row.append(letters[nxt])
            col.append(letters[nxt + 1])
            out.append((letters[nxt], letters[nxt + 1]))
            nxt += 2
        else:
            row.append(letters[nxt])
            col.append(letters[nxt])
            nxt += 1
    spec = "".join(row) + "".join(col) + "->" + "".join(r for r, _ in out) + "".join(c for _, c in out)
    kept_dim = int(np.prod([shape.dims[i] for i, lab in enumerate(shape.labels) if lab in keep]))
    return np.einsum(spec, t).reshape(kept_dim, kept_dim)


def _check_hermitian(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    scale = max(np.abs(m).max(), 1e-30)
    if np.abs(m - m.conj().T).max() > _HERM_TOL * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    return m


def herm_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix; eigenvalues ascending."""
    m = _check_hermitian(m)
    w, v = np.linalg.eigh(m)
    return w, v


def perturbed_log(rho: np.ndarray, eps: float) -> np.ndarray:
    """log2 of (1-eps)*rho + eps*I/d, computed in the eigenbasis.

    Stabilizes the relative-entropy objective near rank-deficient states.
    """
    if eps < 0 or eps >= 1:
        raise ValueError(f"eps must lie in [0, 1): {eps}")
    w, v = herm_eig(rho)
    if w.min() < -1e-10:
        raise ValueError(f"input is not PSD: min eigenvalue {w.min():.3e}")
    d = rho.shape[0]
    wt = (1.0 - eps) * np.clip(w, 0.0, None) + eps / d
    # eps == 0 with exact zeros would be -inf; floor far below any eps in use
    wt = np.clip(wt, 1e-300, None)
    return (v * np.log2(wt)) @ v.conj().T


def rel_entropy(rho: np.ndarray, sigma: np.ndarray, eps: float = 1e-12) -> float:
    """Quantum relative entropy D(rho||sigma) in bits, with eps-smoothed logs.

    Both arguments are perturbed identically so equal-trace inputs give D >= 0.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    d = rho.shape[0]
    w, v = herm_eig(rho)
    if w.min() < -1e-10:
        raise ValueError("rho is not PSD")
    wt = np.clip((1.0 - eps) * np.clip(w, 0.0, None) + eps / d, 1e-300, None)
    term1 = float(np.dot(wt, np.log2(wt)))
    rho_t = (v * wt) @ v.conj().T
    log_sigma = perturbed_log(sigma, eps)
    term2 = float(np.real(np.trace(rho_t @ log_sigma)))
    return term1 - term2


def poisson_pmf(mu: float, n: int) -> float:
    """Poisson probability e^-mu mu^n / n!, evaluated in log space."""
    if mu < 0:
        raise ValueError(f"mean photon number must be nonnegative: {mu}")
    if n < 0 or int(n) != n:
        raise ValueError(f"photon number must be a nonnegative integer: {n}")
    n = int(n)
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))


def binary_entropy(p: float) -> float:
    """Binary entropy in bits with 0 log 0 := 0."""
    if p < 0 or p > 1:
        raise ValueError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError(f"shape parameters must be positive: a={a}, b={b}")
    return float(betainc(a, b, x))


def beta_quantile(p: float, a: float, b: float) -> float:
    """Inverse of the regularized incomplete beta: x with I_x(a,b) = p."""
    if a <= 0 or b <= 0:
        raise ValueError(f"shape parameters must be positive: a={a}, b={b}")
    if not 0.0 < p < 1.0:
        if p == 0.0:
            return 0.0
        if p == 1.0:
            return 1.0
        raise ValueError(f"quantile probability out of range: {p}")
    return float(betaincinv(a, b, p))


@dataclass(frozen=True)
class JointDistribution:
    """Probability table over a finite product alphabet.

    `normalization` is 1 for full distributions and may be < 1 for
    subnormalized post-sifting tables.
    """

    table: np.ndarray
    axes: tuple[str, ...]
    normalization: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", t)
        if t.ndim != len(self.axes):
            raise ValueError("axis labels must match table dimensionality")
        if t.min() < -1e-12:
            raise ValueError(f"negative probability {t.min():.3e}")
        if abs(t.sum() - self.normalization) > 1e-12:
            raise ValueError(
                f"table sums to {t.sum():.15g}, declared normalization {self.normalization}"
            )

    def axis(self, label: str) -> int:
        try:
            return self.axes.index(label)
        except ValueError:
            raise KeyError(f"no axis {label!r} in {self.axes}") from None

    def marginal(self, labels) -> "JointDistribution":
        keep = [self.axis(l) for l in labels]
        drop = tuple(i for i in range(self.table.ndim) if i not in keep)
        t = self.table.sum(axis=drop)
        # restore requested order
        order = np.argsort(np.argsort(keep))
        t = np.transpose(t, axes=np.argsort(order)) if len(keep) > 1 else t
        kept_labels = tuple(self.axes[i] for i in sorted(keep))
        return JointDistribution(t, kept_labels, self.normalization)

    def normalized(self) -> "JointDistribution":
        if self.normalization <= 0:
            raise ValueError("cannot normalize an empty table")
        return JointDistribution(self.table / self.normalization, self.axes, 1.0)


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def cond_entropy(joint: JointDistribution, given: str) -> float:
    """H(first axis | given axis) in bits; input must be normalized."""
    if abs(joint.normalization - 1.0) > 1e-12:
        raise ValueError("cond_entropy requires a normalized distribution")
    first = joint.axes[0]
    if given == first:
        raise ValueError("conditioning axis equals the target axis")
    pair = joint.marginal([first, given])
    t = pair.table
    h_joint = _entropy_bits(t.ravel())
    h_given = _entropy_bits(t.sum(axis=0).ravel())
    return h_joint - h_given
