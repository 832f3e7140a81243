"""Alice/Bob POVMs on the squashed spaces and the threshold-detector click model.

Bob's hardware is two ideal threshold detectors behind an actively chosen
polarization basis; double clicks are assigned to a random bit, which squashes
the statistics onto a qubit-plus-vacuum (3-dimensional) measurement model.
Outcome indices on the squashed space: 0, 1 are the basis bits, 2 is no-click.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .source import PolarizationFockState

__all__ = [
    "BOB_OUTCOMES",
    "DetectionDistribution",
    "alice_povm",
    "bob_squashed_povm",
    "click_distribution",
    "squash",
    "sym_rep",
    "rotation_matrix",
    "squashing_superop",
    "loss_superop",
    "rotation_superop",
]

BOB_OUTCOMES = ("H", "V", "+", "-", "perp")


@dataclass(frozen=True)
class DetectionDistribution:
    """Click probabilities for one measurement basis."""

    no_click: float
    click0: float
    click1: float
    double: float

    def __post_init__(self):
        vals = (self.no_click, self.click0, self.click1, self.double)
        if min(vals) < -1e-12:
            raise ValueError(f"negative probability in {vals}")
        if abs(sum(vals) - 1.0) > 1e-12:
            raise ValueError(f"click distribution sums to {sum(vals)}")


def alice_povm(cutoff: int) -> list[np.ndarray]:
    """Alice's four source-replacement POVM elements on A_S (x) A.

    Each element is sum_n |n><n| (x) |x><x| over the K+2 shield levels.
    """
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    d_s = cutoff + 2
    out = []
    for x in range(4):
        e = np.zeros((4, 4))
        e[x, x] = 1.0
        out.append(np.kron(np.eye(d_s), e).astype(complex))
    return out


def bob_squashed_povm(p_z: float) -> list[np.ndarray]:
    """The five squashed POVM elements [H, V, +, -, perp] on the 3-dim space."""
    if not 0.0 < p_z < 1.0:
        raise ValueError(f"p_z must lie in (0, 1): {p_z}")
    p_x = 1.0 - p_z
    g_h = p_z * np.diag([1.0, 0.0, 0.0])
    g_v = p_z * np.diag([0.0, 1.0, 0.0])
    g_p = p_x / 2 * np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    g_m = p_x / 2 * np.array([[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    g_perp = np.diag([0.0, 0.0, 1.0])
    return [m.astype(complex) for m in (g_h, g_v, g_p, g_m, g_perp)]


def rotation_matrix(theta: float) -> np.ndarray:
    """2x2 polarization rotation: H at angle 0 maps to angle theta."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def sym_rep(a: np.ndarray, n: int) -> np.ndarray:
    """Amplitude transformation on the n-photon two-mode space induced by the
    mode substitution a_dag_i -> sum_j a[i, j] b_dag_j.

    Basis ordering: index k means (n-k) photons in mode 0 and k in mode 1.
    """
    a = np.asarray(a, dtype=complex)
    if n == 0:
        return np.ones((1, 1), dtype=complex)
    out = np.zeros((n + 1, n + 1), dtype=complex)
    for k in range(n + 1):
        # (a00 b0 + a01 b1)^(n-k) (a10 b0 + a11 b1)^k, as coefficients over b0^(n-j) b1^j
        poly1 = np.array(
            [math.comb(n - k, i) * a[0, 0] ** (n - k - i) * a[0, 1] ** i for i in range(n - k + 1)]
        )
        poly2 = np.array(
            [math.comb(k, i) * a[1, 0] ** (k - i) * a[1, 1] ** i for i in range(k + 1)]
        )
        coeffs = np.convolve(poly1, poly2)
        norm_in = math.sqrt(math.factorial(n - k) * math.factorial(k))
        for j in range(n + 1):
            norm_out = math.sqrt(math.factorial(n - j) * math.factorial(j))
            out[j, k] = coeffs[j] * norm_out / norm_in
    return out


def _measurement_frame(n: int, basis_angle: float) -> np.ndarray:
    # amplitudes in the frame of a basis at angle beta: psi' = sym_rep(R(beta), n) psi
    return sym_rep(rotation_matrix(basis_angle), n)


def click_distribution(state: PolarizationFockState | None, basis_angle: float) -> DetectionDistribution:
    """Threshold-detector outcome distribution for a basis at `basis_angle`.

    For an n-photon state the photons split over the two arms according to the
    occupation in the rotated frame; no_click iff n = 0, a single click iff all
    photons land in one arm, double click otherwise.
    """
    if state is None or state.n == 0:
        return DetectionDistribution(1.0, 0.0, 0.0, 0.0)
    n = state.n
    amps = _measurement_frame(n, basis_angle) @ state.amplitudes
    p0 = float(abs(amps[0]) ** 2)
    p1 = float(abs(amps[n]) ** 2)
    p0 = min(p0, 1.0)
    p1 = min(p1, 1.0 - p0)
    return DetectionDistribution(0.0, p0, p1, max(0.0, 1.0 - p0 - p1))


def squash(dist: DetectionDistribution) -> dict[str, float]:
    """Post-process clicks: double clicks split evenly between the bits."""
    return {
        "bit0": dist.click0 + dist.double / 2,
        "bit1": dist.click1 + dist.double / 2,
        "perp": dist.no_click,
    }


# --- squashed channel building blocks (block superoperators, row-major vec) ---


def _superop_from_kraus(kraus: list[np.ndarray]) -> np.ndarray:
    return sum(np.kron(k, k.conj()) for k in kraus)


def loss_superop(n: int, m: int, eta: float) -> np.ndarray:
    """Superoperator for the two-mode pure-loss channel from the n-photon to
    the m-photon block (m photons survive, binomial thinning)."""
    if not 0 <= m <= n:
        raise ValueError("need 0 <= m <= n")
    kraus = []
    lost = n - m
    for k_h in range(lost + 1):
        k_v = lost - k_h
        d = np.zeros((m + 1, n + 1))
        for k in range(n + 1):
            n_h, n_v = n - k, k
            if k_h <= n_h and k_v <= n_v:
                j = k - k_v
                d[j, k] = math.sqrt(
                    math.comb(n_h, k_h) * math.comb(n_v, k_v) * eta**m * (1 - eta) ** lost
                )
        kraus.append(d)
    return _superop_from_kraus(kraus)


def rotation_superop(m: int, theta: float) -> np.ndarray:
    u = sym_rep(rotation_matrix(theta), m).conj().T  # state polarized at alpha -> alpha+theta
    return np.kron(u, u.conj())


_CIRCULAR = np.array([[1.0, 1.0], [-1.0j, 1.0j]]) / math.sqrt(2.0)


def _click_functionals(m: int) -> tuple[np.ndarray, np.ndarray]:
    # F_W with Tr(F_W sigma) = P(bit0|W) - P(bit1|W) for the two measured bases
    d = m + 1
    e0 = np.zeros(d)
    e0[0] = 1.0
    em = np.zeros(d)
    em[m] = 1.0
    out = []
    for beta in (0.0, math.pi / 4):
        t = _measurement_frame(m, beta)
        out.append(t.conj().T @ np.diag(e0 - em) @ t)
    return out[0], out[1]


def _build_squash(m: int, f_y: np.ndarray) -> np.ndarray:
    d = m + 1
    f_z, f_x = _click_functionals(m)
    s = np.zeros((9, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            tr = 1.0 if i == j else 0.0
            z = f_z[j, i]
            x = f_x[j, i]
            y = f_y[j, i]
            q = np.zeros((3, 3), dtype=complex)
            q[0, 0] = (tr + z) / 2
            q[1, 1] = (tr - z) / 2
            q[0, 1] = (x - 1j * y) / 2
            q[1, 0] = (x + 1j * y) / 2
            s[:, i * d + j] = q.reshape(9)
    return s


def _squash_choi(f_y: np.ndarray, m: int) -> np.ndarray:
    d = m + 1
    f_z, f_x = _click_functionals(m)
    choi = np.zeros((d * 3, d * 3), dtype=complex)
    for i in range(d):
        for j in range(d):
            tr = 1.0 if i == j else 0.0
            z = f_z[j, i]
            x = f_x[j, i]
            y = f_y[j, i]
            q = np.array(
                [[(tr + z) / 2, (x - 1j * y) / 2, 0], [(x + 1j * y) / 2, (tr - z) / 2, 0], [0, 0, 0]],
                dtype=complex,
            )
            choi[i * 3 : (i + 1) * 3, j * 3 : (j + 1) * 3] = q
    return choi


_SQUASH_CACHE: dict[int, np.ndarray] = {}


def squashing_superop(m: int) -> np.ndarray:
    """CP map from the m-photon block to the 3-dim squashed space (9 x (m+1)^2).

    The z and x Bloch functionals are pinned by the double-click-assigned
    statistics of the two measured bases; the free y functional is completed
    so the Choi matrix is positive (circular-basis guess, refined by
    alternating projections when the guess alone is not CP).
    """
    if m in _SQUASH_CACHE:
        return _SQUASH_CACHE[m]
    if m == 0:
        s = np.zeros((9, 1), dtype=complex)
        s[8, 0] = 1.0  # vacuum -> |perp><perp|
        _SQUASH_CACHE[m] = s
        return s
    d = m + 1
    if m == 1:
        # single photon: the squash is the identity embedding, y = sigma_Y exactly
        t_circ = sym_rep(_CIRCULAR, m)
        f_y = t_circ.conj().T @ np.diag([1.0, -1.0]) @ t_circ
    else:
        f_y = np.zeros((d, d), dtype=complex)
    choi = _squash_choi(f_y, m)
    for _ in range(50000):
        w, v = np.linalg.eigh((choi + choi.conj().T) / 2)
        if w.min() > -2e-11:
            break
        proj = (v * np.clip(w, 0.0, None)) @ v.conj().T
        # least-squares refit of the free y functional, all pinned parts restored
        fit = np.zeros((d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                q = proj[i * 3 : (i + 1) * 3, j * 3 : (j + 1) * 3]
                fit[j, i] = (q[1, 0] - q[0, 1]) / 1j
        f_y = (fit + fit.conj().T) / 2
        choi = _squash_choi(f_y, m)
    else:
        raise RuntimeError(f"no CP completion found for the {m}-photon squash")
    s = _build_squash(m, f_y)
    _SQUASH_CACHE[m] = s
    return s
