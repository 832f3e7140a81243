"""Announcement structures, key maps, sifting statistics and the G/Z maps
built from Kraus operators for BB84, NPAB BB84 and SARG04.

Register conventions inside a shield block (operators are identical across
blocks): input A (x) B with dims 4 x 3; G-map outputs are organized into
announcement branches, each carrying a leading 2-dim key register R. SARG04's
printed Kraus operators keep only deduction-consistent events; classical sift
statistics (used for error-correction accounting and observed frequencies)
keep every conclusive round, so for SARG04 the two coincide exactly only on
channels without polarization errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import BASES, ExpectedFrequencies
from .measure import bob_squashed_povm
from .numerics import JointDistribution, cond_entropy

__all__ = [
    "PROTOCOLS",
    "ProtocolSpec",
    "GMap",
    "build_gmap",
    "branch_kraus",
    "apply_gmap",
    "apply_zmap",
    "kept_observable",
    "SiftStatistics",
    "sift_statistics",
    "delta_leak",
]

PROTOCOLS = ("BB84", "NPAB", "SARG04")

# Alice's key map g: signal -> bit. BB84/NPAB encode the bit within the basis;
# SARG04 encodes the basis itself.
_ALICE_BIT = {
    "BB84": (0, 1, 0, 1),
    "NPAB": (0, 1, 0, 1),
    "SARG04": (0, 0, 1, 1),
}

# SARG04 announcement pairs (one Z member, one X member), Appendix ordering.
_SARG_PAIRS = ((0, 2), (1, 2), (1, 3), (0, 3))
# orthogonal partner of each signal: H<->V, D<->A
_ORTH = (1, 0, 3, 2)
# Bob outcome label y in 0..3 <-> (basis, bit)
_Y_STATE = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class ProtocolSpec:
    """Protocol kind plus the hardware/announcement probabilities.

    BB84 is pinned to photon cutoff 1 (multi-photon pulses are tagged as
    leaked); NPAB and SARG04 default to cutoff 3.
    """

    kind: str
    p_z: float = 0.5
    p_gen: float = 1.0
    cutoff: int | None = None

    def __post_init__(self):
        if self.kind not in PROTOCOLS:
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if not 0.0 < self.p_z < 1.0:
            raise ValueError(f"p_z must lie in (0, 1): {self.p_z}")
        if not 0.0 < self.p_gen <= 1.0:
            raise ValueError(f"p_gen must lie in (0, 1]: {self.p_gen}")
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", 1 if self.kind == "BB84" else 3)
        if self.kind == "BB84" and self.cutoff != 1:
            raise ValueError("BB84 uses photon cutoff 1 (multi-photon pulses are tagged)")
        if self.cutoff < 0:
            raise ValueError("cutoff must be nonnegative")

    def alice_bit(self, x: int) -> int:
        return _ALICE_BIT[self.kind][x]


def _proj_a(x: int) -> np.ndarray:
    e = np.zeros((4, 4))
    e[x, x] = 1.0
    return e


_PQ = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])  # B -> qubit, kills no-click
_KET = {0: np.array([[1.0], [0.0]]), 1: np.array([[0.0], [1.0]])}
_QUBIT = {
    0: np.array([1.0, 0.0]),  # H
    1: np.array([0.0, 1.0]),  # V
    2: np.array([1.0, 1.0]) / math.sqrt(2),  # +
    3: np.array([1.0, -1.0]) / math.sqrt(2),  # -
}


def branch_kraus(proto: ProtocolSpec) -> list[tuple[str, np.ndarray]]:
    """Per-shield-block Kraus operator of each announcement branch.

    Each operator maps A (x) B (12-dim) into R (x) [branch registers] (x) qubit
    with R leading; branches are mutually flagged by the announcement register,
    so G(rho) is their direct sum.
    """
    p_z = proto.p_z
    p_x = 1.0 - p_z
    if proto.kind == "BB84":
        out = []
        for name, (x0, x1), w in (("Z", (0, 1), p_z), ("X", (2, 3), p_x)):
            m = np.kron(_KET[0], np.kron(_proj_a(x0), math.sqrt(w) * _PQ)) + np.kron(
                _KET[1], np.kron(_proj_a(x1), math.sqrt(w) * _PQ)
            )
            out.append((name, m))
        return out
    if proto.kind == "NPAB":
        # single announcement; Alice's basis lives in an extra flag register
        m = 0.0
        for x in range(4):
            r = _ALICE_BIT["NPAB"][x]
            basis = 0 if x < 2 else 1
            m = m + np.kron(_KET[r], np.kron(_KET[basis], np.kron(_proj_a(x), _PQ)))
        return [("det", m)]
    # SARG04: four pair announcements, 1/2 inside Alice's POVM square roots;
    # Bob's factor projects on the outcome that makes the deduction consistent.
    out = []
    for i, (xz, xx) in enumerate(_SARG_PAIRS):
        # correct deduction of the Z member: Bob's outcome orthogonal to the X member
        y_for_z = _ORTH[xx]
        y_for_x = _ORTH[xz]
        bz = _bob_outcome_kraus(y_for_z, p_z)
        bx = _bob_outcome_kraus(y_for_x, p_z)
        m = np.kron(_KET[0], np.kron(math.sqrt(0.5) * _proj_a(xz), bz)) + np.kron(
            _KET[1], np.kron(math.sqrt(0.5) * _proj_a(xx), bx)
        )
        out.append((f"pair{i + 1}", m))
    return out


def _bob_outcome_kraus(y: int, p_z: float) -> np.ndarray:
    """sqrt(p_basis) |y><y| as a map B -> qubit."""
    basis, _ = _Y_STATE[y]
    w = p_z if basis == 0 else 1.0 - p_z
    v = _QUBIT[y]
    return math.sqrt(w) * np.outer(v, v) @ _PQ


@dataclass(frozen=True)
class GMap:
    """Kraus operators of the sifting/key map channel, one per branch."""

    kind: str
    n_blocks: int
    branches: tuple[tuple[str, np.ndarray], ...]

    def kraus_operators(self) -> list[np.ndarray]:
        """Full-space operators, input (A_S, A, B), output (R, A_S, rest, C),
        where `rest` collects the branch-internal registers and the qubit."""
        n_c = len(self.branches)
        n_s = self.n_blocks
        ops = []
        for c, (_, m) in enumerate(self.branches):
            rows, cols = m.shape
            inner = rows // 2
            t = m.reshape(2, inner, cols)
            full = np.zeros((2, n_s, inner, n_c, n_s, cols), dtype=complex)
            for r in range(2):
                for s in range(n_s):
                    full[r, s, :, c, s, :] = t[r]
            ops.append(full.reshape(2 * n_s * inner * n_c, n_s * cols))
        return ops


def build_gmap(proto: ProtocolSpec, n_blocks: int | None = None) -> GMap:
    """G map for the protocol; `n_blocks` is the shield dimension (default K+2)."""
    if n_blocks is None:
        n_blocks = proto.cutoff + 2
    return GMap(proto.kind, n_blocks, tuple(branch_kraus(proto)))


def apply_gmap(kraus: list[np.ndarray], rho: np.ndarray) -> np.ndarray:
    """sum_i K_i rho K_i^dag; subnormalized output (sifting discards mass)."""
    out = 0.0
    for k in kraus:
        out = out + k @ rho @ k.conj().T
    return out


def apply_zmap(rho: np.ndarray, r_dim: int = 2) -> np.ndarray:
    """Pinch over the leading key register: zero the off-diagonal R blocks."""
    d = rho.shape[0]
    if d % r_dim:
        raise ValueError("no leading register of that dimension")
    inner = d // r_dim
    out = np.zeros_like(rho)
    for r in range(r_dim):
        sl = slice(r * inner, (r + 1) * inner)
        out[sl, sl] = rho[sl, sl]
    return out


def kept_observable(proto: ProtocolSpec) -> np.ndarray:
    """Per-block operator on A (x) B whose trace against the state is the
    classical probability that a generation round survives sifting."""
    povm = bob_squashed_povm(proto.p_z)
    pi_q = np.diag([1.0, 1.0, 0.0]).astype(complex)
    if proto.kind == "BB84":
        out = np.zeros((12, 12), dtype=complex)
        for x in range(4):
            w = proto.p_z if x < 2 else 1.0 - proto.p_z
            out += np.kron(_proj_a(x), w * pi_q)
        return out
    if proto.kind == "NPAB":
        return np.kron(np.eye(4), pi_q).astype(complex)
    out = np.zeros((12, 12), dtype=complex)
    for x in range(4):
        acc = np.zeros((3, 3), dtype=complex)
        for pair in _SARG_PAIRS:
            if x not in pair:
                continue
            other = pair[1] if pair[0] == x else pair[0]
            # conclusive outcomes: orthogonal to either member
            acc += 0.5 * (povm[_ORTH[x]] + povm[_ORTH[other]])
        out += np.kron(_proj_a(x), acc)
    return out


@dataclass(frozen=True)
class SiftStatistics:
    """Classical post-processing summary of one protocol on given statistics.

    `p_kept` is per generation round (detection included); `error_table` is the
    joint distribution of (Alice's key bit, Bob's post-sifting data), normalized
    over kept rounds.
    """

    p_kept: float
    error_table: JointDistribution

    def bit_error_rate(self) -> float:
        """Probability that Bob's decoded bit differs from Alice's, given kept."""
        t = self.error_table.table
        # bob data columns alternate (context, bit); bit parity = column % 2
        cols = np.arange(t.shape[1])
        return float(t[0, cols % 2 == 1].sum() + t[1, cols % 2 == 0].sum())


def sift_statistics(proto: ProtocolSpec, f: ExpectedFrequencies) -> SiftStatistics:
    """Classical sifting per protocol; probabilities are per generation round.

    BB84 keeps basis-matched detected rounds; NPAB keeps every detected round;
    SARG04 keeps rounds where Bob's outcome is orthogonal to a member of the
    announced pair (averaged over Alice's two equiprobable announcements).
    """
    t = f.table
    if proto.kind == "BB84":
        table = np.zeros((2, 4))  # bob data: (basis, bob bit)
        for x in range(4):
            basis = 0 if x < 2 else 1
            a = proto.alice_bit(x)
            for o in range(2):
                table[a, 2 * basis + o] += t[x, basis, o]
    elif proto.kind == "NPAB":
        table = np.zeros((2, 4))
        for x in range(4):
            a = proto.alice_bit(x)
            for basis in range(2):
                for o in range(2):
                    table[a, 2 * basis + o] += t[x, basis, o]
    else:
        table = np.zeros((2, 8))  # bob data: (pair announcement, concluded bit)
        for x in range(4):
            a = proto.alice_bit(x)
            for pi, pair in enumerate(_SARG_PAIRS):
                if x not in pair:
                    continue
                for y in range(4):
                    basis, o = _Y_STATE[y]
                    if _ORTH[y] not in pair:
                        continue  # inconclusive
                    concluded = pair[0] if _ORTH[y] == pair[1] else pair[1]
                    b_bit = proto.alice_bit(concluded)
                    table[a, 2 * pi + b_bit] += 0.5 * t[x, basis, o]
    p_kept = float(table.sum())
    if p_kept <= 0:
        norm = JointDistribution(np.zeros_like(table), ("alice", "bob"), 0.0)
        return SiftStatistics(0.0, norm)
    return SiftStatistics(p_kept, JointDistribution(table / p_kept, ("alice", "bob")))


def delta_leak(proto: ProtocolSpec, f: ExpectedFrequencies, p_gen: float = 1.0) -> float:
    """Error-correction leakage in bits per signal at the Shannon limit:
    P(sift and gen) * H(Alice key bit | Bob's post-sifting data).

    The error-correction efficiency f_EC multiplies this at the call site.
    """
    stats = sift_statistics(proto, f)
    if stats.p_kept == 0.0:
        return 0.0
    return p_gen * stats.p_kept * cond_entropy(stats.error_table, "bob")
