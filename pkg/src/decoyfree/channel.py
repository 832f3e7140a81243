"""Deterministic expected-statistics generator for the lossy, misaligned,
depolarizing channel, plus the matching squashed joint state.

Loss acts on the photon number (binomial thinning), misalignment is a
polarization rotation, and depolarization is the average of two channel
observations rotated by +phi and -phi with phi = arccos(V)/2. Loss is applied
before rotation; the two commute, the order is fixed for determinism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import JointDistribution, poisson_pmf
from .source import SIGNAL_ANGLES, TAG, SourceConfig, photon_blocks, reduced_alice_blocks, signal_state
from .measure import BOB_OUTCOMES, loss_superop, rotation_superop, squashing_superop

__all__ = [
    "ChannelScenario",
    "ExpectedFrequencies",
    "transmittance",
    "thinned_photon_distribution",
    "conditional_loss",
    "expected_frequencies",
    "simulated_state",
]

BASES = ("Z", "X")
BASIS_ANGLES = (0.0, math.pi / 4)


@dataclass(frozen=True)
class ChannelScenario:
    """Loss (dB), misalignment angle (radians) and visibility of the channel."""

    loss_db: float = 0.0
    theta: float = 0.0
    visibility: float = 1.0

    def __post_init__(self):
        if self.loss_db < 0:
            raise ValueError(f"loss must be nonnegative: {self.loss_db}")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1]: {self.visibility}")

    @property
    def eta(self) -> float:
        return transmittance(self.loss_db)

    @property
    def depol_angle(self) -> float:
        return 0.5 * math.acos(self.visibility)


def transmittance(loss_db: float) -> float:
    """Channel transmittance eta = 10^(-loss/10)."""
    if loss_db < 0:
        raise ValueError(f"loss must be nonnegative: {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def conditional_loss(n_sent: int, eta: float) -> np.ndarray:
    """Binomial(n_sent, eta) over the number of received photons."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1]: {eta}")
    return np.array(
        [math.comb(n_sent, m) * eta**m * (1 - eta) ** (n_sent - m) for m in range(n_sent + 1)]
    )


def thinned_photon_distribution(mu: float, eta: float, cutoff: int) -> np.ndarray:
    """Poisson(eta*mu) truncated at the cutoff, with the tail as the last entry.

    Equals binomial thinning of Poisson(mu) by eta.
    """
    pn = [poisson_pmf(eta * mu, n) for n in range(cutoff + 1)]
    tail = max(0.0, 1.0 - sum(pn))
    return np.array(pn + [tail])


@dataclass(frozen=True)
class ExpectedFrequencies:
    """Expected channel statistics for one (source, channel) setting.

    `table[x, basis, outcome]` is the per-round probability that Alice sent
    signal x, Bob chose the given basis and saw the given squashed outcome
    (0, 1 or no-click); it sums to 1. `by_block` holds the same table
    conditioned on each shield block (photon number sent, or the tag).
    """

    table: np.ndarray
    by_block: dict = field(repr=False)
    p_gen: float = 1.0

    def __post_init__(self):
        if abs(self.table.sum() - 1.0) > 1e-12:
            raise ValueError(f"table sums to {self.table.sum()}")

    @property
    def p_perp(self) -> float:
        return float(self.table[:, :, 2].sum())

    def povm_frequencies(self) -> np.ndarray:
        """4x5 table over Bob's five squashed POVM outcomes (H, V, +, -, perp)."""
        f = np.zeros((4, 5))
        f[:, 0] = self.table[:, 0, 0]
        f[:, 1] = self.table[:, 0, 1]
        f[:, 2] = self.table[:, 1, 0]
        f[:, 3] = self.table[:, 1, 1]
        f[:, 4] = self.table[:, :, 2].sum(axis=1)
        return f

    def basis_error_rates(self) -> tuple[float, float]:
        """QBER among basis-matched detected rounds, per basis."""
        out = []
        for b, signals in enumerate(((0, 1), (2, 3))):
            ok = self.table[signals[0], b, 0] + self.table[signals[1], b, 1]
            err = self.table[signals[0], b, 1] + self.table[signals[1], b, 0]
            out.append(err / (ok + err) if ok + err > 0 else 0.0)
        return tuple(out)

    def joint(self) -> JointDistribution:
        return JointDistribution(self.table, ("signal", "basis", "outcome"))

    def to_csv(self) -> str:
        lines = ["signal,basis,outcome,probability"]
        names = ("bit0", "bit1", "perp")
        from .source import SIGNALS

        for x in range(4):
            for b in range(2):
                for o in range(3):
                    lines.append(f"{SIGNALS[x]},{BASES[b]},{names[o]},{self.table[x, b, o]:.17g}")
        return "\n".join(lines) + "\n"


def _block_click_table(n_phys: int, eta: float, angles: np.ndarray, p_basis: np.ndarray) -> np.ndarray:
    """table[x, basis, outcome] conditioned on a block that physically carries
    n_phys photons; `angles[x]` is the polarization angle of signal x."""
    t = np.zeros((4, 2, 3))
    if n_phys == 0:
        t[:, :, 2] = p_basis[np.newaxis, :] / 4.0
        return t
    pm = conditional_loss(n_phys, eta)
    for x in range(4):
        for b in range(2):
            w = p_basis[b] / 4.0
            delta = angles[x] - BASIS_ANGLES[b]
            c2 = math.cos(delta) ** 2
            s2 = 1.0 - c2
            for m, q in enumerate(pm):
                if q == 0.0:
                    continue
                if m == 0:
                    t[x, b, 2] += w * q
                else:
                    p0 = c2**m
                    p1 = s2**m
                    dd = max(0.0, 1.0 - p0 - p1)
                    t[x, b, 0] += w * q * (p0 + dd / 2)
                    t[x, b, 1] += w * q * (p1 + dd / 2)
    return t


def expected_frequencies(src: SourceConfig, ch: ChannelScenario, proto) -> ExpectedFrequencies:
    """Expected per-round statistics. `proto` supplies Bob's basis probability
    p_z and the generation probability (any object with .p_z and .p_gen).

    Signal probabilities multiply in from the source config; the depolarizing
    average over the +phi/-phi rotations is taken per block. Tagged pulses
    click like a (K+1)-photon pulse.
    """
    probs = np.asarray(src.signal_probs)
    p_basis = np.array([proto.p_z, 1.0 - proto.p_z])
    phi = ch.depol_angle
    by_block: dict = {}
    for label, w in photon_blocks(src):
        n_phys = src.cutoff + 1 if label == TAG else label
        acc = np.zeros((4, 2, 3))
        for sgn in (+1.0, -1.0):
            angles = np.array(SIGNAL_ANGLES) + src.alice_angle + ch.theta + sgn * phi
            acc += 0.5 * _block_click_table(n_phys, ch.eta, angles, p_basis)
        # fold the signal probabilities in (uniform 1/4 factored out in the helper)
        acc *= (probs * 4.0)[:, np.newaxis, np.newaxis]
        by_block[label] = acc
    table = sum(w * by_block[label] for label, w in photon_blocks(src))
    return ExpectedFrequencies(table=table, by_block=by_block, p_gen=proto.p_gen)


def _block_channel_superop(n_phys: int, ch: ChannelScenario, alice_angle: float) -> np.ndarray:
    """Superoperator (9 x (n_phys+1)^2): loss, +-phi averaged rotation, squash."""
    phi = ch.depol_angle
    d_in = (n_phys + 1) ** 2
    s_total = np.zeros((9, d_in), dtype=complex)
    for sgn in (+1.0, -1.0):
        theta = ch.theta + sgn * phi
        for m in range(n_phys + 1):
            lose = loss_superop(n_phys, m, ch.eta)
            rot = rotation_superop(m, theta)
            s_total += 0.5 * (squashing_superop(m) @ rot @ lose)
    return s_total


def simulated_state(src: SourceConfig, ch: ChannelScenario) -> list[tuple[int | str, float, np.ndarray]]:
    """Squashed joint state of each shield block: (label, weight, 12x12 block).

    Block matrices are unit trace over A (x) B (dims 4 x 3) and satisfy
    Tr_B(block) = the reduced-Alice block. The tag branch is decohered in
    Alice's register (flags are orthogonal, so no statistic changes) and
    clicks like a (K+1)-photon pulse.
    """
    probs = np.asarray(src.signal_probs)
    out = []
    for label, w, _ in reduced_alice_blocks(src):
        n_phys = src.cutoff + 1 if label == TAG else label
        sop = _block_channel_superop(n_phys, ch, 0.0)
        block = np.zeros((12, 12), dtype=complex)
        if label == 0:
            vecs = [np.ones(1, dtype=complex) for _ in range(4)]
        else:
            vecs = [signal_state(x, n_phys, src.alice_angle).amplitudes for x in range(4)]
        for x in range(4):
            for y in range(4):
                if label == TAG and x != y:
                    continue
                if probs[x] == 0.0 or probs[y] == 0.0:
                    continue
                sig = np.outer(vecs[x], vecs[y].conj())
                b_part = (sop @ sig.reshape(-1)).reshape(3, 3)
                amp = math.sqrt(probs[x] * probs[y]) if label != TAG else probs[x]
                for i in range(3):
                    for j in range(3):
                        block[x * 3 + i, y * 3 + j] = amp * b_part[i, j]
        out.append((label, w, block))
    return out
