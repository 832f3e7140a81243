"""Tagged, shielded source-replacement state for a phase-randomized WCP source.

Signal indices follow H, V, D, A = 0, 1, 2, 3 with polarization angles
0, pi/2, pi/4, 3pi/4. Photon-number blocks n = 0..K are kept explicitly;
pulses with more than K photons are tagged with orthogonal flag states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RegisterShape, partial_trace, poisson_pmf

__all__ = [
    "SIGNALS",
    "SIGNAL_ANGLES",
    "TAG",
    "SourceConfig",
    "PolarizationFockState",
    "signal_state",
    "photon_blocks",
    "tagged_source_state",
    "reduced_alice_state",
    "reduced_alice_blocks",
]

SIGNALS = ("H", "V", "D", "A")
SIGNAL_ANGLES = (0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4)
TAG = "tag"


@dataclass(frozen=True)
class PolarizationFockState:
    """n-photon two-mode state; amplitudes over (n-k, k) occupation of H/V."""

    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", a)
        if a.shape != (self.n + 1,):
            raise ValueError(f"expected {self.n + 1} amplitudes, got {a.shape}")
        if abs(np.vdot(a, a).real - 1.0) > 1e-12:
            raise ValueError("state is not normalized")


def signal_state(x: int, n: int, theta: float = 0.0) -> PolarizationFockState:
    """n-photon linearly polarized state at angle phi_x + theta.

    Amplitude on (n-k, k) is sqrt(C(n,k)) cos^(n-k)(phi) sin^k(phi), the
    expansion of (cos phi a_H^+ + sin phi a_V^+)^n / sqrt(n!) on vacuum.
    """
    if n < 1:
        raise ValueError("vacuum is handled separately; need n >= 1")
    phi = SIGNAL_ANGLES[x] + theta
    c, s = math.cos(phi), math.sin(phi)
    amps = np.array(
        [math.sqrt(math.comb(n, k)) * c ** (n - k) * s**k for k in range(n + 1)],
        dtype=complex,
    )
    return PolarizationFockState(n, amps)


@dataclass(frozen=True)
class SourceConfig:
    """Source settings: intensity, photon cutoff, signal probabilities, rotation.

    `photon_distribution` overrides Poisson(mu) with explicit P(n) for
    n = 0..K (tail mass is 1 - sum); used for single-photon reference models.
    """

    mu: float
    cutoff: int
    signal_probs: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    alice_angle: float = 0.0
    photon_distribution: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative: {self.mu}")
        if self.cutoff < 0:
            raise ValueError(f"cutoff must be nonnegative: {self.cutoff}")
        p = np.asarray(self.signal_probs, dtype=float)
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"signal probabilities must be nonnegative and sum to 1: {p}")
        if self.photon_distribution is not None:
            q = np.asarray(self.photon_distribution, dtype=float)
            if q.shape != (self.cutoff + 1,):
                raise ValueError("photon_distribution must give P(n) for n = 0..K")
            if q.min() < 0 or q.sum() > 1 + 1e-12:
                raise ValueError("photon_distribution entries must be probabilities")


def for_basis_prob(mu: float, cutoff: int, p_z: float, alice_angle: float = 0.0,
                   photon_distribution: tuple[float, ...] | None = None) -> SourceConfig:
    """SourceConfig with H,V at p_z/2 and D,A at (1-p_z)/2 each."""
    return SourceConfig(
        mu=mu,
        cutoff=cutoff,
        signal_probs=(p_z / 2, p_z / 2, (1 - p_z) / 2, (1 - p_z) / 2),
        alice_angle=alice_angle,
        photon_distribution=photon_distribution,
    )


def photon_blocks(cfg: SourceConfig, drop_below: float = 0.0) -> list[tuple[int | str, float]]:
    """(label, weight) per shield block: photon numbers 0..K then the tag.

    Blocks with weight <= drop_below are dropped (exactly-zero weights always).
    """
    if cfg.photon_distribution is not None:
        pn = list(cfg.photon_distribution)
    else:
        pn = [poisson_pmf(cfg.mu, n) for n in range(cfg.cutoff + 1)]
    tail = max(0.0, 1.0 - sum(pn))
    blocks: list[tuple[int | str, float]] = []
    for n, p in enumerate(pn):
        if p > drop_below:
            blocks.append((n, p))
    if tail > max(drop_below, 1e-15):
        blocks.append((TAG, tail))
    return blocks


def _aprime_block_dims(cfg: SourceConfig, blocks) -> list[int]:
    return [4 if label == TAG else label + 1 for label, _ in blocks]


def tagged_source_state(cfg: SourceConfig) -> tuple[np.ndarray, RegisterShape]:
    """Pure state |Psi> on A_S (x) A (x) A' with unit norm.

    A' is the direct sum of per-block signal spaces (dim n+1 for photon
    number n, dim 4 for the tag flags); the state only populates the A'
    block matching the shield index. The tag branch carries amplitude
    sqrt(p_{n>K}) on orthogonal flags |f_x>.
    """
    blocks = photon_blocks(cfg)
    dims_ap = _aprime_block_dims(cfg, blocks)
    d_as = len(blocks)
    d_ap = sum(dims_ap)
    shape = RegisterShape(("A_S", "A", "Ap"), (d_as, 4, d_ap))
    psi = np.zeros(d_as * 4 * d_ap, dtype=complex)
    offsets = np.concatenate([[0], np.cumsum(dims_ap)])
    probs = np.asarray(cfg.signal_probs, dtype=float)
    for b, (label, w) in enumerate(blocks):
        off = offsets[b]
        for x in range(4):
            if probs[x] == 0.0:
                continue
            amp = math.sqrt(w) * math.sqrt(probs[x])
            if label == TAG:
                vec = np.zeros(4, dtype=complex)
                vec[x] = 1.0
            elif label == 0:
                vec = np.ones(1, dtype=complex)
            else:
                vec = signal_state(x, label, cfg.alice_angle).amplitudes
            for j, a in enumerate(vec):
                if a != 0:
                    idx = (b * 4 + x) * d_ap + off + j
                    psi[idx] += amp * a
    return psi, shape


def reduced_alice_blocks(cfg: SourceConfig) -> list[tuple[int | str, float, np.ndarray]]:
    """Per-block reduced Alice state: (label, weight, 4x4 unit-trace block).

    Block n carries Gram-matrix coherences <s_{x',n}|s_{x,n}> = cos^n(phi_x -
    phi_x'); the tag block is diagonal because the flags are orthogonal.
    Independent of every channel parameter and of alice_angle.
    """
    probs = np.asarray(cfg.signal_probs, dtype=float)
    root = np.sqrt(probs)
    out = []
    for label, w in photon_blocks(cfg):
        if label == TAG:
            block = np.diag(probs).astype(complex)
        else:
            n = label
            gram = np.array(
                [
                    [math.cos(SIGNAL_ANGLES[x] - SIGNAL_ANGLES[y]) ** n for y in range(4)]
                    for x in range(4)
                ]
            )
            block = (np.outer(root, root) * gram).astype(complex)
        out.append((label, w, block))
    return out


def reduced_alice_state(cfg: SourceConfig) -> np.ndarray:
    """Tr_A' of the tagged source state, as a block-diagonal matrix on A_S (x) A."""
    blocks = reduced_alice_blocks(cfg)
    d = 4 * len(blocks)
    rho = np.zeros((d, d), dtype=complex)
    for b, (_, w, blk) in enumerate(blocks):
        rho[4 * b : 4 * b + 4, 4 * b : 4 * b + 4] = w * blk
    return rho


def reduced_alice_state_by_trace(cfg: SourceConfig) -> np.ndarray:
    """Same state computed by tracing A' out of |Psi><Psi| (cross-check route)."""
    psi, shape = tagged_source_state(cfg)
    return partial_trace(np.outer(psi, psi.conj()), shape, keep={"A_S", "A"})
