"""Assembly of the optimization model: shield-block compression, observable
operators, constraint sets, and the compiled (blockwise) G map.

Every feasible state is block-diagonal in the shield register and, within a
block, supported on the A-side support of the reduced Alice state (both are
exact consequences of the marginal equality and positivity), so the model
compresses each block with the corresponding isometry before anything touches
the solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ExpectedFrequencies
from .measure import bob_squashed_povm
from .protocol import ProtocolSpec, branch_kraus, kept_observable
from .source import SourceConfig, reduced_alice_blocks

__all__ = [
    "CompiledGMap",
    "Model",
    "ConstraintSet",
    "build_model",
    "build_asymptotic_constraints",
]

_SUPPORT_TOL = 1e-12
_RANGE_TOL = 1e-12


@dataclass(frozen=True)
class CompiledGMap:
    """Blockwise G map after input and output support compression.

    `ops[b][c]` maps block b into announcement branch c; `sections[b][c]`
    gives the output dimensions of the two key-register slices, so the
    pinching map is "zero the off-diagonal section".
    """

    ops: tuple
    sections: tuple
    out_dim: int

    def apply(self, blocks: list[np.ndarray]) -> list[list[np.ndarray]]:
        return [[k @ x @ k.conj().T for k in ops_b] for ops_b, x in zip(self.ops, blocks)]

    def apply_diff(self, blocks_a, blocks_b) -> list[list[np.ndarray]]:
        return [
            [k @ (xa - xb) @ k.conj().T for k in ops_b]
            for ops_b, xa, xb in zip(self.ops, blocks_a, blocks_b)
        ]

    def adjoint(self, ys: list[list[np.ndarray]]) -> list[np.ndarray]:
        out = []
        for ops_b, ys_b in zip(self.ops, ys):
            acc = 0.0
            for k, y in zip(ops_b, ys_b):
                acc = acc + k.conj().T @ y @ k
            out.append(acc)
        return out

    def pinch(self, ys: list[list[np.ndarray]]) -> list[list[np.ndarray]]:
        out = []
        for bi, ys_b in enumerate(ys):
            row = []
            for ci, y in enumerate(ys_b):
                n0, _ = self.sections[bi][ci]
                z = np.zeros_like(y)
                z[:n0, :n0] = y[:n0, :n0]
                z[n0:, n0:] = y[n0:, n0:]
                row.append(z)
            out.append(row)
        return out


@dataclass(frozen=True)
class Model:
    """Compressed optimization model for one (source, protocol) pair."""

    proto: ProtocolSpec
    src: SourceConfig
    labels: tuple
    weights: tuple
    isometries: tuple  # V_b: 4 -> r_b on the A side
    marginals: tuple  # subnormalized r_b x r_b targets (trace = weight)
    dims: tuple  # block dims 3*r_b
    gmap: CompiledGMap
    observables: dict = field(repr=False)

    @property
    def block_traces(self) -> list[float]:
        # exact traces implied by the marginal constraint (equal to the block
        # weights up to the dropped support mass)
        return [float(np.trace(m).real) for m in self.marginals]

    def compress_state(self, blocks12: list[np.ndarray]) -> list[np.ndarray]:
        """Project full 12-dim blocks into the compressed representation."""
        out = []
        for v, blk in zip(self.isometries, blocks12):
            w = np.kron(v, np.eye(3))
            out.append(w.conj().T @ blk @ w)
        return out


def _block_support(block4: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(block4)
    keep = w > _SUPPORT_TOL * max(w.max(), 1e-30)
    return v[:, keep]


def _compress_sections(m: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """QR-compress the output of a branch operator per key-register section."""
    rows = m.shape[0]
    half = rows // 2
    qs, sizes = [], []
    for sec in (m[:half], m[half:]):
        u, s, _ = np.linalg.svd(sec, full_matrices=False)
        rank = int((s > _RANGE_TOL * max(s[0] if len(s) else 0.0, 1e-30)).sum())
        rank = max(rank, 1)
        qs.append(u[:, :rank])
        sizes.append(rank)
    top = qs[0].conj().T @ m[:half]
    bot = qs[1].conj().T @ m[half:]
    return np.vstack([top, bot]), (sizes[0], sizes[1])


def build_model(src: SourceConfig, proto: ProtocolSpec) -> Model:
    if src.cutoff != proto.cutoff:
        raise ValueError("source and protocol photon cutoffs differ")
    alice = reduced_alice_blocks(src)
    labels = tuple(label for label, _, _ in alice)
    weights = tuple(w for _, w, _ in alice)
    isos = tuple(_block_support(blk) for _, _, blk in alice)
    margs = tuple(
        w * (v.conj().T @ blk @ v) for (_, w, blk), v in zip(alice, isos)
    )
    dims = tuple(3 * v.shape[1] for v in isos)

    branch_ops = branch_kraus(proto)
    ops, sections = [], []
    for v in isos:
        vb = np.kron(v, np.eye(3))
        row_ops, row_secs = [], []
        for _, m in branch_ops:
            km, sec = _compress_sections(m @ vb)
            row_ops.append(km)
            row_secs.append(sec)
        ops.append(tuple(row_ops))
        sections.append(tuple(row_secs))
    out_dim = sum(k.shape[0] for row in ops for k in row)
    gmap = CompiledGMap(tuple(ops), tuple(sections), out_dim)

    povm = bob_squashed_povm(proto.p_z)
    observables: dict = {}
    for x in range(4):
        px = np.zeros((4, 4))
        px[x, x] = 1.0
        for yi, g in enumerate(povm):
            op12 = np.kron(px, g)
            observables[("povm", x, yi)] = tuple(
                np.kron(v, np.eye(3)).conj().T @ op12 @ np.kron(v, np.eye(3)) for v in isos
            )
    perp12 = np.kron(np.eye(4), np.diag([0.0, 0.0, 1.0])).astype(complex)
    observables[("perp",)] = tuple(
        np.kron(v, np.eye(3)).conj().T @ perp12 @ np.kron(v, np.eye(3)) for v in isos
    )
    kept12 = kept_observable(proto)
    observables[("sift_gen",)] = tuple(
        np.kron(v, np.eye(3)).conj().T @ kept12 @ np.kron(v, np.eye(3)) for v in isos
    )
    return Model(
        proto=proto,
        src=src,
        labels=labels,
        weights=weights,
        isometries=isos,
        marginals=margs,
        dims=dims,
        gmap=gmap,
        observables=observables,
    )


def _herm_basis(d: int) -> list[np.ndarray]:
    out = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        out.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = e[j, i] = 1.0 / np.sqrt(2)
            out.append(e)
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = -1.0j / np.sqrt(2)
            e[j, i] = 1.0j / np.sqrt(2)
            out.append(e)
    return out


@dataclass(frozen=True)
class ConstraintSet:
    """Affine description of the feasible set over the compressed blocks.

    `eq_rows` are (per-block ops, value); `ineq_rows` are (ops, lo, hi) with
    lo None meaning one-sided. `check_rows` keeps pre-reduction rows for
    residual reporting. `support` holds the per-block isometries of any exact
    zero-statistics support restriction applied on top of the model blocks
    (None entries mean no restriction); the G map must be conjugated with the
    same isometries, see `restricted_gmap`.
    """

    dims: tuple
    block_traces: tuple
    eq_rows: tuple
    ineq_rows: tuple
    check_rows: tuple = ()
    support: tuple = ()

    def residual(self, blocks: list[np.ndarray]) -> float:
        rows = self.check_rows if self.check_rows else self.eq_rows
        res = 0.0
        for ops, v in rows:
            got = _row_value(ops, blocks)
            res = max(res, abs(got - v))
        for ops, lo, hi in self.ineq_rows:
            got = _row_value(ops, blocks)
            if lo is not None:
                res = max(res, lo - got)
            res = max(res, got - hi, 0.0)
        for x in blocks:
            wmin = np.linalg.eigvalsh((x + x.conj().T) / 2).min()
            res = max(res, -wmin)
        return float(res)


def _row_value(ops, blocks) -> float:
    return float(
        sum(np.trace(o @ x).real for o, x in zip(ops, blocks) if o is not None)
    )


def _marginal_rows(model: Model) -> list[tuple[list, float]]:
    rows = []
    nb = len(model.dims)
    for bi, (v, target) in enumerate(zip(model.isometries, model.marginals)):
        r = v.shape[1]
        for h in _herm_basis(r):
            ops = [None] * nb
            ops[bi] = np.kron(h, np.eye(3)).astype(complex)
            val = float(np.trace(h @ target).real)
            rows.append((ops, val))
    return rows


def _reduce_equalities(rows: list[tuple[list, float]], dims) -> list[tuple[list, float]]:
    """Drop exact linear dependencies among equality rows (SVD row reduction)."""
    if not rows:
        return rows
    nb = len(dims)
    vecs = []
    for ops, v in rows:
        parts = []
        for bi in range(nb):
            o = ops[bi]
            if o is None:
                o = np.zeros((dims[bi], dims[bi]), dtype=complex)
            parts.append(np.concatenate([o.real.ravel(), o.imag.ravel()]))
        vecs.append(np.concatenate(parts))
    a = np.array(vecs)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    rank = int((s > 1e-10 * s[0]).sum())
    keep_u = u[:, :rank]
    # transformed rows: rows' = U_r^T rows (orthogonal combinations)
    b = np.array([v for _, v in rows])
    new_rows = []
    coeff = keep_u.T
    for k in range(rank):
        ops_new = []
        for bi in range(nb):
            acc = np.zeros((dims[bi], dims[bi]), dtype=complex)
            for i, (ops, _) in enumerate(rows):
                if coeff[k, i] != 0.0 and ops[bi] is not None:
                    acc = acc + coeff[k, i] * ops[bi]
            ops_new.append(acc)
        new_rows.append((ops_new, float(coeff[k] @ b)))
    return new_rows


def _zero_support_restriction(model: Model, zero_ops: list) -> tuple:
    """Per-block isometries spanning the joint null space of the zero-target
    observables: Tr(G rho) = 0 with G PSD and rho PSD forces rho off supp(G),
    so restricting is exact and removes the empty-interior faces those
    constraints would otherwise create."""
    if not zero_ops:
        return tuple(None for _ in model.dims)
    supports = []
    for bi, d in enumerate(model.dims):
        acc = np.zeros((d, d), dtype=complex)
        for ops in zero_ops:
            if ops[bi] is not None:
                acc = acc + ops[bi]
        w, v = np.linalg.eigh((acc + acc.conj().T) / 2)
        keep = w < 1e-12 * max(w.max(), 1e-30)
        if not keep.any():
            raise ValueError(f"zero-statistics constraints annihilate block {bi}")
        iso = v[:, keep]
        supports.append(None if iso.shape[1] == d else iso)
    return tuple(supports)


def _conjugate_rows(rows, support):
    out = []
    for entry in rows:
        ops = entry[0]
        new_ops = []
        for op, w in zip(ops, support):
            if op is None:
                new_ops.append(None)
            elif w is None:
                new_ops.append(op)
            else:
                new_ops.append(w.conj().T @ op @ w)
        out.append((new_ops, *entry[1:]))
    return out


def restricted_gmap(model: Model, cs: ConstraintSet) -> CompiledGMap:
    """G map conjugated with the constraint set's support restriction."""
    if not cs.support or all(w is None for w in cs.support):
        return model.gmap
    ops = []
    for row, w in zip(model.gmap.ops, cs.support):
        if w is None:
            ops.append(row)
        else:
            ops.append(tuple(k @ w for k in row))
    return CompiledGMap(tuple(ops), model.gmap.sections, model.gmap.out_dim)


def build_asymptotic_constraints(
    model: Model,
    freqs: ExpectedFrequencies,
    include_sift_gen: bool = True,
) -> ConstraintSet:
    """Equality constraints from the expected statistics plus the fixed Alice
    marginal. Observables whose target is exactly 0 are imposed exactly by
    restricting each block onto their joint null space (support reduction),
    which keeps the remaining problem strictly feasible.
    """
    from .protocol import sift_statistics

    f5 = freqs.povm_frequencies()
    eq = _marginal_rows(model)
    zero_ops = []
    for x in range(4):
        for yi in range(5):
            ops = list(model.observables[("povm", x, yi)])
            val = float(f5[x, yi])
            if val <= 1e-14:
                zero_ops.append(ops)
            else:
                eq.append((ops, val))
    ops = list(model.observables[("perp",)])
    eq.append((ops, float(freqs.p_perp)))
    if include_sift_gen:
        stats = sift_statistics(model.proto, freqs)
        p_gen = model.proto.p_gen
        val = p_gen * stats.p_kept
        sg_ops = [p_gen * op for op in model.observables[("sift_gen",)]]
        eq.append((sg_ops, val))
    support = _zero_support_restriction(model, zero_ops)
    eq = _conjugate_rows(eq, support)
    dims = tuple(
        (w.shape[1] if w is not None else d) for w, d in zip(support, model.dims)
    )
    check = list(eq)
    eq = _reduce_equalities(eq, dims)
    return ConstraintSet(
        dims=dims,
        block_traces=tuple(model.block_traces),
        eq_rows=tuple((list(o), v) for o, v in eq),
        ineq_rows=(),
        check_rows=tuple(check),
        support=support,
    )
