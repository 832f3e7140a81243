"""Dense primal-dual interior-point solver for small block-structured SDPs.

Solves   min sum_b <C_b, X_b>
         s.t. <A_ib, X>           = b_i             (equality rows)
              lo_j <= <G_jb, X> <= hi_j             (interval rows)
              X_b Hermitian PSD
with a Mehrotra predictor-corrector using the HKM scaling direction and a
dense Schur complement. Dimensions here are tiny (blocks <= ~32, a few
hundred rows), so everything is dense LAPACK; constraint contractions run
through flat real matrices rather than per-row products.

Interval rows are rewritten with one nonnegative slack per side (one-sided
rows get a single slack whose range is [0, hi]; callers only use that form
for observables that are nonnegative on the feasible set). Every reported
`certified_lower` is a weak-duality bound valid for *any* multipliers: the
dual objective corrected by the most negative eigenvalue of C - A'(y) per
block (block traces are fixed by the constraints) and by slack-range terms,
so downstream lower bounds survive inexact solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SdpResult", "solve_block_sdp"]


@dataclass
class SdpResult:
    x_blocks: list
    objective: float
    certified_lower: float
    y: np.ndarray
    iterations: int
    status: str  # converged | stalled | max_iter
    primal_residual: float
    dual_residual: float
    rel_gap: float
    diagnostics: list = field(default_factory=list, repr=False)


def _maxstep_psd(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest alpha with x + alpha*dx PSD (x PD)."""
    try:
        l = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(x)
        w = np.clip(w, 1e-14 * max(w.max(), 1e-30), None)
        l = v * np.sqrt(w)
    li = np.linalg.inv(l)
    m = li @ dx @ li.conj().T
    wmin = np.linalg.eigvalsh((m + m.conj().T) / 2).min()
    if wmin >= -1e-14:
        return np.inf
    return -1.0 / wmin


def _maxstep_lp(t: np.ndarray, dt: np.ndarray) -> float:
    neg = dt < 0
    if not neg.any():
        return np.inf
    return float((-t[neg] / dt[neg]).min())


def _real_vec(m: np.ndarray) -> np.ndarray:
    return np.concatenate([m.real.ravel(), m.imag.ravel()])


class _Rows:
    """Flat real representation of the constraint rows over all blocks:
    <A_i, X> = A_flat[i] . realvec(X) for Hermitian A_i, X."""

    def __init__(self, rows, dims):
        self.dims = dims
        nb = len(dims)
        self.m = len(rows)
        self.offsets = np.cumsum([0] + [2 * d * d for d in dims])
        flat_rows = np.zeros((self.m, self.offsets[-1]))
        self.stacks = []
        for bi in range(nb):
            st = np.zeros((self.m, dims[bi], dims[bi]), dtype=complex)
            for i, ops in enumerate(rows):
                if ops[bi] is not None:
                    st[i] = ops[bi]
            self.stacks.append(st)
            flat_rows[:, self.offsets[bi] : self.offsets[bi + 1]] = np.concatenate(
                [st.real.reshape(self.m, -1), st.imag.reshape(self.m, -1)], axis=1
            )
        self.flat = flat_rows
        # complex vec form per block for Schur assembly
        self.cvec = [self.stacks[bi].reshape(self.m, -1) for bi in range(nb)]

    def vec_state(self, blocks) -> np.ndarray:
        return np.concatenate([_real_vec(x) for x in blocks])

    def apply(self, blocks) -> np.ndarray:
        return self.flat @ self.vec_state(blocks)

    def adjoint(self, y) -> list:
        v = self.flat.T @ y
        out = []
        for bi, d in enumerate(self.dims):
            seg = v[self.offsets[bi] : self.offsets[bi + 1]]
            out.append((seg[: d * d] + 1j * seg[d * d :]).reshape(d, d))
        return out


def solve_block_sdp(
    c_blocks: list[np.ndarray],
    eq_rows: list[tuple[list, float]],
    ineq_rows: list[tuple[list, float, float]],
    block_traces: list[float],
    tol: float = 1e-8,
    max_iter: int = 60,
) -> SdpResult:
    """Row operators are lists of per-block Hermitian matrices (None = zero).

    `block_traces` are the trace values every feasible point satisfies
    (implied by the constraints); they feed the certified lower bound.
    """
    nb = len(c_blocks)
    dims = [c.shape[0] for c in c_blocks]
    rows: list[list] = [ops for ops, _ in eq_rows]
    rhs: list[float] = [v for _, v in eq_rows]
    slack_col: list[int] = [-1] * len(eq_rows)
    slack_sign: list[float] = [0.0] * len(eq_rows)
    widths: list[float] = []
    for ops, lo, hi in ineq_rows:
        if lo is None:
            rows.append(ops)
            rhs.append(hi)
            slack_col.append(len(widths))
            slack_sign.append(+1.0)
            widths.append(hi)
            continue
        if hi < lo:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        if hi - lo < 1e-15:
            rows.append(ops)
            rhs.append((lo + hi) / 2)
            slack_col.append(-1)
            slack_sign.append(0.0)
            continue
        for target, sign in ((lo, -1.0), (hi, +1.0)):
            rows.append(ops)
            rhs.append(target)
            slack_col.append(len(widths))
            slack_sign.append(sign)
            widths.append(hi - lo)
    m = len(rows)
    nt = len(widths)
    b = np.asarray(rhs, dtype=float)
    widths_arr = np.asarray(widths, dtype=float)
    ar = _Rows(rows, dims)

    e_col = np.asarray(slack_col, dtype=int)
    e_sgn = np.asarray(slack_sign, dtype=float)
    has_slack = e_col >= 0
    slack_rows = np.where(has_slack)[0]

    def et_apply(y) -> np.ndarray:
        out = np.zeros(nt)
        if nt:
            np.add.at(out, e_col[slack_rows], e_sgn[slack_rows] * y[slack_rows])
        return out

    def e_apply(v) -> np.ndarray:
        out = np.zeros(m)
        if nt:
            out[slack_rows] = e_sgn[slack_rows] * v[e_col[slack_rows]]
        return out

    c_scale = max([np.abs(c).max() for c in c_blocks] + [1.0])
    xb = [np.eye(d, dtype=complex) * max(tr / d, 1e-6) for d, tr in zip(dims, block_traces)]
    t = np.maximum(widths_arr / 2.0, 1e-6) if nt else np.zeros(0)
    sb = [np.eye(d, dtype=complex) * c_scale for d in dims]
    s_t = np.full(nt, c_scale)
    y = np.zeros(m)

    nu = sum(dims) + nt
    b_norm = 1.0 + np.linalg.norm(b)
    c_norm = 1.0 + np.sqrt(sum(np.linalg.norm(c) ** 2 for c in c_blocks))

    best = None
    diagnostics = []
    status = "max_iter"
    stall = 0
    last_metric = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        xb = [(x + x.conj().T) / 2 for x in xb]
        sb = [(s + s.conj().T) / 2 for s in sb]
        rp = b - ar.apply(xb) - e_apply(t)
        adj = ar.adjoint(y)
        rd_b = [c_blocks[bi] - adj[bi] - sb[bi] for bi in range(nb)]
        rd_t = -et_apply(y) - s_t
        gap = sum(np.trace(xb[bi] @ sb[bi]).real for bi in range(nb)) + float(t @ s_t)
        mu = gap / nu
        pobj = sum(np.trace(c_blocks[bi] @ xb[bi]).real for bi in range(nb))
        dobj = float(b @ y)
        rel_gap = max(gap, abs(pobj - dobj)) / (1.0 + abs(pobj) + abs(dobj))
        pres = np.linalg.norm(rp) / b_norm
        dres = (
            np.sqrt(sum(np.linalg.norm(r) ** 2 for r in rd_b) + np.linalg.norm(rd_t) ** 2)
            / c_norm
        )
        metric = max(rel_gap, pres, dres)
        diagnostics.append((it, pobj, rel_gap, pres, dres))
        if best is None or metric < best[0]:
            best = (metric, [x.copy() for x in xb], y.copy(), pobj, pres, dres, rel_gap, it)
        if metric <= tol:
            status = "converged"
            break
        if metric > 0.7 * last_metric:
            stall += 1
            if stall >= 12:
                status = "stalled"
                break
        else:
            stall = 0
        last_metric = metric

        sinv = []
        for bi in range(nb):
            try:
                l = np.linalg.cholesky(sb[bi])
            except np.linalg.LinAlgError:
                w, v = np.linalg.eigh(sb[bi])
                w = np.clip(w, 1e-13 * max(w.max(), 1e-30), None)
                sb[bi] = (v * w) @ v.conj().T
                l = np.linalg.cholesky(sb[bi])
            li = np.linalg.inv(l)
            sinv.append(li.conj().T @ li)

        # Schur complement M_ik = sum_b Re Tr(A_i X A_k S^-1) + LP terms
        big = np.zeros((m, m))
        for bi in range(nb):
            ta = np.matmul(np.matmul(xb[bi][None, :, :], ar.stacks[bi]), sinv[bi][None, :, :])
            tvec = np.transpose(ta, (0, 2, 1)).reshape(m, -1)
            big += (ar.cvec[bi] @ tvec.T).real
        big = (big + big.T) / 2
        if nt:
            ratio = t / s_t
            cols = e_col[slack_rows]
            sgn = e_sgn[slack_rows]
            for ii, (r1, j1, s1) in enumerate(zip(slack_rows, cols, sgn)):
                same = cols == j1
                big[r1, slack_rows[same]] += s1 * sgn[same] * ratio[j1]
        jitter = 1e-13 * max(np.trace(big) / m, 1.0)
        chol = None
        for _ in range(12):
            try:
                chol = np.linalg.cholesky(big + jitter * np.eye(m))
                break
            except np.linalg.LinAlgError:
                jitter *= 100
        if chol is None:
            status = "stalled"
            break

        def solve_newton(sigma_mu, corr_b, corr_t):
            rhs_vec = rp.copy()
            terms = []
            for bi in range(nb):
                term = sigma_mu * sinv[bi] - xb[bi] - _hsym(xb[bi] @ rd_b[bi] @ sinv[bi])
                if corr_b is not None:
                    term = term - corr_b[bi]
                terms.append(term)
            rhs_vec -= ar.apply(terms)
            if nt:
                dt_part = (sigma_mu - t * s_t - (corr_t if corr_t is not None else 0.0)) / s_t
                dt_part = dt_part - (t / s_t) * rd_t
                rhs_vec -= e_apply(dt_part)
            dy = _cho_solve(chol, rhs_vec)
            adj_dy = ar.adjoint(dy)
            ds_b = [rd_b[bi] - adj_dy[bi] for bi in range(nb)]
            ds_t = rd_t - et_apply(dy)
            dx_b = []
            for bi in range(nb):
                d = sigma_mu * sinv[bi] - xb[bi] - _hsym(xb[bi] @ ds_b[bi] @ sinv[bi])
                if corr_b is not None:
                    d = d - corr_b[bi]
                dx_b.append(_hsym(d))
            if nt:
                dt = (sigma_mu - t * s_t - (corr_t if corr_t is not None else 0.0)) / s_t - (
                    t / s_t
                ) * ds_t
            else:
                dt = np.zeros(0)
            return dx_b, dt, dy, ds_b, ds_t

        dx_b, dt, dy, ds_b, ds_t = solve_newton(0.0, None, None)
        ap = min([_maxstep_psd(xb[bi], dx_b[bi]) for bi in range(nb)] + [_maxstep_lp(t, dt), 100.0])
        ad = min([_maxstep_psd(sb[bi], ds_b[bi]) for bi in range(nb)] + [_maxstep_lp(s_t, ds_t), 100.0])
        ap = min(1.0, 0.98 * ap)
        ad = min(1.0, 0.98 * ad)
        gap_aff = sum(
            np.trace((xb[bi] + ap * dx_b[bi]) @ (sb[bi] + ad * ds_b[bi])).real for bi in range(nb)
        ) + float((t + ap * dt) @ (s_t + ad * ds_t))
        mu_aff = max(gap_aff, 0.0) / nu
        sigma = min(1.0, max((mu_aff / mu) ** 3, 1e-8)) if mu > 0 else 0.1

        corr_b = [_hsym(dx_b[bi] @ ds_b[bi] @ sinv[bi]) for bi in range(nb)]
        corr_t = dt * ds_t if nt else None
        dx_b, dt, dy, ds_b, ds_t = solve_newton(sigma * mu, corr_b, corr_t)
        ap = min([_maxstep_psd(xb[bi], dx_b[bi]) for bi in range(nb)] + [_maxstep_lp(t, dt), 100.0])
        ad = min([_maxstep_psd(sb[bi], ds_b[bi]) for bi in range(nb)] + [_maxstep_lp(s_t, ds_t), 100.0])
        ap = min(1.0, 0.98 * ap)
        ad = min(1.0, 0.98 * ad)

        xb = [xb[bi] + ap * dx_b[bi] for bi in range(nb)]
        t = t + ap * dt
        y = y + ad * dy
        sb = [sb[bi] + ad * ds_b[bi] for bi in range(nb)]
        s_t = s_t + ad * ds_t

    # return the best iterate seen, with a weak-duality bound at its multipliers:
    # <C,X> = y.b + sum_b <C_b - A_b'(y), X_b> - (E'y).t  >=  y.b
    #         + sum_b lambda_min * trace_b + sum_j min(0, -(E'y)_j) * width_j
    metric, xb_best, y_best, pobj, pres, dres, rel_gap, best_it = best
    xb = xb_best
    y = y_best
    adj = ar.adjoint(y)
    lb = float(b @ y)
    for bi in range(nb):
        rd = c_blocks[bi] - adj[bi]
        wmin = np.linalg.eigvalsh((rd + rd.conj().T) / 2).min()
        lb += wmin * block_traces[bi]
    if nt:
        lb += float(np.minimum(0.0, -et_apply(y)) @ widths_arr)
    return SdpResult(
        x_blocks=xb,
        objective=pobj,
        certified_lower=lb,
        y=y,
        iterations=it,
        status="converged" if metric <= tol else status,
        primal_residual=pres,
        dual_residual=dres,
        rel_gap=rel_gap,
        diagnostics=diagnostics,
    )


def _hsym(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def _cho_solve(chol: np.ndarray, v: np.ndarray) -> np.ndarray:
    z = np.linalg.solve(chol, v)
    return np.linalg.solve(chol.conj().T, z)
