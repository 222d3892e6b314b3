"""Per-pixel quadratic programs on the unit simplex.

The data-fit step of the unmixing loop decouples into one small strictly
convex QP per pixel,

    min_a  a' Q a / 2 + f' a    s.t.  a >= 0,  sum(a) = 1,

solved with a primal active-set method: on the current free face the
equality-constrained optimum comes from a bordered KKT system; a blocking
ratio test pins variables that would go negative, and a multiplier check
releases the most negative active constraint (lowest index on ties).

Pixels are solved in batches grouped by free-set pattern, one factorization
per pattern.  The substitution is vectorized elementwise across columns and
the pivot order depends only on the matrix, so every pixel's arithmetic is
bit-identical whether it is solved alone or inside any batch.  (LAPACK's
multi-RHS solve does not have this property, which is why the small LU
below exists at all.)  Subproblem vectors are built with einsum for the
same reason: BLAS matmul results depend on the batch width at the last ulp.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cube import PixelMatrix
from .errors import ShapeError
from .model import ANC_CLAMP, AbundanceMatrix, EndmemberMatrix

__all__ = ["QpProblem", "QpSolution", "build_subproblem", "solve_simplex_qp", "fcls"]

MODES = ("pro-h", "pro-a")
SYM_TOL = 1e-10
EIG_TOL = -1e-10


@dataclass(frozen=True, eq=False)
class QpProblem:
    """One pixel's QP data: symmetric PSD matrix q and linear term f.

    Construction symmetrizes q after checking the asymmetry is within
    1e-10 and rejects matrices with an eigenvalue below -1e-10.
    """

    q: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64, order="C")
        f = np.array(self.f, dtype=np.float64, order="C")
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ShapeError(f"q must be square, got shape {q.shape}")
        p = q.shape[0]
        if p < 1:
            raise ShapeError("empty problem")
        if f.shape != (p,):
            raise ShapeError(f"f must have shape ({p},), got {f.shape}")
        if not (np.isfinite(q).all() and np.isfinite(f).all()):
            raise ValueError("q and f must be finite")
        if np.abs(q - q.T).max() > SYM_TOL:
            raise ValueError(f"q must be symmetric within {SYM_TOL:g}")
        q = (q + q.T) / 2.0
        if np.linalg.eigvalsh(q)[0] < EIG_TOL:
            raise ValueError(
                "q must be positive semidefinite "
                f"(eigenvalue below {EIG_TOL:g} found)"
            )
        q.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "f", f)

    @property
    def size(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Solver output for one pixel.

    ``kkt_residual`` is recomputed from scratch at the returned point:
    the max of the stationarity defect on the positive support and the
    multiplier violation on the zero set.  ``shifted`` notes that a
    Tikhonov-regularized system had to be used.  ``objective_trace``
    holds the objective after each active-set sweep, starting value
    included; it is non-increasing.
    """

    a: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool
    shifted: bool = False
    objective_trace: np.ndarray | None = None

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)


def build_subproblem(
    endmembers: EndmemberMatrix,
    mode: str,
    y: np.ndarray,
    x_tilde: np.ndarray | None,
    rho: float,
) -> QpProblem:
    """Assemble one pixel's QP from the data-fit and coupling terms.

    Args:
        endmembers: spectra M, shape (bands, endmembers).
        mode: "pro-h" couples through the reconstructed spectrum (the
            splitting variable lives in image space), "pro-a" couples the
            abundance vector itself.
        y: observed pixel spectrum, shape (bands,).
        x_tilde: coupling target; shape (bands,) for pro-h, (endmembers,)
            for pro-a.  May be None when rho == 0.
        rho: coupling weight, >= 0.  rho == 0 reduces both modes to the
            plain least-squares problem Q = M'M, f = -M'y.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not np.isfinite(rho) or rho < 0.0:
        raise ValueError(f"rho must be finite and >= 0, got {rho}")
    m = endmembers.values
    bands, count = m.shape
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (bands,):
        raise ShapeError(f"y must have shape ({bands},), got {y.shape}")
    mtm = m.T @ m
    mty = m.T @ y
    if rho == 0.0:
        return QpProblem(mtm, -mty)
    if x_tilde is None:
        raise ValueError("x_tilde is required when rho > 0")
    xt = np.asarray(x_tilde, dtype=np.float64)
    if mode == "pro-h":
        if xt.shape != (bands,):
            raise ShapeError(f"x_tilde must have shape ({bands},), got {xt.shape}")
        q = (1.0 + rho) * mtm
        f = -(mty + rho * (m.T @ xt))
    else:
        if xt.shape != (count,):
            raise ShapeError(f"x_tilde must have shape ({count},), got {xt.shape}")
        q = mtm + rho * np.eye(count)
        f = -(mty + rho * xt)
    return QpProblem(q, f)


def _lu_solve_cols(kmat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve kmat @ x = rhs for many columns with partial-pivot LU.

    Pivot choice depends only on kmat, and substitution updates are
    elementwise across columns, so column j's result is bit-identical to
    solving it alone.  Raises LinAlgError on a (near-)zero pivot.
    """
    u = np.array(kmat, dtype=np.float64)
    x = np.array(rhs, dtype=np.float64)
    n = u.shape[0]
    cutoff = 1e-13 * max(float(np.abs(u).max()), 1.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(u[k:, k])))
        if abs(u[p, k]) <= cutoff:
            raise np.linalg.LinAlgError("singular KKT pivot")
        if p != k:
            u[[k, p]] = u[[p, k]]
            x[[k, p]] = x[[p, k]]
        mult = u[k + 1 :, k] / u[k, k]
        u[k + 1 :, k + 1 :] -= mult[:, None] * u[k, k + 1 :]
        x[k + 1 :] -= mult[:, None] * x[k]
    for k in range(n - 1, -1, -1):
        for j in range(k + 1, n):
            x[k] -= u[k, j] * x[j]
        x[k] /= u[k, k]
    return x


def _objective_cols(q: np.ndarray, fs: np.ndarray, a: np.ndarray) -> np.ndarray:
    qa = np.einsum("ij,jn->in", q, a)
    return 0.5 * np.einsum("in,in->n", a, qa) + np.einsum("in,in->n", fs, a)


def _kkt_residuals(q: np.ndarray, fs: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Stationarity + multiplier defect at a, measured on the support of a."""
    g = np.einsum("ij,jn->in", q, a) + fs
    support = a > 0.0
    nu = np.where(support, g, 0.0).sum(axis=0) / support.sum(axis=0)
    stat = np.abs(np.where(support, g - nu, 0.0)).max(axis=0)
    dual = np.where(support, -np.inf, nu - g).max(axis=0, initial=-np.inf)
    return np.maximum(stat, np.maximum(dual, 0.0))


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    j = np.arange(1, v.size + 1)
    r = int(np.nonzero(u - css / j > 0.0)[0][-1]) + 1
    return np.maximum(v - css[r - 1] / r, 0.0)


def _pg_fallback(
    q: np.ndarray, f: np.ndarray, a: np.ndarray, tol: float, budget: int
) -> tuple[np.ndarray, int, bool]:
    """Monotone projected gradient for pixels whose KKT systems stay singular."""
    lip = float(np.linalg.eigvalsh(q)[-1])
    step = 1.0 / max(lip, 1e-12)
    obj = 0.5 * a @ q @ a + f @ a
    for it in range(1, budget + 1):
        g = q @ a + f
        t = step
        cand = a
        for _ in range(60):
            cand = _project_simplex(a - t * g)
            cobj = 0.5 * cand @ q @ cand + f @ cand
            if cobj <= obj + 1e-15 * (1.0 + abs(obj)):
                break
            t *= 0.5
        moved = not np.array_equal(cand, a)
        a, obj = cand, cobj
        if float(_kkt_residuals(q, f[:, None], a[:, None])[0]) <= tol:
            return a, it, True
        if not moved:
            return a, it, False
    return a, budget, False


def _solve_batch(
    q: np.ndarray,
    fs: np.ndarray,
    a0: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 200,
    trace: bool = False,
):
    """Active-set solve of min a'Qa/2 + f'a on the simplex, one f per column.

    Returns (a, kkt_residuals, iterations, converged, shifted, trace_list).
    All intermediate iterates are feasible; a is returned even for columns
    that hit the sweep budget, flagged in `converged`.
    """
    p, n = fs.shape
    a = np.array(a0, dtype=np.float64)
    free = a > 0.0
    done = np.zeros(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)
    iters = np.zeros(n, dtype=np.int64)
    shifted = np.zeros(n, dtype=bool)
    delta = 1e-10 * float(np.trace(q)) / p
    trace_vals = [float(_objective_cols(q, fs, a)[0])] if trace else None

    for _ in range(max_iter):
        todo = np.flatnonzero(~done)
        if todo.size == 0:
            break
        patterns, inverse = np.unique(free[:, todo].T, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        for gi in range(patterns.shape[0]):
            fm = patterns[gi]
            px = todo[inverse == gi]
            iters[px] += 1
            fi = np.flatnonzero(fm)
            nf = fi.size
            kmat = np.zeros((nf + 1, nf + 1))
            kmat[:nf, :nf] = q[np.ix_(fi, fi)]
            kmat[:nf, nf] = 1.0
            kmat[nf, :nf] = 1.0
            rhs = np.empty((nf + 1, px.size))
            rhs[:nf] = -fs[np.ix_(fi, px)]
            rhs[nf] = 1.0
            try:
                sol = _lu_solve_cols(kmat, rhs)
            except np.linalg.LinAlgError:
                shifted[px] = True
                kshift = kmat.copy()
                kshift[:nf, :nf] += delta * np.eye(nf)
                try:
                    sol = _lu_solve_cols(kshift, rhs)
                except np.linalg.LinAlgError:
                    for j in px:
                        aj, itj, okj = _pg_fallback(q, fs[:, j], a[:, j], tol, max_iter)
                        a[:, j] = aj
                        iters[j] += itj
                        done[j] = True
                        converged[j] = okj
                    continue
            x = sol[:nf]
            nu = sol[nf]
            feas = x.min(axis=0) >= -ANC_CLAMP

            fpx = px[feas]
            if fpx.size:
                # the face optimum is feasible: jump there, then check the
                # multipliers of the pinned variables
                anew = np.zeros((p, fpx.size))
                anew[fi] = np.where(x[:, feas] < 0.0, 0.0, x[:, feas])
                a[:, fpx] = anew
                # on the face, g = Qa + f = -nu * 1; a pinned variable may
                # stay at zero only if its multiplier g_i + nu is nonnegative
                g = np.einsum("ij,jn->in", q, anew) + fs[:, fpx]
                slack = np.where(fm[:, None], np.inf, g + nu[feas])
                worst = slack.min(axis=0)
                ok = worst >= -tol
                done[fpx[ok]] = True
                converged[fpx[ok]] = True
                rel = fpx[~ok]
                if rel.size:
                    free[np.argmin(slack[:, ~ok], axis=0), rel] = True

            ipx = px[~feas]
            if ipx.size:
                # walk toward the face optimum until a variable hits zero
                acur = a[np.ix_(fi, ipx)]
                d = x[:, ~feas] - acur
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = np.where(d < 0.0, acur / -d, np.inf)
                t = ratio.min(axis=0)
                block = np.argmin(ratio, axis=0)
                anew = acur + t * d
                anew[anew < 0.0] = 0.0
                anew[block, np.arange(ipx.size)] = 0.0
                a[np.ix_(fi, ipx)] = anew
                free[fi[block], ipx] = False
        if trace:
            trace_vals.append(float(_objective_cols(q, fs, a)[0]))

    residuals = _kkt_residuals(q, fs, a)
    return a, residuals, iters, converged, shifted, trace_vals


def solve_simplex_qp(
    problem: QpProblem,
    tol: float = 1e-9,
    max_iter: int = 200,
    warm_start: np.ndarray | None = None,
) -> QpSolution:
    """Solve one pixel's simplex QP.

    Args:
        problem: validated QP data.
        tol: KKT residual target.
        max_iter: active-set sweep budget; hitting it returns the last
            (always feasible) iterate with converged=False.
        warm_start: optional starting point; must be near the simplex
            (clamped and renormalized), defaults to the barycenter.
    """
    p = problem.size
    if warm_start is None:
        a0 = np.full((p, 1), 1.0 / p)
    else:
        w = np.asarray(warm_start, dtype=np.float64)
        if w.shape != (p,):
            raise ShapeError(f"warm start must have shape ({p},), got {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("warm start must be finite")
        if w.min() < -1e-9 or abs(w.sum() - 1.0) > 1e-6:
            raise ValueError("warm start must lie on the unit simplex")
        w = np.maximum(w, 0.0)
        a0 = (w / w.sum())[:, None]
    a, res, iters, conv, shifted, trace = _solve_batch(
        problem.q, problem.f[:, None], a0, tol=tol, max_iter=max_iter, trace=True
    )
    return QpSolution(
        a=a[:, 0],
        kkt_residual=float(res[0]),
        iterations=int(iters[0]),
        converged=bool(conv[0]),
        shifted=bool(shifted[0]),
        objective_trace=np.asarray(trace),
    )


def fcls(
    endmembers: EndmemberMatrix,
    observed: PixelMatrix,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> AbundanceMatrix:
    """Fully constrained least squares: best simplex abundances per pixel.

    Solves min ||y - M a||^2 independently for every pixel under the
    non-negativity and sum-to-one constraints.  Warns if some pixels do
    not reach the KKT tolerance within the sweep budget (their last
    feasible iterate is still returned) and when the problem is
    underdetermined.
    """
    if observed.channels != endmembers.bands:
        raise ShapeError(
            f"{observed.channels} data channels vs {endmembers.bands} endmember bands"
        )
    if endmembers.bands < endmembers.count:
        warnings.warn(
            "fewer bands than endmembers; least-squares solution may be non-unique",
            stacklevel=2,
        )
    m = endmembers.values
    problem = QpProblem(m.T @ m, np.zeros(endmembers.count))
    fs = -np.einsum("li,ln->in", m, observed.values)
    a0 = np.full(fs.shape, 1.0 / endmembers.count)
    a, _, _, conv, _, _ = _solve_batch(problem.q, fs, a0, tol=tol, max_iter=max_iter)
    bad = int((~conv).sum())
    if bad:
        warnings.warn(
            f"{bad} of {conv.size} pixels did not reach the QP tolerance",
            stacklevel=2,
        )
    return AbundanceMatrix(a, observed.spatial_rows, observed.spatial_cols)
