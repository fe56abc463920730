"""Monte-Carlo qNEHVI averaged over GP hyperparameter draws, and its optimizer.

For each hyperparameter draw the latent objectives at observed and pending
inputs are sampled jointly from fixed base samples.  Each of those samples
defines a Pareto front whose box decomposition is computed once and reused
for every candidate scored in the same greedy step.  Candidate outcomes are
drawn from the joint posterior, conditioned on the same base samples through
the block Cholesky factor, so they stay correlated with the sampled front.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ._backend import core
from .gp import GpHyperParams, kernel_matrix, matern52, robust_cholesky, NotPositiveDefiniteError
from .inference.fit import PosteriorEnsemble
from .search_space import SearchSpace, grid_total
from .sobol import sobol_points


class SearchSpaceExhausted(RuntimeError):
    pass


class MemberPosterior(Protocol):
    """Posterior of one objective under one hyperparameter draw, in outcome units.

    ``predict`` returns the mean and a matrix ``V`` with
    ``cov(A, B) = prior_cov(A, B) - V_A^T V_B``.
    """

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def prior_cov(self, A: np.ndarray, B: np.ndarray) -> np.ndarray: ...

    def prior_var(self, A: np.ndarray) -> np.ndarray: ...


class GpMember:
    def __init__(self, params: GpHyperParams, X, y, y_mean: float = 0.0, y_std: float = 1.0):
        self.params = params
        self.X = np.asarray(X, dtype=float)
        self.y_mean, self.y_std = y_mean, y_std
        z = (np.asarray(y, dtype=float) - y_mean) / y_std
        K = kernel_matrix(params, self.X) + params.noise_var * np.eye(self.X.shape[0])
        self.L, _ = robust_cholesky(K)
        self.alpha = cho_solve((self.L, True), z - params.mean_const)

    def predict(self, X):
        Kxn = kernel_matrix(self.params, X, self.X)
        mean = self.params.mean_const + Kxn @ self.alpha
        V = solve_triangular(self.L, Kxn.T, lower=True)
        return mean * self.y_std + self.y_mean, V * self.y_std

    def prior_cov(self, A, B):
        return kernel_matrix(self.params, A, B) * self.y_std**2

    def prior_var(self, A):
        return np.full(np.atleast_2d(A).shape[0], self.params.signal_var * self.y_std**2)


class FixedOutcomeMember:
    """Zero-variance posterior: outcomes are ``fn(X)`` exactly."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn

    def predict(self, X):
        X = np.atleast_2d(X)
        return np.asarray(self.fn(X), dtype=float).reshape(-1), np.zeros((0, X.shape[0]))

    def prior_cov(self, A, B):
        return np.zeros((np.atleast_2d(A).shape[0], np.atleast_2d(B).shape[0]))

    def prior_var(self, A):
        return np.zeros(np.atleast_2d(A).shape[0])


@dataclass
class AcquisitionContext:
    """Everything needed to score candidates; ``Y`` and ``ref_point`` are minimized."""

    ensemble: PosteriorEnsemble | None
    X: np.ndarray
    Y: np.ndarray
    ref_point: np.ndarray
    pending: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    mc_samples: int = 128
    seed: int = 0
    members: Sequence[Sequence[MemberPosterior]] | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.ref_point = np.asarray(self.ref_point, dtype=float)
        m = self.ref_point.shape[0]
        self.Y = np.asarray(self.Y, dtype=float).reshape(self.X.shape[0], m) if self.X.size else np.empty((0, m))
        d = self.X.shape[1] if self.X.shape[1] else np.shape(self.pending)[-1]
        if not self.X.size:
            self.X = np.empty((0, d))
        self.pending = np.asarray(self.pending, dtype=float).reshape(-1, d) if np.size(self.pending) else np.empty((0, d))
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.members is None:
            if self.ensemble is None:
                raise ValueError("need an ensemble or explicit members")
            self.members = [
                [
                    GpMember(ens.samples[i], self.X, self.Y[:, k], ens.y_mean, ens.y_std)
                    for k, ens in enumerate(self.ensemble.per_objective)
                ]
                for i in range(self.ensemble.size)
            ]
        if len(self.members) == 0:
            raise ValueError("empty hyperparameter ensemble")
        if np.any((self.pending < 0) | (self.pending > 1)):
            raise ValueError("pending points must lie in the unit cube")

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_objectives(self) -> int:
        return len(self.members[0])

    def with_pending(self, extra) -> "AcquisitionContext":
        extra = np.atleast_2d(np.asarray(extra, dtype=float))
        pending = np.vstack([self.pending, extra]) if self.pending.size else extra
        return replace(self, pending=pending)


def _root(S: np.ndarray) -> np.ndarray:
    """Lower-triangular square root of a PSD matrix (zero matrix -> zero root)."""
    if S.shape[0] == 0 or not np.any(np.diag(S) > 0):
        return np.zeros_like(S)
    if S.shape[0] == 1:
        return np.sqrt(np.maximum(S, 0.0))
    try:
        return robust_cholesky(0.5 * (S + S.T))[0]
    except NotPositiveDefiniteError:
        w, U = np.linalg.eigh(0.5 * (S + S.T))
        Q, R = np.linalg.qr((U * np.sqrt(np.clip(w, 0, None))).T)
        return (R.T * np.sign(np.diag(R))[None, :]).astype(float)


class _MemberState:
    """Per (draw, objective): joint samples at observed + pending inputs.

    ``marginal`` and ``joint`` return the candidate mean, the part of each
    candidate sample driven by the observed-side base samples, and the
    residual (co)variance left for the candidate's own base samples.
    """

    def __init__(self, member: MemberPosterior, Xo: np.ndarray, Zo: np.ndarray):
        self.member = member
        self.Xo = Xo
        mean_o, self.Vo = member.predict(Xo)
        cov = member.prior_cov(Xo, Xo) - self.Vo.T @ self.Vo
        self.Loo = _root(cov)
        self.degenerate = not np.any(self.Loo)
        self.Zo = Zo
        self.f_o = mean_o[None, :] + Zo @ self.Loo.T

    def _cross(self, Xc, Vc):
        if self.degenerate or self.Xo.shape[0] == 0:
            return np.zeros((self.Xo.shape[0], Xc.shape[0]))
        cov_co = self.member.prior_cov(Xc, self.Xo) - Vc.T @ self.Vo
        return solve_triangular(self.Loo, cov_co.T, lower=True)

    def joint(self, Xc: np.ndarray):
        mean_c, Vc = self.member.predict(Xc)
        A = self._cross(Xc, Vc)
        resid = self.member.prior_cov(Xc, Xc) - Vc.T @ Vc - A.T @ A
        return mean_c, self.Zo @ A, resid

    def marginal(self, Xc: np.ndarray):
        mean_c, Vc = self.member.predict(Xc)
        A = self._cross(Xc, Vc)
        var = self.member.prior_var(Xc) - np.einsum("ij,ij->j", Vc, Vc) - np.einsum("ij,ij->j", A, A)
        return mean_c, self.Zo @ A, np.sqrt(np.maximum(var, 0.0))


class _GpState:
    """Fast path for a GP member whose training inputs lead the observed block.

    With ``K_oc`` the prior kernel between observed/pending and candidate
    inputs, the cross factor is ``G @ K_oc`` for a matrix ``G`` computed once
    per context, so scoring a chunk of candidates needs one kernel evaluation
    and a few matrix products.
    """

    def __init__(self, member: GpMember, Xo: np.ndarray, Zo: np.ndarray):
        p = member.params
        self.params, self.Xo, self.scale, self.shift = p, Xo, member.y_std, member.y_mean
        n, n_o = member.X.shape[0], Xo.shape[0]
        self.n, self.alpha, self.Zo = n, member.alpha, Zo
        Koo = kernel_matrix(p, Xo)
        mean_o = p.mean_const + Koo[:, :n] @ member.alpha
        R = cho_solve((member.L, True), Koo[:n]).T  # K_on K^-1
        self.Loo = _root(Koo - R @ Koo[:n])
        E = np.eye(n_o)
        E[:, :n] -= R
        self.G = solve_triangular(self.Loo, E, lower=True) if np.any(self.Loo) else np.zeros((n_o, n_o))
        Linv = solve_triangular(member.L, np.eye(n), lower=True)
        self.f_o = (mean_o[None, :] + Zo @ self.Loo.T) * self.scale + self.shift
        # rows: L^-1 (zero-padded), G, Zo G; one product with K_oc gives all three terms
        self.H = np.zeros((n + n_o + Zo.shape[0], n_o))
        self.H[:n, :n] = Linv
        self.H[n:n + n_o] = self.G
        self.H[n + n_o:] = Zo @ self.G
        self.Bo = Xo / p.lengthscales
        self.bo2 = np.einsum("ij,ij->i", self.Bo, self.Bo)

    def _cross_kernel(self, Xc):
        # |a - b|^2 expanded so the distances come from one matrix product
        Ac = Xc / self.params.lengthscales
        d2 = np.einsum("ij,ij->i", Ac, Ac)[:, None] + self.bo2[None, :] - 2.0 * (Ac @ self.Bo.T)
        return self.params.signal_var * matern52(np.sqrt(np.maximum(d2, 0.0)))

    def _terms(self, Xc):
        Kco = self._cross_kernel(Xc)
        mean = self.params.mean_const + Kco[:, : self.n] @ self.alpha
        W = self.H @ Kco.T
        n, n_o = self.n, self.Xo.shape[0]
        return mean * self.scale + self.shift, W[:n], W[n:n + n_o], W[n + n_o:] * self.scale

    def joint(self, Xc: np.ndarray):
        mean, Vc, A, corr = self._terms(Xc)
        resid = kernel_matrix(self.params, Xc) - Vc.T @ Vc - A.T @ A
        return mean, corr, resid * self.scale**2

    def marginal(self, Xc: np.ndarray):
        mean, Vc, A, corr = self._terms(Xc)
        var = self.params.signal_var - np.einsum("ij,ij->j", Vc, Vc) - np.einsum("ij,ij->j", A, A)
        return mean, corr, np.sqrt(np.maximum(var, 0.0)) * self.scale


def _member_state(member, Xo, Zo):
    if isinstance(member, GpMember) and np.array_equal(member.X, Xo[: member.X.shape[0]]):
        return _GpState(member, Xo, Zo)
    return _MemberState(member, Xo, Zo)


class QNehvi:
    """qNEHVI-MCMC for one context, with cached box decompositions."""

    def __init__(self, ctx: AcquisitionContext, max_q: int = 1):
        self.ctx = ctx
        Xo = np.vstack([ctx.X, ctx.pending]) if ctx.pending.size else ctx.X
        n_o, N = Xo.shape[0], ctx.mc_samples
        n_draws, M = len(ctx.members), ctx.n_objectives
        rng_o = np.random.default_rng(np.random.SeedSequence([ctx.seed, 0]))
        rng_c = np.random.default_rng(np.random.SeedSequence([ctx.seed, 1]))
        Zo = rng_o.standard_normal((n_draws, M, N, n_o))
        self.Zc = rng_c.standard_normal((n_draws, M, N, max_q))
        self.states = [[_member_state(ctx.members[i][k], Xo, Zo[i, k]) for k in range(M)] for i in range(n_draws)]
        # (draws * N, n_o, M) sampled outcomes at observed + pending inputs
        self.Yo = np.concatenate(
            [np.stack([st.f_o for st in row], axis=-1) for row in self.states], axis=0
        )
        self.lo = self.hi = self.nbox = None
        if M == 2:
            self.lo, self.hi, self.nbox = core.staircase_boxes(np.ascontiguousarray(self.Yo), ctx.ref_point)

    @property
    def n_samples(self) -> int:
        return self.Yo.shape[0]

    def candidate_samples(self, Xc) -> np.ndarray:
        """Sampled outcomes ``(draws * N, C, M)`` for independent single candidates."""
        Xc = np.atleast_2d(np.asarray(Xc, dtype=float))
        if Xc.shape[1] != self.ctx.dim:
            raise ValueError(f"candidates have dimension {Xc.shape[1]}, expected {self.ctx.dim}")
        N = self.Zc.shape[2]
        out = np.empty((len(self.states) * N, Xc.shape[0], len(self.states[0])))
        for i, row in enumerate(self.states):
            for k, st in enumerate(row):
                mean_c, corr, sd = st.marginal(Xc)
                o = out[i * N : (i + 1) * N, :, k]
                np.multiply(self.Zc[i, k, :, :1], sd[None, :], out=o)
                o += corr
                o += mean_c[None, :]
        return out

    def __call__(self, Xc, chunk: int = 256) -> np.ndarray:
        """Acquisition value of each row of ``Xc`` taken as a single candidate."""
        Xc = np.atleast_2d(np.asarray(Xc, dtype=float))
        if self.lo is None:
            raise NotImplementedError("box-decomposition path needs exactly 2 objectives")
        vals = np.empty(Xc.shape[0])
        for c0 in range(0, Xc.shape[0], chunk):
            Yc = np.ascontiguousarray(self.candidate_samples(Xc[c0 : c0 + chunk]))
            vals[c0 : c0 + chunk] = core.hvi_sum(self.lo, self.hi, self.nbox, Yc) / self.n_samples
        return vals

    def joint_samples(self, Xc) -> np.ndarray:
        """Jointly sampled outcomes ``(draws * N, q, M)`` of a candidate set."""
        Xc = np.atleast_2d(np.asarray(Xc, dtype=float))
        q = Xc.shape[0]
        if q > self.Zc.shape[-1]:
            raise ValueError(f"context prepared for at most {self.Zc.shape[-1]} candidates")
        out = []
        for i, row in enumerate(self.states):
            cols = []
            for k, st in enumerate(row):
                mean_c, corr, resid = st.joint(Xc)
                cols.append(mean_c[None, :] + corr + self.Zc[i, k, :, :q] @ _root(resid).T)
            out.append(np.stack(cols, axis=-1))
        return np.concatenate(out, axis=0)

    def joint_value(self, Xc) -> float:
        """Cache-free estimate: HV(front + candidates) - HV(front), per sample."""
        Yc = self.joint_samples(Xc)
        ref = self.ctx.ref_point
        base = core.hypervolume_batch(np.ascontiguousarray(self.Yo), ref)
        both = core.hypervolume_batch(np.ascontiguousarray(np.concatenate([self.Yo, Yc], axis=1)), ref)
        return float(np.mean(np.maximum(both - base, 0.0)))


def qnehvi_mcmc(ctx: AcquisitionContext, candidates) -> float:
    """Acquisition value of one candidate set (``q`` rows)."""
    cands = np.atleast_2d(np.asarray(candidates, dtype=float))
    if cands.shape[1] != ctx.dim:
        raise ValueError(f"candidates have dimension {cands.shape[1]}, expected {ctx.dim}")
    acq = QNehvi(ctx, max_q=cands.shape[0])
    if cands.shape[0] == 1 and acq.lo is not None:
        return float(acq(cands)[0])
    return acq.joint_value(cands)


# -- optimization over the grid -----------------------------------------------------


@dataclass(frozen=True)
class OptimizerSettings:
    raw_samples: int = 4096
    n_seeds: int = 10
    max_climb_steps: int = 200


@dataclass
class CandidateBatch:
    points: np.ndarray
    acquisition_values: list[float]
    indices: list[tuple[int, ...]] = field(default_factory=list)


class _GridScorer:
    def __init__(self, space: SearchSpace, acq: QNehvi, used: set):
        self.space = space
        self.acq = acq
        self.used = used
        self.cache: dict[tuple, float] = {}

    def score(self, idx_rows: list[tuple]) -> list[float]:
        todo = [r for r in dict.fromkeys(idx_rows) if r not in self.cache]
        if todo:
            vals = self.acq(self.space.indices_to_unit(np.array(todo)))
            self.cache.update(zip(todo, vals.tolist()))
        return [self.cache[r] for r in idx_rows]

    def neighbors(self, idx: tuple) -> list[tuple]:
        sizes = self.space.grid_sizes
        out = []
        for i, v in enumerate(idx):
            for step in (-1, 1):
                w = v + step
                if 0 <= w < sizes[i]:
                    nb = idx[:i] + (w,) + idx[i + 1 :]
                    if nb not in self.used:
                        out.append(nb)
        return out


def _nearest_unused(space: SearchSpace, start: tuple, used: set) -> tuple:
    """Breadth-first search over +-1 grid moves for the closest unused point."""
    sizes = space.grid_sizes
    seen, frontier = {start}, [start]
    while frontier:
        nxt = []
        for idx in frontier:
            if idx not in used:
                return idx
            for i, v in enumerate(idx):
                for w in (v - 1, v + 1):
                    if 0 <= w < sizes[i]:
                        nb = idx[:i] + (w,) + idx[i + 1 :]
                        if nb not in seen:
                            seen.add(nb)
                            nxt.append(nb)
        frontier = nxt
    raise SearchSpaceExhausted("every grid point is already observed, pending or selected")


def maximize_on_grid(
    space: SearchSpace, acq: QNehvi, used: set, settings: OptimizerSettings, seed: int
) -> tuple[tuple, float]:
    """Quasi-random exploration, then +-1 hill climbing from the best seeds."""
    if len(used) >= grid_total(space):
        raise SearchSpaceExhausted("search space has no unused grid points left")
    scorer = _GridScorer(space, acq, used)
    raw = space.unit_to_indices(sobol_points(settings.raw_samples, space.dim, seed=seed))
    pool = [r for r in dict.fromkeys(map(tuple, raw.tolist())) if r not in used]
    if not pool:
        pool = [_nearest_unused(space, tuple(raw[0].tolist()), used)]
    vals = scorer.score(pool)
    order = np.argsort(-np.asarray(vals), kind="stable")[: settings.n_seeds]
    # climbers advance in lockstep so each round scores all their neighbours at once
    climbers = [(pool[j], vals[j]) for j in order]
    for _ in range(settings.max_climb_steps):
        nbs = [scorer.neighbors(cur) for cur, _ in climbers]
        scorer.score([nb for group in nbs for nb in group])
        moved = []
        for (cur, cur_val), group in zip(climbers, nbs):
            if not group:
                continue
            nb_vals = scorer.score(group)
            b = int(np.argmax(nb_vals))
            if nb_vals[b] > cur_val:
                moved.append((group[b], nb_vals[b]))
        if not moved:
            break
        climbers = list(dict(moved).items())
    best = max((k for k in scorer.cache if k not in used), key=lambda k: (scorer.cache[k], k), default=None)
    if best is None:
        best = _nearest_unused(space, pool[0], used)
        return best, scorer.score([best])[0]
    return best, scorer.cache[best]


def propose_batch(
    ctx: AcquisitionContext,
    space: SearchSpace,
    q: int,
    settings: OptimizerSettings = OptimizerSettings(),
    exclude: Sequence[Sequence[int]] = (),
) -> CandidateBatch:
    """Sequential greedy batch: each pick becomes a pending point for the next.

    ``exclude`` lists grid-index rows that may not be proposed (observed,
    pending and failed trials); observed and pending inputs are excluded
    automatically.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    used = {tuple(r) for r in space.unit_to_indices(ctx.X).tolist()} if ctx.X.size else set()
    if ctx.pending.size:
        used |= {tuple(r) for r in space.unit_to_indices(ctx.pending).tolist()}
    used |= {tuple(int(v) for v in r) for r in exclude}
    points, values, picked = [], [], []
    pending = ctx.pending
    for j in range(q):
        step_seed = int(np.random.SeedSequence([ctx.seed, 7, j]).generate_state(1)[0])
        step_ctx = replace(ctx, pending=pending, seed=step_seed)
        idx, val = maximize_on_grid(space, QNehvi(step_ctx), used, settings, seed=step_seed)
        x = space.indices_to_unit(idx)
        used.add(idx)
        points.append(x)
        values.append(float(val))
        picked.append(idx)
        pending = np.vstack([pending, x[None, :]]) if pending.size else x[None, :]
    return CandidateBatch(np.array(points), values, picked)


def enumerate_grid(space: SearchSpace) -> np.ndarray:
    """All grid points as unit coordinates (small spaces only)."""
    return space.indices_to_unit(np.array(list(itertools.product(*[range(k) for k in space.grid_sizes]))))
