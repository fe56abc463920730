"""No-U-Turn sampler on an unconstrained target.

Multinomial trajectory sampling (biased progressive sampling across the
doubling steps, uniform progressive sampling inside subtrees), endpoint
U-turn test with velocities ``M^-1 p``, dual-averaging step-size adaptation
and windowed diagonal mass adaptation during warmup.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

MAX_DELTA_H = 1000.0

LogDensity = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class NutsSettings:
    warmup_steps: int = 512
    # 512 / 16 keeps the 32 draws averaged by the acquisition
    samples: int = 512
    thinning: int = 16
    max_tree_depth: int = 10
    target_accept: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.warmup_steps < 1 or self.samples < 1 or self.thinning < 1:
            raise ValueError("warmup_steps, samples and thinning must be positive")
        if self.samples % self.thinning:
            raise ValueError("samples must be divisible by thinning")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")

    @property
    def retained(self) -> int:
        return self.samples // self.thinning

    @classmethod
    def test_scale(cls, seed: int = 0, **kw) -> "NutsSettings":
        """Reduced budget for CI-sized runs."""
        return cls(**{"warmup_steps": 128, "samples": 64, "thinning": 8, "seed": seed, **kw})

    def with_seed(self, seed: int) -> "NutsSettings":
        return NutsSettings(
            self.warmup_steps, self.samples, self.thinning, self.max_tree_depth, self.target_accept, int(seed)
        )

    def to_dict(self) -> dict:
        return {
            "warmup_steps": self.warmup_steps,
            "samples": self.samples,
            "thinning": self.thinning,
            "max_tree_depth": self.max_tree_depth,
            "target_accept": self.target_accept,
            "seed": self.seed,
        }


@dataclass
class NutsResult:
    samples: np.ndarray
    log_density: np.ndarray
    step_size: float
    inv_mass: np.ndarray
    accept_stat: float
    n_divergent: int
    n_divergent_warmup: int
    mean_tree_depth: float
    n_leapfrog: int
    extra: dict = field(default_factory=dict)

    @property
    def divergence_rate(self) -> float:
        return self.n_divergent / max(self.extra.get("n_draws", 1), 1)

    def diagnostics(self) -> dict:
        return {
            "accept_stat": self.accept_stat,
            "step_size": self.step_size,
            "n_divergent": self.n_divergent,
            "n_divergent_warmup": self.n_divergent_warmup,
            "divergence_rate": self.divergence_rate,
            "mean_tree_depth": self.mean_tree_depth,
            "n_leapfrog": self.n_leapfrog,
        }


class _State:
    __slots__ = ("q", "p", "grad", "logp")

    def __init__(self, q, p, grad, logp):
        self.q, self.p, self.grad, self.logp = q, p, grad, logp


class _Tree:
    __slots__ = ("left", "right", "proposal", "log_w", "turning", "divergent", "accept_sum", "n_steps")

    def __init__(self, left, right, proposal, log_w, turning, divergent, accept_sum, n_steps):
        self.left, self.right, self.proposal = left, right, proposal
        self.log_w = log_w
        self.turning, self.divergent = turning, divergent
        self.accept_sum, self.n_steps = accept_sum, n_steps


class _Integrator:
    def __init__(self, log_density: LogDensity, inv_mass: np.ndarray, rng: np.random.Generator):
        self.log_density = log_density
        self.inv_mass = inv_mass
        self.rng = rng

    def energy(self, s: _State) -> float:
        return -s.logp + 0.5 * float(np.sum(s.p * s.p * self.inv_mass))

    def leapfrog(self, s: _State, eps: float) -> _State:
        p = s.p + 0.5 * eps * s.grad
        q = s.q + eps * self.inv_mass * p
        try:
            logp, grad = self.log_density(q)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            logp, grad = -np.inf, np.zeros_like(q)
        if not np.isfinite(logp) or not np.all(np.isfinite(grad)):
            return _State(q, p, np.zeros_like(q), -np.inf)
        p = p + 0.5 * eps * grad
        return _State(q, p, grad, float(logp))

    def turning(self, left: _State, right: _State) -> bool:
        dq = right.q - left.q
        return float(dq @ (self.inv_mass * left.p)) < 0 or float(dq @ (self.inv_mass * right.p)) < 0

    def build(self, s: _State, direction: int, depth: int, eps: float, H0: float) -> _Tree:
        if depth == 0:
            s1 = self.leapfrog(s, direction * eps)
            H = self.energy(s1) if np.isfinite(s1.logp) else np.inf
            delta = H - H0
            if not np.isfinite(delta):
                delta = np.inf
            divergent = delta > MAX_DELTA_H
            accept = math.exp(min(0.0, -delta)) if np.isfinite(delta) else 0.0
            return _Tree(s1, s1, s1, -delta, False, divergent, accept, 1)

        t1 = self.build(s, direction, depth - 1, eps, H0)
        if t1.turning or t1.divergent:
            return t1
        edge = t1.right if direction > 0 else t1.left
        t2 = self.build(edge, direction, depth - 1, eps, H0)
        log_w = np.logaddexp(t1.log_w, t2.log_w)
        proposal = t1.proposal
        if np.isfinite(log_w) and math.log(self.rng.random()) < t2.log_w - log_w:
            proposal = t2.proposal
        left, right = (t1.left, t2.right) if direction > 0 else (t2.left, t1.right)
        turning = t2.turning or self.turning(left, right)
        return _Tree(
            left,
            right,
            proposal,
            log_w,
            turning,
            t2.divergent,
            t1.accept_sum + t2.accept_sum,
            t1.n_steps + t2.n_steps,
        )

    def transition(self, q, logp, grad, eps: float, max_depth: int):
        p = self.rng.standard_normal(q.shape) / np.sqrt(self.inv_mass)
        s0 = _State(q, p, grad, logp)
        H0 = self.energy(s0)
        left = right = proposal = s0
        log_w = 0.0
        accept_sum, n_steps, divergent, depth = 0.0, 0, False, 0
        while depth < max_depth:
            direction = 1 if self.rng.random() < 0.5 else -1
            edge = right if direction > 0 else left
            sub = self.build(edge, direction, depth, eps, H0)
            depth += 1
            accept_sum += sub.accept_sum
            n_steps += sub.n_steps
            if sub.divergent:
                divergent = True
                break
            if sub.turning:
                break
            if math.log(self.rng.random()) < sub.log_w - log_w:
                proposal = sub.proposal
            log_w = np.logaddexp(log_w, sub.log_w)
            if direction > 0:
                right = sub.right
            else:
                left = sub.left
            if self.turning(left, right):
                break
        return proposal, accept_sum / max(n_steps, 1), divergent, depth, n_steps


class _DualAveraging:
    def __init__(self, eps0: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0

    def update(self, accept: float) -> float:
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1 - eta) * self.h_bar + eta * (self.target - accept)
        self.log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def warmup_windows(n: int) -> list[tuple[int, int]]:
    """Slow mass-adaptation windows ``[start, end)`` (Stan's schedule)."""
    if n < 20:
        return []
    if n >= 150:
        init, term, base = 75, 50, 25
    else:
        init, term = int(0.15 * n), int(0.1 * n)
        base = max(10, (n - init - term) // 4)
    end = n - term
    windows, start, size = [], init, base
    while start < end:
        stop = start + size
        if stop + 2 * size > end:
            stop = end
        windows.append((start, stop))
        start, size = stop, 2 * size
    return windows


def _initial_step_size(integ: _Integrator, q, logp, grad) -> float:
    eps = 1.0
    p = integ.rng.standard_normal(q.shape) / np.sqrt(integ.inv_mass)
    s0 = _State(q, p, grad, logp)
    H0 = integ.energy(s0)

    def log_accept(e):
        s1 = integ.leapfrog(s0, e)
        return H0 - integ.energy(s1) if np.isfinite(s1.logp) else -np.inf

    direction = 1.0 if log_accept(eps) > math.log(0.5) else -1.0
    for _ in range(100):
        la = log_accept(eps)
        if direction * la <= direction * math.log(0.5):
            break
        eps *= 2.0**direction
        if not 1e-7 < eps < 1e3:
            break
    return float(np.clip(eps, 1e-7, 1e3))


def sample_nuts(
    log_density: LogDensity,
    init: np.ndarray,
    settings: NutsSettings,
    rng: np.random.Generator | None = None,
    inv_mass: np.ndarray | None = None,
    step_size: float | None = None,
) -> NutsResult:
    """Draw ``settings.samples`` post-warmup states, keeping every ``thinning``-th.

    Passing ``inv_mass`` fixes the metric (warmup then only tunes the step
    size, starting from ``step_size`` when given).
    """
    rng = np.random.default_rng(settings.seed) if rng is None else rng
    q = np.array(init, dtype=float)
    logp, grad = log_density(q)
    if not np.isfinite(logp):
        raise ValueError("initial point has non-finite log density")
    dim = q.shape[0]
    adapt_mass = inv_mass is None
    integ = _Integrator(log_density, np.ones(dim) if adapt_mass else np.array(inv_mass, dtype=float), rng)
    eps = float(step_size) if step_size else _initial_step_size(integ, q, logp, grad)
    da = _DualAveraging(eps, settings.target_accept)

    windows = warmup_windows(settings.warmup_steps) if adapt_mass else []
    window_ends = {stop: start for start, stop in windows}
    window_draws: list[np.ndarray] = []
    n_div_warm = 0
    for it in range(settings.warmup_steps):
        prop, accept, divergent, _, _ = integ.transition(q, logp, grad, eps, settings.max_tree_depth)
        q, logp, grad = prop.q, prop.logp, prop.grad
        n_div_warm += divergent
        eps = da.update(accept)
        if any(start <= it < stop for start, stop in windows):
            window_draws.append(q.copy())
        if it + 1 in window_ends:
            draws = np.asarray(window_draws)
            k = draws.shape[0]
            var = draws.var(axis=0, ddof=1) if k > 1 else np.ones(dim)
            integ.inv_mass = (k / (k + 5.0)) * var + 1e-3 * (5.0 / (k + 5.0))
            window_draws = []
            eps = _initial_step_size(integ, q, logp, grad)
            da = _DualAveraging(eps, settings.target_accept)
    eps = da.final

    kept, kept_lp = [], []
    accepts, depths = [], []
    n_div, n_leap = 0, 0
    for it in range(settings.samples):
        prop, accept, divergent, depth, steps = integ.transition(q, logp, grad, eps, settings.max_tree_depth)
        q, logp, grad = prop.q, prop.logp, prop.grad
        accepts.append(accept)
        depths.append(depth)
        n_div += divergent
        n_leap += steps
        if (it + 1) % settings.thinning == 0:
            kept.append(q.copy())
            kept_lp.append(logp)

    result = NutsResult(
        samples=np.asarray(kept),
        log_density=np.asarray(kept_lp),
        step_size=eps,
        inv_mass=integ.inv_mass.copy(),
        accept_stat=float(np.mean(accepts)),
        n_divergent=int(n_div),
        n_divergent_warmup=int(n_div_warm),
        mean_tree_depth=float(np.mean(depths)),
        n_leapfrog=int(n_leap),
        extra={"n_draws": settings.samples},
    )
    if result.divergence_rate > 0.25:
        log.warning("NUTS divergence rate %.0f%% exceeds 25%%", 100 * result.divergence_rate)
    return result
