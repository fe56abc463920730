"""Campaign driver: Sobol initialization, asynchronous batch proposals, trial log, reports.

Objectives are tracked in three forms.  ``objectives`` holds the raw values
returned by the evaluator, ``relative_objectives`` divides them by the base
model's values, and the optimizer works on a minimization view in which
maximized objectives are negated (the reference point is negated to match).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import shlex
import subprocess
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .acquisition import AcquisitionContext, OptimizerSettings, propose_batch
from .inference.fit import fit_models
from .inference.nuts import NutsSettings
from .pareto import hv_trace, hypervolume, pareto_front
from .problems import synthetic_problem
from .search_space import SearchSpace, emit_model_config, load_space
from .sobol import sobol_points

log = logging.getLogger(__name__)

STATES = ("pending", "completed", "failed")
GENERATORS = ("sobol", "bo", "manual")


class CampaignAborted(RuntimeError):
    pass


class EvaluationError(RuntimeError):
    pass


def substream_seed(seed: int, *key: int) -> int:
    """Named substream of the master seed (sobol=0, nuts=1, acquisition=2, durations=3)."""
    return int(np.random.SeedSequence([int(seed), *map(int, key)]).generate_state(1)[0])


@dataclass
class TrialRecord:
    trial_id: int
    config: dict
    unit_point: list[float]
    state: str = "pending"
    generator: str = "manual"
    objectives: dict | None = None
    relative_objectives: dict | None = None
    created_at: float = 0.0
    completed_at: float | None = None
    error: str | None = None
    acquisition_value: float | None = None

    def __post_init__(self):
        if self.state not in STATES:
            raise ValueError(f"unknown trial state {self.state!r}")
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.state == "pending" and self.objectives is not None:
            raise ValueError("pending trials carry no objectives")
        if self.state == "completed":
            if not self.objectives or not all(math.isfinite(v) for v in self.objectives.values()):
                raise ValueError("completed trials need finite objectives")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrialRecord":
        return cls(**dict(d))


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str
    direction: str = "minimize"
    base: float = 1.0

    def __post_init__(self):
        if self.direction not in ("minimize", "maximize"):
            raise ValueError("direction must be 'minimize' or 'maximize'")
        if self.base == 0 or not math.isfinite(self.base):
            raise ValueError("base value must be finite and non-zero")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "minimize" else -1.0


DEFAULT_OBJECTIVES = (ObjectiveSpec("accuracy", "maximize"), ObjectiveSpec("latency_p99", "minimize"))


@dataclass
class CampaignConfig:
    budget: int = 240
    batch_size: int = 16
    init_points: int = 32
    ref_point: tuple[float, ...] = (1.0, 1.0)
    seed: int = 0
    evaluator: dict = field(default_factory=lambda: {"type": "synthetic", "name": "sparse-quadratic", "seed": 0})
    objectives: tuple[ObjectiveSpec, ...] | None = None
    nuts: NutsSettings = field(default_factory=NutsSettings)
    mc_samples: int = 128
    model: str = "saas"
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    # refit and propose only once this many slots are free (1 = on every completion)
    refit_min_free_slots: int = 1
    wait_for_init: bool = True
    space: str = "paper"
    max_failure_fraction: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size q must be >= 1")
        if not 0 <= self.init_points <= self.budget:
            raise ValueError("need 0 <= init_points <= budget")
        if not 1 <= self.refit_min_free_slots <= self.batch_size:
            raise ValueError("refit_min_free_slots must lie in [1, q]")
        if self.model not in ("saas", "map"):
            raise ValueError("model must be 'saas' or 'map'")
        if self.objectives is None:
            self.objectives = _default_objectives(self.evaluator)
        self.objectives = tuple(o if isinstance(o, ObjectiveSpec) else ObjectiveSpec(**o) for o in self.objectives)
        self.ref_point = tuple(float(r) for r in self.ref_point)
        if len(self.ref_point) != len(self.objectives):
            raise ValueError("reference point and objectives differ in length")

    @property
    def signs(self) -> np.ndarray:
        return np.array([o.sign for o in self.objectives])

    @property
    def ref_min(self) -> np.ndarray:
        """Reference point in the minimization view."""
        return self.signs * np.asarray(self.ref_point)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nuts"] = self.nuts.to_dict()
        d["optimizer"] = asdict(self.optimizer)
        d["objectives"] = [asdict(o) for o in self.objectives]
        d["ref_point"] = list(self.ref_point)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "CampaignConfig":
        d = dict(d)
        if "nuts" in d:
            d["nuts"] = NutsSettings(**d["nuts"])
        if "optimizer" in d:
            d["optimizer"] = OptimizerSettings(**d["optimizer"])
        if d.get("objectives") is not None:
            d["objectives"] = tuple(ObjectiveSpec(**o) for o in d["objectives"])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CampaignConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _default_objectives(evaluator: Mapping) -> tuple[ObjectiveSpec, ...]:
    if evaluator.get("type") == "synthetic":
        prob = synthetic_problem(evaluator["name"], evaluator.get("seed", 0))
        return tuple(ObjectiveSpec(n, "minimize", float(b)) for n, b in zip(prob.objective_names, prob.base_values))
    return DEFAULT_OBJECTIVES


# -- evaluators ----------------------------------------------------------------------


class Evaluator(Protocol):
    def __call__(self, config: dict) -> dict[str, float]: ...


@dataclass
class ExternalEvaluator:
    """Runs a command with the model-config JSON on stdin; expects objectives JSON on stdout."""

    command: Sequence[str]
    space: SearchSpace
    timeout: float = 3600.0
    cwd: str | None = None
    objective_names: tuple[str, ...] = ("accuracy", "latency_p99")

    def __call__(self, config: dict) -> dict[str, float]:
        return evaluate_external(config, self)


def evaluate_external(config: dict, spec: ExternalEvaluator) -> dict[str, float]:
    """Raw objective values from the external command; raises ``EvaluationError``."""
    payload = json.dumps(emit_model_config(spec.space, config))
    try:
        proc = subprocess.run(
            list(spec.command), input=payload, capture_output=True, text=True, timeout=spec.timeout, cwd=spec.cwd
        )
    except subprocess.TimeoutExpired as e:
        raise EvaluationError(f"evaluator timed out after {spec.timeout:g}s") from e
    except OSError as e:
        raise EvaluationError(f"could not start evaluator: {e}") from e
    if proc.returncode != 0:
        raise EvaluationError(f"evaluator exited with status {proc.returncode}: {proc.stderr.strip()[-500:]}")
    try:
        obj = json.loads(proc.stdout)["objectives"]
        out = {name: float(obj[name]) for name in spec.objective_names}
    except (ValueError, KeyError, TypeError) as e:
        raise EvaluationError(f"malformed evaluator output: {proc.stdout.strip()[:200]!r}") from e
    if not all(math.isfinite(v) for v in out.values()):
        raise EvaluationError("evaluator returned non-finite objectives")
    return out


def external_from_env(space: SearchSpace, objective_names: Sequence[str], env: Mapping | None = None) -> ExternalEvaluator:
    env = os.environ if env is None else env
    cmd = env.get("NASBO_EVALUATOR_CMD")
    if not cmd:
        raise ValueError("NASBO_EVALUATOR_CMD is not set")
    return ExternalEvaluator(
        shlex.split(cmd),
        space,
        float(env.get("NASBO_EVALUATOR_TIMEOUT", 3600)),
        env.get("NASBO_EVALUATOR_CWD") or None,
        tuple(objective_names),
    )


def build_evaluator(cfg: CampaignConfig, space: SearchSpace) -> Evaluator:
    ev = cfg.evaluator
    names = tuple(o.name for o in cfg.objectives)
    if ev.get("type") == "synthetic":
        return synthetic_problem(ev["name"], ev.get("seed", 0), ev.get("noise_std", 0.0), space)
    if ev.get("type") == "external":
        if "command" not in ev:
            return external_from_env(space, names)
        cmd = ev["command"]
        return ExternalEvaluator(
            shlex.split(cmd) if isinstance(cmd, str) else list(cmd),
            space,
            float(ev.get("timeout", 3600)),
            ev.get("cwd"),
            names,
        )
    raise ValueError(f"unknown evaluator type {ev.get('type')!r}")


# -- executors -----------------------------------------------------------------------


class SimulatedExecutor:
    """Evaluates immediately but releases results on a simulated clock.

    Durations are drawn from a per-trial substream, so the completion order is
    a pure function of the seed and the trial ids.
    """

    def __init__(self, evaluator: Evaluator, seed: int = 0, duration: Callable[[int], float] | None = None):
        self.evaluator = evaluator
        self.seed = seed
        self.now = 0.0
        self._duration = duration or (lambda tid: float(np.random.default_rng(substream_seed(seed, 3, tid)).uniform(0.5, 1.5)))
        self._queue: list[tuple[float, int, dict | Exception]] = []

    def clock(self) -> float:
        return self.now

    def submit(self, trial: TrialRecord) -> None:
        try:
            result: dict | Exception = self.evaluator(trial.config)
        except Exception as e:  # evaluator failures become failed trials
            result = e
        self._queue.append((self.now + self._duration(trial.trial_id), trial.trial_id, result))

    def in_flight(self) -> int:
        return len(self._queue)

    def wait(self) -> list[tuple[int, dict | Exception]]:
        self._queue.sort(key=lambda r: (r[0], r[1]))
        t = self._queue[0][0]
        done = [r for r in self._queue if r[0] == t]
        self._queue = self._queue[len(done):]
        self.now = t
        return [(tid, res) for _, tid, res in done]

    def shutdown(self) -> None:
        pass


class ThreadExecutor:
    """Runs up to ``workers`` evaluations concurrently on threads."""

    def __init__(self, evaluator: Evaluator, workers: int):
        self.evaluator = evaluator
        self.pool = ThreadPoolExecutor(max_workers=workers)
        self.futures: dict[Future, int] = {}

    def clock(self) -> float:
        return time.time()

    def submit(self, trial: TrialRecord) -> None:
        self.futures[self.pool.submit(self.evaluator, trial.config)] = trial.trial_id

    def in_flight(self) -> int:
        return len(self.futures)

    def wait(self) -> list[tuple[int, dict | Exception]]:
        done, _ = wait(list(self.futures), return_when=FIRST_COMPLETED)
        out = []
        for f in sorted(done, key=lambda f: self.futures[f]):
            tid = self.futures.pop(f)
            exc = f.exception()
            out.append((tid, exc if exc is not None else f.result()))
        return out

    def shutdown(self) -> None:
        self.pool.shutdown(wait=True)


# -- reports -------------------------------------------------------------------------


@dataclass
class CampaignReport:
    trials: list[TrialRecord]
    objective_names: tuple[str, ...]
    ref_point: tuple[float, ...]
    front: list[dict]
    hypervolume: float
    hv_trace: list[float]
    n_failed: int

    def to_dict(self) -> dict:
        return {
            "objective_names": list(self.objective_names),
            "ref_point": list(self.ref_point),
            "hypervolume": self.hypervolume,
            "n_trials": len(self.trials),
            "n_completed": sum(t.state == "completed" for t in self.trials),
            "n_failed": self.n_failed,
            "front": self.front,
            "hv_trace": self.hv_trace,
        }

    def write(self, outdir) -> dict[str, Path]:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        names = list(self.objective_names)
        paths = {k: out / f for k, f in
                 [("json", "report.json"), ("front", "front.csv"), ("trace", "hv_trace.csv"), ("scatter", "scatter.csv")]}
        paths["json"].write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        with open(paths["front"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial_id", *names])
            for row in self.front:
                w.writerow([row["trial_id"], *(row["relative_objectives"][n] for n in names)])
        with open(paths["trace"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "hypervolume"])
            for i, v in enumerate(self.hv_trace, start=1):
                w.writerow([i, repr(v)])
        with open(paths["scatter"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial_id", "generator", *names, *(f"ref_{n}" for n in names)])
            for t in self.trials:
                if t.state == "completed":
                    w.writerow([t.trial_id, t.generator, *(t.relative_objectives[n] for n in names), *self.ref_point])
        return paths


# -- the campaign --------------------------------------------------------------------


class Campaign:
    """Owns the trial list; proposals consume a snapshot of it and never mutate it."""

    def __init__(self, cfg: CampaignConfig, space: SearchSpace | None = None, log_path=None):
        self.cfg = cfg
        self.space = space or load_space(cfg.space)
        self.trials: list[TrialRecord] = []
        self.log_path = Path(log_path) if log_path else None
        self.n_refits = 0
        self._sobol = None

    # persistence -------------------------------------------------------------

    def _log(self, trial: TrialRecord) -> None:
        if self.log_path is not None:
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(trial.to_dict()) + "\n")

    def save(self, path) -> None:
        """Write a compacted log: the latest record of every trial."""
        with open(path, "w") as fh:
            for t in self.trials:
                fh.write(json.dumps(t.to_dict()) + "\n")

    @staticmethod
    def read_log(path) -> list[TrialRecord]:
        latest: dict[int, TrialRecord] = {}
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    rec = TrialRecord.from_dict(json.loads(line))
                    latest[rec.trial_id] = rec
        return [latest[k] for k in sorted(latest)]

    @classmethod
    def load(cls, cfg: CampaignConfig, path, space: SearchSpace | None = None, attach: bool = True) -> "Campaign":
        camp = cls(cfg, space, path if attach else None)
        camp.trials = cls.read_log(path)
        return camp

    # views -------------------------------------------------------------------

    def by_state(self, state: str) -> list[TrialRecord]:
        return [t for t in self.trials if t.state == state]

    def to_min(self, relative: Mapping[str, float]) -> np.ndarray:
        return self.cfg.signs * np.array([relative[o.name] for o in self.cfg.objectives])

    def dataset(self) -> tuple[np.ndarray, np.ndarray]:
        done = self.by_state("completed")
        if not done:
            return np.empty((0, self.space.dim)), np.empty((0, len(self.cfg.objectives)))
        X = np.array([t.unit_point for t in done])
        Y = np.array([self.to_min(t.relative_objectives) for t in done])
        return X, Y

    # ask / tell --------------------------------------------------------------

    def _new_trial(self, x: np.ndarray, generator: str, now: float, value: float | None = None) -> TrialRecord:
        idx = self.space.unit_to_indices(x)
        t = TrialRecord(
            trial_id=len(self.trials),
            config=self.space.from_indices(idx),
            unit_point=self.space.indices_to_unit(idx).tolist(),
            generator=generator,
            created_at=now,
            acquisition_value=value,
        )
        self.trials.append(t)
        self._log(t)
        return t

    def sobol_design(self) -> np.ndarray:
        if self._sobol is None:
            n = max(self.cfg.init_points, 1)
            self._sobol = sobol_points(n, self.space.dim, seed=substream_seed(self.cfg.seed, 0))
        return self._sobol

    def bo_ready(self) -> bool:
        n_init = min(self.cfg.init_points, len(self.trials))
        if not self.cfg.wait_for_init:
            return len(self.by_state("completed")) >= 2
        finished = sum(t.state != "pending" for t in self.trials[:n_init])
        return finished >= self.cfg.init_points and len(self.by_state("completed")) >= 2

    def ask(self, n: int, now: float = 0.0) -> list[TrialRecord]:
        """Create up to ``n`` new pending trials (fewer while waiting on the initial design)."""
        n = min(n, self.cfg.budget - len(self.trials))
        new = []
        while n > 0 and len(self.trials) < self.cfg.init_points:
            new.append(self._new_trial(self.sobol_design()[len(self.trials)], "sobol", now))
            n -= 1
        if n > 0 and self.bo_ready():
            batch = self.propose(n)
            for x, v in zip(batch.points, batch.acquisition_values):
                new.append(self._new_trial(x, "bo", now, v))
        return new

    def propose(self, n: int):
        """Fit on completed trials and propose ``n`` points given the pending ones."""
        X, Y = self.dataset()
        first_id = len(self.trials)
        settings = self.cfg.nuts.with_seed(substream_seed(self.cfg.seed, 1, first_id))
        ensemble = fit_models(X, Y, method=self.cfg.model, settings=settings)
        self.n_refits += 1
        pending = np.array([t.unit_point for t in self.by_state("pending")]).reshape(-1, self.space.dim)
        ctx = AcquisitionContext(
            ensemble, X, Y, self.cfg.ref_min, pending, self.cfg.mc_samples, substream_seed(self.cfg.seed, 2, first_id)
        )
        exclude = [self.space.to_indices(t.config) for t in self.trials]
        return propose_batch(ctx, self.space, n, self.cfg.optimizer, exclude=exclude)

    def tell(self, trial_id: int, result: Mapping[str, float] | Exception, now: float = 0.0) -> TrialRecord:
        t = self.trials[trial_id]
        if t.state != "pending":
            raise ValueError(f"trial {trial_id} is already {t.state}")
        if isinstance(result, Exception):
            t = replace(t, state="failed", completed_at=now, error=str(result) or type(result).__name__)
        else:
            try:
                raw = {o.name: float(result[o.name]) for o in self.cfg.objectives}
                if not all(math.isfinite(v) for v in raw.values()):
                    raise ValueError("non-finite objective")
            except (KeyError, TypeError, ValueError) as e:
                return self.tell(trial_id, EvaluationError(f"bad objectives {result!r}: {e}"), now)
            rel = {o.name: raw[o.name] / o.base for o in self.cfg.objectives}
            t = replace(t, state="completed", objectives=raw, relative_objectives=rel, completed_at=now)
        self.trials[trial_id] = t
        self._log(t)
        return t

    # run ---------------------------------------------------------------------

    def _check_failures(self) -> None:
        finished = [t for t in self.trials if t.state != "pending"]
        failed = sum(t.state == "failed" for t in finished)
        if len(finished) >= min(self.cfg.batch_size, self.cfg.budget) and failed > self.cfg.max_failure_fraction * len(finished):
            raise CampaignAborted(f"{failed} of {len(finished)} finished trials failed")

    def run(self, executor=None) -> CampaignReport:
        if executor is None:
            ev = build_evaluator(self.cfg, self.space)
            if self.cfg.evaluator.get("type") == "synthetic":
                executor = SimulatedExecutor(ev, self.cfg.seed)
            else:
                executor = ThreadExecutor(ev, self.cfg.batch_size)
        q, r = self.cfg.batch_size, self.cfg.refit_min_free_slots
        # resumed pending trials are dispatched again
        for t in self.by_state("pending"):
            executor.submit(t)
        try:
            while True:
                free = q - executor.in_flight()
                remaining = self.cfg.budget - len(self.trials)
                sobol_phase = len(self.trials) < self.cfg.init_points
                if remaining > 0 and free > 0 and (sobol_phase or free >= min(r, remaining) or executor.in_flight() == 0):
                    for t in self.ask(free, executor.clock()):
                        executor.submit(t)
                if executor.in_flight() == 0:
                    break
                for tid, res in executor.wait():
                    t = self.tell(tid, res, executor.clock())
                    if t.state == "failed":
                        log.warning("trial %d failed: %s", tid, t.error)
                self._check_failures()
        finally:
            executor.shutdown()
        return self.report()

    def report(self) -> CampaignReport:
        return build_report(self.trials, self.cfg)


def build_report(trials: Sequence[TrialRecord], cfg: CampaignConfig) -> CampaignReport:
    names = tuple(o.name for o in cfg.objectives)
    done = sorted((t for t in trials if t.state == "completed"), key=lambda t: (t.completed_at or 0.0, t.trial_id))
    signs = cfg.signs
    ref = cfg.ref_min
    Y = np.array([signs * np.array([t.relative_objectives[n] for n in names]) for t in done]).reshape(-1, len(names))
    front_rows: list[dict] = []
    hv, trace = 0.0, []
    if len(names) == 2 and Y.shape[0]:
        trace = hv_trace(Y, ref).tolist()
        inside = np.all(Y < ref, axis=1)
        F = pareto_front(Y[inside])
        hv = hypervolume(F, ref)
        fset = {tuple(f) for f in F.tolist()}
        seen = set()
        for t, y in zip(done, Y.tolist()):
            if tuple(y) in fset and tuple(y) not in seen:
                seen.add(tuple(y))
                front_rows.append({"trial_id": t.trial_id, "relative_objectives": t.relative_objectives, "config": t.config})
        front_rows.sort(key=lambda row: signs[0] * row["relative_objectives"][names[0]])
    return CampaignReport(
        list(trials), names, tuple(cfg.ref_point), front_rows, float(hv), trace, sum(t.state == "failed" for t in trials)
    )


def run_campaign(cfg: CampaignConfig, log_path=None, executor=None) -> CampaignReport:
    return Campaign(cfg, log_path=log_path).run(executor)


def sobol_baseline(cfg: CampaignConfig, n: int | None = None) -> CampaignReport:
    """Pure quasi-random campaign of ``n`` (default: budget) points with the same seed."""
    n = cfg.budget if n is None else n
    return run_campaign(replace(cfg, budget=n, init_points=n))
