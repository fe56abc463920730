"""Command-line entry point: ``nasbo {init,run,suggest,report,loocv,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .diagnostics import loocv
from .gp import GpDataset
from .inference.nuts import NutsSettings
from .orchestrator import Campaign, CampaignConfig, build_report, run_campaign, sobol_baseline
from .problems import PROBLEMS, synthetic_problem
from .search_space import emit_model_config
from .sobol import sobol_points


def _config_from_args(a) -> CampaignConfig:
    if a.evaluator == "external":
        ev = {"type": "external"}
        if a.command:
            ev.update(command=a.command, timeout=a.timeout)
            if a.cwd:
                ev["cwd"] = a.cwd
    else:
        ev = {"type": "synthetic", "name": a.evaluator, "seed": a.problem_seed, "noise_std": a.noise}
    nuts = NutsSettings.test_scale(a.seed) if a.test_scale else NutsSettings(seed=a.seed)
    return CampaignConfig(
        budget=a.budget,
        batch_size=a.q,
        init_points=a.init,
        seed=a.seed,
        evaluator=ev,
        nuts=nuts,
        mc_samples=a.mc_samples,
        model=a.model,
        refit_min_free_slots=a.refit_min_free_slots or 1,
    )


def cmd_init(a) -> int:
    cfg = _config_from_args(a)
    cfg.save(a.out)
    print(f"wrote {a.out}")
    return 0


def cmd_run(a) -> int:
    cfg = CampaignConfig.load(a.config)
    log_path = Path(a.log)
    camp = Campaign.load(cfg, log_path) if log_path.exists() else Campaign(cfg, log_path=log_path)
    report = camp.run()
    paths = report.write(a.report_dir)
    print(json.dumps({"hypervolume": report.hypervolume, "n_trials": len(report.trials), "report": str(paths["json"])}))
    return 0


def cmd_suggest(a) -> int:
    cfg = CampaignConfig.load(a.config)
    log_path = Path(a.log)
    if log_path.exists():
        camp = Campaign.load(cfg, log_path, attach=a.append)
    else:
        camp = Campaign(cfg, log_path=log_path if a.append else None)
    n = a.n if a.n is not None else cfg.batch_size - len(camp.by_state("pending"))
    trials = camp.ask(max(n, 0))
    out = [
        {
            "trial_id": t.trial_id,
            "generator": t.generator,
            "config": t.config,
            "model_config": emit_model_config(camp.space, t.config),
        }
        for t in trials
    ]
    print(json.dumps(out, indent=2))
    return 0


def cmd_report(a) -> int:
    cfg = CampaignConfig.load(a.config)
    report = build_report(Campaign.read_log(a.log), cfg)
    paths = report.write(a.out)
    print(json.dumps({"hypervolume": report.hypervolume, "front_size": len(report.front), "files": {k: str(v) for k, v in paths.items()}}))
    return 0


def cmd_loocv(a) -> int:
    settings = NutsSettings.test_scale(a.seed) if a.test_scale else NutsSettings(seed=a.seed)
    if a.log:
        cfg = CampaignConfig.load(a.config)
        camp = Campaign.load(cfg, a.log, attach=False)
        X, Y = camp.dataset()
        names = [o.name for o in cfg.objectives]
        k = names.index(a.objective) if a.objective else 0
        data = GpDataset(X, Y[:, k])
    else:
        prob = synthetic_problem(a.problem, a.seed, a.noise)
        X = prob.space.snap(sobol_points(a.n, prob.space.dim, seed=a.seed))
        data = GpDataset(X, prob.evaluate_unit(X)[:, 0] + a.noise * np.random.default_rng(a.seed).standard_normal(a.n))
    results = {}
    for method in a.method:
        res = loocv(data, method, settings, warm_start=not a.full_refit)
        res.write(a.out)
        results[method] = res.metrics()
    print(json.dumps(results, indent=2))
    return 0


def cmd_bench(a) -> int:
    rows = []
    for seed in a.seeds:
        cfg = CampaignConfig(
            budget=a.budget,
            batch_size=a.q,
            init_points=a.init,
            seed=seed,
            evaluator={"type": "synthetic", "name": a.problem, "seed": seed, "noise_std": a.noise},
            nuts=NutsSettings.test_scale(seed) if a.test_scale else NutsSettings(seed=seed),
            model=a.model,
            refit_min_free_slots=a.refit_min_free_slots or a.q,
        )
        bo = run_campaign(cfg, log_path=Path(a.out) / f"trials_{a.problem}_{seed}.jsonl" if a.out else None)
        base = sobol_baseline(cfg)
        rows.append({"seed": seed, "bo_hypervolume": bo.hypervolume, "sobol_hypervolume": base.hypervolume})
        print(json.dumps(rows[-1]), flush=True)
    wins = sum(r["bo_hypervolume"] > r["sobol_hypervolume"] for r in rows)
    print(json.dumps({"problem": a.problem, "bo_wins": wins, "seeds": len(rows)}))
    return 0


def _add_campaign_args(p) -> None:
    p.add_argument("--budget", type=int, default=240)
    p.add_argument("--q", type=int, default=16, help="batch size / max in-flight evaluations")
    p.add_argument("--init", type=int, default=32, help="number of Sobol points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-samples", type=int, default=128)
    p.add_argument("--model", choices=["saas", "map"], default="saas")
    p.add_argument("--refit-min-free-slots", type=int, default=None)
    p.add_argument("--test-scale", action="store_true", help="short NUTS chains (128/64/thin 8)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nasbo", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("init", help="write a campaign config")
    _add_campaign_args(p)
    p.add_argument("--evaluator", default="external", choices=["external", *PROBLEMS])
    p.add_argument("--problem-seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--command", help="evaluator command (otherwise NASBO_EVALUATOR_CMD)")
    p.add_argument("--timeout", type=float, default=3600.0)
    p.add_argument("--cwd")
    p.add_argument("--out", default="campaign.json")
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("run", help="run or resume a campaign")
    p.add_argument("--config", default="campaign.json")
    p.add_argument("--log", default="trials.jsonl")
    p.add_argument("--report-dir", default="report")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("suggest", help="print the next proposals as JSON")
    p.add_argument("--config", default="campaign.json")
    p.add_argument("--log", default="trials.jsonl")
    p.add_argument("--n", type=int, default=None, help="default: free slots")
    p.add_argument("--append", action="store_true", help="record proposals as pending trials")
    p.set_defaults(fn=cmd_suggest)

    p = sub.add_parser("report", help="front, hypervolume and trace files")
    p.add_argument("--config", default="campaign.json")
    p.add_argument("--log", default="trials.jsonl")
    p.add_argument("--out", default="report")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("loocv", help="leave-one-out cross-validation")
    p.add_argument("--config", default="campaign.json")
    p.add_argument("--log", help="trial log to use as data (otherwise a synthetic problem)")
    p.add_argument("--objective")
    p.add_argument("--problem", default="sparse-quadratic", choices=PROBLEMS)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", nargs="+", default=["saas", "map"], choices=["saas", "map"])
    p.add_argument("--test-scale", action="store_true")
    p.add_argument("--full-refit", action="store_true", help="cold-start every fold")
    p.add_argument("--out", default="loocv")
    p.set_defaults(fn=cmd_loocv)

    p = sub.add_parser("bench", help="BO vs pure Sobol on a synthetic problem")
    _add_campaign_args(p)
    p.add_argument("--problem", default="sparse-quadratic", choices=PROBLEMS)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--out")
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return a.fn(a)


if __name__ == "__main__":
    sys.exit(main())
