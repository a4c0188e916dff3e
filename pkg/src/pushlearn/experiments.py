"""Command-line entry point: single runs, batches, study reproduction, plots.

Commands
--------
run        one episode -> metrics CSV row (optionally a per-step trace CSV)
batch      mode x seed sweep for one scenario, optionally in parallel
study      canned study matrices (sim1/sim2/sim3) with summary CSV and plots
calibrate  solve for the learning rate that matches the belief baseline
serve      interactive WebSocket sandbox service

Exit codes: 0 ok, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import learner, metrics, qmdp
from .controller import MODES, run_episode
from .world import Scenario, load_scenario, resolve_scenario_path


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        raise _UsageError(message)


def parse_seeds(text: str) -> list[int]:
    """Parse "a..b" (inclusive) or a single integer."""
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise _UsageError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(text)]


def _load(name_or_path) -> Scenario:
    return load_scenario(resolve_scenario_path(name_or_path))


def _with_overrides(scenario: Scenario, human_kind: str | None = None, mu: float | None = None) -> Scenario:
    out = scenario
    if human_kind is not None and human_kind != scenario.human.kind:
        out = dataclasses.replace(out, human=dataclasses.replace(out.human, kind=human_kind))
    if mu is not None and mu != scenario.deform.mu:
        out = dataclasses.replace(out, deform=dataclasses.replace(out.deform, mu=mu))
    return out


def _episode_job(args):
    """Worker for parallel batches; returns (sort_key, csv_row)."""
    scenario_path, mode, seed, human_kind, mu, cache_dir = args
    scenario = _with_overrides(_load(scenario_path), human_kind, mu)
    log = run_episode(scenario, mode, seed=seed, cache_dir=cache_dir)
    row = metrics.csv_row(log, scenario)
    return (scenario.name, human_kind or scenario.human.kind, mu or scenario.deform.mu, mode, seed), row


def run_jobs(jobs, parallel: int = 1):
    """Run episode jobs at the given parallelism; output order is always the sorted key order."""
    if parallel <= 1:
        results = [_episode_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_episode_job, jobs, chunksize=1))
    results.sort(key=lambda kr: kr[0])
    return [row for _, row in results]


def _prewarm_qtables(scenario: Scenario, cache_dir) -> None:
    if scenario.qmdp is not None:
        qmdp.q_tables_for(scenario, cache_dir=cache_dir)


def write_trace(log, path: Path) -> None:
    with path.open("w") as f:
        f.write("t,q_x,q_y,qdot_x,qdot_y,qdes_x,qdes_y,ur_x,ur_y,uh_x,uh_y,replanned,interacted\n")
        for r in log.records:
            vals = [r.t, *r.q, *r.qdot, *r.q_des, *r.u_r, *r.u_h, int(r.replanned), int(r.interacted)]
            f.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in vals) + "\n")


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    if args.mode not in MODES:
        raise _UsageError(f"mode must be one of {MODES}, got {args.mode!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = run_episode(scenario, args.mode, seed=args.seed, cache_dir=out / "qcache")
    row = metrics.csv_row(log, scenario)
    csv_path = out / f"run_{scenario.name}_{args.mode}_{args.seed}.csv"
    csv_path.write_text(metrics.format_rows([row], scenario.feature_names))
    if args.trace:
        write_trace(log, out / f"trace_{scenario.name}_{args.mode}_{args.seed}.csv")
    print(csv_path)
    return 0


def cmd_batch(args) -> int:
    scenario = _load(args.scenario)
    modes = args.modes.split(",")
    for m in modes:
        if m not in MODES:
            raise _UsageError(f"unknown mode {m!r}")
    seeds = parse_seeds(args.seeds)
    if not seeds or not modes:
        raise _UsageError("need at least one mode and one seed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = out / "qcache"
    _prewarm_qtables(scenario, cache)
    path = resolve_scenario_path(args.scenario)
    jobs = [(str(path), m, s, None, None, str(cache)) for m in modes for s in seeds]
    rows = run_jobs(jobs, parallel=args.parallel)
    csv_path = out / f"batch_{scenario.name}.csv"
    csv_path.write_text(metrics.format_rows(rows, scenario.feature_names))
    print(csv_path)
    return 0


# --- studies -----------------------------------------------------------------


def _mean(rows, col_idx) -> float:
    return float(np.mean([float(r[col_idx]) for r in rows]))


def study_sim1(seeds, out: Path, scenario_name="sim1_table", parallel: int = 1) -> dict:
    """Learning vs. belief-grid baseline vs. plain impedance, two simulated humans."""
    scenario = _load(scenario_name)
    cache = out / "qcache"
    _prewarm_qtables(scenario, cache)
    path = str(resolve_scenario_path(scenario_name))
    modes = ["impedance", "learn_all", "qmdp"]
    header = metrics.csv_header(scenario.feature_names)
    extended = ["human", *header]
    all_rows = []
    summary = {}
    for human_kind in ("optimal", "boltzmann"):
        jobs = [(path, m, s, human_kind, None, str(cache)) for m in modes for s in seeds]
        rows = run_jobs(jobs, parallel=parallel)
        rows = [[human_kind, *r] for r in rows]
        all_rows.extend(rows)
        regret_idx = extended.index("regret_exec")
        mode_idx = extended.index("mode")
        means = {m: _mean([r for r in rows if r[mode_idx] == m], regret_idx) for m in modes}
        norm = {m: metrics.normalized_regret(means[m], means["impedance"]) for m in modes}
        summary[human_kind] = {"mean_regret": means, "normalized_regret": norm}
    _write_csv(out / "sim1_episodes.csv", extended, all_rows)
    _write_summary(out / "sim1_summary.csv", summary_rows_sim1(summary))
    report = {"scenario": scenario.name, "summary": summary, "rows": all_rows, "header": extended}
    return report


def summary_rows_sim1(summary) -> list[list[str]]:
    rows = [["human", "mode", "mean_regret", "normalized_regret"]]
    for human_kind, data in summary.items():
        for mode, mean_r in data["mean_regret"].items():
            rows.append([human_kind, mode, repr(mean_r), repr(data["normalized_regret"][mode])])
    return rows


def study_sim2(seeds, out: Path, scenario_name="sim2_laptop", parallel: int = 1) -> dict:
    """Learning vs. deform-only across deformation magnitudes."""
    scenario = _load(scenario_name)
    path = str(resolve_scenario_path(scenario_name))
    header = metrics.csv_header(scenario.feature_names)
    extended = ["mu", *header]
    modes = ["deform_only", "learn_all"]
    mus = (2.0, 8.0, 32.0)
    all_rows = []
    summary = {}
    for mu in mus:
        jobs = [(path, m, s, None, mu, None) for m in modes for s in seeds]
        rows = run_jobs(jobs, parallel=parallel)
        rows = [[repr(mu), *r] for r in rows]
        all_rows.extend(rows)
        mode_idx = extended.index("mode")
        force_idx = extended.index("iact_force")
        time_idx = extended.index("iact_time")
        summary[mu] = {
            m: {
                "iact_force": _mean([r for r in rows if r[mode_idx] == m], force_idx),
                "correction_steps": _mean([r for r in rows if r[mode_idx] == m], time_idx)
                / scenario.dt,
            }
            for m in modes
        }
    _write_csv(out / "sim2_episodes.csv", extended, all_rows)
    srows = [["mu", "mode", "mean_correction_steps", "mean_iact_force"]]
    for mu, per_mode in summary.items():
        for m, vals in per_mode.items():
            srows.append([repr(mu), m, repr(vals["correction_steps"]), repr(vals["iact_force"])])
    _write_summary(out / "sim2_summary.csv", srows)
    return {"scenario": scenario.name, "summary": summary, "rows": all_rows, "header": extended}


def study_sim3(seeds, out: Path, scenario_name="sim3_table_human", parallel: int = 1) -> dict:
    """All-at-once vs. one-at-a-time updates with optimal and noisy humans."""
    scenario = _load(scenario_name)
    path = str(resolve_scenario_path(scenario_name))
    header = metrics.csv_header(scenario.feature_names)
    extended = ["human", *header]
    modes = ["learn_all", "learn_one"]
    all_rows = []
    summary = {}
    for human_kind in ("optimal", "noisy"):
        jobs = [(path, m, s, human_kind, None, None) for m in modes for s in seeds]
        rows = run_jobs(jobs, parallel=parallel)
        rows = [[human_kind, *r] for r in rows]
        all_rows.extend(rows)
        mode_idx = extended.index("mode")
        time_idx = extended.index("iact_time")
        away_h_idx = extended.index("away_human")
        summary[human_kind] = {
            m: {
                "correction_steps": _mean([r for r in rows if r[mode_idx] == m], time_idx)
                / scenario.dt,
                "away_human": _mean([r for r in rows if r[mode_idx] == m], away_h_idx),
            }
            for m in modes
        }
    # identical-trace check under the optimal human (same seed, both rules)
    sc_opt = _with_overrides(scenario, human_kind="optimal")
    log_all = run_episode(sc_opt, "learn_all", seed=seeds[0])
    log_one = run_episode(sc_opt, "learn_one", seed=seeds[0])
    summary["optimal_traces_identical"] = bool(
        np.array_equal(log_all.theta_history, log_one.theta_history)
    )
    _write_csv(out / "sim3_episodes.csv", extended, all_rows)
    srows = [["human", "mode", "mean_correction_steps", "mean_away_human"]]
    for human_kind in ("optimal", "noisy"):
        for m, vals in summary[human_kind].items():
            srows.append([human_kind, m, repr(vals["correction_steps"]), repr(vals["away_human"])])
    srows.append(["optimal_traces_identical", repr(summary["optimal_traces_identical"]), "", ""])
    _write_summary(out / "sim3_summary.csv", srows)
    return {"scenario": scenario.name, "summary": summary, "rows": all_rows, "header": extended}


STUDIES = {"sim1": study_sim1, "sim2": study_sim2, "sim3": study_sim3}


def _write_csv(path: Path, header, rows) -> None:
    import csv as _csv

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = _csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_summary(path: Path, rows) -> None:
    _write_csv(path, rows[0], rows[1:])


def cmd_study(args) -> int:
    if args.study not in STUDIES:
        raise _UsageError(f"study must be one of {sorted(STUDIES)}")
    seeds = parse_seeds(args.seeds)
    if not seeds:
        raise _UsageError("empty seed set")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = STUDIES[args.study](seeds, out, parallel=args.parallel)
    from . import plots

    plots.emit_plots(args.study, report, out, seeds=seeds)
    print(out / f"{args.study}_summary.csv")
    return 0


def cmd_calibrate(args) -> int:
    path = resolve_scenario_path(args.scenario)
    scenario = load_scenario(path)
    alpha = learner.calibrate_alpha(scenario)
    print(f"alpha = {alpha!r}")
    if not args.dry_run:
        import json

        raw = json.loads(path.read_text())
        raw["alpha"] = alpha
        path.write_text(json.dumps(raw, indent=2) + "\n")
        print(f"wrote alpha back to {path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .session import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(scenario_dir=args.scenarios)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="pushlearn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one episode")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--mode", required=True)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--trace", action="store_true", help="also write the per-step trace CSV")
    run_p.set_defaults(func=cmd_run)

    batch_p = sub.add_parser("batch", help="mode x seed sweep")
    batch_p.add_argument("--scenario", required=True)
    batch_p.add_argument("--modes", required=True, help="comma-separated mode list")
    batch_p.add_argument("--seeds", required=True, help="a..b inclusive, or one integer")
    batch_p.add_argument("--out", default="out")
    batch_p.add_argument("--parallel", type=int, default=1)
    batch_p.set_defaults(func=cmd_batch)

    study_p = sub.add_parser("study", help="reproduce a canned study")
    study_p.add_argument("study", choices=sorted(STUDIES))
    study_p.add_argument("--seeds", default="0..99")
    study_p.add_argument("--out", default="out")
    study_p.add_argument("--parallel", type=int, default=1)
    study_p.set_defaults(func=cmd_study)

    cal_p = sub.add_parser("calibrate", help="calibrate the learning rate against the belief baseline")
    cal_p.add_argument("--scenario", required=True)
    cal_p.add_argument("--dry-run", action="store_true", help="print alpha without writing it back")
    cal_p.set_defaults(func=cmd_calibrate)

    serve_p = sub.add_parser("serve", help="interactive sandbox service")
    serve_p.add_argument("--bind", default="127.0.0.1:8000")
    serve_p.add_argument("--scenarios", default=None, help="directory of scenario files")
    serve_p.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
