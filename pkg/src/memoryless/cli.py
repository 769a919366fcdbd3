"""Command-line front end.

    memoryless inspect  CONFIG
    memoryless simulate CONFIG [--output-dir DIR] [--workers N]
    memoryless rates    CONFIG
    memoryless coeffs   CONFIG [--t-max N]
    memoryless compare  CONFIG [--output-dir DIR] [--workers N]

The JSON config is the single description of an experiment. Exit status is
0 on success, 1 when the config (or the command/config pairing) is invalid
and 2 when a run fails. Output goes to ``--output-dir``, else the config's
``output_dir``, else ``$MEMORYLESS_OUTPUT_DIR``, else ``./output``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import MIN_STEPS, learning_condition_report, m_coefficients, theoretical_rate
from .config import ConfigError, ExperimentConfig
from .engine import SPECTRAL_TOL, monte_carlo
from .errors import IncompatibleRuleError
from .graph import is_strongly_connected, period, spectral_data
from .model import is_globally_identifiable, lambda_matrix

ENV_OUTPUT_DIR = "MEMORYLESS_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "output"
CSV_HEADER = "t,agent,state,belief"
WINDOW = 0.5

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2

log = logging.getLogger("memoryless")


class UsageError(Exception):
    """The command cannot be applied to this (valid) config."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _short(x) -> str:
    return "n/a" if x is None else f"{x:.6g}"


def _vec(v) -> str:
    return "[" + ", ".join(f"{x:.6g}" for x in v) + "]"


def output_dir(cfg: ExperimentConfig, override: str | None) -> Path:
    return Path(override or cfg.output_dir or os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR)


def write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n")


def trajectory_csv(traj, labels, config_hash: str) -> str:
    """Snapshot beliefs as ``t,agent,state,belief`` rows (t, agent, state ascending).

    The first line is a ``#`` comment carrying the config hash.
    """
    lines = [f"# config_hash={config_hash}", CSV_HEADER]
    probs = np.exp(traj.snapshots)
    for t, snap in zip(traj.snapshot_times.tolist(), probs):
        for i, row in enumerate(snap):
            for label, p in zip(labels, row):
                lines.append(f"{t},{i},{label},{_fmt(p)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# shared pieces


def _rate_record(cfg: ExperimentConfig, run) -> dict:
    spectral = spectral_data(run.network, tol=SPECTRAL_TOL)
    labels = cfg.states
    try:
        pred = theoretical_rate(run.rule, run.network, spectral, run.signal_model, run.truth)
    except IncompatibleRuleError as exc:
        return {"rule": run.rule.name, "closed_form": False, "rates": None,
                "slowest_state": None, "overall": None, "note": str(exc),
                "identifiable": bool(is_globally_identifiable(run.signal_model, run.truth))}
    rates = None
    if pred.closed_form:
        rates = {labels[s]: float(r) for s, r in zip(pred.false_states, pred.rates)}
    return {
        "rule": pred.rule,
        "closed_form": pred.closed_form,
        "rates": rates,
        "weights": None if pred.weights is None else [float(w) for w in pred.weights],
        "slowest_state": None if pred.slowest_state is None else labels[pred.slowest_state],
        "overall": pred.overall,
        "note": pred.note,
        "identifiable": pred.identifiable,
    }


def _empirical_record(cfg: ExperimentConfig, ens) -> dict:
    labels = [cfg.states[s] for s in ens.false_states]
    doc = {"seeds_ok": len(ens.successes), "failures": {str(k): v for k, v in ens.failures.items()}}
    if not ens.successes or ens.successes[0].slopes is None:
        doc.update(mean_rates=None, rate_std=None, agent_rates=None,
                   note=f"horizon below {MIN_STEPS} steps: no rate estimate")
        return doc
    mean, std, agents = ens.mean_rates(), ens.rate_std(), ens.agent_rates()
    doc.update(
        mean_rates={lab: float(r) for lab, r in zip(labels, mean)},
        rate_std={lab: float(r) for lab, r in zip(labels, std)},
        agent_rates={lab: [float(v) for v in agents[:, c]] for c, lab in enumerate(labels)},
        window=WINDOW,
    )
    return doc


def _rel_err(emp, theo):
    if theo is None or emp is None or theo == 0:
        return None
    return abs(emp - theo) / abs(theo)


# ---------------------------------------------------------------------------
# commands


def cmd_inspect(cfg: ExperimentConfig, args, out=sys.stdout) -> int:
    run = cfg.run_config()
    net = run.network
    connected = is_strongly_connected(net)
    print(f"agents: {net.n}, states: {', '.join(cfg.states)} (truth {cfg.truth})", file=out)
    print(f"strongly connected: {'yes' if connected else 'no'}", file=out)
    spectral = spectral_data(net, tol=SPECTRAL_TOL)
    print(f"aperiodic: {'yes' if spectral.aperiodic else 'no'} (period {period(net)})", file=out)
    print(f"rho={spectral.rho:.6g}", file=out)
    print(f"alpha={_vec(spectral.alpha)}", file=out)
    print(f"s={_vec(spectral.s_vec)}", file=out)
    print(f"diameter: {spectral.diameter}", file=out)
    ident = is_globally_identifiable(run.signal_model, run.truth)
    print(f"globally identifiable: {'yes' if ident else 'no'}", file=out)
    for s, agents in ident.witnesses.items():
        who = ", ".join(map(str, agents)) if agents else "none"
        print(f"  {cfg.states[s]}: distinguished by agents {who}", file=out)
    lam = lambda_matrix(run.signal_model, run.truth)
    print("lambda (rows: agents, columns: " + ", ".join(cfg.states) + ")", file=out)
    for i, row in enumerate(lam):
        print(f"  {i}: " + "  ".join(f"{v: .6g}" for v in row), file=out)
    return EXIT_OK


def cmd_rates(cfg: ExperimentConfig, args, out=sys.stdout) -> int:
    run = cfg.run_config()
    rec = _rate_record(cfg, run)
    if run.rule.name == "time_varying":
        print("no closed-form rate; run cmd_coeffs", file=out)
        return EXIT_OK
    if rec["rates"] is None:
        raise UsageError(rec["note"])
    print(f"rule: {rec['rule']}", file=out)
    print(f"{'state':>12}  {'rate':>14}", file=out)
    for label, r in rec["rates"].items():
        print(f"{label:>12}  {r:14.8g}", file=out)
    print(f"slowest: {rec['slowest_state']} (rate {rec['overall']:.8g})", file=out)
    if not rec["identifiable"]:
        print("not identifiable: some false state has zero rate", file=out)
    return EXIT_OK


def cmd_coeffs(cfg: ExperimentConfig, args, out=sys.stdout) -> int:
    run = cfg.run_config()
    if run.rule.name != "time_varying":
        raise UsageError(f"coefficient report needs the time_varying rule, not {run.rule.name!r}")
    t_max = cfg.horizon if args.t_max is None else args.t_max
    if t_max < 0:
        raise UsageError("--t-max must be nonnegative")
    spectral = spectral_data(run.network, tol=SPECTRAL_TOL)
    sched = run.rule.schedule.resolve(spectral.rho)
    coeffs = m_coefficients(sched, t_max)
    row = coeffs.row(t_max)
    head = row[:8]
    print(f"schedule: {sched.kind} (c={sched.c:.6g}, p={sched.p:g}), rho={spectral.rho:.6g}", file=out)
    print(f"M_j(t={t_max}, tau=0), j=0..{len(head) - 1}: {_vec(head)}"
          + (" ..." if len(row) > len(head) else ""), file=out)
    if t_max == 0:
        return EXIT_OK
    psi = run.priors.psi(run.truth)
    rep = learning_condition_report(coeffs, spectral, psi)
    print(f"sum of x_t (M_1): {rep.m1_partial:.6g} [{rep.m1_trend}]", file=out)
    print(f"S_d, d={rep.d}: {rep.s_d:.6g} [{rep.s_d_trend}]", file=out)
    print(f"S_j>=0: {rep.s_full:.6g} [{rep.s_full_trend}]", file=out)
    print(f"S_j>=1: {rep.s_j1:.6g} [{rep.s_j1_trend}]", file=out)
    print(f"bias bound: {rep.bias_bound:.6g}", file=out)
    print(f"K1={_short(rep.k1)}, K2={_short(rep.k2)}", file=out)
    print(f"verdict: {rep.verdict}", file=out)
    print(rep.label, file=out)
    return EXIT_OK


def _ensemble(cfg: ExperimentConfig, args, keep: bool):
    run = cfg.run_config()
    run.validate()
    ens = monte_carlo(run, cfg.n_seeds, window=WINDOW, workers=args.workers,
                      check_identity=True, keep_trajectories=keep)
    if ens.failures:
        seed, msg = next(iter(ens.failures.items()))
        raise RuntimeError(f"seed {seed} failed: {msg}")
    return run, ens


def cmd_simulate(cfg: ExperimentConfig, args, out=sys.stdout) -> int:
    dest = output_dir(cfg, args.output_dir)
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        run, ens = _ensemble(cfg, args, keep=True)
        digest = cfg.hash()
        for res in ens.seeds:
            path = dest / f"trajectory_{res.seed}.csv"
            written.append(path)
            with open(path, "w", newline="") as fh:
                fh.write(trajectory_csv(res.trajectory, cfg.states, digest))
        summary = {
            "config_hash": digest,
            "seeds": [r.seed for r in ens.seeds],
            "theoretical": _rate_record(cfg, run),
            "empirical": _empirical_record(cfg, ens),
            "identity_residual": ens.max_identity_residual,
        }
        path = dest / "summary.json"
        written.append(path)
        write_json(path, summary)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    print(f"wrote {len(written) - 1} trajectories and summary.json to {dest}", file=out)
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, args, out=sys.stdout) -> int:
    run, ens = _ensemble(cfg, args, keep=False)
    theo = _rate_record(cfg, run)
    emp = _empirical_record(cfg, ens)
    rows = []
    for s in ens.false_states:
        label = cfg.states[s]
        t_rate = None if theo["rates"] is None else theo["rates"][label]
        e_rate = None if emp["mean_rates"] is None else emp["mean_rates"][label]
        agents = None if emp["agent_rates"] is None else emp["agent_rates"][label]
        rows.append({
            "state": label,
            "theoretical": t_rate,
            "empirical": e_rate,
            "empirical_std": None if emp["rate_std"] is None else emp["rate_std"][label],
            "relative_error": _rel_err(e_rate, t_rate),
            "agents": None if agents is None else [
                {"agent": i, "empirical": a, "relative_error": _rel_err(a, t_rate)}
                for i, a in enumerate(agents)],
        })
    report = {
        "config_hash": cfg.hash(),
        "rule": run.rule.name,
        "n_seeds": cfg.n_seeds,
        "horizon": cfg.horizon,
        "identifiable": theo["identifiable"],
        "identity_residual": ens.max_identity_residual,
        "states": rows,
    }
    print(f"rule: {run.rule.name}, seeds: {cfg.n_seeds}, horizon: {cfg.horizon}", file=out)
    print(f"{'state':>12}  {'theoretical':>12}  {'empirical':>12}  {'rel. error':>10}", file=out)
    for r in rows:
        print(f"{r['state']:>12}  {_short(r['theoretical']):>12}  {_short(r['empirical']):>12}  "
              f"{_short(r['relative_error']):>10}", file=out)
        for a in r["agents"] or []:
            print(f"{'agent ' + str(a['agent']):>12}  {'':>12}  {_short(a['empirical']):>12}  "
                  f"{_short(a['relative_error']):>10}", file=out)
    if not theo["identifiable"]:
        print("not identifiable", file=out)
    if theo["rates"] is None:
        print(f"no closed-form rate: {theo['note']}", file=out)
    dest = output_dir(cfg, args.output_dir)
    dest.mkdir(parents=True, exist_ok=True)
    write_json(dest / "compare.json", report)
    return EXIT_OK


COMMANDS = {
    "inspect": cmd_inspect,
    "simulate": cmd_simulate,
    "rates": cmd_rates,
    "coeffs": cmd_coeffs,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memoryless", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="experiment config (JSON)")
        if name in ("simulate", "compare"):
            p.add_argument("--output-dir", default=None)
            p.add_argument("--workers", type=int, default=1, help="worker processes for seeds")
        if name == "coeffs":
            p.add_argument("--t-max", type=int, default=None, help="defaults to the horizon")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be at least 1")
        return COMMANDS[args.command](cfg, args, out=sys.stdout)
    except (ConfigError, UsageError, IncompatibleRuleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
