"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 convergence failure, 3 missing
prerequisite artifact.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridError, OptimizerError, PowerFlowError
from .grid_model import check_profiles, load_network, load_profiles
from .objective import ObjectiveParams, alpha_eq
from .optimizer import GaSettings, run_experiment
from .screening import (
    classify,
    prototype_report,
    read_screening_csv,
    sample_configuration,
    screen_all,
    write_prototypes,
    write_samples_csv,
    write_screening_csv,
)
from .topology import admissible_configurations, reduce_graph, save_configurations

log = logging.getLogger("gridreconf")

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_MISSING = 0, 1, 2, 3
SUMMARY_METRICS = ("generations", "delta_f_pct", "delta_p_loss_w", "best_p_loss_w")


class MissingArtifact(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    network: str
    profiles: str | None = None
    hour: str | None = None
    out: str = "out"
    seeds: list[int] = field(default_factory=list)
    overrides: dict = field(default_factory=dict)

    def check(self):
        for p in (self.network, self.profiles):
            if p is not None and not Path(p).is_file():
                raise GridError(f"no such file: {p}")
        if self.command == "optimize" and not self.seeds:
            raise GridError("seed list is empty")


def parse_seeds(text: str) -> list[int]:
    """``"0-9"``, ``"1,4,7"`` or a mix of both."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, part)
            seeds.extend(range(int(a), int(b) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _params(args) -> ObjectiveParams:
    return ObjectiveParams(alpha=args.alpha, beta=args.beta, kappa_v=args.kappa_v, kappa_i=args.kappa_i)


def _setup(args, command):
    manifest = RunManifest(
        command=command, network=args.network, profiles=getattr(args, "profiles", None),
        hour=getattr(args, "hour", None), out=args.out,
        seeds=parse_seeds(args.seeds) if getattr(args, "seeds", None) else [],
        overrides={k: v for k, v in sorted(vars(args).items())
                   if k not in ("func", "network", "profiles", "hour", "out", "seeds")},
    )
    manifest.check()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_network(args.network)
    g = reduce_graph(model)
    configs = admissible_configurations(g)
    profiles = None
    if manifest.profiles is not None:
        profiles = load_profiles(manifest.profiles, manifest.hour, model)
        check_profiles(model, profiles)
    _write_json(out / f"manifest_{command}.json", asdict(manifest))
    return manifest, out, model, g, configs, profiles


def cmd_enumerate(args) -> int:
    _, out, _, g, configs, _ = _setup(args, "enumerate")
    save_configurations(configs, out / "configurations.json")
    print(f"{len(configs)} admissible configurations over {g.n_edges} virtual breakers -> "
          f"{out / 'configurations.json'}")
    return EXIT_OK


def cmd_screen(args) -> int:
    _, out, model, g, configs, profiles = _setup(args, "screen")
    params = _params(args)
    save_configurations(configs, out / "configurations.json")
    part, reports = screen_all(model, g, configs, profiles, params, samples=args.samples, seed=args.seed,
                               gamma_tol=args.gamma_tol, ccc_fraction=args.ccc_fraction)
    write_screening_csv(reports, out / "screening.csv")
    protos = prototype_report(part, configs, model, g)
    write_prototypes(protos, out / "prototypes.json")
    print(f"samples per configuration: {args.samples}")
    print(f"CCC {len(part.ccc)}  NCCC {len(part.nccc)}  AMBIGUOUS {len(part.ambiguous)}")
    for p in protos:
        print(f"{p['class']} prototype: #{p['index']} {p['bits']} max depth {p['feeder_stats']['max_depth']}")
    if not args.no_plots:
        from .plotting import plot_screening
        plot_screening(reports, out / "screening.png")
    return EXIT_OK


def cmd_sample(args) -> int:
    _, out, model, g, configs, profiles = _setup(args, "sample")
    if not 1 <= args.conf <= len(configs):
        raise GridError(f"--conf must lie in 1..{len(configs)}")
    params = _params(args)
    rep = sample_configuration(model, g, configs, args.conf, profiles, params, args.samples, args.seed)
    rep.klass = classify(rep, args.gamma_tol, args.ccc_fraction)
    if rep.excluded == rep.samples:
        raise PowerFlowError(f"every power flow diverged for configuration {args.conf}")
    write_samples_csv(rep, out / f"samples_conf{args.conf}.csv")
    a_eq = (alpha_eq(params.alpha, rep.j_max, rep.gamma_max)
            if rep.j_max > 0 and rep.gamma_max > 0 else float("nan"))
    summary = {"n_conf": args.conf, "class": rep.klass, "samples": rep.samples, "excluded": rep.excluded,
               "mean_f": rep.mean, "std_f": rep.std, "eta": rep.eta, "j_max": rep.j_max,
               "gamma_max": rep.gamma_max, "alpha_eq": a_eq,
               "by_tap": {str(k): v for k, v in rep.by_tap.items()}}
    _write_json(out / f"samples_conf{args.conf}.json", summary)
    print(json.dumps({k: summary[k] for k in ("n_conf", "class", "mean_f", "eta", "j_max", "gamma_max", "alpha_eq")}))
    if not args.no_plots:
        from .plotting import plot_samples
        plot_samples(rep, out / f"samples_conf{args.conf}.png")
    return EXIT_OK


def _history_csv(path: Path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "best_f", "mean_f", "best_ploss_w"])
        for h in history:
            w.writerow([h["generation"], repr(h["best_f"]), repr(h["mean_f"]), repr(h["best_ploss_w"])])


def _collect(out: Path, experiment: int) -> list[dict]:
    return [json.loads(p.read_text(encoding="utf-8"))
            for p in sorted((out / f"exp{experiment}").glob("run_report_seed*.json"),
                            key=lambda p: int(p.stem.split("seed")[1]))]


def summarize(out: Path) -> dict:
    """Mean and std of every per-seed indicator, and Welch's t-test on the loss reduction."""
    from scipy import stats

    table = {}
    for e in (1, 2):
        reps = _collect(out, e)
        if not reps:
            continue
        table[e] = {}
        for m in SUMMARY_METRICS:
            vals = np.array([r[m] for r in reps], dtype=float)
            table[e][m] = {"mean": float(np.mean(vals)),
                           "std": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                           "n": int(len(vals))}
    result = {"experiments": {str(k): v for k, v in table.items()}}
    if 1 in table and 2 in table:
        a = [r["delta_p_loss_w"] for r in _collect(out, 1)]
        b = [r["delta_p_loss_w"] for r in _collect(out, 2)]
        t = stats.ttest_ind(a, b, equal_var=False)
        result["welch_delta_p_loss"] = {"t": float(t.statistic), "p_value": float(t.pvalue)}
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "experiment", "mean", "std", "n"])
        for e, rows in table.items():
            for m in SUMMARY_METRICS:
                w.writerow([m, e, repr(rows[m]["mean"]), repr(rows[m]["std"]), rows[m]["n"]])
    _write_json(out / "summary.json", result)
    return result


def _print_table(summary: dict) -> None:
    exps = summary["experiments"]
    head = f"{'':>16}" + "".join(f"{'Experiment ' + e:>26}" for e in exps)
    print(head)
    for m in SUMMARY_METRICS:
        print(f"{m:>16}" + "".join(f"{exps[e][m]['mean']:>14.4f} ± {exps[e][m]['std']:<9.4f}" for e in exps))
    if "welch_delta_p_loss" in summary:
        print(f"Welch t-test on delta_p_loss_w: p = {summary['welch_delta_p_loss']['p_value']:.3g}")


def cmd_optimize(args) -> int:
    manifest, out, model, g, configs, profiles = _setup(args, "optimize")
    params = _params(args)
    experiments = (1, 2) if args.experiment == "both" else (int(args.experiment),)
    ccc = None
    if 2 in experiments:
        screening = Path(args.screening) if args.screening else out / "screening.csv"
        if not screening.is_file():
            raise MissingArtifact(f"experiment 2 needs {screening}; run `gridreconf screen` first")
        part, rows = read_screening_csv(screening)
        if len(rows) != len(configs):
            raise GridError(f"{screening} covers {len(rows)} configurations, network has {len(configs)}")
        ccc = sorted(part.ccc)
        if not ccc:
            raise GridError("screening found no CCC configuration; experiment 2 is empty")
    for e in experiments:
        edir = out / f"exp{e}"
        edir.mkdir(exist_ok=True)
        reports = []
        for seed in manifest.seeds:
            settings = GaSettings(population=args.population, max_generations=args.max_gen, seed=seed)
            result, _ = run_experiment(model, g, configs, profiles, params, settings, e, ccc)
            rep = result.report(settings, e)
            _write_json(edir / f"run_report_seed{seed}.json", rep)
            _history_csv(edir / f"history_seed{seed}.csv", result.history)
            reports.append(rep)
            log.info("experiment %d seed %d: F %.6g, P_loss %.3f kW", e, seed, result.best_f, result.best_p_loss)
        if not args.no_plots:
            from .plotting import plot_history
            plot_history(reports, out / f"history_exp{e}.png")
    _print_table(summarize(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridreconf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, profiles=True):
        sp.add_argument("--network", required=True, help="network.json")
        sp.add_argument("--out", default="out", help="output directory")
        if profiles:
            sp.add_argument("--profiles", required=True, help="profiles.csv")
            sp.add_argument("--hour", default="2014-01-01T13:00", help="profile timestamp")
            sp.add_argument("--alpha", type=float, default=0.9)
            sp.add_argument("--beta", type=float, default=0.2)
            sp.add_argument("--kappa-v", type=float, default=100.0)
            sp.add_argument("--kappa-i", type=float, default=100.0)
            sp.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    sp = sub.add_parser("enumerate", help="enumerate and order admissible configurations")
    common(sp, profiles=False)
    sp.set_defaults(func=cmd_enumerate)

    for name, func, helptext in (("screen", cmd_screen, "classify every configuration as CCC/NCCC"),
                                 ("sample", cmd_sample, "random sampling of one configuration")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--samples", type=int, default=2000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--gamma-tol", type=float, default=1e-9)
        sp.add_argument("--ccc-fraction", type=float, default=0.05)
        if name == "sample":
            sp.add_argument("--conf", type=int, required=True, help="configuration index")
        sp.set_defaults(func=func)

    sp = sub.add_parser("optimize", help="GA runs of Experiment 1 and/or 2")
    common(sp)
    sp.add_argument("--experiment", choices=("1", "2", "both"), default="1")
    sp.add_argument("--seeds", default="0-9")
    sp.add_argument("--population", type=int, default=20)
    sp.add_argument("--max-gen", type=int, default=100)
    sp.add_argument("--screening", default=None, help="screening.csv (default: <out>/screening.csv)")
    sp.set_defaults(func=cmd_optimize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (OptimizerError, PowerFlowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (GridError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
