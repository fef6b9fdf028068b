"""Command-line interface: estimate, simulate, design, test-exchangeability.

Exit codes: 0 success, 1 usage or configuration error, 2 data validation
error, 3 estimation undefined everywhere.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .assignments import EXCHANGEABLE, SATURATED
from .dataset import GroupedDataset
from .design import compare_designs
from .errors import (
    ConfigError,
    DataValidationError,
    MissingOrderingError,
    SpilloverError,
)
from .estimators import (
    EffectEstimate,
    build_cell_table,
    difference_in_means,
    direct_and_spillover,
    lim_fit,
    partial_population_effect,
    pooled_spillover,
    stratify_and_estimate,
)
from .harness import StudyConfig, run_study
from .inference import (
    BootstrapSpec,
    CellContrast,
    exchangeability_test,
    normal_ci,
    wild_bootstrap_ci,
)
from .io import fmt, load_dataset, text_table, write_coverage_csv, write_json
from .mechanisms import GRAMMAR, parse_mechanism
from .outcomes import model_from_config

USAGE_EXIT, DATA_EXIT, UNDEFINED_EXIT = 1, 2, 3
POLICIES = {"separate": "separate", "size-fe": "size_fixed_effects", "proportion": "proportion"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master random seed")
    common.add_argument("--out", type=Path, default=None, help="directory for result files")

    parser = _Parser(prog="spillover", description=__doc__)
    parser.add_argument("--version", action="version", version=f"spillover {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser(
        "estimate", parents=[common], help="estimate direct and spillover effects from a CSV"
    )
    est.add_argument("data", type=Path, help="dataset CSV path")
    est.add_argument("--mode", choices=(EXCHANGEABLE, SATURATED), default=EXCHANGEABLE)
    est.add_argument("--policy", choices=tuple(POLICIES), default="separate",
                     help="strategy for mixed group sizes")
    est.add_argument("--bootstrap", type=int, default=None, metavar="B",
                     help="add wild-bootstrap intervals with B replications")
    est.add_argument("--level", type=float, default=0.95)
    est.add_argument("--pp", action="store_true",
                     help="require the partial-population contrast (needs the saturation column)")

    sim = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo study from a config")
    sim.add_argument("config", type=Path, help="JSON study config (or bundled preset name)")

    des = sub.add_parser("design", parents=[common], help="compare candidate randomization designs")
    des.add_argument("mechanisms", nargs="+", metavar="MECH", help=f"designs: {GRAMMAR}")
    des.add_argument("--n", type=int, required=True, help="neighbors per unit (group size - 1)")
    des.add_argument("--G", type=int, required=True, dest="n_groups", help="number of groups")
    des.add_argument("--mode", choices=(EXCHANGEABLE, SATURATED), default=EXCHANGEABLE)

    tex = sub.add_parser(
        "test-exchangeability", parents=[common],
        help="test whether outcomes depend on neighbors only through their count",
    )
    tex.add_argument("data", type=Path, help="dataset CSV path (needs neighbor_rank)")
    return parser


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def _estimate_row(name: str, est: EffectEstimate, level: float, boot=None):
    ci = normal_ci(est, level)
    row = [name, est.value, est.se, ci.lower if ci.defined else None,
           ci.upper if ci.defined else None]
    if boot is not None:
        row += [boot.interval.lower if boot.defined else None,
                boot.interval.upper if boot.defined else None]
    if not est.defined and est.undefined_cells:
        row.append("undefined: needs N>1 in " + ",".join(str(a) for a in est.undefined_cells))
    else:
        row.append("")
    return row


def _stratum_report(ds: GroupedDataset, args, lines: list[str], collected: list[EffectEstimate]) -> dict:
    n = ds.single_size()
    result: dict = {"n": n, "n_groups": ds.n_groups}
    table = build_cell_table(ds, args.mode)
    effects = direct_and_spillover(table)

    lines.append(f"--- groups of size {n + 1} (n = {n} neighbors, G = {ds.n_groups}) ---")
    lines.append("")
    lines.append(f"Cell table ({table.mode} mode)")
    cell_rows = [
        [str(a), table.count(a), table.mean(a), table.variance(a)]
        for a in table.assignments
    ]
    lines.append(text_table(["assignment", "count", "mean", "variance"], cell_rows))
    result["cells"] = {
        str(a): {"count": table.count(a), "mean": table.mean(a), "variance": table.variance(a)}
        for a in table.assignments
    }

    boot_spec = None
    if args.bootstrap is not None:
        boot_spec = BootstrapSpec(B=args.bootstrap, seed=args.seed or 0)

    def boot_for(cells):
        if boot_spec is None:
            return None
        contrast = CellContrast(cells=cells, coefficients=(1.0, -1.0))
        return wild_bootstrap_ci(table, contrast, boot_spec, level=args.level)

    headers = ["effect", "estimate", "se", "ci_lower", "ci_upper"]
    if boot_spec is not None:
        headers += ["boot_lower", "boot_upper"]
    headers.append("note")
    baseline_row = _estimate_row("baseline", effects.baseline, args.level)
    if boot_spec is not None:
        baseline_row = baseline_row[:5] + [None, None] + baseline_row[5:]
    rows = [baseline_row]  # the baseline is a level, not an effect; not "collected"
    for key, est in effects.direct.items():
        collected.append(est)
        rows.append(_estimate_row(f"direct[{key}]", est, args.level,
                                  boot_for(est.cells) if est.defined else None))
    for key, est in effects.spillover.items():
        collected.append(est)
        name = f"spillover[{key[0]},{key[1]}]"
        rows.append(_estimate_row(name, est, args.level,
                                  boot_for(est.cells) if est.defined else None))
    lines.append("")
    lines.append("Effects (differences of cell means)")
    lines.append(text_table(headers, rows))
    result["effects"] = {r[0]: {"estimate": r[1], "se": r[2]} for r in rows}

    if args.mode == EXCHANGEABLE:
        pooled = pooled_spillover(table, d=0)
        lines.append("")
        lines.append("Pooled spillover on controls (any treated neighbors vs none)")
        pooled_rows = [
            [",".join(map(str, bucket)), est.value, est.se]
            for bucket, est in pooled.items()
        ]
        lines.append(text_table(["bucket", "estimate", "se"], pooled_rows))
        for est in pooled.values():
            collected.append(est)
        result["pooled"] = {
            ",".join(map(str, b)): {"estimate": e.value, "se": e.se} for b, e in pooled.items()
        }

        reg_rows = []
        dim = difference_in_means(ds)
        collected.append(dim)
        reg_rows.append(["difference_in_means", "treatment", dim.value, dim.se])
        try:
            for interacted in (False, True):
                fit = lim_fit(ds, interacted=interacted)
                label = "lim_interacted" if interacted else "lim"
                for term, coef in fit.coef_map().items():
                    reg_rows.append([label, term, coef, fit.se_map()[term]])
        except SpilloverError as exc:
            reg_rows.append(["lim", "error", None, None])
            lines.append(f"note: linear-in-means fit unavailable: {exc}")
        lines.append("")
        lines.append("Comparison regressions (group-clustered standard errors)")
        lines.append(text_table(["estimator", "term", "estimate", "se"], reg_rows))
        result["regressions"] = [
            {"estimator": r[0], "term": r[1], "estimate": r[2], "se": r[3]} for r in reg_rows
        ]

    if ds.saturation is not None:
        pp = partial_population_effect(ds)
        collected.append(pp)
        lines.append("")
        lines.append("Partial-population contrast (controls in treated groups vs pure controls)")
        lines.append(text_table(["estimate", "se", "n_spillover", "n_pure_control"],
                                [[pp.value, pp.se, pp.counts[0], pp.counts[1]]]))
        result["partial_population"] = {"estimate": pp.value, "se": pp.se}

    if ds.neighbor_rank is not None:
        sat_table = table if args.mode == SATURATED else build_cell_table(ds, SATURATED)
        if args.mode == EXCHANGEABLE:
            lines.append("")
            lines.append("Cell table (saturated mode, neighbors in rank order)")
            sat_rows = [
                [str(a), sat_table.count(a), sat_table.mean(a), sat_table.variance(a)]
                for a in sat_table.assignments
                if sat_table.count(a) > 0
            ]
            lines.append(text_table(["assignment", "count", "mean", "variance"], sat_rows))
            result["saturated_cells"] = {
                str(a): {"count": sat_table.count(a), "mean": sat_table.mean(a)}
                for a in sat_table.assignments
                if sat_table.count(a) > 0
            }
        test = exchangeability_test(sat_table)
        lines.append("")
        if test.testable:
            lines.append(
                f"Exchangeability test: statistic {fmt(test.statistic)} on {test.df} df, "
                f"p-value {fmt(test.p_value)}"
            )
        else:
            lines.append("Exchangeability test: not testable (no two comparable vector cells)")
        result["exchangeability"] = {
            "testable": test.testable,
            "statistic": test.statistic,
            "df": test.df,
            "p_value": test.p_value,
        }
    return result


def _cmd_estimate(args) -> int:
    ds = load_dataset(args.data)
    if args.pp and ds.saturation is None:
        raise DataValidationError(
            "saturation column required for the partial-population contrast"
        )
    lines: list[str] = []
    collected: list[EffectEstimate] = []
    summary = ds.size_summary()
    lines.append(f"Dataset: {ds.n_groups} groups, {ds.n_units} units")
    lines.append("Group sizes: " + ", ".join(f"{size} units x {count} groups"
                                             for size, count in sorted(summary.items())))
    lines.append("")

    policy = POLICIES[args.policy]
    result: dict = {"sizes": {str(k): v for k, v in summary.items()}, "strata": []}

    if len(summary) == 1 or policy == "separate":
        if len(summary) == 1 and policy != "separate":
            lines.append(f"note: single group size; --policy {args.policy} has no effect")
            lines.append("")
        for size in sorted(summary):
            if summary[size] < 2 and len(summary) > 1:
                lines.append(f"note: size-{size} stratum has {summary[size]} group(s); skipped")
                continue
            sub = ds.subset_by_size(size) if len(summary) > 1 else ds
            result["strata"].append(_stratum_report(sub, args, lines, collected))
            lines.append("")
    elif policy == "size_fixed_effects":
        fit = stratify_and_estimate(ds, policy)
        lines.append("Shared effects with group-size intercepts")
        rows = [[name, coef, fit.se_map()[name]] for name, coef in fit.coef_map().items()]
        lines.append(text_table(["term", "estimate", "se"], rows))
        result["size_fixed_effects"] = {"coef": fit.coef_map(), "se": fit.se_map()}
        collected.append(EffectEstimate(0.0, 0.0))  # a fit implies defined output
    else:
        pooled = stratify_and_estimate(ds, policy)
        lines.append("Cells by own treatment and fraction of treated peers")
        rows = [
            [f"({d},{frac})", cell.count, cell.mean, cell.variance]
            for (d, frac), cell in pooled.cells.items()
        ]
        lines.append(text_table(["cell", "count", "mean", "variance"], rows))
        lines.append("")
        lines.append("Spillover at each treated-peer fraction (vs none)")
        rows = [
            [f"({d},{frac})", est.value, est.se]
            for (d, frac), est in pooled.spillover.items()
        ]
        lines.append(text_table(["cell", "estimate", "se"], rows))
        for est in pooled.spillover.values():
            collected.append(est)
        result["proportion"] = {
            f"{d},{frac}": {"estimate": e.value, "se": e.se}
            for (d, frac), e in pooled.spillover.items()
        }

    print("\n".join(lines))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        write_json(result, args.out / "estimate.json")
        print(f"wrote {args.out / 'estimate.json'}")
    if collected and not any(e.defined for e in collected):
        print("error: every requested effect is undefined on this dataset", file=sys.stderr)
        return UNDEFINED_EXIT
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _resolve_config_path(path: Path) -> Path:
    if path.exists():
        return path
    bundled = Path(__file__).parent / "presets" / path.name
    if bundled.exists():
        return bundled
    raise ConfigError(f"config file {path} not found (and no bundled preset of that name)")


def _load_study_configs(path: Path, seed_override=None):
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigError("study config must be a JSON object")
    try:
        n_groups = int(raw.get("G", raw.get("n_groups")))
    except (TypeError, ValueError):
        raise ConfigError("config needs an integer 'G' (number of groups)") from None
    n_values = raw.get("n")
    if n_values is None:
        raise ConfigError("config needs 'n' (neighbors per unit; integer or list)")
    if isinstance(n_values, (int, float)):
        n_values = [int(n_values)]
    else:
        n_values = [int(v) for v in n_values]
    mech_tokens = raw.get("mechanisms", raw.get("mechanism"))
    if mech_tokens is None:
        raise ConfigError("config needs 'mechanisms' (list of design strings)")
    if isinstance(mech_tokens, str):
        mech_tokens = [mech_tokens]
    mechanisms = [parse_mechanism(tok) for tok in mech_tokens]
    model = model_from_config(raw.get("model", {"kind": "constant_spillover"}))
    # full-scale default; the bundled presets use the desk-scale 1000/500
    replications = int(raw.get("replications", 10000))
    seed = int(raw.get("seed", 0)) if seed_override is None else seed_override
    ci_kinds = tuple(raw.get("ci_kinds", ["normal", "bootstrap"]))
    bootstrap = None
    if "bootstrap" in ci_kinds:
        spec = raw.get("bootstrap", {})
        bootstrap = BootstrapSpec(
            B=int(spec.get("B", 2000)), seed=0, cluster=bool(spec.get("cluster", False))
        )
    base = StudyConfig(
        n_groups=n_groups,
        n=n_values[0],
        mechanism=mechanisms[0],
        model=model,
        replications=replications,
        seed=seed,
        bootstrap=bootstrap,
        bootstrap_method=str(raw.get("bootstrap_method", "percentile-t")),
        level=float(raw.get("level", 0.95)),
    )
    return base, n_values, mechanisms, ci_kinds


def _cmd_simulate(args) -> int:
    path = _resolve_config_path(args.config)
    base, n_values, mechanisms, ci_kinds = _load_study_configs(path, args.seed)
    summaries = []
    records = []
    for mech in mechanisms:
        for n in n_values:
            cfg = replace(
                base,
                n=n,
                mechanism=mech,
                contrast=None,  # re-targeted to this n by StudyConfig
            )
            summary = run_study(cfg)
            summaries.append(summary)
            for kind in ci_kinds:
                coverage = (
                    summary.coverage_normal if kind == "normal" else summary.coverage_bootstrap
                )
                records.append(
                    {"n": n, "mechanism": mech.spec_string(), "ci_kind": kind, "coverage": coverage}
                )
            print(
                f"{mech.spec_string()} n={n}: prop_undefined={fmt(summary.prop_undefined)} "
                f"bias={fmt(summary.bias)} var={fmt(summary.variance)} "
                f"cov_normal={fmt(summary.coverage_normal)} cov_boot={fmt(summary.coverage_bootstrap)}"
            )
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    write_json([s.to_dict() for s in summaries], out / "study.json")
    write_coverage_csv(records, out / "coverage.csv")
    print(f"wrote {out / 'study.json'} and {out / 'coverage.csv'}")
    return 0


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------

def _cmd_design(args) -> int:
    mechanisms = [parse_mechanism(tok) for tok in args.mechanisms]
    report = compare_designs(mechanisms, args.n, args.n_groups, args.mode)
    print(
        f"Design comparison: n = {report.n} neighbors, G = {report.n_groups} groups, "
        f"{report.mode} cells"
    )
    print(
        f"size/log(G) = {fmt(report.size_to_log_groups)}; "
        f"log(size)/log(G) = {fmt(report.log_size_to_log_groups)}"
    )
    rows = []
    for rank, entry in enumerate(report.entries, start=1):
        rows.append(
            [
                rank,
                entry.mechanism,
                entry.pi_min,
                entry.min_expected_cell,
                entry.normality_condition,
                len(entry.unidentified),
            ]
        )
    print(text_table(
        ["rank", "mechanism", "pi_min", "min_expected_cell", "normality_condition",
         "n_unidentified"],
        rows,
    ))
    for entry in report.entries:
        if entry.unidentified:
            cells = ",".join(str(a) for a in entry.unidentified)
            print(f"warning: {entry.mechanism} cannot identify cells {cells}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        payload = {
            "n": report.n,
            "n_groups": report.n_groups,
            "mode": report.mode,
            "size_to_log_groups": report.size_to_log_groups,
            "log_size_to_log_groups": report.log_size_to_log_groups,
            "entries": [
                {
                    "mechanism": e.mechanism,
                    "pi_min": e.pi_min,
                    "normality_condition": e.normality_condition,
                    "min_expected_cell": e.min_expected_cell,
                    "unidentified": [str(a) for a in e.unidentified],
                    "min_assignments": [str(a) for a in e.min_assignments],
                }
                for e in report.entries
            ],
        }
        write_json(payload, args.out / "design.json")
        print(f"wrote {args.out / 'design.json'}")
    return 0


# ---------------------------------------------------------------------------
# test-exchangeability
# ---------------------------------------------------------------------------

def _cmd_test_exchangeability(args) -> int:
    ds = load_dataset(args.data)
    if ds.neighbor_rank is None:
        raise MissingOrderingError("the dataset needs a neighbor_rank column for this test")
    any_testable = False
    for size in sorted(ds.size_summary()):
        sub = ds.subset_by_size(size) if len(ds.size_summary()) > 1 else ds
        table = build_cell_table(sub, SATURATED)
        test = exchangeability_test(table)
        print(f"--- groups of size {size} ---")
        if not test.testable:
            print("not testable: no (own status, count) stratum has two usable vector cells")
            continue
        any_testable = True
        print(
            f"Wald statistic {fmt(test.statistic)} on {test.df} df, p-value {fmt(test.p_value)}"
        )
        rows = [
            [str(c.cell_a), str(c.cell_b), c.difference, c.se, c.z, c.p_value]
            for c in test.contrasts
        ]
        print(text_table(["cell_a", "cell_b", "difference", "se", "z", "p_value"], rows))
    if not any_testable:
        print("overall: not testable")
    return 0


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "design":
            return _cmd_design(args)
        return _cmd_test_exchangeability(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (DataValidationError, MissingOrderingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except SpilloverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
