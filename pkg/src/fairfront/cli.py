"""Command-line entry point: estimate, frontier, train, sweep, report.

Every command writes a run manifest with the fully resolved configuration;
feeding that manifest back through --config reproduces the run's outputs
byte-identically (the manifest itself differs only in its wall-clock stamp).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, TabularDataset, load_csv, load_schema
from .dist import DistributionError, JointPMF3, entropy, mutual_information
from .estimators import (
    BatchError,
    BiasModel,
    ConcentrationParams,
    concentration_bound,
    miller_madow_correct,
    plugin_cmi_hard,
    read_hard_batch_csv,
    read_soft_batch_csv,
    soft_cmi,
    SampleBatch,
)
from .frontier import (
    EnumerationCapError,
    budget_check,
    det_frontier,
    enumerate_deterministic_set,
    necessity_analysis,
    predictor_from_index,
    upper_concave_envelope,
)
from .metrics import MetricError, quantile_bin
from .neural import save_checkpoint
from .plotting import Series, svg_plot
from .trainer import (
    DEFAULT_LAMBDA_GRID,
    TrainConfig,
    TrainingDiverged,
    aggregate_rows,
    read_results_csv,
    sweep,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_manifest(out_dir: Path, command: str, config: dict, extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "config": config,
        "artifact_version": __version__,
        "wall_clock": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        doc.update(extra)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _apply_config_file(args: argparse.Namespace) -> None:
    """Fill flag values from a JSON config; explicit flags keep precedence.

    Accepts either a flat config document or a run manifest (whose resolved
    flags live under the "config" key).
    """
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config file: {exc}") from exc
    if "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]
    sub = args._sub
    for key, value in doc.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            continue
        if getattr(args, key) == sub.get_default(key):
            setattr(args, key, value)


def _resolved(args: argparse.Namespace, skip=("config", "func", "command", "_sub")) -> dict:
    out = {}
    for key, value in vars(args).items():
        if key in skip or callable(value):
            continue
        if isinstance(value, Path):
            value = str(value)
        if isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt_nats(x: float) -> str:
    return f"{x:.6f} nats ({x / math.log(2):.6f} bits)"


# --- estimate -----------------------------------------------------------------

def cmd_estimate(args, parser) -> int:
    path = Path(args.input)
    if not path.exists():
        raise DataError(f"input file {path} does not exist")
    with open(path) as fh:
        header = fh.readline().strip().split(",")

    report: dict = {"input": str(path)}
    if header == ["score", "y", "z"]:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if rows.size == 0:
            raise BatchError("batch file has a header but no samples")
        cats, bins_used, _ = quantile_bin(rows[:, 0], args.bins)
        batch = SampleBatch(u=cats, y=rows[:, 1].astype(np.int64), z=rows[:, 2].astype(np.int64))
        report["kind"] = f"score (quantile-binned into {bins_used})"
        raw = plugin_cmi_hard(batch)
        min_cell = batch.min_cell_frequency()
    elif args.soft:
        batch = read_soft_batch_csv(path)
        report["kind"] = "soft"
        raw = soft_cmi(batch)
        min_cell = None
    else:
        batch = read_hard_batch_csv(path)
        report["kind"] = "hard"
        raw = plugin_cmi_hard(batch)
        min_cell = batch.min_cell_frequency()
    model = BiasModel(batch.card_u, batch.card_y, batch.card_z, len(batch))
    report.update(k_u=batch.card_u, k_y=batch.card_y, k_z=batch.card_z)
    n = len(batch)

    corrected = miller_madow_correct(raw, model)
    report.update(samples=n, raw_cmi=raw, corrected_cmi=corrected)
    report["dependence_bound"] = math.sqrt(2.0 * raw)
    if min_cell is not None:
        report["empirical_min_cell_frequency"] = min_cell

    print(f"samples: {n}  (K_U={report['k_u']}, K_Y={report['k_y']}, K_Z={report['k_z']})")
    print(f"raw CMI:            {_fmt_nats(raw)}")
    if args.correct_bias:
        print(f"bias-corrected CMI: {_fmt_nats(corrected)}")
    print(f"sqrt(2*CMI) dependence bound: {report['dependence_bound']:.6f}")
    if min_cell is not None:
        print(f"empirical min cell frequency: {min_cell:.6g}")
    params = ConcentrationParams(
        k_u=report["k_u"],
        k_y=report["k_y"],
        k_z=report["k_z"],
        p_min=min(args.qmin, 1.0 / report["k_y"]),
        q_min=args.qmin,
        delta=args.delta,
        batch_size=n,
    )
    radius = concentration_bound(params)
    report["concentration_bound"] = radius
    report["delta"] = args.delta
    report["q_min"] = args.qmin
    print(f"concentration radius (delta={args.delta}, q_min={args.qmin}): {radius:.6f} nats")

    if args.out:
        out = _out_dir(args)
        with open(out / "estimate.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest(out, "estimate", _resolved(args))
    return EXIT_OK


# --- frontier -----------------------------------------------------------------

def cmd_frontier(args, parser) -> int:
    path = Path(args.joint)
    if not path.exists():
        raise DataError(f"joint file {path} does not exist")
    try:
        joint = JointPMF3.from_json(path.read_text())
    except DistributionError:
        raise
    out = _out_dir(args)

    points = enumerate_deterministic_set(joint, args.card_out)
    envelope = upper_concave_envelope(points)
    v_max = max(p.v for p in points)
    grid = np.linspace(0.0, max(v_max, 1e-12), args.grid_points)
    det = det_frontier(points, grid)

    def write_points(name, pts):
        with open(out / name, "w") as fh:
            fh.write("v_nats,u_nats,provenance\n")
            for p in pts:
                fh.write(f"{p.v!r},{p.u!r},{p.provenance}\n")

    write_points("sdet.csv", sorted(points, key=lambda p: (p.v, p.u)))
    write_points("envelope.csv", envelope.vertices)
    with open(out / "det_frontier.csv", "w") as fh:
        fh.write("v_nats,u_star_det_nats\n")
        for v, u in det:
            fh.write(f"{v!r},{u!r}\n")

    worst_identity = 0.0
    budget_ok = True
    for p in points:
        pred = predictor_from_index(joint, args.card_out, int(p.provenance[1:]))
        rep = budget_check(joint, pred)
        worst_identity = max(worst_identity, rep.identity_deviation)
        budget_ok = budget_ok and rep.identity_ok and rep.bound_ok
    necessity = necessity_analysis(joint, args.card_out)

    pair_yz = joint.pair(1, 2).probs
    h_z_given_y = entropy(pair_yz.ravel()) - entropy(pair_yz.sum(axis=1))
    report = {
        "n_points": len(points),
        "card_out": args.card_out,
        "budget_identity_ok": budget_ok,
        "budget_identity_max_deviation": worst_identity,
        "h_z_given_y": h_z_given_y,
        "i_xz_y": mutual_information(joint.pair_grouped(1)),
        "necessity": {
            "u_x_star": necessity.u_x_star,
            "u_xz_star": necessity.u_xz_star,
            "max_fair_utility": necessity.max_fair_utility,
            "x_indep_z_given_y": necessity.x_indep_z_given_y,
            "z_informative_given_x": necessity.z_informative_given_x,
            "degenerate_z_given_y": necessity.degenerate_z_given_y,
            "assumption_holds": necessity.assumption_holds,
            "fairness_limit_ok": necessity.fairness_limit_ok,
            "strict_tradeoff_ok": necessity.strict_tradeoff_ok,
            "witnesses": necessity.witnesses,
        },
    }
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if args.svg:
        svg_plot(
            out / "information_plane.svg",
            [
                Series(
                    "deterministic predictors",
                    np.array([p.v for p in points]),
                    np.array([p.u for p in points]),
                    mode="points",
                ),
                Series(
                    "randomized envelope",
                    np.array([p.v for p in envelope.vertices]),
                    np.array([p.u for p in envelope.vertices]),
                    mode="line+points",
                ),
            ],
            title="information plane",
            xlabel="separation violation v (nats)",
            ylabel="utility u (nats)",
        )
    _write_manifest(out, "frontier", _resolved(args))
    print(
        f"{len(points)} distinct deterministic points; envelope has "
        f"{len(envelope.vertices)} vertices; fair limit u = {necessity.max_fair_utility:.6f} nats"
    )
    return EXIT_OK


# --- train / sweep ------------------------------------------------------------

def _load_dataset(args) -> TabularDataset:
    data = Path(args.data)
    if not data.exists():
        raise DataError(f"dataset file {data} does not exist")
    if args.schema:
        return load_csv(data, load_schema(args.schema))
    return TabularDataset.from_csv(data)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lam=getattr(args, "lam", 0.0),
        eps=args.eps,
        seed=args.seed,
        sensitive_input=args.sensitive_input == "on",
        lr=args.lr,
        hidden=tuple(args.hidden),
    )


def cmd_train(args, parser) -> int:
    dataset = _load_dataset(args)
    config = _train_config(args)
    result = train(
        config, dataset.features, dataset.y, dataset.z, dataset.card_y, dataset.card_z
    )
    out = _out_dir(args)
    save_checkpoint(result.model, out / "checkpoint.json", extra={"lam": config.lam})
    with open(out / "curves.csv", "w") as fh:
        fh.write("epoch,task_loss,cmi\n")
        for e, (t, c) in enumerate(zip(result.task_curve, result.cmi_curve)):
            fh.write(f"{e},{t!r},{c!r}\n")
    _write_manifest(
        out, "train", _resolved(args), extra={"dataset_hash": dataset.content_hash()}
    )
    final_t = result.task_curve[-1] if result.task_curve else float("nan")
    final_c = result.cmi_curve[-1] if result.cmi_curve else float("nan")
    print(f"trained {config.epochs} epochs; final batch task={final_t:.4f} cmi={final_c:.4f}")
    return EXIT_OK


def cmd_sweep(args, parser) -> int:
    dataset = _load_dataset(args)
    config = _train_config(args)
    grid = [float(g) for g in str(args.grid).split(",") if g != ""]
    result = sweep(
        config,
        grid,
        dataset,
        k=args.folds,
        master_seed=args.seed,
        bins=args.bins,
        jobs=args.jobs,
    )
    out = _out_dir(args)
    result.to_csv(out / "results.csv")
    _write_manifest(out, "sweep", _resolved(args), extra={"sweep": result.manifest()})

    agg = result.aggregate()
    ok_lams = [lam for lam in result.grid if agg.get(lam)]
    if args.svg and ok_lams:
        def stat(lam, name):
            return agg[lam][name]

        cmi_m = np.array([stat(l, "test_cmi")[0] for l in ok_lams])
        cmi_s = np.array([stat(l, "test_cmi")[1] for l in ok_lams])
        mi_m = np.array([stat(l, "test_mi")[0] for l in ok_lams])
        mi_s = np.array([stat(l, "test_mi")[1] for l in ok_lams])
        order = np.argsort(cmi_m)
        svg_plot(
            out / "information_plane.svg",
            [
                Series(
                    "mean over folds",
                    cmi_m[order],
                    mi_m[order],
                    mode="line+points",
                    band=(mi_m[order] - mi_s[order], mi_m[order] + mi_s[order]),
                )
            ],
            title="information plane (test folds)",
            xlabel="test CMI (nats)",
            ylabel="test MI (nats)",
        )
        eo_m = np.array([stat(l, "eo_gap")[0] for l in ok_lams])
        acc_m = np.array([stat(l, "accuracy")[0] for l in ok_lams])
        acc_s = np.array([stat(l, "accuracy")[1] for l in ok_lams])
        auc_m = np.array([stat(l, "auroc")[0] for l in ok_lams])
        auc_s = np.array([stat(l, "auroc")[1] for l in ok_lams])
        order = np.argsort(eo_m)
        svg_plot(
            out / "operational_plane.svg",
            [
                Series(
                    "accuracy",
                    eo_m[order],
                    acc_m[order],
                    mode="line+points",
                    band=(acc_m[order] - acc_s[order], acc_m[order] + acc_s[order]),
                ),
                Series(
                    "auroc",
                    eo_m[order],
                    auc_m[order],
                    mode="line+points",
                    band=(auc_m[order] - auc_s[order], auc_m[order] + auc_s[order]),
                ),
            ],
            title="operational plane (test folds)",
            xlabel="EO gap",
            ylabel="utility",
        )

    n_failed = sum(1 for r in result.records if r.error)
    print(f"sweep: {len(result.records)} cells, {n_failed} failed; results in {out}")
    if n_failed == len(result.records):
        print("all cells failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# --- report -------------------------------------------------------------------

def cmd_report(args, parser) -> int:
    path = Path(args.results)
    if not path.exists():
        raise DataError(f"results file {path} does not exist")
    try:
        rows = read_results_csv(path)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    agg = aggregate_rows(rows)
    metrics = sorted({m for columns in agg.values() for m in columns})
    if args.markdown:
        print("| lambda | " + " | ".join(metrics) + " |")
        print("|" + "---|" * (len(metrics) + 1))
        for lam, columns in agg.items():
            cells = [
                f"{columns[m][0]:.4f} ± {columns[m][1]:.4f}" if m in columns else ""
                for m in metrics
            ]
            print(f"| {lam} | " + " | ".join(cells) + " |")
    else:
        width = max(len(m) for m in metrics) + 2
        print("lambda".ljust(10) + "".join(m.rjust(width) for m in metrics))
        for lam, columns in agg.items():
            row = f"{lam:<10g}"
            for m in metrics:
                if m in columns:
                    row += f"{columns[m][0]:8.4f}±{columns[m][1]:<{width - 9}.4f}"
                else:
                    row += " " * width
            print(row)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            fh.write("lambda,metric,mean,sd\n")
            for lam, columns in agg.items():
                for m in sorted(columns):
                    fh.write(f"{lam!r},{m},{columns[m][0]!r},{columns[m][1]!r}\n")
    return EXIT_OK


# --- wiring -------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="fairfront", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fairfront {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="CMI of a sample batch with finite-sample bounds")
    p_est.add_argument("--input", required=True, help="CSV: u,y,z or p_0..p_{K-1},y,z or score,y,z")
    mode = p_est.add_mutually_exclusive_group()
    mode.add_argument("--soft", action="store_true", help="input holds posterior rows")
    mode.add_argument("--hard", action="store_true", help="input holds category indices (default)")
    p_est.add_argument("--correct-bias", action="store_true", dest="correct_bias")
    p_est.add_argument("--bins", type=int, default=10, help="quantile bins for score inputs")
    p_est.add_argument("--delta", type=float, default=0.05)
    p_est.add_argument("--qmin", type=float, default=0.05)
    p_est.add_argument("--out", default=None)
    p_est.add_argument("--config", default=None)
    p_est.set_defaults(func=cmd_estimate, _sub=p_est)

    p_fr = sub.add_parser("frontier", help="enumerate predictors and build the envelope")
    p_fr.add_argument("--joint", required=True, help="joint JSON: {card:[Kx,Ky,Kz], probs:[...]}")
    p_fr.add_argument("--card-out", type=int, default=2, dest="card_out")
    p_fr.add_argument("--grid-points", type=int, default=33, dest="grid_points")
    p_fr.add_argument("--svg", action="store_true")
    p_fr.add_argument("--out", required=True)
    p_fr.add_argument("--config", default=None)
    p_fr.set_defaults(func=cmd_frontier, _sub=p_fr)

    def add_train_flags(p):
        p.add_argument("--data", required=True)
        p.add_argument("--schema", default=None, help="column schema JSON; omit for canonical CSV")
        p.add_argument("--epochs", type=int, default=100)
        p.add_argument("--batch-size", type=int, default=256, dest="batch_size")
        p.add_argument("--eps", type=float, default=1e-8)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--hidden", type=int, nargs="+", default=[64, 64])
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--sensitive-input", choices=["on", "off"], default="on", dest="sensitive_input")
        p.add_argument("--out", required=True)
        p.add_argument("--config", default=None)

    p_tr = sub.add_parser("train", help="single training run")
    add_train_flags(p_tr)
    p_tr.add_argument("--lambda", type=float, default=0.0, dest="lam")
    p_tr.set_defaults(func=cmd_train, _sub=p_tr)

    p_sw = sub.add_parser("sweep", help="mixing-weight sweep with stratified k-fold protocol")
    add_train_flags(p_sw)
    p_sw.add_argument(
        "--grid",
        default=",".join(str(g) for g in DEFAULT_LAMBDA_GRID),
        help="comma-separated mixing weights",
    )
    p_sw.add_argument("--folds", type=int, default=5)
    p_sw.add_argument("--jobs", type=int, default=1)
    p_sw.add_argument("--bins", type=int, default=10)
    p_sw.add_argument("--svg", action="store_true")
    p_sw.set_defaults(func=cmd_sweep, _sub=p_sw)

    p_rep = sub.add_parser("report", help="aggregate a results CSV to mean ± sd per weight")
    p_rep.add_argument("--results", required=True)
    p_rep.add_argument("--markdown", action="store_true")
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--config", default=None)
    p_rep.set_defaults(func=cmd_report, _sub=p_rep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
        return args.func(args, parser)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, EnumerationCapError) as exc:
        if isinstance(exc, (DataError, BatchError, DistributionError, MetricError)):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
