"""Command-line entry points: simulate, fit, evaluate, serve.

Exit codes are a stable contract for scripts: 0 on success, 1 on runtime
failure, 2 on usage errors.  All randomness flows from explicit --seed
flags, so every command is byte-reproducible for a fixed seed.
"""

from __future__ import annotations

import argparse
import sys

from .errors import CfgpError, OptimizationError
from .evaluation import (
    load_test_bundle,
    render_stability_csv,
    render_stability_text,
    stability_report,
)
from .learning import FitConfig, fit_baseline, fit_cgp, fit_event_action_model
from .model_io import load_model, save_model
from .simulator import SimConfig, policy_by_name, simulate_regime, write_truth
from .traces import parse_traces, write_traces

__all__ = ["main", "build_parser"]


def _parse_models_flag(text: str) -> dict:
    """Parse 'A=a.json,B=b.json,C=c.json' into {regime: path}."""
    table = {}
    for part in text.split(","):
        if "=" not in part:
            raise argparse.ArgumentTypeError(
                f"expected REGIME=PATH, got {part!r}"
            )
        regime, path = part.split("=", 1)
        if not regime or not path:
            raise argparse.ArgumentTypeError(f"expected REGIME=PATH, got {part!r}")
        table[regime] = path
    return table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfgp",
        description="Counterfactual GP mixtures over action/outcome traces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a simulated regime to disk")
    p_sim.add_argument("--regime", required=True, choices=["A", "B", "C", "never"])
    p_sim.add_argument("--n", type=int, required=True, help="number of traces")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="trace JSON-lines path")
    p_sim.add_argument("--truth-out", required=True, help="ground-truth sidecar path")
    p_sim.add_argument(
        "--treat-until",
        type=float,
        default=None,
        help="stop treating at this time (builds decision-point test cohorts)",
    )

    p_fit = sub.add_parser("fit", help="fit a mixture model to traces")
    p_fit.add_argument("--in", dest="in_path", required=True, help="trace JSON-lines path")
    p_fit.add_argument("--model-family", default="cgp", choices=["cgp", "baseline"])
    p_fit.add_argument("--components", type=int, default=3)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--restarts", type=int, default=5)
    p_fit.add_argument("--out", required=True, help="model JSON path")

    p_eval = sub.add_parser("evaluate", help="stability report across regimes")
    p_eval.add_argument(
        "--models",
        type=_parse_models_flag,
        required=True,
        metavar="A=PATH,B=PATH,...",
        help="model file per training regime; regime A is the reference",
    )
    p_eval.add_argument("--test", required=True, help="test trace JSON-lines path")
    p_eval.add_argument("--truth", required=True, help="ground-truth sidecar path")
    p_eval.add_argument("--out", required=True, help="report path prefix (.csv/.txt)")
    p_eval.add_argument("--cut", type=float, default=12.0, help="decision time in hours")

    p_serve = sub.add_parser("serve", help="serve predictions over HTTP")
    p_serve.add_argument("--model", required=True, help="model JSON path")
    p_serve.add_argument("--traces", required=True, help="trace JSON-lines path")
    p_serve.add_argument("--port", type=int, default=8000)

    return parser


def _cmd_simulate(args) -> int:
    config = SimConfig()
    policy = policy_by_name(args.regime)
    dataset, sims = simulate_regime(
        config, policy, args.n, args.seed, treat_until=args.treat_until
    )
    write_traces(dataset, args.out)
    write_truth(sims, args.truth_out)
    print(f"wrote {len(dataset)} traces to {args.out} (truth: {args.truth_out})")
    return 0


def _cmd_fit(args) -> int:
    dataset = parse_traces(args.in_path)
    config = FitConfig(
        n_components=args.components, seed=args.seed, restarts=args.restarts
    )
    fit = fit_cgp if args.model_family == "cgp" else fit_baseline
    try:
        result = fit(dataset, config)
    except OptimizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for restart, message in sorted(dict(exc.diagnostics or {}).items()):
            print(f"  restart {restart}: {message}", file=sys.stderr)
        return 1
    model = result.model
    if args.model_family == "cgp":
        eam = fit_event_action_model(dataset, outcome_model=model)
        model = type(model)(
            log_weights=model.log_weights,
            components=model.components,
            event_action_model=eam,
        )
    save_model(model, args.out)
    print(
        f"final objective {result.final_objective:.6f} "
        f"converged={str(result.converged).lower()} "
        f"iterations={result.iterations} restart={result.restart_index}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    bundle = load_test_bundle(args.test, args.truth, cut=args.cut)
    models = {regime: load_model(path) for regime, path in args.models.items()}
    report = stability_report(models, bundle, cut=args.cut)
    csv_text = render_stability_csv(report)
    table_text = render_stability_text(report)
    with open(args.out + ".csv", "w") as fh:
        fh.write(csv_text)
    with open(args.out + ".txt", "w") as fh:
        fh.write(table_text)
    print(table_text, end="")
    return 0


def _cmd_serve(args) -> int:
    from pathlib import Path

    import uvicorn

    from .service import create_app

    model = load_model(args.model)
    dataset = parse_traces(args.traces)
    app = create_app(model, dataset, model_id=Path(args.model).stem)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "fit": _cmd_fit,
        "evaluate": _cmd_evaluate,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except CfgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
