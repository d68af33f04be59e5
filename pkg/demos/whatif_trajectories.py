"""What-if trajectories for one simulated subject.

Fits a small mixture on simulated traces, picks one held-out subject,
and prints its predicted trajectory under three hypothetical plans:
do nothing, a single action shortly after the decision time, and two
actions spaced five hours apart.  The point is the contrast: the class
posterior comes from the 12h history, the plans only shift the means.
"""

import argparse
from dataclasses import replace

import numpy as np

from cfgp.gp import predict
from cfgp.learning import FitConfig, fit_cgp, fit_event_action_model
from cfgp.simulator import SimConfig, policy_a, simulate_regime
from cfgp.traces import ActionPlan, truncate_history


def fit_small_model(n, seed):
    config = SimConfig()
    dataset, _ = simulate_regime(config, policy_a(), n, seed=seed)
    result = fit_cgp(dataset, FitConfig(n_components=3, max_iter=120, restarts=1, seed=0))
    model = replace(
        result.model,
        event_action_model=fit_event_action_model(dataset, outcome_model=result.model),
    )
    return config, model, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=60, help="training cohort size")
    parser.add_argument("--seed", type=int, default=9)
    parser.add_argument("--cut", type=float, default=12.0)
    args = parser.parse_args()

    config, model, result = fit_small_model(args.n, args.seed)
    print(f"fitted 3-component model: objective {result.final_objective:.1f}, "
          f"converged={result.converged}")

    held_out, _ = simulate_regime(config, policy_a(), 1, seed=args.seed + 1)
    trace = held_out.traces[0]
    history = truncate_history(trace, args.cut)
    print(f"\nsubject {trace.id}: {len(history.events)} events before {args.cut:.0f}h")

    plans = {
        "no action": ActionPlan(),
        "one action at 13h": ActionPlan((("tx", 13.0),)),
        "actions at 13h and 18h": ActionPlan((("tx", 13.0), ("tx", 18.0))),
    }
    query = np.linspace(args.cut + 0.5, trace.tau, 8)

    pred0 = predict(model, history, ActionPlan(), query)
    probs = ", ".join(f"{p:.2f}" for p in pred0.class_probabilities)
    print(f"class probabilities from history: [{probs}]\n")

    header = "hours".rjust(6) + "".join(name.rjust(26) for name in plans)
    print(header)
    preds = {name: predict(model, history, plan, query) for name, plan in plans.items()}
    for i, t in enumerate(query):
        cells = "".join(
            f"{preds[name].mean[i]:+.2f} [{preds[name].lower[i]:+.2f}, "
            f"{preds[name].upper[i]:+.2f}]".rjust(26)
            for name in plans
        )
        print(f"{t:6.1f}{cells}")


if __name__ == "__main__":
    main()
