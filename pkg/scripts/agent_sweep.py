"""Summary table of S, its confidence interval and the signaling diagnostics for each simulated agent."""
import argparse

import numpy as np

from semantic_bell.agents import LocalHiddenVariableAgents, PRBoxAgents, QuantumAgents, SignalingAgents
from semantic_bell.runner import summarize_outcomes


def agents(seed):
    rng = np.random.default_rng(seed)
    yield "lhv uniform", LocalHiddenVariableAgents(np.full(16, 1 / 16))
    yield "lhv all-plus", LocalHiddenVariableAgents.single((1, 1, 1, 1))
    yield "lhv random mixture", LocalHiddenVariableAgents(rng.dirichlet(np.full(16, 0.1)))
    yield "quantum tsirelson", QuantumAgents()
    yield "pr box", PRBoxAgents()
    yield "signaling", SignalingAgents()


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", "--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--resamples", type=int, default=1000)
    args = ap.parse_args()

    print("agent\tN\tS\tCI low\tCI high\tdelta_total\ts_odd\tcontextual")
    for i, (name, agent) in enumerate(agents(args.seed)):
        data = agent.sample(args.trials, np.random.default_rng([args.seed, i]))
        s = summarize_outcomes(data, seed=args.seed, resamples=args.resamples)
        sig = s.signaling
        print(f"{name}\t{s.n_complete}\t{s.s:+.4f}\t{s.ci[0]:+.4f}\t{s.ci[1]:+.4f}"
              f"\t{sig.delta_total:.4f}\t{sig.s_odd:.4f}\t{sig.contextual_cbd}")


if __name__ == "__main__":
    main()
