"""Print the running CHSH estimate of a finished run, or of a fresh simulation.

    python scripts/running_s.py results/run            # existing record file
    python scripts/running_s.py --simulate quantum -n 2000
"""
import argparse

import numpy as np

from semantic_bell.agents import LocalHiddenVariableAgents, PRBoxAgents, QuantumAgents, SignalingAgents
from semantic_bell.chsh import CLASSICAL_BOUND, TSIRELSON_BOUND, running_s
from semantic_bell.runner import summarize_file

SIMULATORS = {
    "lhv": lambda: LocalHiddenVariableAgents(np.full(16, 1 / 16)),
    "quantum": QuantumAgents,
    "prbox": PRBoxAgents,
    "signaling": SignalingAgents,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("records", nargs="?", help="records.jsonl or its directory")
    ap.add_argument("--simulate", choices=sorted(SIMULATORS))
    ap.add_argument("-n", "--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--every", type=int, default=0, help="print every k-th prefix (default: about 20 lines)")
    args = ap.parse_args()
    if (args.records is None) == (args.simulate is None):
        ap.error("give either a record file or --simulate")

    if args.simulate:
        data = SIMULATORS[args.simulate]().sample(args.trials, np.random.default_rng(args.seed))
        series = running_s(data)
    else:
        series = summarize_file(args.records).running
    every = args.every or max(1, len(series) // 20)
    print(f"# classical bound {CLASSICAL_BOUND:g}, Tsirelson bound {TSIRELSON_BOUND:.4f}")
    print("n\tS")
    for i, (n, s) in enumerate(series):
        if (i + 1) % every == 0 or i == len(series) - 1:
            print(f"{n}\t{s:+.4f}")


if __name__ == "__main__":
    main()
