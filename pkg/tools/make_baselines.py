"""Generate the frozen scaling baseline.

Runs the reference scaling study (d=2, n in {8,16,32,64}, theorem_main
strategy, q=2, 100 trials per n, master seed 7) and freezes each n's max of
Lip(g)/(log n)^q into src/gridlip/_baselines.json.  The regression suite
reruns the same plan and requires agreement within +-20% per n.

Regenerate only on an intentional behavior change; the point of the file is
to catch unintentional ones.
"""

from __future__ import annotations

import json
import sys
from datetime import date
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gridlip.experiments import ExperimentPlan, scaling_study

OUT = Path(__file__).resolve().parent.parent / "src" / "gridlip" / "_baselines.json"

PLAN = ExperimentPlan(
    d=2,
    n_list=(8, 16, 32, 64),
    q=2.0,
    c_strategy="theorem_main",
    trials=100,
    master_seed=7,
)


def main() -> None:
    result = scaling_study(PLAN)
    ratios = {str(row.n): row.max_ratio for row in result.rows}
    rejections = {str(row.n): row.rejections for row in result.rows}
    payload = {
        "scaling": {
            "d": PLAN.d,
            "n_list": list(PLAN.n_list),
            "q": PLAN.q,
            "c_strategy": PLAN.c_strategy,
            "trials": PLAN.trials,
            "master_seed": PLAN.master_seed,
            "max_ratio": ratios,
            "rejections": rejections,
            "date": date.today().isoformat(),
        }
    }
    OUT.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for n, r in ratios.items():
        print(f"n={n}: max ratio {r}")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
