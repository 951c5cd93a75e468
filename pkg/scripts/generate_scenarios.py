#!/usr/bin/env python
from __future__ import annotations

import argparse
import json
from pathlib import Path
from typing import Any

module_dir = Path(__file__).parent.resolve()
scenarios_dir = module_dir / "../src/ddlab/scenarios"


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--check", action="store_true")
    args = parser.parse_args()

    status = 0
    for name, scenario in get_scenarios().items():
        path = scenarios_dir / f"{name}.json"
        text = json.dumps(scenario, sort_keys=True, indent=2) + "\n"
        current = path.read_text() if path.exists() else None
        if current != text:
            if args.check:
                print(f"Would write {path}")
                status = 1
            else:
                print(f"Writing {path}")
                path.write_text(text)
    return status


DIAGONAL = [[2, 0, 0], [0, 1, 0], [0, 0, 0.5]]
# Not an automorphism of the standard conic
SPLIT_RAY = {"generator": [[1, 0, 0], [0, -1, 0], [0, 0, 0]], "t": [0.2, 0.4, 0.6]}
HEADLINE_TOLERANCES = {
    "absolute": 0.01,
    "r2_min": 0.999,
    "ratio_relative": 0.05,
    "stderr_multiple": 3,
}


def get_scenarios() -> dict[str, dict[str, Any]]:
    return {
        "zero_energies": {
            "format_version": "1.0",
            "name": "zero_energies",
            "checks": ["zero_energies"],
            "seed": 3,
            "budgets": {"ambient": 200000},
            "sigmas": {"random": {"count": 5, "radius": 0.5}, "explicit": [DIAGONAL]},
            "tolerances": {"absolute": 0.01, "stderr_multiple": 3},
            "zero_energies": {"dims": [1, 2]},
        },
        "cor1": {
            "format_version": "1.0",
            "name": "cor1",
            "checks": ["cor1"],
            "seed": 5,
            "budgets": {"ambient": 200000, "curve": 50000},
            "sigmas": {"random": {"count": 5, "radius": 0.5}, "explicit": [DIAGONAL]},
            "tolerances": {"absolute": 0.01, "stderr_multiple": 3},
            "cor1": {"linear_form": "x0", "conic": "x0*x2 - x1^2"},
        },
        "conic20": {
            "format_version": "1.0",
            "name": "conic20",
            "checks": ["cor2"],
            "curve": "x0*x2 - x1^2",
            "seed": 7,
            "budgets": {"ambient": 1000000, "curve": 100000},
            "sigmas": {"random": {"count": 20, "radius": 0.5}, "rays": [SPLIT_RAY]},
            "tolerances": HEADLINE_TOLERANCES,
        },
        "cubic20": {
            "format_version": "1.0",
            "name": "cubic20",
            "checks": ["cor2"],
            "curve": "x0^3 + x1^3 + x2^3 - 2*x0*x1*x2",
            "seed": 11,
            "budgets": {"ambient": 1000000, "curve": 100000},
            "sigmas": {"random": {"count": 20, "radius": 0.5}, "rays": [SPLIT_RAY]},
            "tolerances": HEADLINE_TOLERANCES,
        },
    }


if __name__ == "__main__":
    raise SystemExit(main())
