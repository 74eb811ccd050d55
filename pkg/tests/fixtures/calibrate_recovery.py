"""One-off calibration of the layer-recovery design.

Runs extract_layers on 50 seeds of the planted three-layer design and
writes the design, the observed exact-recovery rate and the frozen
acceptance threshold to recovery_calibration.json. Re-running it is only
needed if the design itself changes.
"""

import json
import sys
import time
from pathlib import Path

from pathlasso.layers import extract_layers
from pathlasso.synth import SynthSpec, generate_layered, recovery_metrics

DESIGN = {
    "n": 4000,
    "layer_sizes": [2, 3, 1],
    "theta_matrices": [[[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]], [[1.0, 1.0, 1.0]]],
    "noise_sd": 1.0,
    "outcome_beta": [1.5, 1.2],
}
SEEDS = list(range(50))
THRESHOLD = 0.9


def main(out: Path) -> None:
    start = time.perf_counter()
    exact = []
    for seed in SEEDS:
        d, truth = generate_layered(SynthSpec(seed=seed, **DESIGN))
        exact.append(recovery_metrics(extract_layers(d), truth).exact)
    doc = {
        "design": DESIGN,
        "seeds": SEEDS,
        "observed_exact": sum(exact),
        "observed_rate": sum(exact) / len(SEEDS),
        "threshold": THRESHOLD,
        "seconds": round(time.perf_counter() - start, 1),
    }
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).with_name("recovery_calibration.json"))
