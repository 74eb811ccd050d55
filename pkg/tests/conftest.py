import json
import time
from pathlib import Path

import pytest

import helpers

from pathlasso.layers import extract_layers
from pathlasso.synth import SynthSpec, generate_layered

FIXTURES = Path(__file__).parent / "fixtures"


def recovery_calibration() -> dict:
    return json.loads((FIXTURES / "recovery_calibration.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def recovery_runs():
    """Extraction on every calibrated recovery seed, computed once per session.

    Returns (runs, seconds) with runs a list of (dataset, truth, assignment).
    """
    cal = recovery_calibration()
    runs = []
    start = time.perf_counter()
    for seed in cal["seeds"]:
        d, truth = generate_layered(SynthSpec(seed=seed, **cal["design"]))
        runs.append((d, truth, extract_layers(d)))
    return runs, time.perf_counter() - start


def pytest_terminal_summary(terminalreporter):
    if not helpers.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, title, detail in helpers.ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {title}" + (f"  [{detail}]" if detail else ""))
