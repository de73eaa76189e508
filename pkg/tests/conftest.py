from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qnnc.frontend import load_model, load_tensor_file
from qnnc.runtime import kernels

DATA = Path(__file__).parent / "data"
CORPUS = sorted(p.name[: -len(".model.json")] for p in DATA.glob("*.model.json"))
TARGETS = ("generic", "x86-vnni", "cuda-dp4a", "armv8")
BACKENDS = tuple(kernels.IMPLS)

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def model_bytes(name: str) -> bytes:
    return (DATA / f"{name}.model.json").read_bytes()


def corpus_model(name: str):
    return load_model(model_bytes(name))


def corpus_inputs(name: str):
    return load_tensor_file((DATA / f"{name}.inputs.json").read_bytes())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per kernel backend by switching the interpreter default."""
    monkeypatch.setattr(kernels, "BACKEND", request.param)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
