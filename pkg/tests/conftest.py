import json
import sys

import pytest

from touchmap.frames import save_sequence
from touchmap.synth import SynthParams, synthesize


@pytest.fixture
def fixture_config(tmp_path):
    """Write a synthetic gesture and a config pointing at it; returns the config path."""

    def make(kind="stroke", params=SynthParams(), seed=0, **cfg):
        seq = synthesize(kind, params, seed)
        data = tmp_path / f"{kind}.csv"
        save_sequence(seq, data)
        path = tmp_path / f"{kind}.json"
        path.write_text(json.dumps({"input": data.name, **cfg}))
        return path

    return make


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("] ")[1].split(".")[0])):
            terminalreporter.write_line(line)
