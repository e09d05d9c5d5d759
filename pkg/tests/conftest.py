import numpy as np
import pytest

from sctnet import data
from sctnet.model import ModelConfig

TOY = ModelConfig(embed_dim=6, window_size=4, num_layers=1, num_heads=1, cross_heads=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_sample():
    spec = data.random_scene_spec(3, "local", "day", (16, 16))
    return data.make_sample(spec, "tiny")


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    data.build_dataset(3, None, 11, root, size=(24, 32))
    return root


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
