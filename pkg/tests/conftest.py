import sys
from pathlib import Path

import pytest
import torch

from in2i.core import DomainSpec, ModalitySpec, ModelConfig, validate_config

sys.path.insert(0, str(Path(__file__).parent))


def make_model(n=2, size=32, base_width=4, **kw):
    channels = [1, 1, 3][:n] if n <= 3 else [1] * n
    names = ["nir", "grey", "evi"][:n] if n <= 3 else [f"s{i}" for i in range(n)]
    dom = DomainSpec(tuple(ModalitySpec(nm, c) for nm, c in zip(names, channels)),
                     ModalitySpec("rgb", 3))
    kw.setdefault("disc_width", base_width)
    return validate_config(ModelConfig(dom, (size, size), base_width=base_width, **kw))[0]


@pytest.fixture
def float64():
    old = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(old)


# filled by test_acceptance.py; one (ok, line) pair per criterion
ACCEPTANCE: list[tuple[bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for ok, line in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {line}")
