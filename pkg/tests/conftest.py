import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

MNIST_DIR = Path(os.environ.get("RPLIF_MNIST_DIR", "/root/data/mnist"))

_ACCEPTANCE = []


def mnist_available() -> bool:
    names = ("train-images.idx3-ubyte", "train-labels.idx1-ubyte",
             "t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte")
    return all((MNIST_DIR / n).is_file() for n in names)


@pytest.fixture
def record_criterion():
    """Record a one-line acceptance verdict, printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str = ""):
        _ACCEPTANCE.append((number, title, passed, detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE):
        verdict = "PASS" if passed else "FAIL"
        line = f"[{verdict}] {number:>2}. {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
