import pytest

from vitsplit.model import ModelSpec
from vitsplit.profiling import clamp_diagnostics


def toy_spec(num_layers, x0, embed_dim=1, bytes_per_element=4, **kw):
    """Spec with exactly ``x0`` tokens (x0 - 1 patches plus a class token)."""
    return ModelSpec(f"toy-{num_layers}-{x0}", num_layers, (1, 1, x0 - 1, 1), (1, 1, 1),
                     embed_dim=embed_dim, bytes_per_element=bytes_per_element, **kw)


@pytest.fixture
def make_spec():
    return toy_spec


@pytest.fixture(autouse=True)
def _reset_clamp_counter():
    clamp_diagnostics.count = 0
    yield


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
