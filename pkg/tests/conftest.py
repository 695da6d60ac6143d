import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from heavytail import _backend

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

BACKENDS = ["python"] + (["cython"] if _backend.compiled_kernels is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def published_panel():
    """Full-scale synthetic panel seeded by the published LP rows, derived and fitted once."""
    from heavytail import experiments as ex
    from heavytail import firmpanel as fp
    import tempfile

    spec = ex.published_lp_spec()
    with tempfile.TemporaryDirectory() as d:
        paths = ex.write_synth(spec, 2024, d)
        run = fp.build_panel(paths["panel"], fp.load_deflators(paths["deflators"]),
                             fp.load_zipmap(paths["zipmap"]))
    cfg = ex.ExperimentConfig(seed=2024, threads=4)
    table = ex.fit_table(run.derived.panel, cfg)
    return run, table


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
