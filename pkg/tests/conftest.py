import json
import shutil
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from erflow import config_from_dict  # noqa: E402
from erflow.core import EntityReference  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
TOY_DIR = ROOT / "configs" / "toy"

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def ref(ref_id, source="s", ordinal=None, **attrs):
    if ordinal is None:
        tail = ref_id.rsplit(":", 1)[-1]
        ordinal = int(tail) if tail.isdigit() else 0
    return EntityReference(ref_id, source, attrs, [(source, ordinal)])


@pytest.fixture
def toy_dir(tmp_path):
    d = tmp_path / "toy"
    shutil.copytree(TOY_DIR, d)
    return d


@pytest.fixture
def toy_raw(toy_dir):
    return json.loads((toy_dir / "config.json").read_text())


@pytest.fixture
def toy_cfg(toy_raw, toy_dir):
    return config_from_dict(toy_raw, toy_dir)


@pytest.fixture
def toy_incremental_cfg(toy_dir):
    raw = json.loads((toy_dir / "incremental.json").read_text())
    raw["store"] = {"backend": "memory"}
    return config_from_dict(raw, toy_dir)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE: dict = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    _ACCEPTANCE[marker] = report.outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), outcome in sorted(_ACCEPTANCE.items()):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  criterion {num}: {title}")
