import json
import os
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

DATASET_ENV = "EGC_DATASET_ROOT"

_criteria: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion implemented by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    cid, title = marker.args
    entry = _criteria.setdefault(cid, [title, []])
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if report.skipped:
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
            entry[1].append(("SKIP", reason))
        else:
            entry[1].append(("PASS" if report.passed else "FAIL", item.name))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")

    def order(cid):
        digits = "".join(ch for ch in cid if ch.isdigit())
        return (int(digits or 0), cid)

    for cid in sorted(_criteria, key=order):
        title, outcomes = _criteria[cid]
        states = {s for s, _ in outcomes}
        status = "FAIL" if "FAIL" in states else "SKIP" if states == {"SKIP"} else "PASS"
        line = f"criterion {cid:<4} {status:<5} {title}"
        if status == "SKIP":
            line += f" ({outcomes[0][1]})"
        elif status == "FAIL":
            line += " (" + ", ".join(n for s, n in outcomes if s == "FAIL") + ")"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture(scope="session")
def dataset_root():
    root = os.environ.get(DATASET_ENV)
    if not root or not Path(root).is_dir():
        pytest.skip(f"published EGC dataset not available; set {DATASET_ENV} to its root directory")
    return Path(root)


def make_image_dataset(root: Path, name: str = "TW", n_c: int = 12, n_s: int = 12, size: int = 24,
                       seed: int = 0, rgb: bool = True) -> Path:
    """Write a small two-class image corpus; S images are smoother than C images."""
    gen = np.random.default_rng(seed)
    for label, n in (("C", n_c), ("S", n_s)):
        folder = root / name / label
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            shape = (size, size, 3) if rgb else (size, size)
            noise = gen.integers(0, 256, shape)
            if label == "S":
                noise = np.cumsum(noise, axis=1) % 256 // 2 + 64
            Image.fromarray(noise.astype(np.uint8)).save(folder / f"img_{i:03d}.png")
    return root


@pytest.fixture
def image_corpus(tmp_path):
    return make_image_dataset(tmp_path / "data")


def write_config(path: Path, cfg: dict) -> Path:
    path.write_text(json.dumps(cfg))
    return path
