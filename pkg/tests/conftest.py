import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA_DIR = os.environ.get("DEEPGWC_DATA_DIR")


def dataset_files(name):
    """(content, cites) paths under $DEEPGWC_DATA_DIR, or None."""
    if not DATA_DIR:
        return None
    content = Path(DATA_DIR) / f"{name}.content"
    cites = Path(DATA_DIR) / f"{name}.cites"
    if content.is_file() and cites.is_file():
        return content, cites
    return None


TOY_CONTENT = "p1\t1\t0\tbeta\np2\t0\t1\talpha\np3\t1\t1\tbeta\n"
TOY_CITES = "p1\tp2\np2\tp3\n"


@pytest.fixture
def toy_files(tmp_path):
    content = tmp_path / "toy.content"
    cites = tmp_path / "toy.cites"
    content.write_text(TOY_CONTENT)
    cites.write_text(TOY_CITES)
    return content, cites


def write_dataset(tmp_path, g, name="toy"):
    """Write a Graph as content/cites files (binary features rounded)."""
    content = tmp_path / f"{name}.content"
    cites = tmp_path / f"{name}.cites"
    with open(content, "w") as fh:
        for i in range(g.n):
            feats = [str(int(v > 0)) for v in g.features[i]]
            fh.write("\t".join([f"n{i}", *feats, f"c{g.labels[i]}"]) + "\n")
    with open(cites, "w") as fh:
        for a, b in g.edges:
            fh.write(f"n{a}\tn{b}\n")
    return content, cites


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
