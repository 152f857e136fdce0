import json

import numpy as np
import pytest

from mdfoil.data import bundled_names, bundled_path
from mdfoil.features import extract_many


@pytest.fixture(scope="session")
def corpus_features():
    """Features of every bundled airfoil, extracted once per session."""
    return extract_many([bundled_path(n) for n in bundled_names()])


@pytest.fixture
def straight_line_json(tmp_path):
    # ten collinear segments with control points at thirds: constant speed
    n = 10
    xs = np.linspace(0.0, 1.0, 3 * n + 1)
    segs = [[[float(xs[3 * i + j]), 0.5 * float(xs[3 * i + j])] for j in range(4)] for i in range(n)]
    path = tmp_path / "line.json"
    path.write_text(json.dumps({"segments": segs}))
    return path


@pytest.fixture
def lednicer_naca0012(tmp_path):
    """naca0012 rewritten in Lednicer layout: counts line, upper LE->TE, lower LE->TE."""
    lines = bundled_path("naca0012").read_text().splitlines()
    pts = np.array([[float(v) for v in ln.split()] for ln in lines[1:] if ln.strip()])
    le = int(np.argmin(pts[:, 0]))
    upper, lower = pts[: le + 1][::-1], pts[le:]
    body = [lines[0].strip(), f"{len(upper)}.  {len(lower)}.", ""]
    body += [f"{x:.7f} {y:.7f}" for x, y in upper] + [""]
    body += [f"{x:.7f} {y:.7f}" for x, y in lower]
    path = tmp_path / "naca0012_lednicer.dat"
    path.write_text("\n".join(body) + "\n")
    return path, pts


def rel_err(a, b, floor=1e-12):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), floor))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("#")[1].split()[0])):
            terminalreporter.write_line(line)
