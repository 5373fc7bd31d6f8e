import numpy as np
import pytest

from gspyramid.cloud_io import Camera, GaussianCloud, look_at

ATTR_NAMES = ("opacity", "scale_0", "scale_1", "scale_2", "f_dc_0", "f_dc_1", "f_dc_2")


def random_cloud(rng, n, names=ATTR_NAMES, extent=10.0):
    pos = rng.uniform(0.0, extent, size=(n, 3)).astype(np.float32)
    ch = rng.normal(0.0, 1.0, size=(n, len(names))).astype(np.float32)
    return GaussianCloud(pos, ch, tuple(names))


def ring_cameras(n, radius, target=(5.0, 5.0, 5.0), size=(64, 48), fov_px=40.0):
    cams = []
    t = np.asarray(target, dtype=np.float64)
    for j in range(n):
        ang = 2 * np.pi * j / n
        c = t + radius * np.array([np.cos(ang), np.sin(ang), 0.3])
        cams.append(Camera(j, c, look_at(c, t), fov_px, fov_px, size[0] / 2, size[1] / 2, size[0], size[1]))
    return cams


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def max_error_ratio(data: bytes, original: GaussianCloud) -> float:
    """Largest |decoded - original| / (q/2) over every coded value; <= 1 means within bound."""
    from gspyramid.codec import decode_container

    dec = decode_container(data)
    rec = dec.pyramid.source
    worst = 0.0
    step = {(s.level, s.name): s.q for s in dec.header.segments}
    for l, idx in enumerate(dec.pyramid.levels):
        if not len(idx):
            continue
        for a, axis in enumerate("xyz"):
            err = np.abs(rec.positions[idx, a] - original.positions[idx, a].astype(np.float64))
            worst = max(worst, float(err.max()) / (step[(l, axis)] / 2))
        for c, name in enumerate(original.names):
            err = np.abs(rec.channels[idx, c] - original.channels[idx, c].astype(np.float64))
            worst = max(worst, float(err.max()) / (step[(l, name)] / 2))
    return worst


# --------------------------------------------------------------------------- acceptance summary

_CRITERIA: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_A" not in report.nodeid:
        return
    crit = report.nodeid.split("::test_")[1].split("_")[0]
    if report.when == "call" or report.outcome != "passed":
        if _CRITERIA.get(crit) != "FAIL":
            _CRITERIA[crit] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_CRITERIA):
        terminalreporter.write_line(f"{crit}: {_CRITERIA[crit]}")
