import math

import numpy as np
import pytest

from rotorloc.aircraft import AircraftGeometry, MicArray, Scene, default_scene
from rotorloc.core import Pose2, SampleClock, Vec2
from rotorloc.environment import Environment
from rotorloc.rotor import Harmonic, PointSource, RotorSourceModel

OMEGA = 2.0 * math.pi * 23.46


def single_source_rotor(k=1.0, amplitude=1.0, phase=0.0, position=(0.0, 0.0), omega=OMEGA):
    return RotorSourceModel(omega, (PointSource(Vec2(*position), (Harmonic(k, amplitude, phase),)),))


def random_rotor(rng, n_sources=4, ks=(1.0, 2.0), omega=OMEGA, radius=0.3):
    sources = []
    for s in range(n_sources):
        a = 2 * math.pi * s / n_sources
        hs = tuple(Harmonic(k, float(rng.uniform(0.2, 1.0)), float(rng.uniform(-math.pi, math.pi))) for k in ks)
        sources.append(PointSource(Vec2(radius * math.cos(a), radius * math.sin(a)), hs))
    return RotorSourceModel(omega, tuple(sources))


def small_scene(rotor=None, n_rotors=1, mics=((2.0, 0.3),), env=None, n_samples=128, omega=OMEGA):
    """Cheap scene: a few sources, a couple of mics, a short capture."""
    rotor = rotor or single_source_rotor(omega=omega)
    transforms = tuple(Pose2(0.0, Vec2(0.3 * r, -0.2 * r)) for r in range(n_rotors))
    geom = AircraftGeometry(transforms, tuple((-1) ** r for r in range(n_rotors)))
    f_rev = omega / (2 * math.pi)
    clock = SampleClock(1025 * f_rev / 8, 128 * f_rev, n_samples)
    env = env or Environment.rectangle(5.0, 5.0, gamma=0.0, max_order=0)
    return Scene(geom, MicArray(np.array(mics, dtype=float)), env, clock, omega, rotor)


@pytest.fixture(scope="session")
def scene():
    return default_scene()


# acceptance reporting: one verdict line per criterion in the terminal summary
ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    n = getattr(report, "criterion", None)
    if n is None or (report.when != "call" and report.passed):
        return
    entry = ACCEPTANCE.setdefault(n, {"details": [], "ok": True})
    entry["title"] = report.criterion_title
    entry["ok"] = entry["ok"] and report.passed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep = outcome.get_result()
        rep.criterion = mark.args[0]
        rep.criterion_title = mark.args[1]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        e = ACCEPTANCE[n]
        detail = "; ".join(e["details"])
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}  {detail}")


def note(n, text):
    """Attach a measured value to criterion ``n``'s verdict line."""
    ACCEPTANCE.setdefault(n, {"details": [], "ok": True})["details"].append(text)
