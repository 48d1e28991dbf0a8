"""Evaluation under perturbed rooms and noisy captures; CSV and SVG reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..aircraft import Simulator
from ..environment import perturb_aspect, perturb_scale, perturb_shear
from ..errors import ConfigError
from .evaluate import errors, predict_batch, rms, simulate_records

SWEEPS = {
    "scale": [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
    "aspect": [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
    "shear": [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0],
    "gamma": [0.05, 0.15, 0.25, 0.35, 0.45, 0.5, 0.55, 0.65, 0.75, 0.85, 0.95],
    "sensor_snr": [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 70.0,
                   75.0, math.inf],
    "phase_snr": [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 70.0,
                  75.0, math.inf],
}
NOMINAL_VALUE = {"scale": 1.0, "aspect": 1.0, "shear": 0.0, "gamma": None, "sensor_snr": math.inf,
                 "phase_snr": math.inf}
COLUMNS = ("condition", "parameter", "value", "rms", "sigma")


@dataclass(frozen=True)
class ReportRow:
    condition: str
    parameter: str
    value: float
    rms: float
    sigma: float


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)

    def extend(self, other: "ExperimentReport") -> "ExperimentReport":
        self.rows.extend(other.rows)
        return self

    def select(self, parameter=None, condition=None) -> list:
        return [r for r in self.rows if (parameter is None or r.parameter == parameter)
                and (condition is None or r.condition == condition)]

    def value(self, parameter, value, condition=None) -> ReportRow:
        for r in self.select(parameter, condition):
            if r.value == value:
                return r
        raise KeyError((parameter, value, condition))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r.condition, r.parameter, repr(float(r.value)), repr(r.rms), repr(r.sigma)])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "ExperimentReport":
        with open(path, newline="") as fh:
            rows = [ReportRow(d["condition"], d["parameter"], float(d["value"]), float(d["rms"]),
                              float(d["sigma"])) for d in csv.DictReader(fh)]
        return cls(rows)

    def write_svg(self, path, parameter=None) -> None:
        plot_report(self, path, parameter)


def plot_report(report: ExperimentReport, path, parameter=None) -> None:
    """Line chart of RMS vs sweep value with a shaded 1-sigma band per condition."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    params = [parameter] if parameter else sorted({r.parameter for r in report.rows})
    with matplotlib.rc_context({"svg.hashsalt": "rotorloc", "svg.fonttype": "none"}):
        fig, axes = plt.subplots(1, len(params), figsize=(4 * len(params), 3.2), squeeze=False)
        for ax, name in zip(axes[0], params):
            conditions = sorted({r.condition for r in report.select(name)})
            for cond in conditions:
                rows = report.select(name, cond)
                finite = max((r.value for r in rows if math.isfinite(r.value)), default=0.0)
                x = np.array([r.value if math.isfinite(r.value) else finite + 10.0 for r in rows])
                y = np.array([r.rms for r in rows])
                s = np.array([r.sigma for r in rows])
                ax.plot(x, y, marker="o", label=cond)
                ax.fill_between(x, np.maximum(y - s, 0.0), y + s, alpha=0.2)
            ax.set_xlabel(name)
            ax.set_ylabel("RMS error [m]")
            ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def _map_points(name, value, env, pts):
    """Carry nominal positions into the perturbed room the same way its vertices move."""
    if value == NOMINAL_VALUE.get(name):
        return pts
    if name == "scale":
        c = env.centroid
        return c + math.sqrt(value) * (pts - c)
    if name == "aspect":
        c = env.centroid
        return c + (pts - c) * np.array([math.sqrt(value), 1.0 / math.sqrt(value)])
    if name == "shear":
        out = pts.copy()
        out[:, 0] += (pts[:, 1] - env.vertices[:, 1].min()) * math.tan(math.radians(value))
        return out
    return pts


def _perturbed_env(name, value, env):
    if name == "scale":
        return perturb_scale(env, value)
    if name == "aspect":
        return perturb_aspect(env, value)
    if name == "shear":
        return perturb_shear(env, value)
    if name == "gamma":
        return env if value == env.gamma else env.replace(gamma=value)
    return env


def run_robustness(model, phases, nominal_scene, sweep, dataset, condition: str = "model",
                   values=None, seed: int = 0, split: str = "test",
                   phase_reference_power=None) -> ExperimentReport:
    """Evaluate ``model`` on the dataset's test poses under each value of ``sweep``.

    ``sweep`` is one of :data:`SWEEPS` (or a list of them). Room perturbations
    move the test positions with the room; noise sweeps keep the nominal room.
    Each row holds the RMS error and the standard deviation of the
    per-record errors.
    """
    names = [sweep] if isinstance(sweep, str) else list(sweep)
    report = ExperimentReport()
    idx = dataset.split[split]
    if len(idx) == 0:
        raise ConfigError(f"{split} split is empty")
    az = dataset.azimuth[idx]
    pts0 = dataset.positions[idx]
    sim = Simulator(nominal_scene)
    env0 = nominal_scene.env
    for si, name in enumerate(names):
        if name not in SWEEPS:
            raise ConfigError(f"unknown sweep {name!r}; choose from {sorted(SWEEPS)}")
        vals = SWEEPS[name] if values is None else [float(v) for v in values]
        for vi, value in enumerate(vals):
            rng = np.random.default_rng([seed, 3, si, vi])
            env = _perturbed_env(name, value, env0)
            pts = _map_points(name, value, env0, pts0)
            kw = {}
            if name == "sensor_snr":
                kw["sensor_snr"] = value
            elif name == "phase_snr":
                kw["phase_snr"] = value
            p, e = simulate_records(nominal_scene, phases, az, pts, env=env, rng=rng,
                                    phase_reference_power=phase_reference_power, sim=sim, **kw)
            err = errors(predict_batch(model, p, e, az), pts)
            report.rows.append(ReportRow(condition, name, float(value), rms(err), float(np.std(err))))
    return report
