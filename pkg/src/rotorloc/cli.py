"""Command line entry point: ``rotorloc <subcommand> ...``.

Exit codes: 0 success, 2 bad arguments or config, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import struct
import sys
from pathlib import Path

import numpy as np

from . import errors as E
from .aircraft import Scene, Simulator, default_scene
from .core import Pose2, Vec2
from .phasemod import PRESETS, ConstraintConfig, PhaseParams, phase_samples, preset
from .serialization import dumps, read_json, write_json

log = logging.getLogger("rotorloc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
_NUMERIC = (E.NonFiniteLoss, E.ZeroSignalPower, E.DegenerateGeometry, E.EmptyRegion)
_CONFIG = (E.ConfigError, E.UnknownPreset, E.ShapeMismatch, E.NotRectangular, E.OutsideEnvironment,
           E.TraceTooShort)


class _IOFailure(Exception):
    pass


def _load(fn, path, *args):
    """Read an input artifact; unreadable or malformed files are I/O failures."""
    try:
        return fn(path, *args)
    except (OSError, ValueError, struct.error, json.JSONDecodeError) as exc:
        if isinstance(exc, E.RotorlocError):
            raise
        raise _IOFailure(f"{path}: {exc}") from exc


def _json(path) -> dict:
    return _load(read_json, path)


def _scene(path) -> Scene:
    return default_scene() if path is None else Scene.from_json(_json(path))


def _phases(args, scene: Scene) -> PhaseParams:
    if getattr(args, "phases", None):
        return PhaseParams.from_json(_json(args.phases))
    return preset(getattr(args, "preset", None) or "constant", scene.omega, scene.geometry.n_rotors)


def _pose(text: str) -> Pose2:
    try:
        x, y, az = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise E.ConfigError(f"--pose expects X,Y,AZ (metres, metres, radians), got {text!r}") from exc
    return Pose2(az, Vec2(x, y))


def cmd_simulate(args) -> int:
    from .traces import TraceRecord, write_trace

    scene = _scene(args.scene)
    phases = _phases(args, scene)
    pose = _pose(args.pose)
    if not scene.env.contains(pose.position):
        raise E.OutsideEnvironment(f"pose position {tuple(pose.position)} is outside the room")
    sim = Simulator(scene)
    write_trace(args.out, TraceRecord(pose, sim.trace(pose, phases), sim.encoder(phases)))
    return EXIT_OK


def cmd_fit_rotor(args) -> int:
    from .rotor import FitOptions, RotorSourceModel, default_rotor_model, fit_rotor_model
    from .traces import read_trace

    files = sorted(Path(args.targets).glob("*.mavt"))
    if not files:
        raise _IOFailure(f"no .mavt target traces in {args.targets}")
    targets = []
    for f in files:
        rec = _load(read_trace, f)
        targets.append((rec.pose.position, rec.pressure))
    if args.init:
        init = RotorSourceModel.from_json(_json(args.init))
    else:
        init = default_rotor_model(args.omega)
    result = fit_rotor_model(targets, init, FitOptions(max_iter=args.max_iter), return_result=True)
    write_json(args.out, result.model.to_json())
    print(dumps({"misfit": result.misfit, "initial_misfit": result.initial_misfit,
                 "iterations": result.iterations, "converged": result.converged}))
    return EXIT_OK


def cmd_make_dataset(args) -> int:
    from .harness.dataset import DatasetSpec, make_dataset

    scene = _scene(args.scene)
    spec = DatasetSpec() if args.spec is None else DatasetSpec.from_json(_json(args.spec))
    ds = make_dataset(scene, _phases(args, scene), spec)
    ds.save(args.out)
    print(dumps({"records": len(ds), **{k: len(v) for k, v in ds.split.items()}}))
    return EXIT_OK


def _train_config(path):
    from .localizer.train import TrainConfig

    return TrainConfig() if path is None else TrainConfig.from_json(_json(path))


def _dataset(path):
    from .harness.dataset import Dataset

    return _load(Dataset.load, path)


def cmd_train(args) -> int:
    from .localizer.train import train_localizer

    ds = _dataset(args.dataset)
    tcfg = _train_config(args.config)
    model, history = train_localizer(ds, None, tcfg)
    model.save(args.out, {"train_config": tcfg.to_json(), "history": history})
    print(dumps({"best_val_loss": min(h["val_loss"] for h in history), "epochs": len(history)}))
    return EXIT_OK


def cmd_train_joint(args) -> int:
    from .localizer.train import train_joint

    ds = _dataset(args.dataset)
    tcfg = _train_config(args.config)
    ccfg = ConstraintConfig() if args.constraints is None else ConstraintConfig.from_json(_json(args.constraints))
    init = _phases(args, ds.scene) if (args.phases or args.preset) else ds.phases
    model, phases, history = train_joint(ds.scene, ds, init, None, tcfg, ccfg)
    model.save(args.out, {"train_config": tcfg.to_json(), "constraints": ccfg.to_json(), "history": history})
    phases_out = args.phases_out or str(args.out) + ".phases.json"
    write_json(phases_out, phases.to_json())
    print(dumps({"best_val_loss": min(h["val_loss"] for h in history), "phases": phases_out}))
    return EXIT_OK


def _load_model(path):
    from .localizer.model import LocalizerModel

    return _load(LocalizerModel.load, path)


def cmd_eval(args) -> int:
    from .harness.evaluate import (aggregate_predictions, centroid_baseline_rms, errors, predict_batch, rms)

    ds = _dataset(args.dataset)
    model = _load_model(args.model)
    idx = ds.split[args.split]
    pred = predict_batch(model, ds.pressure[idx], ds.phase[idx], ds.azimuth[idx])
    out = {"split": args.split, "records": len(idx), "rms": rms(errors(pred, ds.positions[idx])),
           "centroid_baseline_rms": centroid_baseline_rms(ds, args.split)}
    if args.aggregate:
        index_of = {int(i): j for j, i in enumerate(idx)}
        groups = [g[: args.aggregate] for g in ds.location_groups(idx)]
        med = aggregate_predictions(pred, groups, index_of)
        truth = np.array([ds.positions[g[0]] for g in groups])
        out["aggregate"] = args.aggregate
        out["aggregated_rms"] = rms(errors(np.array([tuple(m) for m in med]), truth))
    print(dumps(out))
    return EXIT_OK


def cmd_robustness(args) -> int:
    from .harness.robustness import SWEEPS, ExperimentReport, run_robustness

    ds = _dataset(args.dataset)
    model = _load_model(args.model)
    phases = PhaseParams.from_json(_json(args.phases)) if args.phases else ds.phases
    names = sorted(SWEEPS) if args.sweep == "all" else [args.sweep]
    report = ExperimentReport()
    for name in names:
        report.extend(run_robustness(model, phases, ds.scene, name, ds, condition=args.condition,
                                     seed=args.seed, phase_reference_power=args.phase_reference_power))
    report.write_csv(args.out)
    if args.svg:
        report.write_svg(args.svg)
    return EXIT_OK


def plot_phases(phases: PhaseParams, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = np.linspace(0.0, phases.period, 1024)
    phi = phase_samples(phases, t)
    with matplotlib.rc_context({"svg.hashsalt": "rotorloc", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 3))
        for r, row in enumerate(phi):
            ax.plot(t, np.degrees(row), label=f"rotor {r + 1}")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("phase [deg]")
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def cmd_phases(args) -> int:
    scene = default_scene()
    phases = _phases(args, scene)
    if args.out is None and args.plot is None:
        raise E.ConfigError("phases needs --out and/or --plot")
    if args.out:
        write_json(args.out, phases.to_json())
    if args.plot:
        plot_phases(phases, args.plot)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rotorloc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def phase_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--phases", help="phase parameter JSON")
        g.add_argument("--preset", choices=PRESETS)

    s = sub.add_parser("simulate", help="simulate one capture")
    s.add_argument("--scene")
    phase_args(s)
    s.add_argument("--pose", required=True, help="X,Y,AZ in metres and radians")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit-rotor", help="fit rotor source parameters to measured traces")
    s.add_argument("--targets", required=True, help="directory of .mavt traces, positions in rotor frame")
    s.add_argument("--init")
    s.add_argument("--omega", type=float, default=2 * math.pi * 23.46)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit_rotor)

    s = sub.add_parser("make-dataset", help="simulate a pose-grid dataset")
    s.add_argument("--scene")
    s.add_argument("--spec")
    phase_args(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_make_dataset)

    s = sub.add_parser("train", help="train the estimator on a dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("train-joint", help="train estimator and phase modulation jointly")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config")
    s.add_argument("--constraints")
    phase_args(s)
    s.add_argument("--out", required=True)
    s.add_argument("--phases-out")
    s.set_defaults(func=cmd_train_joint)

    s = sub.add_parser("eval", help="evaluate a model on a dataset split")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--split", default="test", choices=("train", "val", "test"))
    s.add_argument("--aggregate", type=int, metavar="J")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("robustness", help="perturbation and noise sweeps")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--phases")
    s.add_argument("--sweep", required=True,
                   choices=("scale", "aspect", "shear", "gamma", "sensor_snr", "phase_snr", "all"))
    s.add_argument("--condition", default="model")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--phase-reference-power", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--svg")
    s.set_defaults(func=cmd_robustness)

    s = sub.add_parser("phases", help="export or plot a phase preset")
    phase_args(s)
    s.add_argument("--out")
    s.add_argument("--plot")
    s.set_defaults(func=cmd_phases)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "aggregate", None) is not None and args.aggregate < 1:
        print("error: --aggregate must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _NUMERIC as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _CONFIG + (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
