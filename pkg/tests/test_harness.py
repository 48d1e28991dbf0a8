import json
import math

import numpy as np
import pytest

from rotorloc import cli
from rotorloc.aircraft import Simulator
from rotorloc.errors import ConfigError, ZeroSignalPower
from rotorloc.harness.dataset import Dataset, DatasetSpec, make_dataset, split_indices
from rotorloc.harness.evaluate import aggregated_rms, dataset_rms, simulate_records
from rotorloc.harness.noise import (colored_noise, inject_phase_noise, inject_sensor_noise_array,
                                    noisy_training_schedule, phase_noise_realization)
from rotorloc.harness.robustness import SWEEPS, ExperimentReport, run_robustness
from rotorloc.localizer.train import TrainConfig, train_localizer
from rotorloc.phasemod import PhaseParams, preset

TINY = TrainConfig(epochs=2, batch_size=8, hidden_width=16, token_width=8)


@pytest.fixture(scope="module")
def phases(scene):
    return preset("slow_sine", scene.omega)


@pytest.fixture(scope="module")
def ds(scene, phases):
    return make_dataset(scene, phases, DatasetSpec(3, 4))


@pytest.fixture(scope="module")
def model(ds):
    return train_localizer(ds, None, TINY)[0]


# dataset

def test_dataset_counts(ds):
    assert len(ds) == 36
    assert ds.pressure.shape == (36, 8, ds.scene.clock.n_samples)
    assert len(ds.location_groups(range(36))) == 9
    assert sum(len(v) for v in ds.split.values()) == 36


def test_split_is_a_location_partition():
    sp = split_indices(81, 8, 0)
    assert [len(sp[k]) for k in ("train", "val", "test")] == [65 * 8, 8 * 8, 8 * 8]
    allidx = np.concatenate(list(sp.values()))
    assert np.array_equal(np.sort(allidx), np.arange(81 * 8))
    locs = {k: set(v // 8) for k, v in sp.items()}
    assert not (locs["train"] & locs["test"]) and not (locs["train"] & locs["val"])
    rec = split_indices(9, 4, 0, mode="record")
    assert sum(len(v) for v in rec.values()) == 36


def test_dataset_bytes_deterministic_and_roundtrip(scene, phases, ds, tmp_path):
    again = make_dataset(scene, phases, DatasetSpec(3, 4))
    assert again.to_bytes() == ds.to_bytes()
    path = tmp_path / "d.mavd"
    ds.save(path)
    back = Dataset.load(path)
    assert back.to_bytes() == ds.to_bytes()
    assert np.array_equal(back.pressure, ds.pressure)
    for k in ds.split:
        assert np.array_equal(back.split[k], ds.split[k])


def test_dataset_rejects_garbage(tmp_path):
    path = tmp_path / "bad"
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(ValueError):
        Dataset.load(path)


def test_dataset_spec_validation():
    with pytest.raises(ConfigError):
        DatasetSpec(0, 8)
    with pytest.raises(ConfigError):
        DatasetSpec.from_json({"grid_points_per_side": 3, "extra": 1})


# noise

def test_sensor_noise_snr():
    rng = np.random.default_rng(0)
    x = np.sin(np.linspace(0, 400 * math.pi, 200_000))
    for snr in (5.0, 20.0, 40.0):
        y = inject_sensor_noise_array(x, snr, rng)
        n = y - x
        assert abs(10 * math.log10(np.mean(x * x) / np.mean(n * n)) - snr) < 0.5
    assert np.array_equal(inject_sensor_noise_array(x, math.inf, rng), x)


def test_phase_noise_power_and_spectrum():
    rng = np.random.default_rng(1)
    f_e = 1000.0
    phi = 0.2 * np.sin(np.linspace(0, 50, 100_000))
    snr = 15.0
    noisy = inject_phase_noise(phi, snr, rng, f_e)
    ratio = np.mean((noisy - phi) ** 2) / (np.mean(phi ** 2) / 10 ** (snr / 10))
    assert abs(ratio - 1.0) < 0.05
    c = colored_noise(100_000, f_e, rng)
    spec = np.abs(np.fft.rfft(c)) ** 2
    f = np.fft.rfftfreq(len(c), 1 / f_e)
    assert spec[f < 25].mean() > 10 * spec[f > 200].mean()
    assert np.array_equal(inject_phase_noise(phi, math.inf, rng, f_e), phi)


def test_phase_noise_on_zero_phase(scene):
    zero = PhaseParams.zeros(4, scene.omega)
    rng = np.random.default_rng(0)
    with pytest.raises(ZeroSignalPower):
        inject_phase_noise(np.zeros(100), 10.0, rng, 1000.0)
    with pytest.raises(ZeroSignalPower):
        phase_noise_realization(Simulator(scene), zero, 10.0, rng)
    a, e = phase_noise_realization(Simulator(scene), zero, 10.0, rng, reference_power=1e-2)
    assert np.all(np.isfinite(a)) and a.std() > 0 and e.std() > 0


def test_phase_noise_shared_between_audio_and_encoder(scene, phases):
    sim = Simulator(scene)
    a, e = phase_noise_realization(sim, phases, 10.0, np.random.default_rng(3))
    inside = (sim.t_audio >= sim.t_enc[0]) & (sim.t_audio <= sim.t_enc[-1])
    assert inside.sum() > 900
    for r in range(phases.n_rotors):
        np.testing.assert_allclose(np.interp(sim.t_audio[inside], sim.t_enc, e[r]), a[r][inside], atol=1e-12)


def test_noisy_schedule_defaults():
    assert noisy_training_schedule("sensor") == {"noise_training": {"kind": "sensor", "levels": [25.0, 30.0, 35.0]}}
    assert noisy_training_schedule("phase")["noise_training"]["levels"] == [15.0, 24.0]
    assert noisy_training_schedule("sensor", [20])["noise_training"]["levels"] == [20.0]
    with pytest.raises(ConfigError):
        noisy_training_schedule("sensor", [])
    with pytest.raises(ConfigError):
        noisy_training_schedule("wind")


# evaluation

def test_simulate_records_reproduces_dataset(scene, phases, ds):
    idx = ds.split["test"]
    p, e = simulate_records(scene, phases, ds.azimuth[idx], ds.positions[idx])
    assert np.array_equal(p, ds.pressure[idx])
    assert np.array_equal(e, ds.phase[idx])


def test_aggregated_rms_pairs(model, ds):
    single, agg = aggregated_rms(model, ds)
    assert single == dataset_rms(model, ds)
    assert agg >= 0


# robustness

def test_sweep_grids():
    assert SWEEPS["scale"][0] == 0.5 and SWEEPS["scale"][-1] == 2.0
    assert SWEEPS["shear"][0] == 0.0 and SWEEPS["shear"][-1] == 45.0
    assert SWEEPS["gamma"][0] == 0.05 and SWEEPS["gamma"][-1] == 0.95
    assert SWEEPS["sensor_snr"][:15] == [float(v) for v in range(5, 80, 5)]
    assert math.isinf(SWEEPS["sensor_snr"][-1]) and SWEEPS["phase_snr"] == SWEEPS["sensor_snr"]


def test_identity_rows_equal_nominal(model, ds, phases):
    nominal = dataset_rms(model, ds)
    for name, value in (("scale", 1.0), ("aspect", 1.0), ("shear", 0.0), ("gamma", ds.scene.env.gamma),
                        ("sensor_snr", math.inf), ("phase_snr", math.inf)):
        rep = run_robustness(model, phases, ds.scene, name, ds, values=[value])
        assert rep.rows[0].rms == nominal, name


def test_report_csv_and_svg_deterministic(model, ds, phases, tmp_path):
    kw = dict(values=[0.5, 1.0, 2.0], seed=0)
    r1 = run_robustness(model, phases, ds.scene, "scale", ds, **kw)
    r1.extend(run_robustness(model, phases, ds.scene, "sensor_snr", ds, values=[5.0, math.inf]))
    r2 = run_robustness(model, phases, ds.scene, "scale", ds, **kw)
    r2.extend(run_robustness(model, phases, ds.scene, "sensor_snr", ds, values=[5.0, math.inf]))
    assert r1.to_csv() == r2.to_csv()
    assert len(r1.to_csv().splitlines()) == 1 + 5
    r1.write_csv(tmp_path / "a.csv")
    back = ExperimentReport.read_csv(tmp_path / "a.csv")
    assert back.rows == r1.rows
    r1.write_svg(tmp_path / "a.svg")
    r2.write_svg(tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_unknown_sweep(model, ds, phases):
    with pytest.raises(ConfigError):
        run_robustness(model, phases, ds.scene, "temperature", ds)


# command line

@pytest.fixture(scope="module")
def workdir(tmp_path_factory, ds, model):
    d = tmp_path_factory.mktemp("cli")
    ds.save(d / "ds.mavd")
    model.save(d / "m.mavm")
    return d


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_cli_simulate_and_phases(workdir, capsys):
    code, _ = run(["simulate", "--preset", "slow_sine", "--pose", "2.5,2.0,0.3", "--out", workdir / "t.mavt"], capsys)
    assert code == 0 and (workdir / "t.mavt").stat().st_size > 0
    code, _ = run(["phases", "--preset", "constant", "--out", workdir / "p.json", "--plot", workdir / "p.svg"], capsys)
    assert code == 0
    assert PhaseParams.from_json(json.loads((workdir / "p.json").read_text())).n_rotors == 4


def test_cli_eval_and_robustness(workdir, capsys):
    code, out = run(["eval", "--model", workdir / "m.mavm", "--dataset", workdir / "ds.mavd", "--aggregate", 4],
                    capsys)
    assert code == 0
    res = json.loads(out.out)
    assert {"rms", "aggregated_rms", "centroid_baseline_rms"} <= set(res)
    code, _ = run(["robustness", "--model", workdir / "m.mavm", "--dataset", workdir / "ds.mavd",
                   "--sweep", "shear", "--out", workdir / "r.csv", "--svg", workdir / "r.svg"], capsys)
    assert code == 0
    assert len((workdir / "r.csv").read_text().splitlines()) == 1 + len(SWEEPS["shear"])


def test_cli_train_deterministic(workdir, capsys):
    (workdir / "cfg.json").write_text(json.dumps(TINY.to_json()))
    for name in ("a", "b"):
        code, _ = run(["train", "--dataset", workdir / "ds.mavd", "--config", workdir / "cfg.json",
                       "--out", workdir / f"{name}.mavm"], capsys)
        assert code == 0
    assert (workdir / "a.mavm").read_bytes() == (workdir / "b.mavm").read_bytes()


def test_cli_exit_codes(workdir, capsys):
    (workdir / "bad.json").write_text(json.dumps({"epochs": 1, "nonsense": 2}))
    code, _ = run(["train", "--dataset", workdir / "ds.mavd", "--config", workdir / "bad.json",
                   "--out", workdir / "x.mavm"], capsys)
    assert code == 2
    code, _ = run(["eval", "--model", workdir / "missing.mavm", "--dataset", workdir / "ds.mavd"], capsys)
    assert code == 4
    code, _ = run(["simulate", "--preset", "constant", "--pose", "50,50,0", "--out", workdir / "o.mavt"], capsys)
    assert code == 2
    code, _ = run(["eval", "--model", workdir / "m.mavm", "--dataset", workdir / "ds.mavd", "--aggregate", 0],
                  capsys)
    assert code == 2
    zero = PhaseParams.zeros(4, 2 * math.pi * 23.46)
    (workdir / "zero.json").write_text(json.dumps(zero.to_json()))
    code, _ = run(["robustness", "--model", workdir / "m.mavm", "--dataset", workdir / "ds.mavd",
                   "--phases", workdir / "zero.json", "--sweep", "phase_snr", "--out", workdir / "z.csv"], capsys)
    assert code == 3
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--preset", "nope", "--pose", "1,1,0", "--out", "x"])
    assert exc.value.code == 2
