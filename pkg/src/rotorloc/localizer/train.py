"""Training of the estimator alone and jointly with the rotor phase modulation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..aircraft import Scene, Simulator
from ..errors import ConfigError, NonFiniteLoss
from ..harness.noise import inject_sensor_noise_array, phase_noise_realization
from ..phasemod import ConstraintConfig, PhaseParams, penalty_terms, penalty_total
from ..serialization import check_keys
from .features import FeatureConfig, featurize, featurize_backward
from .model import Adam, LocalizerModel, Topology, forward, init_localizer, loss_and_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 50
    learning_rate: float = 1e-3
    seed: int = 0
    freezing_cycles: int = 4
    freezing_cycle_epochs: int = 25
    joint_epochs: int = 25
    final_frozen_epochs: int = 35
    phase_learning_rate: float = 1e-3
    phase_lr_decay: float = 0.5
    phase_lr_decay_every: int = 20
    noise_training: dict | None = None  # {"kind": "sensor"|"phase", "levels": [dB, ...]}
    token_width: int = 32
    hidden_width: int = 256
    feature: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("epochs", "batch_size", "freezing_cycle_epochs", "joint_epochs",
                     "final_frozen_epochs", "phase_lr_decay_every", "token_width", "hidden_width"):
            if getattr(self, name) < (0 if "epochs" in name else 1):
                raise ConfigError(f"{name} must be positive")
        if self.batch_size < 1 or self.freezing_cycles < 0:
            raise ConfigError("batch_size must be positive")
        if self.noise_training is not None:
            check_keys(self.noise_training, {"kind", "levels"}, "noise_training")
            if self.noise_training["kind"] not in ("sensor", "phase") or not self.noise_training["levels"]:
                raise ConfigError("noise_training needs kind sensor|phase and a nonempty level list")

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(**self.feature)

    def schedule(self) -> list:
        """Per-epoch stage of the joint run: ``("cycle", r)``, ``("joint",)`` or ``("frozen",)``."""
        out = []
        for c in range(self.freezing_cycles):
            out += [("cycle", c)] * self.freezing_cycle_epochs
        out += [("joint",)] * self.joint_epochs
        out += [("frozen",)] * self.final_frozen_epochs
        return out

    def replace(self, **changes) -> "TrainConfig":
        d = asdict(self)
        d.update(changes)
        return TrainConfig(**d)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        keys = set(cls.__dataclass_fields__)
        check_keys(d, keys, "train config", optional=keys)
        return cls(**d)


def _draw_snr(tcfg: TrainConfig, rng) -> float:
    levels = tcfg.noise_training["levels"]
    return float(levels[rng.integers(len(levels))])


class _Source:
    """Feature provider over a fixed pose list.

    With ``phases`` set, traces are synthesized on demand from cached path
    coefficients (needed when phases change or phase noise is injected);
    otherwise the stored traces are featurized once.
    """

    def __init__(self, dataset, feature, tcfg, phases=None, scene=None, live=False):
        self.ds = dataset
        self.feature = feature
        self.tcfg = tcfg
        self.phases = phases if phases is not None else dataset.phases
        self.scene = scene or dataset.scene
        self.live = live
        self.sim = None
        noise = tcfg.noise_training
        needs_sim = live or (noise is not None and noise["kind"] == "phase")
        if needs_sim:
            self.sim = Simulator(self.scene)
            self.coeffs = [self.sim.coefficients(p) for p in dataset.poses()]
        if not live:
            self.fp = featurize(dataset.pressure, feature)
            self.fe = featurize(dataset.phase, feature)

    def batch(self, idx, rng=None, noisy=True):
        """Features for records ``idx``; returns ``(fp, fe, ctx)``."""
        noise = self.tcfg.noise_training if noisy else None
        kind = noise["kind"] if noise else None
        ctx = {}
        if self.live or kind == "phase":
            phi_audio = self.sim.audio_phases(self.phases)
            enc = self.sim.encoder(self.phases).samples
            ps, encs, phis = [], [], []
            for i in idx:
                pa, en = phi_audio, enc
                if kind == "phase":
                    snr = _draw_snr(self.tcfg, rng)
                    na, ne = phase_noise_realization(self.sim, self.phases, snr, rng)
                    pa, en = phi_audio + na, enc + ne
                ps.append(self.sim.synthesize(self.coeffs[i], pa))
                encs.append(en)
                phis.append(pa)
            p, e = np.stack(ps), np.stack(encs)
            ctx.update(p=p, e=e, phi_audio=phis)
        else:
            p, e = None, None
        if kind == "sensor":
            snr = _draw_snr(self.tcfg, rng)
            base = self.ds.pressure[idx] if p is None else p
            p = np.stack([inject_sensor_noise_array(x, snr, rng) for x in base])
            ctx["p"] = p
        fp = featurize(p, self.feature) if p is not None else self.fp[idx]
        fe = featurize(e, self.feature) if e is not None else self.fe[idx]
        return fp, fe, ctx


def _topology(ds, feature, tcfg) -> Topology:
    _, m, n = ds.pressure.shape
    _, r, ne = ds.phase.shape
    return Topology.for_inputs(m, n, r, ne, feature, tcfg.token_width, tcfg.hidden_width)


def _mse(model, fp, fe, az, labels) -> float:
    if len(labels) == 0:
        return float("nan")
    out = forward(model, fp, fe, az)
    return float(np.mean(np.sum((out - labels) ** 2, axis=1)))


def _check_finite(value, epoch, step):
    if not np.isfinite(value):
        raise NonFiniteLoss(f"non-finite loss {value} at epoch {epoch}, step {step}")


def _train_loop(ds, source, model, tcfg, n_epochs, phase_hook=None):
    train_idx = ds.split["train"]
    val_idx = ds.split["val"]
    if len(train_idx) == 0:
        raise ConfigError("training split is empty")
    bs = min(tcfg.batch_size, len(train_idx))
    shuffle_rng = np.random.default_rng([tcfg.seed, 1])
    noise_rng = np.random.default_rng([tcfg.seed, 2])
    opt = Adam(tcfg.learning_rate)
    labels_all = ds.positions
    history = []
    best = (np.inf, model.copy(), phase_hook.phases if phase_hook else None)

    for epoch in range(n_epochs):
        stage = phase_hook.stage(epoch) if phase_hook else ("plain",)
        perm = shuffle_rng.permutation(train_idx)
        sums = np.zeros(3)
        for step, start in enumerate(range(0, len(perm), bs)):
            idx = perm[start:start + bs]
            fp, fe, ctx = source.batch(idx, noise_rng)
            learn = phase_hook is not None and phase_hook.learning(stage)
            res = loss_and_grad(model, fp, fe, ds.azimuth[idx], labels_all[idx], need_inputs=learn)
            data, grads = res[0], res[1]
            _check_finite(data, epoch, step)
            phys = 0.0
            if phase_hook is not None:
                phys = phase_hook.update(stage, epoch, idx, ctx, res[2] if learn else None,
                                         res[3] if learn else None)
            opt.step(model.params, grads)
            sums += np.array([data, phys, data + phys]) * len(idx)
        means = sums / len(perm)
        if phase_hook is not None:
            val_fp, val_fe, _ = source.batch(val_idx, noisy=False) if len(val_idx) else (None, None, None)
        else:
            val_fp, val_fe = (source.fp[val_idx], source.fe[val_idx]) if len(val_idx) else (None, None)
        val = _mse(model, val_fp, val_fe, ds.azimuth[val_idx], labels_all[val_idx]) if len(val_idx) else float("nan")
        entry = {"epoch": epoch, "stage": stage[0], "train_loss": float(means[0]),
                 "physics_loss": float(means[1]), "total_loss": float(means[2]), "val_loss": val}
        history.append(entry)
        log.debug("epoch %d %s", epoch, entry)
        score = val if np.isfinite(val) else means[0]
        if score < best[0]:
            best = (score, model.copy(), phase_hook.phases if phase_hook else None)
    return best[1], best[2], history


def train_localizer(dataset, model_init: LocalizerModel | None = None, tcfg: TrainConfig | None = None):
    """Minimize the mean squared location error over the training split.

    Returns ``(best-validation model, history)``.
    """
    tcfg = tcfg or TrainConfig()
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    feature = tcfg.feature_config
    source = _Source(dataset, feature, tcfg)
    model = model_init.copy() if model_init is not None else _init(dataset, source, feature, tcfg)
    best, _, history = _train_loop(dataset, source, model, tcfg, tcfg.epochs)
    return best, history


def _init(ds, source, feature, tcfg):
    train = ds.split["train"]
    if len(train) == 0:
        raise ConfigError("training split is empty")
    if source.live or tcfg.noise_training is not None:
        # standardize on inputs as the network will see them during training
        rng = np.random.default_rng([tcfg.seed, 4])
        bs = tcfg.batch_size
        parts = [source.batch(train[s:s + bs], rng) for s in range(0, len(train), bs)]
        fp = np.concatenate([q[0] for q in parts])
        fe = np.concatenate([q[1] for q in parts])
    else:
        fp, fe = source.fp[train], source.fe[train]
    return init_localizer(_topology(ds, feature, tcfg), tcfg.seed, ds.positions[train].mean(axis=0), fp, fe)


class _PhaseHook:
    def __init__(self, source, phases, tcfg, ccfg, learn_phases):
        self.source = source
        self.tcfg = tcfg
        self.ccfg = ccfg
        self.learn_phases = learn_phases
        self.schedule = tcfg.schedule()
        self.joint_start = tcfg.freezing_cycles * tcfg.freezing_cycle_epochs
        self.opt = Adam(tcfg.phase_learning_rate)
        self.beta = {"beta": np.array(phases.beta)}
        self._template = phases

    @property
    def phases(self) -> PhaseParams:
        return self._template.with_beta(self.beta["beta"])

    def stage(self, epoch):
        return self.schedule[epoch]

    def learning(self, stage) -> bool:
        return self.learn_phases and stage[0] in ("cycle", "joint")

    def lr(self, epoch) -> float:
        if epoch < self.joint_start:
            return self.tcfg.phase_learning_rate
        k = (epoch - self.joint_start) // self.tcfg.phase_lr_decay_every
        return self.tcfg.phase_learning_rate * self.tcfg.phase_lr_decay ** k

    def update(self, stage, epoch, idx, ctx, d_fp, d_fe) -> float:
        phases = self.phases
        if not self.learn_phases:
            return 0.0
        phys, g_phys = penalty_total(phases, self.ccfg)
        if not self.learning(stage):
            return phys
        src = self.source
        feature = src.feature
        d_p = featurize_backward(ctx["p"], d_fp, feature)  # (B, M, N)
        d_e = featurize_backward(ctx["e"], d_fe, feature)  # (B, R, Ne)
        g = np.zeros_like(phases.beta)
        for j, i in enumerate(idx):
            g += src.sim.vjp_beta(src.coeffs[i], phases, d_p[j], ctx["phi_audio"][j], d_e[j])
        g += g_phys
        mask = None
        if stage[0] == "cycle":
            m = np.zeros_like(g)
            m[stage[1] % len(m)] = 1.0
            mask = {"beta": m}
        self.opt.step(self.beta, {"beta": g}, lr=self.lr(epoch), mask=mask)
        self.source.phases = self.phases
        return phys


def train_joint(scene: Scene, sampler, phases_init: PhaseParams, model_init: LocalizerModel | None = None,
                tcfg: TrainConfig | None = None, ccfg: ConstraintConfig | None = None,
                learn_phases: bool = True):
    """Jointly optimize the estimator and the phase coefficients.

    ``sampler`` is a dataset whose poses and split define the training,
    validation and test locations; its stored traces are ignored because
    captures are re-simulated with the current phases. The schedule runs
    per-rotor cycles (only that rotor's coefficients move), a joint stage,
    then a final stage with frozen phases. The estimator is updated at every
    step. Returns ``(model, phases, history)`` at the best validation epoch.
    """
    tcfg = tcfg or TrainConfig()
    ccfg = ccfg or ConstraintConfig()
    feature = tcfg.feature_config
    ds = sampler
    source = _Source(ds, feature, tcfg, phases=phases_init, scene=scene, live=True)
    hook = _PhaseHook(source, phases_init, tcfg, ccfg, learn_phases)
    model = model_init.copy() if model_init is not None else _init(ds, source, feature, tcfg)
    best, phases, history = _train_loop(ds, source, model, tcfg, len(hook.schedule), phase_hook=hook)
    return best, phases, history


def physics_report(phases: PhaseParams, ccfg: ConstraintConfig | None = None) -> dict:
    return penalty_terms(phases, ccfg or ConstraintConfig())
