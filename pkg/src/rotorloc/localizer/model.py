"""Compact location estimator with hand-written backpropagation.

Topology: every (mic, frame) feature vector is projected to a token, offset by
learned frame and mic embeddings, rectified and averaged over frames. Encoder
phase traces get the same treatment with rotor embeddings. The per-mic and
per-rotor summaries plus ``(sin az, cos az)`` feed two ReLU layers and a
linear 2-D output.

Checkpoint layout (little-endian): magic ``MAVM``, u32 version, u32 count,
that many u32 topology values, then every array in :data:`PARAM_ORDER`
as f64. A JSON sidecar carries the training config and history.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..core import Vec2
from ..errors import ShapeMismatch
from ..serialization import read_json, write_json
from .features import WINDOWS, FeatureConfig, featurize

MAGIC = b"MAVM"
VERSION = 1
PARAM_ORDER = ("mu_p", "sd_p", "mu_e", "sd_e",
               "Wp", "bp", "Etp", "Em", "We", "be", "Ete", "Er",
               "W1", "b1", "W2", "b2", "W3", "b3")
BUFFERS = ("mu_p", "sd_p", "mu_e", "sd_e")
STD_FLOOR = 5e-2  # many inter-harmonic cells barely vary across poses


@dataclass(frozen=True)
class Topology:
    n_mics: int
    n_frames: int
    n_feat: int
    n_rotors: int
    n_frames_e: int
    n_feat_e: int
    token_width: int = 32
    hidden_width: int = 256
    window: int = 64
    hop: int = 32
    frontend_pool: int = 1
    window_index: int = 0

    @property
    def feature(self) -> FeatureConfig:
        return FeatureConfig(self.window, self.hop, WINDOWS[self.window_index], self.frontend_pool)

    @property
    def input_width(self) -> int:
        return (self.n_mics + self.n_rotors) * self.token_width + 2

    def shapes(self) -> dict:
        d, h = self.token_width, self.hidden_width
        return {
            "mu_p": (self.n_mics, self.n_frames, self.n_feat),
            "sd_p": (self.n_mics, self.n_frames, self.n_feat),
            "mu_e": (self.n_rotors, self.n_frames_e, self.n_feat_e),
            "sd_e": (self.n_rotors, self.n_frames_e, self.n_feat_e),
            "Wp": (self.n_feat, d), "bp": (d,), "Etp": (self.n_frames, d), "Em": (self.n_mics, d),
            "We": (self.n_feat_e, d), "be": (d,), "Ete": (self.n_frames_e, d), "Er": (self.n_rotors, d),
            "W1": (self.input_width, h), "b1": (h,),
            "W2": (h, h), "b2": (h,),
            "W3": (h, 2), "b3": (2,),
        }

    @classmethod
    def for_inputs(cls, n_mics, n_samples, n_rotors, n_enc, feature: FeatureConfig,
                   token_width=32, hidden_width=256) -> "Topology":
        return cls(n_mics, feature.n_frames(n_samples), 3 * feature.n_bins, n_rotors,
                   feature.n_frames(n_enc), 3 * feature.n_bins, token_width, hidden_width,
                   feature.window, feature.hop, feature.frontend_pool,
                   WINDOWS.index(feature.window_function))


class LocalizerModel:
    def __init__(self, topology: Topology, params: dict):
        shapes = topology.shapes()
        for name in PARAM_ORDER:
            if params[name].shape != shapes[name]:
                raise ShapeMismatch(f"{name}: expected {shapes[name]}, got {params[name].shape}")
        self.topology = topology
        self.params = {name: np.asarray(params[name], dtype=float) for name in PARAM_ORDER}

    @property
    def feature(self) -> FeatureConfig:
        return self.topology.feature

    def copy(self) -> "LocalizerModel":
        return LocalizerModel(self.topology, {k: v.copy() for k, v in self.params.items()})

    def trainable(self):
        return [n for n in PARAM_ORDER if n not in BUFFERS]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in PARAM_ORDER])

    # -- io ------------------------------------------------------------------

    def to_bytes(self) -> bytes:
        topo = list(asdict(self.topology).values())
        head = struct.pack(f"<4sII{len(topo)}I", MAGIC, VERSION, len(topo), *topo)
        return head + self.flat().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "LocalizerModel":
        magic, version, n = struct.unpack_from("<4sII", buf, 0)
        if magic != MAGIC or version != VERSION:
            raise ValueError("not a localizer checkpoint")
        topo = struct.unpack_from(f"<{n}I", buf, 12)
        topology = Topology(*topo)
        flat = np.frombuffer(buf, dtype="<f8", offset=12 + 4 * n).astype(float)
        params, i = {}, 0
        for name in PARAM_ORDER:
            shape = topology.shapes()[name]
            size = int(np.prod(shape))
            params[name] = flat[i:i + size].reshape(shape)
            i += size
        if i != len(flat):
            raise ShapeMismatch("checkpoint parameter count does not match its topology")
        return cls(topology, params)

    def save(self, path, sidecar: dict | None = None) -> None:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        if sidecar is not None:
            write_json(path.with_suffix(path.suffix + ".json"), sidecar)

    @classmethod
    def load(cls, path) -> "LocalizerModel":
        return cls.from_bytes(Path(path).read_bytes())


def load_sidecar(path) -> dict:
    return read_json(Path(str(path) + ".json"))


def init_localizer(topology: Topology, seed: int, center=(0.0, 0.0),
                   feats_p: np.ndarray | None = None, feats_e: np.ndarray | None = None) -> LocalizerModel:
    """He-initialized weights; feature standardization from sample features if given."""
    rng = np.random.default_rng([seed, 0])
    shapes = topology.shapes()
    params = {}
    for name in PARAM_ORDER:
        shape = shapes[name]
        if name.startswith("W"):
            params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape)
        elif name.startswith("E"):
            params[name] = rng.normal(0.0, 0.1, size=shape)
        else:
            params[name] = np.zeros(shape)
    params["W3"] *= 0.1
    params["b3"] = np.asarray(center, dtype=float).copy()
    params["sd_p"] = np.ones(shapes["sd_p"])
    params["sd_e"] = np.ones(shapes["sd_e"])
    if feats_p is not None:
        params["mu_p"] = feats_p.mean(axis=0)
        params["sd_p"] = np.maximum(feats_p.std(axis=0), STD_FLOOR)
    if feats_e is not None:
        # centered only: encoder features are O(1) and often constant across a
        # dataset, so scaling by their spread would blow up once phases move
        params["mu_e"] = feats_e.mean(axis=0)
    return LocalizerModel(topology, params)


def _tokens(x, W, b, Et, Eo):
    # x: (B, O, T, F) -> pre-activation (B, O, T, d)
    return x @ W + b + Et[None, None, :, :] + Eo[None, :, None, :]


def check_inputs(model: LocalizerModel, fp: np.ndarray, fe: np.ndarray):
    t = model.topology
    if fp.shape[1:] != (t.n_mics, t.n_frames, t.n_feat):
        raise ShapeMismatch(f"pressure features {fp.shape[1:]} do not match topology "
                            f"{(t.n_mics, t.n_frames, t.n_feat)}")
    if fe.shape[1:] != (t.n_rotors, t.n_frames_e, t.n_feat_e):
        raise ShapeMismatch(f"phase features {fe.shape[1:]} do not match topology "
                            f"{(t.n_rotors, t.n_frames_e, t.n_feat_e)}")


def forward(model: LocalizerModel, fp: np.ndarray, fe: np.ndarray, azimuth: np.ndarray,
            keep: bool = False):
    """Batched forward pass; returns predictions ``(B, 2)`` and optionally a cache."""
    P = model.params
    check_inputs(model, fp, fe)
    xp = (fp - P["mu_p"]) / P["sd_p"]
    xe = (fe - P["mu_e"]) / P["sd_e"]
    ap = _tokens(xp, P["Wp"], P["bp"], P["Etp"], P["Em"])
    ae = _tokens(xe, P["We"], P["be"], P["Ete"], P["Er"])
    hp = np.maximum(ap, 0).mean(axis=2)
    he = np.maximum(ae, 0).mean(axis=2)
    az = np.asarray(azimuth, dtype=float).reshape(-1)
    z0 = np.concatenate([hp.reshape(len(hp), -1), he.reshape(len(he), -1),
                         np.sin(az)[:, None], np.cos(az)[:, None]], axis=1)
    a1 = z0 @ P["W1"] + P["b1"]
    z1 = np.maximum(a1, 0)
    a2 = z1 @ P["W2"] + P["b2"]
    z2 = np.maximum(a2, 0)
    out = z2 @ P["W3"] + P["b3"]
    if not keep:
        return out
    return out, dict(xp=xp, xe=xe, ap=ap, ae=ae, z0=z0, a1=a1, z1=z1, a2=a2, z2=z2)


def backward(model: LocalizerModel, cache: dict, d_out: np.ndarray, need_inputs: bool = False):
    """Gradients of a scalar w.r.t. trainable parameters (and raw input features)."""
    P = model.params
    t = model.topology
    g = {}
    g["W3"] = cache["z2"].T @ d_out
    g["b3"] = d_out.sum(axis=0)
    d_a2 = (d_out @ P["W3"].T) * (cache["a2"] > 0)
    g["W2"] = cache["z1"].T @ d_a2
    g["b2"] = d_a2.sum(axis=0)
    d_a1 = (d_a2 @ P["W2"].T) * (cache["a1"] > 0)
    g["W1"] = cache["z0"].T @ d_a1
    g["b1"] = d_a1.sum(axis=0)
    d_z0 = d_a1 @ P["W1"].T

    n = len(d_out)
    split = t.n_mics * t.token_width
    d_hp = d_z0[:, :split].reshape(n, t.n_mics, 1, t.token_width)
    d_he = d_z0[:, split:split + t.n_rotors * t.token_width].reshape(n, t.n_rotors, 1, t.token_width)

    inputs = {}
    for tag, d_h, a, x, n_frames, W, Et, Eo, sd in (
        ("p", d_hp, cache["ap"], cache["xp"], t.n_frames, "Wp", "Etp", "Em", "sd_p"),
        ("e", d_he, cache["ae"], cache["xe"], t.n_frames_e, "We", "Ete", "Er", "sd_e"),
    ):
        d_a = (d_h / n_frames) * (a > 0)  # (B, O, T, d)
        g[W] = np.einsum("botf,botd->fd", x, d_a)
        g["b" + tag] = d_a.sum(axis=(0, 1, 2))
        g[Et] = d_a.sum(axis=(0, 1))
        g[Eo] = d_a.sum(axis=(0, 2))
        if need_inputs:
            inputs[tag] = (d_a @ P[W].T) / P[sd]
    if need_inputs:
        return g, inputs["p"], inputs["e"]
    return g


def loss_and_grad(model: LocalizerModel, fp, fe, azimuth, labels, need_inputs: bool = False):
    """Mean squared localization error over the batch and its gradients."""
    out, cache = forward(model, fp, fe, azimuth, keep=True)
    diff = out - labels
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    d_out = 2.0 * diff / len(diff)
    res = backward(model, cache, d_out, need_inputs)
    return (loss,) + (res if need_inputs else (res,))


def predict(model: LocalizerModel, p, phi, azimuth: float) -> Vec2:
    """Location estimate from one pressure trace, one encoder trace and the azimuth."""
    cfg = model.feature
    fp = featurize(p.samples, cfg)[None]
    fe = featurize(phi.samples, cfg)[None]
    out = forward(model, fp, fe, np.array([azimuth]))
    return Vec2(*out[0])


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, {}

    def step(self, params: dict, grads: dict, lr: float | None = None, mask: dict | None = None):
        lr = self.lr if lr is None else lr
        for name, grad in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
                self.t[name] = 0
            if mask is not None and name in mask:
                grad = grad * mask[name]
            self.t[name] += 1
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad * grad
            m_hat = self.m[name] / (1 - self.beta1 ** self.t[name])
            v_hat = self.v[name] / (1 - self.beta2 ** self.t[name])
            update = lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if mask is not None and name in mask:
                update = update * mask[name]
            params[name] = params[name] - update
