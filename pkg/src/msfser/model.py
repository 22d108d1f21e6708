"""Multi-channel emotion regression: fusion, experts, training, evaluation.

Architecture, per utterance:

  acoustic frames --linear+tanh--> h_t --attentive stats pooling--> pooled
  les / gs vectors --linear+tanh--> h_l, h_g
  scalar gate g = sigmoid(W_g [h_l; h_g] + b_g);  h_sem = g*h_l + (1-g)*h_g
  es vector --linear+tanh--> h_ext

  expert A: head(pooled)
  expert B: head(film(pooled | h_sem))      film: y = (1 + mul)*x + add
  expert C: head(film(pooled | h_ext))
  head: linear -> layer_norm -> tanh -> dropout -> linear -> 3

  y[:, d] = sum_e pi[d, e] * expert_e[:, d]   with pi = row-softmax of a
  free (input-independent) routing logit table, one row per output dim
  (valence, arousal, dominance).

The FiLM generators are two-layer MLPs whose output layer starts at
zero, so every expert begins as the plain pooled statistics and the
modulation is learned.  Training minimizes sum_d (1 - CCC_d) with AdamW
and gradient accumulation; the whole graph has hand-written backward
passes and is verifiable by central finite differences.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import LengthMismatch, ShapeMismatch, TooFewUtterances
from .numcore import (
    AdamW,
    Param,
    ccc_columns,
    ccc_loss,
    dropout_bwd,
    dropout_fwd,
    dropout_mask,
    glorot_uniform,
    layer_norm_bwd,
    layer_norm_fwd,
    linear_bwd,
    linear_fwd,
    seeded_rng,
    sigmoid,
    sigmoid_bwd,
    softmax,
    softmax_bwd,
    tanh_bwd,
    tanh_fwd,
)

TARGET_NAMES = ("valence", "arousal", "dominance")
EXPERT_NAMES = ("A", "B", "C")
VAR_FLOOR = 1e-9


@dataclass(frozen=True)
class ModelConfig:
    acoustic_dim: int
    les_dim: int
    gs_dim: int
    es_dim: int
    d_model: int = 32
    att_dim: int = 32
    film_hidden: int = 32
    expert_hidden: int = 32
    experts: tuple[str, ...] = ("A", "B", "C")
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.experts or any(e not in EXPERT_NAMES for e in self.experts):
            raise ValueError(
                f"experts must be a non-empty subset of {EXPERT_NAMES}, "
                f"got {self.experts}")
        if len(set(self.experts)) != len(self.experts):
            raise ValueError(f"duplicate experts in {self.experts}")

    def to_dict(self) -> dict:
        return {
            "acoustic_dim": self.acoustic_dim, "les_dim": self.les_dim,
            "gs_dim": self.gs_dim, "es_dim": self.es_dim,
            "d_model": self.d_model, "att_dim": self.att_dim,
            "film_hidden": self.film_hidden,
            "expert_hidden": self.expert_hidden,
            "experts": list(self.experts), "dropout": self.dropout,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["experts"] = tuple(d.get("experts", EXPERT_NAMES))
        return cls(**d)


@dataclass
class UttExample:
    """One utterance ready for the model."""

    utt_id: str
    frames: np.ndarray              # (T, acoustic_dim)
    les: np.ndarray
    gs: np.ndarray
    es: np.ndarray
    target: np.ndarray | None = None   # (3,) valence, arousal, dominance


@dataclass
class Batch:
    utt_ids: tuple[str, ...]
    frames: list                    # per-utterance (T_i, acoustic_dim)
    les: np.ndarray                 # (B, les_dim)
    gs: np.ndarray
    es: np.ndarray
    targets: np.ndarray | None

    def __len__(self) -> int:
        return len(self.frames)


def make_batch(examples) -> Batch:
    if not examples:
        raise TooFewUtterances("cannot build an empty batch")
    targets = None
    if all(e.target is not None for e in examples):
        targets = np.stack([np.asarray(e.target, dtype=np.float64)
                            for e in examples])
    return Batch(
        utt_ids=tuple(e.utt_id for e in examples),
        frames=[np.asarray(e.frames, dtype=np.float64) for e in examples],
        les=np.stack([np.asarray(e.les, dtype=np.float64) for e in examples]),
        gs=np.stack([np.asarray(e.gs, dtype=np.float64) for e in examples]),
        es=np.stack([np.asarray(e.es, dtype=np.float64) for e in examples]),
        targets=targets,
    )


def config_hash(obj) -> str:
    """Short stable digest of a JSON-serializable config."""
    canon = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


# ------------------------------------------------ composable operations

def attentive_pool(h: np.ndarray, att_w: np.ndarray, att_v: np.ndarray):
    """Attention-weighted mean and standard deviation over frames.

    h is (T, d); the result is (2d,) = [weighted mean; weighted std],
    with the weighted variance floored at 0 before the +1e-9 stabilizer.
    Returns (pooled, cache).
    """
    u = tanh_fwd(h @ att_w)                     # (T, att_dim)
    s = u @ att_v                               # (T, 1)
    a = softmax(s, axis=0)
    m1 = (a * h).sum(axis=0)                    # (d,)
    m2 = (a * h * h).sum(axis=0)
    raw = m2 - m1 * m1
    pos = raw > 0.0
    sd = np.sqrt(np.where(pos, raw, 0.0) + VAR_FLOOR)
    pooled = np.concatenate([m1, sd])
    return pooled, (h, u, a, m1, sd, pos)


def gated_fuse(h_l: np.ndarray, h_g: np.ndarray,
               gate_w: np.ndarray, gate_b: np.ndarray):
    """Scalar-gated blend of the two semantic encodings, per sample.

    g = sigmoid([h_l; h_g] W + b) is (B, 1); output g*h_l + (1-g)*h_g.
    Returns (h_sem, cache).
    """
    cat = np.concatenate([h_l, h_g], axis=1)
    g = sigmoid(linear_fwd(cat, gate_w, gate_b))
    h_sem = g * h_l + (1.0 - g) * h_g
    return h_sem, (h_l, h_g, cat, g)


def film_modulate(x: np.ndarray, cond: np.ndarray,
                  w1: np.ndarray, b1: np.ndarray,
                  w2: np.ndarray, b2: np.ndarray):
    """Feature-wise linear modulation of x, conditioned on cond.

    A two-layer MLP maps cond to (scale_raw, shift); the output is
    (1 + scale_raw) * x + shift, so all-zero MLP output is exactly the
    identity.  Returns (modulated, cache).
    """
    z1 = linear_fwd(cond, w1, b1)
    t1 = tanh_fwd(z1)
    mods = linear_fwd(t1, w2, b2)
    half = mods.shape[1] // 2
    if mods.shape[1] != 2 * x.shape[1]:
        raise ShapeMismatch(
            f"film: modulator width {mods.shape[1]} != 2 * {x.shape[1]}")
    gamma = 1.0 + mods[:, :half]
    beta = mods[:, half:]
    return gamma * x + beta, (cond, t1, gamma)


def moe_combine(expert_out: np.ndarray, route_logits: np.ndarray):
    """Blend expert predictions with per-output-dim routing weights.

    expert_out is (E, B, D); route_logits is (D, E) and is softmaxed
    over experts row-wise.  Returns (pred (B, D), pi (D, E)).
    """
    if expert_out.shape[0] != route_logits.shape[1] \
            or expert_out.shape[2] != route_logits.shape[0]:
        raise ShapeMismatch(
            f"moe: {expert_out.shape[0]} experts x {expert_out.shape[2]} dims "
            f"vs logits {route_logits.shape}")
    pi = softmax(route_logits, axis=1)
    pred = np.einsum("de,ebd->bd", pi, expert_out)
    return pred, pi


def _pool_bwd(cache, att_w: np.ndarray, att_v: np.ndarray, dpooled: np.ndarray):
    h, u, a, m1, sd, pos = cache
    d = h.shape[1]
    dm1 = dpooled[:d].copy()
    dvar = (dpooled[d:] / (2.0 * sd)) * pos
    dm2 = dvar
    dm1 += -2.0 * m1 * dvar
    dh = a * dm1[None, :] + a * (2.0 * h) * dm2[None, :]
    da = (h @ dm1 + (h * h) @ dm2)[:, None]
    ds = softmax_bwd(a, da, axis=0)
    datt_v = u.T @ ds
    du = ds @ att_v.T
    dz = tanh_bwd(u, du)
    datt_w = h.T @ dz
    dh += dz @ att_w.T
    return dh, datt_w, datt_v


class MsfSerModel:
    """The gated-fusion mixture-of-experts regressor."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = seeded_rng(config.seed)
        d, p = config.d_model, 2 * config.d_model
        self._params: dict[str, Param] = {}

        def par(name, value):
            self._params[name] = Param(name, value)

        par("enc.w", glorot_uniform(rng, config.acoustic_dim, d))
        par("enc.b", np.zeros((1, d)))
        par("att.w", glorot_uniform(rng, d, config.att_dim))
        par("att.v", glorot_uniform(rng, config.att_dim, 1))

        if "B" in config.experts:
            par("les.w", glorot_uniform(rng, config.les_dim, d))
            par("les.b", np.zeros((1, d)))
            par("gs.w", glorot_uniform(rng, config.gs_dim, d))
            par("gs.b", np.zeros((1, d)))
            par("gate.w", glorot_uniform(rng, 2 * d, 1))
            par("gate.b", np.zeros((1, 1)))
        if "C" in config.experts:
            par("es.w", glorot_uniform(rng, config.es_dim, d))
            par("es.b", np.zeros((1, d)))
        for name in ("B", "C"):
            if name in config.experts:
                par(f"film{name}.w1", glorot_uniform(rng, d, config.film_hidden))
                par(f"film{name}.b1", np.zeros((1, config.film_hidden)))
                par(f"film{name}.w2", np.zeros((config.film_hidden, 2 * p)))
                par(f"film{name}.b2", np.zeros((1, 2 * p)))
        for name in config.experts:
            par(f"head{name}.w1", glorot_uniform(rng, p, config.expert_hidden))
            par(f"head{name}.b1", np.zeros((1, config.expert_hidden)))
            par(f"head{name}.ln_g", np.ones((1, config.expert_hidden)))
            par(f"head{name}.ln_b", np.zeros((1, config.expert_hidden)))
            par(f"head{name}.w2", glorot_uniform(rng, config.expert_hidden, 3))
            par(f"head{name}.b2", np.zeros((1, 3)))
        par("route.logits", np.zeros((3, len(config.experts))))

    # ------------------------------------------------------ accessors

    def params(self):
        return list(self._params.values())

    def param(self, name: str) -> Param:
        return self._params[name]

    @property
    def n_params(self) -> int:
        return sum(p.value.size for p in self.params())

    def params_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load_params(self, values: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(values)
        extra = set(values) - set(self._params)
        if missing or extra:
            raise ShapeMismatch(
                f"parameter names do not match model: missing {sorted(missing)}, "
                f"unexpected {sorted(extra)}")
        for name, arr in values.items():
            if arr.shape != self._params[name].value.shape:
                raise ShapeMismatch(
                    f"param {name!r}: checkpoint shape {arr.shape} != "
                    f"model shape {self._params[name].value.shape}")
            self._params[name].value[...] = arr

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    # -------------------------------------------------------- forward

    def _check_batch(self, batch: Batch) -> None:
        cfg = self.config
        for i, fr in enumerate(batch.frames):
            if fr.ndim != 2 or fr.shape[1] != cfg.acoustic_dim:
                raise ShapeMismatch(
                    f"utterance {batch.utt_ids[i]!r}: frames shape {fr.shape}, "
                    f"expected (T, {cfg.acoustic_dim})")
            if fr.shape[0] < 1:
                raise ShapeMismatch(
                    f"utterance {batch.utt_ids[i]!r} has no frames")
        for name, arr, want in (("les", batch.les, cfg.les_dim),
                                ("gs", batch.gs, cfg.gs_dim),
                                ("es", batch.es, cfg.es_dim)):
            if arr.shape != (len(batch), want):
                raise ShapeMismatch(
                    f"{name} block has shape {arr.shape}, expected "
                    f"({len(batch)}, {want})")

    def forward(self, batch: Batch, train: bool = False,
                rng: np.random.Generator | None = None):
        """Predictions (B, 3) plus the cache needed for backward()."""
        self._check_batch(batch)
        cfg = self.config
        v = lambda name: self._params[name].value
        if train and cfg.dropout > 0.0 and rng is None:
            raise ValueError("train-mode forward with dropout needs an rng")

        pooled_rows, pool_caches, enc_caches = [], [], []
        for fr in batch.frames:
            z = linear_fwd(fr, v("enc.w"), v("enc.b"))
            h = tanh_fwd(z)
            pooled, pc = attentive_pool(h, v("att.w"), v("att.v"))
            pooled_rows.append(pooled)
            pool_caches.append(pc)
            enc_caches.append((fr, h))
        pooled = np.stack(pooled_rows)              # (B, 2d)

        cache = {"batch": batch, "pooled": pooled,
                 "pool_caches": pool_caches, "enc_caches": enc_caches,
                 "cond": {}, "film": {}, "head": {}}

        if "B" in cfg.experts:
            h_l = tanh_fwd(linear_fwd(batch.les, v("les.w"), v("les.b")))
            h_g = tanh_fwd(linear_fwd(batch.gs, v("gs.w"), v("gs.b")))
            h_sem, sem_cache = gated_fuse(h_l, h_g, v("gate.w"), v("gate.b"))
            cache["sem"] = sem_cache
            cache["cond"]["B"] = h_sem
        if "C" in cfg.experts:
            h_e = tanh_fwd(linear_fwd(batch.es, v("es.w"), v("es.b")))
            cache["cond"]["C"] = h_e

        outs = []
        for name in cfg.experts:
            x = pooled
            if name in ("B", "C"):
                x, film_cache = film_modulate(
                    pooled, cache["cond"][name],
                    v(f"film{name}.w1"), v(f"film{name}.b1"),
                    v(f"film{name}.w2"), v(f"film{name}.b2"))
                cache["film"][name] = film_cache
            hz = linear_fwd(x, v(f"head{name}.w1"), v(f"head{name}.b1"))
            ln, ln_cache = layer_norm_fwd(hz, v(f"head{name}.ln_g"),
                                          v(f"head{name}.ln_b"))
            act = tanh_fwd(ln)
            mask = dropout_mask(rng if rng is not None else seeded_rng(0),
                                act.shape, cfg.dropout, train)
            dropped = dropout_fwd(act, mask)
            out = linear_fwd(dropped, v(f"head{name}.w2"), v(f"head{name}.b2"))
            cache["head"][name] = (x, ln_cache, act, mask, dropped)
            outs.append(out)

        expert_out = np.stack(outs)                 # (E, B, 3)
        pred, pi = moe_combine(expert_out, v("route.logits"))
        cache["expert_out"] = expert_out
        cache["pi"] = pi
        return pred, cache

    # ------------------------------------------------------- backward

    def backward(self, cache, dpred: np.ndarray) -> None:
        """Accumulate d(loss)/d(param) into .grad for every parameter."""
        cfg = self.config
        v = lambda name: self._params[name].value
        g = lambda name: self._params[name].grad
        batch: Batch = cache["batch"]
        pooled = cache["pooled"]
        expert_out, pi = cache["expert_out"], cache["pi"]

        dpi = np.einsum("bd,ebd->de", dpred, expert_out)
        g("route.logits")[...] += softmax_bwd(pi, dpi, axis=1)
        dout = np.einsum("de,bd->ebd", pi, dpred)

        dpooled = np.zeros_like(pooled)
        dcond = {name: None for name in cache["cond"]}
        for idx, name in enumerate(cfg.experts):
            x, ln_cache, act, mask, dropped = cache["head"][name]
            ddropped, dw2, db2 = linear_bwd(dropped, v(f"head{name}.w2"),
                                            dout[idx])
            g(f"head{name}.w2")[...] += dw2
            g(f"head{name}.b2")[...] += db2
            dact = dropout_bwd(mask, ddropped)
            dln = tanh_bwd(act, dact)
            dhz, dlng, dlnb = layer_norm_bwd(ln_cache, dln)
            g(f"head{name}.ln_g")[...] += dlng
            g(f"head{name}.ln_b")[...] += dlnb
            dx, dw1, db1 = linear_bwd(x, v(f"head{name}.w1"), dhz)
            g(f"head{name}.w1")[...] += dw1
            g(f"head{name}.b1")[...] += db1

            if name in ("B", "C"):
                cond, t1, gamma = cache["film"][name]
                dgamma = dx * pooled
                dbeta = dx
                dpooled += dx * gamma
                dmods = np.concatenate([dgamma, dbeta], axis=1)
                dt1, dfw2, dfb2 = linear_bwd(t1, v(f"film{name}.w2"), dmods)
                g(f"film{name}.w2")[...] += dfw2
                g(f"film{name}.b2")[...] += dfb2
                dz1 = tanh_bwd(t1, dt1)
                dc, dfw1, dfb1 = linear_bwd(cond, v(f"film{name}.w1"), dz1)
                g(f"film{name}.w1")[...] += dfw1
                g(f"film{name}.b1")[...] += dfb1
                dcond[name] = dc if dcond[name] is None else dcond[name] + dc
            else:
                dpooled += dx

        if "B" in cfg.experts:
            h_l, h_g, cat, gate = cache["sem"]
            dh_sem = dcond["B"]
            dgate = ((h_l - h_g) * dh_sem).sum(axis=1, keepdims=True)
            dh_l = gate * dh_sem
            dh_g = (1.0 - gate) * dh_sem
            dzg = sigmoid_bwd(gate, dgate)
            dcat, dgw, dgb = linear_bwd(cat, v("gate.w"), dzg)
            g("gate.w")[...] += dgw
            g("gate.b")[...] += dgb
            d = h_l.shape[1]
            dh_l += dcat[:, :d]
            dh_g += dcat[:, d:]
            dzl = tanh_bwd(h_l, dh_l)
            _, dlw, dlb = linear_bwd(batch.les, v("les.w"), dzl)
            g("les.w")[...] += dlw
            g("les.b")[...] += dlb
            dzgs = tanh_bwd(h_g, dh_g)
            _, dgsw, dgsb = linear_bwd(batch.gs, v("gs.w"), dzgs)
            g("gs.w")[...] += dgsw
            g("gs.b")[...] += dgsb
        if "C" in cfg.experts:
            h_e = cache["cond"]["C"]
            dze = tanh_bwd(h_e, dcond["C"])
            _, dew, deb = linear_bwd(batch.es, v("es.w"), dze)
            g("es.w")[...] += dew
            g("es.b")[...] += deb

        for i in range(len(batch)):
            _, h = cache["enc_caches"][i]
            dh, daw, dav = _pool_bwd(cache["pool_caches"][i], v("att.w"),
                                     v("att.v"), dpooled[i])
            g("att.w")[...] += daw
            g("att.v")[...] += dav
            dz = tanh_bwd(h, dh)
            _, dencw, dencb = linear_bwd(batch.frames[i], v("enc.w"), dz)
            g("enc.w")[...] += dencw
            g("enc.b")[...] += dencb

    # ------------------------------------------------- loss / predict

    def loss_and_grad(self, batch: Batch, train: bool = False,
                      rng: np.random.Generator | None = None,
                      grad_scale: float = 1.0) -> float:
        if batch.targets is None:
            raise LengthMismatch("batch has no targets")
        pred, cache = self.forward(batch, train=train, rng=rng)
        loss, dpred = ccc_loss(pred, batch.targets)
        self.backward(cache, dpred * grad_scale)
        return loss

    def predict(self, batch: Batch) -> np.ndarray:
        pred, _ = self.forward(batch, train=False)
        return pred


# ------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    accum_steps: int = 4
    lr: float = 1e-5
    weight_decay: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "accum_steps": self.accum_steps, "lr": self.lr,
                "weight_decay": self.weight_decay, "seed": self.seed}


def train_model(model: MsfSerModel, train_set, cfg: TrainConfig,
                dev_set=None, log=None) -> list[dict]:
    """Seeded, deterministic training; returns per-epoch history rows.

    Each optimizer step averages gradients over up to accum_steps
    micro-batches of batch_size utterances.  Micro-batches of fewer than
    two utterances are skipped: the concordance loss is constant there.
    """
    if len(train_set) < 2:
        raise TooFewUtterances(
            f"need at least 2 training utterances, got {len(train_set)}")
    opt = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = seeded_rng(cfg.seed)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        micro = [order[i:i + cfg.batch_size]
                 for i in range(0, len(order), cfg.batch_size)]
        micro = [m for m in micro if len(m) >= 2]
        losses = []
        for start in range(0, len(micro), cfg.accum_steps):
            group = micro[start:start + cfg.accum_steps]
            model.zero_grad()
            for idx in group:
                batch = make_batch([train_set[i] for i in idx])
                loss = model.loss_and_grad(batch, train=True, rng=rng,
                                           grad_scale=1.0 / len(group))
                losses.append(loss)
            opt.step(model.params())
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if dev_set is not None:
            row["dev_ccc_avg"] = float(np.mean(
                evaluate(model, dev_set)["ccc"]))
        history.append(row)
        if log is not None:
            log(row)
    return history


def evaluate(model: MsfSerModel, dataset, eval_batch: int = 64) -> dict:
    """Held-out predictions and per-dimension CCC."""
    if len(dataset) < 2:
        raise TooFewUtterances(
            f"need at least 2 utterances to evaluate, got {len(dataset)}")
    preds, targets = [], []
    for start in range(0, len(dataset), eval_batch):
        batch = make_batch(dataset[start:start + eval_batch])
        if batch.targets is None:
            raise LengthMismatch("evaluation requires targets on every example")
        preds.append(model.predict(batch))
        targets.append(batch.targets)
    pred = np.concatenate(preds)
    target = np.concatenate(targets)
    per_dim = ccc_columns(pred, target)
    return {"ccc": per_dim, "pred": pred, "target": target,
            "n_utterances": len(dataset)}


def eval_report(model: MsfSerModel, dataset, extra_config: dict | None = None) -> dict:
    """The JSON document emitted by the eval command."""
    res = evaluate(model, dataset)
    cfg = {"model": model.config.to_dict()}
    if extra_config:
        cfg.update(extra_config)
    return {
        "ccc_v": float(res["ccc"][0]),
        "ccc_a": float(res["ccc"][1]),
        "ccc_d": float(res["ccc"][2]),
        "ccc_avg": float(np.mean(res["ccc"])),
        "n_utterances": res["n_utterances"],
        "config_hash": config_hash(cfg),
    }
