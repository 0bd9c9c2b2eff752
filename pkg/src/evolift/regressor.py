"""Cascaded deep 2D-to-3D coordinate regressor, implemented from scratch on
numpy in double precision.

Each deep learner is a residual MLP: an input projection followed by R
residual blocks of two dense->batchnorm->relu->dropout layers, then a linear
output projection. Learners after the first start with a zeroed output
projection so every new stage begins as an exact no-op on the running
prediction, and are trained on the residual targets of the cascade so far.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import mpjpe

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class RegressorError(Exception):
    pass


class BatchTooSmall(RegressorError):
    pass


class InvalidInput(RegressorError):
    pass


class NumericalDivergence(RegressorError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class LearnerConfig:
    width: int = 1024
    blocks: int = 3
    dropout_rate: float = 0.5
    input_dim: int = 34
    output_dim: int = 51

    def __post_init__(self):
        if self.width < 4:
            raise RegressorError("width must be >= 4")
        if self.blocks < 0:
            raise RegressorError("blocks must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise RegressorError("dropout_rate must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rng_seed: int = 0
    concat_estimates: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise RegressorError("bad training configuration")


def _fan_in_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class DeepLearner:
    """One stage of the cascade; owns its parameters, batch-norm running
    statistics, and the forward/backward passes."""

    def __init__(self, config: LearnerConfig, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        d, r = config.width, config.blocks
        self.params: dict[str, np.ndarray] = {}
        self.stats: dict[str, np.ndarray] = {}
        # dense layers feeding batch norm carry no bias: the normalization
        # cancels any constant shift and its beta parameter plays that role
        self._add_dense("in", config.input_dim, d, rng)
        self._add_bn("in")
        for blk in range(r):
            for half in (1, 2):
                name = f"blk{blk}.{half}"
                self._add_dense(name, d, d, rng)
                self._add_bn(name)
        self.params["out.w"] = _fan_in_uniform(rng, d, config.output_dim)
        self.params["out.b"] = np.zeros(config.output_dim)
        self._bn_layers = ["in"] + [f"blk{b}.{h}" for b in range(r) for h in (1, 2)]

    def _add_dense(self, name, fan_in, fan_out, rng):
        self.params[f"{name}.w"] = _fan_in_uniform(rng, fan_in, fan_out)

    def _add_bn(self, name):
        d = self.params[f"{name}.w"].shape[1]
        self.params[f"{name}.gamma"] = np.ones(d)
        self.params[f"{name}.beta"] = np.zeros(d)
        self.stats[f"{name}.mean"] = np.zeros(d)
        self.stats[f"{name}.var"] = np.ones(d)

    def zero_output(self):
        """Make the learner an exact no-op contributor until trained."""
        self.params["out.w"][:] = 0.0
        self.params["out.b"][:] = 0.0

    def param_names(self):
        return list(self.params)

    def draw_masks(self, batch, rng):
        """Inverted-dropout masks (already scaled by 1/keep) for one pass."""
        rate = self.config.dropout_rate
        keep = 1.0 - rate
        masks = []
        for _ in self._bn_layers:
            if rate == 0.0:
                masks.append(np.ones((batch, self.config.width)))
            else:
                masks.append((rng.random((batch, self.config.width)) >= rate) / keep)
        return masks

    # -- forward / backward ------------------------------------------------

    def _bn(self, name, x, train, cache):
        gamma, beta = self.params[f"{name}.gamma"], self.params[f"{name}.beta"]
        if train:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (x - mu) * inv_std
            self.stats[f"{name}.mean"] += BN_MOMENTUM * (mu - self.stats[f"{name}.mean"])
            self.stats[f"{name}.var"] += BN_MOMENTUM * (var - self.stats[f"{name}.var"])
        else:
            inv_std = 1.0 / np.sqrt(self.stats[f"{name}.var"] + BN_EPS)
            xhat = (x - self.stats[f"{name}.mean"]) * inv_std
        cache[f"{name}.xhat"] = xhat
        cache[f"{name}.inv_std"] = inv_std
        cache[f"{name}.train"] = train
        return gamma * xhat + beta

    def _bn_backward(self, name, dout, cache):
        xhat = cache[f"{name}.xhat"]
        inv_std = cache[f"{name}.inv_std"]
        gamma = self.params[f"{name}.gamma"]
        grads = {f"{name}.gamma": (dout * xhat).sum(axis=0),
                 f"{name}.beta": dout.sum(axis=0)}
        dxhat = dout * gamma
        if cache[f"{name}.train"]:
            n = dout.shape[0]
            dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0)
                                  - xhat * (dxhat * xhat).sum(axis=0))
        else:
            dx = dxhat * inv_std
        return dx, grads

    def _stage(self, name, x, mask, train, cache):
        z = x @ self.params[f"{name}.w"]
        cache[f"{name}.x"] = x
        z = self._bn(name, z, train, cache)
        cache[f"{name}.pre_relu"] = z
        z = np.maximum(z, 0.0)
        if train:
            z = z * mask
            cache[f"{name}.mask"] = mask
        return z

    def _stage_backward(self, name, dout, cache, grads):
        if f"{name}.mask" in cache:
            dout = dout * cache[f"{name}.mask"]
        dout = dout * (cache[f"{name}.pre_relu"] > 0)
        dout, bn_grads = self._bn_backward(name, dout, cache)
        grads.update(bn_grads)
        x = cache[f"{name}.x"]
        grads[f"{name}.w"] = x.T @ dout
        return dout @ self.params[f"{name}.w"].T

    def _forward(self, x, train, rng=None, masks=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise InvalidInput(f"expected (n, {self.config.input_dim}) inputs")
        if not np.all(np.isfinite(x)):
            raise InvalidInput("non-finite inputs")
        if train and x.shape[0] < 2:
            raise BatchTooSmall("batch-norm statistics need at least 2 samples")
        if train and masks is None:
            rng = np.random.default_rng(0) if rng is None else rng
            masks = self.draw_masks(x.shape[0], rng)
        cache: dict[str, np.ndarray] = {"masks": masks}
        h = self._stage("in", x, masks[0] if train else None, train, cache)
        for blk in range(self.config.blocks):
            z = self._stage(f"blk{blk}.1", h, masks[1 + 2 * blk] if train else None,
                            train, cache)
            z = self._stage(f"blk{blk}.2", z, masks[2 + 2 * blk] if train else None,
                            train, cache)
            cache[f"blk{blk}.skip"] = h
            h = h + z
        cache["head"] = h
        out = h @ self.params["out.w"] + self.params["out.b"]
        return out, cache

    def forward(self, x, mode="eval", rng=None, masks=None):
        """Run the network; "train" mode uses batch statistics and dropout,
        "eval" mode uses running statistics and is deterministic."""
        if mode not in ("train", "eval"):
            raise RegressorError(f"unknown mode {mode!r}")
        out, _ = self._forward(x, mode == "train", rng=rng, masks=masks)
        return out

    def gradients(self, x, targets, rng=None, masks=None):
        """Mean-squared-error loss and exact analytic gradients for the drawn
        dropout masks. Returns (loss, grads, masks) so the masks can be frozen
        and replayed by finite-difference checks."""
        targets = np.asarray(targets, dtype=np.float64)
        out, cache = self._forward(x, True, rng=rng, masks=masks)
        diff = out - targets
        loss = float(np.mean(diff * diff))
        if not np.isfinite(loss):
            raise NumericalDivergence(f"loss diverged to {loss}")
        grads: dict[str, np.ndarray] = {}
        dout = 2.0 * diff / diff.size
        grads["out.w"] = cache["head"].T @ dout
        grads["out.b"] = dout.sum(axis=0)
        dh = dout @ self.params["out.w"].T
        for blk in reversed(range(self.config.blocks)):
            dz = self._stage_backward(f"blk{blk}.2", dh, cache, grads)
            dz = self._stage_backward(f"blk{blk}.1", dz, cache, grads)
            dh = dh + dz
        self._stage_backward("in", dh, cache, grads)
        return loss, grads, cache["masks"]


def adam_init(params):
    return {"t": 0,
            "m": {k: np.zeros_like(v) for k, v in params.items()},
            "v": {k: np.zeros_like(v) for k, v in params.items()}}


def adam_step(params, grads, state, config: TrainConfig):
    """Standard bias-corrected Adam update, applied in place."""
    state["t"] += 1
    t = state["t"]
    b1, b2 = config.beta1, config.beta2
    for key, g in grads.items():
        m = state["m"][key]
        v = state["v"][key]
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        params[key] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state


@dataclass
class Cascade:
    learners: list[DeepLearner]
    input_mean: np.ndarray
    input_std: np.ndarray
    output_mean: np.ndarray
    output_std: np.ndarray
    concat_estimates: bool = False
    train_log: list[float] = field(default_factory=list)

    @property
    def length(self):
        return len(self.learners)

    def _stage_inputs(self, xn, est, t):
        if t == 0 or not self.concat_estimates:
            return xn
        return np.concatenate([xn, est], axis=1)

    def predict(self, keypoints2d):
        """Sum the eval-mode outputs of all learners and de-normalize; accepts
        one (J, 2) pose or a (N, J, 2) batch and mirrors the shape."""
        kp = np.asarray(keypoints2d, dtype=np.float64)
        single = kp.ndim == 2
        if single:
            kp = kp[None]
        if not np.all(np.isfinite(kp)):
            raise InvalidInput("non-finite keypoints")
        xn = (kp.reshape(kp.shape[0], -1) - self.input_mean) / self.input_std
        est = np.zeros((kp.shape[0], self.output_mean.size))
        for t, learner in enumerate(self.learners):
            est = est + learner.forward(self._stage_inputs(xn, est, t), mode="eval")
        out = (est * self.output_std + self.output_mean).reshape(kp.shape[0], -1, 3)
        return out[0] if single else out


def _train_single(learner, x, y, config: TrainConfig, rng):
    n = x.shape[0]
    if n < 2:
        raise BatchTooSmall("training needs at least 2 samples")
    state = adam_init(learner.params)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if idx.size < 2:
                continue  # batch norm cannot run on a single sample
            loss, grads, _ = learner.gradients(x[idx], y[idx], rng=rng)
            adam_step(learner.params, grads, state, config)
    return learner


def train_cascade(keypoints2d, targets3d, cascade_length=3,
                  learner_config=LearnerConfig(), train_config=TrainConfig(),
                  progress=None):
    """Sequentially fit `cascade_length` learners, each on the residual of the
    running prediction; records the training MPJPE after every stage."""
    kp = np.asarray(keypoints2d, dtype=np.float64)
    gt = np.asarray(targets3d, dtype=np.float64)
    if kp.ndim != 3 or gt.ndim != 3 or kp.shape[0] != gt.shape[0] or kp.shape[0] == 0:
        raise RegressorError("expected aligned (N, J, 2) and (N, J, 3) arrays")
    n = kp.shape[0]
    x = kp.reshape(n, -1)
    y = gt.reshape(n, -1)
    input_mean = x.mean(axis=0)
    input_std = np.maximum(x.std(axis=0), 1e-8)
    output_mean = y.mean(axis=0)
    output_std = np.maximum(y.std(axis=0), 1e-8)
    xn = (x - input_mean) / input_std
    yn = (y - output_mean) / output_std

    cascade = Cascade([], input_mean, input_std, output_mean, output_std,
                      concat_estimates=train_config.concat_estimates)
    rng = np.random.default_rng(train_config.rng_seed)
    est = np.zeros_like(yn)
    base = learner_config
    for t in range(cascade_length):
        inputs = cascade._stage_inputs(xn, est, t)
        cfg = replace(base, input_dim=inputs.shape[1])
        learner = DeepLearner(cfg, rng)
        if t > 0:
            learner.zero_output()
        try:
            _train_single(learner, inputs, yn - est, train_config, rng)
        except NumericalDivergence as exc:
            raise NumericalDivergence(str(exc), partial=cascade) from exc
        cascade.learners.append(learner)
        est = est + learner.forward(inputs, mode="eval")
        pred_mm = (est * output_std + output_mean).reshape(n, -1, 3)
        cascade.train_log.append(mpjpe(pred_mm, gt))
        if progress is not None:
            progress(t + 1, cascade.train_log[-1])
    return cascade


def predict(cascade, keypoints2d):
    return cascade.predict(keypoints2d)
