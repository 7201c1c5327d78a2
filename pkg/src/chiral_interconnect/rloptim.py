"""Model-free pulse calibration with proximal policy optimization.

The calibration task is a single-step episode with a constant observation:
a small multilayer perceptron maps the observation to the mean and log
standard deviation of a diagonal Gaussian over normalised parameter offsets,
plus a scalar value estimate.  Each epoch samples a batch of trial parameter
sets, scores them by shot-sampled transfer success and takes several
clipped-surrogate gradient steps.  Gradients are computed by hand in numpy.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .analysis import ShotRecord, sample_shots
from .lindblad import TimeGrid
from .network import DeviceParams
from .protocol import ProtocolConfig, run_many
from .pulses import COUPLERS, DistortionModel, IdealPulses, PulseSet

__all__ = [
    "PpoHyper",
    "Episode",
    "PolicyDivergence",
    "OptimizeResult",
    "reward",
    "trial_seed",
    "GaussianMlpPolicy",
    "optimize",
    "random_search",
    "TransferEnv",
    "default_spans",
    "desk_distortion",
]


@dataclass(frozen=True)
class PpoHyper:
    """Optimizer settings; defaults are the full-scale values."""

    learning_rate: float = 0.005
    policy_updates_per_epoch: int = 20
    importance_ratio_clip: float = 0.05
    batch_size: int = 150
    shots_per_trial: int = 1000
    value_loss_coefficient: float = 0.5
    gradient_clip: float = 1.0
    log_prob_clip: float = 0.0
    network_layers: int = 4
    nodes_per_layer: int = 10
    epochs: int = 1000
    initial_std: float = 0.3

    def __post_init__(self):
        for k in ("learning_rate", "gradient_clip", "value_loss_coefficient", "initial_std"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        for k in ("policy_updates_per_epoch", "batch_size", "shots_per_trial", "network_layers",
                  "nodes_per_layer", "epochs"):
            v = getattr(self, k)
            if int(v) != v or v < 1:
                raise ValueError(f"{k} must be a positive integer")
        if not 0 < self.importance_ratio_clip <= 1:
            raise ValueError("importance_ratio_clip must lie in (0, 1]")
        if self.log_prob_clip < 0:
            raise ValueError("log_prob_clip must be non-negative")

    @classmethod
    def full_scale(cls) -> "PpoHyper":
        return cls()

    @classmethod
    def desk_scale(cls) -> "PpoHyper":
        return cls(epochs=200, batch_size=30, shots_per_trial=200)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Episode:
    params: np.ndarray
    reward: float
    epoch: int

    def __post_init__(self):
        if not 0.0 <= self.reward <= 1.0:
            raise ValueError(f"reward {self.reward} outside [0, 1]")


class PolicyDivergence(RuntimeError):
    """Policy standard deviations collapsed or blew up."""


def reward(counts: ShotRecord) -> float:
    """Fraction of shots with exactly one of the two absorber qubits excited."""
    good = sum(v for k, v in counts.counts.items() if len(k) == 2 and k in ("01", "10"))
    for k in counts.counts:
        if len(k) != 2:
            raise ValueError("reward expects two-qubit outcomes")
    return good / counts.shots


def trial_seed(seed: int, epoch: int, trial: int) -> int:
    """Independent 64-bit seed for one trial evaluation."""
    return int(np.random.SeedSequence([seed, epoch, trial]).generate_state(1, dtype=np.uint64)[0])


class GaussianMlpPolicy:
    """tanh MLP from a constant observation to (mean, log std, value)."""

    def __init__(self, n_params: int, hyper: PpoHyper, rng: np.random.Generator):
        self.n = n_params
        sizes = [1] + [hyper.nodes_per_layer] * hyper.network_layers
        self.weights = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            lim = math.sqrt(6.0 / (a + b))
            self.weights.append([rng.uniform(-lim, lim, (b, a)), np.zeros(b)])
        h = sizes[-1]
        out = 2 * n_params + 1
        w = rng.normal(0.0, 0.01 / math.sqrt(h), (out, h))
        bias = np.zeros(out)
        bias[n_params:2 * n_params] = math.log(hyper.initial_std)
        self.weights.append([w, bias])
        self.obs = np.ones(1)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.weights for p in layer]

    def forward(self):
        acts = [self.obs]
        x = self.obs
        for w, b in self.weights[:-1]:
            x = np.tanh(w @ x + b)
            acts.append(x)
        w, b = self.weights[-1]
        y = w @ x + b
        n = self.n
        return y[:n], y[n:2 * n], float(y[2 * n]), acts

    def backward(self, acts, d_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of a scalar loss given its derivative w.r.t. the output layer."""
        grads = []
        w, _ = self.weights[-1]
        grads.append((np.outer(d_out, acts[-1]), d_out))
        d = w.T @ d_out
        for k in range(len(self.weights) - 2, -1, -1):
            a = acts[k + 1]
            dz = d * (1 - a * a)
            wk, _ = self.weights[k]
            grads.append((np.outer(dz, acts[k]), dz))
            d = wk.T @ dz
        grads.reverse()
        return [g for pair in grads for g in pair]


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _log_prob(a: np.ndarray, mu: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (a - mu) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * len(mu) * math.log(2 * math.pi)


@dataclass
class OptimizeResult:
    best_params: np.ndarray
    best_reward: float
    final_mean: np.ndarray
    curve: list = field(default_factory=list)
    updates: list = field(default_factory=list)
    episodes: list = field(default_factory=list)
    best_pulses: PulseSet | None = None
    final_pulses: PulseSet | None = None


def _evaluate(env, vecs: list[np.ndarray], seeds: list[int], threads: int) -> list[ShotRecord]:
    batch = getattr(env, "batch", None)
    if batch is None:
        return [env(v, s) for v, s in zip(vecs, seeds)]
    if threads <= 1 or len(vecs) < 2 * threads:
        return batch(vecs, seeds)
    chunks = np.array_split(np.arange(len(vecs)), threads)
    with ThreadPoolExecutor(threads) as ex:
        parts = ex.map(lambda idx: batch([vecs[i] for i in idx], [seeds[i] for i in idx]), chunks)
    return [r for part in parts for r in part]


def optimize(
    env,
    seed: int,
    hyper: PpoHyper,
    seed_pulses,
    spans: np.ndarray | None = None,
    *,
    threads: int = 1,
    keep_episodes: bool = False,
    callback: Callable[[dict], None] | None = None,
) -> OptimizeResult:
    """Run the epoch loop and return the best parameters and learning curve.

    ``env(params, trial_seed) -> ShotRecord`` scores one parameter vector; an
    optional ``env.batch(list_of_params, seeds)`` evaluates many at once.
    ``seed_pulses`` is a :class:`PulseSet` or a raw parameter vector; trial
    parameters are ``seed + spans * action``.
    """
    if isinstance(seed_pulses, PulseSet):
        x0 = seed_pulses.to_vector()
    else:
        x0 = np.asarray(seed_pulses, dtype=float)
    spans = np.ones_like(x0) if spans is None else np.asarray(spans, dtype=float)
    if spans.shape != x0.shape:
        raise ValueError("spans must match the parameter vector")
    n = len(x0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
    pol = GaussianMlpPolicy(n, hyper, rng)
    opt = _Adam(pol.params(), hyper.learning_rate)
    eps = hyper.importance_ratio_clip
    B = hyper.batch_size

    best_r, best_x = -1.0, x0.copy()
    curve, updates, episodes = [], [], []
    for epoch in range(hyper.epochs):
        mu, log_std, _, _ = pol.forward()
        std = np.exp(log_std)
        if np.min(std) < 1e-6 or np.max(std) > 1e2:
            raise PolicyDivergence(f"policy std out of range at epoch {epoch}: [{std.min():.3g}, {std.max():.3g}]")
        erng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
        actions = mu + std * erng.standard_normal((B, n))
        vecs = [x0 + spans * a for a in actions]
        seeds = [trial_seed(seed, epoch, i) for i in range(B)]
        records = _evaluate(env, vecs, seeds, threads)
        rewards = np.array([reward(r) for r in records])
        if not np.all(np.isfinite(rewards)):
            raise FloatingPointError("non-finite reward")
        k = int(np.argmax(rewards))
        if rewards[k] > best_r:
            best_r, best_x = float(rewards[k]), vecs[k]
        if keep_episodes:
            episodes += [Episode(v, float(r), epoch) for v, r in zip(vecs, rewards)]

        logp_old = _log_prob(actions, mu, log_std)
        _, _, v_old, _ = pol.forward()
        adv = rewards - v_old
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        for u in range(hyper.policy_updates_per_epoch):
            mu, log_std, value, acts = pol.forward()
            logp = _log_prob(actions, mu, log_std)
            dlog = logp - logp_old
            if hyper.log_prob_clip > 0:
                dlog = np.clip(dlog, -hyper.log_prob_clip, hyper.log_prob_clip)
            ratio = np.exp(dlog)
            clipped = np.clip(ratio, 1 - eps, 1 + eps)
            active = ratio * adv <= clipped * adv
            # samples that still push the policy must sit inside the trust region
            push = np.where(adv > 0, ratio - 1, 1 - ratio)
            push_dev = float(np.max(push[active & (adv != 0)], initial=0.0))
            # d(loss)/d(logp_i) for loss = -mean(min(r A, clip(r) A))
            g_logp = np.where(active, -ratio * adv, 0.0) / B
            inv_var = np.exp(-2 * log_std)
            diff = actions - mu
            g_mu = (g_logp[:, None] * diff * inv_var).sum(axis=0)
            g_ls = (g_logp[:, None] * (diff * diff * inv_var - 1)).sum(axis=0)
            g_v = hyper.value_loss_coefficient * 2 * np.mean(value - rewards)
            d_out = np.concatenate([g_mu, g_ls, [g_v]])
            grads = pol.backward(acts, d_out)
            gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if gnorm > hyper.gradient_clip:
                grads = [g * (hyper.gradient_clip / gnorm) for g in grads]
            opt.step(pol.params(), grads)
            updates.append({
                "epoch": epoch, "update": u,
                "push_deviation": push_dev,
                "clip_fraction": float(np.mean(~active)),
                "grad_norm": gnorm,
            })

        rec = {
            "epoch": epoch,
            "mean_reward": float(rewards.mean()),
            "best_reward": float(rewards.max()),
            "policy_std_norm": float(np.linalg.norm(np.exp(pol.forward()[1]))),
        }
        curve.append(rec)
        if callback is not None:
            callback(rec)

    mu, _, _, _ = pol.forward()
    res = OptimizeResult(np.asarray(best_x), best_r, x0 + spans * mu, curve, updates, episodes)
    if isinstance(seed_pulses, PulseSet):
        T, gm = seed_pulses.total_duration, seed_pulses.g_max
        res.best_pulses = PulseSet.from_vector(res.best_params, T, gm, clip=True)
        res.final_pulses = PulseSet.from_vector(res.final_mean, T, gm, clip=True)
    return res


def random_search(env, seed: int, x0, spans, n_trials: int, scale: float = 1.0) -> tuple[np.ndarray, float]:
    """Baseline: best of ``n_trials`` Gaussian perturbations of ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA5E]))
    best_x, best_r = x0, -1.0
    for i in range(n_trials):
        x = x0 + scale * np.asarray(spans) * rng.standard_normal(len(x0))
        r = reward(env(x, trial_seed(seed, 0, i)))
        if r > best_r:
            best_x, best_r = x, r
    return best_x, best_r


def default_spans(ps: PulseSet) -> np.ndarray:
    """Exploration scale per parameter: segment values, detunings, phases, delay."""
    seg_scale = 0.15 * max(float(np.max(np.abs(ps.segments))), 1e-3)
    return np.concatenate([
        np.full(64, seg_scale),
        np.full(4, 2 * math.pi * 0.0005),
        np.full(4, 0.5),
        [5.0],
    ])


def desk_distortion() -> dict[str, DistortionModel]:
    """Shipped distorted-line model: 10 ns low-pass on every coupler, 1.2 rad skew on C24."""
    d = {c: DistortionModel(time_constant=10.0) for c in COUPLERS}
    d["C24"] = DistortionModel(time_constant=10.0, phase_offset=1.2)
    return d


@dataclass
class TransferEnv:
    """Transfer experiment scored on the absorber's two data qubits.

    Calling it with a 73-vector runs the protocol and draws
    ``shots`` computational-basis samples of the absorber at the final time.
    """

    device: DeviceParams
    direction: str = "right"
    distortion: Mapping[str, DistortionModel] = field(default_factory=dict)
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(0.0, 200.0, 0.1, 50))
    shots: int = 200
    total_duration: float = 200.0
    g_max: float = 0.1

    def config(self, pulses) -> ProtocolConfig:
        return ProtocolConfig(direction=self.direction, device=self.device, pulses=pulses,
                              grid=self.grid, distortion=dict(self.distortion))

    def pulses(self, vec) -> PulseSet:
        return PulseSet.from_vector(vec, self.total_duration, self.g_max, clip=True)

    def absorber_state(self, results):
        module = "B" if self.direction == "right" else "A"
        return [r.module_state(module) for r in results]

    def efficiency(self, pulses) -> float:
        """Noise-free final absorber population."""
        if not isinstance(pulses, (PulseSet, IdealPulses)):
            pulses = self.pulses(pulses)
        r = run_many([self.config(pulses)])[0]
        return float(r.absorber_population[-1])

    def batch(self, vecs: Sequence[np.ndarray], seeds: Sequence[int]) -> list[ShotRecord]:
        cfgs = [self.config(self.pulses(v)) for v in vecs]
        states = self.absorber_state(run_many(cfgs))
        return [sample_shots(rho, self.shots, s) for rho, s in zip(states, seeds)]

    def __call__(self, vec, seed: int) -> ShotRecord:
        return self.batch([vec], [seed])[0]
