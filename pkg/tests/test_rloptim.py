import math

import numpy as np
import pytest

from chiral_interconnect.analysis import ShotRecord
from chiral_interconnect.network import DeviceParams
from chiral_interconnect.protocol import photon_gamma
from chiral_interconnect.pulses import PulseSet
from chiral_interconnect.qops import DensityMatrix
from chiral_interconnect.analysis import sample_shots
from chiral_interconnect.rloptim import (
    Episode, PolicyDivergence, PpoHyper, TransferEnv, default_spans, desk_distortion, optimize, random_search,
    reward, trial_seed,
)

OPT = np.array([0.6, -0.4])


class Quadratic:
    """Bandit with success probability exp(-|x - OPT|^2), scored on 1000 shots."""

    def __call__(self, x, seed):
        return self.batch([x], [seed])[0]

    @staticmethod
    def p(x):
        return float(np.exp(-np.sum((np.asarray(x) - OPT) ** 2)))

    def batch(self, xs, seeds):
        out = []
        for x, s in zip(xs, seeds):
            k = int(np.random.default_rng(s).binomial(1000, self.p(x)))
            out.append(ShotRecord({"01": k, "00": 1000 - k}, 1000, s))
        return out


def test_reward_examples():
    assert reward(ShotRecord({"01": 10}, 10, 0)) == 1.0
    assert reward(ShotRecord({"00": 10}, 10, 0)) == 0.0
    rho = DensityMatrix(np.diag([0.1, 0.3, 0.4, 0.2]))
    assert abs(reward(sample_shots(rho, 10**6, 1)) - 0.7) < 3e-3


def test_quadratic_bandit_recovered():
    xs = np.linspace(-1, 1, 401)
    grid = np.array([[Quadratic.p((a, b)) for b in xs] for a in xs])
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    oracle = np.array([xs[i], xs[j]])
    res = optimize(Quadratic(), 3, PpoHyper(epochs=300, batch_size=30), np.zeros(2))
    assert np.max(np.abs(res.final_mean - oracle)) <= 0.05


def test_same_seed_same_curve_and_threads():
    h = PpoHyper(epochs=15, batch_size=20)
    a = optimize(Quadratic(), 5, h, np.zeros(2))
    b = optimize(Quadratic(), 5, h, np.zeros(2))
    c = optimize(Quadratic(), 5, h, np.zeros(2), threads=3)
    assert a.curve == b.curve == c.curve
    assert np.array_equal(a.final_mean, c.final_mean)


def test_clip_respected_on_every_update():
    h = PpoHyper(epochs=20, batch_size=20)
    res = optimize(Quadratic(), 1, h, np.zeros(2))
    assert len(res.updates) == 20 * h.policy_updates_per_epoch
    assert max(u["push_deviation"] for u in res.updates) <= h.importance_ratio_clip + 1e-12


def test_divergence_guard():
    with pytest.raises(PolicyDivergence):
        optimize(Quadratic(), 0, PpoHyper(epochs=2, batch_size=4, initial_std=1e-7), np.zeros(2))


def test_random_search_baseline():
    x, r = random_search(Quadratic(), 0, np.zeros(2), np.ones(2), 200)
    assert r > 0.8


def test_hyper_validation_and_scales():
    with pytest.raises(ValueError):
        PpoHyper(importance_ratio_clip=0.0)
    with pytest.raises(ValueError):
        PpoHyper(batch_size=0)
    d = PpoHyper.desk_scale()
    assert (d.epochs, d.batch_size, d.shots_per_trial) == (200, 30, 200)
    with pytest.raises(ValueError):
        Episode(np.zeros(2), 1.5, 0)


def test_trial_seeds_distinct():
    seeds = {trial_seed(7, e, i) for e in range(20) for i in range(30)}
    assert len(seeds) == 600


def test_transfer_env_batch_equals_serial():
    dev = DeviceParams.measured()
    env = TransferEnv(dev, distortion=desk_distortion(), shots=50)
    x0 = PulseSet.from_ideal(dev.gamma, photon_gamma).to_vector()
    spans = default_spans(PulseSet.from_vector(x0))
    assert spans.shape == (73,)
    rng = np.random.default_rng(0)
    xs = [x0 + spans * rng.normal(size=73) for _ in range(3)]
    seeds = [trial_seed(1, 0, i) for i in range(3)]
    batch = env.batch(xs, seeds)
    for x, s, b in zip(xs, seeds, batch):
        assert env(x, s) == b
