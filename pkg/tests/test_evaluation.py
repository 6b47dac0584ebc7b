import math

import numpy as np
import pytest

from dyntask.errors import ConfigError, InvalidArgumentError
from dyntask.evaluation import (
    classify_accuracy,
    fd_gradient_check,
    one_step_oracle,
    pair_distances,
    select_threshold,
    threshold_candidates,
    verify_pairs,
)
from dyntask.net import desk_spec, init_params
from dyntask.numerics import Rng
from dyntask.strategies import static_strategy
from dyntask.synthdata import PairSet, SynthConfig, generate, sample_pairs, nearest_centroid_accuracy
from dyntask.trainer import TrainConfig, train


def zero_network(spec):
    params = init_params(spec, Rng(0).split("init"))
    for section in (params.shared, params.branch1, params.branch2):
        for layer in section:
            layer.w[...] = 0.0
            layer.b[...] = 0.0
    return params


def test_zero_network_accuracy_is_chance():
    cfg = SynthConfig(n_identities=4, n_expressions=4, dim=6, samples_per_cell=10, seed=2)
    ds = generate(cfg)
    spec = desk_spec(6, 4, 4)
    params = zero_network(spec)
    # all logits equal: argmax resolves to class 0, balanced classes give exactly 1/K
    assert classify_accuracy(params, ds, "test", task=1) == pytest.approx(0.25)
    assert classify_accuracy(params, ds, "test", task=2) == pytest.approx(0.25)


def test_classify_accuracy_deterministic():
    cfg = SynthConfig(n_identities=3, n_expressions=3, dim=6, samples_per_cell=8, seed=4)
    ds = generate(cfg)
    params = init_params(desk_spec(6, 3, 3), Rng(1).split("init"))
    a = classify_accuracy(params, ds, "val", task=2)
    assert a == classify_accuracy(params, ds, "val", task=2)


def test_noiseless_data_trains_to_perfect_accuracy():
    cfg = SynthConfig(
        n_identities=4, n_expressions=2, dim=8, samples_per_cell=10,
        sigma_id=3.0, sigma_ex=1.5, sigma_noise=0.0, seed=6,
    )
    ds = generate(cfg)
    # the separability oracle certifies the dominant factor's task
    assert nearest_centroid_accuracy(ds, "test", task=1) == 1.0
    spec = desk_spec(8, 4, 2)
    params = init_params(spec, Rng(6).split("init"))
    tcfg = TrainConfig(strategy="static", w1=0.5, steps=300, batch_size=16, eta_theta=0.1, seed=6)
    res = train(params, static_strategy(0.5), ds, tcfg)
    assert classify_accuracy(res.params, ds, "test", task=1) == 1.0
    assert classify_accuracy(res.params, ds, "test", task=2) == 1.0


def test_threshold_selection_matches_brute_force():
    rng = Rng(12)
    for _ in range(20):
        n = int(rng.integers(2, 200))
        d = rng.uniform(0.0, 3.0, size=n)
        same = rng.uniform(size=n) < 0.5
        t, acc = select_threshold(d, same)
        # brute force over the same candidate set
        best = max(
            (float(((d < c) == same).mean()) for c in threshold_candidates(d)),
        )
        assert acc == best
        assert float(((d < t) == same).mean()) == best


def test_all_positive_zero_distance_pairs():
    d = np.zeros(10)
    same = np.ones(10, dtype=bool)
    t, acc = select_threshold(d, same)
    assert acc == 1.0
    assert t > 0.0


def test_threshold_chosen_on_validation_only():
    # validation optimum differs from test optimum; the report must use validation's
    val_d = np.array([0.1, 0.2, 0.8, 0.9])
    val_same = np.array([True, True, False, False])
    t, acc = select_threshold(val_d, val_same)
    assert 0.2 < t < 0.8
    assert acc == 1.0


def test_verify_pairs_chance_level_on_structureless_data():
    # identity signal far below noise: same/different pairs are indistinguishable
    cfg = SynthConfig(
        n_identities=6, n_expressions=2, dim=8, samples_per_cell=12,
        sigma_id=1e-3, sigma_ex=1e-3, sigma_noise=1.0, seed=9,
    )
    ds = generate(cfg)
    params = init_params(desk_spec(8, 6, 2), Rng(9).split("init"))
    val = sample_pairs(ds, "val", 200, seed=1)
    test = sample_pairs(ds, "test", 200, seed=2)
    report = verify_pairs(params, ds, val, test)
    # 3 sigma of a fair coin over 200 pairs
    assert abs(report.test_accuracy - 0.5) <= 3 * 0.5 / math.sqrt(200)
    assert report.n_pairs == 200


def test_verify_pairs_metrics_and_errors():
    cfg = SynthConfig(n_identities=4, n_expressions=2, dim=6, samples_per_cell=10, seed=3)
    ds = generate(cfg)
    params = init_params(desk_spec(6, 4, 2), Rng(3).split("init"))
    val = sample_pairs(ds, "val", 20, seed=1)
    test = sample_pairs(ds, "test", 20, seed=2)
    r_euc = verify_pairs(params, ds, val, test, metric="euclidean")
    r_cos = verify_pairs(params, ds, val, test, metric="cosine")
    assert 0.0 <= r_euc.test_accuracy <= 1.0
    assert 0.0 <= r_cos.test_accuracy <= 1.0
    with pytest.raises(InvalidArgumentError):
        pair_distances(params, ds, val, metric="manhattan")
    empty = PairSet(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), np.empty(0, dtype=bool))
    with pytest.raises(ConfigError):
        pair_distances(params, ds, empty)


def test_fd_gradient_check_quadratic_is_exact():
    a = np.diag([1.0, 2.0, 3.0])

    def fn(x):
        return float(x @ a @ x)

    point = np.array([0.5, -1.0, 2.0])
    grad = 2.0 * a @ point
    assert fd_gradient_check(fn, grad, point) < 1e-9


def test_fd_gradient_check_detects_errors():
    def fn(x):
        return float((x * x).sum())

    point = np.array([1.0, 2.0])
    wrong = 2.0 * point + np.array([0.5, 0.0])
    assert fd_gradient_check(fn, wrong, point) > 1e-2


def test_one_step_oracle_symmetry_and_spot_value():
    z = Rng(2).normal(size=6)
    assert np.array_equal(one_step_oracle([1.5, 1.5], z, 0.5), [0.5, 0.5])
    # unit feature, eta = 1, L = (2, 1): ratio e^0.125
    z1 = np.zeros(4)
    z1[0] = 1.0
    w = one_step_oracle([2.0, 1.0], z1, 1.0)
    assert w[0] == pytest.approx(0.53121, abs=1e-5)
    assert w[1] == pytest.approx(0.46879, abs=1e-5)
    assert w[0] / w[1] == pytest.approx(math.exp(0.125), rel=1e-12)


def test_one_step_oracle_validation():
    with pytest.raises(InvalidArgumentError):
        one_step_oracle([0.0, 1.0], np.ones(3), 0.1)
    with pytest.raises(InvalidArgumentError):
        one_step_oracle([1.0, 1.0, 1.0], np.ones(3), 0.1)


def test_one_step_ratio_agrees_with_closed_form():
    # two independent routes to the same prediction
    from dyntask.evaluation import expected_one_step_ratio
    from dyntask.weight_unit import closed_form_ratio

    rng = Rng(17)
    for _ in range(20):
        losses = rng.uniform(0.2, 4.0, size=2)
        z = rng.normal(size=int(rng.integers(2, 9)))
        ratio_a = expected_one_step_ratio(losses, z, eta=1.0, normalize_z=True)
        zu = z / np.sqrt((z * z).sum())
        ratio_b = closed_form_ratio(losses, [1.0, 1.0], float(zu @ zu))
        assert ratio_a == pytest.approx(ratio_b, rel=1e-9)
