import numpy as np
import pytest

from dyntask.errors import InvalidArgumentError, ShapeError
from dyntask.losses import CenterBank, task_losses, weighted_total
from dyntask.net import (
    LayerSpec,
    NetworkSpec,
    backward,
    desk_spec,
    forward,
    grads_to_vector,
    init_params,
    load_checkpoint,
    params_to_vector,
    save_checkpoint,
    vector_to_params,
)
from dyntask.numerics import Rng
from dyntask.evaluation import fd_gradient_check


def tiny_spec():
    return desk_spec(input_dim=4, n_identities=3, n_expressions=2, trunk_dims=(5, 3), bottleneck_dim=3)


def make_instance(seed=0, n=4):
    rng = Rng(seed)
    spec = tiny_spec()
    params = init_params(spec, rng.split("init"))
    batch = rng.normal(size=(n, spec.input_dim))
    y1 = rng.integers(0, spec.k1, size=n)
    y2 = rng.integers(0, spec.k2, size=n)
    bank = CenterBank(rng.normal(size=(spec.k1, spec.embed_dim1), scale=0.5))
    return spec, params, batch, y1, y2, bank


def test_layer_spec_validation():
    with pytest.raises(InvalidArgumentError):
        LayerSpec(0, 3)
    with pytest.raises(InvalidArgumentError):
        LayerSpec(2, 3, "tanh")


def test_network_spec_chain_validation():
    with pytest.raises(ShapeError):
        NetworkSpec(4, (LayerSpec(4, 3), LayerSpec(5, 2)), (LayerSpec(2, 2),), None)
    with pytest.raises(InvalidArgumentError):
        NetworkSpec(4, (LayerSpec(4, 3),), None, None)


def test_zero_params_give_zero_logits():
    spec, params, batch, *_ = make_instance()
    for section in (params.shared, params.branch1, params.branch2):
        for layer in section:
            layer.w[...] = 0.0
            layer.b[...] = 0.0
    trace = forward(params, batch)
    assert np.array_equal(trace.logits1, np.zeros_like(trace.logits1))
    assert np.array_equal(trace.logits2, np.zeros_like(trace.logits2))


def test_forward_shapes_and_batch_rows():
    spec, params, batch, *_ = make_instance(n=7)
    trace = forward(params, batch)
    assert trace.z.shape == (7, spec.d_z)
    assert trace.x1.shape == (7, spec.embed_dim1)
    assert trace.logits1.shape == (7, spec.k1)
    assert trace.logits2.shape == (7, spec.k2)


def test_forward_shape_error():
    spec, params, *_ = make_instance()
    with pytest.raises(ShapeError):
        forward(params, np.zeros((3, spec.input_dim + 1)))
    with pytest.raises(ShapeError):
        forward(params, np.zeros(spec.input_dim))


def test_forward_deterministic():
    _, params, batch, *_ = make_instance()
    t1 = forward(params, batch)
    t2 = forward(params, batch)
    assert np.array_equal(t1.logits1, t2.logits1)
    assert np.array_equal(t1.z, t2.z)


def grads_for_weights(params, trace, y1, y2, bank, w, alpha=0.01):
    values, tg = task_losses(trace, y1, y2, bank, alpha)
    return backward(params, trace, tg.grad_logits1, tg.grad_logits2, tg.grad_x1, np.asarray(w))


def test_zero_weight_annihilates_branch():
    spec, params, batch, y1, y2, bank = make_instance()
    trace = forward(params, batch)
    grads = grads_for_weights(params, trace, y1, y2, bank, [1.0, 0.0])
    for layer in grads.branch2:
        assert np.array_equal(layer.w, np.zeros_like(layer.w))
        assert np.array_equal(layer.b, np.zeros_like(layer.b))
    # trunk gradient equals the branch-1-only gradient
    solo_spec = desk_spec(4, 3, 2, trunk_dims=(5, 3), bottleneck_dim=3, include_branch2=False)
    solo = init_params(solo_spec, Rng(0).split("init"))
    strace = forward(solo, batch)
    svalues, stg = task_losses(strace, y1, None, bank, 0.01)
    sgrads = backward(solo, strace, stg.grad_logits1, None, stg.grad_x1, np.array([1.0, 0.0]))
    for a, b in zip(grads.shared, sgrads.shared):
        assert np.array_equal(a.w, b.w)
        assert np.array_equal(a.b, b.b)


def test_weight_linearity_of_trunk_gradient():
    spec, params, batch, y1, y2, bank = make_instance(seed=3)
    trace = forward(params, batch)
    g_a = grads_for_weights(params, trace, y1, y2, bank, [1.0, 0.0])
    g_b = grads_for_weights(params, trace, y1, y2, bank, [0.0, 1.0])
    g_half = grads_for_weights(params, trace, y1, y2, bank, [0.5, 0.5])
    for ga, gb, gh in zip(g_a.shared, g_b.shared, g_half.shared):
        assert np.allclose(gh.w, 0.5 * (ga.w + gb.w), atol=1e-15)
    # scaling both weights scales the trunk gradient
    g_scaled = grads_for_weights(params, trace, y1, y2, bank, [1.5, 1.5])
    g_base = grads_for_weights(params, trace, y1, y2, bank, [1.0, 1.0])
    for gs, g1 in zip(g_scaled.shared, g_base.shared):
        assert np.allclose(gs.w, 1.5 * g1.w, rtol=1e-12)


def test_branch_isolation():
    spec, params, batch, *_ = make_instance(seed=5)
    base = forward(params, batch)
    perturbed = params.copy()
    for layer in perturbed.branch2:
        layer.w += 0.37
    after = forward(perturbed, batch)
    assert np.array_equal(base.x1, after.x1)
    assert np.array_equal(base.logits1, after.logits1)
    assert not np.array_equal(base.logits2, after.logits2)


def test_gradient_matches_finite_differences():
    spec, params, batch, y1, y2, bank = make_instance(seed=12)
    w = np.array([0.4, 0.6])
    alpha = 0.02
    trace = forward(params, batch)
    values, tg = task_losses(trace, y1, y2, bank, alpha)
    grads = backward(params, trace, tg.grad_logits1, tg.grad_logits2, tg.grad_x1, w)

    def fn(vec):
        p = vector_to_params(vec, params)
        tr = forward(p, batch)
        vals, _ = task_losses(tr, y1, y2, bank, alpha)
        return weighted_total(w, vals).total

    err = fd_gradient_check(fn, grads_to_vector(grads), params_to_vector(params))
    assert err < 1e-6


def test_single_branch_network_roundtrip():
    spec = desk_spec(6, 4, 3, include_branch1=False)
    params = init_params(spec, Rng(2).split("init"))
    trace = forward(params, Rng(3).normal(size=(5, 6)))
    assert trace.logits1 is None and trace.x1 is None
    assert trace.logits2.shape == (5, 3)


def test_init_sections_match_across_subset_networks():
    full = init_params(tiny_spec(), Rng(8).split("init"))
    solo = init_params(
        desk_spec(4, 3, 2, trunk_dims=(5, 3), bottleneck_dim=3, include_branch1=False),
        Rng(8).split("init"),
    )
    for a, b in zip(full.shared, solo.shared):
        assert np.array_equal(a.w, b.w)
    for a, b in zip(full.branch2, solo.branch2):
        assert np.array_equal(a.w, b.w)


def test_dropout_changes_activations_only_when_enabled():
    _, params, batch, *_ = make_instance(seed=4)
    plain = forward(params, batch)
    dropped = forward(params, batch, dropout=0.5, rng=Rng(1).split("dropout"))
    assert not np.array_equal(plain.z, dropped.z)
    with pytest.raises(InvalidArgumentError):
        forward(params, batch, dropout=0.5)  # rng required


def test_checkpoint_roundtrip_exact(tmp_path):
    _, params, batch, *_ = make_instance(seed=6)
    path = tmp_path / "ckpt.json"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert np.array_equal(params_to_vector(params), params_to_vector(loaded))
    assert loaded.spec == params.spec
    t1, t2 = forward(params, batch), forward(loaded, batch)
    assert np.array_equal(t1.logits1, t2.logits1)


def test_vector_roundtrip():
    _, params, *_ = make_instance(seed=7)
    vec = params_to_vector(params)
    back = vector_to_params(vec * 2.0, params)
    assert np.array_equal(params_to_vector(back), vec * 2.0)
    # original untouched
    assert np.array_equal(params_to_vector(params), vec)
    with pytest.raises(ShapeError):
        vector_to_params(vec[:-1], params)
