"""Self-check battery: property checks, gradient oracles, and the closed-form
weight-dynamics agreements. ``dyntask verify`` runs everything and fails on
the first lie; the acceptance tests reuse the same checks with the same
tolerances."""

import math
from dataclasses import dataclass

import numpy as np

from .evaluation import fd_gradient_check, one_step_oracle
from .losses import CenterBank, cross_entropy, center_loss, task_losses, weighted_total
from .net import backward, desk_spec, forward, grads_to_vector, init_params, params_to_vector, vector_to_params
from .numerics import Rng
from .strategies import naive_dynamic_strategy, proposed_dynamic_strategy, update_strategy
from .weight_unit import (
    WeightUnitParams,
    closed_form_ratio,
    compute_weights,
    l3_gradient,
    l3_loss,
)

GRAD_TOL = 1e-6
L3_GRAD_TOL = 1e-7
CE_GRAD_TOL = 1e-7
SIMPLEX_TOL = 1e-12
ORACLE_TOL = 1e-9
VANISH_SMALL = 1e-15
VANISH_LARGE = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    value: float | None = None


def check_simplex(n_draws: int = 1000, seed: int = 101) -> CheckResult:
    """Random (psi, z) draws must give weights strictly inside (0, 1) summing to 1."""
    rng = Rng(seed)
    worst_sum = 0.0
    ok = True
    for _ in range(n_draws):
        d_z = int(rng.integers(2, 17))
        unit = WeightUnitParams(rng.normal(size=(2, d_z)), rng.normal(size=2))
        z = rng.normal(size=d_z, scale=3.0)
        w = compute_weights(unit, z).w
        if not (np.all(w > 0.0) and np.all(w < 1.0)):
            ok = False
            break
        worst_sum = max(worst_sum, abs(float(w.sum()) - 1.0))
    ok = ok and worst_sum <= SIMPLEX_TOL
    return CheckResult(
        "simplex-invariant", ok, f"{n_draws} draws, max |sum(w) - 1| = {worst_sum:.3e}", worst_sum
    )


def check_cross_entropy_gradient(
    n_instances: int = 20, seed: int = 202, corrupt: bool = False
) -> CheckResult:
    rng = Rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(2, 6))
        k = int(rng.integers(2, 6))
        logits = rng.normal(size=(n, k))
        labels = rng.integers(0, k, size=n)
        _, grad = cross_entropy(logits, labels)
        if corrupt:
            grad = grad.copy()
            grad.flat[0] += 1e-3

        def fn(vec):
            return cross_entropy(vec.reshape(n, k), labels)[0]

        worst = max(worst, fd_gradient_check(fn, grad.ravel(), logits.ravel()))
    ok = worst < CE_GRAD_TOL
    return CheckResult(
        "cross-entropy-gradient", ok, f"max rel err = {worst:.3e} (tol {CE_GRAD_TOL})", worst
    )


def check_center_gradient(n_instances: int = 20, seed: int = 203) -> CheckResult:
    rng = Rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(2, 6))
        d = int(rng.integers(2, 6))
        k = int(rng.integers(2, 5))
        x = rng.normal(size=(n, d))
        labels = rng.integers(0, k, size=n)
        bank = CenterBank(rng.normal(size=(k, d)))
        _, grad = center_loss(x, labels, bank, squared=True)

        def fn(vec):
            return center_loss(vec.reshape(n, d), labels, bank, squared=True)[0]

        worst = max(worst, fd_gradient_check(fn, grad.ravel(), x.ravel()))
    ok = worst < GRAD_TOL
    return CheckResult(
        "center-loss-gradient", ok, f"max rel err = {worst:.3e} (tol {GRAD_TOL})", worst
    )


KINK_MARGIN = 1e-3  # keep relu pre-activations away from 0, where FD cannot match any subgradient


def _random_tiny_instance(rng: Rng):
    spec = desk_spec(
        input_dim=4,
        n_identities=2,
        n_expressions=2,
        trunk_dims=(5, 3),
        bottleneck_dim=3,
    )
    params = init_params(spec, rng.split(f"net/{int(rng.integers(1 << 30))}"))
    n = 4
    for _ in range(100):
        batch = rng.normal(size=(n, spec.input_dim))
        trace = forward(params, batch)
        if min(float(np.abs(p).min()) for p in trace.trunk.pres) > KINK_MARGIN:
            break
    else:
        raise RuntimeError("could not draw a batch clear of relu kinks")
    y1 = rng.integers(0, spec.k1, size=n)
    y2 = rng.integers(0, spec.k2, size=n)
    bank = CenterBank(rng.normal(size=(spec.k1, spec.embed_dim1), scale=0.5))
    w1 = float(rng.uniform(0.1, 0.9))
    w = np.array([w1, 1.0 - w1])
    alpha = float(rng.uniform(0.001, 0.1))
    return params, batch, y1, y2, bank, w, alpha


def check_network_gradient(n_instances: int = 20, seed: int = 204) -> CheckResult:
    """Analytic gradient of the weighted total loss w.r.t. every network parameter."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        params, batch, y1, y2, bank, w, alpha = _random_tiny_instance(rng)
        trace = forward(params, batch)
        values, tg = task_losses(trace, y1, y2, bank, alpha)
        grads = backward(params, trace, tg.grad_logits1, tg.grad_logits2, tg.grad_x1, w)

        def fn(vec):
            p = vector_to_params(vec, params)
            tr = forward(p, batch)
            vals, _ = task_losses(tr, y1, y2, bank, alpha)
            return weighted_total(w, vals).total

        worst = max(worst, fd_gradient_check(fn, grads_to_vector(grads), params_to_vector(params)))
    ok = worst < GRAD_TOL
    return CheckResult("network-gradient", ok, f"max rel err = {worst:.3e} (tol {GRAD_TOL})", worst)


def check_l3_gradient(n_instances: int = 20, seed: int = 205) -> CheckResult:
    """Full-jacobian gradient of the weight-update objective w.r.t. (psi, b)."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        d_z = int(rng.integers(2, 9))
        unit = WeightUnitParams(rng.normal(size=(2, d_z)), rng.normal(size=2))
        z = rng.normal(size=d_z)
        losses = rng.uniform(0.2, 5.0, size=2)
        trace = compute_weights(unit, z)
        gp, gb = l3_gradient(trace, losses, mode="full_jacobian")
        point = np.concatenate([unit.psi.ravel(), unit.b])
        analytic = np.concatenate([gp.ravel(), gb])

        def fn(vec):
            u = WeightUnitParams(
                vec[: 2 * d_z].reshape(2, d_z), vec[2 * d_z :], unit.normalize_z, unit.gradient_mode
            )
            tr = compute_weights(u, z)
            return l3_loss(tr.w, losses)

        worst = max(worst, fd_gradient_check(fn, analytic, point))
    ok = worst < L3_GRAD_TOL
    return CheckResult("l3-gradient", ok, f"max rel err = {worst:.3e} (tol {L3_GRAD_TOL})", worst)


def check_ordering(n_cases: int = 100, seed: int = 303) -> list[CheckResult]:
    """One unit step from zero init must rank the weights like the losses under
    the proposed rule (both gradient modes) and invert them under the naive rule."""
    rng = Rng(seed)
    hits = {"diagonal": 0, "full_jacobian": 0, "naive": 0}
    for _ in range(n_cases):
        d_z = int(rng.integers(2, 17))
        z = rng.normal(size=d_z)
        losses = rng.uniform(0.05, 5.0, size=2)
        while abs(losses[0] - losses[1]) < 1e-3:
            losses = rng.uniform(0.05, 5.0, size=2)
        eta = float(rng.uniform(0.01, 1.0))
        hard = int(losses.argmax())
        for mode in ("diagonal", "full_jacobian"):
            strat = proposed_dynamic_strategy(d_z, gradient_mode=mode)
            trace = compute_weights(strat.unit, z)
            new = update_strategy(strat, trace, losses, eta)
            w_new = compute_weights(new.unit, z).w
            if int(w_new.argmax()) == hard:
                hits[mode] += 1
        strat = naive_dynamic_strategy(d_z)
        trace = compute_weights(strat.unit, z)
        new = update_strategy(strat, trace, losses, eta)
        w_new = compute_weights(new.unit, z).w
        if int(w_new.argmin()) == hard:
            hits["naive"] += 1
    return [
        CheckResult(
            "ordering-proposed-diagonal",
            hits["diagonal"] == n_cases,
            f"{hits['diagonal']}/{n_cases} larger loss got larger weight",
            float(hits["diagonal"]),
        ),
        CheckResult(
            "ordering-proposed-full",
            hits["full_jacobian"] == n_cases,
            f"{hits['full_jacobian']}/{n_cases} larger loss got larger weight",
            float(hits["full_jacobian"]),
        ),
        CheckResult(
            "ordering-naive-inverted",
            hits["naive"] == n_cases,
            f"{hits['naive']}/{n_cases} larger loss got smaller weight",
            float(hits["naive"]),
        ),
    ]


def check_one_step_agreement(n_instances: int = 20, seed: int = 404) -> CheckResult:
    """An explicit unit step reproduces the zero-init closed form to 1e-9."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        d_z = int(rng.integers(2, 17))
        z = rng.normal(size=d_z)
        losses = rng.uniform(0.1, 5.0, size=2)
        eta = float(rng.uniform(0.05, 1.0))
        strat = proposed_dynamic_strategy(d_z, gradient_mode="diagonal")
        trace = compute_weights(strat.unit, z)
        new = update_strategy(strat, trace, losses, eta)
        actual = compute_weights(new.unit, z).w
        predicted = one_step_oracle(losses, z, eta)
        worst = max(worst, float(np.abs(actual - predicted).max()))
    # spot value: L=(2,1), a=(1,1), z.z=1, eta=1 gives ratio exp(0.125)
    spot = closed_form_ratio([2.0, 1.0], [1.0, 1.0], 1.0)
    spot_err = abs(spot - math.exp(0.125))
    ok = worst <= ORACLE_TOL and spot_err < 1e-12
    return CheckResult(
        "one-step-oracle",
        ok,
        f"max |actual - predicted| = {worst:.3e} (tol {ORACLE_TOL}); "
        f"spot ratio {spot:.6f} vs e^0.125",
        worst,
    )


def vanishing_demo(loss_pair=(2.0, 1.0)) -> tuple[float, float]:
    """Gradient norms with and without feature normalization at a saturating gap.

    psi rows (+e1, -e1) with ||psi_i|| = 1 and z = 40 * e1 give an activation
    gap of 80 unnormalized, which collapses the softmax factor; normalizing z
    shrinks the gap to 2 and restores a usable gradient.
    """
    d_z = 4
    psi = np.zeros((2, d_z))
    psi[0, 0] = 1.0
    psi[1, 0] = -1.0
    z = np.zeros(d_z)
    z[0] = 40.0
    losses = np.asarray(loss_pair)
    raw = WeightUnitParams(psi, np.zeros(2), normalize_z=False)
    trace_raw = compute_weights(raw, z)
    gp_raw, _ = l3_gradient(trace_raw, losses)
    norm_off = float(np.sqrt((gp_raw**2).sum()))
    normed = WeightUnitParams(psi, np.zeros(2), normalize_z=True)
    trace_norm = compute_weights(normed, z)
    gp_norm, _ = l3_gradient(trace_norm, losses)
    norm_on = float(np.sqrt((gp_norm**2).sum()))
    return norm_off, norm_on


def check_vanishing() -> CheckResult:
    norm_off, norm_on = vanishing_demo()
    ok = norm_off < VANISH_SMALL and norm_on > VANISH_LARGE
    return CheckResult(
        "gradient-vanishing",
        ok,
        f"unnormalized |grad| = {norm_off:.3e} (< {VANISH_SMALL}), "
        f"normalized |grad| = {norm_on:.3e} (> {VANISH_LARGE})",
    )


def run_verification(corrupt_gradient: bool = False, echo=print) -> bool:
    """Run every check, print one line per check, return overall success."""
    results = [
        check_simplex(),
        check_cross_entropy_gradient(corrupt=corrupt_gradient),
        check_center_gradient(),
        check_network_gradient(),
        check_l3_gradient(),
        *check_ordering(),
        check_one_step_agreement(),
        check_vanishing(),
    ]
    all_ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        echo(f"{status}  {r.name:28s} {r.detail}")
        all_ok = all_ok and r.passed
    echo(f"{'OK' if all_ok else 'FAILED'}: {sum(r.passed for r in results)}/{len(results)} checks passed")
    return all_ok
