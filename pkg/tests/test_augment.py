import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssvepnet import diffcore as dc
from ssvepnet.augment import (
    SIGMA_FLOOR, AugmentPolicy, CadaParams, RemixCounter, augment_batch, cada_apply,
    channel_stats, inter_trial_remix, logit,
)
from ssvepnet.errors import DimensionError, ParameterError

trials = arrays(np.float64, (3, 16), elements=st.floats(-100, 100)).filter(
    lambda a: np.all(a.std(axis=-1) > 1e-3))


def test_channel_stats_hand_values():
    s = channel_stats([[1.0, 2.0, 3.0]])
    assert s.mu[0] == pytest.approx(2.0)
    assert s.sigma[0] == pytest.approx(np.sqrt(2 / 3))
    assert s.sigma[0] == pytest.approx(0.816497, abs=1e-6)


def test_channel_stats_constant_and_standardized():
    s = channel_stats([[4.0] * 5])
    assert s.mu[0] == 4.0 and s.sigma[0] == SIGMA_FLOOR
    x = np.random.default_rng(0).normal(size=(2, 500))
    x = (x - x.mean(-1, keepdims=True)) / x.std(-1, keepdims=True)
    s = channel_stats(x)
    np.testing.assert_allclose(s.mu, 0, atol=1e-12)
    np.testing.assert_allclose(s.sigma, 1, atol=1e-12)


def test_channel_stats_short():
    with pytest.raises(ParameterError):
        channel_stats([[1.0]])


def test_remix_hand_vectors():
    out = inter_trial_remix(np.array([[1.0, 2, 3]]), np.array([[10.0, 20, 30]]))
    np.testing.assert_allclose(out, [[10, 20, 30]], atol=1e-9)
    a = np.random.default_rng(0).normal(size=(4, 10))
    np.testing.assert_allclose(inter_trial_remix(a, a), a, atol=1e-6)


def test_remix_shape_mismatch():
    with pytest.raises(DimensionError):
        inter_trial_remix(np.zeros((2, 4)), np.zeros((3, 4)))


@settings(max_examples=60, deadline=None)
@given(trials, trials)
def test_remix_exchanges_stats_and_is_idempotent(a, b):
    out = inter_trial_remix(a, b)
    so, sb = channel_stats(out), channel_stats(b)
    np.testing.assert_allclose(so.mu, sb.mu, atol=1e-6 * max(1, np.abs(sb.mu).max()))
    np.testing.assert_allclose(so.sigma, sb.sigma, rtol=1e-6)
    np.testing.assert_allclose(inter_trial_remix(out, b), out, atol=1e-6 * max(1, np.abs(out).max()))


# --- augment_batch ---------------------------------------------------------

def batch(seed=0):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(12, 3, 20)) * rng.uniform(0.5, 3, size=(12, 3, 1)) + rng.normal(size=(12, 3, 1))
    subjects = np.repeat([0, 1, 2], 4)
    return data, subjects


def test_policy_validation():
    with pytest.raises(ParameterError):
        AugmentPolicy(p_remix=1.5)
    with pytest.raises(ParameterError):
        AugmentPolicy(pairing="cross-class")


def test_p_zero_and_eval_mode_unchanged():
    data, subj = batch()
    rng = np.random.default_rng(0)
    out = augment_batch(data, subj, data, subj, AugmentPolicy(p_remix=0.0), rng)
    np.testing.assert_array_equal(out, data)
    out = augment_batch(data, subj, data, subj, AugmentPolicy(p_remix=1.0), rng, training=False)
    np.testing.assert_array_equal(out, data)


def test_forced_self_partner_unchanged():
    data, subj = batch()
    counter = RemixCounter()
    out = augment_batch(data, subj, data, subj, AugmentPolicy(p_remix=1.0), np.random.default_rng(0),
                        counter=counter, partner=lambda i: i)
    np.testing.assert_allclose(out, data, atol=1e-9)
    assert counter.calls == len(data)


def test_deterministic_under_seed():
    data, subj = batch()
    pol = AugmentPolicy(p_remix=0.5)
    a = augment_batch(data, subj, data, subj, pol, np.random.default_rng(7))
    b = augment_batch(data, subj, data, subj, pol, np.random.default_rng(7))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, data)


def test_partners_come_from_same_subject():
    data, subj = batch()
    out = augment_batch(data, subj, data, subj, AugmentPolicy(p_remix=1.0), np.random.default_rng(3))
    for i in range(len(data)):
        stats = channel_stats(out[i])
        same = [j for j in range(len(data)) if subj[j] == subj[i]
                and np.allclose(channel_stats(data[j]).sigma, stats.sigma)]
        assert same, f"sample {i} took moments from another subject"


def test_single_trial_subject_passes_through():
    data, _ = batch()
    subj = np.array([0] + [1] * 11)
    out = augment_batch(data, subj, data, subj, AugmentPolicy(p_remix=1.0), np.random.default_rng(0))
    np.testing.assert_array_equal(out[0], data[0])


def test_remix_probability_is_respected():
    data, subj = batch()
    counter = RemixCounter()
    rng = np.random.default_rng(0)
    for _ in range(200):
        augment_batch(data, subj, data, subj, AugmentPolicy(p_remix=0.5), rng, counter=counter)
    assert abs(counter.calls / (200 * len(data)) - 0.5) < 0.05


# --- CADA ------------------------------------------------------------------

def test_logit():
    assert logit(0.5) == 0.0
    assert 1 / (1 + np.exp(-logit(0.95))) == pytest.approx(0.95)


def test_cada_near_identity():
    with dc.precision(np.float64):
        x = np.random.default_rng(0).normal(size=(2, 4, 30)) * 5 + 3
        params = CadaParams.identity(4, gate=1 - 1e-7)
        out = cada_apply(x, params).data
        np.testing.assert_allclose(out, x, atol=1e-4)
        # a single (C, T) trial is accepted too
        np.testing.assert_allclose(cada_apply(x[0], params).data, x[0], atol=1e-4)


def test_cada_closed_gates_give_zero():
    with dc.precision(np.float64):
        x = np.random.default_rng(1).normal(size=(1, 3, 30))
        out = cada_apply(x, CadaParams.identity(3, gate=1e-9)).data
        np.testing.assert_allclose(out, 0, atol=1e-7)


def test_cada_output_moments_match_gates():
    with dc.precision(np.float64):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(3, 4, 40)) * 2 + 1
        params = CadaParams(*(dc.tensor(v, requires_grad=True) for v in
                              (rng.normal(size=(4, 4)), rng.normal(size=4),
                               rng.normal(size=(4, 4)), rng.normal(size=4))))
        out, gf, gg = cada_apply(x, params, return_gates=True)
        stats = channel_stats(x)
        got = channel_stats(out.data)
        np.testing.assert_allclose(got.mu, gf.data * stats.mu, atol=1e-6)
        np.testing.assert_allclose(got.sigma, gg.data * stats.sigma, atol=1e-6)
        assert np.all((gf.data > 0) & (gf.data < 1))


def test_cada_gradients():
    with dc.precision(np.float64):
        rng = np.random.default_rng(3)
        x = dc.tensor(rng.normal(size=(2, 3, 12)) + 0.5)
        ps = [dc.tensor(v) for v in (rng.normal(size=(3, 3)) * 0.3, rng.normal(size=3),
                                     rng.normal(size=(3, 3)) * 0.3, rng.normal(size=3))]
        w = rng.normal(size=(2, 3, 12))

        def f(x, wf, bf, wg, bg):
            return (cada_apply(x, CadaParams(wf, bf, wg, bg)) * w).sum()

        assert dc.finite_diff_check(f, [x] + ps) < 1e-4


def test_cada_shape_errors():
    params = CadaParams.identity(3)
    with pytest.raises(DimensionError):
        cada_apply(np.zeros((1, 4, 10)), params)
    with pytest.raises(ParameterError):
        cada_apply(np.zeros((1, 3, 1)), params)
