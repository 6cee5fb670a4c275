import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvepnet.baselines import (
    FilterBankSpec, cca_classify, cca_rho, classify_trials, fbcca_classify, fbcca_scores,
    reference_bank,
)
from ssvepnet.errors import ParameterError
from ssvepnet.synth import SynthSpec, generate_subject

FS = 250.0


def qr_canonical_rho(x, y):
    # independent oracle: canonical correlations are the singular values of Qx^T Qy
    x = x - x.mean(axis=1, keepdims=True)
    y = y - y.mean(axis=1, keepdims=True)
    qx, _ = np.linalg.qr(x.T)
    qy, _ = np.linalg.qr(y.T)
    return np.linalg.svd(qx.T @ qy, compute_uv=False)[0]


def test_reference_bank_layout():
    bank = reference_bank([10.0], 250, FS, harmonics=2)
    t = np.arange(250) / FS
    assert bank.shape == (1, 4, 250)
    np.testing.assert_allclose(bank[0, 0], np.sin(2 * np.pi * 10 * t))
    np.testing.assert_allclose(bank[0, 3], np.cos(2 * np.pi * 20 * t))


def test_self_correlation():
    x = np.random.default_rng(0).normal(size=(3, 200))
    assert cca_rho(x, x) == pytest.approx(1.0, abs=1e-6)


def test_sine_in_reference_span():
    t = np.arange(250) / FS
    bank = reference_bank([10.0], 250, FS)
    assert cca_rho(np.sin(2 * np.pi * 10 * t)[None], bank[0]) >= 0.999


def test_noise_correlation_is_small():
    bank = reference_bank([10.0], 250, FS)[0]
    rhos = [cca_rho(np.random.default_rng(s).normal(size=(1, 250)), bank) for s in range(300)]
    assert np.mean(np.array(rhos) < 0.4) >= 0.99


@pytest.mark.parametrize("seed", range(5))
def test_matches_qr_oracle(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 300))
    y = reference_bank([9.25 + seed], 300, FS)[0] + 0.1 * rng.normal(size=(10, 300))
    assert cca_rho(x, y) == pytest.approx(qr_canonical_rho(x, y), abs=1e-6)


def test_matches_sklearn_cca():
    from sklearn.cross_decomposition import CCA

    rng = np.random.default_rng(3)
    t = np.arange(250) / FS
    x = np.outer(rng.normal(size=4), np.sin(2 * np.pi * 12 * t + 0.3)) + rng.normal(size=(4, 250))
    y = reference_bank([12.0], 250, FS, harmonics=2)[0]
    u, v = CCA(n_components=1, max_iter=5000, tol=1e-10).fit(x.T, y.T).transform(x.T, y.T)
    assert cca_rho(x, y) == pytest.approx(abs(np.corrcoef(u[:, 0], v[:, 0])[0, 1]), abs=1e-4)


def test_rho_symmetric_and_bounded():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(3, 100)), rng.normal(size=(4, 100))
    assert cca_rho(x, y) == pytest.approx(cca_rho(y, x), abs=1e-9)
    assert 0 <= cca_rho(x, y) <= 1


def test_rho_argument_errors():
    with pytest.raises(ParameterError):
        cca_rho(np.zeros((2, 10)), np.zeros((2, 11)))
    with pytest.raises(ParameterError):
        cca_rho(np.zeros((12, 10)), np.zeros((2, 10)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_mixing_and_scale_invariance(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 150))
    bank = reference_bank([8.0, 10.0, 12.0], 150, FS)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    mix = q * rng.uniform(1, 4, size=4)
    for y in bank:
        assert cca_rho(mix @ x, y) == pytest.approx(cca_rho(x, y), abs=1e-6)
    assert cca_classify(x, bank) == cca_classify(3.7 * x, bank)


def test_classify_degenerate_and_self_test():
    bank = reference_bank([8.0, 10.0, 12.0], 250, FS)
    assert cca_classify(np.zeros((2, 250)), bank) == 0
    for f in range(3):
        assert cca_classify(bank[f][:4], bank) == f
    with pytest.raises(ParameterError):
        cca_classify(np.zeros((2, 250)), np.zeros((0, 10, 250)))


def test_clean_11hz_trial():
    freqs = [9.0, 10.0, 11.0, 12.0]
    t = np.arange(250) / FS
    x = np.outer([1.0, 0.8, 1.2], np.sin(2 * np.pi * 11 * t + 1.0))
    assert cca_classify(x, reference_bank(freqs, 250, FS)) == 2


def test_filter_bank_weights_and_bands():
    spec = FilterBankSpec()
    np.testing.assert_allclose(spec.weights()[:2], [1.25, 2 ** -1.25 + 0.25])
    assert spec.weights()[1] == pytest.approx(0.6705, abs=1e-4)
    assert spec.band(3) == (24.0, 88.0)
    with pytest.raises(ParameterError):
        FilterBankSpec(bands=0)


def corpus(snr, trials_per_class=10, subjects=1):
    spec = SynthSpec(snr_db=snr, trials_per_class=trials_per_class, subjects=subjects)
    sets = [generate_subject(spec, s) for s in range(subjects)]
    return spec, sets


def test_fbcca_at_least_cca_on_clean_trials():
    spec, (es,) = corpus(10.0)
    data = es.data[:, :, 35:285]
    cca, _ = classify_trials(data, spec.frequencies, FS, "cca")
    fb, scores = classify_trials(data, spec.frequencies, FS, "fbcca")
    assert scores.shape == (120, 12)
    assert (fb == es.labels).mean() >= (cca == es.labels).mean()


def test_single_band_fbcca_tracks_cca():
    spec, (es,) = corpus(-5.0)
    data = es.data[:, :, 35:285]
    bank = reference_bank(spec.frequencies, 250, FS)
    one = FilterBankSpec(bands=1, low_step_hz=6.0, high_hz=90.0)
    cca, _ = classify_trials(data, spec.frequencies, FS, "cca")
    fb = np.array([fbcca_classify(x, bank, one, FS) for x in data])
    assert (fb == cca).mean() >= 0.95


def test_fbcca_scores_shape():
    bank = reference_bank([8.0, 10.0], 250, FS)
    scores = fbcca_scores(np.random.default_rng(0).normal(size=(3, 250)), bank, FilterBankSpec(), FS)
    assert scores.shape == (2,) and np.all(scores >= 0)


def test_unknown_method():
    with pytest.raises(ParameterError):
        classify_trials(np.zeros((1, 2, 250)), [10.0], FS, "trca")
