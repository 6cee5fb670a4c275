"""Training-free SSVEP recognizers: CCA and filter-bank CCA."""

from dataclasses import dataclass

import numpy as np

from .errors import NumericContractError, ParameterError
from .signal_io.filters import FilterSpec, butter_design, filtfilt

RIDGE = 1e-9


def reference_bank(frequencies, n_samples, sample_rate, harmonics=5):
    """Array (R, 2*harmonics, T): rows sin/cos(2 pi h f t) for h = 1..harmonics."""
    t = np.arange(n_samples) / sample_rate
    bank = np.empty((len(frequencies), 2 * harmonics, n_samples))
    for i, f in enumerate(frequencies):
        for h in range(1, harmonics + 1):
            bank[i, 2 * h - 2] = np.sin(2 * np.pi * h * f * t)
            bank[i, 2 * h - 1] = np.cos(2 * np.pi * h * f * t)
    return bank


def _inv_sqrt_factor(cov):
    # inverse Cholesky factor with a ridge scaled to the covariance magnitude
    d = cov.shape[0]
    scale = np.trace(cov) / d
    ridge = RIDGE * (scale if scale > 0 else 1.0)
    try:
        chol = np.linalg.cholesky(cov + ridge * np.eye(d))
    except np.linalg.LinAlgError:
        raise NumericContractError("covariance is not positive definite even after ridge") from None
    return np.linalg.inv(chol)


def cca_rho(x, y):
    """Largest canonical correlation between the rows of ``x`` (C, T) and ``y`` (D, T)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    T = x.shape[1]
    if y.shape[1] != T:
        raise ParameterError("x and y need the same number of samples")
    if T <= x.shape[0] or T <= y.shape[0]:
        raise ParameterError("need more samples than variables on both sides")
    x = x - x.mean(axis=1, keepdims=True)
    y = y - y.mean(axis=1, keepdims=True)
    wx = _inv_sqrt_factor(x @ x.T / T)
    wy = _inv_sqrt_factor(y @ y.T / T)
    k = wx @ (x @ y.T / T) @ wy.T
    rho = np.linalg.svd(k, compute_uv=False)[0] if k.size else 0.0
    return float(np.clip(rho, 0.0, 1.0))


def _first_max(scores):
    return int(np.argmax(np.asarray(scores)))


def cca_scores(x, bank):
    return np.array([cca_rho(x, y) for y in bank])


def cca_classify(x, bank):
    if len(bank) == 0:
        raise ParameterError("empty reference bank")
    return _first_max(cca_scores(x, bank))


@dataclass
class FilterBankSpec:
    bands: int = 5
    low_step_hz: float = 8.0
    high_hz: float = 88.0
    a: float = 1.25
    b: float = 0.25
    order: int = 4

    def __post_init__(self):
        if self.bands < 1:
            raise ParameterError("need at least one sub-band")

    def band(self, m):
        return self.low_step_hz * m, self.high_hz

    def weights(self):
        m = np.arange(1, self.bands + 1, dtype=float)
        return m ** (-self.a) + self.b


def filter_bank(x, fbspec, sample_rate):
    """Sub-band copies of ``x`` (..., T) as an array (M, ..., T)."""
    out = []
    for m in range(1, fbspec.bands + 1):
        lo, hi = fbspec.band(m)
        sos = butter_design(FilterSpec(lo, hi, sample_rate, fbspec.order))
        out.append(filtfilt(x, sos))
    return np.stack(out)


def fbcca_scores(x, bank, fbspec, sample_rate, subbands=None):
    """Weighted sum over sub-bands of squared correlations, one score per class."""
    sub = filter_bank(x, fbspec, sample_rate) if subbands is None else subbands
    w = fbspec.weights()
    rho = np.array([[cca_rho(sub[m], y) for y in bank] for m in range(fbspec.bands)])
    return w @ rho ** 2


def fbcca_classify(x, bank, fbspec, sample_rate):
    if len(bank) == 0:
        raise ParameterError("empty reference bank")
    return _first_max(fbcca_scores(x, bank, fbspec, sample_rate))


def classify_trials(data, frequencies, sample_rate, method="cca", harmonics=5, fbspec=None):
    """Labels for a batch of trials (N, C, T) with either baseline."""
    data = np.asarray(data, dtype=np.float64)
    bank = reference_bank(frequencies, data.shape[-1], sample_rate, harmonics)
    if method == "cca":
        return np.array([cca_classify(x, bank) for x in data], dtype=np.int64), None
    if method == "fbcca":
        fbspec = fbspec or FilterBankSpec()
        sub = filter_bank(data, fbspec, sample_rate)  # M, N, C, T
        scores = np.array([fbcca_scores(None, bank, fbspec, sample_rate, subbands=sub[:, i])
                           for i in range(len(data))])
        return scores.argmax(axis=1).astype(np.int64), scores
    raise ParameterError(f"unknown baseline {method!r}")
