import numpy as np
import pytest

from ssvepnet import diffcore as dc
from ssvepnet.errors import DimensionError, FormatError, NumericContractError
from ssvepnet.model import (
    ModelConfig, NetworkParams, argmax_lowest, forward, load_checkpoint, logits, param_count,
    predict, predict_proba, save_checkpoint,
)
from ssvepnet.synth import SynthSpec, generate_subject

TINY = dict(n_samples=16, n_classes=3, channels=2, temporal_kernel=4, temporal_filters=2,
            spatial_filters=2, pool=2, hidden=(5, 4))


def test_fc_count_arithmetic():
    # an 8 -> 4 affine layer has 8*4 weights and 4 biases
    cfg = ModelConfig(**TINY)
    params = NetworkParams.init(cfg)
    w, b = params.fc[2]
    assert w.size + b.size == 4 * 3 + 3
    assert 8 * 4 + 4 == 36


@pytest.mark.parametrize("use_asdm", [True, False])
@pytest.mark.parametrize("T", [75, 175, 250])
def test_param_count_matches_enumeration(T, use_asdm):
    cfg = ModelConfig(n_samples=T, n_classes=12, use_asdm=use_asdm)
    n, nbytes = param_count(cfg)
    assert n == NetworkParams.init(cfg).n_scalars()
    assert nbytes == 4 * n


def test_param_count_at_default_window():
    cfg = ModelConfig(n_samples=175, n_classes=12)
    C, T, R, d, kt, ks, w, (h1, h2) = 8, 175, 12, 25, 16, 16, 4, (128, 64)
    P = (T - d + 1) // w
    closed = (2 * (C * C + C) + 1 + (T // 2 + 1) + 4 * C + 4 * C * C + 3 * C
              + kt * d + kt + ks * kt * C + ks + ks * P * h1 + h1 + h1 * h2 + h2 + h2 * R + R)
    assert param_count(cfg)[0] == closed
    assert param_count(cfg)[1] <= 0.6e6


def test_ablation_removes_exactly_asdm():
    on = ModelConfig(n_samples=175, n_classes=12)
    off = ModelConfig(n_samples=175, n_classes=12, use_asdm=False)
    asdm = NetworkParams.init(on).asdm
    assert param_count(on)[0] - param_count(off)[0] == sum(t.size for t in asdm.tensors().values())


def test_doubling_filters_increases_count():
    a = ModelConfig(n_samples=175, n_classes=12)
    b = ModelConfig(n_samples=175, n_classes=12, temporal_filters=32)
    assert param_count(b)[0] > param_count(a)[0]


def test_shape_algebra_and_config_errors():
    cfg = ModelConfig(n_samples=100, n_classes=4)
    assert cfg.conv_time == 76 and cfg.pooled_time == 19 and cfg.flat_features == 16 * 19
    with pytest.raises(DimensionError):
        ModelConfig(n_samples=20, n_classes=4)
    with pytest.raises(DimensionError):
        ModelConfig(n_samples=100, n_classes=4, pool=0)
    with pytest.raises(DimensionError):
        ModelConfig(n_samples=100, n_classes=4, pool=200)
    with pytest.raises(DimensionError):
        ModelConfig(n_samples=100, n_classes=4, hidden=(0, 4))


def test_forward_rows_sum_to_one_and_identical_rows():
    cfg = ModelConfig(n_samples=75, n_classes=12)
    params = NetworkParams.init(cfg, seed=1)
    x = np.random.default_rng(0).normal(size=(3, 8, 75)).astype(np.float32)
    x[2] = x[0]
    p = forward(x, params).data
    assert p.shape == (3, 12)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_array_equal(p[0], p[2])


def test_forward_shape_and_mode_errors():
    params = NetworkParams.init(ModelConfig(**TINY))
    with pytest.raises(DimensionError):
        forward(np.zeros((1, 3, 16)), params)
    with pytest.raises(ValueError):
        forward(np.zeros((1, 2, 16)), params, mode="test")


def test_non_finite_output_is_reported():
    params = NetworkParams.init(ModelConfig(**TINY, use_asdm=False))
    params.fc[2][0].data[...] = np.inf
    with pytest.raises(NumericContractError):
        forward(np.ones((1, 2, 16)), params)


def test_untrained_network_is_at_chance():
    spec = SynthSpec(trials_per_class=84, subjects=1, snr_db=0.0, trial_s=0.5)
    es = generate_subject(spec, 0)
    accs = []
    for seed in range(5):
        params = NetworkParams.init(ModelConfig(n_samples=es.n_samples, n_classes=12), seed=seed)
        accs.append(float((predict(es.data[:1000], params) == es.labels[:1000]).mean()))
    # the default seed, and the seed average (a single random net can correlate with frequency)
    assert abs(accs[0] - 1 / 12) <= 0.05
    assert abs(np.mean(accs) - 1 / 12) <= 0.05


def test_predict_tie_break_and_argmax():
    assert argmax_lowest([[0.1, 0.7, 0.2]])[0] == 1
    assert argmax_lowest([[0.5, 0.5]])[0] == 0
    params = NetworkParams.init(ModelConfig(**TINY), seed=2)
    x = np.random.default_rng(1).normal(size=(5, 2, 16))
    np.testing.assert_array_equal(predict(x, params), predict_proba(x, params).argmax(axis=1))


def test_logit_shift_leaves_prediction_unchanged():
    params = NetworkParams.init(ModelConfig(**TINY), seed=2)
    x = np.random.default_rng(2).normal(size=(6, 2, 16))
    z = logits(x, params).data
    np.testing.assert_array_equal(argmax_lowest(dc.softmax(dc.tensor(z + 7.5)).data), predict(x, params))


def test_full_network_gradient_check():
    with dc.precision(np.float64):
        cfg = ModelConfig(**TINY)
        params = NetworkParams.init(cfg, seed=4, dtype=np.float64)
        params.asdm.theta.data = np.array(0.7)  # away from any Pm value, see below
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 2, 16))
        y = np.eye(3)[[0, 1, 2]]
        named = params.named_tensors()
        names = [n for n in named if n != "asdm.theta"]  # surrogate gradient by design

        def f(*tensors):
            for n, t in zip(names, tensors):
                setattr_path(params, n, t)
            return dc.cross_entropy(forward(x, params), y)

        assert dc.finite_diff_check(f, [named[n] for n in names]) < 1e-4


def setattr_path(params, name, t):
    group, key = name.split(".")
    if group == "cada":
        setattr(params.cada, key, t)
    elif group == "asdm":
        setattr(params.asdm, key, t)
    elif group in ("temporal", "spatial"):
        setattr(params, f"{group}_{key}", t)
    else:
        i = int(group[2:]) - 1
        w, b = params.fc[i]
        params.fc[i] = (t, b) if key == "w" else (w, t)


def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig(n_samples=75, n_classes=12, input_scale=0.25)
    params = NetworkParams.init(cfg, seed=7)
    save_checkpoint(params, tmp_path / "m.ssvd")
    back = load_checkpoint(tmp_path / "m.ssvd")
    assert back.config == cfg
    for (ka, a), (kb, b) in zip(params.named_tensors().items(), back.named_tensors().items()):
        assert ka == kb and a.data.tobytes() == b.data.tobytes()
    x = np.random.default_rng(0).normal(size=(4, 8, 75))
    np.testing.assert_array_equal(predict_proba(x, params), predict_proba(x, back))


def test_checkpoint_corruption(tmp_path):
    params = NetworkParams.init(ModelConfig(**TINY))
    save_checkpoint(params, tmp_path / "m.ssvd")
    raw = (tmp_path / "m.ssvd").read_bytes()
    (tmp_path / "bad.ssvd").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "bad.ssvd")
    (tmp_path / "short.ssvd").write_bytes(raw[:-10])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "short.ssvd")


def test_state_dict_round_trip_and_mismatch():
    params = NetworkParams.init(ModelConfig(**TINY), seed=1)
    state = params.state_dict()
    other = NetworkParams.init(ModelConfig(**TINY), seed=2)
    other.load_state_dict(state)
    for k, v in other.state_dict().items():
        np.testing.assert_array_equal(v, state[k])
    del state["fc1.w"]
    with pytest.raises(DimensionError):
        other.load_state_dict(state)
