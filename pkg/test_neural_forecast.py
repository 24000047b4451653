"""
Tests for the numpy RNN/LSTM forecasters: forward pass, BPTT gradients, training and persistence.
"""

import math

import numpy as np
import pytest
from safetensors.numpy import save_file

import neural_forecast
from errors import (
    BoundsError,
    ConfigurationError,
    DegenerateInputError,
    DivergenceError,
    StructuralError,
    ZeroRangeError,
)
from neural_forecast import (
    SGD,
    Adam,
    RecurrentModel,
    TrainConfig,
    backward,
    clip_gradients,
    forward,
    load_model,
    predict_series,
    save_model,
    train,
)
from series_core import ScalerState, TimeSeries, apply_scaler, invert_scaler, make_windows


def zero_model(kind, hidden_size=4):
    shapes = RecurrentModel.expected_shapes(kind, hidden_size)
    return RecurrentModel(kind, hidden_size, {name: np.zeros(shape) for name, shape in shapes.items()})


def constant_lstm(b_y, hidden_size=4):
    model = zero_model('lstm', hidden_size)
    model.weights['b'][hidden_size:2 * hidden_size] = 20.0
    model.weights['b_y'][0] = b_y
    return model


def sine_series(n, period=24):
    return TimeSeries(np.sin(2 * np.pi * np.arange(n) / period))


def numerical_gradients(model, window, target, step=1e-5):
    grads = {}
    for name, weight in model.weights.items():
        grad = np.zeros_like(weight)
        for index in np.ndindex(weight.shape):
            original = weight[index]
            weight[index] = original + step
            plus = 0.5 * (forward(model, window)[0] - target) ** 2
            weight[index] = original - step
            minus = 0.5 * (forward(model, window)[0] - target) ** 2
            weight[index] = original
            grad[index] = (plus - minus) / (2 * step)
        grads[name] = grad
    return grads


@pytest.mark.parametrize('kind', ['rnn', 'lstm'])
def test_backward_matches_finite_differences(kind):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        model = RecurrentModel.initialize(kind, 8, rng)
        window = rng.uniform(0.0, 1.0, 12)
        target = float(rng.uniform(0.0, 1.0))
        _, cache = forward(model, window)
        analytic = backward(model, cache, target)
        numeric = numerical_gradients(model, window, target)
        for name in model.weights:
            difference = np.linalg.norm(analytic[name] - numeric[name])
            scale = max(np.linalg.norm(analytic[name]) + np.linalg.norm(numeric[name]), 1e-12)
            assert difference / scale < 1e-4, f"{kind} seed {seed} gradient {name}"
            np.testing.assert_allclose(analytic[name], numeric[name], rtol=1e-4, atol=1e-7,
                                       err_msg=f"{kind} seed {seed} gradient {name}")


@pytest.mark.parametrize('kind', ['rnn', 'lstm'])
def test_zero_error_gives_zero_gradients(kind):
    model = RecurrentModel.initialize(kind, 6, np.random.default_rng(1))
    prediction, cache = forward(model, np.linspace(0.0, 1.0, 5))
    for grad in backward(model, cache, prediction).values():
        assert np.all(grad == 0.0)


def test_single_step_rnn_head_gradient():
    model = RecurrentModel.initialize('rnn', 5, np.random.default_rng(2))
    prediction, cache = forward(model, [0.4])
    h1 = np.tanh(model.weights['W_xh'][:, 0] * 0.4 + model.weights['b_h'])
    grads = backward(model, cache, 0.9)
    np.testing.assert_allclose(grads['W_hy'][0], (prediction - 0.9) * h1, atol=1e-15)


def test_constant_lstm_ignores_input(rng):
    model = constant_lstm(0.3)
    for _ in range(5):
        assert forward(model, rng.normal(size=12))[0] == 0.3


def test_zero_rnn_outputs_zero(rng):
    model = zero_model('rnn')
    assert forward(model, rng.normal(size=7))[0] == 0.0


def test_forward_is_deterministic():
    model = RecurrentModel.initialize('lstm', 8, np.random.default_rng(3))
    window = np.zeros(12)
    assert forward(model, window)[0] == forward(model, window)[0]


def test_lstm_state_bounds(rng):
    model = RecurrentModel.initialize('lstm', 8, rng)
    _, cache = forward(model, rng.normal(0.0, 1.0, 20))
    for t, cell in enumerate(cache.cells):
        assert np.all(np.abs(cell) <= t + 1e-12)
    for hidden in cache.hidden:
        assert np.all(np.abs(hidden) < 1.0)


def test_initialization_ranges():
    model = RecurrentModel.initialize('lstm', 16, np.random.default_rng(4))
    bound = 1.0 / math.sqrt(17)
    assert np.all(np.abs(model.weights['W_h']) <= bound)
    assert np.all(model.weights['b'][16:32] == 1.0)
    assert np.all(np.abs(model.weights['W_hy']) <= 0.25)


def test_unknown_kind_and_bad_shapes():
    with pytest.raises(StructuralError):
        RecurrentModel.initialize('gru', 4, np.random.default_rng(0))
    weights = {name: np.zeros(shape) for name, shape in RecurrentModel.expected_shapes('rnn', 4).items()}
    weights['W_hh'] = np.zeros((3, 3))
    with pytest.raises(StructuralError):
        RecurrentModel('rnn', 4, weights)


def test_stale_cache_is_rejected():
    model = RecurrentModel.initialize('rnn', 4, np.random.default_rng(5))
    prediction, cache = forward(model, [0.1, 0.2, 0.3])
    grads = backward(model, cache, 0.5)
    Adam(0.01).step(model, grads)
    with pytest.raises(StructuralError):
        backward(model, cache, 0.5)
    with pytest.raises(StructuralError):
        backward(model.copy(), forward(model, [0.1])[1], 0.5)


def test_clip_gradients_rescales_to_threshold():
    grads = {'a': np.array([3.0, 4.0]), 'b': np.array([[12.0]])}
    clipped, norm = clip_gradients(grads, 6.5)
    assert norm == pytest.approx(13.0)
    total = math.sqrt(sum(float(np.sum(g ** 2)) for g in clipped.values()))
    assert total == pytest.approx(6.5, abs=1e-12)
    untouched, _ = clip_gradients(grads, 20.0)
    np.testing.assert_array_equal(untouched['a'], grads['a'])


def test_train_config_validation():
    assert TrainConfig.from_dict({'hidden_size': 8, 'unknown': 1}).hidden_size == 8
    with pytest.raises(ConfigurationError):
        TrainConfig(look_back=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(optimizer='rmsprop')
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0.0)
    assert 'progress' not in TrainConfig().to_dict()


def test_train_rejects_bad_series():
    with pytest.raises(DegenerateInputError):
        train(np.arange(10.0), TrainConfig(look_back=12))
    with pytest.raises(ZeroRangeError):
        train(np.full(40, 2.5), TrainConfig(look_back=4, epochs=1))
    with pytest.raises(ConfigurationError):
        train(np.arange(40.0), TrainConfig(look_back=4, epochs=1), kind='gru')


@pytest.mark.parametrize('kind', ['rnn', 'lstm'])
def test_training_is_deterministic(kind):
    config = TrainConfig(look_back=6, hidden_size=6, epochs=5, learning_rate=0.01, seed=11)
    series = sine_series(80)
    first, _, first_report = train(series, config, kind)
    second, _, second_report = train(series, config, kind)
    for name in first.weights:
        np.testing.assert_array_equal(first.weights[name], second.weights[name])
    assert first_report.loss_history == second_report.loss_history


def test_training_loss_decreases():
    config = TrainConfig(look_back=12, hidden_size=8, epochs=20, learning_rate=0.005, seed=0)
    _, _, report = train(sine_series(120), config, 'lstm')
    assert report.epochs_run == 20
    assert report.final_loss < report.loss_history[0]
    assert report.final_loss == report.loss_history[-1]


def test_sgd_step_and_training_run():
    model = RecurrentModel.initialize('rnn', 4, np.random.default_rng(0))
    before = {name: weight.copy() for name, weight in model.weights.items()}
    SGD(0.1).step(model, {name: np.ones_like(weight) for name, weight in before.items()})
    for name, weight in before.items():
        np.testing.assert_allclose(model.weights[name], weight - 0.1, rtol=0, atol=1e-15)

    config = TrainConfig(look_back=6, hidden_size=6, epochs=15, learning_rate=0.05,
                         optimizer='sgd', seed=2)
    first, _, report = train(sine_series(80), config, 'rnn')
    second, _, again = train(sine_series(80), config, 'rnn')
    assert report.epochs_run == 15
    assert all(math.isfinite(loss) for loss in report.loss_history)
    assert report.final_loss < report.loss_history[0]
    assert report.loss_history == again.loss_history
    for name in first.weights:
        np.testing.assert_array_equal(first.weights[name], second.weights[name])


def test_training_divergence_names_epoch():
    config = TrainConfig(look_back=4, hidden_size=4, epochs=3, learning_rate=1e300,
                         optimizer='sgd', gradient_clip=1e30)
    with pytest.raises(DivergenceError) as excinfo:
        train(sine_series(60), config, 'rnn')
    assert excinfo.value.epoch == 1
    assert excinfo.value.exit_code == 2


def test_teacher_forced_matches_window_forward():
    series = sine_series(60)
    model, scaler, _ = train(series, TrainConfig(look_back=5, hidden_size=4, epochs=2), 'lstm')
    windows = make_windows(apply_scaler(series.values, scaler), 5)
    expected = invert_scaler([forward(model, x)[0] for x in windows.inputs], scaler)
    predicted = predict_series(model, scaler, series, len(windows), mode='teacher_forced')
    np.testing.assert_allclose(predicted, expected, rtol=0, atol=1e-12)


def test_recursive_prediction_with_constant_network():
    model = constant_lstm(0.25)
    model.look_back = 3
    scaler = ScalerState(10.0, 20.0)
    predicted = predict_series(model, scaler, np.array([11.0, 15.0, 19.0]), 4, mode='recursive')
    assert predicted == pytest.approx([12.5] * 4)


def test_predict_series_edge_cases():
    model = constant_lstm(0.5)
    model.look_back = 4
    scaler = ScalerState(0.0, 1.0)
    assert predict_series(model, scaler, np.arange(10.0) / 10, 0) == []
    with pytest.raises(BoundsError):
        predict_series(model, scaler, np.arange(6.0) / 10, 3, mode='teacher_forced')
    with pytest.raises(BoundsError):
        predict_series(model, scaler, np.arange(2.0) / 10, 3, mode='recursive')
    with pytest.raises(BoundsError):
        predict_series(model, scaler, np.arange(10.0) / 10, -1)
    with pytest.raises(ConfigurationError):
        predict_series(model, scaler, np.arange(10.0) / 10, 2, mode='beam')


@pytest.mark.parametrize('kind', ['rnn', 'lstm'])
def test_save_and_load_weights(tmp_path, kind):
    config = TrainConfig(look_back=4, hidden_size=3, epochs=2, seed=9)
    series = sine_series(40)
    model, scaler, _ = train(series, config, kind)
    path = tmp_path / f'{kind}.safetensors'
    save_model(model, scaler, path, config)

    loaded, loaded_scaler, loaded_config = load_model(path)
    assert loaded.kind == kind and loaded.look_back == 4
    assert loaded_scaler == scaler
    assert loaded_config == config
    for name in model.weights:
        np.testing.assert_array_equal(loaded.weights[name], model.weights[name])
    assert predict_series(loaded, loaded_scaler, series, 3) == predict_series(model, scaler, series, 3)


def test_lstm_tensors_are_split_per_gate():
    model = RecurrentModel.initialize('lstm', 3, np.random.default_rng(0))
    tensors = model.to_tensors()
    assert {'W_xi', 'W_hf', 'b_g', 'W_ho', 'W_hy', 'b_y'} <= set(tensors)
    np.testing.assert_array_equal(tensors['b_f'], model.weights['b'][3:6])


def test_load_rejects_foreign_files(tmp_path):
    with pytest.raises(ConfigurationError):
        load_model(tmp_path / 'missing.safetensors')
    foreign = tmp_path / 'foreign.safetensors'
    save_file({'x': np.zeros(2)}, str(foreign), metadata={'format': 'something-else'})
    with pytest.raises(StructuralError):
        load_model(foreign)
    partial = tmp_path / 'partial.safetensors'
    save_file({'W_xi': np.zeros((2, 1))}, str(partial),
              metadata={'format': neural_forecast.WEIGHTS_FORMAT, 'kind': 'lstm', 'hidden_size': '2',
                        'scaler_min': '0.0', 'scaler_max': '1.0'})
    with pytest.raises(StructuralError):
        load_model(partial)


@pytest.mark.slow
@pytest.mark.parametrize('kind,threshold', [('lstm', 0.02), ('rnn', 0.05)])
def test_sine_wave_is_learnable(kind, threshold):
    series = sine_series(480)
    config = TrainConfig(look_back=12, hidden_size=16, epochs=200, learning_rate=0.005, seed=0)
    model, scaler, report = train(series, config, kind)
    windows = make_windows(apply_scaler(series.values, scaler), 12)
    predictions = np.array([forward(model, x)[0] for x in windows.inputs])
    rmse = math.sqrt(float(np.mean((predictions - windows.targets) ** 2)))
    assert rmse < threshold
    assert report.final_loss < report.loss_history[0]
