"""
Neural Forecast Module
Single-layer SimpleRNN and LSTM one-step-ahead forecasters written directly in numpy,
trained with backpropagation through time.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from safetensors import safe_open
from safetensors.numpy import save_file
from scipy.special import expit
from tqdm import tqdm

from errors import (
    BoundsError,
    ConfigurationError,
    DegenerateInputError,
    DivergenceError,
    StructuralError,
)
from series_core import (
    ScalerState,
    TimeSeries,
    apply_scaler,
    fit_scaler,
    invert_scaler,
    make_windows,
)

logger = logging.getLogger(__name__)

KINDS = ('rnn', 'lstm')
GATES = ('i', 'f', 'g', 'o')
WEIGHTS_FORMAT = 'inflation-forecast-recurrent'
WEIGHTS_FORMAT_VERSION = '1'


@dataclass
class TrainConfig:
    look_back: int = 12
    hidden_size: int = 32
    epochs: int = 300
    learning_rate: float = 0.001
    optimizer: str = 'adam'
    gradient_clip: float = 5.0
    seed: int = 0
    batch_mode: str = 'full-sequence'
    progress: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name in ('look_back', 'hidden_size', 'epochs'):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ConfigurationError(f"{name} must be a positive integer, got {value}")
            setattr(self, name, int(value))
        for name in ('learning_rate', 'gradient_clip'):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")
        self.optimizer = str(self.optimizer).lower()
        if self.optimizer not in ('adam', 'sgd'):
            raise ConfigurationError(f"optimizer must be 'adam' or 'sgd', got '{self.optimizer}'")
        if self.batch_mode != 'full-sequence':
            raise ConfigurationError("only the full-sequence batch mode is supported")
        self.seed = int(self.seed)

    @classmethod
    def from_dict(cls, config: Dict) -> 'TrainConfig':
        known = {k: v for k, v in config.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload.pop('progress')
        return payload


@dataclass
class TrainReport:
    loss_history: List[float]
    final_loss: float
    epochs_run: int

    def to_dict(self) -> dict:
        return {'loss_history': list(self.loss_history), 'final_loss': self.final_loss,
                'epochs_run': self.epochs_run}


class RecurrentModel:
    """Weights of a one-layer recurrent network with a linear dense head.

    LSTM gate parameters are stored stacked in the order i, f, g, o so that
    W_x is (4H, 1), W_h is (4H, H) and b is (4H,).
    """

    def __init__(self, kind: str, hidden_size: int, weights: Dict[str, np.ndarray]):
        if kind not in KINDS:
            raise StructuralError(f"unknown recurrent model kind '{kind}'")
        self.kind = kind
        self.hidden_size = int(hidden_size)
        self.input_size = 1
        self.weights = {name: np.array(value, dtype=np.float64) for name, value in weights.items()}
        self.look_back: Optional[int] = None
        self.version = 0
        self.check_shapes()

    @staticmethod
    def expected_shapes(kind: str, hidden_size: int) -> Dict[str, Tuple[int, ...]]:
        h = hidden_size
        if kind == 'rnn':
            return {'W_xh': (h, 1), 'W_hh': (h, h), 'b_h': (h,), 'W_hy': (1, h), 'b_y': (1,)}
        return {'W_x': (4 * h, 1), 'W_h': (4 * h, h), 'b': (4 * h,), 'W_hy': (1, h), 'b_y': (1,)}

    def check_shapes(self):
        expected = self.expected_shapes(self.kind, self.hidden_size)
        if set(expected) != set(self.weights):
            raise StructuralError(
                f"{self.kind} weights must be {sorted(expected)}, got {sorted(self.weights)}")
        for name, shape in expected.items():
            if self.weights[name].shape != shape:
                raise StructuralError(
                    f"{self.kind} weight {name} has shape {self.weights[name].shape}, expected {shape}")

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights.values())

    @classmethod
    def initialize(cls, kind: str, hidden_size: int, rng: np.random.Generator) -> 'RecurrentModel':
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); the forget-gate bias starts at +1."""
        if kind not in KINDS:
            raise StructuralError(f"unknown recurrent model kind '{kind}'")
        recurrent_bound = 1.0 / math.sqrt(1 + hidden_size)
        head_bound = 1.0 / math.sqrt(hidden_size)
        weights = {}
        for name, shape in cls.expected_shapes(kind, hidden_size).items():
            bound = head_bound if name in ('W_hy', 'b_y') else recurrent_bound
            weights[name] = rng.uniform(-bound, bound, size=shape)
        if kind == 'lstm':
            weights['b'][hidden_size:2 * hidden_size] = 1.0
        return cls(kind, hidden_size, weights)

    def copy(self) -> 'RecurrentModel':
        clone = RecurrentModel(self.kind, self.hidden_size, self.weights)
        clone.look_back = self.look_back
        return clone

    def touch(self):
        """Mark the weights as changed; caches from earlier forward passes become stale."""
        self.version += 1

    def to_tensors(self) -> Dict[str, np.ndarray]:
        """Flat named arrays with LSTM gates split out per gate."""
        if self.kind == 'rnn':
            return {name: np.ascontiguousarray(w) for name, w in self.weights.items()}
        h = self.hidden_size
        tensors = {}
        for k, gate in enumerate(GATES):
            rows = slice(k * h, (k + 1) * h)
            tensors[f'W_x{gate}'] = np.ascontiguousarray(self.weights['W_x'][rows])
            tensors[f'W_h{gate}'] = np.ascontiguousarray(self.weights['W_h'][rows])
            tensors[f'b_{gate}'] = np.ascontiguousarray(self.weights['b'][rows])
        tensors['W_hy'] = np.ascontiguousarray(self.weights['W_hy'])
        tensors['b_y'] = np.ascontiguousarray(self.weights['b_y'])
        return tensors

    @classmethod
    def from_tensors(cls, kind: str, hidden_size: int,
                     tensors: Dict[str, np.ndarray]) -> 'RecurrentModel':
        if kind == 'rnn':
            return cls(kind, hidden_size, tensors)
        try:
            weights = {
                'W_x': np.concatenate([tensors[f'W_x{g}'] for g in GATES]),
                'W_h': np.concatenate([tensors[f'W_h{g}'] for g in GATES]),
                'b': np.concatenate([tensors[f'b_{g}'] for g in GATES]),
                'W_hy': tensors['W_hy'],
                'b_y': tensors['b_y'],
            }
        except KeyError as e:
            raise StructuralError(f"weights file is missing tensor {e}")
        return cls(kind, hidden_size, weights)


@dataclass
class ForwardCache:
    kind: str
    model_id: int
    version: int
    inputs: np.ndarray
    hidden: List[np.ndarray]
    prediction: float
    cells: List[np.ndarray] = field(default_factory=list)
    gates: List[Tuple[np.ndarray, ...]] = field(default_factory=list)


def _window_vector(window) -> np.ndarray:
    x = np.asarray(window, dtype=np.float64).reshape(-1)
    if x.shape[0] == 0 or not np.all(np.isfinite(x)):
        raise StructuralError("window must be a non-empty finite vector")
    return x


def forward(model: RecurrentModel, window) -> Tuple[float, ForwardCache]:
    """Run the network over one look-back window and return the scaled prediction."""
    x = _window_vector(window)
    w = model.weights
    h = np.zeros(model.hidden_size)
    hidden = [h]
    cache = ForwardCache(model.kind, id(model), model.version, x, hidden, 0.0)

    if model.kind == 'rnn':
        w_x = w['W_xh'][:, 0]
        for x_t in x:
            h = np.tanh(w_x * x_t + w['W_hh'] @ h + w['b_h'])
            hidden.append(h)
    else:
        n = model.hidden_size
        w_x = w['W_x'][:, 0]
        c = np.zeros(n)
        cache.cells.append(c)
        for x_t in x:
            z = w_x * x_t + w['W_h'] @ h + w['b']
            i = expit(z[:n])
            f = expit(z[n:2 * n])
            g = np.tanh(z[2 * n:3 * n])
            o = expit(z[3 * n:])
            c = f * c + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            cache.gates.append((i, f, g, o, tanh_c))
            cache.cells.append(c)
            hidden.append(h)

    cache.prediction = float(w['W_hy'][0] @ h + w['b_y'][0])
    return cache.prediction, cache


def backward(model: RecurrentModel, cache: ForwardCache, target: float) -> Dict[str, np.ndarray]:
    """Gradients of 0.5 * (prediction - target)^2 for every weight, through all steps."""
    if cache.model_id != id(model) or cache.version != model.version or cache.kind != model.kind:
        raise StructuralError("forward cache does not belong to the current model weights")

    w = model.weights
    grads = {name: np.zeros_like(value) for name, value in w.items()}
    error = cache.prediction - float(target)
    hidden = cache.hidden
    grads['W_hy'][0] = error * hidden[-1]
    grads['b_y'][0] = error
    dh = error * w['W_hy'][0]

    if model.kind == 'rnn':
        for t in range(cache.inputs.shape[0], 0, -1):
            h_t = hidden[t]
            da = dh * (1.0 - h_t ** 2)
            grads['W_xh'][:, 0] += da * cache.inputs[t - 1]
            grads['W_hh'] += np.outer(da, hidden[t - 1])
            grads['b_h'] += da
            dh = w['W_hh'].T @ da
        return grads

    dc_next = np.zeros(model.hidden_size)
    for t in range(cache.inputs.shape[0], 0, -1):
        i, f, g, o, tanh_c = cache.gates[t - 1]
        dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * cache.cells[t - 1] * f * (1.0 - f),
            dc * i * (1.0 - g ** 2),
            dh * tanh_c * o * (1.0 - o),
        ])
        grads['W_x'][:, 0] += dz * cache.inputs[t - 1]
        grads['W_h'] += np.outer(dz, hidden[t - 1])
        grads['b'] += dz
        dh = w['W_h'].T @ dz
        dc_next = dc * f
    return grads


def clip_gradients(grads: Dict[str, np.ndarray], threshold: float) -> Tuple[Dict[str, np.ndarray], float]:
    """Rescale so the global L2 norm is at most threshold; returns the norm before clipping."""
    norm = math.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    if norm > threshold:
        scale = threshold / norm
        grads = {name: g * scale for name, g in grads.items()}
    return grads, norm


class SGD:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, model: RecurrentModel, grads: Dict[str, np.ndarray]):
        for name, grad in grads.items():
            model.weights[name] -= self.learning_rate * grad
        model.touch()


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, model: RecurrentModel, grads: Dict[str, np.ndarray]):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            m = self.m.setdefault(name, np.zeros_like(grad))
            v = self.v.setdefault(name, np.zeros_like(grad))
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad ** 2
            model.weights[name] -= self.learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + self.epsilon)
        model.touch()


def make_optimizer(config: TrainConfig):
    if config.optimizer == 'sgd':
        return SGD(config.learning_rate)
    return Adam(config.learning_rate)


def train(series: Union[TimeSeries, np.ndarray], config: Optional[TrainConfig] = None,
          kind: str = 'lstm') -> Tuple[RecurrentModel, ScalerState, TrainReport]:
    """Fit a recurrent model on min-max scaled look-back windows of the series."""
    config = config or TrainConfig()
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if kind not in KINDS:
        raise ConfigurationError(f"model kind must be one of {KINDS}, got '{kind}'")
    if values.shape[0] <= config.look_back + 1:
        raise DegenerateInputError(
            f"training needs more than {config.look_back + 1} observations, got {values.shape[0]}")

    scaler = fit_scaler(values)
    windows = make_windows(apply_scaler(values, scaler), config.look_back)
    rng = np.random.default_rng(config.seed)
    model = RecurrentModel.initialize(kind, config.hidden_size, rng)
    model.look_back = config.look_back
    optimizer = make_optimizer(config)

    logger.info(f"Training {kind} (hidden={config.hidden_size}, look_back={config.look_back}) "
                f"on {len(windows)} windows for {config.epochs} epochs")
    history: List[float] = []
    epochs = tqdm(range(1, config.epochs + 1), desc=f"train {kind}", unit="epoch",
                  disable=not config.progress)
    for epoch in epochs:
        total = 0.0
        for x, target in zip(windows.inputs, windows.targets):
            prediction, cache = forward(model, x)
            squared = (prediction - target) ** 2
            if not math.isfinite(squared):
                raise DivergenceError("training loss is not finite", epoch=epoch)
            total += squared
            grads, _ = clip_gradients(backward(model, cache, target), config.gradient_clip)
            optimizer.step(model, grads)
            if not model.is_finite():
                raise DivergenceError("weights became non-finite", epoch=epoch)
        mse = total / len(windows)
        history.append(mse)
        if epoch == 1 or epoch % 50 == 0 or epoch == config.epochs:
            logger.debug(f"{kind} epoch {epoch}/{config.epochs}: mse={mse:.6f}")

    model.check_shapes()
    logger.info(f"Finished training {kind}: final mse={history[-1]:.6f}")
    return model, scaler, TrainReport(history, history[-1], len(history))


def predict_series(model: RecurrentModel, scaler: ScalerState,
                   history: Union[TimeSeries, np.ndarray], steps: int,
                   mode: str = 'teacher_forced', look_back: Optional[int] = None) -> List[float]:
    """Predictions on the original scale.

    teacher_forced predicts the last `steps` observations of history, each from the true
    preceding look_back values. recursive forecasts `steps` values past the end of history,
    feeding predictions back as inputs.
    """
    if steps < 0:
        raise BoundsError(f"steps must be non-negative, got {steps}")
    if mode not in ('teacher_forced', 'recursive'):
        raise ConfigurationError(f"prediction mode must be teacher_forced or recursive, got '{mode}'")
    if steps == 0:
        return []
    look_back = look_back or getattr(model, 'look_back', None)
    if not look_back:
        raise ConfigurationError("look_back is required to build prediction windows")

    values = history.values if isinstance(history, TimeSeries) else np.asarray(history, dtype=float)
    scaled = apply_scaler(values, scaler)
    n = scaled.shape[0]
    predictions = []
    if mode == 'teacher_forced':
        if n < look_back + steps:
            raise BoundsError(
                f"teacher-forced prediction of {steps} steps needs {look_back + steps} "
                f"observations, got {n}")
        for k in range(n - steps, n):
            predictions.append(forward(model, scaled[k - look_back:k])[0])
    else:
        if n < look_back:
            raise BoundsError(f"recursive prediction needs {look_back} observations, got {n}")
        buffer = list(scaled[-look_back:])
        for _ in range(steps):
            prediction = forward(model, buffer[-look_back:])[0]
            predictions.append(prediction)
            buffer.append(prediction)
    return [float(v) for v in invert_scaler(predictions, scaler)]


def save_model(model: RecurrentModel, scaler: ScalerState, path: Union[str, Path],
               config: Optional[TrainConfig] = None):
    """Write weights as a safetensors file with the model record in its metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {
        'format': WEIGHTS_FORMAT,
        'format_version': WEIGHTS_FORMAT_VERSION,
        'kind': model.kind,
        'input_size': str(model.input_size),
        'hidden_size': str(model.hidden_size),
        'scaler_min': repr(float(scaler.min)),
        'scaler_max': repr(float(scaler.max)),
        'train_config': json.dumps(config.to_dict() if config else None, sort_keys=True),
    }
    save_file(model.to_tensors(), str(path), metadata=metadata)
    logger.info(f"Saved {model.kind} weights to {path}")


def load_model(path: Union[str, Path]) -> Tuple[RecurrentModel, ScalerState, Optional[TrainConfig]]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"weights file not found: {path}")
    with safe_open(str(path), framework='np') as handle:
        metadata = handle.metadata() or {}
        tensors = {name: handle.get_tensor(name) for name in handle.keys()}
    if metadata.get('format') != WEIGHTS_FORMAT:
        raise StructuralError(f"{path} is not a recurrent forecaster weights file")

    model = RecurrentModel.from_tensors(metadata['kind'], int(metadata['hidden_size']), tensors)
    scaler = ScalerState(float(metadata['scaler_min']), float(metadata['scaler_max']))
    raw_config = json.loads(metadata.get('train_config', 'null'))
    config = TrainConfig.from_dict(raw_config) if raw_config else None
    if config:
        model.look_back = config.look_back
    return model, scaler, config
