"""
Extreme Learning Machine Surrogate
Random single hidden layer with minimum-norm least-squares output weights
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from errors import ConfigError, DomainError, ModelNotTrainedError
from instance import Individual

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10
RANK_WARNING_LEVEL = 0.6


def _sigmoid(u: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * u))


ACTIVATIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    'sigmoid': _sigmoid,
    'tanh': np.tanh,
    'sine': np.sin,
}


@dataclass(frozen=True)
class SurrogateConfig:
    hidden_nodes: Optional[int] = None
    activation: str = 'sigmoid'
    normalize_targets: bool = True
    rtol: float = DEFAULT_RTOL

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"Unknown activation '{self.activation}'; choose from {sorted(ACTIVATIONS)}",
                key='activation',
            )
        if self.hidden_nodes is not None and self.hidden_nodes < 1:
            raise ConfigError("hidden_nodes must be at least 1", key='hidden_nodes')
        if not self.rtol > 0:
            raise ConfigError("rtol must be positive", key='rtol')


@dataclass(frozen=True, eq=False)
class ElmModel:
    W: np.ndarray
    bias: np.ndarray
    activation: str = 'sigmoid'
    beta: Optional[np.ndarray] = None
    target_offset: float = 0.0
    target_scale: float = 1.0

    @property
    def h(self) -> int:
        return self.W.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.W.shape[1]

    @property
    def trained(self) -> bool:
        return self.beta is not None


class TrainingSet:
    """Exact fitness samples keyed by bit vector; re-adding an input overwrites its target"""

    def __init__(self):
        self._samples: Dict[bytes, Tuple[np.ndarray, float]] = {}

    def add(self, x: Sequence[int], target: float) -> None:
        vector = np.asarray(x, dtype=np.int8)
        self._samples[vector.tobytes()] = (vector, float(target))

    def __len__(self) -> int:
        return len(self._samples)

    def __contains__(self, x: Sequence[int]) -> bool:
        return np.asarray(x, dtype=np.int8).tobytes() in self._samples

    @property
    def inputs(self) -> np.ndarray:
        return np.array([vector for vector, _ in self._samples.values()], dtype=float)

    @property
    def targets(self) -> np.ndarray:
        return np.array([target for _, target in self._samples.values()], dtype=float)


def _open_uniform(rng: np.random.Generator, low: float, high: float, size) -> np.ndarray:
    return rng.uniform(np.nextafter(low, high), high, size=size)


def elm_init(n: int, h: int, seed, activation: str = 'sigmoid') -> ElmModel:
    """
    Draw the random hidden layer

    Args:
        n: Input dimension (|I| + |J|)
        h: Hidden node count
        seed: Anything np.random.default_rng accepts
        activation: Name from ACTIVATIONS

    Returns:
        Untrained model with W in (-1, 1) and biases in (0, 1)
    """
    if n < 1 or h < 1:
        raise ConfigError(f"ELM needs n >= 1 and h >= 1, got n={n}, h={h}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"Unknown activation '{activation}'", key='activation')
    rng = np.random.default_rng(seed)
    W = _open_uniform(rng, -1.0, 1.0, (h, n))
    bias = _open_uniform(rng, 0.0, 1.0, h)
    return ElmModel(W=W, bias=bias, activation=activation)


def extend_hidden(model: ElmModel, extra: int, seed) -> ElmModel:
    """Append extra hidden nodes, keeping the existing ones; output weights are reset"""
    grown = elm_init(model.n_inputs, extra, seed, model.activation)
    return ElmModel(
        W=np.vstack((model.W, grown.W)),
        bias=np.concatenate((model.bias, grown.bias)),
        activation=model.activation,
    )


def hidden_matrix(model: ElmModel, X: np.ndarray) -> np.ndarray:
    """Hidden-layer output matrix with the leading all-ones column"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_inputs:
        raise ValueError(f"Expected inputs of length {model.n_inputs}, got {X.shape[1]}")
    hidden = ACTIVATIONS[model.activation](X @ model.W.T + model.bias)
    return np.hstack((np.ones((X.shape[0], 1)), hidden))


def pseudo_inverse(H: np.ndarray, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Moore-Penrose inverse by SVD; singular values below rtol * max are dropped"""
    U, sigma, Vt = np.linalg.svd(H, full_matrices=False)
    if sigma.size == 0:
        return np.zeros(H.T.shape)
    keep = sigma > rtol * sigma[0]
    inverse_sigma = np.zeros_like(sigma)
    inverse_sigma[keep] = 1.0 / sigma[keep]
    return (Vt.T * inverse_sigma) @ U.T


def elm_train(model: ElmModel, S: TrainingSet, normalize: bool = True,
              rtol: float = DEFAULT_RTOL) -> ElmModel:
    """
    Solve the output weights beta = pinv(H) T

    Args:
        model: Model whose hidden layer is used as is
        S: Non-empty training set
        normalize: Map targets affinely to [0, 1] before solving
        rtol: Relative singular value cut-off

    Returns:
        Trained copy of the model
    """
    if len(S) < 1:
        raise ValueError("Training set is empty")
    targets = S.targets
    if not np.all(np.isfinite(targets)):
        raise DomainError("Training targets must be finite")

    offset, scale = 0.0, 1.0
    if normalize:
        low, high = float(targets.min()), float(targets.max())
        offset = low
        scale = high - low if high > low else 1.0
    T = (targets - offset) / scale

    H = hidden_matrix(model, S.inputs)
    beta = pseudo_inverse(H, rtol) @ T
    return replace(model, beta=beta, target_offset=offset, target_scale=scale)


def elm_predict_batch(model: ElmModel, X: np.ndarray) -> np.ndarray:
    if not model.trained:
        raise ModelNotTrainedError("ELM model has not been trained")
    raw = hidden_matrix(model, X) @ model.beta
    return raw * model.target_scale + model.target_offset


def elm_predict(model: ElmModel, x: Sequence[int]) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.n_inputs:
        raise ValueError(f"Expected an input of length {model.n_inputs}, got {x.shape[0]}")
    return float(elm_predict_batch(model, x[None, :])[0])


def training_residual(model: ElmModel, S: TrainingSet) -> float:
    """Largest absolute training error"""
    return float(np.max(np.abs(elm_predict_batch(model, S.inputs) - S.targets)))


def default_hidden_count(n: int, n_samples: int) -> int:
    return max(1, min(2 * n, n_samples - 1))


def rank_correlation(predicted: Sequence[float], exact: Sequence[float]) -> float:
    """Spearman rank correlation between surrogate and exact fitness"""
    rho, _ = spearmanr(predicted, exact)
    return float(rho)


def held_out_rank_check(predicted: Sequence[float], exact: Sequence[float],
                        level: float = RANK_WARNING_LEVEL) -> Optional[float]:
    """
    Spearman check on individuals the surrogate was not trained on

    Returns None when either side is constant. A correlation below level
    is logged as a warning and never raised.
    """
    predicted, exact = np.asarray(predicted, dtype=float), np.asarray(exact, dtype=float)
    if len(exact) < 3 or np.ptp(exact) == 0 or np.ptp(predicted) == 0:
        return None
    rho = rank_correlation(predicted, exact)
    if rho < level:
        logger.warning(
            f"Held-out surrogate rank correlation {rho:.2f} is below {level:.2f} on {len(exact)} individuals"
        )
    else:
        logger.info(f"Held-out surrogate rank correlation {rho:.2f} on {len(exact)} individuals")
    return rho


class ElmSurrogate:
    """
    Fitness approximation used by the engine

    Keeps the exact samples seen so far and retrains a fresh ELM on demand;
    the hidden node count follows the training set size unless fixed.
    """

    def __init__(self, n_inputs: int, config: Optional[SurrogateConfig] = None):
        self.n_inputs = n_inputs
        self.config = config or SurrogateConfig()
        self.training_set = TrainingSet()
        self.model: Optional[ElmModel] = None
        self.prediction_count = 0

    def add(self, ind: Individual, value: float) -> None:
        self.training_set.add(ind.genes, value)

    def fit(self, seed) -> ElmModel:
        h = self.config.hidden_nodes or default_hidden_count(self.n_inputs, len(self.training_set))
        model = elm_init(self.n_inputs, h, seed, self.config.activation)
        self.model = elm_train(model, self.training_set, self.config.normalize_targets, self.config.rtol)
        logger.debug(f"ELM retrained: {len(self.training_set)} samples, h={h}")
        return self.model

    def predict_many(self, individuals: Sequence[Individual]) -> np.ndarray:
        if self.model is None:
            raise ModelNotTrainedError("Surrogate has not been fitted")
        if not individuals:
            return np.zeros(0)
        self.prediction_count += len(individuals)
        return elm_predict_batch(self.model, np.array([ind.genes for ind in individuals], dtype=float))

    def predict(self, ind: Individual) -> float:
        return float(self.predict_many([ind])[0])
