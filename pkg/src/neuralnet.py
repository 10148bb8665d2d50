"""
Rete minimale con backpropagation scritta a mano (numpy, float64).

Componenti:
    - Landscape Layer: per ogni dimensione omologica Linear -> BatchNorm -> ReLU,
      uscite concatenate;
    - ramo pixel: perceptron a due strati (ReLU) sui pixel appiattiti, al
      posto della ConvNet;
    - testa lineare verso le C classi, loss cross-entropy;
    - ottimizzatori Adam e SGD con decadimento a gradini;
    - combinatore dell'ensemble argmax(softmax(p1) + softmax(p2)).

Varianti: `baseline` (pixel + testa), `topo` (landscape + pixel + testa),
`landscape_only` (landscape + testa).
"""
import copy
import json
import zlib
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ArgumentError, ConsistencyError, DivergenceError, FormatError, ShapeError
from .imageio import GrayImage, PathLike
from .landscape import LandscapeFeature
from .log import logger
from config.config import (
    ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, BN_EPSILON, BN_MOMENTUM,
    LANDSCAPE_HIDDEN, LANDSCAPE_NET_EPOCHS, LANDSCAPE_NET_LEARNING_RATE,
    LANDSCAPE_NET_LR_DECAY, LANDSCAPE_NET_LR_DECAY_EVERY, LANDSCAPE_NET_OPTIMIZER, PIXEL_HIDDEN,
)

MODEL_VARIANTS = ("baseline", "topo", "landscape_only")
OPTIMIZERS = ("adam", "sgd")
SEED_MASK = (1 << 64) - 1
CHECKPOINT_FORMAT = "topoclass-checkpoint"


@dataclass
class LinearLayerParams:
    weights: np.ndarray     # (out, in)
    bias: np.ndarray        # (out,)

    @property
    def in_features(self) -> int:
        return self.weights.shape[1]

    @property
    def out_features(self) -> int:
        return self.weights.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.in_features:
            raise ShapeError(f"input di {x.shape[1]} feature, il layer ne attende {self.in_features}")
        return x @ self.weights.T + self.bias

    def backward(self, x: np.ndarray, dz: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Restituisce (dx, dW, db)."""
        return dz @ self.weights, dz.T @ x, dz.sum(axis=0)


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ArgumentError("epsilon della batch norm deve essere > 0")
        if np.any(self.running_var < 0):
            raise ArgumentError("running_var negativa")

    @classmethod
    def identity(cls, features: int) -> "BatchNormState":
        return cls(np.ones(features), np.zeros(features), np.zeros(features), np.ones(features))

    def forward(self, z: np.ndarray, mode: str, update_stats: bool = True) -> Tuple[np.ndarray, Tuple]:
        if mode == "train":
            mean = z.mean(axis=0)
            var = z.var(axis=0)
            if update_stats:
                # Varianza non corretta anche per le statistiche mobili (definita con batch di 1)
                self.running_mean[...] = (1 - self.momentum) * self.running_mean + self.momentum * mean
                self.running_var[...] = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        normalized = (z - mean) * inv_std
        return self.gamma * normalized + self.beta, (normalized, inv_std)

    def backward(self, cache: Tuple, dout: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Backward in modalità train; restituisce (dz, dgamma, dbeta)."""
        normalized, inv_std = cache
        batch = dout.shape[0]
        dnormalized = dout * self.gamma
        dz = (inv_std / batch) * (batch * dnormalized - dnormalized.sum(axis=0)
                                  - normalized * (dnormalized * normalized).sum(axis=0))
        return dz, (dout * normalized).sum(axis=0), dout.sum(axis=0)


@dataclass
class LandscapeBranch:
    linear0: LinearLayerParams
    bn0: BatchNormState
    linear1: LinearLayerParams
    bn1: BatchNormState

    @property
    def out_features(self) -> int:
        return self.linear0.out_features + self.linear1.out_features


@dataclass
class PixelBranch:
    linear_a: LinearLayerParams
    linear_b: LinearLayerParams

    @property
    def out_features(self) -> int:
        return self.linear_b.out_features


@dataclass
class ModelParams:
    head: LinearLayerParams
    landscape_branch: Optional[LandscapeBranch] = None
    pixel_branch: Optional[PixelBranch] = None

    def __post_init__(self):
        if self.landscape_branch is None and self.pixel_branch is None:
            raise ArgumentError("il modello deve avere almeno un ramo")
        expected = ((self.landscape_branch.out_features if self.landscape_branch else 0)
                    + (self.pixel_branch.out_features if self.pixel_branch else 0))
        if self.head.in_features != expected:
            raise ShapeError(f"testa con {self.head.in_features} input, i rami ne producono {expected}")
        if self.pixel_branch and self.pixel_branch.linear_a.out_features != self.pixel_branch.linear_b.in_features:
            raise ShapeError("ramo pixel con dimensioni incoerenti")

    @property
    def variant(self) -> str:
        if self.landscape_branch and self.pixel_branch:
            return "topo"
        return "landscape_only" if self.landscape_branch else "baseline"

    @property
    def class_count(self) -> int:
        return self.head.out_features

    def parameters(self) -> Dict[str, np.ndarray]:
        """Tensori addestrabili per nome (riferimenti, non copie)."""
        params: Dict[str, np.ndarray] = {}
        if self.landscape_branch:
            lb = self.landscape_branch
            for i, (linear, bn) in enumerate(((lb.linear0, lb.bn0), (lb.linear1, lb.bn1))):
                params[f"landscape.linear{i}.weights"] = linear.weights
                params[f"landscape.linear{i}.bias"] = linear.bias
                params[f"landscape.bn{i}.gamma"] = bn.gamma
                params[f"landscape.bn{i}.beta"] = bn.beta
        if self.pixel_branch:
            for name in ("linear_a", "linear_b"):
                linear = getattr(self.pixel_branch, name)
                params[f"pixel.{name}.weights"] = linear.weights
                params[f"pixel.{name}.bias"] = linear.bias
        params["head.weights"] = self.head.weights
        params["head.bias"] = self.head.bias
        return params

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Parametri più statistiche mobili della batch norm."""
        state = self.parameters()
        if self.landscape_branch:
            for i, bn in enumerate((self.landscape_branch.bn0, self.landscape_branch.bn1)):
                state[f"landscape.bn{i}.running_mean"] = bn.running_mean
                state[f"landscape.bn{i}.running_var"] = bn.running_var
        return state

    @classmethod
    def from_state_dict(cls, state: Dict[str, np.ndarray]) -> "ModelParams":
        def linear(prefix: str) -> LinearLayerParams:
            return LinearLayerParams(state[f"{prefix}.weights"], state[f"{prefix}.bias"])

        landscape_branch = None
        if "landscape.linear0.weights" in state:
            bns = [BatchNormState(state[f"landscape.bn{i}.gamma"], state[f"landscape.bn{i}.beta"],
                                  state[f"landscape.bn{i}.running_mean"],
                                  state[f"landscape.bn{i}.running_var"]) for i in range(2)]
            landscape_branch = LandscapeBranch(linear("landscape.linear0"), bns[0],
                                               linear("landscape.linear1"), bns[1])
        pixel_branch = None
        if "pixel.linear_a.weights" in state:
            pixel_branch = PixelBranch(linear("pixel.linear_a"), linear("pixel.linear_b"))
        return cls(linear("head"), landscape_branch, pixel_branch)


@dataclass(frozen=True, eq=False)
class ModelInputs:
    """Batch di input: landscape (N, k*q) per dimensione e/o pixel (N, H*W)."""
    v0: Optional[np.ndarray] = None
    v1: Optional[np.ndarray] = None
    pixels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        for array in (self.v0, self.pixels):
            if array is not None:
                return len(array)
        return 0

    def take(self, indices) -> "ModelInputs":
        pick = lambda a: None if a is None else a[indices]
        return ModelInputs(pick(self.v0), pick(self.v1), pick(self.pixels))

    @classmethod
    def from_samples(cls, features: Optional[Sequence[LandscapeFeature]] = None,
                     images: Optional[Sequence[GrayImage]] = None) -> "ModelInputs":
        v0 = v1 = pixels = None
        if features is not None:
            v0 = np.stack([f.v0 for f in features]).astype(np.float64)
            v1 = np.stack([f.v1 for f in features]).astype(np.float64)
        if images is not None:
            pixels = np.stack([image.pixels.ravel() for image in images])
        return cls(v0, v1, pixels)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str
    learning_rate: float
    batch_size: int
    epochs: int
    seed: int
    lr_decay: float = 1.0
    lr_decay_every: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ArgumentError(f"ottimizzatore sconosciuto: {self.optimizer}")
        if not self.learning_rate > 0:
            raise ArgumentError("learning_rate deve essere > 0")
        if self.batch_size < 1:
            raise ArgumentError("batch_size deve essere >= 1")
        if self.epochs < 0:
            raise ArgumentError("epochs deve essere >= 0")

    @classmethod
    def landscape_network(cls, seed: int, epochs: int = LANDSCAPE_NET_EPOCHS,
                          batch_size: int = 32) -> "TrainConfig":
        """Ricetta della Landscape Network: SGD da lr=0.01, dimezzato ogni 20 epoche."""
        return cls(LANDSCAPE_NET_OPTIMIZER, LANDSCAPE_NET_LEARNING_RATE, batch_size, epochs, seed,
                   LANDSCAPE_NET_LR_DECAY, LANDSCAPE_NET_LR_DECAY_EVERY)

    def learning_rate_at(self, epoch: int) -> float:
        if self.lr_decay_every <= 0:
            return self.learning_rate
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    learning_rate: float


@dataclass
class TrainResult:
    model: ModelParams
    history: List[EpochStats] = field(default_factory=list)


# --- inizializzazione -------------------------------------------------------

def _uniform(seed: int, name: str, shape: Tuple[int, ...], limit: float) -> np.ndarray:
    # Un flusso per tensore: stesso nome e stessa shape -> stessi pesi tra varianti
    rng = np.random.default_rng([seed & SEED_MASK, zlib.crc32(name.encode("utf-8"))])
    return rng.uniform(-1.0, 1.0, size=shape) * limit


def _glorot_linear(seed: int, name: str, fan_in: int, fan_out: int) -> LinearLayerParams:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return LinearLayerParams(_uniform(seed, name, (fan_out, fan_in), limit), np.zeros(fan_out))


def init_model(variant: str, class_count: int, seed: int, landscape_size: int = 0,
               pixel_size: int = 0) -> ModelParams:
    if variant not in MODEL_VARIANTS:
        raise ArgumentError(f"variante di modello sconosciuta: {variant}")
    landscape_branch = pixel_branch = None
    head_blocks: List[Tuple[str, int]] = []
    if variant in ("topo", "landscape_only"):
        if landscape_size < 1:
            raise ShapeError("landscape_size mancante")
        landscape_branch = LandscapeBranch(
            _glorot_linear(seed, "landscape.linear0", landscape_size, LANDSCAPE_HIDDEN),
            BatchNormState.identity(LANDSCAPE_HIDDEN),
            _glorot_linear(seed, "landscape.linear1", landscape_size, LANDSCAPE_HIDDEN),
            BatchNormState.identity(LANDSCAPE_HIDDEN),
        )
        head_blocks.append(("head.landscape", landscape_branch.out_features))
    if variant in ("topo", "baseline"):
        if pixel_size < 1:
            raise ShapeError("pixel_size mancante")
        hidden_a, hidden_b = PIXEL_HIDDEN
        pixel_branch = PixelBranch(
            _glorot_linear(seed, "pixel.linear_a", pixel_size, hidden_a),
            _glorot_linear(seed, "pixel.linear_b", hidden_a, hidden_b),
        )
        head_blocks.append(("head.pixel", hidden_b))

    fan_in = sum(width for _, width in head_blocks)
    limit = np.sqrt(6.0 / (fan_in + class_count))
    weights = np.hstack([_uniform(seed, name, (class_count, width), limit)
                         for name, width in head_blocks])
    head = LinearLayerParams(weights, np.zeros(class_count))
    return ModelParams(head, landscape_branch, pixel_branch)


# --- forward / backward -----------------------------------------------------

def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(len(labels)), labels]))


def _landscape_forward(branch: LandscapeBranch, v0: np.ndarray, v1: np.ndarray, mode: str,
                       update_stats: bool) -> Tuple[np.ndarray, List]:
    outputs, caches = [], []
    for x, linear, bn in ((v0, branch.linear0, branch.bn0), (v1, branch.linear1, branch.bn1)):
        z = linear.forward(x)
        normalized, bn_cache = bn.forward(z, mode, update_stats)
        outputs.append(_relu(normalized))
        caches.append((x, normalized, bn_cache))
    return np.hstack(outputs), caches


def landscape_layer_forward(v0: np.ndarray, v1: np.ndarray, params: LandscapeBranch,
                            mode: str = "eval") -> np.ndarray:
    """concat(relu(bn(linear0(v0))), relu(bn(linear1(v1)))); accetta vettori o batch."""
    single = np.ndim(v0) == 1
    v0, v1 = np.atleast_2d(v0), np.atleast_2d(v1)
    if v0.shape[1] != params.linear0.in_features or v1.shape[1] != params.linear1.in_features:
        raise ShapeError(f"landscape di lunghezza {v0.shape[1]}/{v1.shape[1]}, attese "
                         f"{params.linear0.in_features}/{params.linear1.in_features}")
    out, _ = _landscape_forward(params, v0, v1, mode, update_stats=True)
    return out[0] if single else out


def _forward(model: ModelParams, inputs: ModelInputs, mode: str, update_stats: bool):
    parts, cache = [], {}
    if model.landscape_branch:
        if inputs.v0 is None or inputs.v1 is None:
            raise ShapeError("il modello richiede le feature landscape")
        out, cache["landscape"] = _landscape_forward(model.landscape_branch, inputs.v0, inputs.v1,
                                                     mode, update_stats)
        parts.append(out)
    if model.pixel_branch:
        if inputs.pixels is None:
            raise ShapeError("il modello richiede i pixel dell'immagine")
        za = model.pixel_branch.linear_a.forward(inputs.pixels)
        aa = _relu(za)
        zb = model.pixel_branch.linear_b.forward(aa)
        parts.append(_relu(zb))
        cache["pixel"] = (za, aa, zb)
    hidden = np.hstack(parts)
    cache["hidden"] = hidden
    return model.head.forward(hidden), cache


def forward_batch(model: ModelParams, inputs: ModelInputs, mode: str = "eval") -> np.ndarray:
    logits, _ = _forward(model, inputs, mode, update_stats=(mode == "train"))
    return logits


def forward(model: ModelParams, feature: Optional[LandscapeFeature], image: Optional[GrayImage] = None,
            mode: str = "eval") -> np.ndarray:
    """Logit (C,) di un singolo campione."""
    if (image is not None) != (model.pixel_branch is not None):
        raise ShapeError("l'immagine va fornita se e solo se il modello ha il ramo pixel")
    if (feature is not None) != (model.landscape_branch is not None):
        raise ShapeError("le feature landscape vanno fornite se e solo se il modello ha il Landscape Layer")
    inputs = ModelInputs.from_samples([feature] if feature is not None else None,
                                      [image] if image is not None else None)
    return forward_batch(model, inputs, mode)[0]


def _backward(model: ModelParams, inputs: ModelInputs, cache: Dict,
              dlogits: np.ndarray) -> Dict[str, np.ndarray]:
    grads: Dict[str, np.ndarray] = {}
    dhidden, grads["head.weights"], grads["head.bias"] = model.head.backward(cache["hidden"], dlogits)
    offset = 0
    if model.landscape_branch:
        lb = model.landscape_branch
        for i, (linear, bn) in enumerate(((lb.linear0, lb.bn0), (lb.linear1, lb.bn1))):
            x, normalized, bn_cache = cache["landscape"][i]
            width = linear.out_features
            dact = dhidden[:, offset:offset + width] * (normalized > 0)
            offset += width
            dz, grads[f"landscape.bn{i}.gamma"], grads[f"landscape.bn{i}.beta"] = bn.backward(bn_cache, dact)
            _, grads[f"landscape.linear{i}.weights"], grads[f"landscape.linear{i}.bias"] = linear.backward(x, dz)
    if model.pixel_branch:
        pb = model.pixel_branch
        za, aa, zb = cache["pixel"]
        dzb = dhidden[:, offset:offset + pb.out_features] * (zb > 0)
        daa, grads["pixel.linear_b.weights"], grads["pixel.linear_b.bias"] = pb.linear_b.backward(aa, dzb)
        dza = daa * (za > 0)
        _, grads["pixel.linear_a.weights"], grads["pixel.linear_a.bias"] = pb.linear_a.backward(inputs.pixels, dza)
    return grads


def _loss_gradients_logits(model: ModelParams, inputs: ModelInputs, labels: np.ndarray,
                           track_running_stats: bool):
    logits, cache = _forward(model, inputs, "train", track_running_stats)
    loss = cross_entropy(logits, labels)
    dlogits = softmax(logits)
    dlogits[np.arange(len(labels)), labels] -= 1.0
    dlogits /= len(labels)
    return loss, _backward(model, inputs, cache, dlogits), logits


def loss_and_gradients(model: ModelParams, inputs: ModelInputs, labels: np.ndarray,
                       track_running_stats: bool = False) -> Tuple[float, Dict[str, np.ndarray]]:
    """Loss cross-entropy media (modalità train) e gradienti per nome di parametro."""
    loss, grads, _ = _loss_gradients_logits(model, inputs, np.asarray(labels), track_running_stats)
    return loss, grads


# --- ottimizzazione ---------------------------------------------------------

class Optimizer(ABC):
    def __init__(self, config: TrainConfig):
        self.config = config

    @abstractmethod
    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], epoch: int) -> None:
        pass


class SGD(Optimizer):
    def step(self, params, grads, epoch):
        lr = self.config.learning_rate_at(epoch)
        for name, param in params.items():
            param -= lr * grads[name]


class Adam(Optimizer):
    def __init__(self, config: TrainConfig, beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
                 epsilon: float = ADAM_EPSILON):
        super().__init__(config)
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params, grads, epoch):
        lr = self.config.learning_rate_at(epoch)
        self.t += 1
        correction1 = 1 - self.beta1 ** self.t
        correction2 = 1 - self.beta2 ** self.t
        for name, param in params.items():
            grad = grads[name]
            m = self.m.setdefault(name, np.zeros_like(param))
            v = self.v.setdefault(name, np.zeros_like(param))
            m[...] = self.beta1 * m + (1 - self.beta1) * grad
            v[...] = self.beta2 * v + (1 - self.beta2) * grad * grad
            param -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)


def make_optimizer(config: TrainConfig) -> Optimizer:
    return Adam(config) if config.optimizer == "adam" else SGD(config)


def train(model: ModelParams, inputs: ModelInputs, labels: Sequence[int],
          config: TrainConfig) -> TrainResult:
    """Discesa del gradiente a mini-batch; il modello in input non viene modificato."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ArgumentError("dataset di training vuoto")
    if len(inputs) != len(labels):
        raise ConsistencyError(f"{len(inputs)} input ma {len(labels)} etichette")
    model = copy.deepcopy(model)
    params = model.parameters()
    optimizer = make_optimizer(config)
    rng = np.random.Generator(np.random.PCG64(config.seed & SEED_MASK))
    size = len(labels)
    history: List[EpochStats] = []

    for epoch in range(config.epochs):
        order = rng.permutation(size)
        total_loss = 0.0
        correct = 0
        for start in range(0, size, config.batch_size):
            index = order[start:start + config.batch_size]
            batch_labels = labels[index]
            loss, grads, logits = _loss_gradients_logits(model, inputs.take(index), batch_labels, True)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            optimizer.step(params, grads, epoch)
            total_loss += loss * len(index)
            correct += int(np.sum(np.argmax(logits, axis=1) == batch_labels))
        stats = EpochStats(epoch, total_loss / size, correct / size, config.learning_rate_at(epoch))
        history.append(stats)
        logger.debug(f"📊 Epoca {epoch + 1}/{config.epochs} | loss {stats.loss:.4f} | "
                     f"accuratezza {stats.accuracy:.3f} | lr {stats.learning_rate:g}")

    if history:
        logger.info(f"✅ Training {model.variant} completato: loss {history[-1].loss:.4f}, "
                    f"accuratezza train {history[-1].accuracy:.3f}")
    return TrainResult(model, history)


def predict(model: ModelParams, inputs: ModelInputs) -> np.ndarray:
    """Classe per input (argmax dei logit in eval; parità -> indice minore)."""
    return np.argmax(forward_batch(model, inputs, "eval"), axis=1)


def ensemble_combine(logits1: Sequence[float], logits2: Sequence[float]) -> int:
    logits1, logits2 = np.asarray(logits1, dtype=np.float64), np.asarray(logits2, dtype=np.float64)
    if logits1.shape != logits2.shape:
        raise ShapeError(f"logit di lunghezza diversa: {logits1.shape} e {logits2.shape}")
    return int(np.argmax(softmax(logits1) + softmax(logits2)))


def ensemble_predict(logits1: np.ndarray, logits2: np.ndarray) -> np.ndarray:
    """`ensemble_combine` riga per riga."""
    if logits1.shape != logits2.shape:
        raise ShapeError(f"matrici di logit diverse: {logits1.shape} e {logits2.shape}")
    return np.argmax(softmax(logits1) + softmax(logits2), axis=1)


# --- persistenza su disco ---------------------------------------------------

def save_checkpoint(model: ModelParams, path: PathLike, metadata: Optional[Dict] = None) -> Path:
    """Manifest JSON (<path>.json) più blob little-endian float64 (<path>.bin)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors, offset, blobs = [], 0, []
    for name, array in model.state_dict().items():
        tensors.append({"name": name, "shape": list(array.shape), "offset": offset})
        blob = np.ascontiguousarray(array, dtype="<f8").tobytes()
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "variant": model.variant,
        "class_count": model.class_count,
        "metadata": metadata or {},
        "tensors": tensors,
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    path.with_suffix(".bin").write_bytes(b"".join(blobs))
    logger.info(f"💾 Checkpoint salvato: {path.with_suffix('.json')}")
    return path.with_suffix(".json")


def load_checkpoint(path: PathLike) -> Tuple[ModelParams, Dict]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"checkpoint non riconosciuto: {path}")
    blob = path.with_suffix(".bin").read_bytes()
    state = {}
    for tensor in manifest["tensors"]:
        shape = tuple(tensor["shape"])
        count = int(np.prod(shape)) if shape else 1
        array = np.frombuffer(blob, dtype="<f8", count=count, offset=tensor["offset"])
        state[tensor["name"]] = array.astype(np.float64).reshape(shape)
    return ModelParams.from_state_dict(state), manifest


def train_config_to_dict(config: TrainConfig) -> Dict:
    return asdict(config)


def write_logits_csv(path: PathLike, logits: np.ndarray,
                     sample_indices: Optional[Sequence[int]] = None) -> None:
    """Una riga per campione di test: sample_index, C logit grezzi."""
    logits = np.asarray(logits, dtype=np.float64)
    frame = pd.DataFrame(logits, columns=[f"logit_{c}" for c in range(logits.shape[1])])
    indices = np.arange(len(logits)) if sample_indices is None else np.asarray(sample_indices)
    frame.insert(0, "sample_index", indices)
    frame.to_csv(path, index=False, float_format="%.17g")


def read_logits_csv(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise FormatError(f"CSV di logit non leggibile {path}: {e}")
    if "sample_index" not in frame.columns:
        raise FormatError(f"colonna sample_index mancante in {path}")
    if len(frame) and not pd.api.types.is_integer_dtype(frame["sample_index"]):
        raise FormatError(f"sample_index non intero in {path}")
    try:
        logits = frame.drop(columns=["sample_index"]).to_numpy(dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise FormatError(f"valori non numerici in {path}: {e}")
    if not np.all(np.isfinite(logits)):
        raise FormatError(f"logit mancanti o non finiti in {path}")
    return frame["sample_index"].to_numpy(dtype=np.int64), logits
