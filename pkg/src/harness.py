"""
Protocollo sperimentale a campione ridotto.

Per ogni dimensione n del training set e ogni fold f:
    1. estrae n immagini di training con seed derive_seed(base, n, f);
    2. inizializza i modelli con seed derive_seed(base, f), così baseline e
       topo condividono ramo pixel e testa (blocco pixel) a parità di fold;
    3. addestra ogni variante richiesta e la valuta sull'intero test set.

I fold sono indipendenti e possono girare in processi separati; i report
vengono aggregati dopo un ordinamento per (variante, n, fold), quindi i
file prodotti non dipendono dallo scheduling. I report non contengono
timestamp: rieseguire la stessa configurazione produce gli stessi byte.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv.parser import parse_stream
from sklearn.metrics import confusion_matrix

from .batch import parallel_map
from .errors import ArgumentError, ConsistencyError, DivergenceError
from .imageio import LabeledImageSet, PathLike, load_split, subsample_indices
from .landscape import LandscapeParams, featurize_batch, stack_features
from .log import get_memory_usage, logger
from .neuralnet import (
    ModelInputs, TrainConfig, ensemble_predict, forward_batch, init_model, read_logits_csv,
    train, write_logits_csv,
)
from .seeding import derive_seed
from config.config import (
    DATASETS, DEFAULT_BATCH_SIZE, DEFAULT_DATASET, DEFAULT_EPOCHS, DEFAULT_FOLDS,
    DEFAULT_LEARNING_RATE, DEFAULT_OPTIMIZER, DEFAULT_SEED, DEFAULT_SIZES, DEFAULT_VARIANTS,
    LANDSCAPE_NET_EPOCHS, REPORTS_PATH, VARIANTS,
)

SHUFFLE_STREAM = 1

# Chiavi accettate nel file di configurazione key=value
CONFIG_KEYS = ("dataset", "k", "q", "sizes", "folds", "seed", "variant", "out", "epochs",
               "lr", "batch_size", "workers", "landscape_epochs", "save_logits")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = DEFAULT_DATASET
    k: Optional[int] = None
    q: Optional[int] = None
    sizes: Tuple[int, ...] = tuple(DEFAULT_SIZES)
    folds: int = DEFAULT_FOLDS
    seed: int = DEFAULT_SEED
    variants: Tuple[str, ...] = tuple(DEFAULT_VARIANTS)
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    landscape_epochs: int = LANDSCAPE_NET_EPOCHS
    out_dir: Optional[Path] = REPORTS_PATH
    workers: int = 1
    save_logits: bool = False
    data_path: Optional[Path] = None

    def __post_init__(self):
        if self.folds < 1:
            raise ArgumentError("folds deve essere >= 1")
        if not self.sizes or any(n < 1 for n in self.sizes):
            raise ArgumentError(f"dimensioni di training non valide: {self.sizes}")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown or not self.variants:
            raise ArgumentError(f"varianti sconosciute: {unknown or 'nessuna'}")

    @property
    def landscape_params(self) -> LandscapeParams:
        defaults = DATASETS.get(self.dataset, {"k": 3, "q": 50})
        return LandscapeParams(self.k or defaults["k"], self.q or defaults["q"])

    @property
    def needs_landscape(self) -> bool:
        return any(v in ("topo", "landscape_only", "ensemble") for v in self.variants)

    def train_config(self, variant: str, seed: int) -> TrainConfig:
        if variant == "landscape_only":
            return TrainConfig.landscape_network(seed, self.landscape_epochs, self.batch_size)
        return TrainConfig(DEFAULT_OPTIMIZER, self.learning_rate, self.batch_size, self.epochs, seed)


@dataclass(frozen=True, eq=False)
class FoldResult:
    variant: str
    n: int
    fold: int
    accuracy: Optional[float] = None
    confusion: Optional[np.ndarray] = None
    error: Optional[str] = None
    failed_epoch: Optional[int] = None

    @property
    def failed(self) -> bool:
        return self.accuracy is None


@dataclass
class FoldReport:
    """Risultati di una variante per una dimensione n su tutti i fold."""
    variant: str
    n: int
    class_count: int
    test_class_counts: np.ndarray
    folds: List[FoldResult] = field(default_factory=list)

    @property
    def accuracies(self) -> List[float]:
        return [r.accuracy for r in self.folds if not r.failed]

    @property
    def failed_folds(self) -> List[FoldResult]:
        return [r for r in self.folds if r.failed]

    @property
    def mean(self) -> Optional[float]:
        return float(np.mean(self.accuracies)) if self.accuracies else None

    @property
    def std(self) -> Optional[float]:
        return float(np.std(self.accuracies)) if self.accuracies else None

    @property
    def confusion(self) -> np.ndarray:
        """Somma delle matrici di confusione dei fold completati (righe = classe vera)."""
        total = np.zeros((self.class_count, self.class_count), dtype=np.int64)
        for result in self.folds:
            if not result.failed:
                total += result.confusion
        return total

    @property
    def per_class_accuracy(self) -> np.ndarray:
        confusion = self.confusion
        rows = confusion.sum(axis=1)
        return np.divide(np.diag(confusion), rows, out=np.zeros(self.class_count),
                         where=rows > 0)

    def to_json(self) -> Dict[str, Any]:
        return {
            "variant": self.variant,
            "n": self.n,
            "class_count": self.class_count,
            "folds_requested": len(self.folds),
            "folds_completed": len(self.accuracies),
            "incomplete": bool(self.failed_folds),
            "accuracies": [r.accuracy for r in self.folds],
            "mean": self.mean,
            "std": self.std,
            "confusion": self.confusion.tolist(),
            "fold_confusions": [None if r.failed else r.confusion.tolist() for r in self.folds],
            "per_class_accuracy": [float(a) for a in self.per_class_accuracy],
            "test_class_counts": [int(c) for c in self.test_class_counts],
            "failed": [{"fold": r.fold, "epoch": r.failed_epoch, "message": r.error}
                       for r in self.failed_folds],
        }

    @classmethod
    def from_json(cls, document: Mapping[str, Any]) -> "FoldReport":
        class_count = document["class_count"]
        failures = {f["fold"]: f for f in document.get("failed", [])}
        folds = []
        for fold, (accuracy, confusion) in enumerate(zip(document["accuracies"],
                                                         document["fold_confusions"])):
            failure = failures.get(fold, {})
            folds.append(FoldResult(
                document["variant"], document["n"], fold, accuracy,
                None if confusion is None else np.array(confusion, dtype=np.int64),
                failure.get("message"), failure.get("epoch"),
            ))
        return cls(document["variant"], document["n"], class_count,
                   np.array(document["test_class_counts"], dtype=np.int64), folds)


def load_report(path: PathLike) -> FoldReport:
    return FoldReport.from_json(json.loads(Path(path).read_text()))


# --- file di configurazione -------------------------------------------------

def load_config_file(path: PathLike) -> Dict[str, str]:
    """Legge righe `chiave=valore` con il parser di python-dotenv.

    `#` commenta, le righe vuote sono ignorate; a differenza di
    dotenv_values le righe malformate sono un errore.
    """
    values: Dict[str, str] = {}
    with open(path, encoding="utf-8") as stream:
        for binding in parse_stream(stream):
            text = binding.original.string
            # la riga del binding esclude le righe vuote che lo precedono
            number = binding.original.line + text[:len(text) - len(text.lstrip())].count("\n")
            if binding.error:
                raise ArgumentError(f"{path}:{number}: riga non valida: {text.strip()!r}")
            if binding.key is None:
                continue
            if binding.value is None:
                raise ArgumentError(f"{path}:{number}: riga senza '=': {text.strip()!r}")
            key = binding.key.replace("-", "_")
            if key not in CONFIG_KEYS:
                raise ArgumentError(f"{path}:{number}: chiave sconosciuta '{key}'")
            values[key] = binding.value.strip()
    return values


def _int_list(value) -> Tuple[int, ...]:
    if isinstance(value, str):
        return tuple(int(v) for v in value.replace(",", " ").split())
    return tuple(int(v) for v in value)


def _name_list(value) -> Tuple[str, ...]:
    if isinstance(value, str):
        return tuple(v for v in value.replace(",", " ").split())
    return tuple(value)


def _as_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "si", "sì")
    return bool(value)


_CONVERTERS = {
    "dataset": ("dataset", str),
    "k": ("k", int),
    "q": ("q", int),
    "sizes": ("sizes", _int_list),
    "folds": ("folds", int),
    "seed": ("seed", int),
    "variant": ("variants", _name_list),
    "out": ("out_dir", Path),
    "epochs": ("epochs", int),
    "lr": ("learning_rate", float),
    "batch_size": ("batch_size", int),
    "workers": ("workers", int),
    "landscape_epochs": ("landscape_epochs", int),
    "save_logits": ("save_logits", _as_bool),
}


def build_experiment_config(file_values: Optional[Mapping[str, Any]] = None,
                            overrides: Optional[Mapping[str, Any]] = None,
                            data_path: Optional[PathLike] = None) -> ExperimentConfig:
    """Default di config.py < file di configurazione < flag della CLI."""
    merged: Dict[str, Any] = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    kwargs: Dict[str, Any] = {}
    for key, value in merged.items():
        if key not in _CONVERTERS:
            raise ArgumentError(f"chiave di configurazione sconosciuta: {key}")
        name, convert = _CONVERTERS[key]
        try:
            kwargs[name] = convert(value)
        except (TypeError, ValueError) as e:
            raise ArgumentError(f"valore non valido per {key}: {value!r}") from e
    if data_path is not None:
        kwargs["data_path"] = Path(data_path)
    return ExperimentConfig(**kwargs)


# --- esecuzione dei fold ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class _FoldData:
    """Dati condivisi dai fold: pool di training (unione dei sottocampioni) e test."""
    pool: ModelInputs
    pool_labels: np.ndarray
    test: ModelInputs
    test_labels: np.ndarray
    class_count: int
    landscape_size: int
    pixel_size: int
    config: ExperimentConfig


@dataclass(frozen=True, eq=False)
class _FoldJob:
    n: int
    fold: int
    positions: np.ndarray    # righe del pool usate in questo fold


_FOLD_DATA: Optional[_FoldData] = None


def _install_fold_data(data: _FoldData) -> None:
    global _FOLD_DATA
    _FOLD_DATA = data


def _evaluate(logits: np.ndarray, labels: np.ndarray, class_count: int) -> Tuple[float, np.ndarray]:
    predictions = np.argmax(logits, axis=1)
    matrix = confusion_matrix(labels, predictions, labels=np.arange(class_count)).astype(np.int64)
    return float(np.trace(matrix) / len(labels)), matrix


def _train_logits(data: _FoldData, variant: str, job: _FoldJob) -> np.ndarray:
    config = data.config
    init_seed = derive_seed(config.seed, job.fold)
    shuffle_seed = derive_seed(config.seed, job.n, job.fold, SHUFFLE_STREAM)
    model = init_model(variant, data.class_count, init_seed,
                       landscape_size=data.landscape_size, pixel_size=data.pixel_size)
    result = train(model, data.pool.take(job.positions), data.pool_labels[job.positions],
                   config.train_config(variant, shuffle_seed))
    return forward_batch(result.model, data.test, "eval")


def _run_fold(job: _FoldJob) -> List[FoldResult]:
    data = _FOLD_DATA
    config = data.config
    logits: Dict[str, np.ndarray] = {}
    errors: Dict[str, DivergenceError] = {}

    def logits_for(variant: str) -> Optional[np.ndarray]:
        if variant not in logits and variant not in errors:
            try:
                logits[variant] = _train_logits(data, variant, job)
            except DivergenceError as e:
                logger.warning(f"⚠️ Fold {job.fold} (n={job.n}, {variant}) divergente: {e}")
                errors[variant] = e
        return logits.get(variant)

    results = []
    for variant in config.variants:
        if variant == "ensemble":
            backbone, landscape_net = logits_for("baseline"), logits_for("landscape_only")
            if backbone is None or landscape_net is None:
                cause = errors.get("baseline") or errors.get("landscape_only")
                results.append(FoldResult(variant, job.n, job.fold, error=str(cause),
                                          failed_epoch=cause.epoch))
                continue
            predictions = ensemble_predict(backbone, landscape_net)
            one_hot = np.eye(data.class_count)[predictions]
            variant_logits = one_hot
        else:
            variant_logits = logits_for(variant)
            if variant_logits is None:
                cause = errors[variant]
                results.append(FoldResult(variant, job.n, job.fold, error=str(cause),
                                          failed_epoch=cause.epoch))
                continue
        accuracy, matrix = _evaluate(variant_logits, data.test_labels, data.class_count)
        results.append(FoldResult(variant, job.n, job.fold, accuracy, matrix))

        if config.save_logits and config.out_dir is not None and variant != "ensemble":
            logits_dir = Path(config.out_dir) / "logits"
            logits_dir.mkdir(parents=True, exist_ok=True)
            write_logits_csv(logits_dir / f"{variant}_n{job.n}_fold{job.fold}.csv", variant_logits)

    summary = ", ".join(f"{r.variant} {'FALLITO' if r.failed else f'{r.accuracy:.4f}'}"
                        for r in results)
    logger.info(f"📊 n={job.n} fold {job.fold}: {summary} | 💾 {get_memory_usage()}")
    return results


def _prepare_fold_data(config: ExperimentConfig, train_set: LabeledImageSet,
                       test_set: LabeledImageSet) -> Tuple[_FoldData, List[_FoldJob]]:
    fold_indices = {
        (n, fold): subsample_indices(len(train_set), n, derive_seed(config.seed, n, fold))
        for n in config.sizes for fold in range(config.folds)
    }
    pool_indices = np.unique(np.concatenate(list(fold_indices.values())))
    pool_set = train_set.take(pool_indices)
    logger.info(f"📂 Pool di training: {len(pool_indices):,} immagini su {len(train_set):,}")

    params = config.landscape_params
    if config.needs_landscape:
        pool_v0, pool_v1 = stack_features(featurize_batch(pool_set.images, params, config.workers),
                                          params.size)
        test_v0, test_v1 = stack_features(featurize_batch(test_set.images, params, config.workers),
                                          params.size)
    else:
        pool_v0 = pool_v1 = test_v0 = test_v1 = None

    data = _FoldData(
        pool=ModelInputs(pool_v0, pool_v1, pool_set.pixel_matrix()),
        pool_labels=np.asarray(pool_set.labels, dtype=np.int64),
        test=ModelInputs(test_v0, test_v1, test_set.pixel_matrix()),
        test_labels=np.asarray(test_set.labels, dtype=np.int64),
        class_count=train_set.class_count,
        landscape_size=params.size,
        pixel_size=test_set.images[0].height * test_set.images[0].width,
        config=config,
    )
    jobs = [_FoldJob(n, fold, np.searchsorted(pool_indices, fold_indices[(n, fold)]))
            for n in config.sizes for fold in range(config.folds)]
    return data, jobs


def run_experiment(config: ExperimentConfig, train_set: Optional[LabeledImageSet] = None,
                   test_set: Optional[LabeledImageSet] = None) -> List[FoldReport]:
    """Esegue tutti i fold e restituisce un FoldReport per (variante, n)."""
    if train_set is None:
        train_set = load_split(config.dataset, "train", config.data_path)
    if test_set is None:
        test_set = load_split(config.dataset, "test", config.data_path)
    if train_set.class_count != test_set.class_count:
        raise ConsistencyError(f"classi di training ({train_set.class_count}) e test "
                               f"({test_set.class_count}) diverse")
    if not len(train_set) or not len(test_set):
        raise ConsistencyError(f"set vuoto: {len(train_set)} immagini di training, "
                               f"{len(test_set)} di test")
    if train_set.images[0].shape != test_set.images[0].shape:
        raise ConsistencyError(f"immagini di training {train_set.images[0].shape} e test "
                               f"{test_set.images[0].shape} di dimensioni diverse")
    too_large = [n for n in config.sizes if n > len(train_set)]
    if too_large:
        raise ArgumentError(f"dimensioni oltre il training set ({len(train_set)}): {too_large}")

    logger.info(f"🚀 Esperimento {config.dataset}: varianti {list(config.variants)}, "
                f"n={list(config.sizes)}, {config.folds} fold, seed {config.seed}")
    data, jobs = _prepare_fold_data(config, train_set, test_set)
    fold_results = parallel_map(_run_fold, jobs, config.workers, description="fold",
                                initializer=_install_fold_data, initargs=(data,))

    results = sorted((r for batch in fold_results for r in batch),
                     key=lambda r: (config.variants.index(r.variant), r.n, r.fold))
    test_counts = np.bincount(data.test_labels, minlength=data.class_count)
    reports: List[FoldReport] = []
    for variant in config.variants:
        for n in config.sizes:
            folds = [r for r in results if r.variant == variant and r.n == n]
            reports.append(FoldReport(variant, n, data.class_count, test_counts, folds))
            if reports[-1].failed_folds:
                logger.warning(f"⚠️ {variant} n={n}: {len(reports[-1].failed_folds)} fold falliti, "
                               f"media su {len(reports[-1].accuracies)}/{config.folds}")

    if config.out_dir is not None:
        write_reports(reports, config.out_dir)
    return reports


# --- analisi ----------------------------------------------------------------

def _check_comparable(report_topo: FoldReport, report_base: FoldReport) -> None:
    if report_topo.class_count != report_base.class_count:
        raise ArgumentError(f"numero di classi diverso: {report_topo.class_count} e "
                            f"{report_base.class_count}")
    if not np.array_equal(report_topo.test_class_counts, report_base.test_class_counts):
        raise ArgumentError("i report non sono sullo stesso test set")


def confusion_delta(report_topo: FoldReport, report_base: FoldReport) -> np.ndarray:
    """conf_topo - conf_base sulle matrici sommate; diagonale positiva = predizioni guadagnate."""
    _check_comparable(report_topo, report_base)
    return report_topo.confusion - report_base.confusion


def per_class_gain(report_topo: FoldReport, report_base: FoldReport) -> np.ndarray:
    """Differenza di accuratezza per classe in punti percentuali."""
    _check_comparable(report_topo, report_base)
    return 100.0 * (report_topo.per_class_accuracy - report_base.per_class_accuracy)


def ensemble_evaluate(backbone_logits: PathLike, landscape_logits: PathLike,
                      labels: Sequence[int]) -> float:
    backbone_index, backbone = read_logits_csv(backbone_logits)
    landscape_index, landscape_net = read_logits_csv(landscape_logits)
    if not np.array_equal(backbone_index, landscape_index):
        raise ConsistencyError("i due file di logit non coprono gli stessi campioni")
    labels = np.asarray(labels, dtype=np.int64)
    if len(backbone_index) == 0:
        raise ConsistencyError("file di logit vuoti")
    if backbone_index.min() < 0 or backbone_index.max() >= len(labels):
        raise ConsistencyError(f"sample_index fuori da [0, {len(labels)})")
    predictions = ensemble_predict(backbone, landscape_net)
    return float(np.mean(predictions == labels[backbone_index]))


def improvement_summary(reports: Sequence[FoldReport], reference: str = "baseline") -> pd.DataFrame:
    """Guadagno medio appaiato (variante - riferimento) per n, in punti percentuali.

    Si confrontano solo i fold completati da entrambe le varianti.
    """
    by_key = {(r.variant, r.n): r for r in reports}
    rows = []
    for report in reports:
        base = by_key.get((reference, report.n))
        if report.variant == reference or base is None:
            continue
        base_acc = {r.fold: r.accuracy for r in base.folds if not r.failed}
        diffs = [100.0 * (r.accuracy - base_acc[r.fold]) for r in report.folds
                 if not r.failed and r.fold in base_acc]
        rows.append({
            "variant": report.variant,
            "reference": reference,
            "n": report.n,
            "paired_folds": len(diffs),
            "mean_gain": float(np.mean(diffs)) if diffs else float("nan"),
            "std_gain": float(np.std(diffs)) if diffs else float("nan"),
        })
    return pd.DataFrame(rows, columns=["variant", "reference", "n", "paired_folds",
                                       "mean_gain", "std_gain"])


def fold_accuracy_table(reports: Sequence[FoldReport]) -> pd.DataFrame:
    rows = [{"variant": r.variant, "n": r.n, "fold": r.fold,
             "accuracy": r.accuracy, "failed": r.failed}
            for report in reports for r in report.folds]
    return pd.DataFrame(rows, columns=["variant", "n", "fold", "accuracy", "failed"])


def write_reports(reports: Sequence[FoldReport], out_dir: PathLike) -> List[Path]:
    """Un JSON per (variante, n), più fold_accuracies.csv e improvement.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for report in reports:
        path = out_dir / f"report_{report.variant}_n{report.n}.json"
        path.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
        written.append(path)
    fold_accuracy_table(reports).to_csv(out_dir / "fold_accuracies.csv", index=False)
    written.append(out_dir / "fold_accuracies.csv")
    improvement = improvement_summary(reports)
    if len(improvement):
        improvement.to_csv(out_dir / "improvement.csv", index=False)
        written.append(out_dir / "improvement.csv")
    logger.info(f"✅ {len(written)} file di report scritti in {out_dir}")
    return written
