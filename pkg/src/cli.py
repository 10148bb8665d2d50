"""
Interfaccia a riga di comando `topoclass`.

Sottocomandi: featurize, diagram, complex, census, train, evaluate,
ensemble, experiment. In caso di errore stampa su stderr una sola riga
JSON {"error": <codice>, "message": ...} ed esce con codice non nullo.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from tabulate import tabulate

from .cubical import build_complex, complex_to_json
from .errors import ArgumentError, TopoclassError
from .harness import (
    SHUFFLE_STREAM, build_experiment_config, derive_seed, ensemble_evaluate,
    improvement_summary, load_config_file, run_experiment,
)
from .imageio import LabeledImageSet, load_pgm, load_split, subsample
from .landscape import (
    LandscapeParams, featurize_batch, stack_features, write_feature_csv, write_feature_file,
)
from .log import logger
from .neuralnet import (
    ModelInputs, TrainConfig, forward_batch, init_model, load_checkpoint, save_checkpoint,
    train, train_config_to_dict, write_logits_csv,
)
from .persistence import METHODS, compute_diagram, dump_diagram, hole_census
from config.config import (
    CHECKPOINT_PATH, DATASETS, DEFAULT_BATCH_SIZE, DEFAULT_DATASET, DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE, DEFAULT_OPTIMIZER, DEFAULT_SEED, LANDSCAPE_NET_EPOCHS, NUM_WORKERS,
    VARIANTS,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _print_error("USAGE_ERROR", message)
        sys.exit(2)


def _print_error(code: str, message: str) -> None:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)


def _landscape_params(dataset: str, k: Optional[int], q: Optional[int]) -> LandscapeParams:
    defaults = DATASETS.get(dataset, {"k": 3, "q": 50})
    return LandscapeParams(k or defaults["k"], q or defaults["q"])


def _model_inputs(image_set: LabeledImageSet, variant: str, params: LandscapeParams,
                  workers: int) -> ModelInputs:
    v0 = v1 = pixels = None
    if variant in ("topo", "landscape_only"):
        v0, v1 = stack_features(featurize_batch(image_set.images, params, workers), params.size)
    if variant in ("topo", "baseline"):
        pixels = image_set.pixel_matrix()
    return ModelInputs(v0, v1, pixels)


def _maybe_subsample(image_set: LabeledImageSet, n: Optional[int], seed: int) -> LabeledImageSet:
    if n is None:
        return image_set
    return subsample(image_set, n, derive_seed(seed, n, 0))


# --- sottocomandi -----------------------------------------------------------

def cmd_featurize(args) -> int:
    image_set = _maybe_subsample(load_split(args.dataset, args.split, args.data_path),
                                 args.n, args.seed)
    params = _landscape_params(args.dataset, args.k, args.q)
    features = featurize_batch(image_set.images, params, args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".csv":
        write_feature_csv(out, features, image_set.labels, params)
    else:
        write_feature_file(out, features, image_set.labels, params)
    print(f"✅ {len(features):,} landscape (k={params.k}, q={params.q}) scritti in {out}")
    return 0


def cmd_diagram(args) -> int:
    diagram = compute_diagram(build_complex(load_pgm(args.image)), method=args.method)
    text = dump_diagram(diagram)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"✅ Diagramma scritto in {args.out}: {len(diagram.d0)} punti D0, {len(diagram.d1)} punti D1")
    else:
        print(text)
    return 0


def cmd_complex(args) -> int:
    text = json.dumps(complex_to_json(build_complex(load_pgm(args.image))), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"✅ Complesso scritto in {args.out}")
    else:
        print(text)
    return 0


def cmd_census(args) -> int:
    image_set = _maybe_subsample(load_split(args.dataset, args.split, args.data_path),
                                 args.n, args.seed)
    table = hole_census(image_set, args.min_persistence, args.workers)
    print("\n🕳️ Distribuzione dei buchi per classe:")
    print(tabulate(table, headers='keys', tablefmt='psql', floatfmt=".3f"))
    if args.out:
        table.to_csv(args.out)
        print(f"\n✅ Census esportato in: {args.out}")
    return 0


def cmd_train(args) -> int:
    if args.variant not in ("baseline", "topo", "landscape_only"):
        raise ArgumentError(f"variante non addestrabile singolarmente: {args.variant}")
    train_set = _maybe_subsample(load_split(args.dataset, "train", args.data_path), args.n, args.seed)
    params = _landscape_params(args.dataset, args.k, args.q)
    inputs = _model_inputs(train_set, args.variant, params, args.workers)
    n = len(train_set)
    shuffle_seed = derive_seed(args.seed, n, 0, SHUFFLE_STREAM)
    if args.variant == "landscape_only":
        config = TrainConfig.landscape_network(shuffle_seed, args.epochs or LANDSCAPE_NET_EPOCHS,
                                               args.batch_size)
        if args.lr:
            config = TrainConfig(config.optimizer, args.lr, config.batch_size, config.epochs,
                                 config.seed, config.lr_decay, config.lr_decay_every)
    else:
        config = TrainConfig(DEFAULT_OPTIMIZER, args.lr or DEFAULT_LEARNING_RATE, args.batch_size,
                             args.epochs or DEFAULT_EPOCHS, shuffle_seed)

    image = train_set.images[0]
    model = init_model(args.variant, train_set.class_count, derive_seed(args.seed, 0),
                       landscape_size=params.size, pixel_size=image.height * image.width)
    result = train(model, inputs, train_set.labels, config)
    out = Path(args.out) if args.out else CHECKPOINT_PATH / args.variant
    metadata = {"dataset": args.dataset, "k": params.k, "q": params.q, "n": n,
                "seed": args.seed, "train": train_config_to_dict(config)}
    manifest = save_checkpoint(result.model, out, metadata)

    history = pd.DataFrame([vars(stats) for stats in result.history[-5:]])
    if len(history):
        print("\n📊 Ultime epoche:")
        print(tabulate(history, headers='keys', tablefmt='psql', showindex=False))
    print(f"\n✅ Modello {args.variant} salvato in: {manifest}")
    return 0


def cmd_evaluate(args) -> int:
    model, manifest = load_checkpoint(args.checkpoint)
    metadata = manifest.get("metadata", {})
    dataset = args.dataset or metadata.get("dataset", DEFAULT_DATASET)
    test_set = load_split(dataset, "test", args.data_path)
    params = LandscapeParams(metadata.get("k", 3), metadata.get("q", 50))
    logits = forward_batch(model, _model_inputs(test_set, model.variant, params, args.workers), "eval")
    predictions = np.argmax(logits, axis=1)
    accuracy = float(np.mean(predictions == test_set.labels))

    per_class = pd.DataFrame({
        "classe": np.arange(test_set.class_count),
        "campioni": test_set.class_counts(),
        "corretti": np.bincount(test_set.labels[predictions == test_set.labels],
                                minlength=test_set.class_count),
    })
    per_class["accuratezza"] = per_class["corretti"] / per_class["campioni"].clip(lower=1)
    print(f"\n📊 Accuratezza {model.variant} su {dataset}: {accuracy:.4f}")
    print(tabulate(per_class, headers='keys', tablefmt='psql', showindex=False, floatfmt=".4f"))
    if args.out:
        write_logits_csv(args.out, logits)
        print(f"\n✅ Logit esportati in: {args.out}")
    return 0


def cmd_ensemble(args) -> int:
    test_set = load_split(args.dataset, "test", args.data_path)
    accuracy = ensemble_evaluate(args.backbone_logits, args.landscape_logits, test_set.labels)
    print(f"📊 Accuratezza ensemble: {accuracy:.4f}")
    return 0


def cmd_experiment(args) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {
        "dataset": args.dataset, "k": args.k, "q": args.q, "sizes": args.sizes,
        "folds": args.folds, "seed": args.seed, "variant": args.variant, "out": args.out,
        "epochs": args.epochs, "lr": args.lr, "batch_size": args.batch_size,
        "workers": args.workers, "landscape_epochs": args.landscape_epochs,
        "save_logits": args.save_logits or None,
    }
    config = build_experiment_config(file_values, overrides, args.data_path)
    reports = run_experiment(config)

    summary = pd.DataFrame([{
        "variante": r.variant, "n": r.n,
        "media %": None if r.mean is None else 100 * r.mean,
        "std %": None if r.std is None else 100 * r.std,
        "fold": f"{len(r.accuracies)}/{len(r.folds)}",
    } for r in reports])
    print("\n📊 Accuratezza sul test set:")
    print(tabulate(summary, headers='keys', tablefmt='psql', showindex=False, floatfmt=".2f"))
    improvement = improvement_summary(reports)
    if len(improvement):
        print("\n📈 Guadagno appaiato rispetto alla baseline (punti %):")
        print(tabulate(improvement, headers='keys', tablefmt='psql', showindex=False, floatfmt=".2f"))
    if config.out_dir is not None:
        print(f"\n✅ Report scritti in: {config.out_dir}")
    return 0


# --- parser -----------------------------------------------------------------

def _csv_list(value: str) -> List[str]:
    return [v for v in value.replace(",", " ").split() if v]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="topoclass", description="Omologia persistente per la classificazione di immagini")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    data = _Parser(add_help=False)
    data.add_argument("--dataset", default=DEFAULT_DATASET, help="nome registrato o directory con train/ e test/")
    data.add_argument("--data-path", default=None, help="radice dei dataset registrati")
    data.add_argument("--workers", type=int, default=NUM_WORKERS)

    landscape = _Parser(add_help=False)
    landscape.add_argument("--k", type=int, default=None)
    landscape.add_argument("--q", type=int, default=None)

    sampling = _Parser(add_help=False)
    sampling.add_argument("--n", type=int, default=None, help="sottocampione di n immagini")
    sampling.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("featurize", parents=[data, landscape, sampling], help="calcola i landscape di uno split")
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--out", required=True, help="file .bin (TPLF) o .csv")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("diagram", help="diagramma di persistenza di un'immagine PGM")
    p.add_argument("image")
    p.add_argument("--out", default=None)
    p.add_argument("--method", choices=METHODS, default="union_find")
    p.set_defaults(func=cmd_diagram)

    p = sub.add_parser("complex", help="dump JSON del complesso cubico di un'immagine PGM")
    p.add_argument("image")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_complex)

    p = sub.add_parser("census", parents=[data, sampling], help="numero di buchi persistenti per classe")
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--min-persistence", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("train", parents=[data, landscape, sampling], help="addestra un modello sul training set")
    p.add_argument("--variant", choices=("baseline", "topo", "landscape_only"), default="topo")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE)
    p.add_argument("--out", default=None, help="prefisso del checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="valuta un checkpoint sul test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--data-path", default=None)
    p.add_argument("--workers", type=int, default=NUM_WORKERS)
    p.add_argument("--out", default=None, help="CSV dei logit")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ensemble", help="combina due CSV di logit con la somma delle softmax")
    p.add_argument("backbone_logits")
    p.add_argument("landscape_logits")
    p.add_argument("--dataset", default=DEFAULT_DATASET)
    p.add_argument("--data-path", default=None)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("experiment", help="sweep sulle dimensioni del training set con fold appaiati")
    p.add_argument("--config", default=None, help="file key=value, sovrascritto dai flag")
    p.add_argument("--dataset", default=None)
    p.add_argument("--data-path", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--sizes", type=_csv_list, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", type=_csv_list, default=None, help=f"tra {', '.join(VARIANTS)}")
    p.add_argument("--out", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--landscape-epochs", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--save-logits", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TopoclassError as e:
        logger.error(f"❌ {e}")
        _print_error(e.code, str(e))
        return 1
    except OSError as e:
        logger.error(f"❌ Errore di I/O: {e}")
        _print_error("IO_ERROR", str(e))
        return 1
