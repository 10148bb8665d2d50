from pathlib import Path
import os
from typing import Dict, List

from dotenv import load_dotenv
import psutil

# Carica le variabili d'ambiente da .env (se presente)
load_dotenv()

# Base paths
WORKSPACE_PATH = Path(__file__).parent.parent
DATA_PATH = Path(os.environ.get("TOPOCLASS_DATA_PATH", WORKSPACE_PATH / "data"))  # Dataset IDX / PGM
REPORTS_PATH = Path(os.environ.get("TOPOCLASS_REPORTS_PATH", WORKSPACE_PATH / "reports"))
CHECKPOINT_PATH = Path(os.environ.get("TOPOCLASS_CHECKPOINT_PATH", WORKSPACE_PATH / "checkpoints"))

# Logging settings
LOG_PATH = Path(os.environ.get("TOPOCLASS_LOG_PATH", WORKSPACE_PATH / "logs"))
LOG_LEVEL = os.environ.get("TOPOCLASS_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Dataset registrati: file IDX per split e parametri del landscape (k, q)
DATASETS: Dict[str, Dict] = {
    "mnist": {
        "train_images": "train-images-idx3-ubyte",
        "train_labels": "train-labels-idx1-ubyte",
        "test_images": "t10k-images-idx3-ubyte",
        "test_labels": "t10k-labels-idx1-ubyte",
        "k": 3,
        "q": 50,
    },
    "usps": {
        "train_images": "usps-train-images-idx3-ubyte",
        "train_labels": "usps-train-labels-idx1-ubyte",
        "test_images": "usps-test-images-idx3-ubyte",
        "test_labels": "usps-test-labels-idx1-ubyte",
        "k": 2,
        "q": 50,
    },
}
DEFAULT_DATASET = os.environ.get("TOPOCLASS_DATASET", "mnist")

# Landscape: range globale dei bin in coordinate di filtrazione
LANDSCAPE_T_MIN = 0.0
LANDSCAPE_T_MAX = 1.0

# Training (Adam, backbone e TopoNet)
DEFAULT_OPTIMIZER = "adam"
DEFAULT_LEARNING_RATE = float(os.environ.get("TOPOCLASS_LR", 0.001))
DEFAULT_BATCH_SIZE = int(os.environ.get("TOPOCLASS_BATCH_SIZE", 32))
DEFAULT_EPOCHS = int(os.environ.get("TOPOCLASS_EPOCHS", 30))

# Landscape Network: SGD con learning rate adattivo (decadimento a gradini)
LANDSCAPE_NET_OPTIMIZER = "sgd"
LANDSCAPE_NET_LEARNING_RATE = 0.01
LANDSCAPE_NET_LR_DECAY = 0.5
LANDSCAPE_NET_LR_DECAY_EVERY = 20
LANDSCAPE_NET_EPOCHS = int(os.environ.get("TOPOCLASS_LANDSCAPE_EPOCHS", 60))

# Architettura
LANDSCAPE_HIDDEN = 64          # unità per ciascuna dimensione omologica
PIXEL_HIDDEN: List[int] = [128, 64]
BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Esperimenti
DEFAULT_SIZES: List[int] = [100, 300, 500, 1000]
DEFAULT_FOLDS = 10
DEFAULT_SEED = int(os.environ.get("TOPOCLASS_SEED", 20240607))
DEFAULT_VARIANTS: List[str] = ["baseline", "topo"]
VARIANTS: List[str] = ["baseline", "topo", "landscape_only", "ensemble"]

# Parallelismo: processi per featurizzazione e fold
NUM_WORKERS = int(os.environ.get("TOPOCLASS_WORKERS", psutil.cpu_count(logical=False) or 1))

# Census dei buchi (analisi della topologia delle cifre)
CENSUS_MIN_PERSISTENCE = 0.3
