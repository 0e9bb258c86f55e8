"""Basic helpers with no dependency on other memlab modules. Keep imports of sibling modules out of here to avoid circular imports."""

import os
from hashlib import sha256

try:
    import tomllib
except ImportError:
    import tomlkit

from pathlib import Path

conf_file = Path(__file__).with_name("conf.toml")
try:
    with open(conf_file, "rb") as f:
        conf = tomllib.load(f)
except NameError:
    with open(conf_file, "r") as f:
        conf = tomlkit.load(f)


class MemlabError(Exception):
    """Base of every error raised by memlab. `exit_code` follows the CLI contract."""

    exit_code = 2


class InvalidInputError(MemlabError):
    exit_code = 1


class CheckpointError(MemlabError):
    exit_code = 1


class DegenerateMetricError(MemlabError):
    """1 + Q fell to the hyperbolicity floor."""

    exit_code = 2


class FrameSolveFailedError(MemlabError):
    exit_code = 2


class OriginSingularError(MemlabError):
    exit_code = 2


class SolverBlowUpError(MemlabError):
    exit_code = 2


class BadProfileError(MemlabError):
    exit_code = 2


class InterpolationOutOfSlabError(MemlabError):
    exit_code = 2


class OutOfHistoryError(MemlabError):
    exit_code = 3


class InsufficientJetError(MemlabError):
    exit_code = 3


class InsufficientSamplesError(MemlabError):
    exit_code = 3


class VerificationFailedError(MemlabError):
    exit_code = 3


if (
    conf.get("data_folder") is None or not Path(conf.get("data_folder")).parent.exists()
):  # configured folder's parent is missing
    DPATH = Path(os.getcwd()) / "data"
else:
    DPATH = Path(conf["data_folder"])

SUBFOLDERS = ("runs", "checkpoints", "reports")

CAUSAL_TOL = float(conf.get("causal_tol", 1e-12))
MIN_G_WARNING = float(conf.get("min_g_warning", 0.5))
G_FLOOR = 1e-6


def init_data(root=None):
    """Create the data folder layout under `root` (default `DPATH`) and return it."""
    root = Path(root) if root is not None else DPATH
    for path in (root, *(root / name for name in SUBFOLDERS)):
        if not path.exists():
            os.makedirs(path)
    return root


def worker_count():
    """Sweep worker count: MEMLAB_WORKERS wins over conf.toml."""
    value = os.environ.get("MEMLAB_WORKERS")
    if value is None:
        return int(conf.get("workers", 1))
    try:
        count = int(value)
    except ValueError:
        raise InvalidInputError(f"MEMLAB_WORKERS must be an integer, got {value!r}")
    if count < 1:
        raise InvalidInputError(f"MEMLAB_WORKERS must be >= 1, got {count}")
    return count


def sha256_bytes(payload):
    return sha256(payload).digest()


def calculate_sha256(file_path):
    sha256_hash = sha256()

    with open(file_path, "rb") as file:
        file_content = file.read()

    sha256_hash.update(file_content)

    return sha256_hash.hexdigest()
