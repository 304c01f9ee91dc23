from __future__ import annotations

import json
import logging
import os
from hashlib import md5
from typing import Any, Iterable, Iterator

import numpy as np

logger = logging.getLogger("lightltv")
logger.propagate = False
logger.setLevel(logging.INFO)

_log_steps = False


def set_verbose_debug(enabled: bool) -> None:
    """Turn per-step training loss logging on or off (``--verbose``)."""
    global _log_steps
    _log_steps = enabled


def log_train_step(epoch: int, step: int, loss: float) -> None:
    if _log_steps:
        logger.debug(f"epoch {epoch} step {step} loss {loss:.6f}")


def setup_logger(level: str = "INFO", log_file_path: str | None = None) -> None:
    """Console handler at ``level``; a run log in ``log_file_path`` when given."""
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.close()
    logger.handlers = []
    logger.propagate = False

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    console_handler.setLevel(level)
    logger.addHandler(console_handler)

    if log_file_path is not None:
        os.makedirs(os.path.dirname(os.path.abspath(log_file_path)), exist_ok=True)
        file_handler = logging.FileHandler(log_file_path, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
        file_handler.setLevel(level)
        logger.addHandler(file_handler)


def compute_mdhash_id(content: str | bytes, prefix: str = "") -> str:
    if isinstance(content, str):
        content = content.encode()
    return prefix + md5(content).hexdigest()


def compute_array_hash(*arrays: np.ndarray, prefix: str = "") -> str:
    """Digest of one or more arrays, used to tag reports with the data they saw."""
    h = md5()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return prefix + h.hexdigest()


def _json_default(obj: Any):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def load_json(file_name):
    if not os.path.exists(file_name):
        return None
    with open(file_name, encoding="utf-8") as f:
        return json.load(f)


def write_json(json_obj, file_name):
    """Write JSON with sorted keys so identical inputs give identical bytes."""
    os.makedirs(os.path.dirname(os.path.abspath(file_name)), exist_ok=True)
    with open(file_name, "w", encoding="utf-8") as f:
        json.dump(
            json_obj,
            f,
            indent=2,
            ensure_ascii=False,
            sort_keys=True,
            default=_json_default,
        )
        f.write("\n")


def iter_jsonl(file_name: str) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, object) pairs, skipping blank lines.

    json.JSONDecodeError propagates with the offending line number attached as
    the ``lineno`` attribute of the raised error.
    """
    with open(file_name, "r", encoding="utf-8") as infile:
        for line_number, line in enumerate(infile, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield line_number, json.loads(line)
            except json.JSONDecodeError as e:
                e.lineno = line_number
                raise


def write_jsonl(rows: Iterable[dict[str, Any]], file_name: str) -> int:
    os.makedirs(os.path.dirname(os.path.abspath(file_name)), exist_ok=True)
    count = 0
    with open(file_name, "w", encoding="utf-8") as outfile:
        for row in rows:
            outfile.write(json.dumps(row, separators=(",", ":"), default=_json_default))
            outfile.write("\n")
            count += 1
    return count
