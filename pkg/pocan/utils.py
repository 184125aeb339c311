import datetime
import hashlib
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Optional

THREADS_ENV = "POCAN_THREADS"


def create_output_directory(base_path: Path = Path("./results")) -> Path:
    """
    Creates a unique report directory named after the execution timestamp.

    Args:
        base_path: The directory under which the report directory is created.

    Returns:
        The path to the created directory.
    """
    timestamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
    output_dir = base_path / timestamp
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def worker_count(env: Optional[Dict[str, str]] = None) -> int:
    """Worker cap from POCAN_THREADS, defaulting to the number of cores."""
    env = os.environ if env is None else env
    default = os.cpu_count() or 1
    raw = env.get(THREADS_ENV)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        print(f"Warning: Ignoring {THREADS_ENV}={raw!r}; expected a positive integer.", file=sys.stderr)
        return default
    return value


class PhaseTimer:
    """Collects wall-clock seconds per named phase."""

    def __init__(self):
        self.phases: Dict[str, float] = {}

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - start
