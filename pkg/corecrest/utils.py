import asyncio
import hashlib
import os
import sys
from typing import Any

import orjson

from .errors import ConfigError

THREADS_ENV_VAR = "CORECREST_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """
    Number of worker threads to use.

    An explicit value wins, then the CORECREST_THREADS environment variable,
    then the number of available cores.
    """
    if threads is None:
        env_value = os.environ.get(THREADS_ENV_VAR)
        if env_value:
            try:
                threads = int(env_value)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {env_value!r}") from None
    if threads is None or threads <= 0:
        threads = os.cpu_count() or 4
    return threads


def progress_enabled() -> bool:
    return sys.stderr.isatty()


def ensure_parent_dir(file_path: str):
    parent = os.path.dirname(os.path.abspath(file_path))
    if not os.path.exists(parent):
        os.makedirs(parent)


def dump_json(obj: Any) -> bytes:
    return orjson.dumps(
        obj,
        option=orjson.OPT_INDENT_2
        | orjson.OPT_SORT_KEYS
        | orjson.OPT_SERIALIZE_NUMPY
        | orjson.OPT_APPEND_NEWLINE,
    )


def write_json(file_path: str, obj: Any):
    ensure_parent_dir(file_path)
    with open(file_path, "wb") as f:
        f.write(dump_json(obj))


def read_json(file_path: str) -> Any:
    with open(file_path, "rb") as f:
        return orjson.loads(f.read())


def sha256_bytes(*chunks: bytes) -> str:
    hasher = hashlib.sha256()
    for chunk in chunks:
        hasher.update(chunk)
    return hasher.hexdigest()


DIGEST_CHUNK_BYTES = 1024 * 1024


def _sha256_file(file_path: str) -> str:
    hasher = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(DIGEST_CHUNK_BYTES), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


async def _sha256_files(file_paths: list[str]) -> list[str]:
    loop = asyncio.get_running_loop()
    return await asyncio.gather(*(loop.run_in_executor(None, _sha256_file, p) for p in file_paths))


def file_digests(file_paths: list[str]) -> dict[str, str]:
    """
    SHA-256 content digests of the run's input files, hashed concurrently.

    Parameters:
        file_paths (list[str]): Input paths. Repeated paths are hashed once.

    Returns:
        dict[str, str]: Hex digest per path, in first-seen order.
    """
    unique = list(dict.fromkeys(file_paths))
    if not unique:
        return {}
    return dict(zip(unique, asyncio.run(_sha256_files(unique))))
