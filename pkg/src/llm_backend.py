"""
LLM completion backends.

Provides a scripted backend driven by fixture files (also used to replay
recorded sessions), an HTTP backend, a persistent response cache, a recording
wrapper and a call counter.
"""

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Union

import requests

from src.exceptions import (
    BackendRefused,
    MalformedInput,
    NoFixtureMatch,
    StorageError,
    TransportError,
)

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF_SECONDS = 1.0


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_output_tokens: int = 256
    temperature: float = 0.0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("CompletionRequest.prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError(f"max_output_tokens must be >= 1, got {self.max_output_tokens}")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    backend_id: str
    cached: bool = False


class LLMBackend(Protocol):
    backend_id: str

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        ...


def prompt_hash(prompt: str) -> str:
    """SHA-256 hex digest of the UTF-8 prompt, as used by hash fixture matchers."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class FixtureEntry:
    """One (matcher, response) pair; kind is "hash" or "substring"."""

    kind: str
    value: str
    response: str

    def matches(self, prompt: str, digest: str) -> bool:
        if self.kind == "hash":
            return self.value == digest
        return self.value in prompt

    def to_dict(self) -> Dict:
        return {"match": {"kind": self.kind, "value": self.value}, "response": self.response}


def load_fixture(path: Union[str, Path]) -> List[FixtureEntry]:
    """
    Load a JSONL fixture / replay file.

    Raises:
        MalformedInput: If a line is not a valid fixture entry
    """
    entries = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                kind = raw["match"]["kind"]
                value = raw["match"]["value"]
                response = raw["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise MalformedInput(f"{path}:{line_no}: invalid fixture entry: {e}") from e
            if kind not in ("hash", "substring"):
                raise MalformedInput(f"{path}:{line_no}: unknown matcher kind {kind!r}")
            if not isinstance(value, str) or not isinstance(response, str):
                raise MalformedInput(f"{path}:{line_no}: matcher value and response must be strings")
            entries.append(FixtureEntry(kind=kind, value=value, response=response))
    logger.info(f"Loaded {len(entries)} fixture entries from {path}")
    return entries


class ScriptedBackend:
    """Deterministic backend: the first fixture entry matching the prompt wins."""

    def __init__(self, entries: List[FixtureEntry], backend_id: str = "scripted"):
        self.entries = list(entries)
        self.backend_id = backend_id

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ScriptedBackend":
        return cls(load_fixture(path), backend_id=f"replay:{Path(path).name}")

    @classmethod
    def from_pairs(cls, pairs: List[tuple]) -> "ScriptedBackend":
        """Build from (substring, response) pairs."""
        return cls([FixtureEntry("substring", pattern, response) for pattern, response in pairs])

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = prompt_hash(request.prompt)
        for entry in self.entries:
            if entry.matches(request.prompt, digest):
                return CompletionResponse(text=entry.response, backend_id=self.backend_id)
        raise NoFixtureMatch(request.prompt)


class HttpBackend:
    """
    Remote completion service.

    POSTs {"prompt", "max_tokens", "temperature"} and expects {"text"} back.
    Connection failures, timeouts, truncated bodies, 429 and 5xx responses are
    retried with exponential backoff. Other 4xx responses and request errors
    such as an invalid URL raise BackendRefused at once.
    """

    def __init__(
        self,
        url: str,
        api_key: str = "",
        timeout: float = 60.0,
        max_attempts: int = MAX_ATTEMPTS,
        backoff_seconds: float = BACKOFF_SECONDS,
    ):
        self.url = url
        self.api_key = api_key
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self.backend_id = f"http:{url}"

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        payload = {
            "prompt": request.prompt,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last_error = "no attempt made"

        for attempt in range(1, self.max_attempts + 1):
            try:
                response = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout, requests.exceptions.ChunkedEncodingError) as e:
                last_error = f"{type(e).__name__}: {e}"
            except requests.RequestException as e:
                logger.error(f"LLM request could not be sent: {type(e).__name__}: {e}")
                raise BackendRefused(f"LLM request failed: {type(e).__name__}: {e}") from e
            else:
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}"
                elif response.status_code >= 400:
                    logger.error(f"LLM service refused request: HTTP {response.status_code}")
                    raise BackendRefused(f"LLM service returned HTTP {response.status_code}: {response.text[:200]}")
                else:
                    try:
                        text = response.json()["text"]
                    except (ValueError, KeyError, TypeError) as e:
                        raise BackendRefused(f"LLM service returned a malformed body: {e}") from e
                    return CompletionResponse(text=str(text), backend_id=self.backend_id)

            logger.warning(f"LLM request attempt {attempt}/{self.max_attempts} failed: {last_error}")
            if attempt < self.max_attempts:
                time.sleep(self.backoff_seconds * 2 ** (attempt - 1))

        logger.error(f"LLM request failed after {self.max_attempts} attempts")
        raise TransportError(f"LLM service unreachable after {self.max_attempts} attempts: {last_error}")


def cache_key(backend_id: str, request: CompletionRequest) -> str:
    material = json.dumps(
        [backend_id, request.prompt, request.max_output_tokens, request.temperature],
        ensure_ascii=False,
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class CachedBackend:
    """
    Wraps a backend with an append-only JSONL response cache.

    The cache file is loaded into memory on construction; misses are recorded
    both in memory and on disk.
    """

    def __init__(self, backend: LLMBackend, cache_path: Optional[Union[str, Path]] = None):
        self.backend = backend
        self.backend_id = backend.backend_id
        self.cache_path = Path(cache_path) if cache_path else None
        self._entries: Dict[str, str] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if self.cache_path and self.cache_path.exists():
            self._entries = read_cache(self.cache_path)
            logger.info(f"Loaded {len(self._entries)} cached responses from {self.cache_path}")

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        key = cache_key(self.backend_id, request)
        text = self._entries.get(key)
        if text is not None:
            with self._lock:
                self.hits += 1
            return CompletionResponse(text=text, backend_id=self.backend_id, cached=True)

        response = self.backend.complete(request)
        with self._lock:
            self.misses += 1
            self._entries[key] = response.text
            if self.cache_path:
                record = {
                    "key": key,
                    "prompt": request.prompt,
                    "text": response.text,
                    "backend_id": self.backend_id,
                    "timestamp": datetime.now(timezone.utc).isoformat(),
                }
                _append_jsonl(self.cache_path, record)
        return CompletionResponse(text=response.text, backend_id=self.backend_id, cached=False)

    def stats(self) -> Dict[str, int]:
        return {"entries": len(self._entries), "hits": self.hits, "misses": self.misses}


def read_cache(path: Union[str, Path]) -> Dict[str, str]:
    entries: Dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                entries[record["key"]] = record["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise MalformedInput(f"{path}:{line_no}: invalid cache record: {e}") from e
    return entries


def clear_cache(path: Union[str, Path]) -> int:
    """Delete a cache file, returning how many entries it held."""
    path = Path(path)
    if not path.exists():
        return 0
    count = len(read_cache(path))
    path.unlink()
    logger.info(f"Cleared {count} cached responses from {path}")
    return count


def _append_jsonl(path: Path, record: Dict):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    except OSError as e:
        logger.error(f"Could not write {path}: {e}")
        raise StorageError(f"Could not write {path}: {e}") from e


class RecordingBackend:
    """
    Records every (prompt, response) pair of a live session as a replay file.

    Entries use hash matchers, so ScriptedBackend.from_file on the result
    reproduces the session exactly without network access.
    """

    def __init__(self, backend: LLMBackend, replay_path: Union[str, Path]):
        self.backend = backend
        self.backend_id = backend.backend_id
        self.replay_path = Path(replay_path)
        self._lock = threading.Lock()
        try:
            self.replay_path.parent.mkdir(parents=True, exist_ok=True)
            self.replay_path.touch()
        except OSError as e:
            logger.error(f"Replay path {self.replay_path} is not writable: {e}")
            raise StorageError(f"Replay path {self.replay_path} is not writable: {e}") from e

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self.backend.complete(request)
        entry = FixtureEntry(kind="hash", value=prompt_hash(request.prompt), response=response.text)
        with self._lock:
            _append_jsonl(self.replay_path, entry.to_dict())
        return response


def record_replay(backend: LLMBackend, replay_path: Union[str, Path]) -> RecordingBackend:
    return RecordingBackend(backend, replay_path)


class CountingBackend:
    """Counts complete() calls, including failed ones."""

    def __init__(self, backend: LLMBackend):
        self.backend = backend
        self.backend_id = backend.backend_id
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls += 1
        return self.backend.complete(request)
