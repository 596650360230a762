"""Chat-completion client with an append-only record/replay cassette."""
from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx

from .prompt import PromptBundle

log = logging.getLogger(__name__)

__all__ = [
    "API_KEY_ENV", "DEFAULT_ENDPOINT", "MODEL_IDS", "Mode", "ModelConfig",
    "Completion", "CassetteEntry", "Cassette", "GatewayError", "CassetteMiss",
    "ProviderError", "LLMTimeout", "MissingCredentials", "hash_request",
    "Gateway", "complete",
]

API_KEY_ENV = "GOALGRAPH_API_KEY"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
MODEL_IDS = {
    "gpt4-turbo": "gpt-4-0125-preview",
    "gpt4": "gpt-4-0613",
    "gpt35-turbo": "gpt-3.5-turbo-1106",
}


class Mode(enum.Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


@dataclass(frozen=True)
class ModelConfig:
    model_id: str = "gpt-4-0613"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    endpoint: str = DEFAULT_ENDPOINT
    timeout: float = 60.0
    retries: int = 4

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be within [0, 2], got {self.temperature}")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")


@dataclass(frozen=True)
class Completion:
    text: str
    key: str
    from_cassette: bool = False


class GatewayError(Exception):
    pass


class CassetteMiss(GatewayError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no cassette entry for request {key}")


class ProviderError(GatewayError):
    def __init__(self, status: int, body: str):
        self.status, self.body = status, body
        super().__init__(f"provider returned HTTP {status}: {body[:200]}")


class LLMTimeout(GatewayError):
    pass


class MissingCredentials(GatewayError):
    pass


def hash_request(cfg: ModelConfig, bundle: PromptBundle, sample: int = 0) -> str:
    """Content digest of everything that determines a response.

    ``sample`` only enters the digest when non-zero so single-sample keys
    stay independent of the multi-sample feature.
    """
    payload = {
        "model": cfg.model_id,
        "temperature": float(cfg.temperature),
        "system": bundle.system,
        "user": bundle.user,
    }
    if sample:
        payload["sample"] = sample
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CassetteEntry:
    key: str
    model: str
    temperature: float
    system: str
    user: str
    response: str
    metadata: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> str:
        obj = {"key": self.key, "model": self.model, "temperature": self.temperature,
               "system": self.system, "user": self.user, "response": self.response}
        if self.metadata:
            obj["metadata"] = self.metadata
        return json.dumps(obj, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "CassetteEntry":
        obj = json.loads(line)
        return cls(obj["key"], obj["model"], float(obj["temperature"]), obj["system"],
                   obj["user"], obj["response"], obj.get("metadata", {}))


class Cassette:
    """Line-delimited JSON record file. The first entry for a key wins."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[str, CassetteEntry] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        entry = CassetteEntry.from_json(line)
                    except (json.JSONDecodeError, KeyError) as exc:
                        raise ValueError(f"{self.path}:{lineno}: bad cassette entry: {exc}") from exc
                    self._index.setdefault(entry.key, entry)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self._index)

    def get(self, key: str) -> CassetteEntry | None:
        return self._index.get(key)

    def append(self, entry: CassetteEntry) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(entry.to_json() + "\n")
            self._index.setdefault(entry.key, entry)


def _retryable(status: int) -> bool:
    return status == 429 or status >= 500


class Gateway:
    """Sends prompt bundles to a chat-completion endpoint or a cassette.

    ``transport`` and ``sleep`` exist for tests (an ``httpx.MockTransport``
    and a no-op sleeper). In replay mode no HTTP client is ever created.
    """

    def __init__(self, cfg: ModelConfig, mode: Mode = Mode.REPLAY,
                 cassette: Cassette | str | Path | None = None,
                 api_key: str | None = None,
                 transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 backoff: float = 1.0):
        self.cfg = cfg
        self.mode = mode
        if cassette is not None and not isinstance(cassette, Cassette):
            cassette = Cassette(cassette)
        self.cassette = cassette
        if mode in (Mode.REPLAY, Mode.RECORD) and cassette is None:
            raise ValueError(f"{mode.value} mode needs a cassette")
        if mode is Mode.REPLAY and not cassette.path.exists():
            raise FileNotFoundError(f"cassette not found: {cassette.path}")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if mode is not Mode.REPLAY and not self.api_key:
            raise MissingCredentials(f"{mode.value} mode requires {API_KEY_ENV}")
        self._transport = transport
        self._sleep = sleep
        self._backoff = backoff
        self._client: httpx.Client | None = None
        self._client_lock = threading.Lock()

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                self._client = httpx.Client(transport=self._transport, timeout=self.cfg.timeout)
            return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()

    def __enter__(self) -> "Gateway":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def complete(self, bundle: PromptBundle, sample: int = 0) -> Completion:
        key = hash_request(self.cfg, bundle, sample)
        if self.mode is Mode.REPLAY:
            entry = self.cassette.get(key)
            if entry is None:
                raise CassetteMiss(key)
            return Completion(entry.response, key, from_cassette=True)
        started = time.monotonic()
        text, usage = self._post(bundle)
        if self.mode is Mode.RECORD:
            meta = {"latency_s": round(time.monotonic() - started, 3)}
            if usage:
                meta["usage"] = usage
            self.cassette.append(CassetteEntry(
                key, self.cfg.model_id, float(self.cfg.temperature),
                bundle.system, bundle.user, text, meta))
        return Completion(text, key)

    def _post(self, bundle: PromptBundle) -> tuple[str, dict]:
        payload = {
            "model": self.cfg.model_id,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        attempts = self.cfg.retries + 1
        delay = self._backoff
        for attempt in range(1, attempts + 1):
            last = attempt == attempts
            try:
                resp = self._http().post(self.cfg.endpoint, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                if last:
                    raise LLMTimeout(f"request timed out after {attempts} attempts") from exc
                log.warning("timeout on attempt %d, retrying in %.1fs", attempt, delay)
            except httpx.TransportError as exc:
                if last:
                    raise ProviderError(0, str(exc)) from exc
                log.warning("transport error on attempt %d: %s", attempt, exc)
            else:
                if resp.status_code == 200:
                    data = resp.json()
                    return data["choices"][0]["message"]["content"], data.get("usage", {})
                if not _retryable(resp.status_code) or last:
                    raise ProviderError(resp.status_code, resp.text)
                log.warning("HTTP %d on attempt %d, retrying", resp.status_code, attempt)
            self._sleep(delay)
            delay *= 2
        raise AssertionError("unreachable")


def complete(bundle: PromptBundle, cfg: ModelConfig, mode: Mode = Mode.REPLAY,
             cassette: Cassette | str | Path | None = None, **kwargs) -> Completion:
    """One-shot convenience wrapper around :class:`Gateway`."""
    with Gateway(cfg, mode, cassette, **kwargs) as gw:
        return gw.complete(bundle)
