"""Optional HTTP clients for remote text generation and remote embeddings.

Nothing in the offline pipeline touches this module. Endpoint URLs and
tokens come from environment variables; responses are cached on disk, one
JSON file per request hash.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx
import numpy as np

from .data import TextSurrogate
from .surrogate import SurrogateConfig, build_prompt

log = logging.getLogger(__name__)

URL_ENV = "TEXTCATE_REMOTE_URL"
TOKEN_ENV = "TEXTCATE_REMOTE_TOKEN"
EMBED_URL_ENV = "TEXTCATE_EMBED_URL"
EMBED_TOKEN_ENV = "TEXTCATE_EMBED_TOKEN"
OFFLINE_ENV = "TEXTCATE_OFFLINE"


class RemoteUnavailableError(RuntimeError):
    """The remote endpoint could not be reached after all retries."""


@dataclass(frozen=True)
class RemoteConfig:
    model: str = "gpt-4o-mini"
    cache_dir: str = ".textcate_cache"
    url_env: str = URL_ENV
    token_env: str = TOKEN_ENV
    attempts: int = 3
    backoff: float = 0.5
    timeout: float = 60.0
    max_concurrency: int = 4


def offline() -> bool:
    return os.environ.get(OFFLINE_ENV, "") not in ("", "0")


class DiskCache:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    @staticmethod
    def key(*parts: str) -> str:
        return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()

    def path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str):
        p = self.path(key)
        if not p.exists():
            return None
        with open(p, encoding="utf-8") as fh:
            return json.load(fh)

    def put(self, key: str, value) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(value, fh)
            os.replace(tmp, self.path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _post_with_retry(
    client: httpx.Client,
    url: str,
    body: dict,
    headers: dict,
    attempts: int,
    backoff: float,
    sleep: Callable[[float], None],
) -> dict:
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            resp = client.post(url, json=body, headers=headers)
            resp.raise_for_status()
            return resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            last = exc
            log.warning("remote request failed (attempt %d/%d): %s", attempt + 1, attempts, exc)
            if attempt + 1 < attempts:
                sleep(backoff * 2**attempt)
    raise RemoteUnavailableError(f"{url} unavailable after {attempts} attempts: {last}")


def _endpoint(url_env: str, token_env: str) -> tuple[str, dict]:
    if offline():
        raise RemoteUnavailableError("remote calls are disabled (offline mode)")
    url = os.environ.get(url_env)
    if not url:
        raise RemoteUnavailableError(f"environment variable {url_env} is not set")
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(token_env)
    if token:
        headers["Authorization"] = f"Bearer {token}"
    return url, headers


def fetch_remote(
    x,
    cfg: SurrogateConfig,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> TextSurrogate:
    """Ask a chat-completion endpoint to verbalize ``x``.

    Remote leakage is uncontrolled, so every coordinate is marked leaked and
    no covariate intervals are recorded.
    """
    rc: RemoteConfig = cfg.remote or RemoteConfig()
    prompt = build_prompt(x, cfg.prompt_family)
    cache = DiskCache(rc.cache_dir)
    key = DiskCache.key(rc.model, prompt)
    hit = cache.get(key)
    d = len(np.asarray(x))
    if hit is not None:
        return TextSurrogate(hit["text"], (True,) * d, cfg.prompt_family)

    url, headers = _endpoint(rc.url_env, rc.token_env)
    body = {"model": rc.model, "messages": [{"role": "user", "content": prompt}]}
    own = client is None
    client = client or httpx.Client(timeout=rc.timeout)
    try:
        payload = _post_with_retry(client, url, body, headers, rc.attempts, rc.backoff, sleep)
    finally:
        if own:
            client.close()
    try:
        text = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise RemoteUnavailableError("response has no choices[0].message.content") from None
    cache.put(key, {"prompt": prompt, "model": rc.model, "text": text})
    return TextSurrogate(text, (True,) * d, cfg.prompt_family)


def fetch_many(X, cfg: SurrogateConfig, client: httpx.Client | None = None) -> list[TextSurrogate]:
    rc: RemoteConfig = cfg.remote or RemoteConfig()
    X = np.asarray(X, dtype=np.float64)
    with ThreadPoolExecutor(max_workers=max(1, rc.max_concurrency)) as pool:
        return list(pool.map(lambda x: fetch_remote(x, cfg, client), X))


@dataclass(frozen=True)
class RemoteEncoder:
    """Embeddings from an endpoint that takes ``{"text": ...}`` and returns a float list."""

    d_emb: int
    cache_dir: str = ".textcate_cache/embeddings"
    url_env: str = EMBED_URL_ENV
    token_env: str = EMBED_TOKEN_ENV
    attempts: int = 3
    backoff: float = 0.5

    def encode_many(
        self,
        texts: Sequence[str | None],
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> tuple[np.ndarray, np.ndarray]:
        cache = DiskCache(self.cache_dir)
        own = client is None
        rows, empty = [], []
        try:
            for t in texts:
                t = t or ""
                empty.append(not t.strip())
                key = DiskCache.key("embed", str(self.d_emb), t)
                vec = cache.get(key)
                if vec is None:
                    url, headers = _endpoint(self.url_env, self.token_env)
                    if client is None:
                        client = httpx.Client(timeout=60.0)
                    vec = _post_with_retry(client, url, {"text": t}, headers,
                                           self.attempts, self.backoff, sleep)
                    cache.put(key, vec)
                arr = np.asarray(vec, dtype=np.float64)
                if arr.shape != (self.d_emb,) or not np.all(np.isfinite(arr)):
                    raise RemoteUnavailableError(f"embedding has shape {arr.shape}, expected ({self.d_emb},)")
                rows.append(arr)
        finally:
            if own and client is not None:
                client.close()
        if not rows:
            return np.zeros((0, self.d_emb)), np.zeros(0, dtype=bool)
        return np.vstack(rows), np.array(empty, dtype=bool)

    def to_dict(self) -> dict:
        return {"kind": "remote", "d_emb": self.d_emb}
