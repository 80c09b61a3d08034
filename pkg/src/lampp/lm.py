"""Prompt templates and log-probability scoring against a token-probability service.

The service contract is a single endpoint::

    POST /score  {"prompt": str, "completions": [str, ...]}  ->  {"logprobs": [float, ...]}

Any provider satisfying :class:`Provider` can stand in for it; the
:class:`MockProvider` is a pure lookup table used for offline runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping, Protocol, Sequence

import numpy as np
import requests

from .errors import ProtocolViolation, ScoringUnavailable, TemplateError, ValidationError

log = logging.getLogger(__name__)

URL_ENV_VAR = "LAMPP_LM_URL"
DEFAULT_MOCK_LOGPROB = -10.0

_SLOT = re.compile(r"\[(\w+)\]")
_ARTICLE = re.compile(r"\b([Aa])\(n\) (\S)")


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt with ``[slot]`` placeholders.

    ``A(n)``/``a(n)`` before a word is resolved to ``A``/``An`` by whether the
    rendered word starts with a vowel.
    """

    id: str
    text: str

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(_SLOT.findall(self.text)))

    def render(self, slots: Mapping[str, object], stop_at: str | None = None) -> str:
        """Fill the template. With ``stop_at``, return the text before that slot."""
        text = self.text
        if stop_at is not None:
            marker = f"[{stop_at}]"
            if marker not in text:
                raise TemplateError(f"template {self.id!r} has no slot {stop_at!r}")
            text = text[: text.index(marker)].rstrip(" ")

        def fill(m):
            name = m.group(1)
            if name not in slots:
                raise TemplateError(f"template {self.id!r}: slot {name!r} not provided")
            value = slots[name]
            if isinstance(value, (list, tuple)):
                value = ", ".join(str(v) for v in value)
            return str(value)

        text = _SLOT.sub(fill, text)
        return _ARTICLE.sub(_resolve_article, text)


def _resolve_article(m) -> str:
    article, first = m.group(1), m.group(2)
    an = first.lower() in "aeiou"
    return f"{article}{'n' if an else ''} {first}"


TEMPLATES = {
    t.id: t
    for t in (
        PromptTemplate("room_object", "A(n) [r] has a(n) [y]:"),
        PromptTemplate("object_confusion", "The [d] looks like the [y]:"),
        PromptTemplate(
            "action_order",
            "Your task is to [t]. Here is an *unordered* set of possible actions: {[Y]}. "
            "Please order these actions for your task. The step after [y] can be",
        ),
        PromptTemplate(
            "mc_segment",
            "You can see: [detections]\n\nYou are in the [r]\nThe thing that looks like [d] is actually",
        ),
        PromptTemplate(
            "mc_navigation",
            "The house has: [rooms].\nYou want to find a [g]. First, go to each[history]",
        ),
    )
}

PLAUSIBILITY_COMPLETIONS = (" plausible", " implausible")


def as_completion(name: str) -> str:
    """Completion string for a label appended after a prompt."""
    return " " + name


def cache_key(prompt: str, completion: str) -> str:
    payload = json.dumps([prompt, completion], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Provider(Protocol):
    def score(self, prompt: str, completions: Sequence[str]) -> list[float]: ...


class MockProvider:
    """Deterministic lookup provider.

    Keys are :func:`cache_key` hashes of ``(prompt, completion)``; unknown keys
    score ``default_logprob``. Fixture files look like::

        {"default_logprob": -10.0,
         "logprobs": {"<sha256>": -0.1, ...},
         "entries": [{"prompt": "...", "completion": " plausible", "logprob": -0.1}]}

    ``entries`` is a readable alternative to ``logprobs``; both may be present.
    """

    def __init__(self, logprobs: Mapping[str, float] | None = None, default_logprob: float = DEFAULT_MOCK_LOGPROB):
        self.logprobs = dict(logprobs or {})
        self.default_logprob = float(default_logprob)
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_entries(cls, entries, default_logprob: float = DEFAULT_MOCK_LOGPROB) -> "MockProvider":
        """Build from ``(prompt, completion, logprob)`` triples."""
        return cls({cache_key(p, c): float(lp) for p, c, lp in entries}, default_logprob)

    @classmethod
    def from_file(cls, path) -> "MockProvider":
        with open(path) as fh:
            d = json.load(fh)
        table = {k: float(v) for k, v in d.get("logprobs", {}).items()}
        for e in d.get("entries", []):
            table[cache_key(e["prompt"], e["completion"])] = float(e["logprob"])
        return cls(table, d.get("default_logprob", DEFAULT_MOCK_LOGPROB))

    def score(self, prompt, completions):
        with self._lock:
            self.calls += 1
        return [self.logprobs.get(cache_key(prompt, c), self.default_logprob) for c in completions]


class HttpProvider:
    """Client for the ``POST /score`` endpoint with bounded retries."""

    def __init__(self, url: str, timeout: float = 30.0, attempts: int = 3, backoff: float = 0.5, session=None):
        self.url = url if url.rstrip("/").endswith("/score") else url.rstrip("/") + "/score"
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self.session = session or requests.Session()
        self.calls = 0

    def score(self, prompt, completions):
        payload = {"prompt": prompt, "completions": list(completions)}
        last_error = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                self.calls += 1
                resp = self.session.post(self.url, json=payload, timeout=self.timeout)
                resp.raise_for_status()
                body = resp.json()
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
                log.warning("scoring attempt %d/%d failed: %s", attempt + 1, self.attempts, exc)
                continue
            if not isinstance(body, dict) or "logprobs" not in body:
                raise ProtocolViolation(f"response has no 'logprobs' field for prompt {prompt!r}")
            return body["logprobs"]
        raise ScoringUnavailable(f"scoring service at {self.url} failed after {self.attempts} attempts: {last_error}")


def provider_from_env(mock_fixture=None) -> Provider:
    """Mock provider if a fixture is given, else the HTTP service named by ``LAMPP_LM_URL``."""
    if mock_fixture:
        return MockProvider.from_file(mock_fixture)
    url = os.environ.get(URL_ENV_VAR)
    if not url:
        raise ValidationError(f"no scoring provider: pass --mock-lm or set {URL_ENV_VAR}")
    return HttpProvider(url)


class ScoreCache:
    """Append-only JSON-lines cache of ``{key, logprob}`` records."""

    def __init__(self, path=None):
        self.path = path
        self._data: dict[str, float] = {}
        self._lock = threading.Lock()
        if path is not None and os.path.exists(path):
            with open(path) as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        rec = json.loads(line)
                        self._data.setdefault(rec["key"], rec["logprob"])

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data

    def get(self, key):
        return self._data.get(key)

    def put(self, key: str, logprob: float) -> None:
        with self._lock:
            if key in self._data:
                return
            self._data[key] = logprob
            if self.path is not None:
                with open(self.path, "a") as fh:
                    fh.write(json.dumps({"key": key, "logprob": logprob}) + "\n")


class LMScorer:
    """Scores template completions through a provider, consulting a cache first.

    ``requests`` counts provider round-trips and ``completions_scored`` the
    completions sent over them; cache hits increment neither.
    """

    def __init__(self, provider: Provider, cache: ScoreCache | None = None, max_workers: int = 4):
        self.provider = provider
        self.cache = cache if cache is not None else ScoreCache()
        self.max_workers = max_workers
        self.requests = 0
        self.completions_scored = 0
        self._lock = threading.Lock()

    def score(self, prompt: str, completions: Sequence[str]) -> list[float]:
        if not completions:
            raise ValidationError("no candidate completions")
        keys = [cache_key(prompt, c) for c in completions]
        missing = [c for c, k in zip(completions, keys) if k not in self.cache]
        missing = list(dict.fromkeys(missing))
        if missing:
            with self._lock:
                self.requests += 1
                self.completions_scored += len(missing)
            got = self.provider.score(prompt, missing)
            if not isinstance(got, (list, tuple)) or len(got) != len(missing):
                raise ProtocolViolation(
                    f"expected {len(missing)} logprobs for prompt {prompt!r}, got {got!r}"
                )
            for c, lp in zip(missing, got):
                if not isinstance(lp, (int, float)) or not math.isfinite(lp):
                    raise ProtocolViolation(f"non-finite logprob {lp!r} for completion {c!r}")
                self.cache.put(cache_key(prompt, c), float(lp))
        return [self.cache.get(k) for k in keys]

    def score_many(self, queries: Sequence[tuple[str, Sequence[str]]]) -> list[list[float]]:
        """Score several prompts concurrently; results follow input order."""
        if self.max_workers <= 1 or len(queries) <= 1:
            return [self.score(p, c) for p, c in queries]
        with ThreadPoolExecutor(self.max_workers) as pool:
            return list(pool.map(lambda q: self.score(*q), queries))

    def score_completions(self, template: PromptTemplate | str, slots, candidates, stop_at=None) -> dict[str, float]:
        template = TEMPLATES[template] if isinstance(template, str) else template
        prompt = template.render(slots, stop_at=stop_at)
        candidates = list(candidates)
        return dict(zip(candidates, self.score(prompt, candidates)))

    def next_token_distribution(self, template, slots, candidates, stop_at=None) -> np.ndarray:
        """Probabilities of ``candidates`` renormalized over the candidate set."""
        scores = self.score_completions(template, slots, candidates, stop_at=stop_at)
        return normalize_logprobs([scores[c] for c in candidates])


def normalize_logprobs(logprobs) -> np.ndarray:
    lp = np.asarray(logprobs, dtype=float)
    w = np.exp(lp - lp.max())
    return w / w.sum()


def _handler_for(provider: Provider):
    class ScoreHandler(BaseHTTPRequestHandler):
        def do_POST(self):
            if self.path.rstrip("/") != "/score":
                self.send_error(404)
                return
            length = int(self.headers.get("Content-Length", 0))
            try:
                body = json.loads(self.rfile.read(length))
                logprobs = provider.score(body["prompt"], body["completions"])
            except (ValueError, KeyError, TypeError) as exc:
                self.send_error(400, str(exc))
                return
            out = json.dumps({"logprobs": logprobs}).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(out)))
            self.end_headers()
            self.wfile.write(out)

        def log_message(self, *args):
            pass

    return ScoreHandler


def make_server(provider: Provider, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """HTTP server exposing ``provider`` on ``POST /score``. Caller runs ``serve_forever``."""
    return ThreadingHTTPServer((host, port), _handler_for(provider))
