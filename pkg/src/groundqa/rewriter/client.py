"""Chat-completion clients: a provider-agnostic HTTP client and an offline stub."""

from __future__ import annotations

import logging
import os
import random
import re
import threading
import time
from typing import Callable, Protocol

import requests

from ..errors import EmptyCompletionError, TransportError

logger = logging.getLogger(__name__)

ENV_ENDPOINT = "LEADQA_LLM_ENDPOINT"
ENV_KEY = "LEADQA_LLM_KEY"
ENV_MODEL = "LEADQA_LLM_MODEL"

_INTERROGATIVES = {
    "what", "why", "how", "who", "whom", "whose", "which", "when", "where",
    "did", "does", "do", "is", "are", "was", "were", "can", "could", "will", "would",
}
_QUESTION_LINE = re.compile(r"^Question: (.*)$", re.MULTILINE)
_OPTION_LINE = re.compile(r"^Candidate answer: (.*)$", re.MULTILINE)


class ChatClient(Protocol):
    model: str
    source: str

    def complete(self, prompt: str) -> str: ...


def stub_description(question: str, option: str) -> str:
    """Question stem with interrogative words dropped, followed by the option."""
    words = [w for w in question.strip().rstrip("?").split() if w.lower().strip(",.") not in _INTERROGATIVES]
    return " ".join(words + option.strip().rstrip(".").split())


class StubClient:
    """Rebuilds a declarative description from the rendered prompt itself."""

    source = "stub"

    def __init__(self, model: str = "stub"):
        self.model = model
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.calls += 1
        q = _QUESTION_LINE.search(prompt)
        o = _OPTION_LINE.search(prompt)
        if q is None or o is None:
            raise ValueError("prompt lacks 'Question:' / 'Candidate answer:' lines")
        return stub_description(q.group(1), o.group(1))


def _extract_content(payload) -> str:
    try:
        return payload["choices"][0]["message"]["content"] or ""
    except (KeyError, IndexError, TypeError):
        pass
    if isinstance(payload, dict):
        for key in ("content", "text", "completion"):
            if isinstance(payload.get(key), str):
                return payload[key]
    raise TransportError("unrecognised completion response shape")


class HTTPChatClient:
    """POSTs ``{model, messages, temperature: 0}`` and reads the first choice.

    Transport failures, 429 and 5xx responses are retried with exponential
    backoff plus jitter; other 4xx responses fail immediately.
    """

    source = "llm"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        *,
        max_attempts: int = 3,
        backoff_s: float = 1.0,
        timeout_s: float = 60.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.session = session or requests.Session()
        self.sleep = sleep
        self.calls = 0

    @classmethod
    def from_env(cls, **kwargs) -> "HTTPChatClient":
        endpoint = os.environ.get(ENV_ENDPOINT)
        model = os.environ.get(ENV_MODEL)
        if not endpoint or not model:
            raise TransportError(f"{ENV_ENDPOINT} and {ENV_MODEL} must be set for live rewriting")
        return cls(endpoint, model, os.environ.get(ENV_KEY), **kwargs)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, prompt: str) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            self.calls += 1
            try:
                resp = self.session.post(self.endpoint, json=body, headers=self._headers(), timeout=self.timeout_s)
            except requests.RequestException as exc:
                last = exc
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = TransportError(f"HTTP {resp.status_code} from {self.endpoint}")
                elif resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code} from {self.endpoint}: {resp.text[:200]}")
                else:
                    try:
                        payload = resp.json()
                    except ValueError as exc:
                        raise TransportError("completion response is not JSON") from exc
                    text = _extract_content(payload).strip()
                    if not text:
                        raise EmptyCompletionError("model returned an empty completion")
                    return text
            if attempt + 1 < self.max_attempts:
                delay = self.backoff_s * (2**attempt) * (1.0 + random.random() * 0.25)
                logger.warning("completion attempt %d/%d failed (%s); retrying in %.2fs",
                               attempt + 1, self.max_attempts, last, delay)
                self.sleep(delay)
        raise TransportError(f"completion failed after {self.max_attempts} attempts: {last}")
