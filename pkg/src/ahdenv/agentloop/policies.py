"""Chat policies: a scripted replay policy and an HTTP chat-completions client."""

from __future__ import annotations

import json
import os
import time
import urllib.error
import urllib.request
from pathlib import Path

DEFAULT_API_KEY_ENV = "AHDENV_API_KEY"


class PolicyError(RuntimeError):
    """The policy could not produce a reply (transport failure after retries)."""


class ScriptedPolicy:
    """Replays canned replies in order; returns an empty reply once exhausted."""

    kind = "scripted"

    def __init__(self, turns):
        self.turns = [str(t) for t in turns]
        self.position = 0

    @classmethod
    def from_path(cls, path) -> "ScriptedPolicy":
        """Load from a JSON file (a list of strings, or an object with a "turns" list)
        or from a directory whose files, sorted by name, are the turns."""
        p = Path(path)
        if p.is_dir():
            return cls(f.read_text(encoding="utf-8") for f in sorted(p.iterdir()) if f.is_file())
        if not p.exists() and p.with_suffix(".json").exists():
            p = p.with_suffix(".json")
        data = json.loads(p.read_text(encoding="utf-8"))
        turns = data["turns"] if isinstance(data, dict) else data
        if not isinstance(turns, list):
            raise ValueError(f"{path}: expected a list of turns")
        return cls(turns)

    def respond(self, messages: list[dict]) -> str:
        if self.position >= len(self.turns):
            return ""
        reply = self.turns[self.position]
        self.position += 1
        return reply

    @property
    def exhausted(self) -> bool:
        return self.position >= len(self.turns)


class RemoteChatPolicy:
    """Client for an OpenAI-style ``/chat/completions`` endpoint.

    The API key is read from the environment variable named by
    ``api_key_env`` at request time; it is never stored on disk.
    """

    kind = "remote_chat"

    def __init__(self, url: str, model: str, api_key_env: str = DEFAULT_API_KEY_ENV, timeout: float = 120.0,
                 retries: int = 3, backoff: float = 2.0, temperature: float | None = None,
                 max_tokens: int | None = None):
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.temperature = temperature
        self.max_tokens = max_tokens

    def _request(self, messages):
        body = {"model": self.model, "messages": messages}
        if self.temperature is not None:
            body["temperature"] = self.temperature
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(self.url, data=json.dumps(body).encode(), headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def respond(self, messages: list[dict]) -> str:
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                data = self._request(messages)
                content = data["choices"][0]["message"]["content"]
                return content or ""
            except urllib.error.HTTPError as exc:
                last = f"HTTP {exc.code}"
                if 400 <= exc.code < 500 and exc.code not in (408, 429):
                    break  # client errors other than throttling will not fix themselves
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                last = f"{type(exc).__name__}: {getattr(exc, 'reason', exc)}"
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                last = f"malformed response: {exc}"
        raise PolicyError(f"chat endpoint {self.url} failed: {last}")


def policy_from_descriptor(descriptor: str, **remote_kwargs):
    """Build a policy from ``scripted:<path>`` or ``remote:<url>``."""
    kind, _, target = descriptor.partition(":")
    if kind == "scripted" and target:
        return ScriptedPolicy.from_path(target)
    if kind == "remote" and target:
        if "model" not in remote_kwargs:
            raise ValueError("a remote policy needs a model name")
        return RemoteChatPolicy(target, **remote_kwargs)
    raise ValueError(f"policy must look like 'scripted:<path>' or 'remote:<url>', got {descriptor!r}")
