"""Minimal JSON-over-HTTP client used by every remote backend."""

from __future__ import annotations

import json
import logging
import urllib.error
import urllib.request
from dataclasses import dataclass

from .errors import BackendError

log = logging.getLogger(__name__)


@dataclass
class RemoteConfig:
    url: str
    timeout: float = 10.0
    retries: int = 2


class JsonHttpClient:
    def __init__(self, config: RemoteConfig):
        self.config = config

    def post(self, payload: dict) -> dict:
        """POST ``payload`` and return the decoded JSON object.

        Transport failures are retried ``config.retries`` times; anything still
        failing is raised as :class:`BackendError`.
        """
        body = json.dumps(payload).encode("utf-8")
        last_err: Exception | None = None
        for attempt in range(self.config.retries + 1):
            req = urllib.request.Request(
                self.config.url, data=body, method="POST",
                headers={"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(req, timeout=self.config.timeout) as resp:
                    raw = resp.read()
            except (urllib.error.URLError, TimeoutError, OSError) as err:
                last_err = err
                log.warning("request to %s failed (attempt %d): %s",
                            self.config.url, attempt + 1, err)
                continue
            try:
                decoded = json.loads(raw)
            except json.JSONDecodeError as err:
                raise BackendError(f"malformed JSON from {self.config.url}: {err}") from err
            if not isinstance(decoded, dict):
                raise BackendError(f"expected a JSON object from {self.config.url}")
            return decoded
        raise BackendError(f"backend at {self.config.url} unreachable: {last_err}")
