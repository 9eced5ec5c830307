"""Remote oracle speaking a small JSON-over-HTTP protocol.

Request: ``POST <endpoint>/scan`` with the raw module bytes as an
``application/octet-stream`` body and, when ``DIVERS_ORACLE_TOKEN`` is set,
an ``Authorization: Bearer`` header. Response: HTTP 200 with
``{"verdicts": [{"name": str, "flagged": bool}, ...]}``. Any other status,
a timeout or a connection error is retried with exponential backoff.
"""

from __future__ import annotations

import logging
import os
import threading
import time

import requests

from divers.ir.model import Module
from divers.oracle.core import MalformedResponse, Oracle, OracleReport, OracleUnavailable, Verdict

log = logging.getLogger(__name__)

TOKEN_ENV = "DIVERS_ORACLE_TOKEN"


def parse_verdicts(doc) -> list[Verdict]:
    if not isinstance(doc, dict) or not isinstance(doc.get("verdicts"), list):
        raise MalformedResponse("response lacks a 'verdicts' list")
    out = []
    for item in doc["verdicts"]:
        if (not isinstance(item, dict) or not isinstance(item.get("name"), str)
                or not isinstance(item.get("flagged"), bool)):
            raise MalformedResponse(f"bad verdict entry {item!r}")
        out.append(Verdict(item["name"], item["flagged"]))
    return out


class HttpOracle(Oracle):
    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 3, *,
                 backoff: float = 0.5, max_rate: float | None = None,
                 session: requests.Session | None = None):
        super().__init__()
        if retries < 1:
            raise ValueError("retries must be at least 1")
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.min_interval = 1.0 / max_rate if max_rate else 0.0
        self.session = session or requests.Session()
        self._rate_lock = threading.Lock()
        self._next_slot = 0.0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/octet-stream"}
        token = os.environ.get(TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _throttle(self) -> None:
        if not self.min_interval:
            return
        with self._rate_lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self.min_interval
        if wait > 0:
            time.sleep(wait)

    def _evaluate(self, blob: bytes, module: Module | None) -> OracleReport:
        url = f"{self.endpoint}/scan"
        last = "no attempt made"
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self._throttle()
            try:
                resp = self.session.post(url, data=blob, headers=self._headers(),
                                         timeout=self.timeout)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("oracle attempt %d/%d failed: %s", attempt + 1, self.retries, last)
                continue
            if resp.status_code != 200:
                last = f"HTTP {resp.status_code}"
                log.warning("oracle attempt %d/%d failed: %s", attempt + 1, self.retries, last)
                continue
            try:
                doc = resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"response is not JSON: {exc}") from None
            return OracleReport.from_verdicts(parse_verdicts(doc))
        raise OracleUnavailable(f"{url}: {self.retries} attempts failed (last: {last})")


def http_oracle(endpoint: str, timeout: float = 30.0, retries: int = 3, **kwargs) -> HttpOracle:
    return HttpOracle(endpoint, timeout, retries, **kwargs)
