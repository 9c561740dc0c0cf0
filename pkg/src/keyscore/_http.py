"""Small shared POST-with-retry helper for HTTP providers."""

from __future__ import annotations

import time
from typing import Any, Mapping

import requests

from .errors import TransportError


def post_json(
    session: requests.Session,
    url: str,
    payload: Mapping[str, Any],
    timeout: float,
    retries: int,
    headers: Mapping[str, str] | None = None,
) -> Any:
    """POST `payload` as JSON and return the decoded JSON response body.

    Connection errors, timeouts, and 5xx responses are retried up to
    `retries` extra times; 4xx responses fail immediately.
    """
    last: TransportError | None = None
    for attempt in range(retries + 1):
        try:
            response = session.post(url, json=payload, timeout=timeout, headers=headers)
        except requests.Timeout:
            last = TransportError(f"request to {url} timed out", retryable=True)
        except requests.ConnectionError as exc:
            last = TransportError(f"connection to {url} failed: {exc}", retryable=True)
        else:
            if response.status_code >= 500:
                last = TransportError(
                    f"{url} returned {response.status_code}",
                    status=response.status_code,
                    retryable=True,
                )
            elif response.status_code >= 400:
                raise TransportError(
                    f"{url} returned {response.status_code}: {response.text[:200]}",
                    status=response.status_code,
                    retryable=False,
                )
            else:
                try:
                    return response.json()
                except ValueError:
                    raise TransportError(
                        f"{url} returned a non-JSON body", status=response.status_code
                    ) from None
        if attempt < retries:
            time.sleep(min(0.2 * 2**attempt, 1.0))
    assert last is not None
    raise last
