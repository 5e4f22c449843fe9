"""Client for the public NSF award search API."""

from __future__ import annotations

import json
import logging
import os
import threading
import time

import requests

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://api.nsf.gov/services/v1/awards.json"
ENDPOINT_ENV = "LONGTAIL_NSF_ENDPOINT"
PRINT_FIELDS = "id,title,abstractText,fundsObligatedAmt,estimatedTotalAmt,startDate,date,progEleCode,fundProgramName"

_endpoint_locks: dict[str, threading.Lock] = {}
_locks_guard = threading.Lock()


class FetchError(RuntimeError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


def resolve_endpoint(endpoint: str | None = None) -> str:
    return endpoint or os.environ.get(ENDPOINT_ENV) or DEFAULT_ENDPOINT


def _lock_for(endpoint: str) -> threading.Lock:
    with _locks_guard:
        return _endpoint_locks.setdefault(endpoint, threading.Lock())


def _get_page(session, endpoint, params, max_retries, backoff, timeout):
    status = None
    for attempt in range(max_retries + 1):
        try:
            resp = session.get(endpoint, params=params, timeout=timeout)
            status = resp.status_code
            if status == 200:
                return resp.text
            reason = f"HTTP {status}"
        except requests.RequestException as exc:
            reason = f"{type(exc).__name__}: {exc}"
        if attempt < max_retries:
            wait = backoff * 2**attempt
            log.warning("offset %s: %s; retrying in %.2fs", params.get("offset"), reason, wait)
            time.sleep(wait)
    raise FetchError(f"giving up on {endpoint} offset {params.get('offset')} after "
                     f"{max_retries + 1} attempts ({reason})", status)


def fetch_nsf_awards(
    division: str,
    year: int,
    endpoint: str | None = None,
    page_size: int = 25,
    *,
    delay: float = 1.0,
    max_retries: int = 5,
    backoff: float = 1.0,
    timeout: float = 30.0,
    division_param: str = "divAbbr",
    session: requests.Session | None = None,
) -> bytes:
    """Download every award for ``division`` starting in ``year``.

    Pages are requested with 1-based ``offset`` and ``rpp=page_size`` until a
    page comes back short.  The result is a JSON array holding each raw page
    response verbatim, which ``parse_grants(..., "nsf-api-json")`` accepts.
    """
    if page_size < 1:
        raise ValueError("page_size must be >= 1")
    endpoint = resolve_endpoint(endpoint)
    own_session = session is None
    session = session or requests.Session()
    raw_pages = []
    try:
        with _lock_for(endpoint):
            offset = 1
            while True:
                params = {
                    division_param: division,
                    "dateStart": f"01/01/{year}",
                    "dateEnd": f"12/31/{year}",
                    "offset": offset,
                    "rpp": page_size,
                    "printFields": PRINT_FIELDS,
                }
                text = _get_page(session, endpoint, params, max_retries, backoff, timeout)
                try:
                    page = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise FetchError(f"offset {offset}: response is not JSON ({exc.msg})", 200) from None
                raw_pages.append(text.strip())
                awards = ((page or {}).get("response") or {}).get("award") or []
                log.info("offset %d: %d awards", offset, len(awards))
                if len(awards) < page_size:
                    break
                offset += len(awards)
                if delay > 0:
                    time.sleep(delay)
    finally:
        if own_session:
            session.close()
    return ("[\n" + ",\n".join(raw_pages) + "\n]\n").encode("utf-8")
