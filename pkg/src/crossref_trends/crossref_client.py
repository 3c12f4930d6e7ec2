"""CrossRef works API count queries.

Only ``message.total-results`` is consumed, so every query asks for
``rows=0``. Requests go through a shared rate limiter, are retried with
exponential backoff on transient statuses, and each attempt is appended to
a plain-text run log. Responses can be cached on disk (one JSON file per
category and year) and replayed offline from a fixture directory with the
same layout.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence
from urllib.parse import urlencode

from .errors import ClientError, ConfigError, FetchError, QueryRangeError, ResponseParseError
from .timeseries import AnnualSeries, Category, Dataset

__all__ = [
    "API_URL",
    "YEAR_MIN",
    "YEAR_MAX",
    "RETRACTION_TERMS",
    "COVID_TERMS",
    "Category",
    "QuerySpec",
    "RetryPolicy",
    "CountResponse",
    "RateLimiter",
    "ResponseCache",
    "RunLog",
    "CrossrefClient",
    "build_query",
    "parse_total_results",
]

logger = logging.getLogger(__name__)

API_URL = "https://api.crossref.org/works"
YEAR_MIN, YEAR_MAX = 2004, 2030

RETRACTION_TERMS = ("Retraction", "Retracted", "Retraction Notice", "Notice of Retraction")
COVID_TERMS = ("COVID-19", "SARS-CoV-2", "Coronavirus")


@dataclass(frozen=True)
class QuerySpec:
    category: Category
    year: int
    filter_expr: str
    title_terms: tuple = ()
    row_limit: int = 0

    def params(self, mailto: Optional[str] = None) -> list:
        """URL parameters in a fixed order: filter, rows, query.title, mailto."""
        params = [("filter", self.filter_expr), ("rows", str(self.row_limit))]
        if self.title_terms:
            params.append(("query.title", " ".join(self.title_terms)))
        if mailto:
            params.append(("mailto", mailto))
        return params

    def url(self, base_url: str = API_URL, mailto: Optional[str] = None) -> str:
        return f"{base_url}?{urlencode(self.params(mailto))}"


def build_query(
    category,
    year: int,
    *,
    retraction_terms: Sequence[str] = RETRACTION_TERMS,
    covid_terms: Sequence[str] = COVID_TERMS,
) -> QuerySpec:
    """Assemble the count query for one category and calendar year.

    Retraction notices combine the ``update-type:retraction`` filter with the
    retraction title terms; COVID retractions use the same filter with the
    COVID title terms instead.
    """
    category = Category(category)
    if isinstance(year, bool) or int(year) != year:
        raise QueryRangeError(f"year must be an integer, got {year!r}")
    year = int(year)
    if not YEAR_MIN <= year <= YEAR_MAX:
        raise QueryRangeError(f"year {year} outside supported range {YEAR_MIN}-{YEAR_MAX}")
    clauses = [f"from-pub-date:{year}-01-01", f"until-pub-date:{year}-12-31"]
    terms: tuple = ()
    if category is Category.RETRACTIONS:
        clauses.append("update-type:retraction")
        terms = tuple(retraction_terms)
    elif category is Category.COVID_RETRACTIONS:
        clauses.append("update-type:retraction")
        terms = tuple(covid_terms)
        if not terms:
            raise ConfigError("COVID query needs at least one title term")
    elif category is Category.PREPRINTS:
        clauses.append("type:posted-content")
    return QuerySpec(category, year, ",".join(clauses), terms, 0)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_backoff: float = 1.0
    backoff_factor: float = 2.0
    retry_statuses: frozenset = frozenset({429, 500, 502, 503, 504})
    per_request_timeout: float = 30.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.backoff_factor < 1:
            raise ConfigError("backoff_factor must be >= 1")
        if self.base_backoff < 0 or self.per_request_timeout <= 0:
            raise ConfigError("backoff and timeout must be non-negative / positive")
        statuses = frozenset(self.retry_statuses) | {429, 500, 502, 503, 504}
        object.__setattr__(self, "retry_statuses", statuses)

    def backoff(self, retry_index: int) -> float:
        """Delay before retry number ``retry_index`` (0 for the first retry)."""
        return self.base_backoff * self.backoff_factor ** retry_index


@dataclass(frozen=True)
class CountResponse:
    total_results: int
    query: QuerySpec
    fetched_at: str
    from_cache: bool = False
    attempts: int = 0


def _utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def parse_total_results(document) -> int:
    """Return ``message.total-results`` unchanged, or raise if it is unusable."""
    try:
        value = document["message"]["total-results"]
    except (KeyError, TypeError):
        raise ResponseParseError("response lacks message.total-results") from None
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ResponseParseError(f"message.total-results is not a non-negative integer: {value!r}")
    return value


class RateLimiter:
    """Spaces calls at least ``1 / rate`` seconds apart across threads."""

    def __init__(self, rate: float = 1.0, clock: Callable[[], float] = time.monotonic, sleep=time.sleep):
        if rate < 0:
            raise ConfigError("rate limit must be >= 0")
        self.interval = 0.0 if rate == 0 else 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = None

    def wait(self) -> float:
        with self._lock:
            now = self._clock()
            slot = now if self._next is None else max(now, self._next)
            self._next = slot + self.interval
        delay = slot - now
        if delay > 0:
            self._sleep(delay)
        return delay


class ResponseCache:
    """Directory of ``<Category>_<year>.json`` entries.

    Each entry holds the raw response document with the request URL (no
    contact address) and the UTC fetch timestamp.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def path_for(self, spec: QuerySpec) -> Path:
        return self.directory / f"{spec.category.value}_{spec.year}.json"

    def get(self, spec: QuerySpec) -> Optional[dict]:
        path = self.path_for(spec)
        if not path.is_file():
            return None
        with open(path, encoding="utf-8") as fh:
            entry = json.load(fh)
        if entry.get("filter") not in (None, spec.filter_expr):
            logger.warning("cache entry %s was recorded for a different filter; ignoring", path)
            return None
        return entry

    def put(self, spec: QuerySpec, document: dict, fetched_at: str, url: str) -> Path:
        entry = {
            "category": spec.category.value,
            "year": spec.year,
            "filter": spec.filter_expr,
            "title_terms": list(spec.title_terms),
            "url": url,
            "fetched_at": fetched_at,
            "response": document,
        }
        path = self.path_for(spec)
        with self._lock:
            self.directory.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(entry, fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, path)
        return path


class RunLog:
    """Append-only request log, one tab-separated line per HTTP attempt."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()

    def record(self, url: str, status, attempt: int, latency: float, note: str = "") -> None:
        line = f"{_utcnow()}\t{url}\tstatus={status if status is not None else '-'}\tattempt={attempt}\tlatency_ms={latency * 1000:.1f}"
        if note:
            line += f"\t{note}"
        logger.debug(line)
        if self.path is None:
            return
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(line + "\n")


@dataclass
class CrossrefClient:
    """Count-query client with caching, fixture replay, retries and rate limiting.

    Lookup order for a query is fixture directory, then cache, then the
    network. Network fetches (and fixture replays) are written back to the
    cache when one is configured. ``offline=True`` never touches the
    network. A contact address is mandatory unless offline.
    """

    mailto: Optional[str] = None
    policy: RetryPolicy = field(default_factory=RetryPolicy)
    rate_limit: float = 1.0
    cache_dir: Optional[os.PathLike] = None
    fixture_dir: Optional[os.PathLike] = None
    offline: bool = False
    log_path: Optional[os.PathLike] = None
    parallelism: int = 1
    base_url: str = API_URL
    retraction_terms: tuple = RETRACTION_TERMS
    covid_terms: tuple = COVID_TERMS
    session: object = None
    sleep: Callable[[float], None] = time.sleep
    clock: Callable[[], float] = time.monotonic

    def __post_init__(self):
        if not self.offline and not self.mailto:
            raise ConfigError("a contact email (mailto) is required for live CrossRef requests")
        if self.offline and not (self.fixture_dir or self.cache_dir):
            raise ConfigError("offline mode needs a fixture or cache directory")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        self.cache = ResponseCache(self.cache_dir) if self.cache_dir else None
        self.fixtures = ResponseCache(self.fixture_dir) if self.fixture_dir else None
        self.limiter = RateLimiter(self.rate_limit, clock=self.clock, sleep=self.sleep)
        self.run_log = RunLog(self.log_path)
        self.requests_issued = 0
        self._count_lock = threading.Lock()
        if self.session is None and not self.offline:
            import requests

            self.session = requests.Session()
            self.session.headers.update(
                {"User-Agent": f"crossref-trends/0.1 (mailto:{self.mailto})", "Accept": "application/json"}
            )

    def build_query(self, category, year: int) -> QuerySpec:
        return build_query(category, year, retraction_terms=self.retraction_terms, covid_terms=self.covid_terms)

    # -- single query ---------------------------------------------------------

    def execute_count(self, spec: QuerySpec, policy: Optional[RetryPolicy] = None) -> CountResponse:
        for store in (self.fixtures, self.cache):
            if store is None:
                continue
            entry = store.get(spec)
            if entry is not None:
                total = parse_total_results(entry.get("response"))
                if store is self.fixtures and self.cache is not None and self.cache.get(spec) is None:
                    self.cache.put(spec, entry["response"], entry.get("fetched_at", ""), entry.get("url", spec.url(self.base_url)))
                return CountResponse(total, spec, entry.get("fetched_at", ""), from_cache=True)
        if self.offline:
            raise FetchError(
                f"offline and no recorded response for {spec.category.value} {spec.year}",
                year=spec.year,
                category=spec.category,
            )
        document, attempts = self._request(spec, policy or self.policy)
        total = parse_total_results(document)
        fetched_at = _utcnow()
        if self.cache is not None:
            self.cache.put(spec, document, fetched_at, spec.url(self.base_url))
        return CountResponse(total, spec, fetched_at, from_cache=False, attempts=attempts)

    def _request(self, spec: QuerySpec, policy: RetryPolicy):
        url = spec.url(self.base_url, self.mailto)
        log_url = spec.url(self.base_url)
        last_status = None
        last_error = ""
        for attempt in range(1, policy.max_attempts + 1):
            retry_after = None
            self.limiter.wait()
            with self._count_lock:
                self.requests_issued += 1
            started = self.clock()
            try:
                response = self.session.get(url, timeout=policy.per_request_timeout)
            except Exception as exc:  # transport failure: retry like a 5xx
                self.run_log.record(log_url, None, attempt, self.clock() - started, type(exc).__name__)
                last_status, last_error = None, f"{type(exc).__name__}: {exc}"
            else:
                status = int(response.status_code)
                self.run_log.record(log_url, status, attempt, self.clock() - started)
                last_status = status
                if status == 200:
                    try:
                        return response.json(), attempt
                    except ValueError as exc:
                        raise ResponseParseError(f"invalid JSON from {log_url}: {exc}") from exc
                if status not in policy.retry_statuses:
                    cls = ClientError if 400 <= status < 500 else FetchError
                    raise cls(f"HTTP {status} for {log_url}", status=status, year=spec.year, category=spec.category)
                last_error = f"HTTP {status}"
                retry_after = _retry_after(getattr(response, "headers", None))
            if attempt < policy.max_attempts:
                delay = policy.backoff(attempt - 1)
                if last_status == 429 and retry_after is not None:
                    delay = max(delay, retry_after)
                logger.info("%s %s: %s, retrying in %.1fs", spec.category.value, spec.year, last_error, delay)
                self.sleep(delay)
        raise FetchError(
            f"{spec.category.value} {spec.year}: giving up after {policy.max_attempts} attempts ({last_error})",
            status=last_status,
            year=spec.year,
            category=spec.category,
        )

    # -- annual loops ---------------------------------------------------------

    def fetch_annual_series(self, category, year_start: int, year_end: int, policy: Optional[RetryPolicy] = None) -> AnnualSeries:
        category = Category(category)
        if year_start > year_end:
            raise QueryRangeError(f"year_start {year_start} is after year_end {year_end}")
        specs = [self.build_query(category, y) for y in range(year_start, year_end + 1)]

        counts = {}
        failure = None
        if self.parallelism == 1:
            for spec in specs:
                try:
                    counts[spec.year] = self.execute_count(spec, policy).total_results
                except (FetchError, ResponseParseError) as exc:
                    failure = (spec.year, exc)
                    break
        else:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                futures = {spec.year: pool.submit(self.execute_count, spec, policy) for spec in specs}
            for year in sorted(futures):
                exc = futures[year].exception()
                if exc is None:
                    counts[year] = futures[year].result().total_results
                elif failure is None:
                    failure = (year, exc)
                if exc is not None and not isinstance(exc, (FetchError, ResponseParseError)):
                    raise exc
        if failure is not None:
            year, exc = failure
            done = sorted(y for y in counts if y < year) if self.parallelism == 1 else sorted(counts)
            span = f"{done[0]}-{done[-1]}" if done else "none"
            err = FetchError(
                f"{category.value}: fetch failed for year {year} ({exc}); years fetched: {span}",
                status=getattr(exc, "status", None),
                year=year,
                category=category,
                fetched_years=done,
            )
            raise err from exc
        return AnnualSeries(category, tuple((y, counts[y]) for y in range(year_start, year_end + 1)))

    def fetch_dataset(self, year_start: int = 2004, year_end: int = 2024, policy: Optional[RetryPolicy] = None) -> Dataset:
        series = {
            cat: self.fetch_annual_series(cat, year_start, year_end, policy)
            for cat in (Category.PUBLICATIONS, Category.RETRACTIONS, Category.COVID_RETRACTIONS, Category.PREPRINTS)
        }
        return Dataset(
            series[Category.PUBLICATIONS],
            series[Category.RETRACTIONS],
            series[Category.COVID_RETRACTIONS],
            series[Category.PREPRINTS],
        )


def _retry_after(headers) -> Optional[float]:
    if not headers:
        return None
    value = headers.get("Retry-After") if hasattr(headers, "get") else None
    try:
        return float(value) if value is not None else None
    except (TypeError, ValueError):
        return None
