"""Run configuration: defaults, INI config file, environment, then CLI flags.

Config file format (all keys optional)::

    [crossref]
    mailto = you@example.org
    rate_limit = 1.0            ; requests per second, 0 disables
    max_attempts = 5
    base_backoff = 1.0          ; seconds
    backoff_factor = 2.0
    timeout = 30                ; per-request timeout, seconds
    parallelism = 1
    cache_dir = .crossref_cache
    fixture_dir =
    log_file =                  ; defaults to <out>/crossref_requests.log
    retraction_terms = Retraction; Retracted; Retraction Notice; Notice of Retraction
    covid_terms = COVID-19; SARS-CoV-2; Coronavirus

    [run]
    years = 2004:2024
    horizon = 2030
    out = output
    offline = false

``CROSSREF_MAILTO`` and ``CROSSREF_CACHE_DIR`` override the file.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .crossref_client import COVID_TERMS, RETRACTION_TERMS, YEAR_MAX, YEAR_MIN, RetryPolicy
from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "parse_year_range", "ENV_MAILTO", "ENV_CACHE_DIR"]

ENV_MAILTO = "CROSSREF_MAILTO"
ENV_CACHE_DIR = "CROSSREF_CACHE_DIR"


@dataclass(frozen=True)
class RunConfig:
    mailto: Optional[str] = None
    year_start: int = 2004
    year_end: int = 2024
    horizon: int = 2030
    cache_dir: Optional[Path] = None
    fixture_dir: Optional[Path] = None
    rate_limit: float = 1.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    parallelism: int = 1
    out_dir: Path = Path("output")
    offline: bool = False
    log_file: Optional[Path] = None
    retraction_terms: tuple = RETRACTION_TERMS
    covid_terms: tuple = COVID_TERMS

    def validate(self, *, needs_network: bool = True) -> "RunConfig":
        if not (YEAR_MIN <= self.year_start <= self.year_end <= YEAR_MAX):
            raise ConfigError(
                f"year range {self.year_start}:{self.year_end} must lie within {YEAR_MIN}:{YEAR_MAX}"
            )
        if self.horizon <= self.year_end:
            raise ConfigError(f"horizon {self.horizon} must be after the last year {self.year_end}")
        if not needs_network:
            return self
        if self.offline:
            dirs = [d for d in (self.fixture_dir, self.cache_dir) if d is not None]
            if not any(Path(d).is_dir() for d in dirs):
                raise ConfigError("offline mode needs an existing fixture or cache directory")
        elif not self.mailto:
            raise ConfigError(
                f"a contact email is required for live requests (--mailto, {ENV_MAILTO} or config file)"
            )
        return self

    @property
    def request_log(self) -> Path:
        return self.log_file if self.log_file is not None else self.out_dir / "crossref_requests.log"


def parse_year_range(text: str):
    try:
        start, end = (int(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"year range must look like 2004:2024, got {text!r}") from None
    if start > end:
        raise ConfigError(f"year range {text!r} is reversed")
    return start, end


def _terms(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(";") if t.strip())


def _path(text: str) -> Optional[Path]:
    return Path(text) if text.strip() else None


def load_config(path=None, env=None, **overrides) -> RunConfig:
    """Build a :class:`RunConfig`; keyword overrides that are ``None`` are ignored."""
    env = os.environ if env is None else env
    values = {}
    retry = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            if parser.has_section("crossref"):
                sec = parser["crossref"]
                if sec.get("mailto", "").strip():
                    values["mailto"] = sec["mailto"].strip()
                if "rate_limit" in sec:
                    values["rate_limit"] = sec.getfloat("rate_limit")
                if "parallelism" in sec:
                    values["parallelism"] = sec.getint("parallelism")
                for key in ("cache_dir", "fixture_dir", "log_file"):
                    if key in sec:
                        values[key] = _path(sec[key])
                if "retraction_terms" in sec:
                    values["retraction_terms"] = _terms(sec["retraction_terms"])
                if "covid_terms" in sec:
                    values["covid_terms"] = _terms(sec["covid_terms"])
                for key, name, conv in (
                    ("max_attempts", "max_attempts", int),
                    ("base_backoff", "base_backoff", float),
                    ("backoff_factor", "backoff_factor", float),
                    ("timeout", "per_request_timeout", float),
                ):
                    if key in sec:
                        retry[name] = conv(sec[key])
            if parser.has_section("run"):
                sec = parser["run"]
                if "years" in sec:
                    values["year_start"], values["year_end"] = parse_year_range(sec["years"])
                if "horizon" in sec:
                    values["horizon"] = sec.getint("horizon")
                if "out" in sec:
                    values["out_dir"] = Path(sec["out"])
                if "offline" in sec:
                    values["offline"] = sec.getboolean("offline")
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    if env.get(ENV_MAILTO):
        values["mailto"] = env[ENV_MAILTO]
    if env.get(ENV_CACHE_DIR):
        values["cache_dir"] = Path(env[ENV_CACHE_DIR])

    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("max_attempts", "base_backoff", "backoff_factor", "per_request_timeout"):
            retry[key] = value
        else:
            values[key] = value
    cfg = RunConfig(**values)
    if retry:
        cfg = replace(cfg, retry=RetryPolicy(**{**_policy_dict(cfg.retry), **retry}))
    if cfg.cache_dir is None and not cfg.offline:
        cfg = replace(cfg, cache_dir=Path(".crossref_cache"))
    return cfg


def _policy_dict(policy: RetryPolicy) -> dict:
    return {
        "max_attempts": policy.max_attempts,
        "base_backoff": policy.base_backoff,
        "backoff_factor": policy.backoff_factor,
        "retry_statuses": policy.retry_statuses,
        "per_request_timeout": policy.per_request_timeout,
    }
