"""Command-line entry point: ``crossref-trends <stage> [options]``."""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

from .config import RunConfig, load_config, parse_year_range
from .crossref_client import CrossrefClient
from .errors import ConfigError, CrossrefTrendsError, FetchError, ResponseParseError
from .growth import fit_all_models
from .reporting import (
    CORRELATIONS_FILENAME,
    FITS_DETAILED_FILENAME,
    REGRESSION_SUMMARY_FILENAME,
    chart_spec_from_fits,
    render_chart,
    write_correlations_summary,
    write_fits_detailed,
    write_regression_summary,
)
from .stats import run_all_pairs
from .timeseries import TIMESERIES_FILENAME, Dataset, read_timeseries_csv, write_timeseries_csv

logger = logging.getLogger("crossref_trends")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_FETCH = 3
EXIT_FIT = 4
EXIT_CORRELATE = 5

EXIT_CODES_HELP = """\
exit codes:
  0  success
  1  unexpected error
  2  usage or configuration error
  3  fetch stage failed
  4  fit stage failed
  5  correlate stage failed
"""


class StageError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@contextmanager
def _staged_outputs(out_dir: Path):
    """Yield a scratch directory whose files are moved into ``out_dir`` on success."""
    out_dir.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".stage-", dir=out_dir))
    try:
        yield scratch
        for item in sorted(scratch.iterdir()):
            os.replace(item, out_dir / item.name)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def _load_dataset(config: RunConfig, code: int) -> Dataset:
    path = config.out_dir / TIMESERIES_FILENAME
    try:
        return read_timeseries_csv(path)
    except FileNotFoundError:
        raise StageError(code, f"{path} not found; run `crossref-trends fetch` first") from None
    except CrossrefTrendsError as exc:
        raise StageError(code, f"{path}: {exc}") from exc


def make_client(config: RunConfig, **kwargs) -> CrossrefClient:
    return CrossrefClient(
        mailto=config.mailto,
        policy=config.retry,
        rate_limit=config.rate_limit,
        cache_dir=config.cache_dir,
        fixture_dir=config.fixture_dir,
        offline=config.offline,
        log_path=config.request_log,
        parallelism=config.parallelism,
        retraction_terms=config.retraction_terms,
        covid_terms=config.covid_terms,
        **kwargs,
    )


def cmd_fetch(config: RunConfig, client=None) -> Dataset:
    config.validate()
    client = client or make_client(config)
    try:
        dataset = client.fetch_dataset(config.year_start, config.year_end)
    except (FetchError, ResponseParseError) as exc:
        cat = getattr(exc, "category", None)
        where = f" [{cat.value} {exc.year}]" if cat is not None and getattr(exc, "year", None) else ""
        raise StageError(EXIT_FETCH, f"fetch failed{where}: {exc}") from exc
    with _staged_outputs(config.out_dir) as scratch:
        write_timeseries_csv(dataset, scratch / TIMESERIES_FILENAME)
    print(f"fetch: {len(dataset.years)} years x 4 categories -> {config.out_dir / TIMESERIES_FILENAME}")
    return dataset


def fit_dataset(dataset: Dataset, horizon: int) -> dict:
    """Fit the three growth models to publications, retractions and preprints."""
    return {
        series.label: fit_all_models(series, horizon_year=horizon)
        for series in (dataset.publications, dataset.retractions, dataset.preprints)
    }


def cmd_fit(config: RunConfig) -> dict:
    config.validate(needs_network=False)
    dataset = _load_dataset(config, EXIT_FIT)
    try:
        fits = fit_dataset(dataset, config.horizon)
    except CrossrefTrendsError as exc:
        raise StageError(EXIT_FIT, f"fit failed: {exc}") from exc
    flat = [fit for group in fits.values() for fit in group]
    for fit in flat:
        if not fit.converged:
            logger.warning("%s %s fit did not converge; row flagged", fit.series, fit.kind.value)
    covid = dataset.covid_retractions.points
    with _staged_outputs(config.out_dir) as scratch:
        write_regression_summary(flat, scratch / REGRESSION_SUMMARY_FILENAME)
        write_fits_detailed(flat, scratch / FITS_DETAILED_FILENAME)
        for label, group in fits.items():
            bars = covid if label == "Retractions" else None
            render_chart(chart_spec_from_fits(label, group, scratch, bars=bars))
    logistic = {label: group[-1] for label, group in fits.items()}
    parts = ", ".join(f"{k} logistic R2={v.r_squared:.3f}" for k, v in logistic.items())
    print(f"fit: {len(flat)} fits, 3 charts ({parts})")
    return fits


def cmd_correlate(config: RunConfig) -> list:
    config.validate(needs_network=False)
    dataset = _load_dataset(config, EXIT_CORRELATE)
    try:
        results = run_all_pairs(dataset)
    except CrossrefTrendsError as exc:
        raise StageError(EXIT_CORRELATE, f"correlate failed: {exc}") from exc
    with _staged_outputs(config.out_dir) as scratch:
        write_correlations_summary(results, scratch / CORRELATIONS_FILENAME)
    first = results[0]
    print(f"correlate: {len(results)} pairs ({first.pair.label} r={first.pearson_r:.3f})")
    return results


def cmd_report(config: RunConfig) -> None:
    cmd_fit(config)
    cmd_correlate(config)


def cmd_run_all(config: RunConfig, client=None) -> None:
    cmd_fetch(config, client=client)
    cmd_fit(config)
    cmd_correlate(config)


COMMANDS = {
    "fetch": cmd_fetch,
    "fit": cmd_fit,
    "correlate": cmd_correlate,
    "report": cmd_report,
    "run-all": cmd_run_all,
}

_HELP = {
    "fetch": "harvest the four annual count series into analysis_time_series.csv",
    "fit": "fit growth models; write regression CSVs and charts",
    "correlate": "write correlations_summary.csv for the four series pairs",
    "report": "fit + correlate from an existing analysis_time_series.csv",
    "run-all": "fetch, fit and correlate in sequence",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="INI config file")
    common.add_argument("--years", metavar="A:B", help="inclusive year range (default 2004:2024)")
    common.add_argument("--horizon", type=int, metavar="Y", help="forecast horizon year (default 2030)")
    common.add_argument("--offline", action="store_true", default=None, help="never touch the network")
    common.add_argument("--fixtures", metavar="DIR", help="recorded responses to replay")
    common.add_argument("--cache", metavar="DIR", help="response cache directory")
    common.add_argument("--out", metavar="DIR", help="output directory (default ./output)")
    common.add_argument("--mailto", metavar="EMAIL", help="contact address sent to CrossRef")
    common.add_argument("--rate-limit", type=float, metavar="N", help="max requests per second (default 1)")
    common.add_argument("--parallelism", type=int, metavar="N", help="concurrent per-year requests (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="crossref-trends",
        description="Harvest CrossRef counts and model publication, retraction and preprint growth.",
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sub.add_parser(
            name,
            parents=[common],
            help=_HELP[name],
            description=_HELP[name],
            epilog=EXIT_CODES_HELP,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
    return parser


def config_from_args(args) -> RunConfig:
    years = parse_year_range(args.years) if args.years else (None, None)
    return load_config(
        args.config,
        mailto=args.mailto,
        year_start=years[0],
        year_end=years[1],
        horizon=args.horizon,
        cache_dir=Path(args.cache) if args.cache else None,
        fixture_dir=Path(args.fixtures) if args.fixtures else None,
        out_dir=Path(args.out) if args.out else None,
        rate_limit=args.rate_limit,
        parallelism=args.parallelism,
        offline=args.offline,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = config_from_args(args)
        COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CrossrefTrendsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
