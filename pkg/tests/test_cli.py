import json
from pathlib import Path

import numpy as np
import pytest

from crossref_trends import cli
from crossref_trends.config import load_config
from crossref_trends.crossref_client import Category, ResponseCache, build_query
from crossref_trends.reporting import read_regression_summary
from crossref_trends.timeseries import read_timeseries_csv

OUTPUTS = [
    "analysis_time_series.csv",
    "regression_summary.csv",
    "regression_fits_detailed.csv",
    "correlations_summary.csv",
    "publications_chart.svg",
    "retractions_chart.svg",
    "preprints_chart.svg",
]


def write_fixture(directory, counts: dict, first=2004):
    cache = ResponseCache(directory)
    for cat, values in counts.items():
        for i, v in enumerate(values):
            spec = build_query(cat, first + i)
            cache.put(spec, {"status": "ok", "message": {"total-results": int(v)}}, "2025-01-01T00:00:00Z", spec.url())


@pytest.fixture
def synthetic_fixture(tmp_path):
    x = np.arange(21)
    counts = {
        Category.PUBLICATIONS: (1e5 * np.exp(0.08 * x)).round(),
        Category.RETRACTIONS: (500 * np.exp(0.06 * x) + 20 * np.sin(x)).round(),
        Category.COVID_RETRACTIONS: [0] * 16 + [2, 3, 4, 3, 1],
        Category.PREPRINTS: (100 + 5000 / (1 + np.exp(-0.5 * (x - 12)))).round(),
    }
    d = tmp_path / "fixtures"
    write_fixture(d, counts)
    return d


def run(argv):
    return cli.main([str(a) for a in argv])


def test_run_all_offline(synthetic_fixture, tmp_path, capsys):
    out = tmp_path / "out"
    assert run(["run-all", "--offline", "--fixtures", synthetic_fixture, "--out", out]) == 0
    assert sorted(p.name for p in out.iterdir()) == sorted(OUTPUTS)
    stdout = capsys.readouterr().out.splitlines()
    assert [line.split(":")[0] for line in stdout] == ["fetch", "fit", "correlate"]


def test_synthetic_exponential_fit(synthetic_fixture, tmp_path):
    out = tmp_path / "out"
    run(["run-all", "--offline", "--fixtures", synthetic_fixture, "--out", out])
    rows = read_regression_summary(out / "regression_summary.csv")
    pub_exp = [r for r in rows if r["Series"] == "Publications" and r["Model"] == "Exponential"][0]
    assert pub_exp["R2"] >= 0.999
    assert pub_exp["b"] == pytest.approx(0.08, rel=1e-3)


def test_idempotent(synthetic_fixture, tmp_path):
    out = tmp_path / "out"
    run(["run-all", "--offline", "--fixtures", synthetic_fixture, "--out", out])
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    run(["run-all", "--offline", "--fixtures", synthetic_fixture, "--out", out])
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first
    assert run(["correlate", "--out", out]) == 0
    assert (out / "correlations_summary.csv").read_bytes() == first["correlations_summary.csv"]


def test_years_flag(synthetic_fixture, tmp_path):
    out = tmp_path / "out"
    assert run(["fetch", "--offline", "--fixtures", synthetic_fixture, "--out", out, "--years", "2010:2015"]) == 0
    assert read_timeseries_csv(out / "analysis_time_series.csv").years == list(range(2010, 2016))


def test_fetch_requires_mailto(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("CROSSREF_MAILTO", raising=False)
    assert run(["fetch", "--out", tmp_path]) == cli.EXIT_CONFIG
    assert "contact email" in capsys.readouterr().err


def test_fetch_failure_writes_nothing(tmp_path):
    empty = tmp_path / "nothing"
    empty.mkdir()
    out = tmp_path / "out"
    code = run(["run-all", "--offline", "--fixtures", empty, "--out", out])
    assert code == cli.EXIT_FETCH
    assert not out.exists() or not any(p.suffix in (".csv", ".svg") for p in out.iterdir())


def test_fit_missing_input(tmp_path, capsys):
    assert run(["fit", "--out", tmp_path]) == cli.EXIT_FIT
    assert "run `crossref-trends fetch` first" in capsys.readouterr().err


def test_fit_empty_csv(tmp_path):
    (tmp_path / "analysis_time_series.csv").write_text("")
    assert run(["fit", "--out", tmp_path]) == cli.EXIT_FIT


def test_correlate_constant_series(tmp_path, capsys):
    rows = ["Year,Publications,Retractions,COVID_Retraction,Preprints"]
    rows += [f"{2004 + i},100,{10 + i},0,{5 + i * i}" for i in range(6)]
    (tmp_path / "analysis_time_series.csv").write_text("\n".join(rows) + "\n")
    assert run(["correlate", "--out", tmp_path]) == cli.EXIT_CORRELATE
    assert "Publications--Preprints" in capsys.readouterr().err


def test_report_regenerates(synthetic_fixture, tmp_path):
    out = tmp_path / "out"
    run(["fetch", "--offline", "--fixtures", synthetic_fixture, "--out", out])
    assert run(["report", "--out", out]) == 0
    assert sorted(p.name for p in out.iterdir()) == sorted(OUTPUTS)


def test_help_lists_exit_codes(capsys):
    with pytest.raises(SystemExit):
        run(["--help"])
    text = capsys.readouterr().out
    assert "exit codes" in text and "fetch stage failed" in text
    for name in ("fetch", "fit", "correlate", "report", "run-all"):
        assert name in text


def test_config_file_and_env(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[crossref]\nmailto = file@example.org\nrate_limit = 0.5\nmax_attempts = 3\n"
        "retraction_terms = Retraction; Withdrawn\n[run]\nyears = 2010:2020\nhorizon = 2035\n"
    )
    c = load_config(cfg, env={})
    assert (c.mailto, c.rate_limit, c.retry.max_attempts) == ("file@example.org", 0.5, 3)
    assert (c.year_start, c.year_end, c.horizon) == (2010, 2020, 2035)
    assert c.retraction_terms == ("Retraction", "Withdrawn")
    c = load_config(cfg, env={"CROSSREF_MAILTO": "env@example.org", "CROSSREF_CACHE_DIR": str(tmp_path)})
    assert c.mailto == "env@example.org" and c.cache_dir == tmp_path
    c = load_config(cfg, env={"CROSSREF_MAILTO": "env@example.org"}, mailto="flag@example.org", rate_limit=2.0)
    assert c.mailto == "flag@example.org" and c.rate_limit == 2.0


def test_live_fetch_with_fake_client(tmp_path):
    """The pipeline accepts an injected client; exercised without network."""

    class FakeSession:
        def get(self, url, timeout=None):
            class R:
                status_code = 200
                headers = {}

                def json(self_inner):
                    return {"message": {"total-results": 1234}}

            return R()

    config = load_config(None, env={}, mailto="x@example.org", out_dir=tmp_path, year_start=2004, year_end=2006,
                         cache_dir=tmp_path / "cache", rate_limit=0.0)
    client = cli.make_client(config, session=FakeSession())
    dataset = cli.cmd_fetch(config, client=client)
    assert dataset.publications.counts == [1234] * 3
    log = (tmp_path / "crossref_requests.log").read_text().splitlines()
    assert len(log) == 12
    cached = json.loads((tmp_path / "cache" / "Preprints_2005.json").read_text())
    assert cached["response"]["message"]["total-results"] == 1234


def test_snapshot_replay_reproduces_csv(tmp_path):
    fixtures = Path(__file__).resolve().parent.parent / "fixtures" / "snapshot"
    assert run(["fetch", "--offline", "--fixtures", fixtures, "--out", tmp_path]) == 0
    expected = (fixtures / "analysis_time_series.csv").read_bytes()
    assert (tmp_path / "analysis_time_series.csv").read_bytes() == expected
