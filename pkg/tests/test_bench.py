import numpy as np
import pytest

from stencil_lab.bench import (BenchConfig, ConfigError, Report, StrategyRunner,
                               format_csv_rows, mesh_digest, parse_cost,
                               parse_csv, run_benchmark, run_verification,
                               serial_convergence_budget, verify_convergence,
                               verify_deps, verify_oracle, verify_races,
                               write_csv, CSV_HEADER)
from stencil_lab.kernels import FD5, CostModel
from stencil_lab.mesh import make_mesh
from stencil_lab.taskrt import Schedule


# -- configuration -----------------------------------------------------------

def test_config_rejects_dim_mismatch():
    cfg = BenchConfig(dim=3, stencil="fe9")
    with pytest.raises(ConfigError, match="fe9"):
        cfg.validated()


def test_config_rejects_bad_values():
    for kwargs in (dict(stencil="fd9"), dict(strategy="zigzag"),
                   dict(threads=(0,)), dict(sizes=()), dict(sweeps=0),
                   dict(reps=0), dict(chunk=0), dict(dim=4)):
        with pytest.raises(ConfigError):
            BenchConfig(**kwargs).validated()


def test_config_canonicalises_names():
    cfg = BenchConfig(strategy="hyb_depend", stencil="FD5").validated()
    assert cfg.strategy == "hyb-depend"
    assert cfg.stencil == "fd5"


def test_parse_cost_forms():
    assert parse_cost("const:100") == CostModel("const", 100)
    assert parse_cost("ramp") == CostModel("ramp")
    for bad in ("const", "const:x", "linear:3"):
        with pytest.raises(ConfigError):
            parse_cost(bad)


# -- benchmark runs ----------------------------------------------------------

def test_run_benchmark_serial_point():
    cfg = BenchConfig(sizes=(6,), sweeps=4, reps=3, strategy="serial")
    results = run_benchmark(cfg)
    assert len(results) == 1
    r = results[0]
    assert len(r.seconds) == 3
    assert all(s > 0 for s in r.seconds)
    assert r.cell_updates == 4 * 36
    assert r.common_digest() != "mixed"     # deterministic strategy


def test_run_benchmark_covers_size_thread_grid():
    cfg = BenchConfig(sizes=(4, 6), threads=(1, 2), strategy="colouring",
                      sweeps=2, reps=1)
    results = run_benchmark(cfg)
    assert {(r.n, r.threads) for r in results} == {(4, 1), (4, 2), (6, 1), (6, 2)}
    # colouring digest is identical at every worker count
    assert len({r.digests[0] for r in results if r.n == 6}) == 1


def test_deterministic_strategies_have_stable_digests():
    for strat in ("serial", "colouring", "hyb-sync"):
        cfg = BenchConfig(sizes=(5,), threads=(2,), strategy=strat,
                          sweeps=3, reps=3)
        (res,) = run_benchmark(cfg)
        assert len(set(res.digests)) == 1, strat


def test_cell_update_counts_match_between_strategies():
    serial = run_benchmark(BenchConfig(sizes=(4,), strategy="serial",
                                       sweeps=5, reps=1))[0]
    col = run_benchmark(BenchConfig(sizes=(4,), threads=(1,),
                                    strategy="colouring", sweeps=5, reps=1))[0]
    assert serial.cell_updates == col.cell_updates == 80


def test_run_to_run_stability_is_loose_but_bounded():
    cfg = BenchConfig(sizes=(16,), strategy="serial", sweeps=1000, reps=3)
    (res,) = run_benchmark(cfg)
    assert res.max_seconds() <= 3 * res.min_seconds()


def test_mesh_digest_tracks_content():
    a = make_mesh(2, 5, seed=1)
    b = make_mesh(2, 5, seed=1)
    assert mesh_digest(a) == mesh_digest(b)
    b.values[b.flat_index((1, 1))] += 1e-14
    assert mesh_digest(a) != mesh_digest(b)


# -- CSV ----------------------------------------------------------------------

def test_csv_roundtrip(tmp_path):
    cfg = BenchConfig(sizes=(4, 5), threads=(1, 2), strategy="hyb-sync",
                      sweeps=2, reps=2, schedule=Schedule("dynamic", 2),
                      cost=CostModel("const", 3))
    results = run_benchmark(cfg)
    rows = format_csv_rows(results)
    assert rows[0] == CSV_HEADER
    parsed = parse_csv(rows)
    assert len(parsed) == len(results)
    by_key = {(r.n, r.threads): r for r in parsed}
    for r in results:
        p = by_key[(r.n, r.threads)]
        assert p.seconds == r.seconds          # repr round-trips floats exactly
        assert p.digests == r.digests
        assert p.cost == "const:3" and p.schedule == "dynamic:2"
    path = tmp_path / "out.csv"
    write_csv(path, results)
    assert parse_csv(path.read_text())[0].seconds == results[0].seconds


def test_csv_summary_rows_present():
    results = run_benchmark(BenchConfig(sizes=(4,), strategy="serial",
                                        sweeps=1, reps=2))
    rows = format_csv_rows(results)
    assert sum(1 for r in rows if ",median," in r) == 1
    assert len(rows) == 1 + 2 + 1   # header + reps + summary


def test_parse_csv_rejects_garbage():
    with pytest.raises(ValueError):
        parse_csv("not,a,header\n1,2,3")


# -- verification suites -------------------------------------------------------

def test_verify_deps_passes():
    report = verify_deps()
    assert report.ok
    assert len(report.lines) == 40   # (6+4) sizes x 2 orders x ... per kind


def test_verify_oracle_passes():
    report = verify_oracle(threads=(2,), n2=6, n3=4, sweeps=2)
    assert report.ok


def test_verify_races_small_matrix_passes():
    report = verify_races(reps=2, threads=(2,), sizes=(6,),
                          kind_names=("fd5",))
    assert report.ok, "\n".join(report.lines)


def test_verify_races_fault_injection_fails():
    report = verify_races(fault=True)
    assert not report.ok


def test_verify_convergence_small_case():
    report = verify_convergence(threads=2, cases=(("fd5", 9),))
    assert report.ok, "\n".join(report.lines)
    assert any("serial budget" in ln for ln in report.lines)


def test_serial_convergence_budget_is_positive():
    assert serial_convergence_budget(FD5, 9) > 10


def test_run_verification_dispatch():
    assert run_verification("deps").ok
    with pytest.raises(ConfigError):
        run_verification("nonsense")


def test_report_extend_merges():
    a = Report(True, ["x"])
    a.extend(Report(False, ["y"]))
    assert not a.ok and a.lines == ["x", "y"]


# -- runner surface -------------------------------------------------------------

def test_runner_serial_tracing():
    with StrategyRunner(2, 4, "fd5", CostModel("const", 0), "serial") as r:
        r.reinit()
        r.start_trace(16)
        r.sweep()
        tr = r.stop_trace()
    assert len(tr) == 16
    assert set(tr.workers.tolist()) == {0}


def test_runner_rejects_dim_mismatch():
    with pytest.raises(ConfigError):
        StrategyRunner(3, 4, "fd5", CostModel("const", 0), "serial")
