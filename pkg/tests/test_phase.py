import numpy as np
import pytest

from hypfree.errors import BracketError, ConfigurationError
from hypfree.geometry import Space
from hypfree.phase import (HEADER, PhaseConfig, blow_up_threshold, consistent_verdicts, family_potential,
                           row_seed, sweep, threshold_estimate, threshold_window)
from hypfree.potentials import Regime, classify_regime

FAST = dict(methods=("ball_scan", "fixed_point"))


@pytest.fixture(scope="module")
def linear_table():
    return sweep(PhaseConfig(**FAST))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        PhaseConfig(family="cubic")
    with pytest.raises(ConfigurationError):
        PhaseConfig(methods=("oracle",))
    with pytest.raises(ConfigurationError):
        PhaseConfig(threads=0)


def test_family_potentials():
    assert family_potential("linear", 2.0, 4.0).slope == 4.0
    assert family_potential("log", 3.0, 1.0).a1 == 3.0
    h = family_potential("log_linear", 5.0, 1.0)
    assert classify_regime(h, 2, 1.0, 1.0).tag == Regime.BLOW_UP
    with pytest.raises(ConfigurationError):
        family_potential("cubic", 1.0, 1.0)


def test_consistency_sets():
    sp = Space(2, 1.0)
    assert consistent_verdicts(family_potential("linear", 1.5, 1.0), sp, "particles") is None
    assert consistent_verdicts(family_potential("linear", 0.5, 1.0), sp, "fixed_point") == {"MassEscape"}
    assert consistent_verdicts(family_potential("linear", 3.0, 1.0), sp, "ball_scan") == {"BoundedBelow"}
    # a pure log above 2n may either collapse or leak to infinity
    assert consistent_verdicts(family_potential("log", 5.0, 1.0), sp, "fixed_point") == {"Collapse", "MassEscape"}
    assert consistent_verdicts(family_potential("log_linear", 5.0, 1.0), sp, "fixed_point") == {"Collapse"}


def test_linear_sweep_rows(linear_table):
    rows = linear_table.rows
    assert [r.coef for r in rows] == [0.25 * k for k in range(1, 13)]
    for r in rows:
        assert r.agree, (r.coef, r.verdicts, r.errors)
        if r.coef < 1:
            assert r.verdicts["fixed_point"] == "MassEscape" and r.verdicts["ball_scan"] == "SpreadDiverges"
        if r.coef > 2:
            assert r.verdicts["fixed_point"] == "Converged" and r.verdicts["ball_scan"] == "BoundedBelow"


def test_log_sweep_collapses_above_2n():
    table = sweep(PhaseConfig(family="log", coefs=(1.0, 2.0, 3.0, 5.0, 6.0), **FAST))
    for r in table.rows:
        assert r.agree
        if r.coef > 4:
            assert r.verdicts["ball_scan"] == "BlowUpDiverges"


def test_log_linear_sweep_collapses_above_2n():
    table = sweep(PhaseConfig(family="log_linear", coefs=(2.0, 5.0, 6.0), **FAST))
    verdicts = {r.coef: r.verdicts for r in table.rows}
    assert all(r.agree for r in table.rows)
    assert verdicts[5.0]["fixed_point"] == verdicts[6.0]["fixed_point"] == "Collapse"
    assert verdicts[2.0]["fixed_point"] == "Converged"


def test_empty_methods_gives_analytic_column(tmp_path):
    table = sweep(PhaseConfig(methods=(), coefs=(0.5, 1.5, 3.0)))
    assert [r.analytic for r in table.rows] == ["NonexistenceSpreading", "Undetermined", "ExistenceHomogeneous"]
    path = tmp_path / "phase.csv"
    table.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(HEADER)
    assert lines[1] == "2,1.0,linear,0.5,NonexistenceSpreading,,,,true"


def test_sweep_deterministic_and_thread_independent(tmp_path):
    cfg = PhaseConfig(coefs=(0.5, 3.0), methods=("particles",), N=20, steps=40)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    sweep(cfg).write_csv(a)
    sweep(PhaseConfig(coefs=(0.5, 3.0), methods=("particles",), N=20, steps=40, threads=2)).write_csv(b)
    assert a.read_bytes() == b.read_bytes()


def test_row_seed_spreads_rows():
    assert row_seed(0, 0) != row_seed(0, 1)
    assert row_seed(5, 3) == row_seed(5, 3)


def test_windows():
    assert threshold_window(2) == (1.0, 2.0)
    assert threshold_window(3) == (2.0, 4.0)
    assert blow_up_threshold(2) == 4.0


def test_spreading_threshold_in_window():
    est = threshold_estimate("linear", "fixed_point", (0.5, 3.0))
    lo, hi = threshold_window(2)
    assert lo <= est.estimate <= hi
    assert est.hi - est.lo == pytest.approx(2.5 / 2 ** 8)
    assert {est.lo_verdict, est.hi_verdict} == {"MassEscape", "Converged"}


def test_blow_up_threshold_near_2n():
    est = threshold_estimate("log", "ball_scan", (3.0, 6.0))
    assert abs(est.estimate - 4.0) <= 0.25


def test_degenerate_bracket():
    with pytest.raises(BracketError):
        threshold_estimate("linear", "ball_scan", (2.5, 3.0))
    with pytest.raises(BracketError):
        threshold_estimate("linear", "ball_scan", (3.0, 2.5))


def test_error_rows_are_recorded(monkeypatch):
    import hypfree.phase as phase
    from hypfree.errors import NumericalDegeneracyError

    def boom(*args, **kwargs):
        raise NumericalDegeneracyError("synthetic failure")

    monkeypatch.setattr(phase, "fixed_point", boom)
    table = sweep(PhaseConfig(coefs=(3.0,), methods=("fixed_point",)))
    row = table.rows[0]
    assert row.verdicts["fixed_point"] == "Error" and not row.agree
    assert "synthetic failure" in row.errors["fixed_point"]
    assert np.isfinite(row.coef)
