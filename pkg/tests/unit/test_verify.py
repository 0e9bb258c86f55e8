import pytest

from memlab import InvalidInputError
from memlab.verify import SUITES, CheckResult, list_suites, run_suites


def test_list_suites():
    names = [name for name, _ in list_suites()]
    assert names == list(SUITES)
    assert {"geometry", "nullforms", "solver", "energy", "scaling"} <= set(names)
    assert all(description for _, description in list_suites())


def test_identity_suites_pass():
    reports = run_suites(["geometry", "nullforms", "scaling"], samples=20)
    assert [r.name for r in reports] == ["geometry", "nullforms", "scaling"]
    for report in reports:
        assert report.checks
        assert report.passed, report.failures()


def test_tightened_tolerance_is_flagged():
    (report,) = run_suites(["scaling"], tolerance_scale=1e-16)
    assert not report.passed
    assert {c.name for c in report.failures()} >= {"perturbed power law slope"}


def test_same_seed_same_values():
    a = run_suites(["geometry"], seed=3, samples=10)[0]
    b = run_suites(["geometry"], seed=3, samples=10)[0]
    assert [c.value for c in a.checks] == [c.value for c in b.checks]


def test_unknown_suite():
    with pytest.raises(InvalidInputError, match="bogus"):
        run_suites(["bogus"])


def test_check_result_verdicts():
    assert CheckResult("s", "a", 1e-13, 1e-12).passed
    assert not CheckResult("s", "a", float("nan"), 1.0).passed
    assert CheckResult("s", "b", 3.9, 3.5, "min").passed
    assert not CheckResult("s", "b", 3.0, 3.5, "min").passed


def test_suites_carry_their_own_draw_counts():
    assert SUITES["geometry"][2] == 10_000
    assert SUITES["frame"][2] == 1000
    assert SUITES["nullforms"][2] == 1000


def test_geometry_at_full_count_covers_null_components():
    (report,) = run_suites(["geometry"])
    names = {c.name for c in report.checks}
    assert {"g^(u u) closed form", "g^(ub ub) closed form", "modified incoming generator norm"} <= names
    assert report.passed, report.failures()


def test_gauge_and_energy_suites_pass():
    reports = run_suites(["gauge", "energy"], samples=20)
    for report in reports:
        assert report.passed, report.failures()
    energy = {c.name: c for c in reports[1].checks}
    assert energy["radial energy identity order (dt)"].value >= 1.0
