"""Acceptance gate: every criterion at its stated sample size and tolerance.

Each test prints one ``[PASS]`` / ``[FAIL]`` / ``[SKIP]`` line for its
criterion, followed by the individual checks behind it. Criteria that the
model cannot meet are run as stated and left failing; the reasons are in the
decisions ledger kept next to the package.
"""

import functools

import pytest

from thzmc.cli import default_config
from thzmc.validation import CRITERIA, _timed, check_reference_numbers, check_trends


@functools.lru_cache(maxsize=None)
def criterion(key):
    limit, fn = CRITERIA[key]
    return tuple(_timed(key, limit, lambda: fn(default_config(), False)))


def report(label, checks, capsys):
    scored = [c for c in checks if not (c.skipped or c.info)]
    if not scored:
        status = "SKIP"
    else:
        status = "PASS" if all(c.passed for c in scored) else "FAIL"
    with capsys.disabled():
        print(f"\n[{status}] criterion {label}")
        for c in checks:
            print("    " + c.line())
    failed = [c.line() for c in scored if not c.passed]
    if status == "SKIP":
        pytest.skip(checks[0].detail if checks else "nothing to check")
    assert not failed, "\n".join(failed)


def pick(key, label):
    return [c for c in criterion(key) if c.criterion == label or c.name == "runtime"]


@functools.lru_cache(maxsize=None)
def untimed(fn):
    # criterion 6 has no runtime bound; its two halves are reported separately
    return tuple(fn(default_config(), 200_000))


def test_criterion_1_closed_form_cross_check(capsys):
    report("1 closed form vs quadrature", criterion("1"), capsys)


def test_criterion_2_renewal_identity(capsys):
    report("2 renewal identity", criterion("2"), capsys)


def test_criterion_3_normalization(capsys):
    report("3 normalization suite", criterion("3"), capsys)


def test_criterion_4_snapshot_oracle(capsys):
    report("4 snapshot vs analytic connection probability", criterion("4"), capsys)


def test_criterion_5_temporal_cmc(capsys):
    report("5 temporal oracle, C-MC", pick("5", "5 C-MC"), capsys)


def test_criterion_5_temporal_rmc(capsys):
    report("5 temporal oracle, R-MC", pick("5", "5 R-MC"), capsys)


def test_criterion_6_reference_numbers(capsys):
    report("6 reference numbers", untimed(check_reference_numbers), capsys)


def test_criterion_6_trends(capsys):
    report("6 trends on the bundled spectrum", untimed(check_trends), capsys)


def test_criterion_7_determinism(capsys):
    report("7 determinism", criterion("7"), capsys)
