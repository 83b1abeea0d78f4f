import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from quantir.errors import ConfigError
from quantir.forward import render_stack
from quantir.optics import OpticalConfig, ScanPlan
from quantir.reconstruct import ScalarImage
from quantir.sample import SpeckleModel, apply_speckle, gen_chip_contacts
from quantir.truncation import (SelectionSpec, frobenius_diff, frobenius_norm,
                                run_truncation_study, select_frames)

OPTICS = OpticalConfig()
LI = OPTICS.lambda_idler


@pytest.fixture(scope="module")
def chip_stack():
    s = apply_speckle(gen_chip_contacts(None, (32, 32), 5.0), SpeckleModel(seed=3), LI)
    return render_stack(s, OPTICS, ScanPlan.over_phase(LI, 64), psf=False)


def test_continuous_all_is_identity(chip_stack):
    sub = select_frames(chip_stack, SelectionSpec.continuous(64))
    np.testing.assert_array_equal(sub.frames, chip_stack.frames)
    np.testing.assert_array_equal(sub.z_positions, chip_stack.z_positions)


def test_gapped_one_keeps_even_frames(chip_stack):
    sub = select_frames(chip_stack, SelectionSpec.gapped(1))
    assert len(sub) == 32
    np.testing.assert_array_equal(sub.frames, chip_stack.frames[::2])
    np.testing.assert_array_equal(sub.z_positions, chip_stack.z_positions[::2])
    # equivalent z step doubles
    assert np.diff(sub.z_positions)[0] == pytest.approx(2 * np.diff(chip_stack.z_positions)[0])


def test_random_deterministic(chip_stack):
    a = select_frames(chip_stack, SelectionSpec.random(5, seed=17))
    b = select_frames(chip_stack, SelectionSpec.random(5, seed=17))
    assert a.extra["indices"] == b.extra["indices"]
    assert len(set(a.extra["indices"])) == 5
    assert a.extra["indices"] == sorted(a.extra["indices"])


@given(st.integers(1, 64), st.integers(0, 2 ** 40))
@settings(max_examples=40, deadline=None)
def test_selection_preserves_order_and_z(chip_stack, k, seed):
    sub = select_frames(chip_stack, SelectionSpec.random(k, seed))
    idx = sub.extra["indices"]
    assert idx == sorted(set(idx)) and len(idx) == k
    np.testing.assert_array_equal(sub.z_positions, chip_stack.z_positions[idx])
    np.testing.assert_array_equal(sub.frames, chip_stack.frames[idx])


def test_oversized_requests_rejected(chip_stack):
    with pytest.raises(ConfigError):
        select_frames(chip_stack, SelectionSpec.continuous(65))
    with pytest.raises(ConfigError):
        select_frames(chip_stack, SelectionSpec.random(65))


@pytest.mark.parametrize("kwargs", [
    dict(strategy="random"), dict(strategy="random", k=2, n=3), dict(strategy="gapped", gap=0),
    dict(strategy="gapped", gap=8), dict(strategy="continuous", n=0), dict(strategy="zigzag", n=1),
])
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        SelectionSpec(**kwargs)


def test_gap_range_configurable():
    assert SelectionSpec.gapped(12, max_gap=15).gap == 12


def test_frobenius_examples():
    assert frobenius_norm(np.zeros((4, 4))) == 0
    assert frobenius_norm(np.ones((10, 10))) == 10
    assert frobenius_norm(np.array([[3.0, 4.0]])) == 5
    img = ScalarImage(np.array([[3.0, 4.0]]), "variance")
    assert frobenius_norm(img) == 5


def test_frobenius_diff_basic():
    a = np.random.default_rng(0).random((5, 6))
    b = np.random.default_rng(1).random((5, 6))
    assert frobenius_diff(a, a) == 0
    assert frobenius_diff(a, b) == frobenius_diff(b, a)
    with pytest.raises(ConfigError):
        frobenius_diff(a, b[:, :5])


arrays = hnp.arrays(np.float64, (4, 5), elements=st.floats(-1e3, 1e3))


@given(arrays, arrays, arrays)
def test_triangle_inequality(a, b, c):
    assert frobenius_diff(a, c) <= frobenius_diff(a, b) + frobenius_diff(b, c) + 1e-9


@given(arrays, st.floats(-1e3, 1e3))
def test_homogeneity(a, k):
    assert frobenius_norm(k * a) == pytest.approx(abs(k) * frobenius_norm(a), rel=1e-9, abs=1e-300)


def test_study_full_stack_zero(chip_stack):
    rep = run_truncation_study(chip_stack, [SelectionSpec.continuous(64)])
    row = rep.rows[0]
    assert row["frobenius_diff"] == 0 and row["relative_diff"] == 0
    assert row["acquisition_seconds"] == pytest.approx(19.2)


def test_study_random_five_is_1p5_seconds(chip_stack):
    rep = run_truncation_study(chip_stack, [SelectionSpec.random(5, 1)])
    assert rep.rows[0]["acquisition_seconds"] == 1.5
    assert rep.rows[0]["frames_used"] == 5


def test_study_rows_in_order_and_errors_isolated(chip_stack):
    specs = [SelectionSpec.random(1, 0), SelectionSpec.gapped(3), SelectionSpec.continuous(80)]
    rep = run_truncation_study(chip_stack, specs)
    assert [r["label"] for r in rep.rows] == ["random-1", "gapped-3", "continuous-80"]
    assert rep.rows[0]["error"] and "2 frames" in rep.rows[0]["error"]
    assert rep.rows[1]["error"] is None and rep.rows[1]["frames_used"] == 16
    assert rep.rows[2]["error"] is not None


def test_study_relative_diff_definition(chip_stack):
    rep = run_truncation_study(chip_stack, [SelectionSpec.gapped(5)])
    row = rep.rows[0]
    assert row["relative_diff"] == pytest.approx(row["frobenius_diff"] / rep.baseline_norm)


def test_study_deterministic(chip_stack):
    specs = [SelectionSpec.random(k, 7) for k in (10, 5, 2)] + [SelectionSpec.gapped(2)]
    a = run_truncation_study(chip_stack, specs, repeats=5)
    b = run_truncation_study(chip_stack, specs, repeats=5)
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv() and a.to_gnuplot() == b.to_gnuplot()
    assert len(a.rows) == 16


def test_monotone_in_expectation(chip_stack):
    specs = [SelectionSpec.random(k, 11) for k in (3, 6, 12, 24, 48)]
    groups = run_truncation_study(chip_stack, specs, repeats=60).groups()
    means = [g["mean_relative_diff"] for g in groups]
    errs = [g["stderr_relative_diff"] for g in groups]
    for i in range(len(means) - 1):
        assert means[i + 1] <= means[i] + max(errs[i], errs[i + 1])


def test_report_serializations(chip_stack):
    rep = run_truncation_study(chip_stack, [SelectionSpec.random(5, 0), SelectionSpec.gapped(1)],
                               repeats=3)
    data = json.loads(rep.to_json())
    assert data["baseline_norm"] == rep.baseline_norm
    assert {g["label"] for g in data["summary"]} == {"random-5", "gapped-1"}
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("label,strategy,param") and len(lines) == 5
    dat = [l for l in rep.to_gnuplot().splitlines() if not l.startswith("#")]
    assert len(dat) == 2
    g = {g["label"]: g for g in rep.groups()}
    assert g["random-5"]["repeats"] == 3
    assert g["random-5"]["stderr_relative_diff"] == pytest.approx(
        g["random-5"]["std_relative_diff"] / math.sqrt(3))
