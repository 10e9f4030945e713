import numpy as np
import pytest

from analogopt.core import StructuralError
from analogopt.fom import (
    AMP2_FOM,
    COMPARATOR_FOM,
    Direction,
    MetricSpec,
    Sign,
    bound_value,
    compute_fom,
    count_missed_specs,
    failed_metrics,
    hits_spec,
    normalize_metric,
)

# best-parameter-set rows used as recomputation oracles:
# (metrics, reported_fom, fom_tol, reported_missed)
AMP2_ROWS = [
    ({"gain": 27.12, "cmrr": 106.08, "gbw": 4.63, "pm": 97.76, "power": 27.02},
     1.89, 0.03, 1),
    ({"gain": 63.09, "cmrr": 79.57, "gbw": 7.22, "pm": 94.28, "power": 65.76},
     2.10, 0.03, 1),
    ({"gain": 60.83, "cmrr": 78.38, "gbw": 1.35, "pm": 92.29, "power": 19.79},
     3.52, 0.06, 0),
]
COMPARATOR_ROWS = [
    ({"gain": 55.47, "ugf": 8.42, "v_hys_err": 199.42, "v_offset": -3.95,
      "power": 77.70}, -3.38, 0.03, 2),
    ({"gain": 30.18, "ugf": 10.10, "v_hys_err": 186.33, "v_offset": 3.55,
      "power": 94.31}, -1.42, 0.03, 1),
    ({"gain": 40.52, "ugf": 13.66, "v_hys_err": 161.14, "v_offset": 7.36,
      "power": 121.37}, -1.35, 0.03, 1),
    ({"gain": 60.83, "ugf": 12.04, "v_hys_err": 159.83, "v_offset": -1.00,
      "power": 109.89}, 0.90, 0.03, 0),
]


def test_hits_spec_examples():
    gain = AMP2_FOM.metric("gain")
    assert not hits_spec(27.12, gain)
    assert hits_spec(60.0, gain)  # inclusive
    power = AMP2_FOM.metric("power")
    assert hits_spec(27.02, power)
    assert hits_spec(30.0, power)
    offset = COMPARATOR_FOM.metric("v_offset")
    assert hits_spec(-3.95, offset)
    assert not hits_spec(-25.0, offset)


def test_normalize_metric():
    gain = AMP2_FOM.metric("gain")
    assert normalize_metric(27.12, gain) == pytest.approx(-1.0)
    assert normalize_metric(60.0, gain) == pytest.approx(1.0)
    power = AMP2_FOM.metric("power")
    assert normalize_metric(0.0, power) == 0.0
    assert normalize_metric(65.76, power) == pytest.approx(80.0 / 30.0)
    offset = COMPARATOR_FOM.metric("v_offset")
    assert normalize_metric(-3.95, offset) == pytest.approx(3.95 / 20.0)


def test_failing_value_is_constant():
    gain = AMP2_FOM.metric("gain")
    rng = np.random.default_rng(0)
    expected = (gain.failed - gain.norm_min) / (gain.norm_max - gain.norm_min)
    for v in rng.uniform(-500.0, 59.999, size=100):
        assert normalize_metric(v, gain) == expected


def test_bound_value():
    assert bound_value(2.172, 2.0) == 2.0
    assert bound_value(0.463, 2.0) == 0.463
    assert bound_value(-1.0, 2.0) == -1.0  # lower side never clipped
    assert bound_value(5.0, None) == 5.0


@pytest.mark.parametrize("metrics,reported,tol,missed", AMP2_ROWS)
def test_amp2_rows_reproduce(metrics, reported, tol, missed):
    assert compute_fom(metrics, AMP2_FOM) == pytest.approx(reported, abs=tol)
    assert count_missed_specs(metrics, AMP2_FOM) == missed


@pytest.mark.parametrize("metrics,reported,tol,missed", COMPARATOR_ROWS)
def test_comparator_rows_reproduce(metrics, reported, tol, missed):
    assert compute_fom(metrics, COMPARATOR_FOM) == pytest.approx(reported, abs=tol)
    assert count_missed_specs(metrics, COMPARATOR_FOM) == missed


def test_all_failed_constant():
    # independent arithmetic over the failure constants and norm ranges
    expected = (-10 / 10) + (-60 / 60) + (-80 / 80) + (-180 / 45) - (80 / 30)
    assert compute_fom(failed_metrics(AMP2_FOM), AMP2_FOM) == pytest.approx(expected)
    assert expected == pytest.approx(-9.667, abs=1e-3)
    comp_expected = -1.0 - 1.0 - 2.0 - 2.0 - 2.0
    assert compute_fom(
        failed_metrics(COMPARATOR_FOM), COMPARATOR_FOM
    ) == pytest.approx(comp_expected)


def test_all_at_spec_misses_nothing():
    metrics = {m.name: m.spec for m in AMP2_FOM.metrics}
    assert count_missed_specs(metrics, AMP2_FOM) == 0


def test_missing_metric_is_structural():
    metrics = {"gain": 60.0}
    with pytest.raises(StructuralError):
        compute_fom(metrics, AMP2_FOM)
    with pytest.raises(StructuralError):
        count_missed_specs(metrics, AMP2_FOM)


def test_monotone_in_passing_metrics():
    rng = np.random.default_rng(1)
    base = {"gbw": 3.0, "gain": 70.0, "cmrr": 80.0, "pm": 65.0, "power": 20.0}
    for _ in range(200):
        metrics = dict(base)
        name = rng.choice(["gbw", "gain", "cmrr", "pm", "power"])
        spec = AMP2_FOM.metric(name)
        before = compute_fom(metrics, AMP2_FOM)
        bumped = dict(metrics)
        bumped[name] = metrics[name] + rng.uniform(0.0, 2.0)
        if spec.sign is Sign.MINUS and not hits_spec(bumped[name], spec):
            continue  # crossing the spec gate is allowed to jump
        after = compute_fom(bumped, AMP2_FOM)
        if spec.sign is Sign.PLUS:
            assert after >= before - 1e-12
        else:
            assert after <= before + 1e-12


def test_metric_spec_validation():
    with pytest.raises(ValueError):
        MetricSpec("m", Direction.AT_LEAST, spec=1.0, norm_min=1.0, norm_max=1.0,
                   failed=-1.0)
    with pytest.raises(ValueError):  # at_least failure constant above the spec
        MetricSpec("m", Direction.AT_LEAST, spec=1.0, norm_min=0.5, norm_max=2.0,
                   failed=1.5)
    with pytest.raises(ValueError):  # at_most failure constant below the spec
        MetricSpec("m", Direction.AT_MOST, spec=30.0, norm_min=0.0, norm_max=30.0,
                   failed=10.0)
    with pytest.raises(ValueError):
        MetricSpec("m", Direction.AT_LEAST, spec=1.0, norm_min=0.0, norm_max=2.0,
                   failed=-1.0, bound=0.0)
