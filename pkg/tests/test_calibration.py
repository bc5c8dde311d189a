"""Consistency checks for the packaged empirical constants."""

import numpy as np
import pytest

from l0spline._calibrate import (
    calibrate_adaptive,
    calibrate_beta_ratio,
    calibrate_discrete_integral,
    calibrate_quad_form,
)
from l0spline.calibration import load_calibration
from l0spline.shape import coef_bound_statistic, sample_shape_member


@pytest.fixture(scope="module")
def cal():
    return load_calibration()


def test_all_sections_present(cal):
    for key in ("beta_ratio", "quad_form", "shape_coef",
                "discrete_integral", "adaptive"):
        assert key in cal
        assert cal[key]["seed"] > 0 or key == "shape_coef"


def test_margins_are_conservative(cal):
    br = cal["beta_ratio"]
    assert 0 < br["c_emp"] < br["min_observed"]
    qf = cal["quad_form"]
    assert qf["inv_c_emp"] > qf["max_observed"] > 0
    for cell in cal["shape_coef"]["cells"].values():
        assert cell["bound"] > cell["max_observed"] > 0


def test_beta_ratio_prefix_reproduces(cal):
    br = cal["beta_ratio"]
    redo = calibrate_beta_ratio(seed=br["seed"], instances=40)
    # instances are keyed individually, so a shorter run scans a subset
    assert redo["min_observed"] >= br["min_observed"] - 1e-15


def test_quad_form_prefix_reproduces(cal):
    qf = cal["quad_form"]
    redo = calibrate_quad_form(seed=qf["seed"], instances=40)
    assert redo["max_observed"] <= qf["max_observed"] + 1e-15


def test_discrete_integral_prefix_reproduces(cal):
    di = cal["discrete_integral"]
    redo = calibrate_discrete_integral(seed=di["seed"], instances=40)
    assert redo["ratio_min"] >= di["ratio_min"] - 1e-15
    assert redo["ratio_max"] <= di["ratio_max"] + 1e-15
    assert di["ratio_min"] < 1 < di["ratio_max"]


def test_adaptive_prefix_recovers_boxcar(cal):
    ad = cal["adaptive"]
    assert ad["hit_rate"] >= 0.8
    redo = calibrate_adaptive(seed=ad["seed"], reps=40, tau=ad["tau"])
    assert redo["hit_rate"] >= 0.8


def test_shape_bound_holds_on_fresh_members(cal):
    cells = cal["shape_coef"]["cells"]
    k = cal["shape_coef"]["k"]
    rng = np.random.default_rng(909)
    for d, n in [(1, 64), (2, 64)]:
        bound = cells[f"d={d},n={n}"]["bound"]
        for _ in range(60):
            theta, knots, j_star = sample_shape_member(rng, d, k, n)
            stat = coef_bound_statistic(theta, d, k, knots=knots)
            assert stat <= bound
