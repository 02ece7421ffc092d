import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sdvi.core import (Box, DimensionError, NonFiniteError, NonnegOrthant, ProblemConstants,
                       ProductSet, SdviProblem, WholeSpace, distance_to_set, project)

CIRCUIT_BOX = Box([-10, -10, 0, 0], [10, 10, 20, 20])


def test_project_box_clamps():
    np.testing.assert_array_equal(project(CIRCUIT_BOX, [12, -3, -5, 25]), [10, -3, 0, 20])


def test_project_orthant():
    np.testing.assert_array_equal(project(NonnegOrthant(2), [-1, 2]), [0, 2])


def test_project_whole_space_is_identity():
    np.testing.assert_array_equal(project(WholeSpace(2), [3.5, -7]), [3.5, -7])


@pytest.mark.parametrize("convex_set, v, expected", [
    (NonnegOrthant(2), [-3, 4], 3.0),
    (Box([0], [1]), [0.5], 0.0),
    (Box([0], [1]), [2], 1.0),
])
def test_distance_to_set(convex_set, v, expected):
    assert distance_to_set(convex_set, v) == expected


def test_product_projects_blockwise():
    s = ProductSet((Box([0], [1]), NonnegOrthant(2), WholeSpace(1)))
    assert s.dim == 4
    np.testing.assert_array_equal(s.project([3, -1, 2, -9]), [1, 0, 2, -9])


def test_infinite_bounds_do_not_clamp():
    s = Box([-np.inf, 0], [np.inf, np.inf])
    np.testing.assert_array_equal(s.project([-1e300, -2]), [-1e300, 0])


def test_project_errors():
    with pytest.raises(DimensionError):
        project(CIRCUIT_BOX, [1, 2])
    with pytest.raises(NonFiniteError):
        project(NonnegOrthant(2), [np.nan, 1])
    with pytest.raises(NonFiniteError):
        distance_to_set(NonnegOrthant(1), [np.inf])
    with pytest.raises(ValueError):
        Box([1], [0])


SETS = [CIRCUIT_BOX, NonnegOrthant(4), WholeSpace(4),
        ProductSet((Box([-1, 0], [1, np.inf]), NonnegOrthant(2)))]
finite = st.floats(-1e6, 1e6, allow_nan=False)
vec4 = arrays(np.float64, 4, elements=finite)


@pytest.mark.parametrize("convex_set", SETS, ids=lambda s: type(s).__name__)
@given(v=vec4)
def test_projection_idempotent(convex_set, v):
    p = convex_set.project(v)
    np.testing.assert_array_equal(convex_set.project(p), p)
    assert distance_to_set(convex_set, p) == 0.0


@pytest.mark.parametrize("convex_set", SETS, ids=lambda s: type(s).__name__)
def test_projection_nonexpansive(convex_set):
    rng = np.random.default_rng(1)
    a = 15 * rng.standard_normal((1000, 4))
    b = 15 * rng.standard_normal((1000, 4))
    for x, y in zip(a, b):
        lhs = np.linalg.norm(convex_set.project(x) - convex_set.project(y))
        assert lhs <= np.linalg.norm(x - y) * (1 + 1e-15)


@pytest.mark.parametrize("convex_set", SETS, ids=lambda s: type(s).__name__)
def test_projection_variational_characterization(convex_set):
    rng = np.random.default_rng(2)
    for _ in range(200):
        v = 20 * rng.standard_normal(4)
        p = convex_set.project(v)
        w = np.array([convex_set.project(20 * rng.standard_normal(4)) for _ in range(20)])
        assert np.all((w - p) @ (v - p) <= 1e-12)


def _problem(**overrides):
    kwargs = dict(state_dim=2, control_dim=1, noise_dim=1,
                  drift=lambda t, x, u: np.zeros(2),
                  diffusion=lambda t, x, u: np.zeros((2, 1)),
                  vi_map=lambda t, x, u, s: u,
                  constraint=NonnegOrthant(1), initial_state=[0.0, 1.0], horizon=1.0)
    kwargs.update(overrides)
    return SdviProblem(**kwargs)


def test_problem_validation():
    p = _problem()
    assert p.initial_state.tolist() == [0.0, 1.0]
    with pytest.raises(DimensionError):
        _problem(initial_state=[0.0])
    with pytest.raises(DimensionError):
        _problem(constraint=NonnegOrthant(2))
    with pytest.raises(ValueError):
        _problem(horizon=0.0)
    with pytest.raises(DimensionError):
        _problem(diffusion=lambda t, x, u: np.zeros((2, 2))).eval_diffusion(0, np.zeros(2), np.zeros(1))


def test_problem_state_is_immutable():
    p = _problem()
    with pytest.raises(ValueError):
        p.initial_state[0] = 3.0


def test_constants_validation():
    ProblemConstants(lip_F=1.0, mono_C=1.0)  # C == L_F is allowed
    with pytest.raises(ValueError):
        ProblemConstants(lip_F=1.0, mono_C=2.0)
    with pytest.raises(ValueError):
        ProblemConstants(lip_F=1.0, mono_C=0.0)
    with pytest.raises(ValueError):
        ProblemConstants(lip_F=math.inf, mono_C=1.0)
    with pytest.raises(ValueError):
        ProblemConstants(lip_F=2.0, mono_C=1.0, lip_f=-1.0)
    assert ProblemConstants(lip_F=2.0, mono_C=1.0).max_rho == 0.5
