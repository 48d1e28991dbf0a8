import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rotorloc.core import Vec2
from rotorloc.environment import (Environment, Wall, image_sources, perturb_aspect, perturb_scale,
                                  perturb_shear, reflect_point, shoelace_area, viable_region)
from rotorloc.errors import EmptyRegion, NotRectangular, OutsideEnvironment


def lattice_images(x, y, w, h, max_order):
    """Closed-form image lattice of a rectangle [0,w]x[0,h]: coordinate 2mw+x takes |2m|
    reflections, 2mw-x takes |2m-1|; the order is the sum over both axes."""
    out = {}
    span = max_order + 1
    xs = [(2 * m * w + x, abs(2 * m)) for m in range(-span, span + 1)]
    xs += [(2 * m * w - x, abs(2 * m - 1)) for m in range(-span, span + 1)]
    ys = [(2 * m * h + y, abs(2 * m)) for m in range(-span, span + 1)]
    ys += [(2 * m * h - y, abs(2 * m - 1)) for m in range(-span, span + 1)]
    for px, ox in xs:
        for py, oy in ys:
            if ox + oy <= max_order:
                out.setdefault(ox + oy, []).append((px, py))
    return out


def test_reflect_examples():
    assert reflect_point(Vec2(1, 2), Wall(Vec2(0, 0), Vec2(0, 5))) == Vec2(-1, 2)
    r = reflect_point(Vec2(1, 2), Wall(Vec2(0, 5), Vec2(5, 5)))
    assert tuple(r) == pytest.approx((1, 8))
    w = Wall(Vec2(0, 0), Vec2(3, 1))
    on = Vec2(1.5, 0.5)
    assert tuple(reflect_point(on, w)) == pytest.approx(tuple(on), abs=1e-15)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-5, 5), st.floats(-5, 5))
def test_reflect_is_involution(px, py, ax, ay):
    w = Wall(Vec2(ax, ay), Vec2(ax + 1.3, ay - 0.7))
    back = reflect_point(reflect_point(Vec2(px, py), w), w)
    assert back.x == pytest.approx(px, abs=1e-12) and back.y == pytest.approx(py, abs=1e-12)


def test_first_order_images_of_square():
    env = Environment.rectangle(5, 5, gamma=0.5)
    imgs = image_sources(env, Vec2(1, 2), 1)
    assert imgs[0].order == 0 and imgs[0].weight == 1.0 and imgs[0].position == Vec2(1, 2)
    first = sorted(tuple(round(c, 12) for c in i.position) for i in imgs if i.order == 1)
    assert first == sorted([(-1.0, 2.0), (1.0, -2.0), (9.0, 2.0), (1.0, 8.0)])
    assert all(i.weight == 0.5 for i in imgs if i.order == 1)
    assert len(image_sources(env, Vec2(1, 2), 0)) == 1


@pytest.mark.parametrize("xi", [(1.0, 2.0), (2.5, 2.5), (0.3, 4.1)])
@pytest.mark.parametrize("w, h", [(5.0, 5.0), (3.0, 7.0)])
def test_images_match_lattice_oracle(xi, w, h):
    env = Environment.rectangle(w, h, gamma=0.5)
    imgs = image_sources(env, Vec2(*xi), 3)
    oracle = lattice_images(*xi, w, h, 3)
    for n in range(4):
        got = sorted(tuple(i.position) for i in imgs if i.order == n)
        want = sorted(oracle[n])
        assert len(got) == (1 if n == 0 else 4 * n)
        assert len(got) == len(want)
        np.testing.assert_allclose(np.array(got), np.array(want), atol=1e-9)


def test_gamma_zero_weights():
    env = Environment.rectangle(5, 5, gamma=0.0, max_order=2)
    assert all(i.weight == 0.0 for i in image_sources(env, Vec2(1, 1)) if i.order >= 1)


def test_source_outside_room_rejected():
    with pytest.raises(OutsideEnvironment):
        image_sources(Environment.rectangle(5, 5), Vec2(6, 1))


def test_non_convex_rejected():
    with pytest.raises(ValueError):
        Environment([(0, 0), (4, 0), (1, 1), (0, 4)])


def test_scale():
    env = Environment.rectangle(5, 5)
    assert perturb_scale(env, 1.0) == env
    big = perturb_scale(env, 4.0)
    np.testing.assert_allclose(big.vertices.max(0) - big.vertices.min(0), [10, 10])
    np.testing.assert_allclose(big.centroid, env.centroid)
    assert perturb_scale(env, 0.5).area == pytest.approx(0.5 * env.area, rel=1e-12)


def test_aspect():
    env = Environment.rectangle(5, 5)
    assert perturb_aspect(env, 1.0) == env
    wide = perturb_aspect(env, 4.0)
    np.testing.assert_allclose(wide.vertices.max(0) - wide.vertices.min(0), [10, 2.5])
    assert perturb_aspect(env, 2.0).area == pytest.approx(env.area, abs=1e-9)


def test_shear():
    unit = Environment.rectangle(1, 1)
    assert perturb_shear(unit, 0.0) == unit
    sheared = perturb_shear(unit, 45.0)
    np.testing.assert_allclose(sheared.vertices, [[0, 0], [1, 0], [2, 1], [1, 1]], atol=1e-15)
    env = Environment.rectangle(5, 5)
    assert shoelace_area(perturb_shear(env, 30.0).vertices) == pytest.approx(25.0, abs=1e-9)
    with pytest.raises(NotRectangular):
        perturb_aspect(sheared, 2.0)


def test_viable_region():
    env = Environment.rectangle(5, 5)
    assert viable_region(env, 0.0) == env
    inner = viable_region(env, 0.93)
    np.testing.assert_allclose(inner.vertices.min(0), [0.93, 0.93], atol=1e-12)
    np.testing.assert_allclose(inner.vertices.max(0), [4.07, 4.07], atol=1e-12)
    with pytest.raises(EmptyRegion):
        viable_region(env, 3.0)


def test_viable_region_of_parallelogram_keeps_margin():
    env = perturb_shear(Environment.rectangle(5, 5), 20.0)
    inner = viable_region(env, 0.5)
    for v in inner.vertices:
        for w in env.walls:
            n = w.unit_normal()
            assert (v - np.asarray(w.a)) @ n == pytest.approx(0.5, abs=1e-9) or (v - np.asarray(w.a)) @ n > 0.5


def test_environment_json_roundtrip():
    env = perturb_shear(Environment.rectangle(4, 6, gamma=0.3, max_order=2), 10.0)
    assert Environment.from_json(env.to_json()) == env
    assert math.isclose(Environment.from_json(env.to_json()).gamma, 0.3)
