import numpy as np
from numpy.testing import assert_allclose

from vfvol.dataset import build_dataset
from vfvol.fixture import FIXTURE_DAYS, fixture_effect, load_fixture, make_fixture


def test_shipped_fixture_matches_generator():
    shipped = load_fixture()
    fresh = make_fixture()
    assert shipped.close.size == FIXTURE_DAYS
    assert_allclose(shipped.close, fresh.close, rtol=0, atol=0)
    assert_allclose(shipped.volume, fresh.volume, rtol=0, atol=0)


def test_fixture_gives_103_weekly_rows():
    ds = build_dataset(load_fixture(), grouping="week")
    assert ds.n == 103


def test_fixture_effect_explains_returns():
    ds = build_dataset(load_fixture())
    resid = ds.y - fixture_effect(ds.x_lag)
    assert abs(resid.std() - 0.004) < 0.001
    assert ds.y.std() > 2 * resid.std()
