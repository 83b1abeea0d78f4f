import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quantir.errors import ConfigError, DataError
from quantir.forward import pixel_intensity
from quantir.sample import (SampleMap, SpeckleModel, Stroke, apply_speckle, bow_profile,
                            gen_bar_target, gen_capped_chip, gen_chip_contacts, read_sample,
                            write_sample)


def _valid(sample):
    assert 0 <= sample.r.min() and sample.r.max() <= 1
    assert 0 <= sample.tau.min() and sample.tau.max() <= 1
    assert sample.r.shape == sample.tau.shape == sample.height_map.shape == sample.scatter_mask.shape
    assert sample.pixel_pitch > 0


def test_bar_target_39um_alternating_rows():
    s = gen_bar_target(39.0, 3, (64, 64), 39.0 / 4)
    _valid(s)
    column = s.r[:, 0]
    assert set(np.unique(column)) == {0.0, 1.0}
    assert (s.r == column[:, None]).all()
    # 3 bars of 4 px separated by 4 px gaps
    edges = np.flatnonzero(np.diff(column))
    assert np.all(np.diff(edges) == 4)
    assert column.sum() == 12
    assert (s.tau == 1).all() and (s.height_map == 0).all() and not s.scatter_mask.any()


def test_bar_target_no_bars():
    s = gen_bar_target(10.0, 0, (16, 16), 1.0)
    assert (s.r == 0).all()


def test_bar_target_rasterization():
    # oracle: bars of 2 px starting at the centred offset
    s = gen_bar_target(2 * 0.5, 3, (20, 21), 0.5)
    extent = 5 * 2
    start = (21 - extent) // 2
    expected = np.zeros(21)
    for k in range(3):
        expected[start + 4 * k:start + 4 * k + 2] = 1
    np.testing.assert_array_equal(s.r[:, 7], expected)


def test_bar_target_rejects_oversize():
    with pytest.raises(ConfigError):
        gen_bar_target(10.0, 3, (40, 40), 1.0)
    with pytest.raises(ConfigError):
        gen_bar_target(1.3, 3, (40, 40), 1.0)


def test_chip_empty_layout():
    s = gen_chip_contacts([], (10, 8), 2.0)
    assert (s.r == 0.55).all()
    assert not s.scatter_mask.any()


def test_chip_stroke_mask():
    s = gen_chip_contacts([Stroke(2, 3, 5, 1)], (10, 8), 2.0)
    expected = np.zeros((8, 10), dtype=bool)
    for y in range(8):
        for x in range(10):
            expected[y, x] = 2 <= x < 7 and y == 3
    np.testing.assert_array_equal(s.scatter_mask, expected)
    assert (s.r[expected] == 0.1).all() and (s.r[~expected] == 0.55).all()


def test_chip_metal_dimmer_in_visibility():
    # normalized variance ~ (mu tau^2 r)^2 / 2 per pixel
    s = gen_chip_contacts(None, (64, 64), 5.0)
    _valid(s)
    v = s.r ** 2 / 2
    assert v[s.scatter_mask].max() < v[~s.scatter_mask].min()


def test_chip_rejects_bad_layout():
    with pytest.raises(ConfigError):
        gen_chip_contacts([[8, 0, 5, 1]], (10, 8), 1.0)
    with pytest.raises(ConfigError):
        gen_chip_contacts([], (0, 8), 1.0)


def test_chip_layout_lists_parse():
    a = gen_chip_contacts([[1, 1, 2, 2], {"x": 5, "y": 5, "w": 1, "h": 1}], (10, 10), 1.0)
    assert a.scatter_mask.sum() == 5


def test_cap_identity():
    base = gen_chip_contacts(None, (32, 32), 5.0)
    capped = gen_capped_chip(base, 1.0, 0.0)
    assert capped.equals(base)


def test_cap_visibility_scales_tau_squared():
    base = SampleMap.uniform(4, 4, 1.0, r=1.0)
    capped = gen_capped_chip(base, 0.7)
    i0 = 1000.0
    mod_bare = pixel_intensity(base.r, base.tau, 1.0, 0.0, i0) - i0
    mod_cap = pixel_intensity(capped.r, capped.tau, 1.0, 0.0, i0) - i0
    np.testing.assert_allclose(mod_cap / mod_bare, 0.49, rtol=1e-12)


def test_cap_records_immersion():
    capped = gen_capped_chip(gen_chip_contacts(None, (16, 16), 5.0), 0.8, 0.0, 3.5)
    assert capped.immersion_index == 3.5


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 300), st.floats(0, 300))
@settings(max_examples=30, deadline=None)
def test_cap_composes(t1, t2, s1, s2):
    base = gen_chip_contacts(None, (24, 20), 5.0)
    twice = gen_capped_chip(gen_capped_chip(base, t1, s1), t2, s2)
    once = gen_capped_chip(base, t1 * t2, s1 + s2)
    np.testing.assert_allclose(twice.tau, once.tau, atol=1e-12, rtol=0)
    np.testing.assert_allclose(twice.height_map, once.height_map, atol=1e-9)


def test_bow_profile_peak_to_edge():
    bow = bow_profile((11, 11), 200.0)
    assert bow[5, 5] == pytest.approx(200.0)
    assert bow[0, 0] == pytest.approx(0.0)
    assert bow.max() == bow[5, 5]


def test_speckle_disabled_is_identity():
    s = gen_chip_contacts(None, (32, 32), 5.0)
    assert apply_speckle(s, SpeckleModel(enabled=False, seed=3)) is s


def test_speckle_deterministic():
    s = gen_chip_contacts(None, (32, 32), 5.0)
    a = apply_speckle(s, SpeckleModel(seed=11))
    b = apply_speckle(s, SpeckleModel(seed=11))
    assert a.r.tobytes() == b.r.tobytes() and a.height_map.tobytes() == b.height_map.tobytes()
    c = apply_speckle(s, SpeckleModel(seed=12))
    assert not np.array_equal(a.r, c.r)


@given(st.integers(0, 2 ** 63))
@settings(max_examples=10, deadline=None)
def test_speckle_empty_mask_is_identity(seed):
    s = gen_chip_contacts([], (16, 16), 5.0)
    out = apply_speckle(s, SpeckleModel(seed=seed))
    assert out.equals(s)


@given(st.integers(0, 2 ** 32), st.floats(0, 1), st.floats(5, 40))
@settings(max_examples=20, deadline=None)
def test_speckle_masked_only_never_brighter(seed, floor, grain):
    s = gen_chip_contacts(None, (32, 32), 5.0)
    out = apply_speckle(s, SpeckleModel(grain_size=grain, amplitude_floor=floor, seed=seed), 1550.0)
    _valid(out)
    assert (out.r <= s.r).all()
    m = s.scatter_mask
    np.testing.assert_array_equal(out.r[~m], s.r[~m])
    np.testing.assert_array_equal(out.height_map[~m], s.height_map[~m])
    assert (out.r[m] >= floor * s.r[m] - 1e-12).all()
    assert (out.height_map[m] >= 0).all() and (out.height_map[m] < 775.0).all()


def test_speckle_grain_must_cover_a_pixel():
    s = gen_chip_contacts(None, (32, 32), 5.0)
    with pytest.raises(ConfigError):
        apply_speckle(s, SpeckleModel(grain_size=2.0))


def test_sample_invariants():
    with pytest.raises(ConfigError):
        SampleMap.uniform(4, 4, 1.0, r=1.2)
    with pytest.raises(ConfigError):
        SampleMap.uniform(4, 4, 0.0)
    with pytest.raises(ConfigError):
        SampleMap(1.0, np.zeros((2, 2)), np.ones((2, 3)), np.zeros((2, 2)), np.zeros((2, 2)))


def test_container_round_trip(tmp_path):
    s = gen_capped_chip(apply_speckle(gen_chip_contacts(None, (40, 30), 5.0), SpeckleModel(seed=5)),
                        0.7, 150.0, 3.5)
    p1, p2 = tmp_path / "a.nlis", tmp_path / "b.nlis"
    write_sample(s, p1)
    back = read_sample(p1)
    for name in ("r", "tau", "height_map"):
        np.testing.assert_array_equal(getattr(back, name), getattr(s, name).astype(np.float32))
    np.testing.assert_array_equal(back.scatter_mask, s.scatter_mask)
    assert back.immersion_index == 3.5 and back.pixel_pitch == 5.0
    assert back.params["cap_transmission"] == 0.7
    write_sample(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_bytes()[:8] == b"NLISAMP1"


def test_container_corruption(tmp_path):
    s = gen_chip_contacts(None, (16, 16), 5.0)
    p = tmp_path / "s.nlis"
    write_sample(s, p)
    data = p.read_bytes()
    (tmp_path / "bad.nlis").write_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(DataError) as exc:
        read_sample(tmp_path / "bad.nlis")
    assert exc.value.offset == 0
    (tmp_path / "short.nlis").write_bytes(data[:-10])
    with pytest.raises(DataError) as exc:
        read_sample(tmp_path / "short.nlis")
    assert exc.value.offset == len(data) - 10
