from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbmhurst.core import (DomainError, ObservationGrid, SamplePath, ThetaFunction, constant_theta, derive_seed,
                           read_path_csv, theta_from_samples, validate_path, write_path_csv)


def test_constant_samples_give_constant_path():
    th = theta_from_samples([0.5, 0.5], [1.0, 1.0])
    v = np.linspace(-3, 1, 50)
    assert np.all(th.hurst_at(v) == 0.5)
    assert th.is_constant


def test_linear_midpoint():
    th = theta_from_samples([0.2, 0.8], [1.0, 1.0], eta=1.0)
    assert th.hurst_at(0.5) == pytest.approx(0.5, abs=1e-15)


def test_piecewise_linear_against_hand_oracle():
    th = theta_from_samples([0.3, 0.7, 0.3], [1.0, 2.0, 1.0])
    # on [0, 0.5]: 0.3 + 0.8 v
    assert th.hurst_at(0.25) == pytest.approx(0.5, abs=1e-15)
    assert th.sigma_at(0.25) == pytest.approx(1.5, abs=1e-15)
    assert th.bounds == (0.3, 0.7, 1.0, 4.0)


def test_constant_extension_into_the_past():
    th = theta_from_samples([0.2, 0.8], [2.0, 3.0])
    assert th.hurst_at(-5.0) == 0.2
    assert th.sigma_at(-0.1) == 2.0


@pytest.mark.parametrize("h, s, idx", [([0.5, 1.0], [1, 1], "h_samples[1]"),
                                       ([0.0, 0.5], [1, 1], "h_samples[0]"),
                                       ([0.5, 0.5, 0.5], [1, 0, 1], "s_samples[1]")])
def test_out_of_range_sample_names_index(h, s, idx):
    with pytest.raises(DomainError, match=idx.replace("[", r"\[").replace("]", r"\]")):
        theta_from_samples(h, s)


def test_length_mismatch_rejected():
    with pytest.raises(DomainError):
        theta_from_samples([0.5, 0.5], [1.0])
    with pytest.raises(DomainError):
        theta_from_samples([0.5], [1.0])


def test_callable_theta_bounds_probed():
    th = ThetaFunction(hurst=lambda v: 0.5 + 0.2 * np.sin(2 * np.pi * v), sigma=1.0)
    lo, hi, s_lo, s_hi = th.bounds
    assert lo == pytest.approx(0.3, abs=1e-6) and hi == pytest.approx(0.7, abs=1e-6)
    assert s_lo == s_hi == 1.0
    with pytest.raises(DomainError):
        ThetaFunction(hurst=lambda v: 0.5 + v, sigma=1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=12),
       st.floats(0.1, 5.0), st.integers(0, 2 ** 32 - 1))
def test_evaluation_respects_bounds_and_is_deterministic(hs, scale, seed):
    s = [scale * (1 + 0.1 * i) for i in range(len(hs))]
    th = theta_from_samples(hs, s)
    v = np.random.default_rng(seed).uniform(-1.0, 1.0, 10_000)
    h = th.hurst_at(v)
    s2 = th.sigma_at(v) ** 2
    lo, hi, s_lo, s_hi = th.bounds
    assert np.all((lo <= h) & (h <= hi))
    assert np.all((s_lo * (1 - 1e-12) <= s2) & (s2 <= s_hi * (1 + 1e-12)))
    assert np.array_equal(h, th.hurst_at(v))


def test_grid_times_are_exact():
    g = ObservationGrid(1024)
    assert g.size == 1028
    assert g.times[0] == -3 / 1024 and g.times[3] == 0.0 and g.times[-1] == 1.0
    with pytest.raises(DomainError):
        ObservationGrid(0)


def test_validate_zero_path():
    d = validate_path(SamplePath(ObservationGrid(1024), np.zeros(1028)))
    assert d.valid and d.n_bad == 0 and d.length == 1028


def test_validate_flags_nan_index():
    x = np.zeros(1028)
    x[17] = np.nan
    d = validate_path(SamplePath(ObservationGrid(1024), x))
    assert not d.valid and d.bad_indices == (17,)


def test_validate_structural_mismatch():
    d = validate_path(SamplePath(ObservationGrid(1024), np.zeros(1000)))
    assert d.structural_mismatch and not d.valid


def test_sample_path_is_read_only():
    p = SamplePath(ObservationGrid(8), np.arange(12.0))
    with pytest.raises(ValueError):
        p.values[0] = 1.0
    assert p.at(-3) == 0.0 and p.at(8) == 11.0


@settings(max_examples=30, deadline=None)
@given(st.integers(8, 300), st.integers(0, 5), st.integers(0, 2 ** 32 - 1))
def test_csv_round_trip_bit_exact(n, lead, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n + lead + 1) * 10.0 ** rng.integers(-8, 8)
    path = SamplePath(ObservationGrid(n, lead), x)
    buf = io.StringIO()
    write_path_csv(path, buf)
    back = read_path_csv(io.StringIO(buf.getvalue()))
    assert back.grid == path.grid
    assert np.array_equal(back.values, path.values)


def test_csv_reader_rejects_irregular_grid():
    text = "t,x\n0,0\n0.1,1\n0.3,2\n0.4,3\n"
    with pytest.raises(DomainError):
        read_path_csv(io.StringIO(text))


def test_derive_seed_is_stable_and_spreads():
    a = derive_seed(7, "constant_h", 1024, 3)
    assert a == derive_seed(7, "constant_h", 1024, 3)
    seeds = {derive_seed(7, "constant_h", 1024, r) for r in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(8, "constant_h", 1024, 3) != a
    assert 0 <= a < 2 ** 64


def test_constant_theta():
    th = constant_theta(0.7, 2.0)
    assert th.is_constant and th.bounds == (0.7, 0.7, 4.0, 4.0)
