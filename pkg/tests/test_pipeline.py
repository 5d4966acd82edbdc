import csv
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tests.helpers import quick_gp_pipeline, rows
from voidsurrogate import pca
from voidsurrogate.gp import gp_condition
from voidsurrogate.metrics import (
    CSV_COLUMNS,
    STATS,
    error_report,
    error_table,
    field_statistic,
    field_statistics,
    write_cross_sections,
)
from voidsurrogate.pipeline import SurrogatePipeline, apply_mask


@pytest.fixture(scope="module")
def gp_pipe(ds_flat, small_split):
    return quick_gp_pipeline(ds_flat, small_split.train_idx)


def test_void_pixels_exactly_zero(ds_flat, gp_pipe, small_split):
    masks = ds_flat.masks(small_split.test_idx)
    pred = gp_pipe.predict_fields(masks)
    assert np.max(np.abs(pred[masks == 0])) == 0.0
    raw = gp_pipe.predict_raw(masks)
    np.testing.assert_array_equal(pred[masks == 1], raw[masks == 1])


def test_all_solid_mask_is_finite(gp_pipe):
    out = gp_pipe.predict_field(np.ones((64, 64)))
    assert np.all(np.isfinite(out))


def test_predict_rejects_bad_masks(gp_pipe):
    with pytest.raises(ValueError):
        gp_pipe.predict_field(np.ones((32, 32)))
    bad = np.ones((64, 64))
    bad[3, 3] = 0.5
    with pytest.raises(ValueError, match="0 and 1"):
        gp_pipe.predict_field(bad)


def test_pipeline_checks_widths_and_policies(gp_pipe):
    with pytest.raises(ValueError):
        SurrogatePipeline(gp_pipe.input_codec.truncate(5), gp_pipe.regressor, gp_pipe.output_codec, gp_pipe.grid)
    with pytest.raises(ValueError):
        SurrogatePipeline(gp_pipe.output_codec, gp_pipe.regressor, gp_pipe.output_codec, gp_pipe.grid)


def test_self_map_reproduces_within_truncation(ds_flat, small_split):
    """Stress codec on both ends with an identity latent map."""
    _, Xs = rows(ds_flat, small_split.train_idx)
    k = 10
    codec = pca.fit(Xs, pca.POLICY_CENTER_SCALE, pca.Components(k))
    Z = codec.encode(Xs)
    # identity regressor: tiny length-scales and a floor nugget interpolate the training latents
    ident = gp_condition(Z, Z, np.tile(np.r_[np.full(k, np.log(1e-3)), 0.0, np.log(1e-10)], (k, 1)))
    recon = codec.decode(ident.predict(Z)[0])
    trunc = np.mean((codec.decode(Z) - Xs) ** 2)
    assert np.mean((recon - Xs) ** 2) <= trunc * (1 + 1e-6)


def test_apply_mask_properties():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(8, 8))
    m = (rng.random((8, 8)) > 0.3).astype(float)
    np.testing.assert_array_equal(apply_mask(f, np.ones_like(f)), f)
    np.testing.assert_array_equal(apply_mask(f, np.zeros_like(f)), 0.0)
    once = apply_mask(f, m)
    np.testing.assert_array_equal(apply_mask(once, m), once)
    np.testing.assert_array_equal(once, f * m)


def test_statistics_hand_computed():
    field = np.array([[1.0, 2.0], [3.0, 4.0]])
    solid = np.ones((2, 2))
    assert field_statistic(field, solid, "p50") == 2.5
    assert field_statistic(field, solid, "maximum") == 4.0
    assert field_statistic(field, solid, "average") == 2.5
    assert field_statistic(np.full((3, 3), 7.0), np.ones((3, 3)), "p97") == 7.0


def test_statistics_ignore_void_pixels():
    rng = np.random.default_rng(1)
    f = rng.random((10, 10)) + 1
    m = np.ones((10, 10))
    m[4:6, 4:6] = 0
    g = f.copy()
    g[m == 0] = 1e9
    np.testing.assert_array_equal(field_statistics(f, m), field_statistics(g, m))
    with pytest.raises(ValueError):
        field_statistic(f, np.zeros((10, 10)), "average")
    with pytest.raises(ValueError):
        field_statistic(f, m, "median")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_percentiles_monotone(seed):
    rng = np.random.default_rng(seed)
    s = field_statistics(rng.gamma(2.0, size=(12, 12)), rng.random((12, 12)) > 0.2)
    _, mx, p50, p90, p97, p99 = s
    assert p50 <= p90 <= p97 <= p99 <= mx


def _fields(ds, n=12):
    idx = list(range(n))
    return ds.stresses(idx), ds.masks(idx)


def test_report_zero_for_exact_prediction(ds_flat):
    true, masks = _fields(ds_flat)
    rep = error_table(true, true, masks)
    assert all(v == 0 for v in rep.errors.values())


def test_report_scaled_prediction_is_ten_percent(ds_flat):
    true, masks = _fields(ds_flat)
    rep = error_table(1.1 * true, true, masks)
    for v in rep.errors.values():
        assert v == pytest.approx(10.0, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_report_scale_equivariant(c):
    rng = np.random.default_rng(2)
    true = rng.random((5, 10, 10)) + 0.5
    pred = true * (1 + 0.1 * rng.normal(size=true.shape))
    masks = np.ones_like(true)
    a = error_table(pred, true, masks).per_sample
    b = error_table(c * pred, c * true, masks).per_sample
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_report_best_and_worst(ds_flat):
    true, masks = _fields(ds_flat, 4)
    pred = true.copy()
    pred[2] *= 1.3
    pred[0] *= 1.01
    pred[1] *= 0.999
    pred[3] *= 1.05
    rep = error_table(pred, true, masks, sample_ids=[10, 11, 12, 13])
    assert (rep.best, rep.worst) == (11, 12)
    assert rep.per_sample.shape == (4, 6) and np.all(rep.per_sample >= 0)


def test_report_csv_layout(tmp_path, ds_flat, gp_pipe, small_split):
    rep = error_report(gp_pipe, [ds_flat.samples[i] for i in small_split.test_idx[:20]], small_split.test_idx[:20])
    rep.to_csv(tmp_path / "m.csv")
    rep.per_sample_csv(tmp_path / "s.csv")
    with open(tmp_path / "m.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0] == CSV_COLUMNS == ["sample_stat", "average", "maximum", "p50", "p90", "p97", "p99"]
    assert [float(x) for x in table[1][1:]] == [rep.errors[s] for s in STATS]
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 21
    with pytest.raises(ValueError):
        error_report(gp_pipe, [])


def test_cross_sections(tmp_path, ds_flat):
    s = ds_flat.samples[0]
    write_cross_sections(tmp_path / "x.csv", s.stress, s.stress, ds_flat.grid)
    with open(tmp_path / "x.csv") as fh:
        body = list(csv.DictReader(fh))
    assert len(body) == 128
    horiz = [float(r["true"]) for r in body if r["line"] == "horizontal"]
    np.testing.assert_array_equal(horiz, s.stress[32])


@dataclass
class _Row:
    size: int
    framework: str
    report: object
    error: str = ""
