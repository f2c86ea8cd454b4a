import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panorelight.errors import DomainError
from panorelight.metrics import (
    MetricReport,
    loss_normal,
    loss_reflectance,
    mae_degrees,
    psnr,
    report,
    smse,
)


def _img(seed=0, shape=(4, 8, 3)):
    return np.random.default_rng(seed).uniform(0.1, 1.0, shape)


def test_smse_examples():
    gt = _img()
    assert smse(gt, gt) == pytest.approx(0.0, abs=1e-15)
    assert smse(2 * gt, gt) == pytest.approx(0.0, abs=1e-15)
    pred = np.array([[[1.0], [0.0]]])
    truth = np.array([[[1.0], [1.0]]])
    assert smse(pred, truth) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_smse_scale_invariance(a):
    pred, gt = _img(1), _img(2)
    assert smse(a * pred, gt) == pytest.approx(smse(pred, gt), rel=1e-9)


def test_smse_errors_and_mask():
    gt = _img()
    with pytest.raises(DomainError):
        smse(gt, np.zeros_like(gt))
    with pytest.raises(DomainError):
        smse(gt, gt[:2])
    with pytest.raises(DomainError):
        smse(gt, gt, np.zeros((4, 8), dtype=bool))
    pred = gt.copy()
    pred[0] = 9.0
    mask = np.ones((4, 8), dtype=bool)
    mask[0] = False
    assert smse(pred, gt, mask) == pytest.approx(0.0, abs=1e-15)


def test_mae_examples():
    n = np.zeros((2, 2, 3))
    n[..., 1] = 1.0
    assert mae_degrees(n, n) == 0.0
    assert mae_degrees(n, -n) == pytest.approx(180.0)
    half = n.copy()
    half[1] = [1.0, 0.0, 0.0]
    assert mae_degrees(half, n) == pytest.approx(45.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_mae_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 5, 3))
    b = rng.normal(size=(3, 5, 3))
    a /= np.linalg.norm(a, axis=-1, keepdims=True)
    b /= np.linalg.norm(b, axis=-1, keepdims=True)
    m = mae_degrees(a, b)
    assert m == pytest.approx(mae_degrees(b, a), abs=1e-12)
    assert 0.0 <= m <= 180.0


def test_psnr_examples():
    gt = np.zeros((1, 2, 1))
    assert psnr(gt, gt, peak=1.0) == float("inf")
    assert psnr(gt + 0.1, gt, peak=1.0) == pytest.approx(20.0)
    assert psnr(gt + 1.0, gt, peak=1.0) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        psnr(gt, gt)  # default peak is max(gt) = 0


def test_psnr_decreasing_in_mse():
    gt = _img()
    values = [psnr(gt + e, gt, peak=1.0) for e in (0.01, 0.02, 0.05, 0.1)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_loss_reflectance_examples():
    gt = _img(3)
    assert loss_reflectance(gt, gt) == pytest.approx(0.0, abs=1e-12)
    assert loss_reflectance(3 * gt, gt) == pytest.approx(0.0, abs=1e-12)
    c = np.full((4, 8, 3), 0.2)
    assert loss_reflectance(c, np.full((4, 8, 3), 0.7)) == pytest.approx(0.0, abs=1e-12)
    assert loss_reflectance(_img(4), gt) > 0


def test_loss_normal_examples():
    n = np.zeros((4, 8, 3))
    n[..., 1] = 1.0
    assert loss_normal(n, n) == -32.0
    ortho = np.zeros((4, 8, 3))
    ortho[..., 0] = 1.0
    assert loss_normal(ortho, n) == 0.0
    pred = np.array([[[0.0, 1, 0], [0.0, 1, 0]]])
    gt = np.array([[[0.0, 1, 0], [1.0, 0, 0]]])
    # cosine sum -1; gt's two wrap differences are (1, -1, 0) and (-1, 1, 0)
    assert loss_normal(pred, gt) == pytest.approx(-1.0 + 4.0)


def test_report_rows():
    mask = np.zeros((4, 8), dtype=bool)
    mask[:2] = True
    r = report("smse", 0.25, mask)
    assert r == MetricReport("smse", 0.25, 16, 0.5)
    assert not r.infinite and report("psnr", float("inf"), shape=(4, 8)).infinite
    assert set(r.as_row()) == {"name", "value", "pixel_count", "mask_coverage"}
