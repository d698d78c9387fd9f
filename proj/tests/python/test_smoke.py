import math

import numpy as np
import pytest

import cbpkf


def scalar(h=1.0, r=1.0, var=1.0):
    model = cbpkf.SystemModel(np.eye(1), np.zeros((1, 1)), np.full((1, 1), h), np.full((1, 1), r))
    prior = cbpkf.StateEstimate(np.zeros(1), np.full((1, 1), var), prior=True)
    return model, prior


def test_kf_unit_inputs():
    model, prior = scalar()
    u = cbpkf.kf_update(prior, np.array([2.0]), model)
    assert u.gain[0, 0] == pytest.approx(0.5)
    assert u.posterior.cov[0, 0] == pytest.approx(0.5)
    assert not u.posterior.is_prior


def test_cbpkf_and_vikf_scalar_forms():
    model, prior = scalar()
    cb = cbpkf.cbpkf_update(prior, np.zeros(1), model, 0.5, cbpkf.CbGainForm.LINEARIZED)
    assert cb.gain[0, 0] == pytest.approx(2 / 3, abs=1e-12)
    assert cb.posterior.cov[0, 0] == pytest.approx(5 / 9, abs=1e-12)
    vi = cbpkf.vikf_update(prior, np.zeros(1), model, 1.0)
    assert vi.gain[0, 0] == pytest.approx(cb.gain[0, 0], abs=1e-12)
    ref = cbpkf.table1_closed_forms(1, 4, 1, 0.5, cbpkf.Table1Method.VIKF)
    assert ref.gain == pytest.approx(6 / 7)


def test_simulate_shapes_and_determinism():
    case = cbpkf.reference_case(5)
    case.n_cycles = 500
    case.seed = 3
    a = cbpkf.simulate(case)
    b = cbpkf.simulate(case)
    assert a["truth"].shape == (500, 1)
    assert a["observations"].shape == (500, 10)
    assert np.array_equal(a["truth"], b["truth"])
    assert np.all((a["phi"] >= 0.5) & (a["phi"] <= 0.95))


def test_run_filter_and_metrics():
    case = cbpkf.reference_case(1)
    case.n_cycles = 3000
    kf = cbpkf.run_filter(case, "kf")
    cb = cbpkf.run_filter(case, "cbpkf", alpha=0.7)
    truth = kf["truth"][100:]
    th = cbpkf.make_thresholds(truth)
    assert len(th) == 21 and th[0] == 0.0
    rows = cbpkf.conditional_rmse(truth, cb["estimates"][100:], th)
    assert rows[0][2] > 0
    r_kf = cbpkf.unconditional_rmse(truth, kf["estimates"][100:])
    r_cb = cbpkf.unconditional_rmse(truth, cb["estimates"][100:])
    assert r_cb > r_kf > 0
    assert cbpkf.percent_reduction(2.0, 1.5) == pytest.approx(25.0)
    assert cbpkf.percent_reduction(0.0, 1.0) is None


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        cbpkf.reference_case(13)
    model, prior = scalar()
    with pytest.raises(ValueError):
        cbpkf.cbpkf_update(prior, np.zeros(1), model, -1.0)
    with pytest.raises(ValueError):
        cbpkf.run_filter(cbpkf.reference_case(1), "ukf")
    bad = cbpkf.SystemModel(np.eye(1), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    with pytest.raises(RuntimeError):
        cbpkf.kf_update(prior, np.zeros(1), bad)
