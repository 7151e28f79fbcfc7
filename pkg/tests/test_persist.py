import json

import numpy as np
import pytest

from conftest import gaussian_two_class
from spikelda.dataio import LabeledDataset
from spikelda.errors import SchemaError
from spikelda.pclda import Threshold, fit_pclda
from spikelda.persist import load_model, model_to_dict, save_model


def test_round_trip_is_bit_faithful(tmp_path, rng):
    ds = gaussian_two_class(rng, 30, 20, np.r_[np.ones(3), np.zeros(47)])
    named = LabeledDataset(ds.features, np.where(ds.y == 0, "a", "b"))
    m = fit_pclda(named, 3, 6)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    for attr in ("zeta_hat", "midpoint", "class_means", "selected"):
        assert getattr(back, attr).tobytes() == getattr(m, attr).tobytes()
    wm, bm = m.whitener.model, back.whitener.model
    assert bm.U_hat.tobytes() == wm.U_hat.tobytes()
    assert bm.lambda_hat.tobytes() == wm.lambda_hat.tobytes()
    assert bm.sigma2_hat == wm.sigma2_hat and back.prior_offset == m.prior_offset
    assert back.classes == ("a", "b") and back.counts == (30, 20)
    Z = rng.standard_normal((200, 50))
    np.testing.assert_array_equal(back.predict(Z), m.predict(Z))


def test_u_hat_is_column_major(rng):
    ds = gaussian_two_class(rng, 10, 10, np.ones(6))
    m = fit_pclda(ds, 2, 2)
    doc = model_to_dict(m)
    assert doc["U_hat"]["rows"] == 6 and doc["U_hat"]["cols"] == 2
    np.testing.assert_array_equal(doc["U_hat"]["data"][:6], m.whitener.model.U_hat[:, 0])


def test_threshold_metadata(tmp_path, rng):
    ds = gaussian_two_class(rng, 50, 50, np.r_[3 * np.ones(2), np.zeros(8)])
    m = fit_pclda(ds, 1, Threshold(0.5, 0.3))
    save_model(m, tmp_path / "t.json")
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["selection_mode"] == {"kind": "threshold", "C": 0.5, "alpha": 0.3, "fallback": False}
    assert doc["threshold"] == m.threshold
    assert load_model(tmp_path / "t.json").selection == m.selection


def test_schema_errors(tmp_path, rng):
    ds = gaussian_two_class(rng, 10, 10, np.ones(4))
    doc = model_to_dict(fit_pclda(ds, 1, 2))
    bad = dict(doc)
    del bad["zeta_hat"]
    (tmp_path / "a.json").write_text(json.dumps(bad))
    with pytest.raises(SchemaError, match="zeta_hat"):
        load_model(tmp_path / "a.json")
    bad = dict(doc, midpoint=[0.0])
    (tmp_path / "b.json").write_text(json.dumps(bad))
    with pytest.raises(SchemaError):
        load_model(tmp_path / "b.json")
    (tmp_path / "c.json").write_text("not json")
    with pytest.raises(SchemaError):
        load_model(tmp_path / "c.json")
