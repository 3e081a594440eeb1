import math

import numpy as np
import pytest

from gbfcd.errors import ConfigError
from gbfcd.metrics import (
    CSV_COLUMNS,
    ConfusionCounts,
    confusion,
    metrics_csv,
    report,
)
from gbfcd.raster_io import ChangeMask


def _mask(bits, width=4):
    return ChangeMask(width, len(bits) // width, [b == "1" for b in bits])


# 16-pixel fixture: ref has 4 changed; pred hits 3, misses 1, adds 2.
REF = _mask("1111000000000000")
PRED = _mask("1110110000000000")


class TestConfusion:
    def test_hand_counted_fixture(self):
        c = confusion(PRED, REF)
        assert (c.tp, c.fn, c.fp, c.tn) == (3, 1, 2, 10)

    def test_perfect(self):
        c = confusion(REF, REF)
        assert c.fp == 0 and c.fn == 0

    def test_inverted(self):
        inv = ChangeMask(REF.width, REF.height, ~REF.data)
        c = confusion(inv, REF)
        assert c.tp == 0 and c.tn == 0

    def test_swap_identity(self):
        ab, ba = confusion(PRED, REF), confusion(REF, PRED)
        assert ab.tp == ba.tp and ab.tn == ba.tn
        assert ab.fn == ba.fp and ab.fp == ba.fn

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            confusion(PRED, _mask("11", width=2))


class TestReport:
    def test_fixture_arithmetic(self):
        r = report(ConfusionCounts(tp=3, fp=2, fn=1, tn=10))
        assert r.ma_pct == pytest.approx(25.0)
        assert r.fa_pct == pytest.approx(100 * 2 / 12)
        assert r.precision == pytest.approx(0.6)
        assert r.recall == pytest.approx(0.75)
        assert r.oe_pct == pytest.approx(18.75)
        assert r.kappa == pytest.approx(0.5385, abs=1e-4)
        assert not r.undefined

    def test_perfect_prediction(self):
        r = report(confusion(REF, REF))
        assert (r.ma_pct, r.fa_pct, r.oe_pct) == (0.0, 0.0, 0.0)
        assert (r.precision, r.recall, r.kappa) == (1.0, 1.0, 1.0)

    def test_self_agreement_perfect_for_any_two_class_mask(self, rng):
        m = ChangeMask(8, 8, rng.random(64) > 0.7)
        r = report(confusion(m, m))
        assert r.kappa == 1.0 and r.oe_pct == 0.0

    def test_undefined_flags(self):
        r = report(ConfusionCounts(tp=0, fp=0, fn=0, tn=16))
        assert math.isnan(r.ma_pct) and math.isnan(r.precision)
        assert "ma_pct" in r.undefined and "kappa" in r.undefined

    def test_kappa_relabel_invariance(self):
        c = confusion(PRED, REF)
        flipped = confusion(
            ChangeMask(PRED.width, PRED.height, ~PRED.data),
            ChangeMask(REF.width, REF.height, ~REF.data),
        )
        assert report(c).kappa == pytest.approx(report(flipped).kappa, abs=1e-12)


def test_csv_column_order():
    rows = [("GBF-CD", report(confusion(PRED, REF)))]
    text = metrics_csv(rows)
    header = text.splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    assert text.splitlines()[1].startswith("GBF-CD,")


def test_published_reference_row():
    # Published score for the flood scene; our arithmetic must reproduce the
    # internal consistency MA = 100 * (1 - R).
    ma, recall = 4.8504, 0.9515
    assert ma == pytest.approx(100 * (1 - recall), abs=0.02)
