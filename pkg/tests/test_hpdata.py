import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedhp.errors import InputError, ReportFormatError
from fedhp.hpdata import (
    DEFAULT_SPACE,
    ClientReport,
    HPRecord,
    HPSpace,
    generate_synthetic_lho,
    load_report,
    load_reports,
    minmax_scale,
    report_to_dict,
    select_top_fraction,
    unscale,
    write_reports,
)

from oracles import top_records

SPACE = HPSpace.of(("lr", 0.001, 0.5), ("mom", 0.0, 1.0))


def _write(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


def _doc(cid="c0", records=None, space=SPACE):
    records = records if records is not None else [{"values": [0.1, 0.9], "accuracy": 0.92}]
    return {"client_id": cid, "space": space.to_dict(), "records": records}


class TestSpace:
    def test_rejects_degenerate_dim(self):
        with pytest.raises(InputError):
            HPSpace.of(("lr", 0.1, 0.1))

    def test_rejects_duplicate_names(self):
        with pytest.raises(InputError):
            HPSpace.of(("lr", 0, 1), ("lr", 0, 2))

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            HPSpace(())

    def test_dict_round_trip(self):
        assert HPSpace.from_dict(SPACE.to_dict()) == SPACE


class TestLoad:
    def test_single_record(self, tmp_path):
        rep = load_report(_write(tmp_path / "a.json", _doc()))
        assert len(rep) == 1
        assert rep.records[0] == HPRecord((0.1, 0.9), 0.92)

    def test_accuracy_out_of_range_names_field(self, tmp_path):
        bad = _doc(records=[{"values": [0.1, 0.9], "accuracy": 1.3}])
        with pytest.raises(ReportFormatError) as exc:
            load_report(_write(tmp_path / "a.json", bad))
        assert exc.value.field == "accuracy"
        assert exc.value.client_id == "c0"

    def test_value_out_of_range_names_dimension(self, tmp_path):
        bad = _doc(records=[{"values": [0.9, 0.9], "accuracy": 0.5}])
        with pytest.raises(ReportFormatError) as exc:
            load_report(_write(tmp_path / "a.json", bad))
        assert exc.value.field == "lr"

    def test_empty_records(self, tmp_path):
        with pytest.raises(ReportFormatError) as exc:
            load_report(_write(tmp_path / "a.json", _doc(records=[])))
        assert exc.value.field == "records"

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text("{not json", encoding="utf-8")
        with pytest.raises(ReportFormatError):
            load_report(p)

    def test_wrong_arity(self, tmp_path):
        bad = _doc(records=[{"values": [0.1], "accuracy": 0.5}])
        with pytest.raises(ReportFormatError) as exc:
            load_report(_write(tmp_path / "a.json", bad))
        assert exc.value.field == "values"

    def test_missing_accuracy(self, tmp_path):
        bad = _doc(records=[{"values": [0.1, 0.2]}])
        with pytest.raises(ReportFormatError) as exc:
            load_report(_write(tmp_path / "a.json", bad))
        assert exc.value.field == "accuracy"

    def test_space_mismatch(self, tmp_path):
        _write(tmp_path / "a.json", _doc("a"))
        _write(tmp_path / "b.json", _doc("b", space=HPSpace.of(("lr", 0, 1), ("mom", 0, 1))))
        with pytest.raises(ReportFormatError) as exc:
            load_reports(tmp_path)
        assert exc.value.field == "space"

    def test_duplicate_ids(self, tmp_path):
        _write(tmp_path / "a.json", _doc("x"))
        _write(tmp_path / "b.json", _doc("x"))
        with pytest.raises(ReportFormatError):
            load_reports(tmp_path)

    def test_missing_path(self, tmp_path):
        with pytest.raises(InputError):
            load_reports(tmp_path / "nope")

    def test_generated_files_round_trip(self, tmp_path):
        reps = generate_synthetic_lho(SPACE, 10, 0.2, seed=3)
        write_reports(reps, tmp_path)
        back = load_reports(tmp_path, SPACE)
        assert len(back) == 10
        assert len({r.client_id for r in back}) == 10
        assert back == reps


class TestScale:
    def test_bounds_map_to_unit_interval(self):
        rep = ClientReport("c", (HPRecord((0.001, 0.0), 0.5), HPRecord((0.5, 1.0), 0.5)), SPACE)
        sc = minmax_scale(rep)
        assert sc.records[0].values == (0.0, 0.0)
        assert sc.records[1].values == (1.0, 1.0)

    def test_hand_value(self):
        space = HPSpace.of(("lr", 0.0, 0.5))
        sc = minmax_scale(ClientReport("c", (HPRecord((0.1,), 0.3),), space))
        assert sc.records[0].values[0] == pytest.approx(0.2, abs=1e-15)
        assert sc.records[0].accuracy == 0.3

    @given(st.lists(st.tuples(st.floats(0.001, 0.5), st.floats(0.0, 1.0)), min_size=1, max_size=20))
    def test_inverse_map(self, vals):
        rep = ClientReport("c", tuple(HPRecord(v, 0.5) for v in vals), SPACE)
        back = unscale(minmax_scale(rep).values_array(), SPACE)
        raw = rep.values_array()
        assert np.allclose(back, raw, rtol=1e-12, atol=0)


class TestTopFraction:
    def test_twenty_records_five_percent(self):
        rng = np.random.default_rng(0)
        recs = tuple(HPRecord((float(rng.uniform(0.001, 0.5)), 0.5), float(a))
                     for a in rng.uniform(0, 1, 20))
        top = select_top_fraction(ClientReport("c", recs, SPACE), 0.05)
        assert len(top) == 1
        assert top.records[0].accuracy == max(r.accuracy for r in recs)

    def test_fraction_one_is_identity(self):
        reps = generate_synthetic_lho(SPACE, 1, 0.0, seed=1)[0]
        assert sorted(select_top_fraction(reps, 1.0).records, key=repr) == sorted(reps.records, key=repr)

    def test_tie_break_lexicographic(self):
        recs = (HPRecord((0.3, 0.1), 0.8), HPRecord((0.1, 0.9), 0.8), HPRecord((0.1, 0.5), 0.8))
        rep = ClientReport("c", recs, SPACE)
        assert select_top_fraction(rep, 0.33).records == (HPRecord((0.1, 0.5), 0.8),)
        # ceil(0.34 * 3) = 2 keeps the two smallest vectors in order
        assert select_top_fraction(rep, 0.34).records == (HPRecord((0.1, 0.5), 0.8), HPRecord((0.1, 0.9), 0.8))

    def test_bad_fraction(self):
        rep = generate_synthetic_lho(SPACE, 1, 0.0, seed=1)[0]
        with pytest.raises(InputError):
            select_top_fraction(rep, 0.0)

    @given(st.lists(st.tuples(st.sampled_from([0.001, 0.1, 0.2]), st.sampled_from([0.0, 0.5]),
                              st.sampled_from([0.1, 0.5, 0.9])), min_size=1, max_size=30),
           st.floats(0.01, 1.0))
    def test_sub_multiset_of_right_size(self, rows, frac):
        recs = tuple(HPRecord((a, b), c) for a, b, c in rows)
        top = select_top_fraction(ClientReport("c", recs, SPACE), frac)
        assert len(top) == math.ceil(frac * len(recs) - 1e-9)
        pool = list(recs)
        for r in top.records:
            pool.remove(r)
        assert list(top.records) == top_records(recs, frac)


class TestSynthetic:
    def test_zero_heterogeneity_shares_argmax(self):
        reps = generate_synthetic_lho(DEFAULT_SPACE, 8, 0.0, seed=11)
        best = {r.records[int(np.argmax(r.accuracy_array()))].values for r in reps}
        assert len(best) == 1

    def test_deterministic(self):
        a = generate_synthetic_lho(SPACE, 5, 0.3, seed=7)
        b = generate_synthetic_lho(SPACE, 5, 0.3, seed=7)
        assert json.dumps([report_to_dict(r) for r in a]) == json.dumps([report_to_dict(r) for r in b])

    def test_heterogeneity_spreads_argmax(self):
        reps = generate_synthetic_lho(SPACE, 10, 0.3, seed=5)
        best = np.array([r.values_array()[np.argmax(r.accuracy_array())] for r in reps])
        assert best.var(axis=0).sum() > 0

    def test_records_are_grid_points_within_bounds(self):
        reps = generate_synthetic_lho(SPACE, 2, 0.1, seed=2, points_per_dim=5)
        vals = reps[0].values_array()
        assert len(vals) == 25
        assert np.all(vals >= SPACE.lower) and np.all(vals <= SPACE.upper)
        acc = reps[0].accuracy_array()
        assert np.all((acc >= 0) & (acc <= 1))

    def test_validation(self):
        with pytest.raises(InputError):
            generate_synthetic_lho(SPACE, 0, 0.1, seed=1)
        with pytest.raises(InputError):
            generate_synthetic_lho(SPACE, 2, -0.1, seed=1)
