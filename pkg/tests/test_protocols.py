import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedhp.approx import CompareConfig, sign
from fedhp.ckks import ciphertext_size, decrypt_values, encode, encrypt
from fedhp.combine import GlobalHP, combine_mean
from fedhp.errors import AllNoiseError, ClusterOverflowError, DivisorRangeError, InputError, ProtocolError
from fedhp.gridcluster import GridSpec, federated_grid_dbscan
from fedhp.hpdata import (
    DEFAULT_SPACE,
    ClientReport,
    HPRecord,
    generate_synthetic_lho,
    minmax_scale,
    select_top_fraction,
    unscale,
)
from fedhp.protocols import (
    ROUND_HEADER,
    SERVER,
    ProtocolConfig,
    Transcript,
    client_name,
    planned_bootstraps,
    run_pf_dbscan,
    run_pf_mean,
    run_plaintext_reference,
    run_protocol,
)

HEADER = ROUND_HEADER.size


def _reports(n, seed, heterogeneity=0.0):
    return generate_synthetic_lho(DEFAULT_SPACE, n, heterogeneity, seed)


def _scaled_report(cid, points, accs):
    raw = unscale(np.asarray(points, dtype=float), DEFAULT_SPACE)
    return ClientReport(cid, tuple(HPRecord(tuple(v), a) for v, a in zip(raw.tolist(), accs)), DEFAULT_SPACE)


@pytest.fixture(scope="module")
def mean_run(session_for):
    reports = _reports(3, 1)
    return reports, run_pf_mean(reports, ProtocolConfig("pf-mean"), session_for(3))


@pytest.fixture(scope="module")
def dbscan_run(session_for):
    reports = _reports(3, 2)
    cfg = ProtocolConfig("pf-dbscan", min_pts=2)
    return reports, run_pf_dbscan(reports, cfg, session_for(3))


class TestConfig:
    def test_defaults_resolve(self):
        reports = _reports(4, 0)
        m = ProtocolConfig("pf-mean").resolved(reports)
        assert m.top_fraction == 1.0 and m.count_cap == 4 * 49
        assert m.divide.input_range == (4 / (4 * 49), 1.0)
        assert m.divide.error_bound <= 1e-4 and m.divide.iterations >= 6
        dcfg = ProtocolConfig("pf-dbscan").resolved(reports)
        assert dcfg.top_fraction == 0.1 and dcfg.count_cap == 4 * 5
        assert dcfg.k_max == GridSpec(0.15, 2).n_cells == 49
        assert dcfg.divide.input_range == (1 / 20, (20 + 1e-3) / 20)

    def test_invalid(self):
        with pytest.raises(InputError):
            ProtocolConfig("pf-median")
        with pytest.raises(InputError):
            ProtocolConfig(top_fraction=0.0)
        with pytest.raises(InputError):
            ProtocolConfig(granularity=1.5)
        with pytest.raises(InputError):
            ProtocolConfig(count_cap=3).resolved(_reports(4, 0))

    def test_planned_bootstraps(self, ctx):
        reports = _reports(4, 0)
        assert planned_bootstraps(ProtocolConfig("pf-mean").resolved(reports), ctx.max_level) == 0
        assert planned_bootstraps(ProtocolConfig("pf-dbscan").resolved(reports), ctx.max_level) == 1
        with pytest.raises(InputError):
            planned_bootstraps(ProtocolConfig("pf-dbscan"), ctx.max_level)


class TestPlaintextReference:
    def test_pf_mean_equals_combine_mean(self):
        for seed in range(5):
            reports = _reports(4, seed, 0.2)
            ref = run_plaintext_reference(reports, ProtocolConfig("pf-mean"))
            assert ref.values == combine_mean(reports).values
            ref = run_plaintext_reference(reports, ProtocolConfig("pf-mean", top_fraction=0.2))
            top = [select_top_fraction(r, 0.2) for r in reports]
            assert ref.values == combine_mean(top).values

    @pytest.mark.parametrize("seed", range(50))
    def test_pf_dbscan_equals_grid_pipeline(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 8))
        reports = _reports(n, seed, float(rng.choice([0.0, 0.1, 0.3])))
        cfg = ProtocolConfig("pf-dbscan", min_pts=int(rng.integers(2, 5)), top_fraction=0.2)
        scaled = [minmax_scale(select_top_fraction(r, 0.2)) for r in reports]
        run = federated_grid_dbscan(scaled, GridSpec(0.15, 2), cfg.min_pts)
        if run.result is None:
            with pytest.raises(AllNoiseError):
                run_plaintext_reference(reports, cfg)
        else:
            assert run_plaintext_reference(reports, cfg).values == run.result.values

    @given(st.floats(0.0, 1e3), st.integers(1, 10**6), st.floats(1e-6, 1e-2))
    def test_epsilon_regularized_division(self, total, count, eps):
        exact = total / count
        assert abs(total / (count + eps) - exact) <= eps * exact + 1e-15


class TestPfMean:
    def test_transcript_shape(self, mean_run, ctx):
        reports, out = mean_run
        tr = out.transcript
        n = len(reports)
        for i in range(n):
            ups = [m for m in tr.messages if m.sender == client_name(i) and m.kind == "ciphertext"]
            assert len(ups) == 2
            assert all(m.nbytes == HEADER + ciphertext_size(ctx.max_level, ctx.n) for m in ups)
        assert tr.count("broadcast") == n
        assert tr.count("decryption-share") == n
        assert tr.count("decryption-aggregate") == n
        assert tr.bootstrap_count == 0
        assert [r["label"] for r in tr.rounds()] == ["upload", "decrypt"]

    def test_accuracy(self, mean_run):
        _, out = mean_run
        assert out.mse <= 1e-3
        assert out.mse < 1e-6

    def test_identical_single_record(self, session_for):
        rec = HPRecord((0.2, 0.8), 0.9)
        reports = [ClientReport(f"c{i}", (rec,), DEFAULT_SPACE) for i in range(3)]
        out = run_pf_mean(reports, ProtocolConfig("pf-mean"), session_for(3))
        assert np.allclose(out.global_hp.values, rec.values, atol=1e-3)

    def test_count_cap_exceeded(self, session_for):
        with pytest.raises(DivisorRangeError):
            run_pf_mean(_reports(3, 0), ProtocolConfig("pf-mean", count_cap=10), session_for(3))

    def test_party_mismatch(self, session_for):
        with pytest.raises(ProtocolError):
            run_pf_mean(_reports(4, 0), ProtocolConfig("pf-mean"), session_for(3))

    def test_report_json_round_trip(self, mean_run):
        _, out = mean_run
        data = out.to_dict()
        back = json.loads(json.dumps(data))
        assert back == data
        assert GlobalHP.from_dict(back["global_hp"]) == out.global_hp
        assert back["transcript"]["bootstrap_count"] == 0


class TestPfDbscan:
    def test_transcript_shape(self, dbscan_run):
        reports, out = dbscan_run
        tr = out.transcript
        for i in range(len(reports)):
            assert tr.count("ciphertext", sender=client_name(i)) == 3
        assert tr.count("ciphertext", sender=SERVER) == 0
        assert tr.bootstrap_count == out.details["planned_bootstraps"] == 1
        assert tr.count("refresh-share") == len(reports) * tr.bootstrap_count
        labels = [r["label"] for r in tr.rounds()]
        assert labels[0] == "grid-upload" and labels[-1] == "decrypt"
        assert labels.count("decrypt") == 2

    def test_matches_reference(self, dbscan_run):
        _, out = dbscan_run
        assert out.details["mask_agreement"]
        assert out.details["winner"] == out.details["reference_winner"]
        assert out.mse <= 5e-3

    def test_run_protocol_dispatch(self, dbscan_run, session_for):
        reports, out = dbscan_run
        again = run_protocol(reports, ProtocolConfig("pf-dbscan", min_pts=2), session_for(3))
        assert again.strategy == "pf-dbscan"
        assert again.transcript.bootstrap_count == out.transcript.bootstrap_count
        assert again.transcript.total_bytes == out.transcript.total_bytes

    def test_bytes_per_client_constant(self, session_for):
        totals = {}
        for n in (2, 3):
            out = run_pf_dbscan(_reports(n, 5), ProtocolConfig("pf-dbscan", min_pts=2, top_fraction=0.2),
                                session_for(n))
            totals[n] = out.transcript.total_bytes
        assert totals[2] / 2 == totals[3] / 3

    def test_all_noise(self, session_for):
        with pytest.raises(AllNoiseError):
            run_pf_dbscan(_reports(3, 0), ProtocolConfig("pf-dbscan", min_pts=50), session_for(3))

    def test_cluster_overflow(self, session_for):
        pts = [(0.05, 0.05), (0.06, 0.06), (0.95, 0.95), (0.96, 0.96)]
        reports = [_scaled_report(f"c{i}", pts, [0.9, 0.9, 0.8, 0.8]) for i in range(3)]
        cfg = ProtocolConfig("pf-dbscan", min_pts=2, top_fraction=1.0, k_max=1)
        with pytest.raises(ClusterOverflowError):
            run_pf_dbscan(reports, cfg, session_for(3))

    def test_two_clusters_pick_most_accurate(self, session_for):
        pts = [(0.05, 0.05), (0.06, 0.06), (0.95, 0.95), (0.96, 0.96)]
        reports = [_scaled_report(f"c{i}", pts, [0.6, 0.6, 0.9, 0.9]) for i in range(3)]
        out = run_pf_dbscan(reports, ProtocolConfig("pf-dbscan", min_pts=2, top_fraction=1.0), session_for(3))
        assert out.details["clusters"] == 2
        assert out.details["winner"] == 1
        assert np.allclose(out.global_hp.scaled(DEFAULT_SPACE), [0.955, 0.955], atol=1e-3)

    def test_party_mismatch(self, session_for):
        with pytest.raises(ProtocolError):
            run_pf_dbscan(_reports(2, 0), ProtocolConfig("pf-dbscan", min_pts=2), session_for(3))


@pytest.mark.parametrize("cap,min_pts", [(10, 1), (10, 4), (49, 7), (200, 4), (490, 4)])
def test_dense_mask_exhaustive(ctx, keys, ev, cap, min_pts):
    """Every integer count 0..cap lands on the right side of the shifted threshold."""
    counts = np.arange(cap + 1, dtype=np.float64)
    rng = np.random.default_rng(cap)

    def refresh(ct):
        return encrypt(ctx, keys[1], encode(ctx, decrypt_values(ctx, keys[0], ct)), rng)

    c = encrypt(ctx, keys[1], encode(ctx, counts), rng)
    shifted = ev.sub_plain(ev.mul_plain(c, 1.0 / cap), (min_pts - 0.5) / cap)
    out = decrypt_values(ctx, keys[0], sign(ev, shifted, CompareConfig(), refresh=refresh), cap + 1)
    assert np.array_equal(out > 0, counts >= min_pts)


def test_transcript_counts():
    tr = Transcript()
    msg = tr.record("pf-mean", 1, "upload", client_name(2), SERVER, "ciphertext", b"abc")
    assert len(msg) == HEADER + 3
    assert ROUND_HEADER.unpack(msg[:HEADER]) == (2, 1, 2)
    tr.record("pf-mean", 1, "upload", SERVER, client_name(0), "broadcast", b"")
    assert ROUND_HEADER.unpack(tr.record("pf-mean", 2, "x", SERVER, client_name(0), "b", b"")[:HEADER])[2] == 0xFFFF
    assert tr.total_bytes == 3 * HEADER + 3
    assert tr.count(sender=SERVER) == 2
    assert len(tr.rounds()) == 2
