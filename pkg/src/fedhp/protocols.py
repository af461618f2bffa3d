"""Encrypted combination protocols over simulated parties.

All parties live in one process.  Every message is serialized, prefixed
with a round header, recorded in a :class:`Transcript` and parsed back by
the receiver, so byte counts are exact.  The topology is a star: clients
talk only to the server.

PF-Mean: each client uploads the encrypted per-dimension sums of its scaled
HPs and its record count; the server adds and divides; everyone decrypts.

PF-DBSCAN: clients upload encrypted cell-count grids; the server compares
the aggregate against the density threshold; the decrypted dense mask
drives local clustering; clients upload per-cluster HP/accuracy sums and
counts; the server divides; clients pick the most accurate cluster.
"""

from __future__ import annotations

import dataclasses
import logging
import struct
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import approx, mhe
from .approx import CompareConfig, DivideConfig
from .ckks import scheme as S
from .ckks.context import CkksContext, context_for
from .ckks.evaluator import Evaluator, poly_depth
from .ckks.scheme import Ciphertext
from .ckks.serialize import array_from_bytes, array_size, array_to_bytes, ciphertext_from_bytes, ciphertext_to_bytes
from .combine import GlobalHP, combine_mean
from .errors import AllNoiseError, DivisorRangeError, InputError, ProtocolError
from .gridcluster import (
    GridSpec,
    aggregate,
    closest_cells,
    discretize,
    federated_grid_dbscan,
    merge_cells,
    relocate_points,
    select_cluster,
    summarize,
)
from .hpdata import ClientReport, HPSpace, minmax_scale, select_top_fraction, unscale

log = logging.getLogger(__name__)

STRATEGIES = ("pf-mean", "pf-dbscan")
PROTOCOL_IDS = {"keygen": 1, "pf-mean": 2, "pf-dbscan": 3}

# protocol id, round number, sender party id
ROUND_HEADER = struct.Struct("<BHH")
SERVER = "server"
SERVER_ID = 0xFFFF

# worst-case relative error asked of the divisions
DIVIDE_REL_TOL = 1e-4


# -- transcript ---------------------------------------------------------------


@dataclass(frozen=True)
class Message:
    protocol: str
    round: int
    label: str
    sender: str
    receiver: str
    kind: str
    nbytes: int


@dataclass
class Transcript:
    messages: list[Message] = field(default_factory=list)
    timings_ms: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    bootstrap_count: int = 0

    def record(self, protocol: str, round_no: int, label: str, sender: str, receiver: str,
               kind: str, payload: bytes) -> bytes:
        pid = SERVER_ID if sender == SERVER else _party_index(sender)
        msg = ROUND_HEADER.pack(PROTOCOL_IDS[protocol], round_no, pid) + payload
        self.messages.append(Message(protocol, round_no, label, sender, receiver, kind, len(msg)))
        return msg

    @contextmanager
    def timed(self, op: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings_ms[op].append((time.perf_counter() - t0) * 1e3)

    @property
    def total_bytes(self) -> int:
        return sum(m.nbytes for m in self.messages)

    def count(self, kind: str | None = None, sender: str | None = None,
              receiver: str | None = None) -> int:
        return sum(1 for m in self.messages
                   if (kind is None or m.kind == kind) and (sender is None or m.sender == sender)
                   and (receiver is None or m.receiver == receiver))

    def rounds(self) -> list[dict]:
        grouped: dict[tuple, list[Message]] = {}
        for m in self.messages:
            grouped.setdefault((m.protocol, m.round, m.label), []).append(m)
        return [
            {"protocol": p, "round": r, "label": label,
             "bytes": sum(m.nbytes for m in msgs),
             "messages": [{"sender": m.sender, "receiver": m.receiver, "kind": m.kind, "bytes": m.nbytes}
                          for m in msgs]}
            for (p, r, label), msgs in grouped.items()
        ]

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds(),
            "total_bytes": self.total_bytes,
            "bootstrap_count": self.bootstrap_count,
            "timings_ms": {op: {"count": len(v), "total": float(sum(v)), "mean": float(np.mean(v))}
                           for op, v in self.timings_ms.items()},
        }


def client_name(i: int) -> str:
    return f"client-{i}"


def _party_index(name: str) -> int:
    return int(name.rsplit("-", 1)[1])


def _pack_arrays(arrays: Sequence[np.ndarray]) -> bytes:
    return b"".join(array_to_bytes(a) for a in arrays)


def _unpack_arrays(data: bytes) -> list[np.ndarray]:
    out, pos = [], 0
    while pos < len(data):
        ndim = data[pos + 6]
        shape = struct.unpack_from(f"<{ndim}I", data, pos + 7)
        size = array_size(shape)
        out.append(array_from_bytes(data[pos : pos + size]))
        pos += size
    return out


class _Channel:
    """Round-numbered message passing for one protocol execution."""

    def __init__(self, protocol: str, transcript: Transcript, parties: int):
        self.protocol = protocol
        self.tr = transcript
        self.parties = parties
        self.round = 0
        self.label = ""

    def next_round(self, label: str) -> None:
        self.round += 1
        self.label = label

    def _send(self, sender: str, receiver: str, kind: str, payload: bytes) -> bytes:
        data = self.tr.record(self.protocol, self.round, self.label, sender, receiver, kind, payload)
        return data[ROUND_HEADER.size :]

    def upload_ct(self, party: int, ct: Ciphertext, kind: str = "ciphertext") -> Ciphertext:
        return ciphertext_from_bytes(self._send(client_name(party), SERVER, kind, ciphertext_to_bytes(ct)))

    def upload_arrays(self, party: int, arrays: Sequence[np.ndarray], kind: str) -> list[np.ndarray]:
        return _unpack_arrays(self._send(client_name(party), SERVER, kind, _pack_arrays(arrays)))

    def broadcast_ct(self, ct: Ciphertext, kind: str = "broadcast") -> Ciphertext:
        payload = ciphertext_to_bytes(ct)
        for i in range(self.parties):
            data = self._send(SERVER, client_name(i), kind, payload)
        return ciphertext_from_bytes(data)

    def broadcast_arrays(self, arrays: Sequence[np.ndarray], kind: str) -> list[np.ndarray]:
        payload = _pack_arrays(arrays)
        for i in range(self.parties):
            data = self._send(SERVER, client_name(i), kind, payload)
        return _unpack_arrays(data)


# -- session ------------------------------------------------------------------


@dataclass
class Session:
    """Collective keys of one set of parties, reusable across protocol runs."""

    ctx: CkksContext
    parties: int
    seed: int
    crs: mhe.CommonReference
    shares: list[mhe.SecretKeyShare]
    pk: S.PublicKey
    keys: mhe.EvalKeySet
    evaluator: Evaluator
    keygen_transcript: Transcript
    smudge_bits: float = mhe.DEFAULT_SMUDGE_BITS
    _nonce: int = 0
    _runs: int = 0

    @classmethod
    def establish(cls, parties: int, preset: str = "test", seed: int = 0,
                  smudge_bits: float = mhe.DEFAULT_SMUDGE_BITS) -> "Session":
        """Run secret-key generation and both collective key protocols."""
        if parties < 1:
            raise InputError("need at least one party")
        ctx = context_for(preset)
        tr = Transcript()
        ch = _Channel("keygen", tr, parties)
        crs = mhe.CommonReference(ctx, seed)
        rngs = [np.random.default_rng([seed, 1, i]) for i in range(parties)]
        with tr.timed("sec_key_gen"):
            shares = [mhe.sec_key_gen(ctx, i, r) for i, r in enumerate(rngs)]

        ch.next_round("public-key")
        with tr.timed("d_key_gen_pk"):
            pk_parts = [ch.upload_arrays(i, [mhe.pk_share(ctx, sh, crs, r)], "pk-share")[0]
                        for i, (sh, r) in enumerate(zip(shares, rngs))]
            pk = mhe.aggregate_pk(ctx, pk_parts, crs, parties)
            ch.broadcast_arrays([pk.b], "public-key")

        with tr.timed("d_key_gen_ek"):
            ch.next_round("relin-1")
            r1, ephemeral = [], []
            for i, (sh, r) in enumerate(zip(shares, rngs)):
                share, u = mhe.rlk_round1(ctx, sh, crs, r)
                h0, h1 = ch.upload_arrays(i, [share.h0, share.h1], "rlk1-share")
                r1.append(mhe.RlkRound1Share(h0, h1))
                ephemeral.append(u)
            agg1 = mhe.aggregate_rlk_round1(ctx, r1, parties)
            h0, h1 = ch.broadcast_arrays([agg1.h0, agg1.h1], "rlk1-aggregate")
            agg1 = mhe.RlkRound1Share(h0, h1)
            ch.next_round("relin-2")
            r2 = []
            for i, (sh, u, r) in enumerate(zip(shares, ephemeral, rngs)):
                share = mhe.rlk_round2(ctx, sh, u, agg1, r)
                h0, h1 = ch.upload_arrays(i, [share.h0, share.h1], "rlk2-share")
                r2.append(mhe.RlkRound2Share(h0, h1))
            keys = mhe.EvalKeySet(mhe.aggregate_rlk(ctx, agg1, r2, parties))
        log.info("session: %d parties keyed in %.1f s", parties,
                 (sum(tr.timings_ms["d_key_gen_pk"]) + sum(tr.timings_ms["d_key_gen_ek"])) / 1e3)
        return cls(ctx, parties, seed, crs, shares, pk, keys, mhe.collective_evaluator(ctx, keys), tr,
                   smudge_bits)

    @property
    def slots(self) -> int:
        return self.ctx.params.slots

    def next_nonce(self) -> int:
        self._nonce += 1
        return self._nonce

    def run_rngs(self) -> list[np.random.Generator]:
        """Fresh per-party randomness for one protocol execution."""
        self._runs += 1
        return [np.random.default_rng([self.seed, 2, self._runs, i]) for i in range(self.parties)]


class _Execution:
    """Session plus channel plus party randomness for one protocol run."""

    def __init__(self, session: Session, protocol: str, transcript: Transcript):
        self.s = session
        self.ctx = session.ctx
        self.ev = session.evaluator
        self.tr = transcript
        self.ch = _Channel(protocol, transcript, session.parties)
        self.rngs = session.run_rngs()

    def encrypt(self, party: int, values) -> Ciphertext:
        with self.tr.timed("encrypt"):
            return S.encrypt(self.ctx, self.s.pk, S.encode(self.ctx, values), self.rngs[party])

    def refresh(self, ct: Ciphertext) -> Ciphertext:
        s, ctx = self.s, self.ctx
        with self.tr.timed("d_bootstrap"):
            nonce = s.next_nonce()
            self.ch.next_round("refresh")
            seen = self.ch.broadcast_ct(ct)
            shares = []
            for i, (sh, r) in enumerate(zip(s.shares, self.rngs)):
                rs = mhe.refresh_share(ctx, sh, seen, s.crs, nonce, r, s.parties, s.smudge_bits)
                low, top = self.ch.upload_arrays(i, [rs.low, rs.top], "refresh-share")
                shares.append(mhe.RefreshShare(low, top))
            out = mhe.combine_refresh(ctx, s.pk, ct, shares, s.crs, nonce, s.parties)
        self.tr.bootstrap_count += 1
        return out

    def decrypt(self, ct: Ciphertext, slots: int) -> np.ndarray:
        s, ctx = self.s, self.ctx
        with self.tr.timed("d_decrypt"):
            self.ch.next_round("decrypt")
            seen = self.ch.broadcast_ct(ct)
            dshares = [self.ch.upload_arrays(i, [mhe.decryption_share(ctx, sh, seen, r, s.parties,
                                                                     s.smudge_bits)], "decryption-share")[0]
                       for i, (sh, r) in enumerate(zip(s.shares, self.rngs))]
            rows = ctx.rows(ct.level)
            agg = mhe._sum(ctx, dshares, rows)
            agg = self.ch.broadcast_arrays([agg], "decryption-aggregate")[0]
            return mhe.combine_decryption(ctx, ct, [agg], 1, slots)


# -- configuration and outcome ------------------------------------------------


@dataclass(frozen=True)
class ProtocolConfig:
    """Public parameters of one protocol run.

    ``None`` fields are resolved from the reports by :meth:`resolved`:
    ``top_fraction`` to 1.0 (PF-Mean) or 0.1 (PF-DBSCAN), ``count_cap`` to
    the total number of selected records, ``k_max`` to the number of grid
    cells and ``divide`` to the public divisor range with
    ``divide_iterations`` Goldschmidt steps, or by default the fewest steps
    (at least 6) meeting a 1e-4 relative error on that range.
    """

    strategy: str = "pf-dbscan"
    granularity: float = 0.15
    min_pts: int = 4
    top_fraction: Optional[float] = None
    count_cap: Optional[int] = None
    k_max: Optional[int] = None
    preset: str = "test"
    divide_iterations: Optional[int] = None
    divide: Optional[DivideConfig] = None
    compare: CompareConfig = CompareConfig()
    epsilon: float = 1e-3
    reserve_levels: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InputError(f"unknown protocol {self.strategy!r}; choose from {STRATEGIES}")
        if self.top_fraction is not None and not 0 < self.top_fraction <= 1:
            raise InputError("top_fraction must lie in (0, 1]")
        if self.min_pts < 1:
            raise InputError("min_pts must be >= 1")
        if self.epsilon <= 0:
            raise InputError("epsilon must be > 0")
        if self.count_cap is not None and self.count_cap < 1:
            raise InputError("count_cap must be >= 1")
        GridSpec(self.granularity, 1)

    def resolved(self, reports: Sequence[ClientReport]) -> "ProtocolConfig":
        if not reports:
            raise InputError("need at least one client report")
        frac = self.top_fraction if self.top_fraction is not None else (
            1.0 if self.strategy == "pf-mean" else 0.1)
        selected = sum(len(select_top_fraction(r, frac)) for r in reports)
        cap = self.count_cap if self.count_cap is not None else selected
        n = len(reports)
        if cap < n:
            raise InputError(f"count_cap {cap} is below the number of clients {n}")
        spec = GridSpec(self.granularity, reports[0].space.d)
        k_max = self.k_max if self.k_max is not None else spec.n_cells
        if self.strategy == "pf-mean":
            lo, hi = n / cap, 1.0
        else:
            lo, hi = 1.0 / cap, (cap + self.epsilon) / cap
        if self.divide is not None:
            divide = self.divide
        elif self.divide_iterations is not None:
            divide = DivideConfig(self.divide_iterations, (lo, hi))
        else:
            divide = DivideConfig.for_range(lo, hi, DIVIDE_REL_TOL, min_iterations=6)
        return dataclasses.replace(self, top_fraction=frac, count_cap=cap, k_max=k_max, divide=divide)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if self.divide is not None:
            out["divide"] = {"iterations": self.divide.iterations,
                             "input_range": list(self.divide.input_range)}
        return out


@dataclass
class TuningOutcome:
    strategy: str
    global_hp: GlobalHP
    plaintext_reference: GlobalHP
    mse: float
    transcript: Transcript
    config: ProtocolConfig
    space: HPSpace
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "config": self.config.to_dict(),
            "global_hp": self.global_hp.to_dict(self.space),
            "plaintext_reference": self.plaintext_reference.to_dict(self.space),
            "mse": self.mse,
            "transcript": self.transcript.to_dict(),
            "details": self.details,
        }


def scaled_mse(a: GlobalHP, b: GlobalHP, space: HPSpace) -> float:
    return float(np.mean((a.scaled(space) - b.scaled(space)) ** 2))


def _check_inputs(reports: Sequence[ClientReport], session: Session | None) -> HPSpace:
    if not reports:
        raise InputError("need at least one client report")
    space = reports[0].space
    for r in reports:
        if r.space != space:
            raise InputError(f"client {r.client_id} uses a different HP space")
    if session is not None and session.parties != len(reports):
        raise ProtocolError(f"session has {session.parties} parties but {len(reports)} clients reported")
    return space


def _prepare(reports, cfg: ProtocolConfig):
    selected = [select_top_fraction(r, cfg.top_fraction) for r in reports]
    return selected, [minmax_scale(r) for r in selected]


# -- level planning -----------------------------------------------------------


def _plan_compare(level: int, top: int, cfg: CompareConfig, reserve: int) -> tuple[int, int]:
    boots = 0
    for p in cfg.steps:
        depth = poly_depth(p)
        if level - depth < reserve:
            level, boots = top, boots + 1
        level -= depth
    return level, boots


def _plan_divide(level: int, top: int, cfg: DivideConfig, reserve: int) -> tuple[int, int]:
    boots = 0
    if level - 2 < reserve:
        level, boots = top, boots + 1
    level -= 2
    for _ in range(cfg.iterations):
        if level - 1 < reserve:
            level, boots = top, boots + 1
        level -= 1
    return level, boots


def planned_bootstraps(config: ProtocolConfig, max_level: int) -> int:
    """Distributed bootstraps one run performs, from the level schedule alone."""
    if config.strategy == "pf-mean":
        return 0
    if config.divide is None:
        raise InputError("resolve the config before planning")
    _, compare_boots = _plan_compare(max_level - 1, max_level, config.compare, config.reserve_levels)
    _, divide_boots = _plan_divide(max_level, max_level, config.divide, config.reserve_levels)
    return compare_boots + divide_boots


# -- protocols ----------------------------------------------------------------


def run_plaintext_reference(reports: Sequence[ClientReport], config: ProtocolConfig) -> GlobalHP:
    """The same dataflow with exact arithmetic: true division and true sign."""
    _check_inputs(reports, None)
    cfg = config.resolved(reports)
    selected, scaled = _prepare(reports, cfg)
    if cfg.strategy == "pf-mean":
        return dataclasses.replace(combine_mean(selected), provenance="pf-mean-reference")
    spec = GridSpec(cfg.granularity, reports[0].space.d)
    run = federated_grid_dbscan(scaled, spec, cfg.min_pts, cfg.k_max, reports[0].space)
    if run.result is None:
        raise AllNoiseError(f"no cell reaches min_pts={cfg.min_pts}")
    return dataclasses.replace(run.result, provenance="pf-dbscan-reference")


def run_pf_mean(reports: Sequence[ClientReport], config: ProtocolConfig, session: Session) -> TuningOutcome:
    space = _check_inputs(reports, session)
    cfg = dataclasses.replace(config, strategy="pf-mean").resolved(reports)
    if space.d > session.slots:
        raise InputError(f"{space.d} HP dims exceed the slot count")
    selected, scaled = _prepare(reports, cfg)
    cap = cfg.count_cap
    total = sum(len(r) for r in scaled)
    if total > cap:
        raise DivisorRangeError(f"{total} records exceed count_cap={cap}")

    tr = Transcript()
    ex = _Execution(session, "pf-mean", tr)
    ev = ex.ev
    ex.ch.next_round("upload")
    sums, counts = [], []
    for i, rep in enumerate(scaled):
        sums.append(ex.ch.upload_ct(i, ex.encrypt(i, rep.values_array().sum(axis=0) / cap)))
        counts.append(ex.ch.upload_ct(i, ex.encrypt(i, np.full(space.d, len(rep) / cap))))
    with tr.timed("add"):
        num, den = ev.add_many(sums), ev.add_many(counts)
    with tr.timed("divide"):
        quotient = approx.divide(ev, num, den, cfg.divide, refresh=None)
    means = np.clip(ex.decrypt(quotient, space.d), 0.0, 1.0)

    result = GlobalHP(tuple(unscale(means, space).tolist()), "pf-mean")
    reference = run_plaintext_reference(reports, cfg)
    mse = scaled_mse(result, reference, space)
    log.info("pf-mean: %d clients, mse %.3g, %d bytes", len(reports), mse, tr.total_bytes)
    return TuningOutcome("pf-mean", result, reference, mse, tr, cfg, space,
                         {"records": total, "divide_iterations": cfg.divide.iterations})


def run_pf_dbscan(reports: Sequence[ClientReport], config: ProtocolConfig, session: Session) -> TuningOutcome:
    space = _check_inputs(reports, session)
    cfg = dataclasses.replace(config, strategy="pf-dbscan").resolved(reports)
    d = space.d
    spec = GridSpec(cfg.granularity, d)
    spec.check_capacity(session.slots)
    k_max, cap = cfg.k_max, cfg.count_cap
    if (d + 1) * k_max > session.slots:
        raise InputError(f"{d + 1} segments of k_max={k_max} exceed {session.slots} slots")
    selected, scaled = _prepare(reports, cfg)
    reference = run_plaintext_reference(reports, cfg)

    tr = Transcript()
    ex = _Execution(session, "pf-dbscan", tr)
    ev = ex.ev

    # grid setup
    with tr.timed("grid_setup"):
        grids = [discretize(r, spec) for r in scaled]
        closest = [closest_cells(r, spec) for r in scaled]
    if aggregate(grids).counts.max() > cap:
        raise DivisorRangeError(f"a cell count exceeds count_cap={cap}")
    ex.ch.next_round("grid-upload")
    cts = [ex.ch.upload_ct(i, ex.encrypt(i, g.counts.astype(np.float64))) for i, g in enumerate(grids)]

    # aggregation round 1: dense mask
    with tr.timed("add"):
        total = ev.add_many(cts)
    with tr.timed("compare"):
        shifted = ev.sub_plain(ev.mul_plain(total, 1.0 / cap), (cfg.min_pts - 0.5) / cap)
        signs = approx.sign(ev, shifted, cfg.compare, refresh=ex.refresh, reserve=cfg.reserve_levels)
    mask = ex.decrypt(signs, spec.n_cells) > 0

    # local clustering
    with tr.timed("local_clustering"):
        labels = merge_cells(mask, spec)
        n_clusters = int(labels.max()) + 1
        if n_clusters == 0:
            raise AllNoiseError(f"no cell reaches min_pts={cfg.min_pts}")
        retained = [relocate_points(r, spec, c, mask) for r, c in zip(scaled, closest)]
        summaries = [summarize(p, labels, k_max, d) for p in retained]
    if sum(s.count for s in summaries).max() > cap:
        raise DivisorRangeError(f"a cluster count exceeds count_cap={cap}")
    ex.ch.next_round("cluster-upload")
    packed, tiled = [], []
    for i, sm in enumerate(summaries):
        vals = np.concatenate([sm.hp_sums.ravel(), sm.acc_sum]) / cap
        packed.append(ex.ch.upload_ct(i, ex.encrypt(i, vals)))
        tiled.append(ex.ch.upload_ct(i, ex.encrypt(i, np.tile(sm.count, d + 1) / cap)))

    # aggregation round 2: per-cluster means
    with tr.timed("add"):
        num = ev.add_many(packed)
        den = ev.add_plain(ev.add_many(tiled), cfg.epsilon / cap)
    with tr.timed("divide"):
        quotient = approx.divide(ev, num, den, cfg.divide, refresh=ex.refresh,
                                 reserve=cfg.reserve_levels)
    means = ex.decrypt(quotient, (d + 1) * k_max).reshape(d + 1, k_max)

    valid = np.arange(k_max) < n_clusters
    result = dataclasses.replace(select_cluster(means[:d], means[d], valid, space), provenance="pf-dbscan")
    winner = int(np.argmax(np.where(valid, means[d], -np.inf)))
    ref_run = federated_grid_dbscan(scaled, spec, cfg.min_pts, k_max, space)
    ref_counts = ref_run.summary.count
    with np.errstate(divide="ignore", invalid="ignore"):
        ref_acc = np.where(ref_counts > 0, ref_run.summary.acc_sum / ref_counts, -np.inf)
    ref_winner = int(np.argmax(ref_acc))
    mse = scaled_mse(result, reference, space)
    expected = planned_bootstraps(cfg, session.ctx.max_level)
    log.info("pf-dbscan: %d clusters, winner %d (reference %d), mse %.3g, %d bootstraps",
             n_clusters, winner, ref_winner, mse, tr.bootstrap_count)
    details = {
        "clusters": n_clusters,
        "winner": winner,
        "reference_winner": ref_winner,
        "mask_agreement": bool(np.array_equal(mask, ref_run.mask)),
        "dense_cells": int(mask.sum()),
        "planned_bootstraps": expected,
        "divide_iterations": cfg.divide.iterations,
    }
    return TuningOutcome("pf-dbscan", result, reference, mse, tr, cfg, space, details)


def run_protocol(reports: Sequence[ClientReport], config: ProtocolConfig, session: Session) -> TuningOutcome:
    if config.strategy == "pf-mean":
        return run_pf_mean(reports, config, session)
    return run_pf_dbscan(reports, config, session)
