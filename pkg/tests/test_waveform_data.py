import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pqcluster.waveform_data import (
    Dataset, EventLabel, WaveformRecord, filter_min_length, flatten, per_unit_scale, preprocess,
    read_jsonl, split, unflatten, write_jsonl, zero_pad_to,
)

SPC = 256


def sine_record(cycles=16, peak=1.0, rid="r", label=None, spc=SPC):
    t = np.arange(spc * cycles) / spc
    va = peak * np.sin(2 * np.pi * t)
    vb = peak * np.sin(2 * np.pi * t - 2 * np.pi / 3)
    vc = peak * np.sin(2 * np.pi * t + 2 * np.pi / 3)
    return WaveformRecord(rid, spc, cycles, va, vb, vc, label=label)


def const_record(cycles, values=(1.0, 2.0, 3.0), rid="c"):
    n = SPC * cycles
    return WaveformRecord(rid, SPC, cycles, *[np.full(n, v) for v in values])


def test_event_labels():
    assert [e.value for e in EventLabel] == ["normal", "sag", "swell", "interruption", "transient", "harmonics"]
    assert EventLabel.parse("Sag") is EventLabel.SAG
    with pytest.raises(ValueError):
        EventLabel.parse("flicker")


def test_record_validation():
    with pytest.raises(ValueError):
        WaveformRecord("x", 4, 2, np.zeros(8), np.zeros(8), np.zeros(7))
    bad = np.zeros(8)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        WaveformRecord("x", 4, 2, bad, np.zeros(8), np.zeros(8))
    with pytest.raises(ValueError):
        WaveformRecord("x", 4, 2, np.zeros(8), np.zeros(8), np.zeros(8), base_peak=0.0)


def test_dataset_unique_ids():
    with pytest.raises(ValueError):
        Dataset([const_record(1, rid="a"), const_record(1, rid="a")])


def test_per_unit_explicit_base():
    r = per_unit_scale(sine_record(peak=169.7), base=169.7)
    assert np.abs(r.va).max() == pytest.approx(1.0, abs=1e-12)
    assert r.base_peak == 169.7


def test_per_unit_unchanged_with_unit_base():
    r = sine_record()
    s = per_unit_scale(r, base=1.0)
    np.testing.assert_array_equal(s.va, r.va)


def test_per_unit_median_base_ignores_sag_cycles():
    r = sine_record(peak=100.0)
    va = r.va.copy()
    va[4 * SPC:7 * SPC] *= 0.5
    sagged = WaveformRecord("s", SPC, 16, va, r.vb, r.vc)
    peaks = np.abs(va.reshape(16, SPC)).max(axis=1)
    assert sorted(peaks)[7] == pytest.approx(100.0, rel=1e-4)
    assert per_unit_scale(sagged).base_peak == pytest.approx(np.median(peaks), rel=1e-15)
    assert per_unit_scale(sagged).base_peak == pytest.approx(100.0, rel=1e-4)


def test_degenerate_base():
    z = const_record(2, (0.0, 0.0, 0.0))
    with pytest.raises(ValueError, match="degenerate base"):
        per_unit_scale(z)
    with pytest.raises(ValueError):
        per_unit_scale(sine_record(), base=-1.0)


@given(st.floats(0.01, 1e4), st.integers(0, 2**32 - 1))
def test_per_unit_reconstructs(base, seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(3, 32))
    r = WaveformRecord("p", 16, 2, *w)
    s = per_unit_scale(r, base)
    np.testing.assert_allclose(s.va * base, r.va, rtol=1e-15, atol=0)


def test_zero_pad_eight_cycles():
    r = zero_pad_to(sine_record(cycles=8))
    assert r.n_cycles == 16 and r.padded_from_cycles == 8
    for ch in r.channels:
        assert ch.shape == (4096,)
        assert not np.any(ch[2048:])


def test_zero_pad_twelve_cycles_and_identity():
    r = zero_pad_to(sine_record(cycles=12))
    assert not np.any(r.va[-1024:]) and np.any(r.va[-1025])
    full = sine_record()
    same = zero_pad_to(full)
    np.testing.assert_array_equal(same.va, full.va)
    assert same.padded_from_cycles == 16


def test_zero_pad_never_truncates():
    with pytest.raises(ValueError):
        zero_pad_to(sine_record(cycles=16), 8)


@given(st.integers(1, 16))
def test_zero_pad_preserves_prefix(cycles):
    r = sine_record(cycles=cycles, spc=16)
    p = zero_pad_to(r)
    np.testing.assert_array_equal(p.va[:r.n_samples], r.va)


def test_filter_min_length():
    ds = Dataset([sine_record(8, rid="a"), sine_record(4, rid="b"), sine_record(16, rid="c")])
    assert filter_min_length(ds).ids == ["a", "c"]
    assert len(filter_min_length(Dataset([sine_record(2, rid=str(i)) for i in range(3)]))) == 0


def test_preprocess_idempotent():
    ds = Dataset([sine_record(8, peak=120.0, rid="a"), sine_record(16, peak=50.0, rid="b"),
                  sine_record(3, rid="short")])
    once = preprocess(ds)
    twice = preprocess(once)
    assert once.ids == ["a", "b"]
    assert all(a == b for a, b in zip(once, twice))
    assert all(r.n_cycles == 16 and r.n_samples == 4096 for r in once)


def test_preprocess_rejects_long_records():
    with pytest.raises(ValueError):
        preprocess(Dataset([sine_record(20)]))


def test_flatten_layout_and_round_trip():
    r = const_record(16)
    v = flatten(r)
    assert v.shape == (12288,)
    assert np.all(v[:4096] == 1) and np.all(v[4096:8192] == 2) and np.all(v[8192:] == 3)
    assert unflatten(v, r) == r
    assert not np.any(flatten(const_record(16, (0.0, 0.0, 0.0))))
    with pytest.raises(ValueError):
        flatten(const_record(8))


def test_split_sizes():
    ds = Dataset([const_record(1, rid=str(i)) for i in range(100)])
    s = split(ds, seed=1)
    assert [len(p) for p in s.split] == [70, 15, 15]
    s10 = split(Dataset(ds.records[:10]), seed=1)
    assert [len(p) for p in s10.split] == [8, 1, 1]
    assert split(ds, seed=4).split == split(ds, seed=4).split
    with pytest.raises(ValueError):
        split(ds, (0.5, 0.3, 0.3))


@given(st.integers(3, 200), st.integers(0, 2**31))
def test_split_partitions(n, seed):
    ds = Dataset([const_record(1, rid=str(i)) for i in range(n)])
    tr, va, te = split(ds, seed=seed).split
    assert sorted(tr + va + te, key=int) == ds.ids
    assert len(set(tr) | set(va) | set(te)) == n


def test_jsonl_round_trip(tmp_path):
    ds = Dataset([sine_record(8, rid="a", label="sag"), zero_pad_to(per_unit_scale(sine_record(rid="b")))])
    path = tmp_path / "d.jsonl"
    write_jsonl(ds, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    first = json.loads(lines[0])
    assert set(first) == {"id", "samples_per_cycle", "n_cycles", "label", "base_peak", "va", "vb", "vc"}
    assert first["label"] == "sag" and first["base_peak"] is None
    back = read_jsonl(path)
    assert all(a == b for a, b in zip(ds, back))


def test_jsonl_reports_bad_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("{not json}\n")
    with pytest.raises(ValueError, match=":1:"):
        read_jsonl(path)
