import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flipbound import lookup_table as lt
from flipbound.lookup_table import ErrorClass, ErrorModel

ALL_MODELS = [ErrorModel(*combo) for combo in itertools.product(lt.WEIGHTINGS, lt.ARITHMETICS, lt.OPERANDS, lt.SITES)]
EXACT = ErrorModel(arithmetic="exact")
exps = st.integers(0, 2046)


@pytest.fixture(scope="module")
def table():
    return lt.get_table(lt.DEFAULT_MODEL, 2.0)


def exponent_classes(i, j, model, threshold, site):
    return [o.error_class for o in lt.cell_outcomes(i, j, model, threshold) if o.site == site and 52 <= o.bit <= 62]


def test_model_cardinalities():
    assert ErrorModel("exponent").per_site == 11
    assert ErrorModel("category").per_site == 13
    assert ErrorModel("bits").per_site == 64
    assert ErrorModel("category", sites="abc").per_cell == 39


def test_model_rejects_unknown_option():
    with pytest.raises(ValueError):
        ErrorModel(weighting="bytes")


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.key())
def test_header_flags_roundtrip(model):
    assert ErrorModel.from_header(lt.WEIGHTINGS.index(model.weighting), model.flags) == model


def test_cell_1023_1023_one_bad_bit_per_operand():
    for model in (lt.DEFAULT_MODEL, EXACT):
        for site in "ab":
            cls = exponent_classes(1023, 1023, model, 2.0, site)
            assert cls[:10] == [ErrorClass.LT_ONE] * 10
            assert cls[10] == ErrorClass.NON_NUMERIC


def test_cell_1024_1025_every_exponent_flip_exceeds_one():
    for site in "ab":
        cls = exponent_classes(1024, 1025, EXACT, 8.0, site)
        assert all(c in (ErrorClass.GREY, ErrorClass.DETECTABLE) for c in cls)


def test_binary64_mode_marks_top_bit_upflip_non_numeric():
    # 0.5 * 0.5: the top exponent bit turns 0.5 into 2**1023
    assert exponent_classes(1022, 1022, EXACT, 2.0, "a")[10] == ErrorClass.DETECTABLE
    assert exponent_classes(1022, 1022, lt.DEFAULT_MODEL, 2.0, "a")[10] == ErrorClass.NON_NUMERIC


def test_overflowing_product_cell_is_all_non_numeric():
    counts = lt.tally_cell(2046, 2046, EXACT, 2.0)
    assert counts.tolist() == [0, 0, 0, 33]


def test_zero_partner_gives_zero_error():
    # operand b is zero, so flips of a cost nothing unless they produce Inf
    cls = exponent_classes(1023, 0, EXACT, 2.0, "a")
    assert cls[:10] == [ErrorClass.LT_ONE] * 10 and cls[10] == ErrorClass.NON_NUMERIC


@given(st.integers(1, 1023), st.integers(1, 1023))
def test_ten_of_eleven_split(i, j):
    for site in "ab":
        cls = exponent_classes(i, j, lt.DEFAULT_MODEL, 2.0, site)
        assert cls.count(ErrorClass.LT_ONE) == 10
        assert cls[10] == ErrorClass.NON_NUMERIC


@given(st.sampled_from(ALL_MODELS), exps, exps, st.sampled_from([1.5, 2.0, 1.9995160302237238, 4.0, 8e6, 1e300]))
def test_vectorised_builder_matches_reference(model, i, j, threshold):
    rows = lt.build_rows(np.array([i]), model, threshold)
    assert rows[0, j].tolist() == lt.tally_cell(i, j, model, threshold).tolist()


@given(st.sampled_from(ALL_MODELS), exps, exps)
def test_cell_total_and_symmetry(model, i, j):
    a = lt.tally_cell(i, j, model, 3.0)
    assert a.sum() == model.per_cell
    assert a.tolist() == lt.tally_cell(j, i, model, 3.0).tolist()


def test_full_table_symmetric_and_complete(table):
    c = table.counts
    assert c.shape == (2047, 2047, 4)
    assert np.array_equal(c, c.transpose(1, 0, 2))
    assert (c.sum(axis=2) == lt.DEFAULT_MODEL.per_cell).all()


def test_build_is_thread_count_invariant():
    model = ErrorModel("bits", "exact", "bound", "abc")
    a = lt.build_counts(model, 3.5, threads=1, chunk=512)
    b = lt.build_counts(model, 3.5, threads=3, chunk=97)
    assert np.array_equal(a, b)


def test_rect_matches_direct_sum(table, rng):
    for _ in range(20):
        i0, i1 = sorted(rng.integers(0, 2047, 2))
        j0, j1 = sorted(rng.integers(0, 2047, 2))
        direct = table.counts[i0:i1 + 1, j0:j1 + 1].sum(axis=(0, 1), dtype=np.int64)
        assert table.rect(i0, i1, j0, j1).tolist() == direct.tolist()


def test_binary_layout_and_roundtrip(tmp_path):
    model = ErrorModel("category", "exact", "bound", "ab")
    counts = np.zeros((2047, 2047, 4), dtype=np.uint8)
    counts[3, 5] = [1, 2, 3, 4]
    table = lt.ErrorLookupTable(model, 7.25, counts)
    path = tmp_path / "t.bin"
    table.save(path)
    raw = path.read_bytes()
    assert len(raw) == 16 + 2047 * 2047 * 4
    assert raw[:4] == b"SDCT"
    assert struct.unpack("<H", raw[4:6])[0] == lt.FORMAT_VERSION
    assert raw[6] == 1 and raw[7] == 0b010
    assert struct.unpack("<d", raw[8:16])[0] == 7.25
    cell = 16 + (3 * 2047 + 5) * 4
    assert list(raw[cell:cell + 4]) == [1, 2, 3, 4]
    back = lt.read_table(path)
    assert back.model == model and back.threshold == 7.25
    assert np.array_equal(back.counts, counts)


def test_read_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ValueError, match="magic"):
        lt.read_table(p)
    p.write_bytes(lt.HEADER.pack(b"SDCT", 99, 0, 0, 2.0))
    with pytest.raises(ValueError, match="version"):
        lt.read_table(p)
    p.write_bytes(lt.HEADER.pack(b"SDCT", 1, 0, 0, 2.0) + bytes(10))
    with pytest.raises(ValueError, match="body"):
        lt.read_table(p)


def test_disk_cache(tmp_path, monkeypatch):
    monkeypatch.setenv(lt.CACHE_ENV, str(tmp_path))
    monkeypatch.setattr(lt, "_MEMORY", {})
    model = ErrorModel("exponent", "exact", "representative", "ab")
    first = lt.get_table(model, 5.0)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    monkeypatch.setattr(lt, "_MEMORY", {})
    assert np.array_equal(lt.get_table(model, 5.0).counts, first.counts)


def test_threshold_must_exceed_one():
    with pytest.raises(ValueError):
        lt.build_counts(threshold=1.0)


@pytest.mark.parametrize("big, small, t, strict, expected", [
    (0, -np.inf, 2.0, False, 2),      # exactly 1 is grey
    (0, -60, 2.0, False, 1),          # 1 - 2**-60 < 1 although it rounds to 1
    (2, -60, 4.0, False, 2),          # just below a power-of-two threshold
    (2, -np.inf, 4.0, False, 2),      # equal to the threshold
    (3, 2, 4.0, False, 2),            # 8 - 4 = 4
    (3, 1, 4.0, False, 3),            # 6 > 4
    (1, 0, 2.0, True, 1),             # strict bound of exactly 1
    (2, -np.inf, 4.0, True, 2),       # bound 4 allows at most grey
    (-np.inf, -np.inf, 2.0, False, 1),
    (2000, -np.inf, 1e300, False, 3),
])
def test_classify_pow2_diff_exact_edges(big, small, t, strict, expected):
    got = lt.classify_pow2_diff(np.array([float(big)]), np.array([float(small)]), t, strict)
    assert got[0] == expected


def test_tally_arithmetic():
    a = lt.ErrorClassTally(1, 2, 3, 4, threshold=2.0)
    b = a + a
    assert b.counts == (2, 4, 6, 8) and b.total == 20
    assert b.shares == (0.1, 0.2, 0.3, 0.4)
    assert b.as_dict()["shares"]["class4"] == 0.4
    assert lt.ErrorClassTally().shares == (0.0, 0.0, 0.0, 0.0)
