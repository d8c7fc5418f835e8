import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankrobust.corpus import (
    Dataset,
    PerturbationSpec,
    Scenario,
    UserSequence,
    dumps_canonical,
    filter_min_length,
    gen_synthetic,
    parse_foursquare,
    parse_movielens,
    perturb,
    read_canonical,
    split_leave_one_out,
    write_canonical,
)

PREFIX = tuple(range(1, 10))


def is_subsequence(sub, seq):
    it = iter(seq)
    return all(any(x == y for y in it) for x in sub)


# -- perturb

def test_perturb_examples():
    assert perturb(PREFIX, PerturbationSpec(Scenario.BEGINNING, 3)) == (4, 5, 6, 7, 8, 9)
    assert perturb(PREFIX, PerturbationSpec(Scenario.END, 3)) == (1, 2, 3, 4, 5, 6)
    # start = floor((9 - 2) / 2) + 1 = 4 (1-based): items 4 and 5 go
    assert perturb(PREFIX, PerturbationSpec(Scenario.MIDDLE, 2)) == (1, 2, 3, 6, 7, 8, 9)


def test_perturb_zero_is_identity():
    for sc in Scenario:
        assert perturb(PREFIX, PerturbationSpec(sc, 0)) == PREFIX


def test_perturb_cannot_empty_prefix():
    with pytest.raises(ValueError):
        perturb(PREFIX, PerturbationSpec(Scenario.END, 9))
    with pytest.raises(ValueError):
        PerturbationSpec(Scenario.END, -1)


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 80).flatmap(lambda m: st.tuples(st.just(m), st.integers(0, m - 1))),
       st.sampled_from(list(Scenario)))
def test_perturb_properties(mn, scenario):
    m, n = mn
    seq = tuple(range(100, 100 + m))
    out = perturb(seq, PerturbationSpec(scenario, n))
    assert len(out) == m - n
    assert is_subsequence(out, seq)
    removed = [i for i, x in enumerate(seq) if x not in set(out)]
    assert len(removed) == n
    if n:
        assert removed == list(range(removed[0], removed[0] + n))


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 60).flatmap(lambda m: st.tuples(st.just(m), st.integers(0, m - 1), st.integers(0, m - 1))))
def test_beginning_end_commute(case):
    m, a, b = case
    if a + b >= m:
        return
    seq = tuple(range(m))
    one = perturb(perturb(seq, PerturbationSpec("beginning", a)), PerturbationSpec("end", b))
    two = perturb(perturb(seq, PerturbationSpec("end", b)), PerturbationSpec("beginning", a))
    assert one == two


# -- split

def _dataset(lengths):
    users = [UserSequence(u, tuple((u * 7 + i) % 50 for i in range(L))) for u, L in enumerate(lengths)]
    return Dataset(tuple(users), 50, "toy")


def test_split_boundaries():
    ds = _dataset([12])
    sp = split_leave_one_out(ds, PerturbationSpec("end", 10))
    u = sp.users[0]
    assert len(u.train_items) == 1
    assert u.valid_target == u.train_items[-1]
    with pytest.raises(ValueError):
        split_leave_one_out(ds, PerturbationSpec("beginning", 11))
    base = split_leave_one_out(ds, PerturbationSpec("middle", 0)).users[0]
    assert base.train_items == ds.users[0].items[:-1]


def test_test_data_invariant_across_cells(small_synthetic):
    ref = split_leave_one_out(small_synthetic, PerturbationSpec("end", 0))
    for sc in Scenario:
        for n in range(0, 11):
            sp = split_leave_one_out(small_synthetic, PerturbationSpec(sc, n))
            for a, b in zip(ref.users, sp.users):
                assert (a.test_context, a.test_target) == (b.test_context, b.test_target)
                assert len(b.train_items) == len(a.test_context) - n


# -- filtering

def test_filter_min_length():
    ds = _dataset([5, 11, 30])
    out = filter_min_length(ds, 11)
    assert sorted(len(u) for u in out.users) == [11, 30]
    used = {i for u in out.users for i in u.items}
    assert used == set(range(out.n_items))
    with pytest.raises(ValueError):
        filter_min_length(_dataset([3, 3]), 11)


# -- parsers

def test_parse_movielens_sorts_by_time(tmp_path):
    f = tmp_path / "u.data"
    f.write_text("1\t20\t5\t200\n1\t10\t3\t100\n")
    ds = parse_movielens(f, "ml100k")
    assert ds.n_users == 1
    # item 10 -> index 0, item 20 -> index 1; item 10 came first in time
    assert ds.users[0].items == (0, 1)
    assert ds.users[0].timestamps == (100, 200)


def test_parse_movielens_ml1m_and_ties(tmp_path):
    f = tmp_path / "ratings.dat"
    f.write_text("3::7::4::50\n3::5::4::50\n3::9::1::10\n")
    ds = parse_movielens(f, "ml1m")
    # stable on the timestamp tie: file order 7 then 5
    assert ds.users[0].items == (2, 1, 0)
    assert ds.users[0].user_id == 3


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.data"
    bad.write_text("1\t2\t3\t4\n1\t2\n")
    with pytest.raises(ValueError, match=":2:"):
        parse_movielens(bad, "ml100k")
    empty = tmp_path / "empty.data"
    empty.write_text("")
    with pytest.raises(ValueError, match="empty"):
        parse_movielens(empty, "ml100k")


def test_parse_foursquare(tmp_path):
    rows = [
        "470\t49bbd6c0f964a520f4531fe3\t4bf58dd8d48988d127951735\tArts & Crafts Store\t40.7\t-74.0\t-240\tTue Apr 03 18:00:09 +0000 2012",
        "470\t4a43c0aef964a520c6a61fe3\t4bf58dd8d48988d1df941735\tBridge\t40.6\t-74.0\t-240\tTue Apr 03 18:00:25 +0000 2012",
        "470\t3fd66200f964a520e4e41ee3\t4bf58dd8d48988d1e7941735\tPark\t40.7\t-74.0\t-240\tTue Apr 03 17:00:00 +0000 2012",
    ]
    f = tmp_path / "fs.txt"
    f.write_text("\n".join(rows) + "\n")
    ds = parse_foursquare(f)
    assert ds.n_users == 1 and ds.n_items == 3
    # lexicographic venue index: 3fd.. -> 0, 49b.. -> 1, 4a4.. -> 2
    assert ds.users[0].items == (0, 1, 2)
    ts = ds.users[0].timestamps
    assert list(ts) == sorted(ts)


def test_parse_foursquare_malformed(tmp_path):
    f = tmp_path / "fs.txt"
    f.write_text("1\tabc\tnot a time\n")
    with pytest.raises(ValueError, match=":1:"):
        parse_foursquare(f)


# -- canonical form and synthetic data

def test_canonical_roundtrip(tmp_path, small_synthetic):
    path = tmp_path / "s.csv"
    write_canonical(small_synthetic, path)
    back = read_canonical(path, small_synthetic.name)
    assert back == small_synthetic
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")


def test_synthetic_deterministic():
    a = gen_synthetic(50, 80, (12, 20), 2, 0.3, seed=9)
    b = gen_synthetic(50, 80, (12, 20), 2, 0.3, seed=9)
    c = gen_synthetic(50, 80, (12, 20), 2, 0.3, seed=10)
    assert dumps_canonical(a).encode() == dumps_canonical(b).encode()
    assert dumps_canonical(a) != dumps_canonical(c)


def test_synthetic_shape():
    ds = gen_synthetic(100, 200, (20, 60), 4, 0.2, seed=0)
    assert ds.n_users == 100
    assert all(20 <= len(u) <= 60 for u in ds.users)
    assert ds.n_items <= 200


def test_synthetic_phases_drift_in_time():
    ds = gen_synthetic(200, 200, (40, 40), 4, 0.0, seed=1)
    # with no stray draws each quarter of a timeline stays in its own item block
    for u in ds.users[:20]:
        blocks = [max(u.items[q * 10:(q + 1) * 10]) for q in range(4)]
        assert blocks == sorted(blocks)


def test_synthetic_rejects_bad_args():
    with pytest.raises(ValueError):
        gen_synthetic(10, 200, (5, 20), 4, 0.2)
    with pytest.raises(ValueError):
        gen_synthetic(10, 6, (20, 30), 4, 0.2)
    with pytest.raises(ValueError):
        gen_synthetic(10, 200, (20, 30), 4, 1.5)


def test_dataset_duplicate_users():
    with pytest.raises(ValueError):
        Dataset((UserSequence(1, (1,)), UserSequence(1, (2,))), 3)
