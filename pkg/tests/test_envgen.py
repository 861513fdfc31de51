import gzip
import json

import numpy as np
import pytest

from creatorgame.core import GameInstance, UsageError
from creatorgame.envgen import (
    NmfFactors,
    ParseError,
    RatingTable,
    build_dataset_instance,
    build_prent,
    build_synthetic_market,
    factorize_nmf,
    orthonormal_nonneg_pair,
    parse_amazon_5core,
    parse_movielens,
    synthetic_market,
)
from creatorgame.theory import PreNTParams


def test_prent_instance():
    inst = build_prent(PreNTParams(9, 1, 0.8, 0.6, 0.2))
    assert inst.n == 10 and inst.m == 1 and inst.d == 2
    v_T, v_N = inst.meta["v_T"], inst.meta["v_N"]
    assert v_T @ v_N == 0.0
    np.testing.assert_array_equal(inst.users_true[0], [0.8, 0.6])
    assert inst.noise.kind == "uniform" and inst.noise.scale == 0.2
    back = GameInstance.from_json(inst.to_json())
    np.testing.assert_array_equal(back.contents_init, inst.contents_init)
    np.testing.assert_array_equal(back.users_true, inst.users_true)


def test_prent_bound_violation():
    with pytest.raises(UsageError):
        build_prent(PreNTParams(9, 1, 0.8, 0.6, 0.6))


def test_orthonormal_pair():
    rng = np.random.default_rng(0)
    for d in (2, 3, 10, 16):
        a, b = orthonormal_nonneg_pair(d, rng)
        assert a @ b == 0.0
        assert np.all(a >= 0) and np.all(b >= 0)
        assert abs(np.linalg.norm(a) - 1) < 1e-15 and abs(np.linalg.norm(b) - 1) < 1e-15


@pytest.mark.parametrize("kind", ["trend", "niche"])
def test_synthetic_market_cone(kind):
    mk = synthetic_market(kind, seed=5)
    inst = mk.instance
    assert (inst.m, inst.n, inst.d) == (400, 10, 10)
    assert inst.noise.kind == "gaussian" and inst.noise.scale == 0.5
    sT, sN = inst.users_true @ mk.v_T, inst.users_true @ mk.v_N
    if kind == "trend":
        assert np.all(sT > sN) and np.all(mk.alpha > mk.beta)
    else:
        assert np.all(sN > sT) and np.all(mk.beta > mk.alpha)
    np.testing.assert_allclose(sT, mk.alpha, atol=1e-15)
    np.testing.assert_allclose(sN, mk.beta, atol=1e-15)
    assert (inst.contents_init @ mk.v_T == 1.0).sum() == 9


def test_synthetic_market_deterministic():
    a = build_synthetic_market("trend", seed=11)
    b = build_synthetic_market("trend", seed=11)
    c = build_synthetic_market("trend", seed=12)
    np.testing.assert_array_equal(a.users_true, b.users_true)
    assert not np.array_equal(a.users_true, c.users_true)


def test_parse_movielens_toy(tmp_path):
    p = tmp_path / "u.data"
    p.write_text("196\t242\t3\t881250949\n186\t302\t3\t891717742\n")
    t = parse_movielens(p)
    assert len(t) == 2 and t.n_users == 2 and t.n_items == 2
    assert set(t.users) == {0, 1} and set(t.items) == {0, 1}
    assert t.user_ids == ["186", "196"]


def test_parse_movielens_dedupe_keeps_latest(tmp_path):
    p = tmp_path / "u.data"
    p.write_text("1\t1\t2\t100\n1\t1\t5\t300\n1\t1\t4\t200\n2\t1\t1\t5\n")
    t = parse_movielens(p)
    assert len(t) == 2
    assert t.to_dense()[0, 0] == 5.0


def test_parse_movielens_errors(tmp_path):
    p = tmp_path / "bad.data"
    p.write_text("1\t1\t3\t100\n1\t2\t3\n")
    with pytest.raises(ParseError, match=":2:"):
        parse_movielens(p)
    p.write_text("1\t1\tfive\t100\n")
    with pytest.raises(ParseError, match=":1:"):
        parse_movielens(p)
    p.write_text("")
    with pytest.raises(ParseError, match="empty"):
        parse_movielens(p)


def test_parse_movielens_gzip_and_counts(tmp_path, write_movielens):
    raw = write_movielens(tmp_path / "u.data")
    gz = tmp_path / "u.data.gz"
    with gzip.open(gz, "wt") as fh:
        fh.write(raw.read_text())
    a, b = parse_movielens(raw), parse_movielens(gz)
    assert len(a) == len(b) == 400
    np.testing.assert_array_equal(a.to_dense(), b.to_dense())


def test_parse_amazon(tmp_path):
    p = tmp_path / "reviews.json"
    recs = [{"reviewerID": "A1", "asin": "B9", "overall": 5.0, "unixReviewTime": 10},
            {"reviewerID": "A2", "asin": "B9", "overall": 3.0, "unixReviewTime": 11},
            {"reviewerID": "A1", "asin": "B7", "overall": 4.0, "unixReviewTime": 12}]
    p.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    t = parse_amazon_5core(p)
    assert (t.n_users, t.n_items, len(t)) == (2, 2, 3)
    p.write_text(json.dumps(recs[0]) + "\n{not json\n")
    with pytest.raises(ParseError, match=":2:"):
        parse_amazon_5core(p)
    p.write_text(json.dumps({"asin": "B1"}) + "\n")
    with pytest.raises(ParseError, match=":1:"):
        parse_amazon_5core(p)


def test_rating_table_csv_round_trip(tmp_path, write_movielens):
    t = parse_movielens(write_movielens(tmp_path / "u.data"))
    back = RatingTable.load_csv(t.save_csv(tmp_path / "table.csv"))
    np.testing.assert_array_equal(back.to_dense(), t.to_dense())
    assert back.user_ids == t.user_ids and back.item_ids == t.item_ids


def test_nmf_rank_one_recovery():
    rng = np.random.default_rng(0)
    V = np.outer(rng.uniform(0.5, 2, 30), rng.uniform(0.5, 2, 20))
    f = factorize_nmf(V, d=1, max_iter=2000, tol=1e-12, seed=1)
    assert f.relative_error(V) < 1e-3


def test_nmf_monotone_and_nonnegative(tmp_path, write_movielens):
    t = parse_movielens(write_movielens(tmp_path / "u.data"))
    seen = []

    def check(it, W, H):
        assert np.all(W >= 0) and np.all(H >= 0)
        seen.append(it)

    f = factorize_nmf(t, d=4, max_iter=200, tol=0.0, seed=3, callback=check)
    assert seen == list(range(1, 201))
    h = np.array(f.history)
    assert np.all(np.diff(h) <= 1e-12 * h[:-1])
    assert np.isfinite(f.error) and not f.converged
    assert f.W.shape == (30, 4) and f.H.shape == (t.n_items, 4)


def test_nmf_deterministic_and_persisted(tmp_path, write_movielens):
    t = parse_movielens(write_movielens(tmp_path / "u.data"))
    a = factorize_nmf(t, d=3, max_iter=50, seed=7)
    b = factorize_nmf(t, d=3, max_iter=50, seed=7)
    np.testing.assert_array_equal(a.W, b.W)
    np.testing.assert_array_equal(a.H, b.H)
    out = a.save(tmp_path / "nmf")
    man = json.loads((out / "manifest.json").read_text())
    assert man["d"] == 3 and man["seed"] == 7 and man["unobserved"] == "zero-filled"
    back = NmfFactors.load(out)
    np.testing.assert_array_equal(back.W, a.W)
    np.testing.assert_array_equal(back.H, a.H)
    assert back.error == a.error


def test_nmf_input_checks():
    with pytest.raises(UsageError):
        factorize_nmf(np.ones((3, 3)), d=0)
    with pytest.raises(UsageError):
        factorize_nmf(-np.ones((3, 3)), d=1)


def test_dataset_instance(tmp_path, write_movielens):
    t = parse_movielens(write_movielens(tmp_path / "u.data"))
    f = factorize_nmf(t, d=5, max_iter=100, seed=0)
    inst = build_dataset_instance(f, n_creators=10, seed=4)
    assert inst.m == t.n_users and inst.n == 10 and inst.d == 5
    np.testing.assert_allclose(np.linalg.norm(inst.contents_init, axis=1), 1.0, atol=1e-9)
    assert inst.noise.kind == "gaussian" and inst.noise.scale == 0.3
    again = build_dataset_instance(f, n_creators=10, seed=4)
    np.testing.assert_array_equal(again.meta["items"], inst.meta["items"])
    other = build_dataset_instance(f, n_creators=10, seed=5)
    assert not np.array_equal(other.meta["items"], inst.meta["items"])


def test_dataset_instance_skips_zero_rows():
    H = np.zeros((12, 3))
    H[:10] = np.abs(np.random.default_rng(0).normal(size=(10, 3)))
    f = NmfFactors(np.ones((4, 3)), H, 0.0)
    inst = build_dataset_instance(f, n_creators=10, seed=0)
    assert set(inst.meta["items"]) == set(range(10))
    with pytest.raises(UsageError):
        build_dataset_instance(f, n_creators=11)
