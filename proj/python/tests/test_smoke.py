# SPDX-License-Identifier: Apache-2.0
import math

import numpy as np
import pytest

import overlap_spmv as ov


def dense(a):
    out = np.zeros((a.n_rows, a.n_cols))
    rp, ci, v = a.row_ptr, a.col_idx, a.val
    for i in range(a.n_rows):
        for k in range(rp[i], rp[i + 1]):
            out[i, ci[k]] += v[k]
    return out


def test_from_coo_sums_duplicates():
    a = ov.CsrMatrix.from_coo(2, 3, [0, 0, 1], [2, 2, 0], [1.0, 2.0, 4.0])
    assert a.n_nz == 2
    assert list(a.row_ptr) == [0, 1, 2]
    assert list(a.val) == [3.0, 4.0]


def test_invalid_csr_raises_validation_error():
    with pytest.raises(ov.ValidationError):
        ov.CsrMatrix(2, 2, [0, 2, 1], [0, 1], [1.0, 1.0])


def test_spmv_matches_numpy():
    a = ov.stencil7(5, 4, 3)
    b = np.linspace(-1.0, 1.0, a.n_cols)
    np.testing.assert_allclose(ov.spmv(a, b), dense(a) @ b, rtol=0, atol=1e-12)


@pytest.mark.parametrize("mode", ["vector", "naive", "task"])
@pytest.mark.parametrize("ranks", [1, 3])
def test_distributed_run_matches_oracle(mode, ranks):
    a = ov.block_band(dim=600, block=50, band=4, stride=120, nnzr=7.0, seed=3)
    b = np.random.default_rng(0).random(a.n_cols)
    x, rec = ov.run(a, b, mode=mode, ranks=ranks, workers=2, iterations=3)
    oracle = ov.sequential_oracle(a, b, 3)
    assert rec["max_rel_error"] <= 1e-12
    np.testing.assert_allclose(x, oracle, rtol=1e-12, atol=0)
    assert rec["n_ranks"] == ranks


def test_socket_transport_runs():
    a = ov.stencil7(6, 6, 6)
    b = np.ones(a.n_cols)
    x, rec = ov.run(a, b, mode="task", ranks=2, transport="socket", iterations=2)
    np.testing.assert_allclose(x, ov.sequential_oracle(a, b, 2), rtol=1e-12)
    assert rec["transport"] == "socket"


def test_bad_config_raises():
    a = ov.stencil7(3, 3, 3)
    with pytest.raises(ov.ValidationError):
        ov.run(a, np.ones(a.n_cols), ranks=0)
    with pytest.raises(ov.ValidationError):
        ov.run(a, np.ones(5))


def test_rcm_reduces_bandwidth():
    a = ov.stencil7(8, 8, 8)
    rng = np.random.default_rng(5)
    shuffled = ov.permute(a, list(rng.permutation(a.n_rows)))
    perm = ov.rcm_permutation(shuffled)
    assert sorted(perm) == list(range(a.n_rows))
    assert ov.matrix_bandwidth(ov.permute(shuffled, perm)) < ov.matrix_bandwidth(shuffled)


def test_partition_rows_cover_matrix():
    a = ov.stencil7(10, 10, 10)
    cuts = ov.partition_rows(a, 4)
    assert cuts[0] == 0 and cuts[-1] == a.n_rows and len(cuts) == 5
    assert all(x <= y for x, y in zip(cuts, cuts[1:]))


def test_model_numbers():
    assert math.isclose(ov.code_balance(7.0), 6 + 12 / 7)
    assert math.isclose(ov.code_balance(15.0, split=True), 6 + 20 / 15)
    kappa, consistent, _ = ov.estimate_kappa(ov.max_performance(ov.code_balance(15.0, 2.0), 18.0), 18.0, 15.0)
    assert consistent and math.isclose(kappa, 2.0, rel_tol=1e-12)


def test_matrix_market_round_trip(tmp_path):
    a = ov.block_band(dim=200, block=20, band=3, stride=40, nnzr=5.0, seed=9)
    path = str(tmp_path / "m.mtx")
    ov.write_matrix_market(path, a)
    assert ov.read_matrix_market(path) == a
    assert ov.load_problem(path) == a


def test_triad_reports_bandwidth():
    r = ov.triad(length=200000, repetitions=3, workers=1)
    assert r["raw_gbs"] > 0
    assert math.isclose(r["corrected_gbs"], r["raw_gbs"] * 4 / 3)
