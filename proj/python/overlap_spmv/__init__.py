# SPDX-License-Identifier: Apache-2.0
"""Distributed sparse matrix-vector multiply with communication overlap."""

from ._core import (
    CsrMatrix,
    Error,
    RuntimeFailure,
    ValidationError,
    block_band,
    code_balance,
    estimate_kappa,
    load_problem,
    matrix_bandwidth,
    max_performance,
    partition_rows,
    permute,
    plan_summary,
    rcm_permutation,
    read_matrix_market,
    run,
    sequential_oracle,
    spmv,
    stencil7,
    triad,
    write_matrix_market,
)

__all__ = [
    "CsrMatrix",
    "Error",
    "RuntimeFailure",
    "ValidationError",
    "block_band",
    "code_balance",
    "estimate_kappa",
    "load_problem",
    "matrix_bandwidth",
    "max_performance",
    "partition_rows",
    "permute",
    "plan_summary",
    "rcm_permutation",
    "read_matrix_market",
    "run",
    "sequential_oracle",
    "spmv",
    "stencil7",
    "triad",
    "write_matrix_market",
]
