import os
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitlist6 import _pycore, kernels
from hitlist6.addr import ADDR_MAX

# values around the 64-bit word boundary exercise the hi/lo carry in the compiled code
anchors = st.sampled_from([0, (1 << 64) - 40, 1 << 64, ADDR_MAX - 5000, 0x20010DB8 << 96])
offset_sets = st.sets(st.integers(0, 4000), max_size=200)


@settings(max_examples=150)
@given(anchors, offset_sets, st.integers(2, 12), st.integers(1, 100))
def test_cluster_runs_agree(backend, anchor, offsets, min_size, gap):
    addrs = [min(anchor + o, ADDR_MAX) for o in offsets]
    assert backend.cluster_runs(addrs, min_size, gap) == _pycore.cluster_runs(addrs, min_size, gap)


@settings(max_examples=100)
@given(anchors, offset_sets, st.integers(1, 20))
def test_dense_prefixes_agree(backend, anchor, offsets, threshold):
    addrs = [min(anchor + o * 977, ADDR_MAX) for o in offsets]
    lengths = list(range(68, 125, 4)) + [0, 128]
    assert backend.dense_prefixes(addrs, lengths, threshold) == _pycore.dense_prefixes(addrs, lengths, threshold)


def test_cluster_runs_edges(backend):
    assert backend.cluster_runs([], 2, 1) == []
    assert backend.cluster_runs([ADDR_MAX, ADDR_MAX - 1], 2, 1) == [[ADDR_MAX - 1, ADDR_MAX]]
    # duplicates count once and input order does not matter
    assert backend.cluster_runs([5, 3, 4, 4, 3], 3, 1) == [[3, 4, 5]]
    # a gap spanning the 64-bit word boundary
    lo = (1 << 64) - 1
    assert backend.cluster_runs([lo, lo + 64], 2, 64) == [[lo, lo + 64]]
    assert backend.cluster_runs([lo, lo + 65], 2, 64) == []


def test_dense_prefixes_counts_unique(backend):
    assert backend.dense_prefixes([7, 7, 7], [124], 2) == {124: []}
    assert backend.dense_prefixes([1, 2], [124], 2) == {124: [0]}


def test_backend_selection_env():
    code = "from hitlist6 import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, HITLIST6_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("python", "cython")


@pytest.mark.skipif(kernels.compiled() is None, reason="compiled core not built")
@pytest.mark.skipif(os.environ.get("HITLIST6_PURE", "") not in ("", "0"), reason="fallback forced")
def test_compiled_backend_is_default():
    assert kernels.BACKEND == "cython"
