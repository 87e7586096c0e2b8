import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from einfuzz.gen import GenConfig, generate_case, generate_inputs, generate_kernel, iteration_rng
from einfuzz.ir import EinsumKernel, Format, TensorTerm, dumps, to_json, validate


def test_config_rejects_bad_ranges():
    for kw in (
        {"min_inputs": 3, "max_inputs": 2},
        {"min_inputs": 0},
        {"r_max": 6, "pool_size": 5},
        {"min_dim": 0},
        {"min_density": 0.0},
        {"max_density": 1.5},
        {"dtype": "complex"},
        {"int_bound": 0},
    ):
        with pytest.raises(ValueError):
            GenConfig(**kw)


def test_config_json_roundtrip():
    cfg = GenConfig(seed=7, dtype="float", max_output_rank=1)
    assert GenConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg


def _is_connected(kernel: EinsumKernel) -> bool:
    if len(kernel.inputs) < 2:
        return True
    return all(sum(idx in t.indices for t in kernel.inputs) >= 2 for idx in kernel.contraction_indices())


@settings(max_examples=300, deadline=None)
@given(
    seed=st.integers(0, 2**64 - 1),
    n_lo=st.integers(1, 4),
    n_extra=st.integers(0, 3),
    r_max=st.integers(1, 4),
    pool_extra=st.integers(0, 3),
    cap=st.one_of(st.none(), st.integers(0, 4)),
)
def test_generated_kernels_valid_connected_bounded(seed, n_lo, n_extra, r_max, pool_extra, cap):
    cfg = GenConfig(
        min_inputs=n_lo,
        max_inputs=n_lo + n_extra,
        r_max=r_max,
        pool_size=r_max + pool_extra,
        max_output_rank=cap,
    )
    kernel = generate_kernel(cfg, random.Random(seed))
    assert validate(kernel).ok, (kernel.render(), validate(kernel).violations)
    assert _is_connected(kernel)
    assert all(t.rank <= r_max for t in kernel.inputs)
    assert kernel.output.rank <= cfg.output_rank_cap
    assert cfg.min_inputs <= len(kernel.inputs) <= cfg.max_inputs


def test_default_generation_always_valid():
    cfg = GenConfig()
    for n in range(5000):
        k = generate_kernel(cfg, iteration_rng(11, n))
        assert validate(k).ok and _is_connected(k)
        assert max(t.rank for t in k.terms) <= cfg.r_max


def test_gemm_shape_reachable():
    cfg = GenConfig(min_inputs=2, max_inputs=2, r_max=2, pool_size=3)
    seen = set()
    for n in range(3000):
        seen.add(generate_kernel(cfg, iteration_rng(0, n)).render())
    assert "A(i,j) = B(i,k) * C(k,j)" in seen


def test_seed_42_deterministic():
    cfg = GenConfig(seed=42)
    a = generate_case(cfg, random.Random(42))
    b = generate_case(cfg, random.Random(42))
    assert a == b
    assert dumps(to_json(*a)) == dumps(to_json(*b))


def test_iteration_streams_are_independent():
    a = generate_kernel(GenConfig(), iteration_rng(1, 0))
    assert generate_kernel(GenConfig(), iteration_rng(1, 0)) == a
    assert len({generate_kernel(GenConfig(), iteration_rng(1, n)).render() for n in range(50)}) > 40


@pytest.mark.slow
def test_sampler_coverage():
    cfg = GenConfig()
    rank2 = set()
    arity = Counter()
    for n in range(100_000):
        k = generate_kernel(cfg, iteration_rng(2, n))
        arity[len(k.inputs)] += 1
        rank2.update(t.format for t in k.terms if t.rank == 2)
    assert rank2 == set(Format)
    assert set(arity) == {2, 3, 4}


def _bxx(dims=3):
    return EinsumKernel(
        TensorTerm("A", ("i",)),
        (TensorTerm("B", ("i", "j")), TensorTerm("C", ("j",))),
        {"i": dims, "j": dims},
    )


def test_density_one_fills_tensor():
    cfg = GenConfig(min_density=1.0, max_density=1.0, int_bound=3)
    data = generate_inputs(_bxx(), cfg, random.Random(0))
    b = data["B"]
    assert b.shape == (3, 3) and b.nnz == 9
    assert all(v != 0 and -3 <= v <= 3 for v in b.values)
    assert data["C"].nnz == 3


def test_input_shapes_follow_dims():
    cfg = GenConfig()
    for n in range(200):
        kernel, data = generate_case(cfg, iteration_rng(6, n))
        assert set(data) == {t.name for t in kernel.inputs}
        for t in kernel.inputs:
            assert data[t.name].shape == kernel.shape_of(t)


def test_float_values_in_bound():
    cfg = GenConfig(dtype="float", float_bound=0.5)
    for n in range(100):
        _, data = generate_case(cfg, iteration_rng(7, n))
        for t in data.values():
            assert all(isinstance(v, float) and v != 0.0 and abs(v) <= 0.5 for v in t.values)


def test_mean_nnz_matches_expected_density():
    # density ~ U(0.3, 0.8), so E[nnz] on a 3x3 tensor is 9 * 0.55
    cfg = GenConfig()
    kernel = _bxx()
    rng = random.Random(123)
    draws = 10_000
    total = sum(generate_inputs(kernel, cfg, rng)["B"].nnz for _ in range(draws))
    expected = 9 * (cfg.min_density + cfg.max_density) / 2
    assert expected == pytest.approx(4.95)
    assert abs(total / draws - expected) <= 0.1 * expected


def test_same_seed_same_tensors():
    kernel = _bxx(4)
    assert generate_inputs(kernel, GenConfig(), random.Random(9)) == generate_inputs(kernel, GenConfig(), random.Random(9))
