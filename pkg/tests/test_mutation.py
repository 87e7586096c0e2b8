import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TMV_A, TMV_B, TMV_C, tmv_kernel, gemm_kernel
from einfuzz.gen import GenConfig, generate_case, iteration_rng
from einfuzz.ir import EinsumKernel, Format, TensorTerm, applicable_formats, parse, render, validate
from einfuzz.mutation import (
    MutationError,
    apply_provenance,
    inverse_permutation,
    mutant_space_size,
    mutate_commute,
    mutate_formats,
    sample_mutants,
)
from einfuzz.tensor import eval_dense, eval_formatted, store_inputs


def _config(kernel):
    return tuple(t.name for t in kernel.inputs), tuple(sorted(kernel.formats().items()))


def test_commute_gemm():
    m = mutate_commute(gemm_kernel(), [1, 0])
    assert render(m.kernel) == "A(i,j) = C(k,j) * B(i,k)"
    assert m.provenance()["permutation"] == [1, 0]


def test_commute_identity():
    k = gemm_kernel(Format.CSR)
    assert mutate_commute(k, [0, 1]).kernel == k


@pytest.mark.parametrize("perm", [[0, 2, 1], [0, 0], [1], [1, 2]])
def test_commute_invalid_permutation(perm):
    with pytest.raises(MutationError):
        mutate_commute(gemm_kernel(), perm)


def test_formats_tmv_b_to_csr():
    m = mutate_formats(tmv_kernel(b=Format.DENSE), {"B": Format.CSR})
    assert validate(m.kernel).ok
    assert m.kernel.input("B").format is Format.CSR
    assert eval_formatted(m.kernel, store_inputs(m.kernel, {"B": TMV_B, "C": TMV_C})) == TMV_A


def test_formats_output_to_coo():
    m = mutate_formats(tmv_kernel(), {"A": Format.COO})
    assert validate(m.kernel).ok
    assert m.kernel.output.format is Format.COO
    assert m.provenance()["formats"] == {"A": "coo", "B": "csr", "C": "dense"}


@pytest.mark.parametrize("assignment", [{"C": Format.CSR}, {"A": Format.CSC}, {"Z": Format.DENSE}])
def test_formats_inapplicable(assignment):
    with pytest.raises(MutationError):
        mutate_formats(tmv_kernel(), assignment)


def test_mutant_only_touches_order_and_formats():
    k = gemm_kernel()
    m = apply_provenance(k, [1, 0], {"B": Format.CSC, "A": Format.COO})
    assert m.kernel.dims == k.dims and m.kernel.dtype == k.dtype
    assert {(t.name, t.indices) for t in m.kernel.terms} == {(t.name, t.indices) for t in k.terms}


def test_small_space_is_enumerated_exhaustively():
    k = EinsumKernel(TensorTerm("A", ("i",)), (TensorTerm("B", ("i",)),), {"i": 3})
    assert mutant_space_size(k) == 4
    got = {_config(m.kernel) for m in sample_mutants(k, 8, random.Random(0))}
    expected = {
        (("B",), (("A", a), ("B", b)))
        for a, b in itertools.product((Format.DENSE, Format.COO), repeat=2)
    } - {_config(k)}
    assert got == expected and len(got) == 3


def test_budget_eight_on_three_inputs():
    k = parse("A(i) = B(i,j) * C(j,k) * D(k)")
    k = EinsumKernel(k.output, k.inputs, {"i": 2, "j": 3, "k": 2})
    ms = sample_mutants(k, 8, random.Random(1))
    assert len(ms) == 8
    assert len({_config(m.kernel) for m in ms}) == 8
    assert _config(k) not in {_config(m.kernel) for m in ms}


def test_sample_mutants_deterministic():
    k = gemm_kernel()
    a = sample_mutants(k, 8, random.Random(4))
    b = sample_mutants(k, 8, random.Random(4))
    assert a == b


def test_sample_mutants_rejects_zero_budget():
    with pytest.raises(MutationError):
        sample_mutants(gemm_kernel(), 0, random.Random(0))


def test_sampling_covers_space_uniformly():
    k = EinsumKernel(TensorTerm("A", ()), (TensorTerm("B", ("i",)), TensorTerm("C", ("i",))), {"i": 2})
    # 2! orders x 2 x 2 input formats x 1 scalar output format, minus parent
    assert mutant_space_size(k) == 8
    counts = {}
    rng = random.Random(2)
    for _ in range(7000):
        (m,) = sample_mutants(k, 1, rng)
        counts[_config(m.kernel)] = counts.get(_config(m.kernel), 0) + 1
    assert len(counts) == 7
    assert all(800 < c < 1200 for c in counts.values())


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_sample_properties(n, budget):
    kernel, _ = generate_case(GenConfig(), iteration_rng(21, n))
    ms = sample_mutants(kernel, budget, iteration_rng(21, n, "mutate"))
    configs = [_config(m.kernel) for m in ms]
    assert len(ms) == min(budget, mutant_space_size(kernel) - 1)
    assert len(set(configs)) == len(configs)
    assert _config(kernel) not in configs
    for m in ms:
        assert validate(m.kernel).ok
        again = apply_provenance(kernel, m.permutation, m.formats)
        assert again.kernel == m.kernel
        restored = mutate_commute(m.kernel, inverse_permutation(m.permutation)).kernel
        assert restored == kernel.with_formats(m.formats)


def test_semantic_preservation_int():
    cfg = GenConfig()
    for n in range(400):
        kernel, data = generate_case(cfg, iteration_rng(30, n))
        expected = eval_dense(kernel, data)
        for m in sample_mutants(kernel, 8, iteration_rng(30, n, "mutate")):
            assert eval_formatted(m.kernel, store_inputs(m.kernel, data)) == expected


def test_semantic_preservation_float():
    from einfuzz.harness import ComparatorConfig, compare

    cfg = GenConfig(dtype="float")
    cmp = ComparatorConfig.for_dtype("float")
    for n in range(200):
        kernel, data = generate_case(cfg, iteration_rng(31, n))
        expected = eval_dense(kernel, data)
        for m in sample_mutants(kernel, 4, iteration_rng(31, n, "mutate")):
            assert compare(expected, eval_formatted(m.kernel, store_inputs(m.kernel, data)), cmp).equal


def test_inverse_permutation():
    for perm in itertools.permutations(range(4)):
        inv = inverse_permutation(perm)
        assert [perm[inv[n]] for n in range(4)] == list(range(4))


def test_space_size_counts_formats():
    k = tmv_kernel()
    assert mutant_space_size(k) == 2 * len(applicable_formats(2)) * len(applicable_formats(1)) ** 2
