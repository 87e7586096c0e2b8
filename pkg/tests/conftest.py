import pytest

from einfuzz.ir import EinsumKernel, Format, TensorTerm, to_json
from einfuzz.tensor import TensorData

# Transposed matrix-vector product ("tmv") A(j) = B(i,j) * C(i) with B = [[0,4,0],[2,8,0],[1,0,0]], C = [0,2,5]
TMV_B = TensorData((3, 3), ((0, 1), (1, 0), (1, 1), (2, 0)), (4, 2, 8, 1))
TMV_C = TensorData((3,), ((1,), (2,)), (2, 5))
TMV_A = TensorData((3,), ((0,), (1,)), (9, 16))


def tmv_kernel(b=Format.CSR, c=Format.DENSE, a=Format.DENSE) -> EinsumKernel:
    return EinsumKernel(
        TensorTerm("A", ("j",), a),
        (TensorTerm("B", ("i", "j"), b), TensorTerm("C", ("i",), c)),
        {"i": 3, "j": 3},
        "int",
    )


def tmv_doc(**formats) -> dict:
    return to_json(tmv_kernel(**formats), {"B": TMV_B, "C": TMV_C})


def gemm_kernel(b=Format.DENSE, c=Format.DENSE, a=Format.DENSE, dims=None) -> EinsumKernel:
    return EinsumKernel(
        TensorTerm("A", ("i", "j"), a),
        (TensorTerm("B", ("i", "k"), b), TensorTerm("C", ("k", "j"), c)),
        dims or {"i": 2, "j": 3, "k": 4},
        "int",
    )


@pytest.fixture
def tmv():
    return tmv_kernel(), {"B": TMV_B, "C": TMV_C}


# -- acceptance summary --------------------------------------------------------

_acceptance: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[number] = ("PASS" if report.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        verdict, title = _acceptance[number]
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {title}")
