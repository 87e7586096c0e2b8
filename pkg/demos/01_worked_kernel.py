"""Evaluate A(j) = B(i,j) * C(i) under every storage assignment.

B is a 3x3 matrix with four nonzeros and C a length-3 vector. The answer
is [9, 16, 0] no matter how B, C and A are stored; the second half shows
what the seeded "stale output cursor" defect does to the same kernel once
the output is compressed.
"""

from __future__ import annotations

import itertools

import numpy as np

from einfuzz import ExecutionRequest, FaultyBackend, RefBackend, TensorData, to_json
from einfuzz.ir import EinsumKernel, Format, TensorTerm, applicable_formats, render
from einfuzz.tensor import store


def kernel(b: Format, c: Format, a: Format) -> EinsumKernel:
    return EinsumKernel(
        TensorTerm("A", ("j",), a),
        (TensorTerm("B", ("i", "j"), b), TensorTerm("C", ("i",), c)),
        {"i": 3, "j": 3},
    )


def main() -> None:
    B = TensorData.from_dense(np.array([[0, 4, 0], [2, 8, 0], [1, 0, 0]]))
    C = TensorData.from_dense(np.array([0, 2, 5]))
    inputs = {"B": B, "C": C}

    print(render(kernel(Format.CSR, Format.DENSE, Format.DENSE)))
    print("B as CSR:", store(B, Format.CSR).payload)
    print()

    ref = RefBackend()
    faulty = FaultyBackend(["stale-output-cursor"])
    print(f"{'B':<6}{'C':<6}{'A':<6}{'ref':<14}faulty")
    for b, c, a in itertools.product(applicable_formats(2), applicable_formats(1), applicable_formats(1)):
        doc = to_json(kernel(b, c, a), inputs)
        good = ref.execute(ExecutionRequest(doc)).output.to_dense().tolist()
        bad = faulty.execute(ExecutionRequest(doc)).output.to_dense().tolist()
        flag = "" if bad == good else "   <- diverges"
        print(f"{b.value:<6}{c.value:<6}{a.value:<6}{str(good):<14}{bad}{flag}")


if __name__ == "__main__":
    main()
