"""How often does a random kernel make sense?

A context-free generator picks every index letter and every extent
independently, so most of its kernels break some cross-reference rule.
The constraint-based generator builds validity in.
"""

from __future__ import annotations

import random
import sys

from einfuzz.gen import GenConfig, generate_kernel
from einfuzz.grammar import CfgConfig, cfg_generate, run_validity_experiment, semantic_check
from einfuzz.ir import render


def main(samples: int = 20_000) -> None:
    rng = random.Random(0)
    print("a few grammar samples:")
    for _ in range(5):
        text, shapes = cfg_generate(CfgConfig(), rng)
        print(f"  {text:<40} {semantic_check(text, shapes).value}")
    print("a few constraint-based samples:")
    for _ in range(5):
        print(f"  {render(generate_kernel(GenConfig(), rng))}")
    print()

    print(run_validity_experiment(CfgConfig(seed=1), samples).summary())
    print()
    print(run_validity_experiment(CfgConfig(seed=1), samples, generator="constraint").summary())


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20_000)
