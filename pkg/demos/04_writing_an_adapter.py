"""Plug an external tool in through the JSON adapter protocol.

The adapter here is a few lines of Python that call the reference engine,
but the shape is the one a TACO or Finch adapter would have: read one
request document on stdin, print one response object, exit 0. The emitter
shows the program such an adapter would hand to the real compiler.
"""

from __future__ import annotations

import sys
import tempfile
import textwrap
from pathlib import Path

from einfuzz.backends import ExecutionRequest, SubprocessBackend
from einfuzz.emit import emit_source
from einfuzz.gen import GenConfig, generate_case, iteration_rng
from einfuzz.harness import CampaignConfig, run_campaign
from einfuzz.ir import render, to_json

ADAPTER = textwrap.dedent(
    """
    import json, sys
    from einfuzz.backends import ExecutionRequest, RefBackend, outcome_to_json

    doc = json.load(sys.stdin)
    outcome = RefBackend().execute(ExecutionRequest(doc))
    print(json.dumps(outcome_to_json(outcome)))
    """
)


def main() -> None:
    kernel, inputs = generate_case(GenConfig(max_inputs=2, r_max=2, max_dim=3), iteration_rng(4, 0))
    doc = to_json(kernel, inputs)
    print(render(kernel))
    print(emit_source(doc, "taco-cpp"))

    with tempfile.TemporaryDirectory() as tmp:
        script = Path(tmp, "adapter.py")
        script.write_text(ADAPTER)
        backend = SubprocessBackend([sys.executable, str(script)], timeout_ms=10_000)
        print("adapter says:", backend.execute(ExecutionRequest(doc)))
        stats = run_campaign(backend, CampaignConfig(seed=4), Path(tmp, "campaign"), iterations=10)
        print(stats.to_json())


if __name__ == "__main__":
    main()
