"""A working adapter for the subprocess protocol, backed by the in-process evaluator.

Run as ``python -m einfuzz.reference_adapter``; reads one kernel document on
stdin and prints one response on stdout. Useful as a template for real
compiler adapters and as a known-good target for ``cmd:`` backends.
"""

import json
import sys

from einfuzz.backends import ExecutionRequest, RefBackend, Success, outcome_to_json
from einfuzz.ir import dumps


def main() -> int:
    doc = json.load(sys.stdin)
    outcome = RefBackend().execute(ExecutionRequest(doc))
    if isinstance(outcome, Success):
        print(dumps(outcome_to_json(outcome)))
    else:
        print(dumps({"status": "rejected", "message": getattr(outcome, "message", str(outcome))}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
