"""Run a short campaign against the seeded-faulty backend and triage it.

Every wrong-code report is replayed twice: on the faulty backend it
reproduces, on the reference it passes, which is the fix-verification loop
a compiler developer would follow.
"""

from __future__ import annotations

import logging
import sys
import tempfile
from pathlib import Path

from einfuzz.backends import FaultyBackend, RefBackend
from einfuzz.harness import CampaignConfig, load_report, replay, run_campaign


def main(iterations: int = 300) -> None:
    # replaying on ref on purpose; skip the backend-mismatch warning
    logging.getLogger("einfuzz.harness").setLevel(logging.ERROR)
    backend = FaultyBackend(["stale-output-cursor", "crash-on-rank3"])
    with tempfile.TemporaryDirectory() as tmp:
        stats = run_campaign(backend, CampaignConfig(seed=1), tmp, iterations=iterations)
        print(stats.to_json())

        reports = sorted(Path(tmp, "reports").iterdir(), key=lambda p: int(p.stem.split("-")[1]))
        for path in reports[:5]:
            report = load_report(path)
            verdict = report["verdict"]
            print(f"\n{path.name}: {verdict['kind']}  {report['rendered']}")
            for d in verdict["divergences"][:2]:
                fmts = report["mutants"][d["mutant"]]["formats"]
                worst = d["diff"][0]
                print(f"  mutant {d['mutant']} {fmts}: at {worst['coord']} "
                      f"expected {worst['reference']} got {worst['candidate']}")
            for c in verdict["crashes"][:2]:
                print(f"  mutant {c['mutant']}: {c['outcome']}")
            print(f"  replay on {backend.id}: {replay(path, backend).kind.value}")
            print(f"  replay on ref: {replay(path, RefBackend()).kind.value}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 300)
