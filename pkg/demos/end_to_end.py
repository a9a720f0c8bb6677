"""Devices -> gateways (tree classifier) -> PBFT validators -> ledger, on the mixed-traffic scenario.

Usage: python3 demos/end_to_end.py [scenario-name-or-file]
"""

import sys

from securiot.ids.pipeline import prepare_synthetic
from securiot.models import train
from securiot.scenario import BUNDLED, bundled_scenario, read_scenario, run_scenario

name = sys.argv[1] if len(sys.argv) > 1 else "mixed-traffic"
sc = bundled_scenario(name) if name in BUNDLED else read_scenario(name)
model = train("tree", prepare_synthetic(sc.corpus_seed).dataset)
res = run_scenario(sc, model)

print(res.summary_text(), end="")
print("\nfirst decisions (time, device, class, p, action, tx):")
for line in res.decision_log().splitlines()[:8]:
    print("  " + line)
alerts = [line for line in res.decision_log().splitlines() if "\talert\t" in line]
print(f"... {len(alerts)} alerts raised, e.g.\n  {alerts[0] if alerts else '-'}")
