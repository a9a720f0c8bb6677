"""Clean, select and split the synthetic corpus, then train and score all four model families."""

import sys

from securiot.evaluation import evaluate, heatmap_text, normalize
from securiot.ids.pipeline import prepare_synthetic
from securiot.models import train

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
prep = prepare_synthetic(seed)
print(f"{prep.report.input_rows} rows in, {prep.report.retained} kept, "
      f"{len(prep.schema.names)} features kept")
for name, why in prep.schema.dropped.items():
    print(f"  dropped {name}: {why}")

config = {"mlp": {"seed": seed}}
for family in ("gnb", "tree", "gbt", "mlp"):
    model = train(family, prep.train, config.get(family))
    pred, _ = model.predict(prep.test)
    cm, rep = evaluate(prep.test.y, pred, model.labels)
    print(f"{family:5s} accuracy={rep.accuracy:.4f} macro_f1={rep.macro_f1:.4f}")

print(heatmap_text(normalize(cm), model.labels))
