# scripts/check_dbs.py
import os
import sys

sys.path.insert(0, os.path.abspath("."))

from src.db import load_reports  # noqa: E402

db_path = sys.argv[1] if len(sys.argv) > 1 else "data/db/phaseflow.db"

try:
    rows = load_reports(db_path)
except FileNotFoundError as e:
    print(e)
    sys.exit(1)

if rows.empty:
    print("Nenhum run arquivado em", db_path)
else:
    summary = (rows.assign(passed=rows["passed"].astype(bool))
               .groupby(["run_id", "scenario"], sort=True)["passed"]
               .agg(["sum", "count"]))
    print("Runs encontrados:", len(summary))
    for (run_id, scenario), row in summary.iterrows():
        print(f"{run_id:>4} {scenario} -> {int(row['sum'])}/{int(row['count'])} checks ok")
