//! Emitted matplotlib scripts. They read the CSVs next to them, so the
//! artifact directory stays self-contained.

use std::fmt::Write as _;

fn python_list(items: &[(String, String)]) -> String {
    let mut out = String::from("[\n");
    for (label, path) in items {
        let _ = writeln!(out, "    ({label:?}, {path:?}),");
    }
    out.push(']');
    out
}

const READER: &str = r##"import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read_rows(rel):
    with open(os.path.join(HERE, rel)) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))
"##;

/// Log-residual against iteration, one line per trace, one axes.
pub fn trace_script(title: &str, traces: &[(String, String)]) -> String {
    format!(
        r#"{READER}

TRACES = {list}

fig, ax = plt.subplots(figsize=(6, 4))
for label, rel in TRACES:
    rows = read_rows(rel)
    k = [int(r["k"]) for r in rows]
    res = [float(r["residual"]) for r in rows]
    ax.semilogy(k, res, label=label)
ax.set_xlabel("iteration k")
ax.set_ylabel("residual")
ax.set_title({title:?})
ax.legend()
fig.tight_layout()
out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, "residuals.png")
fig.savefig(out, dpi=150)
"#,
        list = python_list(traces),
    )
}

/// Iterations-to-threshold against condition number, one line per engine.
pub fn sweep_script(title: &str, summary: &str, column: &str) -> String {
    format!(
        r#"{READER}

rows = read_rows({summary:?})
series = {{}}
for r in rows:
    if r[{column:?}]:
        series.setdefault(r["engine"], []).append((float(r["condition_number"]), int(r[{column:?}])))

fig, ax = plt.subplots(figsize=(6, 4))
for label, pts in series.items():
    pts.sort()
    ax.loglog([q for q, _ in pts], [it for _, it in pts], marker="o", label=label)
ax.set_xlabel("condition number Q")
ax.set_ylabel({column:?})
ax.set_title({title:?})
ax.legend()
fig.tight_layout()
out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, "sweep.png")
fig.savefig(out, dpi=150)
"#
    )
}
