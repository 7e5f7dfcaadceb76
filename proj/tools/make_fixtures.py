#!/usr/bin/env python3
"""Regenerate the fixture tree under fixtures/.

Everything is derived from fixed seeds, so reruns are byte-identical. After
writing, the script recomputes the expected end-to-end outcome (ranges, fit
bands, confidences, fused labels) with its own arithmetic and aborts if the
20-case evaluation set does not land on cnn_only 17/20, sql_only 20/20 and
full 20/20 with 3 flagged cases.
"""

import argparse
import json
import math
import random
import shutil
from pathlib import Path

TUBULAR = "tubular_adenocarcinoma"
PAPILLARY = "papillary_adenocarcinoma"
OPTIONS = [TUBULAR, PAPILLARY]
CELL_TYPES = ["neoplastic", "inflammatory", "connective", "dead", "epithelial"]

# Class bands for the three discriminative features.
BANDS = {
    TUBULAR: {"neoplastic_ratio": (0.55, 0.65), "pleomorphism": (0.30, 0.40), "lumen_ratio": (0.35, 0.45)},
    PAPILLARY: {"neoplastic_ratio": (0.75, 0.85), "pleomorphism": (0.55, 0.65), "lumen_ratio": (0.10, 0.20)},
}
FEATURES = [
    "global_features.neoplastic_ratio",
    "global_features.nuclear_pleomorphism_index",
    "structures.lumen_ratio",
]
QUANTILE = 0.05
ALPHA = 0.7
# Evaluation cases whose CNN sidecar favours the wrong subtype.
CNN_ERRORS = {"case_03", "case_10", "case_16"}


def manifest():
    return {
        "version": "1.0",
        "tables": [
            {
                "name": "cells",
                "level": "local_cellular",
                "columns": [
                    {"name": "cell_id", "dtype": "integer"},
                    {"name": "cell_type", "dtype": "text", "categorical_domain": CELL_TYPES},
                    {"name": "area", "dtype": "real", "unit": "um2"},
                    {"name": "perimeter", "dtype": "real", "unit": "um"},
                    {"name": "eccentricity", "dtype": "real"},
                    {"name": "circularity", "dtype": "real"},
                    {"name": "mean_intensity", "dtype": "real"},
                    {"name": "glcm_contrast", "dtype": "real"},
                    {"name": "centroid_x", "dtype": "real", "unit": "px"},
                    {"name": "centroid_y", "dtype": "real", "unit": "px"},
                ],
            },
            {
                "name": "structures",
                "level": "local_architecture",
                "columns": [
                    {"name": "structure_id", "dtype": "integer"},
                    {"name": "structure_type", "dtype": "text", "categorical_domain": ["gland_like", "cluster"]},
                    {"name": "cell_count", "dtype": "integer"},
                    {"name": "area", "dtype": "real", "unit": "um2"},
                    {"name": "lumen_ratio", "dtype": "real"},
                ],
            },
            {
                "name": "global_features",
                "level": "global",
                "columns": [
                    {"name": "total_cells", "dtype": "integer"},
                    {"name": "neoplastic_ratio", "dtype": "real"},
                    {"name": "mean_nuclear_area", "dtype": "real", "unit": "um2"},
                    {"name": "nuclear_pleomorphism_index", "dtype": "real"},
                    {"name": "gland_area_ratio", "dtype": "real"},
                    {"name": "nn_mean_distance", "dtype": "real", "unit": "px"},
                ],
            },
        ],
    }


def ambiguous_manifest():
    return {
        "version": "1.0",
        "tables": [
            {
                "name": "cells",
                "level": "local_cellular",
                "columns": [
                    {"name": "cell_id", "dtype": "integer"},
                    {"name": "area", "dtype": "real"},
                    {"name": "arena", "dtype": "real"},
                ],
            },
            {"name": "global_features", "level": "global", "columns": [{"name": "total_cells", "dtype": "integer"}]},
        ],
    }


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_case(root, case_id, cells, structures, global_row, sidecar):
    d = root / case_id
    d.mkdir(parents=True)
    spec = {t["name"]: [c["name"] for c in t["columns"]] for t in manifest()["tables"]}
    write_csv(d / "cells.csv", spec["cells"], cells)
    write_csv(d / "structures.csv", spec["structures"], structures)
    write_csv(d / "global_features.csv", spec["global_features"], [global_row])
    if sidecar is not None:
        write_json(d / "sidecar.json", sidecar)


def synth_case(rng, n_cells, neo_ratio, pleomorphism, lumen_mean, n_structures, null_intensity=False):
    """Returns (cells, structures, global_row); global values follow from the cells where they can."""
    n_neo = round(neo_ratio * n_cells)
    others = CELL_TYPES[1:]
    types = ["neoplastic"] * n_neo + [rng.choice(others) for _ in range(n_cells - n_neo)]
    rng.shuffle(types)
    cells = []
    for i, t in enumerate(types):
        base = 48.0 if t == "neoplastic" else 30.0
        area = round(base * (1.0 + pleomorphism * rng.uniform(-0.5, 0.5)), 3)
        radius = math.sqrt(area / math.pi)
        perimeter = round(2.0 * math.pi * radius * rng.uniform(1.0, 1.15), 3)
        intensity = None if (null_intensity and i == 0) else round(rng.uniform(0.2, 0.8), 4)
        cells.append([
            i + 1, t, area, perimeter,
            round(rng.uniform(0.1, 0.9), 4), round(rng.uniform(0.5, 1.0), 4),
            intensity, round(rng.uniform(1.0, 9.0), 3),
            round(rng.uniform(0, 512), 2), round(rng.uniform(0, 512), 2),
        ])
    # Structure lumen ratios are jittered around the target and re-centred so the case mean hits it.
    jitter = [rng.uniform(-0.02, 0.02) for _ in range(n_structures)]
    shift = sum(jitter) / n_structures
    lumens = [round(lumen_mean + j - shift, 6) for j in jitter]
    structures = []
    for i, lr in enumerate(lumens):
        stype = "gland_like" if lr > 0.25 else "cluster"
        structures.append([i + 1, stype, rng.randint(8, 40), round(rng.uniform(800, 4000), 2), lr])
    actual_ratio = n_neo / n_cells
    mean_area = sum(c[2] for c in cells) / n_cells
    gland = sum(1 for s in structures if s[1] == "gland_like") / n_structures
    global_row = [
        n_cells, round(actual_ratio, 6), round(mean_area, 6), round(pleomorphism, 6),
        round(gland * rng.uniform(0.3, 0.6), 6), round(rng.uniform(8.0, 20.0), 6),
    ]
    return cells, structures, global_row


def demo_case(root):
    # Six cells, four neoplastic; areas average exactly 400.
    cells = [
        [1, "neoplastic", 380.0, 70.1, 0.42, 0.91, 0.55, 3.2, 10.0, 12.0],
        [2, "neoplastic", 420.0, 73.4, 0.51, 0.88, 0.61, 3.9, 40.5, 22.0],
        [3, "inflammatory", 350.0, 66.0, 0.33, 0.95, 0.40, 2.1, 100.0, 80.0],
        [4, "neoplastic", 450.0, 76.2, 0.63, 0.84, 0.58, 4.4, 130.25, 95.5],
        [5, "connective", 400.0, 71.0, 0.80, 0.70, None, 5.0, 200.0, 160.0],
        [6, "neoplastic", 400.0, 72.5, 0.47, 0.90, 0.66, 3.6, 250.0, 210.0],
    ]
    structures = [
        [1, "gland_like", 4, 1600.0, 0.4],
        [2, "cluster", 2, 900.0, 0.1],
    ]
    global_row = [6, round(4 / 6, 6), 400.0, 0.35, 0.3, 14.5]
    sidecar = {"cnn_probs": {TUBULAR: 0.7, PAPILLARY: 0.3}, "ground_truth": TUBULAR}
    write_case(root, "case_demo", cells, structures, global_row, sidecar)


def spread(lo, hi, n):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def training_split(root, rng):
    cases = {}
    idx = 1
    for label in OPTIONS:
        b = BANDS[label]
        ratios = spread(*b["neoplastic_ratio"], 6)
        pleos = spread(*b["pleomorphism"], 6)
        lumens = spread(*b["lumen_ratio"], 6)
        rng.shuffle(pleos)
        rng.shuffle(lumens)
        for i in range(6):
            case_id = f"train_{idx:02d}"
            idx += 1
            cells, structures, g = synth_case(rng, 100, ratios[i], pleos[i], lumens[i], rng.randint(3, 6))
            write_case(root, case_id, cells, structures, g, {"ground_truth": label})
            cases[case_id] = (label, g, structures)
    return cases


def eval_split(root, rng):
    cases = {}
    for i in range(20):
        case_id = f"case_{i + 1:02d}"
        label = OPTIONS[i % 2]
        b = BANDS[label]
        mid = {k: (lo + hi) / 2 for k, (lo, hi) in b.items()}
        n_cells = rng.randint(60, 90)
        cells, structures, g = synth_case(
            rng, n_cells,
            mid["neoplastic_ratio"] + rng.uniform(-0.015, 0.015),
            mid["pleomorphism"] + rng.uniform(-0.02, 0.02),
            mid["lumen_ratio"] + rng.uniform(-0.02, 0.02),
            rng.randint(3, 6), null_intensity=(i % 5 == 0))
        other = OPTIONS[1 - OPTIONS.index(label)]
        if case_id in CNN_ERRORS:
            p_truth = round(rng.uniform(0.40, 0.45), 2)
        else:
            p_truth = round(rng.uniform(0.80, 0.95), 2)
        probs = {label: p_truth, other: round(1.0 - p_truth, 2)}
        write_case(root, case_id, cells, structures, g, {"cnn_probs": probs, "ground_truth": label})
        cases[case_id] = (label, g, structures, probs)
    return cases


# --- independent verification --------------------------------------------

def quantile7(xs, q):
    s = sorted(xs)
    h = (len(s) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def feature_values(g, structures):
    return {
        "global_features.neoplastic_ratio": g[1],
        "global_features.nuclear_pleomorphism_index": g[3],
        "structures.lumen_ratio": sum(s[4] for s in structures) / len(structures),
    }


def fit_weight(x, lo, hi):
    d = 0.0 if lo <= x <= hi else min(abs(x - lo), abs(x - hi))
    w = max(hi - lo, 1e-9)
    r = d / w
    if d == 0:
        return 1.0
    if r <= 0.25:
        return 0.75
    if r <= 0.75:
        return 0.5
    if r <= 1.5:
        return 0.25
    return 0.0


def verify(training, evaluation):
    ranges = {}
    for label in OPTIONS:
        vals = [feature_values(g, s) for (lab, g, s) in training.values() if lab == label]
        for f in FEATURES:
            xs = [v[f] for v in vals]
            ranges[(f, label)] = (quantile7(xs, QUANTILE), quantile7(xs, 1 - QUANTILE))
    tallies = {"cnn_only": 0, "sql_only": 0, "full": 0}
    flagged = 0
    for case_id, (label, g, s, probs) in sorted(evaluation.items()):
        obs = feature_values(g, s)
        raw = {o: sum(fit_weight(obs[f], *ranges[(f, o)]) for f in FEATURES) / len(FEATURES) for o in OPTIONS}
        total = sum(raw.values())
        sql = {o: raw[o] / total for o in OPTIONS}
        fused = {o: ALPHA * probs[o] + (1 - ALPHA) * sql[o] for o in OPTIONS}

        def top(p):
            return max(OPTIONS, key=lambda o: (p[o], -OPTIONS.index(o)))

        tallies["cnn_only"] += top(probs) == label
        tallies["sql_only"] += top(sql) == label
        tallies["full"] += top(fused) == label
        flagged += top(probs) != top(sql)
    expected = {"cnn_only": 17, "sql_only": 20, "full": 20}
    if tallies != expected or flagged != 3:
        raise SystemExit(f"fixture verification failed: {tallies}, flagged={flagged}")
    return ranges


def guard_corpus():
    """Hostile and malformed inputs with their expected guard outcome."""
    V, R = "validated", "rejected"
    entries = [
        # DDL / DML at statement head
        ("DROP TABLE cells", R, "sanitize", "forbidden keyword DROP"),
        ("drop table cells", R, "sanitize", "forbidden keyword DROP"),
        ("UPDATE cells SET area = 0", R, "sanitize", "forbidden keyword UPDATE"),
        ("DELETE FROM cells", R, "sanitize", "forbidden keyword DELETE"),
        ("INSERT INTO cells VALUES (1)", R, "sanitize", "forbidden keyword INSERT"),
        ("ALTER TABLE cells ADD COLUMN x", R, "sanitize", "forbidden keyword ALTER"),
        ("CREATE TABLE t (a INT)", R, "sanitize", "forbidden keyword CREATE"),
        ("ATTACH DATABASE 'x.db' AS x", R, "sanitize", "forbidden keyword ATTACH"),
        ("PRAGMA table_info(cells)", R, "sanitize", "forbidden keyword PRAGMA"),
        ("```sql\nDELETE FROM cells\n```", R, "sanitize", "forbidden keyword DELETE"),
        ("Here is the fix:\nUPDATE cells SET area = 1", R, "sanitize", "forbidden keyword UPDATE"),
        # multi-statement
        ("SELECT area FROM cells; DROP TABLE cells", R, "sanitize", "forbidden keyword DROP"),
        ("SELECT area FROM cells; SELECT 1 FROM cells", R, "sanitize", "statement separator"),
        ("SELECT area FROM cells;;", R, "sanitize", "statement separator"),
        # comment smuggling
        ("SELECT area FROM cells -- hidden", R, "sanitize", "comment token"),
        ("SELECT area /* x */ FROM cells", R, "sanitize", "comment token"),
        ("SELECT area FROM cells WHERE 1 = 1 #", R, "sanitize", "comment token"),
        ("SELECT area FROM cells */", R, "sanitize", "comment token"),
        ("```sql\nSELECT area FROM cells --\n```", R, "sanitize", "comment token"),
        # empty
        ("", R, "sanitize", "empty query"),
        ("```sql\n```", R, "sanitize", "empty query"),
        # fenced prose
        ("```sql\nSELECT COUNT(*) FROM cells\n```", V, "SELECT COUNT(*) FROM cells", []),
        ("Sure! Here is the query:\n\n```sql\nSELECT AVG(area) FROM cells\n```\nIt averages the areas.", V,
         "SELECT AVG(area) FROM cells", []),
        ("The query is:\nSELECT MAX(area) FROM cells\n\nThis returns the largest nucleus.", V,
         "SELECT MAX(area) FROM cells", []),
        ("SELECT COUNT(*) FROM cells;", V, "SELECT COUNT(*) FROM cells", []),
        ("select  count( * ) from cells", V, "SELECT COUNT(*) FROM cells", []),
        # literals that only look hostile
        ("SELECT COUNT(*) FROM cells WHERE cell_type = 'drop; --'", V,
         "SELECT COUNT(*) FROM cells WHERE cell_type = 'drop; --'", []),
        # typos and repairs
        ("SELECT avg(are) FROM cells", V, "SELECT AVG(area) FROM cells",
         [{"kind": "identifier_fix", "before": "are", "after": "area", "edit_distance": 1}]),
        ("SELCT COUNT(*) FROM cells", V, "SELECT COUNT(*) FROM cells",
         [{"kind": "keyword_fix", "before": "SELCT", "after": "SELECT", "edit_distance": 1}]),
        ("```sql\nSELECT AVG(perimeterr) FROM cells\n```", V, "SELECT AVG(perimeter) FROM cells",
         [{"kind": "identifier_fix", "before": "perimeterr", "after": "perimeter", "edit_distance": 1}]),
        ("SELECT area FROM cels", V, "SELECT area FROM cells",
         [{"kind": "identifier_fix", "before": "cels", "after": "cells", "edit_distance": 1}]),
        ("SELECT COUNT(*) FROM cells WHERE cell_type = \"neoplastic\"", V,
         "SELECT COUNT(*) FROM cells WHERE cell_type = 'neoplastic'",
         [{"kind": "quote_fix", "before": "\"neoplastic\"", "after": "'neoplastic'", "edit_distance": 2}]),
        ("SELECT cell_type, COUNT(*) FROM cells GROUP BY cell_type ORDR BY cell_type", V,
         "SELECT cell_type, COUNT(*) FROM cells GROUP BY cell_type ORDER BY cell_type ASC",
         [{"kind": "keyword_fix", "before": "ORDR", "after": "ORDER", "edit_distance": 1}]),
        ("SELECT AVG(zzz) FROM cells", R, "repair_exhausted", None),
        ("SELECT AVG(area) FROM nosuchtable", R, "repair_exhausted", None),
        # outside the subset
        ("SELECT a.area FROM cells a JOIN structures s ON a.cell_id = s.structure_id", R, "parse", None),
        ("SELECT area FROM (SELECT area FROM cells)", R, "parse", None),
        ("SELECT area FROM cells UNION SELECT area FROM structures", R, "parse", None),
        ("SELECT FROM cells", R, "parse", None),
        ("WITH x AS (SELECT area FROM cells) SELECT area FROM x", R, "parse", None),
        ("SELECT area FROM cells WHERE", R, "parse", None),
        # schema violations that repair cannot address
        ("SELECT SQRT(cell_type) FROM cells", R, "schema", None),
        ("SELECT AVG(cell_type) FROM cells", R, "schema", None),
        ("SELECT area FROM cells WHERE area = 'big'", R, "schema", None),
        ("SELECT AVG(AVG(area)) FROM cells", R, "parse", None),
        ("SELECT cell_type FROM cells WHERE cell_type > 3", R, "schema", None),
    ]
    out = []
    for text, status, third, fourth in entries:
        e = {"input": text, "status": status}
        if status == V:
            e["canonical_text"] = third
            e["repair_log"] = fourth
        else:
            e["stage"] = third
            if fourth is not None:
                e["reason"] = fourth
        out.append(e)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures"))
    args = ap.parse_args()
    root = Path(args.out)
    if root.exists():
        shutil.rmtree(root)
    root.mkdir(parents=True)

    write_json(root / "manifest.json", manifest())
    write_json(root / "manifest_ambiguous.json", ambiguous_manifest())
    write_json(root / "questions.json", [{
        "case_id": "*",
        "prompt": "Which adenocarcinoma subtype best matches the tissue patch?",
        "options": OPTIONS,
    }])
    write_json(root / "features.json", FEATURES)
    write_json(root / "guard_corpus.json", guard_corpus())

    demo_case(root / "demo")
    rng = random.Random(20240917)
    training = training_split(root / "training", rng)
    evaluation = eval_split(root / "eval", rng)
    ranges = verify(training, evaluation)
    write_json(root / "ranges.json", [
        {"feature_key": f, "option_label": o, "low": round(lo, 6), "high": round(hi, 6), "source": "empirical"}
        for f in FEATURES for o in OPTIONS for lo, hi in [ranges[(f, o)]]
    ])
    print(f"wrote fixtures to {root}")


if __name__ == "__main__":
    main()
