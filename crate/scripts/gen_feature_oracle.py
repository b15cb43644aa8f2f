#!/usr/bin/env python3
"""Reference values for the outcome-distribution feature families.

Writes crates/cli/tests/fixtures/feature_oracle.json: seeded random outcome
token candidate lists and, for each, the expected outcome_topk.*,
filtered_outcome.* and logodds_margin.* values computed with mpmath at
50 significant digits from the exact binary64 inputs.
"""

import json
import random
from pathlib import Path

from mpmath import mp, mpf, exp, log

mp.dps = 50

SEED = 42
N_CASES = 1000
TOP_K = 5
EPS = mpf("1e-12")
POOL = ["0", "1", "2", "3", " 0", " 1", '"2"', "yes", "No", "INCONCLUSIVE_EVIDENCE",
        "inconclusive_definition", "maybe", "the", "x", "\n", "4", "10", " Yes"]
WORDS = {"no": 0, "yes": 1, "inconclusive_evidence": 2, "inconclusive_definition": 3}


def label_of(surface):
    t = surface.strip().strip("\"'").strip()
    if t in ("0", "1", "2", "3"):
        return int(t)
    return WORDS.get(t.lower())


def log2(x):
    return log(x, 2)


def stats(probs, k, with_msp):
    probs = sorted(probs, reverse=True)
    h = -sum((p * log2(p) for p in probs if p > 0), mpf(0))
    norm = h / log2(k) if k > 1 else mpf(0)
    p1 = probs[0]
    p2 = probs[1] if len(probs) > 1 else mpf(0)
    out = {
        "entropy": h,
        "normalized_entropy": norm,
        "effective_choices": mpf(2) ** h,
        "confidence": 1 - norm,
    }
    if with_msp:
        out["msp"] = p1
    out["top2_margin"] = p1 - p2
    out["top2_margin_normalized"] = (p1 - p2) / max(p1, EPS)
    out["top1_top2_ratio"] = p1 / max(p2, EPS)
    return out


def pair(logs):
    if len(logs) < 2:
        return mpf(0), mpf(0), False
    logs = sorted(logs, reverse=True)
    d = logs[1] - logs[0]
    return d, d / min(logs[1], -EPS), True


def case(rng):
    n = rng.randint(2, len(POOL))
    surfaces = rng.sample(POOL, n)
    if all(label_of(s) is None for s in surfaces):
        surfaces[0] = "1"
    weights = [rng.expovariate(1.0) ** rng.choice([1, 2, 4]) for _ in range(n)]
    residual = rng.uniform(0.0, 0.3)
    total = sum(weights)
    logprobs = [float(log(mpf(w) / mpf(total) * mpf(1 - residual))) for w in weights]
    logprobs = [min(lp, 0.0) for lp in logprobs]
    cands = sorted(zip(surfaces, logprobs), key=lambda c: -c[1])
    exact = [(s, mpf(lp)) for s, lp in cands]

    top = [lp for _, lp in exact[:TOP_K]]
    z = sum(exp(l) for l in top)
    topk = [exp(l) / z for l in top]

    mass = [mpf(0)] * 4
    for s, lp in exact:
        lab = label_of(s)
        if lab is not None:
            mass[lab] += exp(lp)
    tot = sum(mass)
    filt = [m / tot for m in mass]

    expected = {}
    for k, v in stats(topk, len(topk), True).items():
        expected["outcome_topk." + k] = v
    for k, v in stats(filt, 4, False).items():
        expected["filtered_outcome." + k] = v
    m, mn, ok = pair([lp for _, lp in exact])
    fm, fmn, fok = pair([log(x) for x in mass if x > 0])
    expected["logodds_margin.margin"] = m
    expected["logodds_margin.margin_normalized"] = mn
    expected["logodds_margin.filtered_margin"] = fm
    expected["logodds_margin.filtered_margin_normalized"] = fmn
    expected["logodds_margin.valid"] = mpf(1 if ok else 0)
    expected["logodds_margin.filtered_valid"] = mpf(1 if fok else 0)
    return {
        "candidates": [[s, lp] for s, lp in cands],
        "expected": {k: float(v) for k, v in expected.items()},
    }


def main():
    rng = random.Random(SEED)
    cases = [case(rng) for _ in range(N_CASES)]
    out = Path(__file__).resolve().parent.parent / "crates/cli/tests/fixtures/feature_oracle.json"
    out.write_text(json.dumps({"seed": SEED, "top_k": TOP_K, "digits": mp.dps, "cases": cases}, indent=1) + "\n")
    print(f"wrote {len(cases)} cases to {out}")


if __name__ == "__main__":
    main()
