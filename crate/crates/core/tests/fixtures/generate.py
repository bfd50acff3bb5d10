#!/usr/bin/env python3
# SPDX-License-Identifier: MIT OR Apache-2.0
"""Regenerates the golden fixtures in this directory.

Each fixture is a small file in the artifact formats the pipeline consumes
(ACTV activations, direction JSON, corpus JSONL, response and prediction
tables, a per-prompt pair table). The contents are constructed so that an
exact reduction reproduces the reference summary numbers. Every target is
re-checked here with numpy before anything is written.

Run from any directory: `python3 generate.py`.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
rng = np.random.default_rng(20240611)

# ---------------------------------------------------------------- readout

READOUT_LAYER = 18
READOUT_DIM = 4
READOUT_SPLITS = [
    # split, pairs, correct, printed mean delta
    ("direction_train", 756, 674, "417.36"),
    ("direction_val", 756, 689, "413.43"),
    ("behavior_eval", 324, 261, "137.19"),
    ("heldout_readout", 28, 26, "443.62"),
    ("heldout_behavior_eval", 12, 9, "123.08"),
]


def quarter_sum(n, printed):
    """Smallest-error multiple of 0.25 whose mean prints as `printed`."""
    target = float(printed) * n
    best = None
    for k in range(int(target * 4) - 8, int(target * 4) + 9):
        s = k / 4
        text = f"{s / n:.2f}"
        frac = (s / n) * 100 % 1
        if text == printed and abs(frac - 0.5) > 1e-6:
            if best is None or abs(s - target) < abs(best - target):
                best = s
    assert best is not None, printed
    return best


def readout_deltas(n, correct, total):
    neg = -rng.integers(1, 400, size=n - correct).astype(float)
    weights = rng.uniform(0.2, 1.8, size=correct)
    pos = np.round((total - neg.sum()) * weights / weights.sum() * 4) / 4
    pos[np.argmax(pos)] += total - neg.sum() - pos.sum()
    assert pos.min() > 0
    deltas = np.concatenate([pos, neg])
    rng.shuffle(deltas)
    return deltas


def actv_bytes(tag, dim, records):
    out = bytearray(b"ACTV")
    out += struct.pack("<BIH", 1, dim, len(tag))
    out += tag.encode()
    for pid, layer, pos, vec in records:
        b = pid.encode()
        out += struct.pack("<H", len(b)) + b
        out += struct.pack("<Hi", layer, pos)
        out += struct.pack(f"<{dim}f", *vec)
    return bytes(out)


def write_readout():
    records = []
    train_ids = []
    for split, n, correct, printed in READOUT_SPLITS:
        total = quarter_sum(n, printed)
        deltas = readout_deltas(n, correct, total)
        assert (deltas > 0).sum() == correct and (deltas == 0).sum() == 0
        assert f"{deltas.sum() / n:.2f}" == printed
        for i, d in enumerate(deltas):
            base = f"{split}-{i:04}"
            paper = [float(rng.integers(-2000, 2000))] + list(
                rng.integers(-64, 64, size=READOUT_DIM - 1) / 4
            )
            realized = [paper[0] + d] + list(rng.integers(-64, 64, size=READOUT_DIM - 1) / 4)
            records.append((f"{base}-paper", READOUT_LAYER, -1, paper))
            records.append((f"{base}-realized", READOUT_LAYER, -1, realized))
            if split == "direction_train":
                train_ids += [f"{base}-paper", f"{base}-realized"]
    tag = "fixture;hook=block_output;layer=18"
    (HERE / "readout.actv").write_bytes(actv_bytes(tag, READOUT_DIM, records))

    h = hashlib.sha256()
    for pid in sorted(train_ids):
        h.update(pid.encode() + b"\n")
    direction = {
        "layer": READOUT_LAYER,
        "variant": "train_only",
        "raw_norm": 417.36,
        "train_fingerprint": h.hexdigest(),
        "vector": [1.0, 0.0, 0.0, 0.0],
    }
    (HERE / "readout_direction.json").write_text(json.dumps(direction, indent=2) + "\n")


# ------------------------------------------------- steering and compliance

SOURCES = ["sonnet", "gpt-5.4", "grok-fast"]
PAIRS_PER_SOURCE = 108
STEER_SCALES = [-50, 50, 75, 100, 150]
# scale: (matched all-valid rows, printed mean wager, printed mean risk)
TABLE1 = {
    -50: (478, "11.80", "0.094"),
    50: (476, "7.24", "0.013"),
    75: (483, "8.21", "-0.025"),
    100: (478, "15.24", "-0.050"),
    150: (473, "12.80", "-0.080"),
}
EXACT_TWO_M50 = (350, "7.22", "0.057")
# noncompliant exactly-two responses at scale -50, out of 216 per source
COMPLIANCE_M50 = {"sonnet": 106, "gpt-5.4": 46, "grok-fast": 70}


def int_sum(n, printed, digits):
    for s in sorted(range(-5 * n, 500 * n), key=lambda s: abs(s - float(printed) * n)):
        if f"{s / n:.{digits}f}" == printed:
            return s
    raise AssertionError(printed)


def spread(n, total, lo, hi, zero_frac):
    """`n` integers in [lo, hi] summing to `total`, at least `zero_frac` zeros."""
    out = np.zeros(n, dtype=int)
    k = n - int(np.ceil(zero_frac * n))
    if hi <= 1 and lo >= -1:
        # +-1 values: need k >= |total| and matching parity
        k = abs(total) + 2 * ((k - abs(total)) // 2) if k > abs(total) else abs(total)
        plus = (k + total) // 2
        vals = np.array([1] * plus + [-1] * (k - plus))
    else:
        vals = rng.integers(lo, hi + 1, size=k)
        vals[vals == 0] = 1
        while vals.sum() != total:
            j = rng.integers(k)
            step = 1 if vals.sum() < total else -1
            if lo <= vals[j] + step <= hi and vals[j] + step != 0:
                vals[j] += step
    out[:k] = vals
    rng.shuffle(out)
    assert out.sum() == total and (out == 0).mean() > 0.5
    return out


def response_text(state, wager, risk):
    if state == "E":
        return f"{wager} {risk}"
    if state == "V":
        return f"Wager {wager}, risk {risk}, final answer 1"
    return rng.choice(["I refuse to gamble.", f"{wager}", "Risk: 9 and 12 CHF"])


def write_steering():
    prompts = []
    corpus = []
    domains = ["casino", "finance"]
    for s_idx, source in enumerate(SOURCES):
        for j in range(PAIRS_PER_SOURCE):
            pair = f"b{s_idx}{j:03}"
            for role, cond in (("paper_open", "paper_loss_medium"), ("realized_closed", "realized_loss_medium")):
                pid = f"{pair}-{role.split('_')[0]}"
                prompts.append((pid, source))
                corpus.append({
                    "id": pid,
                    "pair_id": pair,
                    "role": role,
                    "domain": domains[j % 2],
                    "split": "behavior_eval",
                    "source": source,
                    "condition": {"name": cond, "prompt_version": "absolute"},
                    "task": "wager_risk",
                    "text": f"{role} vignette {pair}. Return two integers.",
                })
    n = len(prompts)
    ids = [p for p, _ in prompts]

    # scale -50 cell plan: (baseline, steered) states
    steered_e = np.zeros(n, dtype=bool)
    for source, bad in COMPLIANCE_M50.items():
        members = [i for i, (_, s) in enumerate(prompts) if s == source]
        good = rng.choice(members, size=len(members) - bad, replace=False)
        steered_e[good] = True
    e_idx = np.flatnonzero(steered_e)
    ne_idx = np.flatnonzero(~steered_e)
    rng.shuffle(e_idx)
    rng.shuffle(ne_idx)
    n_ee = EXACT_TWO_M50[0]
    n_ev = TABLE1[-50][0] - n_ee
    base_state = np.array(["E"] * n, dtype=object)
    m50_state = np.array(["I"] * n, dtype=object)
    m50_state[e_idx] = "E"
    base_state[e_idx[n_ee:]] = "I"
    m50_state[ne_idx[:n_ev]] = "V"

    base_wager = rng.integers(60, 500, size=n)
    base_risk = rng.integers(2, 5, size=n)
    rows = []
    for i in range(n):
        rows.append((ids[i], 0, base_state[i], base_wager[i], base_risk[i]))

    for scale in STEER_SCALES:
        matched, wager_p, risk_p = TABLE1[scale]
        valid_base = np.flatnonzero(base_state != "I")
        if scale == -50:
            state = m50_state
            ee = np.flatnonzero((base_state == "E") & (m50_state == "E"))
            ev = np.flatnonzero((base_state == "E") & (m50_state == "V"))
            n2, w2p, r2p = EXACT_TWO_M50
            assert len(ee) == n2 and len(ee) + len(ev) == matched
            w2 = int_sum(n2, w2p, 2)
            r2 = int_sum(n2, r2p, 3)
            w_all = int_sum(matched, wager_p, 2)
            r_all = int_sum(matched, risk_p, 3)
            wd = np.zeros(n, dtype=int)
            rd = np.zeros(n, dtype=int)
            wd[ee] = spread(len(ee), w2, -40, 450, 0.6)
            rd[ee] = spread(len(ee), r2, -1, 1, 0.6)
            wd[ev] = spread(len(ev), w_all - w2, -40, 450, 0.6)
            rd[ev] = spread(len(ev), r_all - r2, -1, 1, 0.6)
        else:
            state = np.array(["I"] * n, dtype=object)
            chosen = rng.choice(valid_base, size=matched, replace=False)
            state[chosen] = rng.choice(["E", "E", "E", "V"], size=matched)
            others = np.flatnonzero(base_state == "I")
            state[others] = rng.choice(["E", "I"], size=len(others))
            wd = np.zeros(n, dtype=int)
            rd = np.zeros(n, dtype=int)
            wd[chosen] = spread(matched, int_sum(matched, wager_p, 2), -40, 450, 0.6)
            rd[chosen] = spread(matched, int_sum(matched, risk_p, 3), -1, 1, 0.6)
        for i in range(n):
            rows.append((ids[i], scale, state[i], base_wager[i] + wd[i], base_risk[i] + rd[i]))

    # independent re-check of every reference cell
    by = {(pid, sc): (st, w, r) for pid, sc, st, w, r in rows}
    for scale in STEER_SCALES:
        subsets = [("valid", TABLE1[scale])]
        if scale == -50:
            subsets.append(("two", EXACT_TWO_M50))
        for subset, (count, wp, rp) in subsets:
            ok = {"E", "V"} if subset == "valid" else {"E"}
            d = [
                (by[(p, scale)][1] - by[(p, 0)][1], by[(p, scale)][2] - by[(p, 0)][2])
                for p in ids
                if by[(p, scale)][0] in ok and by[(p, 0)][0] in ok
            ]
            w = np.array([a for a, _ in d])
            r = np.array([b for _, b in d])
            assert len(d) == count, (scale, subset, len(d))
            assert f"{w.mean():.2f}" == wp and f"{r.mean():.3f}" == rp, (scale, subset)
            assert np.median(w) == 0 and np.median(r) == 0
    for source, bad in COMPLIANCE_M50.items():
        got = sum(1 for p, s in prompts if s == source and by[(p, -50)][0] != "E")
        assert got == bad

    lines = ["prompt_id,scale,raw_text,wager,risk,valid,exactly_two,failure_flag"]
    for pid, scale, st, w, r in rows:
        assert 1 <= w <= 1000 and 1 <= r <= 5
        text = response_text(st, w, r)
        valid = st != "I"
        cells = [
            pid,
            str(scale),
            text,
            str(w) if valid else "",
            str(r) if valid else "",
            "true" if valid else "false",
            "true" if st == "E" else "false",
            "false",
        ]
        if st == "I":
            cells[3], cells[4] = parsed_invalid(text)
        lines.append(",".join(f'"{c}"' if "," in c else c for c in cells))
    (HERE / "table1_responses.csv").write_text("\n".join(lines) + "\n")
    (HERE / "behavior_corpus.jsonl").write_text(
        "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in corpus)
    )


def parsed_invalid(text):
    runs = [int(t) for t in __import__("re").findall(r"-?\d+", text)]
    wager = str(runs[0]) if runs else ""
    risk = str(runs[1]) if len(runs) > 1 else ""
    return wager, risk


# --------------------------------------------------------- classification

# scale: (correct, realized predictions) out of 648, 324 per class
CLASSIFY = {0: (337, 91), 100: (334, 128), -100: (332, 78)}


def dyadic(x):
    return round(x * 64) / 64


def write_predictions():
    lines = [
        "prompt_id,scale,normalized_paper,normalized_realized,prior_paper,prior_realized,prediction,true_role"
    ]
    pooled = {"PAPER": [0, 0], "REALIZED": [0, 0]}
    for scale, (correct, realized_preds) in CLASSIFY.items():
        tp = (correct - 324 + realized_preds) // 2
        fp = realized_preds - tp
        assert 324 - fp + tp == correct
        prior_p = dyadic(rng.uniform(-3, -1))
        prior_r = dyadic(rng.uniform(-3, -1))
        flags = {
            "PAPER": np.array([True] * fp + [False] * (324 - fp)),
            "REALIZED": np.array([True] * tp + [False] * (324 - tp)),
        }
        for role in ("PAPER", "REALIZED"):
            rng.shuffle(flags[role])
            for j, pred_realized in enumerate(flags[role]):
                pid = f"c{j:03}-{role.lower()}"
                np_ = dyadic(rng.uniform(-6, -1))
                margin = dyadic(rng.uniform(1 / 64, 2))
                # calibrated realized minus calibrated paper
                if pred_realized:
                    gap = margin
                else:
                    gap = 0.0 if j % 37 == 0 else -margin
                nr = np_ - prior_p + prior_r + gap
                assert ((nr - prior_r) > (np_ - prior_p)) == bool(pred_realized)
                pred = "REALIZED" if pred_realized else "PAPER"
                pooled[role][0] += pred == role
                pooled[role][1] += 1
                lines.append(f"{pid},{scale},{np_!r},{nr!r},{prior_p!r},{prior_r!r},{pred},{role}")
    assert pooled == {"PAPER": [839, 972], "REALIZED": [164, 972]}
    (HERE / "predictions.csv").write_text("\n".join(lines) + "\n")


# ------------------------------------------------ projection vs behavior

PAIR_TARGETS = {
    # outcome: (raw coefficient, controlled coefficient, within-pair r, digits)
    "wager": (84.44, 5.21, 0.072, 2),
    "risk_profile": (0.136, 0.134, 0.001, 3),
}
CONTROL_LEVELS = {
    "domain": ["casino", "finance"],
    "outcome_valence": ["gain", "loss", "even"],
    "amount_bucket": ["small", "medium", "large"],
    "prompt_source": SOURCES,
}


def dummies(values, levels):
    base = sorted(levels)[0]
    return np.column_stack([(values == lv).astype(float) for lv in sorted(levels) if lv != base])


def ols(x, y):
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    return beta


def write_pair_table():
    n_pairs = 324
    ids = [f"b{s}{j:03}" for s in range(3) for j in range(PAIRS_PER_SOURCE)]
    pair_id = np.repeat(ids, 2)
    role = np.tile(["paper_open", "realized_closed"], n_pairs)
    realized = (role == "realized_closed").astype(float)
    cols = {}
    for name, levels in CONTROL_LEVELS.items():
        per_pair = rng.choice(levels, size=n_pairs)
        if name == "prompt_source":
            per_pair = np.repeat(SOURCES, PAIRS_PER_SOURCE)
        cols[name] = np.repeat(per_pair, 2)
    projection = np.round(rng.normal(0, 40, size=2 * n_pairs) + 60 * realized, 2)
    z = (projection - projection.mean()) / projection.std(ddof=1)

    ones = np.ones(2 * n_pairs)
    x_raw = np.column_stack([ones, z])
    x_ctl = np.column_stack(
        [ones, z, dummies(role, ["paper_open", "realized_closed"])]
        + [dummies(cols[k], v) for k, v in CONTROL_LEVELS.items()]
    )
    paper_rows = np.arange(0, 2 * n_pairs, 2)

    def stats(y):
        dp = projection[paper_rows + 1] - projection[paper_rows]
        dy = y[paper_rows + 1] - y[paper_rows]
        return ols(x_raw, y)[1], ols(x_ctl, y)[1], np.corrcoef(dp, dy)[0, 1]

    out = {}
    for outcome, (raw_t, ctl_t, r_t, digits) in PAIR_TARGETS.items():
        lo, hi, center, spread_ = (1, 1000, 300, 120) if outcome == "wager" else (1, 5, 3, 0.9)
        noise = rng.normal(0, spread_, size=2 * n_pairs)
        noise -= x_ctl @ ols(x_ctl, noise)
        # role effect chosen so the raw slope hits its target
        r_col = realized - realized.mean()
        lift = ols(x_raw, r_col)[1]
        # pair-difference component tuned so the within-pair r hits its target
        q = np.zeros(2 * n_pairs)
        dp = projection[paper_rows + 1] - projection[paper_rows]
        q[paper_rows + 1] = dp / 2
        q[paper_rows] = -dp / 2
        q -= x_ctl @ ols(x_ctl, q)
        smooth = center + ctl_t * z + ((raw_t - ctl_t) / lift) * r_col + noise

        def within_r(alpha):
            v = smooth + alpha * q
            return np.corrcoef(dp, v[paper_rows + 1] - v[paper_rows])[0, 1]

        lo_a, hi_a = -1e3, 1e3
        for _ in range(200):
            mid = (lo_a + hi_a) / 2
            lo_a, hi_a = (mid, hi_a) if within_r(mid) < r_t else (lo_a, mid)
        y = smooth + lo_a * q
        y = np.clip(np.round(y), lo, hi).astype(int)

        def err(v):
            raw, ctl, r = stats(v.astype(float))
            tol = 0.5 * 10.0 ** -digits
            return ((raw - raw_t) / tol) ** 2 + ((ctl - ctl_t) / tol) ** 2 + ((r - r_t) / 5e-4) ** 2

        def printed(v):
            raw, ctl, r = stats(v.astype(float))
            return (
                f"{raw:.{digits}f}" == f"{raw_t:.{digits}f}"
                and f"{ctl:.{digits}f}" == f"{ctl_t:.{digits}f}"
                and f"{r:.3f}" == f"{r_t:.3f}"
            )

        best = err(y)
        for _ in range(50000):
            if printed(y) and best < 0.5:
                break
            i = rng.integers(len(y))
            step = rng.choice([-1, 1])
            if not lo <= y[i] + step <= hi:
                continue
            y[i] += step
            e = err(y)
            if e < best:
                best = e
            else:
                y[i] -= step
        assert printed(y), (outcome, stats(y.astype(float)))
        out[outcome] = y

    header = ["pair_id", "pair_role", "domain", "prompt_source", "outcome_valence",
              "amount_bucket", "projection", "wager", "risk_profile"]
    lines = [",".join(header)]
    for i in range(2 * n_pairs):
        lines.append(",".join([
            pair_id[i], role[i], cols["domain"][i], cols["prompt_source"][i],
            cols["outcome_valence"][i], cols["amount_bucket"][i], f"{projection[i]:.2f}",
            str(out["wager"][i]), str(out["risk_profile"][i]),
        ]))
    (HERE / "pair_table.csv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    write_readout()
    write_steering()
    write_predictions()
    write_pair_table()
