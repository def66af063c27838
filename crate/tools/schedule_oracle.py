"""High-precision reference for batch schedules.

Recomputes split factors, layer widths and batch grids with 60-digit
arithmetic and writes the frozen cases consumed by the Rust test suite
(crates/core/tests/fixtures/schedule_oracle.json).

    python3 tools/schedule_oracle.py > crates/core/tests/fixtures/schedule_oracle.json
"""

import json
import random

import mpmath as mp

mp.mp.dps = 60


def ifloor(x):
    # 60-digit rounding can leave exact integers such as 8**(2/3) a hair below
    n = mp.nint(x)
    if abs(x - n) < mp.mpf(10) ** -40:
        return int(n)
    return int(mp.floor(x))


def split_factors(T, M, alpha, a_scale, exponent):
    gamma = (1 + mp.mpf(alpha)) / exponent
    rate = (1 - gamma) / (1 - gamma ** M)
    a = mp.mpf(a_scale) * mp.power(T, rate)
    b = [max(1, ifloor(mp.power(a, mp.mpf(1) / exponent)))]
    for _ in range(1, M - 1):
        b.append(max(1, ifloor(mp.power(b[-1], gamma))))
    return b, gamma, rate


def widths(lower, upper, b, M):
    length = mp.mpf(upper) - mp.mpf(lower)
    out = []
    prod = 1
    for i in range(1, M + 1):
        prod = 1
        for l in range(min(i, M - 1)):
            prod *= b[l]
        out.append(length / prod)
    return out


def grid(T, ws, c_b, exponent):
    M = len(ws)
    t = [0]
    deltas = []
    for i in range(M - 1):
        w = ws[i]
        arg = 2 * T * w
        if arg <= 1:
            d = 0
        else:
            d = ifloor(mp.mpf(c_b) * mp.power(w, -exponent) * mp.log(arg))
        deltas.append(d)
        t.append(min(t[-1] + d, T))
    t.append(T)
    return t, deltas


def case(rng, exponent):
    T = int(10 ** rng.uniform(0.4, 7.0))
    T = max(2, min(T, 10 ** 7))
    M = rng.randint(2, 8)
    alpha = rng.choice([1.0, 0.5, round(rng.uniform(0.01, 1.0), 4)])
    a_scale = rng.choice([1.0, 1.0, round(rng.uniform(0.2, 5.0), 3)])
    length = rng.choice([1.0, 2.0, round(rng.uniform(0.1, 20.0), 3)])
    lower = -length / 2 if rng.random() < 0.5 else 0.0
    upper = lower + length
    c_b = rng.choice([1.0, round(10 ** rng.uniform(-1, 4), 3)])
    b, gamma, rate = split_factors(T, M, alpha, a_scale, exponent)
    ws = widths(lower, upper, b, M)
    t, _ = grid(T, ws, c_b, exponent)
    return {
        "T": T,
        "M": M,
        "alpha": alpha,
        "a_scale": a_scale,
        "c_b": c_b,
        "exponent": exponent,
        "lower": lower,
        "upper": upper,
        "gamma": float(gamma),
        "split_factors": b,
        "widths": [float(w) for w in ws],
        "grid": t,
    }


def named():
    out = {}
    b, _, rate = split_factors(10 ** 6, 5, 1.0, 1.0, 3)
    a = mp.power(10 ** 6, rate)
    out["t1e6_m5"] = {"split_factors": b, "rate": float(rate), "a": float(a),
                      "cube_root": float(mp.cbrt(a))}
    b, _, _ = split_factors(10 ** 6, 2, 1.0, 1.0, 3)
    out["t1e6_m2"] = {"split_factors": b}
    b, _, _ = split_factors(2, 2, 1.0, 1.0, 3)
    out["t2_m2"] = {"split_factors": b}
    b7, g7, _ = split_factors(10 ** 6, 5, 1.0, 1.0, 7)
    out["np_d5_t1e6_m5"] = {"split_factors": b7, "gamma": float(g7),
                            "widths_unit": [float(w) for w in widths(0, 1, b7, 5)],
                            "bids_widths_unit": [float(w) for w in widths(0, 1, out["t1e6_m5"]["split_factors"], 5)]}
    # single batch-length values used by unit tests
    out["delta_t1e4_w025"] = int(mp.floor(mp.power(mp.mpf("0.25"), -3) * mp.log(2 * 10000 * mp.mpf("0.25"))))
    out["delta_t100_w1"] = int(mp.floor(mp.log(200)))
    out["threshold_m32_t1000_w05"] = float(4 * mp.sqrt(2 * mp.log(1000) / 32))
    return out


def thresholds(rng, n):
    out = []
    while len(out) < n:
        m = int(10 ** rng.uniform(0, 7))
        T = int(10 ** rng.uniform(0.4, 7.0))
        w = 10 ** rng.uniform(-4, 1.3)
        arg = 2 * T * mp.mpf(w)
        if arg <= 1:
            continue
        out.append({"m": m, "T": T, "w": w, "U": float(4 * mp.sqrt(2 * mp.log(arg) / m))})
    return out


def main():
    rng = random.Random(20240607)
    cases = [case(rng, 3) for _ in range(100)]
    np_cases = [case(rng, d + 2) for d in (1, 2, 3, 5, 5, 7) for _ in range(5)]
    out = {"cases": cases, "np_cases": np_cases, "named": named(),
           "thresholds": thresholds(random.Random(7), 1000)}
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
