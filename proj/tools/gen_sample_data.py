#!/usr/bin/env python3
"""Writes data/sample_daily.csv: a seeded synthetic daily OHLCV series.

Closes follow a geometric random walk with slow regime changes in drift. Every so often a
sell-off ends in a long-lower-wick, high-volume candle so that rules-scan has something to find.
"""
import argparse
import datetime as dt
import math
import random


def generate(n, seed):
    rng = random.Random(seed)
    day = dt.date(2022, 1, 3)
    close = 20000.0
    drift = 0.0
    rows = []
    since_tail = 0
    for i in range(n):
        if i % 60 == 0:
            drift = rng.choice([-0.004, -0.001, 0.0, 0.001, 0.003])
        open_ = close
        close = open_ * math.exp(drift + rng.gauss(0.0, 0.025))
        high = max(open_, close) * (1 + abs(rng.gauss(0, 0.008)))
        low = min(open_, close) * (1 - abs(rng.gauss(0, 0.008)))
        volume = rng.uniform(800, 1600)
        since_tail += 1
        window_low = min((r[3] for r in rows[-89:]), default=low)
        if since_tail > 100 and rng.random() < 0.08:
            # hammer: new low, long lower tail, close near the top, heavy volume
            low = min(window_low, low) * 0.93
            high = max(open_, close) * 1.004
            close = high - (high - low) * 0.05
            open_ = high - (high - low) * 0.2
            volume = rng.uniform(2600, 3400)
            since_tail = 0
        rows.append((day.isoformat(), open_, high, low, close, volume))
        day += dt.timedelta(days=1)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=600)
    ap.add_argument("--seed", type=int, default=20240101)
    ap.add_argument("--out", default="data/sample_daily.csv")
    args = ap.parse_args()
    with open(args.out, "w", newline="\n") as f:
        f.write("timestamp,open,high,low,close,volume\n")
        for d, o, h, l, c, v in generate(args.n, args.seed):
            f.write(f"{d},{o:.2f},{h:.2f},{l:.2f},{c:.2f},{v:.1f}\n")


if __name__ == "__main__":
    main()
