#!/usr/bin/env python3
"""Parameter and multiply-accumulate counts for the desk network, written
from the architecture description alone (no shared code with the C++ side).

Usage: flops_oracle.py > flops.golden
"""

LEVELS = 5


def conv(cin, cout, k, hw):
    h, w = hw
    return cout * cin * k * k + cout, k * k * cin * cout * h * w


def account(fusion, depth, enc, red, classes, h, w):
    size = [(h >> i, w >> i) for i in range(1, LEVELS + 1)]
    mods = {m: [0, 0, 0] for m in ("encoder", "reduce", "mmsm", "ce", "decoder", "head")}

    def add(mod, pm, fixed=0):
        mods[mod][0] += pm[0]
        mods[mod][1] += pm[1]
        mods[mod][2] += fixed

    cin = 3
    for i in range(LEVELS):
        add("encoder", conv(cin, enc[i], 3, size[i]))
        add("encoder", conv(enc[i], enc[i], 3, size[i]))
        cin = enc[i]
    for i in range(LEVELS):
        add("reduce", conv(enc[i], red, 3, size[i]))
    for n in range(2, depth + 1):
        for i in range(LEVELS + 1 - n):
            fixed = 0
            if fusion == "MSU":
                hh, ww = size[i]
                fixed = 2 * (1 + 9 + 25) * red * hh * ww
            add("mmsm", conv(red, red, 3, size[i]), fixed)
    for i in range(LEVELS):
        add("ce", conv(red, red, 3, size[i]))
    for i in range(LEVELS - 1):
        add("decoder", conv(red, red, 3, size[i]))
    add("head", conv(red, classes, 1, size[0]))
    return mods


CASES = [
    ("default", dict(depth=5, enc=[16, 32, 32, 64, 64], red=16, classes=1, h=64, w=64)),
    ("shallow", dict(depth=3, enc=[8, 16, 16, 32, 32], red=8, classes=4, h=96, w=128)),
    ("baseline", dict(depth=1, enc=[16, 32, 32, 64, 64], red=16, classes=1, h=64, w=64)),
]

if __name__ == "__main__":
    for name, c in CASES:
        print(f"case {name} depth={c['depth']} enc={','.join(map(str, c['enc']))} red={c['red']} "
              f"classes={c['classes']} input={c['h']}x{c['w']}")
        for fusion in ("SU", "MSU", "AU"):
            mods = account(fusion, **c)
            for m, (p, macs, fixed) in mods.items():
                print(f"{fusion} {m} {p} {macs} {fixed}")
            tot = [sum(v[j] for v in mods.values()) for j in range(3)]
            print(f"{fusion} total {tot[0]} {tot[1]} {tot[2]}")
