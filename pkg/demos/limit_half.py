"""Behaviour as s -> 1/2 for a smooth compactly supported pair on (-1, 1).

The scaled nonlocal geometric error and the scaled form approach their
classical counterparts, and the nonlocal normal approaches u'/sqrt(1+u'^2).
"""
from nlmg.cli import smooth_pair_1d
from nlmg.metrics import limit_study, normals_study

u, v = smooth_pair_1d(64)
s_list = (0.3, 0.4, 0.45, 0.49, 0.499)
t = limit_study(u, v, s_list)
for r in t.rows:
    print(f"{r['quantity']:12s} s = {r['s']:<6g} value {r['value']:.6f} "
          f"classical {r['reference']:.6f} gap {r['gap']:.2e}")
n = normals_study(u, [[0.3]], s_list)
for r in n.rows:
    print(f"normal at x = 0.3, s = {r['s']:<6g} distance to classical normal {r['gap']:.2e}")
