"""Independent reference values frozen into the C++ tests.

Requires numpy, scipy and pypower. Model-1 references are obtained by
zeroing shunts, line charging, taps and phase shifts in the PYPOWER copies of
the MATPOWER cases and solving with PYPOWER's own interior-point OPF.
"""
import math
import re
import sys

import numpy as np
from scipy.optimize import brentq, fsolve


def flow(g, b, vi, vj, ti, tj):
    s, c = math.sin(ti - tj), math.cos(ti - tj)
    return g * vi * vi - vi * vj * (b * s + g * c), -b * vi * vi - vi * vj * (g * s - b * c)


def admittance(r, x):
    y = 1.0 / complex(r, x)
    return y.real, y.imag


def count_case(path):
    text = open(path).read()
    out = {}
    for name in ("bus", "gen", "branch"):
        block = re.search(r"mpc\.%s\s*=\s*\[(.*?)\];" % name, text, re.S).group(1)
        rows = [ln.split("%")[0].strip() for ln in block.splitlines()]
        out[name] = [r.rstrip(";").split() for r in rows if r.strip(";").strip()]
    return out


def two_bus():
    # bus 1: slack, v fixed at 1.0; bus 2: pd = 0.5, qd = 0; branch r = 0.02, x = 0.2
    g, b = admittance(0.02, 0.2)

    def eqs(u):
        v2, t2 = u
        p21, q21 = flow(g, b, v2, 1.0, t2, 0.0)
        return [p21 + 0.5, q21]

    v2, t2 = fsolve(eqs, [1.0, -0.1], xtol=1e-15)
    pg = flow(g, b, 1.0, v2, 0.0, t2)[0]
    return v2, t2, pg


def bisection_angle(g, b, v1, v2, p):
    return brentq(lambda t: flow(g, b, v1, v2, t, 0.0)[0] - p, -1.0, 1.0, xtol=1e-15)


def model1_opf(name):
    from pypower import case9, case14, case30, case118
    from pypower.api import ppoption, runopf

    ppc = {"case9": case9.case9, "case14": case14.case14, "case30": case30.case30, "case118": case118.case118}[name]()
    ppc["bus"][:, 4] = 0
    ppc["bus"][:, 5] = 0
    ppc["branch"][:, 4] = 0
    ppc["branch"][:, 8] = 0
    ppc["branch"][:, 9] = 0
    r = runopf(ppc, ppoption(VERBOSE=0, OUT_ALL=0, OPF_VIOLATION=1e-8))
    return r["success"], r["f"]


if __name__ == "__main__":
    print("series_admittance(0.01, 0.1) = %.17g %.17g" % admittance(0.01, 0.1))
    print("flow(1, -10, 1.02, 0.98, 0.05, 0) = %.17g %.17g" % flow(1, -10, 1.02, 0.98, 0.05, 0.0))
    v2, t2, pg = two_bus()
    g, b = admittance(0.02, 0.2)
    print("two_bus v2 t2 pg = %.17g %.17g %.17g" % (v2, t2, pg))
    print("two_bus cost (c2=10, c1=5 per MW^2/MW on 100 MVA) = %.17g" % (10 * (100 * pg) ** 2 + 5 * 100 * pg))
    print("bisection angle (g,b,v1,v2,p)=(%r,%r,1.0,1.0,0.3): %.17g" % (g, b, bisection_angle(g, b, 1.0, 1.0, 0.3)))
    for case in sys.argv[1:]:
        c = count_case(case)
        print(case, "buses", len(c["bus"]), "gens", len(c["gen"]), "branches", len(c["branch"]),
              "loads", sum(1 for r in c["bus"] if float(r[2]) != 0 or float(r[3]) != 0))
    for name in ("case9", "case14", "case30", "case118"):
        ok, f = model1_opf(name)
        print("model1 %s success=%s objective=%.10f" % (name, ok, f))
