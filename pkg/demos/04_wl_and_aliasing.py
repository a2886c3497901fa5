"""
What message passing can and cannot tell apart
==============================================

Colour refinement on fuzzy graphs comes in a weak form, which only sees
per-colour sums of edge weights, and a strong form, which sees each weight.
The magnetic Laplacian, by contrast, folds both weights into one phase and
can confuse neighborhoods that fuzzy aggregation separates.
"""

from coed.wl import magnetic_aliasing_demo, weak_strong_pair, wl_isomorphism_test

g1, g2 = weak_strong_pair()
for form in ("weak", "strong"):
    v = wl_isomorphism_test(g1, g2, form)
    print("%-6s form: %s (round %d)" % (form, v.verdict, v.round))

r = magnetic_aliasing_demo()
print("magnetic aggregates:", r.magnetic_a, r.magnetic_b)
print("fuzzy (in, out) A:", r.fuzzy_a, " B:", r.fuzzy_b)
print("fuzzy gap %.3f, magnetic gap %.1e" % (r.fuzzy_gap, r.magnetic_gap))
