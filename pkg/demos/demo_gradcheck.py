"""Verify the hand-written backpropagation against finite differences.

Every parameter of a small 2-block model is perturbed by +-1e-5 and the
central-difference slope of the loss is compared with the analytic
gradient, per parameter group. A linear model under squared loss is checked
too: there central differences are exact up to float rounding, so it
isolates bookkeeping errors from finite-difference truncation.

Run: python demos/demo_gradcheck.py
"""

from mixtag.nn import grad_check

for kind in ("linear", "full", "dropout"):
    report = grad_check(kind=kind, seed=0)
    print(f"{kind} model: worst relative error {report.worst:.3e}")
    for name, err in sorted(report.rel_errors.items()):
        print(f"    {name:16s} {err:.3e}")
    bound = 1e-8 if kind == "linear" else 1e-4
    print(f"  -> {'OK' if report.passed(bound) else 'FAILED'} against bound {bound:g}\n")
