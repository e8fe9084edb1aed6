"""End-to-end acceptance gate: one test per shipped criterion.

Every sub-check prints a single [PASS]/[FAIL] line (use ``pytest -rA`` or
``-s`` to see the lines of passing tests; a failing test carries its full
scoreboard in the assertion message).  Reference targets that could not be
reproduced from the stated problem data are left failing on purpose instead
of being loosened — the printed lines carry the measured values, and the
tracking notes live outside the package.
"""

import json
import math
import time

import numpy as np

from lqmpc import (
    TerminalDesign,
    full_report,
    induced_two_norm,
    solve_dare,
    volume,
    zeta_dare,
)
from lqmpc.cli import main

from _checks import (
    check_bound_sandwich,
    check_design_step_quadratic,
    check_inequality_chain,
    check_monotone_le_contraction,
    check_norm_sandwich,
    check_operator_monotonicity,
    check_policy_cost_below_value,
    check_qp_oracle,
    check_region_invariance,
    check_terminal_invariance,
)

K_SCALAR = np.array([[180.0]])


class _Gate:
    """Scoreboard for one criterion: collect pass/fail lines, assert at the end."""

    def __init__(self, title):
        self.title = title
        self.lines = []
        self.n_fail = 0
        self.t0 = time.perf_counter()

    def check(self, name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {self.title} | {name}: {detail}"
        self.lines.append(line)
        if not ok:
            self.n_fail += 1
        print(line)

    def rel(self, name, value, target, rtol):
        ok = math.isfinite(value) and abs(value - target) <= rtol * abs(target)
        self.check(name, ok, f"{value:.6g} vs {target:g} ±{rtol:.0%}")

    def absolute(self, name, value, target, atol):
        ok = math.isfinite(value) and abs(value - target) <= atol
        self.check(name, ok, f"{value:.6g} vs {target:g} ±{atol:g}")

    def finish(self, budget_s):
        elapsed = time.perf_counter() - self.t0
        self.check("runtime", elapsed < budget_s,
                   f"{elapsed:.1f}s (budget {budget_s:.0f}s)")
        assert self.n_fail == 0, (
            f"{self.n_fail} sub-check(s) missed their target:\n"
            + "\n".join(self.lines)
        )


def _cell(gate, name, value, spec):
    """Check one table cell: ('lt', e) value < 10^e, ('gt', e) value > 10^e,
    ('oom', e) floor(log10) == e, ('rel', t) value = t ±5%."""
    kind = spec[0]
    if kind == "lt":
        gate.check(name, value < 10.0 ** spec[1], f"{value:.6g} vs < 1e{spec[1]:+d}")
    elif kind == "gt":
        gate.check(name, value > 10.0 ** spec[1], f"{value:.6g} vs > 1e{spec[1]:+d}")
    elif kind == "oom":
        got = math.floor(math.log10(value)) if value > 0 and math.isfinite(value) else None
        gate.check(name, got == spec[1], f"{value:.6g} vs magnitude 1e{spec[1]:+d}")
    else:
        gate.rel(name, value, spec[1], 0.05)


# ---------------------------------------------------------------------------
# criterion 1: scalar study (ell = 1, K = 180): gap and all three bounds
# ---------------------------------------------------------------------------

def test_criterion_1_scalar_study(scalar_sys):
    gate = _Gate("criterion 1: scalar study")
    rep = full_report(scalar_sys, K_SCALAR, 1)
    gate.rel("actual gap", rep.actual_gap, 3.3, 0.05)
    gate.rel("contraction bound", rep.bound_contraction, 534.5, 0.05)
    gate.rel("monotone bound", rep.bound_monotone, 14.4, 0.05)
    gate.rel("newton bound", rep.bound_newton, 43.0, 0.05)
    gate.finish(1.0)


# ---------------------------------------------------------------------------
# criterion 2: amplified-design magnitudes (norm ratio and distance to K*)
# ---------------------------------------------------------------------------

def test_criterion_2_design_magnitudes(di2d_sys, ac4d_sys, di2d_K_eff, ac4d_K_eff):
    gate = _Gate("criterion 2: design magnitudes")
    rows = [("2-D", di2d_sys, di2d_K_eff, 2.5, 9.9),
            ("4-D", ac4d_sys, ac4d_K_eff, 4.3, 486.0)]
    for label, sys, K, ratio_t, dist_t in rows:
        Kstar, _ = solve_dare(sys)
        ratio = induced_two_norm(K) / induced_two_norm(Kstar)
        dist = induced_two_norm(K - Kstar)
        gate.absolute(f"{label} norm ratio", ratio, ratio_t, 0.1)
        gate.rel(f"{label} distance to K*", dist, dist_t, 0.01)
    gate.finish(1.0)


# ---------------------------------------------------------------------------
# criterion 3: gap and bound columns across horizons (five rows, four columns)
# ---------------------------------------------------------------------------

_BOUND_TABLE = [
    # label ell   gap           contraction   monotone        newton
    ("2-D", 3,  ("oom", -3),   ("lt", 10),   ("rel", 9.8),   ("oom", 2)),
    ("2-D", 10, ("lt", -13),   ("lt", 5),    ("lt", -4),     ("lt", -7)),
    ("4-D", 3,  ("rel", 2.8),  ("oom", 52),  ("rel", 486.0), ("lt", 10)),
    ("4-D", 10, ("lt", -3),    ("gt", 53),   ("rel", 404.0), ("lt", 10)),
    ("4-D", 20, ("lt", -7),    ("lt", 53),   ("rel", 248.0), ("lt", 9)),
]


def test_criterion_3_bound_table(di2d_sys, ac4d_sys, di2d_K_eff, ac4d_K_eff):
    gate = _Gate("criterion 3: bound table")
    systems = {"2-D": (di2d_sys, di2d_K_eff), "4-D": (ac4d_sys, ac4d_K_eff)}
    for label, ell, c_gap, c_contr, c_mono, c_newton in _BOUND_TABLE:
        sys, K = systems[label]
        rep = full_report(sys, K, ell)
        row = f"{label} ell={ell}"
        _cell(gate, f"{row} gap", rep.actual_gap, c_gap)
        _cell(gate, f"{row} contraction", rep.bound_contraction, c_contr)
        _cell(gate, f"{row} monotone", rep.bound_monotone, c_mono)
        _cell(gate, f"{row} newton", rep.bound_newton, c_newton)
    gate.finish(10.0)


# ---------------------------------------------------------------------------
# criterion 4: terminal-set volume ratios across amplification values
# ---------------------------------------------------------------------------

def test_criterion_4_terminal_volume_ratios(di2d_prob, di2d_design_opt):
    gate = _Gate("criterion 4: terminal-set volumes")
    base = volume(di2d_design_opt.S)  # 2-D volumes are exact (vertex areas)
    for zeta, target in ((5.0, 1.23), (15.0, 1.56), (25.0, 1.65), (35.0, 1.63)):
        design = TerminalDesign.for_amplified_cost(di2d_prob, zeta)
        gate.absolute(f"zeta={zeta:g} volume ratio", volume(design.S) / base,
                      target, 0.05)
    gate.finish(30.0)


# ---------------------------------------------------------------------------
# criteria 5 and 6 re-run the packaged studies end to end and mirror the
# emitted scoreboards
# ---------------------------------------------------------------------------

def _mirror_reproduce(gate, example, out_dir, budget_s):
    rc = main(["reproduce", "--example", example, "--out", str(out_dir)])
    with open(out_dir / "summary.json", encoding="utf-8") as f:
        summary = json.load(f)
    for c in summary["checks"]:
        ok = c["passed"] is not False  # informational entries count as context
        tag = " (info)" if c["passed"] is None else ""
        gate.check(c["name"], ok, f"{c['value_repr']} vs {c['target']}{tag}")
    gate.check("exit code", rc == 0, f"rc={rc}")
    gate.finish(budget_s)


def test_criterion_5_region_containment_and_submap(tmp_path):
    gate = _Gate("criterion 5: feasible region + suboptimality map")
    _mirror_reproduce(gate, "3", tmp_path, 600.0)


def test_criterion_6_constrained_closed_loop(tmp_path):
    gate = _Gate("criterion 6: 4-D closed-loop study")
    _mirror_reproduce(gate, "4", tmp_path, 300.0)


# ---------------------------------------------------------------------------
# criterion 7: the ten property suites
# ---------------------------------------------------------------------------

def test_criterion_7_property_suites(scalar_sys, di2d_sys, ac4d_sys,
                                     di2d_K_eff, ac4d_K_eff,
                                     scalar_dare, di2d_dare, ac4d_dare,
                                     di2d_prob, di2d_design_eff, di2d_design_opt):
    gate = _Gate("criterion 7: property suites")
    corpus = [
        (scalar_sys, K_SCALAR, 1),
        (di2d_sys, di2d_K_eff, 3),
        (di2d_sys, di2d_K_eff, 10),
        (ac4d_sys, ac4d_K_eff, 3),
        (ac4d_sys, ac4d_K_eff, 10),
        (ac4d_sys, ac4d_K_eff, 20),
    ]
    D_list = [
        scalar_dare[1].closed_loop,
        di2d_dare[1].closed_loop,
        ac4d_dare[1].closed_loop,
        np.diag([0.5, 0.9]),
        np.array([[0.3, 0.4, 0.0], [0.0, 0.2, 0.5], [0.1, 0.0, 0.6]]),
    ]
    suites = [
        ("operator monotonicity, 200 pairs",
         lambda: check_operator_monotonicity(
             [scalar_sys, di2d_sys, ac4d_sys], n_pairs=200)),
        ("region-of-decreasing invariance under F",
         lambda: "; ".join([
             check_region_invariance(scalar_sys, [K_SCALAR]),
             check_region_invariance(di2d_sys, [di2d_K_eff, zeta_dare(di2d_sys, 50.0)]),
             check_region_invariance(ac4d_sys, [ac4d_K_eff]),
         ])),
        ("iterate-distance inequality chain",
         lambda: check_inequality_chain(corpus)),
        ("gap below every bound",
         lambda: check_bound_sandwich(corpus)),
        ("monotone bound below contraction bound",
         lambda: check_monotone_le_contraction(corpus)),
        ("design-step quadratic contraction, 50 draws",
         lambda: check_design_step_quadratic([scalar_sys, di2d_sys], n_total=50)),
        ("weighted-norm equivalence sandwich, 1000 matrices",
         lambda: check_norm_sandwich(D_list, n_matrices=1000)),
        ("QP vs exhaustive active-set enumeration, 200 instances",
         lambda: check_qp_oracle(n_instances=200)),
        ("terminal-set invariance, 1000 samples per set",
         lambda: check_terminal_invariance(
             [(di2d_prob, di2d_design_eff), (di2d_prob, di2d_design_opt)],
             n_samples=1000)),
        ("policy cost below horizon value, 500 states",
         lambda: check_policy_cost_below_value(
             di2d_prob, di2d_design_eff, 3, n_states=500)),
    ]
    for name, fn in suites:
        try:
            gate.check(name, True, fn())
        except AssertionError as exc:
            gate.check(name, False, str(exc) or "assertion failed")
    gate.finish(300.0)
