"""Acceptance criteria at desk scale: m = 50, eps = 0.1, alpha = beta = 0.05,
N = 2e4 replications unless a criterion states otherwise.

Each test prints one ``[criterion N] PASS|FAIL`` line; the lines are repeated
in a summary section at the end of the pytest run. Error-rate claims are gated
on the 99% Clopper-Pearson interval.
"""

import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import ALPHA, BETA, EPS, M, N_DESK
from dmt.cli import main
from dmt.model import gaussian_stream, polynomial_spectrum
from dmt.montecarlo import Alternative, ExperimentPlan, clopper_pearson, concentration_check, estimate_type1, estimate_type2
from dmt.rates import (
    Partition,
    assumption_a1,
    detection_constant,
    divergence,
    find_homogeneous_partitions,
    identifiability_constant,
    is_homogeneous_subset,
    optimal_delta,
    second_moment_cap,
    separation_radius,
)
from dmt.separation import (
    SeparationQuery,
    adversarial_draw,
    feasibility_certificate,
    identifiability_gap,
    in_theta1,
    in_theta2,
    lr_second_moment_closed,
    lr_second_moment_mc,
)

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).parent / "golden" / "constants_0.05_0.05.json"
C1 = detection_constant(ALPHA, BETA)
C_AB = second_moment_cap(ALPHA, BETA)


@pytest.fixture
def verdict(request):
    def record(n, title, passed, detail):
        line = f"[criterion {n:2d}] {'PASS' if passed else 'FAIL'} {title}: {detail}"
        print(line)
        lines = getattr(request.config, "_acceptance_lines", None)
        if lines is None:
            lines = request.config._acceptance_lines = []
        lines.append((n, line))
        assert passed, line

    return record


def cell_summary(est):
    return ", ".join(f"b{c.b_index}/{c.label}: {c.rate:.4f} [{c.ci_low:.4f}, {c.ci_high:.4f}]" for c in est.cells)


def base():
    return polynomial_spectrum(M, 0.5).values


def config_plan(name, kind, alternatives=(), **kw):
    doc = json.loads((CONFIGS / name).read_text())
    args = dict(
        test_kind=kind, dictionary=doc["dictionary"], theta0=doc["theta0"], epsilon=doc["epsilon"],
        alpha=doc["alpha"], beta=doc["beta"], alternatives=tuple(alternatives), replications=N_DESK,
        seed=doc["seed"],
    )
    args.update(kw)
    return ExperimentPlan(**args)


def test_criterion_01_single_test_level(verdict):
    th0 = 0.3 * gaussian_stream(101, 0, M)
    plan = ExperimentPlan("single", [base()], th0, EPS, ALPHA, BETA, replications=N_DESK, seed=101)
    est = estimate_type1(plan)
    verdict(1, "single test level, known spectrum", est.gate(ALPHA), cell_summary(est))


def test_criterion_02_bonferroni_level_homogeneous(verdict):
    members = [base(), 0.9 * base()]
    assert assumption_a1(members, np.zeros(M), EPS).homogeneous
    plan = ExperimentPlan("bonferroni", members, np.zeros(M), EPS, ALPHA, BETA, replications=N_DESK, seed=102)
    est = estimate_type1(plan)
    verdict(2, "Bonferroni level, homogeneous pair", est.gate(ALPHA) and len(est.cells) == 2, cell_summary(est))


def boundary_alternatives(members, th0, constant, seeds=(31, 32, 33)):
    alts = []
    for s in seeds:
        u = gaussian_stream(s, 0, M)
        u /= np.linalg.norm(u)
        for j, b in enumerate(members):
            r = math.sqrt(constant * separation_radius(b, EPS))
            alts.append(Alternative(th0 + r * u, j, f"dir{s}"))
    return alts


def test_criterion_03_bonferroni_power_on_detection_boundary(verdict):
    members, th0 = [base(), 0.9 * base()], np.zeros(M)
    alts = boundary_alternatives(members, th0, C1)
    for a in alts:
        dist = float(np.sum((a.theta.values - th0) ** 2))
        assert dist == pytest.approx(C1 * separation_radius(members[a.b_index], EPS), rel=1e-12)
    est = estimate_type2(ExperimentPlan("bonferroni", members, th0, EPS, ALPHA, BETA, tuple(alts), N_DESK, 103))
    verdict(3, "Bonferroni Type II on the detection boundary", est.gate(BETA), cell_summary(est))


def test_criterion_04_min_level_nonhomogeneous(verdict):
    plan = config_plan("nonhomogeneous.json", "min")
    rep = assumption_a1(plan.dictionary, plan.theta0, plan.epsilon)
    assert not rep.homogeneous and rep.pairwise_ratio[0, 1] >= 10 and rep.pairwise_ratio[1, 0] >= 10
    est = estimate_type1(plan)
    verdict(4, "min-aggregate level, ratio 16", est.gate(ALPHA), cell_summary(est))


def scaled_into_sets(th0, theta, members, true_index, C2):
    s = 1.0
    while True:
        t = th0 + s * (theta - th0)
        q1 = SeparationQuery(t, th0, members, true_index, EPS, C1)
        q2 = SeparationQuery(t, th0, members, true_index, EPS, C2)
        if in_theta1(q1) and in_theta2(q2):
            return t, s
        s *= 2


def test_criterion_05_min_power_on_identifiable_alternatives(verdict):
    plan = config_plan("adversary.json", "min")
    members, th0 = plan.dictionary, plan.theta0.values
    C2 = identifiability_constant(ALPHA, BETA, optimal_delta(ALPHA, BETA))
    alts, scales = [], []
    for t, mimic in ((0, 1), (1, 0)):
        for k in range(5):
            d = adversarial_draw(th0, members[t], members[mimic], EPS, ALPHA, BETA, 1.0, seed=105, draw=k)
            theta, s = scaled_into_sets(th0, d.theta.values, members, t, C2)
            alts.append(Alternative(theta, t, f"draw{k}"))
            scales.append(s)
    est = estimate_type2(ExperimentPlan("min", members, th0, EPS, ALPHA, BETA, tuple(alts), N_DESK, 105))
    verdict(5, "min-aggregate Type II in theta1 and theta2", est.gate(BETA),
            f"scales {sorted(set(scales))}; worst {est.rate:.4f} [{est.ci_low:.4f}, {est.ci_high:.4f}]")


def test_criterion_06_prior_draws_defeat_min_test(verdict):
    plan = config_plan("adversary.json", "min")
    members, th0 = plan.dictionary, plan.theta0.values
    b, bb = members[0], members[1]
    tau, gamma = 1.0, 0.5
    C2_obs = divergence(th0, b, bb) / separation_radius(b, EPS)
    cert = feasibility_certificate(C2_obs, ALPHA, BETA, tau, gamma)
    draws = [adversarial_draw(th0, b, bb, EPS, ALPHA, BETA, tau, seed=106, draw=k) for k in range(20)]
    c2 = tau**2 * math.sqrt(math.log(C_AB))
    in1 = all(in_theta1(SeparationQuery(d.theta, th0, members, 0, EPS, C1)) for d in draws)
    in2 = all(in_theta2(SeparationQuery(d.theta, th0, members, 0, EPS, c2)) for d in draws)
    alts = tuple(Alternative(d.theta, 0, f"prior{k}") for k, d in enumerate(draws))
    est = estimate_type2(ExperimentPlan("min", members, th0, EPS, ALPHA, BETA, alts, N_DESK, 106))
    misses = sum(c.errors for c in est.cells)
    total = sum(c.replications for c in est.cells)
    lo, hi = clopper_pearson(misses, total)
    passed = cert.passed and in1 and in2 and lo > BETA
    verdict(6, "prior draws: members of theta1 yet undetected", passed,
            f"C2_observed {C2_obs:.3f}, margin {cert.margin:.3f}, theta1 {in1}, theta2 {in2}, "
            f"pooled Type II {misses / total:.4f} [{lo:.4f}, {hi:.4f}]")


def test_criterion_07_second_moment_oracle(verdict):
    rng = np.random.default_rng(107)
    details, ok = [], True
    for i in range(5):
        m = int(rng.integers(1, 6))
        b = np.sort(rng.uniform(0.3, 2.0, m))[::-1]
        bb = np.sort(rng.uniform(0.3, 2.0, m))[::-1]
        th0 = rng.normal(size=m)
        eps, tau = float(rng.uniform(0.1, 1.0)), float(rng.uniform(0.25, 1.0))
        closed = lr_second_moment_closed(th0, bb, eps, ALPHA, BETA, tau)
        est = lr_second_moment_mc(th0, b, bb, eps, ALPHA, BETA, tau, 10**5, seed=1070 + i, inner="exact")
        z = (est.mean - closed) / est.se
        ok &= abs(z) < 4
        details.append(f"m={m} tau={tau:.2f} closed={closed:.4f} mc={est.mean:.4f} z={z:+.2f}")
    caps = []
    for tau in (0.25, 0.5, 1.0):
        for bb in ([1.0], list(base()), [3.0, 1.0, 0.2]):
            v = lr_second_moment_closed(np.zeros(len(bb)), bb, EPS, ALPHA, BETA, tau)
            ok &= v < C_AB
            caps.append(v)
    verdict(7, "second moment closed form vs exact-inner Monte Carlo", ok,
            "; ".join(details) + f"; max closed value {max(caps):.4f} < {C_AB:.2f}")


def test_criterion_08_adversarial_identity(verdict):
    rng = np.random.default_rng(108)
    worst = 0.0
    for i in range(10):
        m = int(rng.integers(1, 60))
        b = np.sort(rng.uniform(0.05, 3.0, m))[::-1]
        bb = np.sort(rng.uniform(0.05, 3.0, m))[::-1]
        th0 = rng.normal(size=m) * rng.uniform(0.1, 10)
        eps, tau = float(rng.uniform(0.01, 2.0)), float(rng.uniform(0.0, 1.0))
        target = tau**2 * math.sqrt(math.log(C_AB)) * separation_radius(bb, eps)
        for k in range(100):
            d = adversarial_draw(th0, b, bb, eps, ALPHA, BETA, tau, seed=1080 + i, draw=k)
            gap = identifiability_gap(d.theta, th0, b, bb)
            worst = max(worst, abs(gap - target) / target if target > 0 else abs(gap))
    verdict(8, "adversarial draws sit exactly on the identifiability boundary", worst <= 1e-10,
            f"max relative deviation {worst:.2e} over 1000 draws")


def test_criterion_09_mixed_level(verdict):
    plan = config_plan("mixed3.json", "mixed", partition=Partition((0, 1), (2,)))
    members, th0 = plan.dictionary, plan.theta0
    assert is_homogeneous_subset(members, th0, EPS, (0, 1))
    assert not is_homogeneous_subset(members, th0, EPS, (0, 2))
    assert find_homogeneous_partitions(members, th0, EPS)[0] == plan.partition
    est = estimate_type1(plan)
    verdict(9, "mixed test level, three members", est.gate(ALPHA) and len(est.cells) == 3, cell_summary(est))


def test_criterion_10_concentration(verdict):
    x = math.log(1 / 0.05)
    b = polynomial_spectrum(M, 0.5)
    mu = 0.05 * np.cos(np.arange(M))
    cases = [
        ("zero shift", b, np.zeros(M), EPS),
        ("moderate shift", b, mu, EPS),
        ("chi-square one", [1.0], [0.0], 1.0),
    ]
    ok, details = True, []
    for k, (label, bv, shift, eps) in enumerate(cases):
        res = concentration_check(bv, shift, eps, x, 10**5, seed=110 + k)
        ok &= res.passed
        details.append(f"{label}: {res.rate:.5f} [{res.ci_low:.5f}, {res.ci_high:.5f}]")
    verdict(10, "tail bound exceedance at level 0.05", ok, "; ".join(details))


def test_criterion_11_constants_golden(verdict, capsys):
    assert main(["constants", "0.05", "0.05", "--json"]) == 0
    got = json.loads(capsys.readouterr().out)
    golden = json.loads(GOLDEN.read_text())
    rel = {k: abs(got[k] - float(v)) / abs(float(v)) for k, v in golden.items()}
    worst = max(rel, key=rel.get)
    verdict(11, "constants match the high-precision golden file", rel[worst] <= 1e-12,
            f"max relative error {rel[worst]:.1e} ({worst})")


def run_reference(tmp_path, tag, threads=None):
    env = dict(os.environ)
    env.pop("DMT_THREADS", None)
    if threads is not None:
        env["DMT_THREADS"] = str(threads)
    out = tmp_path / tag
    cmd = [sys.executable, "-m", "dmt", "run", "--config", str(CONFIGS / "reference.json"), "--out", str(out)]
    subprocess.run(cmd, check=True, env=env, capture_output=True)
    return (out / "reference.csv").read_bytes()


def test_criterion_12_determinism(verdict, tmp_path):
    first, second = run_reference(tmp_path, "a"), run_reference(tmp_path, "b")
    one, eight = run_reference(tmp_path, "t1", 1), run_reference(tmp_path, "t8", 8)
    passed = first == second == one == eight
    rows = len(first.splitlines()) - 2
    verdict(12, "reference run is byte-identical across reruns and thread counts", passed,
            f"{len(first)} bytes, {rows} rows")
