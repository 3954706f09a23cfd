"""Command-line entry point.

Exit codes: 0 success, 1 statistical gate failure, 2 configuration error,
3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, DmtError, ResourceCapError
from .montecarlo import (
    Alternative,
    ErrorEstimate,
    ExperimentPlan,
    clopper_pearson,
    estimate_type1,
    estimate_type2,
    power_curve,
)
from .plotting import plot_power_curves
from .rates import (
    PARTITION_CAP,
    assumption_a1,
    constants,
    detection_constant,
    divergence,
    find_homogeneous_partitions,
    regime_label,
    second_moment_cap,
    separation_radius,
)
from .report import EMPIRICAL_SUP_NOTE, ReportRow, render_csv
from .separation import (
    SeparationQuery,
    adversarial_draw,
    feasibility_certificate,
    identifiability_gap,
    in_theta1,
    in_theta2,
    lr_second_moment_closed,
    lr_second_moment_cosh_squared,
    lr_second_moment_exp_bound,
    lr_second_moment_mc,
    search_feasibility,
)

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


def _out_dir(cfg: ExperimentConfig, args) -> Path | None:
    d = args.out or cfg.output.get("dir")
    if d is None:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(text: str, directory: Path | None, name: str) -> None:
    if directory is None:
        sys.stdout.write(text)
    else:
        (directory / name).write_text(text, newline="")
        print(f"wrote {directory / name}")


def _regime(cfg: ExperimentConfig) -> tuple[str, list | None]:
    rep = assumption_a1(cfg.dictionary, cfg.theta0, cfg.epsilon)
    parts = None
    if len(cfg.dictionary) <= PARTITION_CAP:
        parts = find_homogeneous_partitions(cfg.dictionary, cfg.theta0, cfg.epsilon)
    return regime_label(rep, parts), parts


# -- classify / partition ------------------------------------------------------


def cmd_classify(cfg: ExperimentConfig, args) -> int:
    rep = assumption_a1(cfg.dictionary, cfg.theta0, cfg.epsilon)
    regime, parts = _regime(cfg)
    lines = [
        f"members: {len(cfg.dictionary)}",
        f"m: {cfg.m}",
        f"homogeneous: {str(rep.homogeneous).lower()}",
        f"homogeneous_unordered: {str(rep.homogeneous_unordered).lower()}",
        f"regime: {regime}",
    ]
    if rep.worst_pair is None:
        lines.append("worst_pair: none")
    else:
        lines.append(f"worst_pair: {rep.worst_pair[0]} {rep.worst_pair[1]} ratio={rep.worst_ratio!r}")
    if parts is None:
        lines.append("partitions: not enumerated (dictionary above cap)")
    else:
        largest = parts[0].homogeneous
        lines.append(f"partitions: {len(parts)} (largest homogeneous part: {list(largest)})")
    print("\n".join(lines))

    K = len(cfg.dictionary)
    rows = [
        (i, j, repr(float(rep.pairwise_divergence[i, j])), repr(float(rep.pairwise_ratio[i, j])),
         int(rep.pairwise_ratio[i, j] <= 1.0))
        for i in range(K)
        for j in range(K)
        if i != j
    ]
    text = render_csv(rows, cfg.sha256(), cfg.seed, columns=("i", "j", "divergence", "ratio", "within_radius"))
    _emit(text, _out_dir(cfg, args), "classify.csv")
    return EXIT_OK


def cmd_partition(cfg: ExperimentConfig, args) -> int:
    parts = find_homogeneous_partitions(cfg.dictionary, cfg.theta0, cfg.epsilon)
    rows = [(k, " ".join(map(str, p.homogeneous)), " ".join(map(str, p.rest))) for k, p in enumerate(parts)]
    text = render_csv(rows, cfg.sha256(), cfg.seed, columns=("rank", "homogeneous", "rest"))
    _emit(text, _out_dir(cfg, args), "partitions.csv")
    return EXIT_OK


# -- run -----------------------------------------------------------------------


def _prior_alternatives(cfg: ExperimentConfig) -> list[Alternative]:
    spec = cfg.adversary
    if spec is None:
        return []
    if spec.tau is None:
        raise ConfigurationError("tau is required for adversarial alternatives", "/alternatives/adversary/tau")
    b, bb = cfg.dictionary[spec.true_index], cfg.dictionary[spec.mimic_index]
    return [
        Alternative(
            adversarial_draw(cfg.theta0, b, bb, cfg.epsilon, cfg.alpha, cfg.beta, spec.tau, spec.seed, draw=i).theta,
            spec.true_index,
            f"prior{i}",
        )
        for i in range(spec.draws)
    ]


def alternatives_for(cfg: ExperimentConfig) -> tuple[Alternative, ...]:
    alts = [Alternative(th, bi, label) for th, bi, label in cfg.explicit]
    alts += [Alternative(th, bi, label) for th, bi, label in cfg.boundary_alternatives()]
    alts += _prior_alternatives(cfg)
    return tuple(alts)


def plan_for(cfg: ExperimentConfig, kind: str, alternatives=()) -> ExperimentPlan:
    return ExperimentPlan(
        test_kind=kind,
        dictionary=cfg.dictionary,
        theta0=cfg.theta0,
        epsilon=cfg.epsilon,
        alpha=cfg.alpha,
        beta=cfg.beta,
        alternatives=tuple(alternatives),
        replications=cfg.replications,
        seed=cfg.seed,
        coupling=cfg.coupling,
        partition=cfg.partition,
        candidate_index=cfg.candidate_index,
    )


def _gate(ci_low_error: float, bound: float | None) -> str:
    if bound is None:
        return "-"
    return "PASS" if ci_low_error <= bound else "FAIL"


def run_rows(cfg: ExperimentConfig) -> tuple[list[ReportRow], dict[str, list[tuple[float, float]]]]:
    """All report rows for ``cfg`` and, if a power grid is configured, the curves."""
    regime, _ = _regime(cfg)
    alts = alternatives_for(cfg)
    sha = cfg.sha256()
    rows: list[ReportRow] = []
    curves: dict[str, list[tuple[float, float]]] = {}

    def add(kind, cell, rejections, notes, gate):
        lo, hi = clopper_pearson(rejections, cell.replications)
        rows.append(
            ReportRow(
                run_id=f"{sha[:12]}-{len(rows):05d}",
                test_name=kind,
                regime=regime,
                b_true_index=cell.b_index,
                alpha=cfg.alpha,
                beta=cfg.beta,
                epsilon=cfg.epsilon,
                m=cfg.m,
                dict_size=len(cfg.dictionary),
                n_reps=cell.replications,
                rejections=rejections,
                rate=rejections / cell.replications,
                ci_low=lo,
                ci_high=hi,
                seed=cfg.seed,
                notes=notes,
                gate=gate,
            )
        )

    for kind in cfg.test_kinds:
        plan = plan_for(cfg, kind, alts)
        for cell in estimate_type1(plan).cells:
            add(kind, cell, cell.errors, "type1", _gate(cell.ci_low, cfg.gate_type1))
        if not alts:
            continue
        for cell in estimate_type2(plan).cells:
            add(
                kind,
                cell,
                cell.replications - cell.errors,
                f"type2; alt={cell.label}; {EMPIRICAL_SUP_NOTE}",
                _gate(cell.ci_low, cfg.gate_type2),
            )
        if cfg.power_grid:
            pts = []
            for point in power_curve(plan, cfg.power_grid):
                for cell in point.estimate.cells:
                    add(kind, cell, cell.replications - cell.errors, f"power; scale={point.scale!r}; alt={cell.label}", "-")
                pts.append((point.scale, point.estimate.rate))
            curves[kind] = pts
    return rows, curves


def cmd_run(cfg: ExperimentConfig, args) -> int:
    rows, curves = run_rows(cfg)
    out = _out_dir(cfg, args)
    _emit(render_csv(rows, cfg.sha256(), cfg.seed), out, cfg.output.get("csv", "report.csv"))
    if args.svg:
        if not curves:
            print("no power curve configured; SVG skipped", file=sys.stderr)
        else:
            target = (out or Path(".")) / cfg.output.get("svg", "power.svg")
            plot_power_curves(curves, target)
            print(f"wrote {target}", file=sys.stderr if out is None else sys.stdout)
    failed = [r for r in rows if r.gate == "FAIL"]
    if args.gate and failed:
        print(f"gate: {len(failed)} of {sum(r.gate != '-' for r in rows)} gated rows failed", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


# -- adversary -----------------------------------------------------------------


def cmd_adversary(cfg: ExperimentConfig, args) -> int:
    spec = cfg.adversary
    if spec is None:
        raise ConfigurationError("an adversary block is required", "/alternatives/adversary")
    tau = args.tau if args.tau is not None else spec.tau
    gamma = args.gamma if args.gamma is not None else spec.gamma
    if tau is None:
        raise ConfigurationError("tau is required (set it in the config or pass --tau)", "/alternatives/adversary/tau")
    if gamma is None:
        raise ConfigurationError(
            "gamma is required (set it in the config or pass --gamma)", "/alternatives/adversary/gamma"
        )
    if not 0 <= tau <= 1:
        raise ConfigurationError(f"tau must lie in [0, 1], got {tau!r}", "/alternatives/adversary/tau")
    if not 0 < gamma < 1:
        raise ConfigurationError(f"gamma must lie in (0, 1), got {gamma!r}", "/alternatives/adversary/gamma")

    D, th0, eps, a, b_ = cfg.dictionary, cfg.theta0, cfg.epsilon, cfg.alpha, cfg.beta
    b, bb = D[spec.true_index], D[spec.mimic_index]
    C_ab = second_moment_cap(a, b_)
    C1 = detection_constant(a, b_)
    c2 = tau**2 * math.sqrt(math.log(C_ab))
    C2_obs = divergence(th0, b, bb) / separation_radius(b, eps)

    closed = lr_second_moment_closed(th0, bb, eps, a, b_, tau)
    mc = lr_second_moment_mc(
        th0, b, bb, eps, a, b_, tau, spec.lr_replications, spec.seed,
        inner=spec.lr_inner, inner_draws=spec.lr_inner_draws,
    )
    cert = feasibility_certificate(C2_obs, a, b_, tau, gamma)
    best = search_feasibility(C2_obs, a, b_)

    draws = [
        adversarial_draw(th0, b, bb, eps, a, b_, tau, spec.seed, draw=i, gamma=gamma, C2_observed=C2_obs)
        for i in range(spec.draws)
    ]
    member1, member2 = [], []
    for d in draws:
        member1.append(in_theta1(SeparationQuery(d.theta, th0, D, spec.true_index, eps, C1)))
        member2.append(
            tau > 0 and in_theta2(SeparationQuery(d.theta, th0, D, spec.true_index, eps, c2))
        )

    alts = [Alternative(d.theta, spec.true_index, f"prior{i}") for i, d in enumerate(draws)]
    type2: dict[str, ErrorEstimate] = {k: estimate_type2(plan_for(cfg, k, alts)) for k in cfg.test_kinds}

    summary = [
        f"C_ab: {C_ab!r}",
        f"C1: {C1!r}",
        f"c2 (tau^2 sqrt(ln C_ab)): {c2!r}",
        f"C2_observed: {C2_obs!r}",
        f"E[L^2] closed: {closed!r}",
        f"E[L^2] cosh-squared bound: {lr_second_moment_cosh_squared(th0, bb, eps, a, b_, tau)!r}",
        f"E[L^2] exp bound: {lr_second_moment_exp_bound(bb, eps, a, b_, tau)!r}",
        f"E[L^2] monte carlo: {mc.mean!r} (se {mc.se!r}, n {mc.n}, inner {mc.inner})",
        f"feasible: {str(cert.passed).lower()} (margin {cert.margin!r}, tau {tau!r}, gamma {gamma!r})",
        f"best grid certificate: passed={str(best.passed).lower()} tau={best.tau!r} gamma={best.gamma!r} "
        f"margin={best.margin!r}",
        f"draws in theta1(C1): {sum(member1)}/{len(draws)}",
        f"draws in theta2(c2): {sum(member2)}/{len(draws)}",
    ]
    for k, est in type2.items():
        mean = sum(c.rate for c in est.cells) / len(est.cells)
        summary.append(f"type2 {k}: max {est.rate!r} mean {mean!r} over {len(est.cells)} draws")
    print("\n".join(summary))

    columns = ("draw", "in_theta1", "in_theta2", "identifiability_gap", "c2_radius", "distance_sq", "C1_radius")
    columns += tuple(f"type2_{k}" for k in type2)
    rows = []
    r1 = C1 * separation_radius(b, eps)
    r2 = c2 * separation_radius(bb, eps)
    for i, d in enumerate(draws):
        dist = float(((d.theta.values - th0.values) ** 2).sum())
        gap = identifiability_gap(d.theta, th0, b, bb)
        rows.append(
            (i, int(member1[i]), int(member2[i]), repr(gap), repr(r2), repr(dist), repr(r1))
            + tuple(repr(est.cells[i].rate) for est in type2.values())
        )
    _emit(render_csv(rows, cfg.sha256(), cfg.seed, columns=columns), _out_dir(cfg, args), "adversary.csv")

    if args.gate and cert.passed and not (all(member1) and all(member2)):
        print("gate: a feasible configuration produced draws outside the separation sets", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


# -- constants -----------------------------------------------------------------


def cmd_constants(args) -> int:
    bundle = constants(args.alpha, args.beta, parse=args.parse)
    if args.json:
        print(json.dumps(bundle.as_dict(), indent=2))
    else:
        for k, v in bundle.as_dict().items():
            print(f"{k} = {v!r}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dmt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="JSON experiment config")
        s.add_argument("--seed", type=_u64, help="override the config seed")
        s.add_argument("--reps", type=int, help="override the replication count")
        s.add_argument("--out", help="output directory (default: config output.dir, else stdout)")
        return s

    with_config("classify", "pairwise homogeneity report")
    with_config("partition", "list homogeneous parts")
    run = with_config("run", "estimate error rates and write the CSV report")
    run.add_argument("--gate", action="store_true", help="exit 1 if any gated row fails")
    run.add_argument("--svg", action="store_true", help="also render power curves")
    adv = with_config("adversary", "lower-bound prior diagnostics")
    adv.add_argument("--tau", type=float)
    adv.add_argument("--gamma", type=float)
    adv.add_argument("--gate", action="store_true")

    c = sub.add_parser("constants", help="print the explicit constants")
    c.add_argument("alpha", type=float)
    c.add_argument("beta", type=float)
    c.add_argument("--parse", choices=("verbatim", "alternative"), default="verbatim")
    c.add_argument("--json", action="store_true")
    return p


_COMMANDS = {"classify": cmd_classify, "partition": cmd_partition, "run": cmd_run, "adversary": cmd_adversary}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "constants":
            return cmd_constants(args)
        cfg = load_config(args.config, seed=args.seed, replications=args.reps)
        return _COMMANDS[args.command](cfg, args)
    except ResourceCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except DmtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
