"""Command-line front-end: ``torus-kam <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 arithmetic degeneracy
(resonant frequency), 4 solver divergence or strict-mode envelope violation.
Every JSON output embeds the fully resolved parameters.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .arithmetic import (
    Frequency,
    QuadraticIrrational,
    ResonanceError,
    classify,
    continued_fraction,
    golden_frequency,
    growth_power_of_two,
    growth_self_power,
    growth_stretched_exp,
    liouville_builder,
    liouville_counterexample_norms,
    small_divisor_scan,
)
from .cohomology import solve_scalar, solve_vector, verify_lemma1
from .fourier import (
    NonInvertibleJacobianError,
    SpectralScalar,
    SpectralVectorField,
    gevrey_random,
    grid_sup,
    l1_norm,
)
from .io import load_config, load_spectral, save_spectral, validate_config, write_csv, write_json
from .kam import (
    ConfigError,
    EnvelopeViolation,
    KamConfig,
    KamDivergenceError,
    gevrey_linearize,
    reparametrized_oracle,
)
from .smoothing import SmoothingSchedule, approximation_sequence, verify_popov_bounds
from .weights import Weight, kam_constants

log = logging.getLogger("torus_kam")

EXIT_OK, EXIT_CONFIG, EXIT_RESONANCE, EXIT_DIVERGENCE = 0, 2, 3, 4
ORACLE_LAMBDA_TOL = 1e-8
ORACLE_MAP_TOL = 1e-6


# --- parsing helpers ---------------------------------------------------------

def parse_frequency(text) -> Frequency:
    """``"golden"`` or a comma-separated vector such as ``"1,2"``."""
    if isinstance(text, Frequency):
        return text
    if isinstance(text, (list, tuple)):
        return Frequency(tuple(float(v) for v in text))
    t = str(text).strip().lower()
    if t in ("golden", "1,golden"):
        return golden_frequency()
    try:
        return Frequency(tuple(float(v) for v in t.split(",")))
    except ValueError:
        raise ValueError(f"cannot parse frequency {text!r}") from None


def parse_alpha(text):
    """``golden``, ``sqrt:D``, ``quad:P,D,Q`` (for ``(P + sqrt D)/Q``) or a decimal."""
    if isinstance(text, (int, float)):
        return float(text)
    t = str(text).strip().lower()
    if t == "golden":
        return QuadraticIrrational(1, 5, 2)
    if t.startswith("sqrt:"):
        return QuadraticIrrational.sqrt(int(t[5:]))
    if t.startswith("quad:"):
        P, D, Q = (int(v) for v in t[5:].split(","))
        return QuadraticIrrational(P, D, Q)
    try:
        return float(t)
    except ValueError:
        raise ValueError(f"cannot parse alpha {text!r}") from None


def _pick(cli_value, block: dict, key: str, default):
    if cli_value is not None:
        return cli_value
    return block.get(key, default)


def _out_dir(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _seed(args, cfg: dict) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


def generate_field(spec: dict, seed: int) -> SpectralVectorField:
    """Seeded test perturbation.

    ``gevrey_random`` draws one random-phase component per axis on the
    envelope ``exp(-r0 phi_a(|k|))`` with ``||F_i||_{r0} = epsilon``;
    ``single_mode`` is ``epsilon (cos, sin)(2 pi k.x)``; ``zero`` is ``F = 0``.
    """
    kind = spec.get("kind", "gevrey_random")
    n, K = int(spec.get("n", 2)), int(spec.get("K", 32))
    eps = float(spec.get("epsilon", 1e-6))
    if n < 1 or K < 1:
        raise ValueError("generator needs n >= 1 and K >= 1")
    if kind == "zero":
        return SpectralVectorField.zeros(n, K)
    if kind == "single_mode":
        k = tuple(spec.get("k", [1, -1] + [0] * (n - 2)))
        if len(k) != n:
            raise ValueError("generator mode has the wrong dimension")
        comps = [SpectralScalar.from_modes(n, K, {k: eps / 2}), SpectralScalar.from_modes(n, K, {k: -0.5j * eps})]
        comps += [SpectralScalar.zeros(n, K) for _ in range(n - 2)]
        return SpectralVectorField.from_components(comps[:n])
    rng = np.random.default_rng(seed)
    a, r0 = float(spec.get("a", 0.5)), float(spec.get("r0", 1.0))
    return SpectralVectorField.from_components([gevrey_random(n, K, a, r0, rng, norm=eps) for _ in range(n)])


def _vector_input(path: str | None, cfg: dict, seed: int):
    if path:
        F = load_spectral(path)
        if isinstance(F, SpectralScalar):
            raise ValueError("expected a vector field file")
        if not isinstance(F, SpectralVectorField):
            F = F.displacement
        return F, {"file": str(path)}
    spec = cfg.get("generator", {"kind": "gevrey_random"})
    return generate_field(spec, seed), {"generator": spec, "seed": seed}


# --- subcommands -------------------------------------------------------------

def cmd_constants(args, cfg: dict) -> int:
    blk = cfg.get("constants", {})
    a = float(_pick(args.a, blk, "a", 0.5))
    kappa = float(_pick(args.kappa, blk, "kappa", 1.5))
    r = float(_pick(args.r, blk, "r", 0.8))
    tau = float(_pick(args.tau, blk, "tau", 0.2))
    c = kam_constants(a, kappa, r, tau)
    verdict = "PASS" if c.theorem_hypothesis else "FAIL"
    for name in ("b", "delta", "c", "rho", "upsilon", "nu", "iota"):
        print(f"{name:8s} = {getattr(c, name):.10g}")
    print(f"r > c*tau: {verdict} ({r:g} vs {c.c * tau:.6g})")
    if args.out:
        write_json(_out_dir(args) / "constants.json",
                   {"parameters": {"a": a, "kappa": kappa, "r": r, "tau": tau}, "constants": c.to_dict(),
                    "verdict": verdict})
    return EXIT_OK


def cmd_classify(args, cfg: dict) -> int:
    blk = cfg.get("classify", {})
    a = float(_pick(args.a, blk, "a", 0.5))
    terms = int(_pick(args.terms, blk, "terms", 30))
    K = int(_pick(args.K, blk, "K", 32))
    tau = float(_pick(args.tau, blk, "tau", 1.0))
    builder = _pick(args.builder, blk, "builder", None)
    alpha_txt = _pick(args.alpha, blk, "alpha", None)
    omega_txt = args.omega if args.omega is not None else cfg.get("omega")
    report = {"parameters": {"a": a, "terms": terms, "K": K, "tau": tau, "builder": builder,
                             "alpha": alpha_txt, "omega": omega_txt}}
    if omega_txt is not None:
        om = parse_frequency(omega_txt)
        scan = small_divisor_scan(om, K, tau=tau, a=a)
        report["divisor_scan"] = scan.to_dict()
        if alpha_txt is None and builder is None and om.alpha is not None:
            alpha_txt = "golden"
    record = None
    if builder is not None:
        growth = {"power2": growth_power_of_two, "self_power": growth_self_power,
                  "stretched": growth_stretched_exp(float(blk.get("beta", 0.7)))}[builder]
        record, _ = liouville_builder(growth, terms)
    elif alpha_txt is not None:
        record = continued_fraction(parse_alpha(alpha_txt), terms)
    if record is not None:
        report["continued_fraction"] = record.to_dict(a)
        if len(record.partial_quotients) >= 5:
            horizon = blk.get("horizon")
            report["classification"] = classify(record, a, horizon).to_dict()
        for q, s in list(zip(record.denominators[1:], record.to_dict(a)["bruno_sums"]))[:12]:
            print(f"q = {q}  bruno partial sum = {s}")
    if "classification" in report:
        for name, ev in report["classification"]["conditions"].items():
            print(f"{name:16s} {ev['verdict']}")
    write_json(_out_dir(args) / "classify.json", report)
    return EXIT_OK


def cmd_cohomology(args, cfg: dict) -> int:
    blk = cfg.get("cohomology", {})
    r = float(_pick(args.r, blk, "r", 1.0))
    tau = float(_pick(args.tau, blk, "tau", 1.0))
    a = float(_pick(args.a, blk, "a", 0.5))
    om = parse_frequency(args.omega if args.omega is not None else cfg.get("omega", "golden"))
    out = _out_dir(args)
    cut = args.liouville_cutoffs or blk.get("liouville_cutoffs")
    report = {"parameters": {"r": r, "tau": tau, "a": a, "omega": list(om.values)}}
    if cut:
        cut = [int(c) for c in (cut.split(",") if isinstance(cut, str) else cut)]
        rec, _ = liouville_builder(growth_power_of_two, max(cut) + 2)
        tab = liouville_counterexample_norms(rec, Weight.gevrey(a), r, cut)
        report["liouville_growth"] = tab.to_dict()
        report["liouville_growth"]["growth_x10"] = tab.growth_factors_at_least(10)
        for i, lo in zip(cut, tab.log_norm_lower):
            print(f"K = q_{i}: ln||g||_{r:g} >= {lo}")
        print(f"growth by 10x per step: {report['liouville_growth']['growth_x10']}")
    path = args.input or cfg.get("input")
    if path:
        f = load_spectral(path)
        if isinstance(f, SpectralScalar):
            sol = solve_scalar(f, om)
            if f.K >= 1 and not f.is_zero():
                report["loss_estimate"] = verify_lemma1(f, om, Weight.gevrey(a), r, tau).to_dict()
        else:
            if not isinstance(f, SpectralVectorField):
                f = f.displacement
            sol = solve_vector(f, om)
        report["solution"] = sol.to_dict()
        report["solution"]["g_l1"] = l1_norm(sol.g)
        save_spectral(out / "spectra" / "g.json", sol.g)
        support = sol.g.support() if isinstance(sol.g, SpectralScalar) else []
        for k, v in support[:8]:
            print(f"g_{k} = {v.real:+.10f}{v.imag:+.10f}j  |g_k| = {abs(v):.10f}")
        if "loss_estimate" in report:
            print(f"loss estimate ratio = {report['loss_estimate']['ratio']:.6g}")
    elif not cut:
        raise ValueError("cohomology needs an input spectrum (--input) or --liouville-cutoffs")
    write_json(out / "cohomology.json", report)
    return EXIT_OK


def cmd_smooth(args, cfg: dict) -> int:
    blk = cfg.get("smoothing", {})
    sched = SmoothingSchedule(float(_pick(args.r0, blk, "r0", 1.0)), float(_pick(args.r, blk, "r", 0.8)),
                              float(_pick(args.a, blk, "a", 0.5)), float(_pick(args.u0, blk, "u0", 0.8)),
                              int(_pick(args.J, blk, "J", 6)), _pick(args.K_max, blk, "K_max", None))
    path = args.input or cfg.get("input")
    if not path:
        raise ValueError("smooth needs an input spectrum (--input)")
    f = load_spectral(path)
    if not isinstance(f, (SpectralScalar, SpectralVectorField)):
        f = f.displacement
    fl, recs = approximation_sequence(f, sched, return_certificate=True)
    rep = verify_popov_bounds(f, fl, sched)
    out = _out_dir(args)
    for r in recs:
        if r.clamped:
            log.warning("stage %d: cutoff N=%d exceeds the available K=%d; tail bound %.3e",
                        r.j, r.N, r.N_used, r.tail_bound)
    with ThreadPoolExecutor(max_workers=args.workers) as ex:
        list(ex.map(lambda j: save_spectral(out / "spectra" / f"stage_{j:02d}.json", fl[j]), range(len(fl))))
    rows = []
    for r, st in zip(recs, rep.stages):
        row = {"j": r.j, "u": r.u, "N": r.N, "N_used": r.N_used, "clamped": r.clamped,
               "tail_bound": r.tail_bound, "phi_b_r_over_u": sched.bound_exponent(r.j) / sched.r,
               "bound_exponent": st["bound_exponent"], "log_error": st["log_error"],
               "log_increment": st.get("log_increment", math.nan)}
        rows.append(row)
    write_csv(out / "decay.csv", rows)
    write_json(out / "smoothing.json", {"schedule": sched.to_dict(), "report": rep.to_dict(),
                                        "stages": [r.to_dict() for r in recs]})
    print(f"C2 = {rep.C2:.6g}  decay slope = {rep.decay.slope:.4g}")
    return EXIT_OK


def _kam_config(args, cfg: dict) -> KamConfig:
    d = dict(cfg.get("kam", {}))
    if args.strict or cfg.get("strict"):
        d["strict"] = True
    return KamConfig.from_dict(d)


def cmd_kam(args, cfg: dict) -> int:
    seed = _seed(args, cfg)
    kc = _kam_config(args, cfg)
    om = parse_frequency(args.omega if args.omega is not None else cfg.get("omega", "golden"))
    F, source = _vector_input(args.input or cfg.get("input"), cfg, seed)
    out = _out_dir(args)
    try:
        cert, lam, Phi = gevrey_linearize(F, om, kc)
    except (KamDivergenceError, EnvelopeViolation) as exc:
        hist = getattr(exc, "history", None)
        write_json(out / "divergence.json", {"error": type(exc).__name__, "message": str(exc),
                                             "residual_history": hist, "config": kc.to_dict(),
                                             "source": source})
        raise
    doc = cert.to_dict()
    doc["source"] = source
    doc["omega"] = list(om.values)
    write_json(out / "certificate.json", doc)
    cols = ["k", "u", "s", "sigma", "N", "N_used", "clamped", "input_l1", "inner_iterations", "lambda_inc",
            "lambda_envelope", "lambda_ratio", "lambda_ok", "map_inc", "dmap_inc", "log_map_envelope",
            "map_ok", "dist", "dist_ok", "nesting_ok", "threshold_log_margin"]
    write_csv(out / "stages.csv", cert.stages, cols)
    save_spectral(out / "spectra" / "input.json", F)
    save_spectral(out / "spectra" / "phi.json", Phi)
    print(f"stages = {len(cert.stages)}  lambda = {np.array2string(lam, precision=6)}  "
          f"residual = {cert.final['residual']:.3e}")
    print(f"r > c*tau: {'PASS' if cert.hypotheses['r_gt_c_tau'] else 'FAIL'}")
    return EXIT_OK


def cmd_oracle_check(args, cfg: dict) -> int:
    kc = _kam_config(args, cfg)
    om = parse_frequency(args.omega if args.omega is not None else cfg.get("omega", "golden"))
    path = args.input or cfg.get("input")
    if path:
        f = load_spectral(path)
        if not isinstance(f, SpectralScalar):
            raise ValueError("oracle-check needs a scalar spectrum f")
    else:
        f = SpectralScalar.from_modes(om.n, 1, {(0,) * om.n: 1.0, (1, -1) + (0,) * (om.n - 2): 0.025})
    o = reparametrized_oracle(f, om, K_out=int(kc.K_max))
    cert, lam, Phi = gevrey_linearize(o.P, om, kc)
    inv = Phi.inverse(K_out=int(kc.K_max))
    d = inv.displacement.copy()
    d.coeffs[(slice(None),) + d.center] -= d.mean
    ref = o.phi_inverse.displacement.resize(int(kc.K_max))
    map_err = grid_sup(d - ref, kc.grid_N)
    lam_err = float(np.max(np.abs(lam - o.lam)))
    ok = lam_err <= ORACLE_LAMBDA_TOL and map_err <= ORACLE_MAP_TOL
    out = _out_dir(args)
    write_json(out / "oracle_check.json", {"oracle": o.to_dict(), "lambda_error": lam_err, "map_error": map_err,
                                           "tolerances": {"lambda": ORACLE_LAMBDA_TOL, "map": ORACLE_MAP_TOL},
                                           "agree": ok, "certificate": cert.to_dict()})
    print(f"lambda error = {lam_err:.3e}  map error = {map_err:.3e}  {'AGREE' if ok else 'DISAGREE'}")
    return EXIT_OK if ok else EXIT_DIVERGENCE


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for generated test fields")
    common.add_argument("--strict", action="store_true", help="envelope violations are errors (exit 4)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--workers", type=int, default=1, help="worker threads (wall time only)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="torus-kam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("constants", parents=[common], help="derived constants and the r > c tau verdict")
    for name in ("a", "kappa", "r", "tau"):
        s.add_argument(f"--{name}", type=float)
    s.set_defaults(func=cmd_constants)

    s = sub.add_parser("classify", parents=[common], help="continued fraction and arithmetic conditions")
    s.add_argument("--alpha", help="golden, sqrt:D, quad:P,D,Q or a decimal")
    s.add_argument("--omega", help="frequency vector for a divisor scan, e.g. 1,2")
    s.add_argument("--builder", choices=["power2", "self_power", "stretched"], help="Liouville-type builder")
    s.add_argument("--terms", type=int)
    s.add_argument("--a", type=float)
    s.add_argument("--K", type=int)
    s.add_argument("--tau", type=float)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("cohomology", parents=[common], help="solve X_omega g = f - c")
    s.add_argument("--input", help="scalar or vector spectrum JSON")
    s.add_argument("--omega")
    s.add_argument("--r", type=float)
    s.add_argument("--tau", type=float)
    s.add_argument("--a", type=float)
    s.add_argument("--liouville-cutoffs", help="convergent indices, e.g. 4,5,6,7")
    s.set_defaults(func=cmd_cohomology)

    s = sub.add_parser("smooth", parents=[common], help="truncation approximants and decay table")
    s.add_argument("--input", help="spectrum JSON")
    for name in ("r0", "r", "a", "u0"):
        s.add_argument(f"--{name}", type=float)
    s.add_argument("--J", type=int)
    s.add_argument("--K-max", dest="K_max", type=int)
    s.set_defaults(func=cmd_smooth)

    s = sub.add_parser("kam", parents=[common], help="staged Gevrey linearisation")
    s.add_argument("--input", help="vector field JSON (default: generator from the config)")
    s.add_argument("--omega")
    s.set_defaults(func=cmd_kam)

    s = sub.add_parser("oracle-check", parents=[common], help="compare against the reparametrised oracle")
    s.add_argument("--input", help="scalar spectrum f (default 1 + 0.05 cos 2 pi (x1 - x2))")
    s.add_argument("--omega")
    s.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.workers < 1:
            raise ValueError("--workers must be at least 1")
        cfg = load_config(args.config) if args.config else validate_config({})
        if args.out is None:
            args.out = "out" if args.command != "constants" else None
        return args.func(args, cfg)
    except ResonanceError as exc:
        print(f"error: resonant frequency ({exc})", file=sys.stderr)
        return EXIT_RESONANCE
    except (KamDivergenceError, EnvelopeViolation, NonInvertibleJacobianError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ValueError, TypeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
