"""Command-line front end.

Subcommands: ``hermite``, ``theory``, ``experiment`` and ``check``.
Exit codes: 0 success, 2 input error, 3 regime or consistency error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from . import asymptotics as asy
from .errors import BMLabError, InputError, RegimeError
from .hermite import (
    POINTWISE,
    HermiteExpansion,
    abs_expansion,
    builtin_expansion,
    hermite_rank,
    project,
)
from .mcstats import (
    EnsembleConfig,
    discretized_variance,
    empirical_cov,
    ks_normal_test,
    run_ensemble,
)
from .models import SelfSimilarModel, StationaryModel, check_h1, check_h2, model_from_dict, parse_model

SCHEMA_VERSION = "1.0"
BUILTINS = ("abs", "abs_centered", "hermite1", "hermite2", "cube")


# ---------------------------------------------------------------------------
# configs


def expansion_from_spec(spec: dict, qmax: int) -> HermiteExpansion:
    """{"builtin": name} | {"hermite_coeffs": [...]} | {"pointwise": name}."""
    if not isinstance(spec, dict) or len(spec) != 1:
        raise InputError(f"bad function spec {spec!r}")
    (key, val), = spec.items()
    if key == "builtin":
        if val not in BUILTINS:
            raise InputError(f"unknown builtin function {val!r}")
        return builtin_expansion(val, qmax)
    if key == "hermite_coeffs":
        try:
            return HermiteExpansion.from_coeffs([float(c) for c in val])
        except (TypeError, ValueError):
            raise InputError("hermite_coeffs must be a list of numbers") from None
    if key == "pointwise":
        if val not in POINTWISE:
            raise InputError(f"unknown pointwise function {val!r}")
        f, bp = POINTWISE[val]
        return project(f, qmax, breakpoints=bp)
    raise InputError(f"unknown function spec key {key!r}")


@dataclass
class ExperimentConfig:
    model: dict | str
    functional: str
    eps: list
    times: list
    replicates: int
    seed: int
    function: dict | None = None
    qmax: int = 8
    delta: float | None = None
    delta_ratio: float | None = None
    outputs: dict = field(default_factory=dict)
    regime: str | None = None
    normalize: bool = True
    workers: int = 1

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise InputError("config must be a JSON object")
        if "seed" not in obj:
            raise InputError("config needs an explicit seed")
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise InputError(f"unknown config fields {sorted(unknown)}")
        try:
            cfg = cls(**obj)
        except TypeError as exc:
            raise InputError(f"bad config: {exc}") from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.eps or any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise InputError("eps must be strictly decreasing")
        if not self.times or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InputError("times must be strictly increasing")
        if int(self.replicates) < 1:
            raise InputError("replicates must be >= 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise InputError("seed must be a nonnegative integer")
        if self.delta is not None and self.delta_ratio is not None:
            raise InputError("give delta or delta_ratio, not both")

    def model_obj(self):
        if isinstance(self.model, str):
            return parse_model(self.model)
        return model_from_dict(self.model)

    def expansion(self) -> HermiteExpansion:
        if self.functional in ("length", "length_fluct"):
            return abs_expansion(self.qmax, centered=True)
        if self.function is None:
            raise InputError(f"functional {self.functional} needs a function spec")
        return expansion_from_spec(self.function, self.qmax)

    def delta_for(self, eps: float) -> float:
        if self.delta is not None:
            return float(self.delta)
        if self.delta_ratio is not None:
            return float(self.delta_ratio) * eps
        return eps / 8.0 if self.functional in ("length", "length_fluct") else 0.25


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config is not valid JSON: {exc}") from None
    obj.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.from_dict(obj)


# ---------------------------------------------------------------------------
# theory block


def _alpha_of(m) -> float | None:
    return m.alpha


def theory_block(m, e: HermiteExpansion, functional: str, times, qmax: int = 8) -> dict:
    d = hermite_rank(e)
    alpha = _alpha_of(m)
    out = {"d": d, "sigma2": None, "sigma2_tail_bound": None, "kd_grid": None,
           "log_constants": None, "scale": 1.0}
    if alpha is None:
        out.update(regime="central", normalization_exponent=0.0)
        s = asy.sigma2_central(e, m, d)
        out.update(sigma2=s.value, sigma2_tail_bound=s.tail_bound)
        return out
    rep = asy.classify_regime(alpha, d)
    out.update(regime=rep.regime, normalization_exponent=rep.normalization_exponent)
    # length fluctuations carry the increment-variance factor 2 lambda
    scale = 2.0 * m.lam if functional in ("length", "length_fluct") else 1.0
    out["scale"] = scale
    rho = m if isinstance(m, StationaryModel) else StationaryModel.a(alpha)
    if rep.regime == "central":
        s = asy.sigma2_central(e, rho, d)
        out.update(sigma2=scale * s.value, sigma2_tail_bound=scale * s.tail_bound)
    elif rep.regime == "log_central" and isinstance(m, SelfSimilarModel):
        out["log_constants"] = asy.log_constants_report(m, e)
    elif rep.regime == "noncentral" and isinstance(m, SelfSimilarModel):
        c = e.coeffs[d]
        grid = []
        for s_ in times:
            for t_ in times:
                if t_ >= s_:
                    grid.append([s_, t_, scale * c * c * asy.kd_covariance(m, d, s_, t_)])
        out["kd_grid"] = grid
    return out


def reference_variance(theory: dict, t: float) -> float | None:
    if theory.get("sigma2") is not None:
        return theory["sigma2"] * t
    for s_, t_, k in theory.get("kd_grid") or []:
        if s_ == t_ == t:
            return k
    return None


# ---------------------------------------------------------------------------
# experiment


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_csv(rows, path) -> None:
    buf = io.StringIO(newline="")
    buf.write("replicate,kind,eps,t,value\n")
    for r, kind, eps, t, v in rows:
        buf.write(f"{r},{kind},{_fmt(eps)},{_fmt(t)},{_fmt(v)}\n")
    Path(path).write_bytes(buf.getvalue().encode("ascii"))


def load_schema() -> dict:
    return json.loads(resources.files("bmlab").joinpath("summary.schema.json").read_text())


def _expected_regime(cfg: ExperimentConfig, m, e) -> str | None:
    alpha = _alpha_of(m)
    if alpha is None:
        return "central"
    d = 2 if cfg.functional in ("length", "length_fluct") else hermite_rank(e)
    return asy.classify_regime(alpha, d).regime


def run_experiment(cfg: ExperimentConfig) -> tuple[dict, list]:
    m = cfg.model_obj()
    e = cfg.expansion()
    actual = _expected_regime(cfg, m, e)
    if cfg.regime is not None and cfg.regime != actual:
        raise RegimeError(f"config declares regime {cfg.regime!r} but the model is {actual!r}")
    theory = theory_block(m, e, cfg.functional, cfg.times, cfg.qmax)
    rows, empirical = [], []
    for eps in cfg.eps:
        delta = cfg.delta_for(eps)
        ecfg = EnsembleConfig(m, cfg.functional, eps, delta, tuple(cfg.times), int(cfg.replicates),
                              cfg.seed, e if cfg.functional in ("Z", "F") else None,
                              cfg.regime, cfg.normalize, workers=cfg.workers)
        ens = run_ensemble(ecfg)
        rows.extend(ens.rows())
        p = len(cfg.times)
        cov = [[empirical_cov(ens, i, j)[0] for j in range(p)] for i in range(p)]
        var_se = [empirical_cov(ens, i, i)[1] for i in range(p)]
        block = {"eps": eps, "delta": delta, "config_hash": ens.config_hash,
                 "replicates": ens.replicates, "normalization": ens.normalization,
                 "times": list(cfg.times), "mean": [ens.mean(i) for i in range(p)],
                 "var": [cov[i][i] for i in range(p)], "var_se": var_se, "cov": cov,
                 "discretized_variance": None, "ks": None}
        if cfg.functional in ("Z", "F") and (isinstance(m, StationaryModel) or m.kind == "fbm"):
            nf = ens.normalization**2
            block["discretized_variance"] = [nf * discretized_variance(e, m, eps, delta, t)
                                             for t in cfg.times]
        ref_kind, ref = "sample", None
        if theory["regime"] != "noncentral":
            if block["discretized_variance"] is not None:
                ref_kind, ref = "discretized_variance", block["discretized_variance"][-1]
            elif reference_variance(theory, cfg.times[-1]) is not None:
                ref_kind, ref = "theory", reference_variance(theory, cfg.times[-1])
        if ens.replicates >= 20:
            col = ens.column(p - 1)
            if ref is None:
                stat, pv = ks_normal_test(col, block["mean"][-1], block["var"][-1])
            else:
                stat, pv = ks_normal_test(col, 0.0, ref)
            block["ks"] = {"statistic": stat, "p_value": pv, "reference": ref_kind,
                           "t": cfg.times[-1]}
        empirical.append(block)
    summary = {"schema_version": SCHEMA_VERSION, "model": m.model_id,
               "functional": cfg.functional, "config": asdict(cfg),
               "theory": theory, "empirical": empirical}
    jsonschema.validate(summary, load_schema())
    return summary, rows


# ---------------------------------------------------------------------------
# subcommands


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def cmd_hermite(args) -> int:
    if args.coeffs is not None:
        try:
            vals = [float(v) for v in args.coeffs.split(",")]
        except ValueError:
            raise InputError("--coeffs must be comma-separated numbers") from None
        e = HermiteExpansion.from_coeffs(vals)
    elif args.builtin is not None:
        if args.builtin not in BUILTINS:
            raise InputError(f"unknown builtin function {args.builtin!r}")
        if args.builtin.startswith("abs") and args.convention == "printed":
            e = abs_expansion(args.qmax, centered=args.builtin == "abs_centered",
                              convention="printed")
        else:
            e = builtin_expansion(args.builtin, args.qmax)
    elif args.pointwise is not None:
        e = expansion_from_spec({"pointwise": args.pointwise}, args.qmax)
    else:
        raise InputError("give --builtin, --coeffs or --pointwise")
    obj = json.loads(e.to_json())
    obj["variance"] = e.variance()
    _emit(obj, args.out)
    return 0


def _parse_pairs(items) -> list[tuple[float, float]]:
    out = []
    for it in items or []:
        try:
            s, t = (float(v) for v in it.split(","))
        except ValueError:
            raise InputError(f"--kd expects s,t pairs, got {it!r}") from None
        out.append((s, t))
    return out


def cmd_theory(args) -> int:
    if not args.model:
        raise InputError("--model is required")
    m = parse_model(args.model)
    if args.coeffs:
        e = HermiteExpansion.from_coeffs([float(v) for v in args.coeffs.split(",")])
    elif args.f:
        e = expansion_from_spec({"builtin": args.f}, args.qmax)
    else:
        e = None
    d = args.d if args.d is not None else (hermite_rank(e) if e is not None else None)
    if d is None:
        raise InputError("give --d or a function")
    alpha = m.alpha
    out = {"model": m.model_id, "d": d, "alpha": alpha}
    if alpha is not None:
        out["regime"] = asy.classify_regime(alpha, d).to_dict()
        regime = out["regime"]["regime"]
    else:
        regime = "central"
    rho = m if isinstance(m, StationaryModel) else (StationaryModel.a(alpha))
    if e is not None and regime == "central":
        s = asy.sigma2_central(e, rho, d)
        out["sigma2"] = s.value
        out["sigma2_tail_bound"] = s.tail_bound
        out["sigma2_terms"] = {str(k): v for k, v in s.terms.items()}
        if args.R:
            fp = POINTWISE.get(args.f, (None, None)) if args.f else (None, None)
            out["benhariz"] = asy.benhariz_check(e, rho, args.R, d, f=fp[0],
                                                 breakpoints=fp[1]).to_dict()
    if regime == "log_central" and isinstance(m, SelfSimilarModel):
        ee = e if e is not None else HermiteExpansion.from_coeffs([0.0] * d + [1.0])
        out["log_constants"] = asy.log_constants_report(m, ee)
    pairs = _parse_pairs(args.kd)
    if pairs:
        if not isinstance(m, SelfSimilarModel):
            raise InputError("--kd needs a self-similar model")
        c2 = e.coeffs[d] ** 2 if e is not None and d <= e.qmax else 1.0
        out["kd"] = [{"s": s, "t": t, "K_d": asy.kd_covariance(m, d, s, t),
                      "cd2_K_d": c2 * asy.kd_covariance(m, d, s, t)} for s, t in pairs]
    _emit(out, args.out)
    return 0


def cmd_experiment(args) -> int:
    overrides = {"seed": args.seed, "replicates": args.replicates, "workers": args.workers,
                 "regime": args.regime}
    cfg = load_config(args.config, overrides)
    if args.csv:
        cfg.outputs["csv"] = args.csv
    if args.summary:
        cfg.outputs["summary"] = args.summary
    summary, rows = run_experiment(cfg)
    if cfg.outputs.get("csv"):
        write_csv(rows, cfg.outputs["csv"])
    if cfg.outputs.get("summary"):
        Path(cfg.outputs["summary"]).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    brief = {"model": summary["model"], "regime": summary["theory"]["regime"],
             "sigma2": summary["theory"]["sigma2"],
             "empirical": [{"eps": b["eps"], "var": b["var"][-1],
                            "ks_p": (b["ks"] or {}).get("p_value")} for b in summary["empirical"]]}
    print(json.dumps(brief, indent=2))
    return 0


def cmd_check(args) -> int:
    m = parse_model(args.model)
    if not isinstance(m, SelfSimilarModel):
        raise InputError("check needs a self-similar model")
    h1, h2 = check_h1(m), check_h2(m)
    out = {"model": m.model_id, "alpha": m.alpha, "beta": m.beta, "lambda": m.lam,
           "H1": h1.to_dict(), "H2": h2.to_dict(), "passed": h1.passed and h2.passed,
           "failing": h1.failing() + h2.failing()}
    _emit(out, args.out)
    if not out["passed"]:
        print("failing bounds: " + ", ".join(out["failing"]), file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bmlab", description="Breuer-Major numerical lab")
    sub = p.add_subparsers(dest="command", required=True)

    h = sub.add_parser("hermite", help="Hermite expansion of a function")
    h.add_argument("--builtin")
    h.add_argument("--coeffs")
    h.add_argument("--pointwise")
    h.add_argument("--qmax", type=int, default=8)
    h.add_argument("--convention", choices=("exact", "printed"), default="exact")
    h.add_argument("--out")
    h.set_defaults(func=cmd_hermite)

    t = sub.add_parser("theory", help="limiting constants and regime")
    t.add_argument("--model")
    t.add_argument("--f", help="builtin function name")
    t.add_argument("--coeffs")
    t.add_argument("--d", type=int)
    t.add_argument("--qmax", type=int, default=16)
    t.add_argument("--kd", action="append", help="s,t pair (repeatable)")
    t.add_argument("--R", type=float, help="radius for the Ben Hariz series")
    t.add_argument("--out")
    t.set_defaults(func=cmd_theory)

    e = sub.add_parser("experiment", help="run a Monte Carlo experiment from a JSON config")
    e.add_argument("config")
    e.add_argument("--seed", type=int)
    e.add_argument("--replicates", type=int)
    e.add_argument("--workers", type=int)
    e.add_argument("--regime")
    e.add_argument("--csv")
    e.add_argument("--summary")
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("check", help="check the structural hypotheses of a model")
    c.add_argument("--model", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except BMLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except jsonschema.ValidationError as exc:
        print(f"error: summary failed schema validation: {exc.message}", file=sys.stderr)
        return 4
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
