"""Command-line entry point.

Precedence: command-line flags override fields of the ``--config`` JSON file,
which override built-in defaults.  The effective configuration is written
into ``manifest.json`` next to the outputs.  The output directory is
``--out``, else ``$GIBBSMIX_OUTPUT_DIR``, else ``./gibbsmix_out``.

Exit codes: 0 success, 1 invalid input (model, family, hyperparameters,
config), 2 refusal (caps exceeded, certification impossible).
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from ._backend import BACKEND
from .certify import MomentSpaceBox, certify_box, splitting_bound
from .errors import DomainError, GibbsMixError, Refusal
from .expfam import family_from_dict
from .experiments import (FIG1B_DEFAULTS, ExperimentConfig, MixtureSpec, SWEEP_COLUMNS,
                          derive_seed, extra_cluster_census, fig1b_experiment,
                          fig3_size_distribution, gen_mixture_data, inconsistency_sweep,
                          rows_to_csv)
from .partition import GibbsPartitionModel, prior_on_t
from .posterior import (DP_CAP, Dataset, GibbsChainConfig, exact_joint_enumeration,
                        exact_joint_subset_dp, gibbs_sampler)
from .theory import (HalfspaceRegion, bounded_case_constant, capture_convergence_experiment,
                     fraction_in_region, lemma_bound)

log = logging.getLogger("gibbsmix")

OUTPUT_ENV = "GIBBSMIX_OUTPUT_DIR"
SUBCOMMANDS = ("exact", "gibbs", "prior", "bounds", "fig3", "capture", "certify", "sweep")


class ConfigError(DomainError):
    pass


def load_schema() -> dict:
    text = resources.files("gibbsmix").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} does not exist")
    text = p.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    validate_config(cfg, source=str(path))
    return cfg


def validate_config(cfg: dict, source: str = "config"):
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            where = ".".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{source}: field '{where}': {e.message}")
        raise ConfigError("\n".join(msgs))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _dump(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v
    return json.dumps(clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


class Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def write(self, name: str, text: str):
        (self.dir / name).write_text(text, encoding="utf-8")
        self.files.append(name)
        log.info("wrote %s", self.dir / name)

    def manifest(self, command: str, cfg: dict, extra: dict | None = None):
        body = {"command": command, "effective_config": cfg, "artifacts": self.files,
                "version": __version__, "backend": BACKEND,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        if extra:
            body["summary"] = extra
        (self.dir / "manifest.json").write_text(_dump(body), encoding="utf-8")


# -- shared config pieces --------------------------------------------------------------

def _need(cfg, key, cmd):
    if key not in cfg:
        raise ConfigError(f"'{cmd}' needs the config field '{key}'")
    return cfg[key]


def _model(cfg, cmd):
    return GibbsPartitionModel.from_dict(_need(cfg, "model", cmd))


def _family(cfg, cmd, need_hyper=True):
    fam, hyper = family_from_dict(_need(cfg, "family", cmd))
    if need_hyper and hyper is None:
        raise ConfigError(f"'{cmd}': the family spec needs 'xi' and 'nu'")
    return fam, hyper


def _data(cfg, fam, cmd) -> Dataset:
    n = cfg.get("n")
    if "data" in cfg:
        pts = np.asarray(cfg["data"], dtype=float)
        if n is not None:
            if n > len(pts):
                raise ConfigError(f"n={n} exceeds the {len(pts)} points in 'data'")
            pts = pts[:n]
        return Dataset(fam, pts)
    if "mixture" in cfg:
        if n is None:
            raise ConfigError(f"'{cmd}' with a mixture needs 'n'")
        mix = MixtureSpec.from_dict(fam, cfg["mixture"])
        return gen_mixture_data(fam, mix, int(n), derive_seed(cfg.get("seed", 0), 0))
    raise ConfigError(f"'{cmd}' needs 'data' or 'mixture'")


def _region(cfg):
    r = cfg.get("region")
    if isinstance(r, dict):
        return (r["lo"], r["hi"])
    return r


# -- subcommands ----------------------------------------------------------------------

def cmd_exact(cfg, out, args):
    model = _model(cfg, "exact")
    fam, hyper = _family(cfg, "exact")
    ds = _data(cfg, fam, "exact")
    if cfg.get("engine", "dp") == "enumeration":
        res = exact_joint_enumeration(model, fam, hyper, ds, cap=cfg.get("cap", 13))
    else:
        res = exact_joint_subset_dp(model, fam, hyper, ds, cap=cfg.get("cap", DP_CAP))
    out.write("exact.json", _dump(res.to_dict()))
    out.write("exact.csv", res.to_csv())
    print(" ".join(f"{p:.6f}" for p in res.posterior))
    return {"log_evidence": res.log_evidence}


def cmd_gibbs(cfg, out, args):
    model = _model(cfg, "gibbs")
    fam, hyper = _family(cfg, "gibbs")
    ds = _data(cfg, fam, "gibbs")
    g = dict(cfg.get("gibbs", {}))
    g.setdefault("seed", cfg.get("seed", 0))
    res = gibbs_sampler(model, fam, hyper, ds, GibbsChainConfig.from_dict(g),
                        threads=args.threads)
    out.write("gibbs.json", _dump(res.to_dict()))
    if cfg.get("trace"):
        for ch in range(res.traces.shape[0]):
            out.write(f"gibbs_trace_chain{ch}.csv", res.trace_csv(ch))
    print(" ".join(f"{p:.6f}" for p in res.pooled))
    return {"backend": res.backend}


def cmd_prior(cfg, out, args):
    model = _model(cfg, "prior")
    n = int(_need(cfg, "n", "prior"))
    pr = prior_on_t(model, n)
    out.write("prior.csv", pr.to_csv())
    return {"total_mass": pr.total, "normalized": pr.normalized}


def cmd_bounds(cfg, out, args):
    model = _model(cfg, "bounds")
    fam, hyper = _family(cfg, "bounds")
    ds = _data(cfg, fam, "bounds")
    t = int(_need(cfg, "t", "bounds"))
    region = _region(cfg)
    if "c" in cfg:
        c = float(cfg["c"])
    elif region is not None:
        c = bounded_case_constant(fam, hyper, region)
    else:
        raise ConfigError("'bounds' needs 'c' or 'region'")
    if cfg.get("phi_source", "exact") == "region":
        if region is None:
            raise ConfigError("phi_source 'region' needs 'region'")
        rep = lemma_bound(model, fam, hyper, ds, t, c, phi=fraction_in_region(fam, ds, region),
                          phi_source="region")
    else:
        rep = lemma_bound(model, fam, hyper, ds, t, c)
    out.write("bounds.json", _dump(rep.to_dict()))
    print(f"bound={rep.bound:.6f} posterior={rep.posterior}")
    return {"bound": rep.bound, "preconditions": rep.preconditions}


def cmd_fig3(cfg, out, args):
    theta = float(cfg.get("theta", 1.0))
    ns = cfg.get("ns", [50, 500, 5000])
    rows = []
    summary = {}
    for n in ns:
        r = fig3_size_distribution(theta, int(n))
        rows.extend(r.rows())
        summary[str(n)] = {"P(a1<=0.05n)": r.tail(0.05), "P(extreme 5%)": r.extremes(0.05)}
    out.write("fig3.csv", rows_to_csv(["n", "a", "pmf", "cdf"], rows,
                                      {"theta": theta, "ns": list(ns)}))
    return summary


def cmd_capture(cfg, out, args):
    fam, _ = _family(cfg, "capture", need_hyper=False)
    mix = MixtureSpec.from_dict(fam, _need(cfg, "mixture", "capture"))
    beta = float(_need(cfg, "beta", "capture"))
    box = _need(cfg, "capture_region", "capture")
    region = HalfspaceRegion.box(box["lo"], box["hi"])
    seeds = cfg.get("seeds", 100)
    base = int(cfg.get("seed", 0))
    seeds = [derive_seed(base, i) for i in range(seeds)] if isinstance(seeds, int) else seeds

    def draw(n, rng):
        return fam.suff_stats(gen_mixture_data(fam, mix, n, int(rng.integers(2 ** 63))).points)

    def inside_m(reg):
        corners = MomentSpaceBox.make(box["lo"], box["hi"]).corners()
        return bool(np.all(fam.in_moment_space(corners)))

    rows, freq, thr = capture_convergence_experiment(
        draw, beta, region, _need(cfg, "n_grid", "capture"), seeds, moment_check=inside_m)
    out.write("capture.csv", rows_to_csv(["n", "seed", "capture"], rows, cfg))
    return {"frequency": {str(k): v for k, v in freq.items()}, "threshold_n": thr}


def cmd_certify(cfg, out, args):
    fam, hyper = _family(cfg, "certify")
    b = _need(cfg, "box", "certify")
    box = MomentSpaceBox.make(b["lo"], b["hi"], b.get("resolution", 64))
    cert = certify_box(fam, hyper, box)
    body = {"certificate": cert.to_dict()}
    if cfg.get("splitting", True):
        body["splitting"] = {k: v for k, v in splitting_bound(fam, hyper, box).to_dict().items()
                             if k != "certificate"}
    out.write("certificate.json", _dump(body))
    print(f"C1={cert.C1:.6g} C2={cert.C2:.6g}")
    return {"C1": cert.C1, "C2": cert.C2}


def cmd_sweep(cfg, out, args):
    kind = cfg.get("experiment", "inconsistency")
    if kind == "fig1b":
        full = copy.deepcopy(FIG1B_DEFAULTS)
        full.update(cfg)
        ec = ExperimentConfig.from_dict(full)
        rows, chains = fig1b_experiment(ec, threads=args.threads)
        out.write("fig1b.csv", rows_to_csv(["n", "t", "mean_posterior", "stderr"], rows, full))
        summary = {}
        if ec.census_threshold > 0:
            crow = []
            for (n, r), res in sorted(chains.items()):
                s = extra_cluster_census(res, ec.census_threshold)
                crow.append((n, r, s.quantiles.get("0.5"), float(s.counts.mean())))
            out.write("census.csv", rows_to_csv(["n", "replicate", "median_count", "mean_count"],
                                                crow, full))
        return summary
    ec = ExperimentConfig.from_dict(cfg)
    t_star = int(cfg.get("t_star", ec.mixture.t_star))
    rows = inconsistency_sweep(ec, t_star, threads=args.threads)
    out.write("sweep.csv", rows_to_csv(SWEEP_COLUMNS, rows, cfg))
    bounds = [r[9] for r in rows if r[9] is not None]
    return {"running_max": rows[-1][-1], "max_bound": max(bounds) if bounds else None}


COMMANDS = {"exact": cmd_exact, "gibbs": cmd_gibbs, "prior": cmd_prior, "bounds": cmd_bounds,
            "fig3": cmd_fig3, "capture": cmd_capture, "certify": cmd_certify, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbsmix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--n", type=int, nargs="+", help="data size (fig3: list of sizes)")
        sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./gibbsmix_out)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        if name == "fig3":
            sp.add_argument("--theta", type=float, help="DP concentration")
    return p


def _apply_flags(cmd, cfg, args):
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.n is not None:
        if cmd == "fig3":
            cfg["ns"] = args.n
        else:
            if len(args.n) != 1:
                raise ConfigError("--n takes a single value for this command")
            cfg["n"] = args.n[0]
    if getattr(args, "theta", None) is not None:
        cfg["theta"] = args.theta
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = _apply_flags(args.command, cfg, args)
        validate_config(cfg, source="effective config")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out_dir = Path(args.out or os.environ.get(OUTPUT_ENV) or "gibbsmix_out")
        out = Outputs(out_dir)
        summary = COMMANDS[args.command](cfg, out, args)
        out.manifest(args.command, cfg, summary)
        return 0
    except Refusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GibbsMixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
