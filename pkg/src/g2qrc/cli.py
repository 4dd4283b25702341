"""Config-driven command line for the g2(0) estimation pipeline.

Subcommands: gen, train-eval, cross, partition, sweep, oracle-check.
Exit codes: 0 success, 2 usage or config parse failure, 3 validation failure,
4 runtime numerical failure.  Every artifact embeds the resolved config and
the package version, so reruns from an artifact's config reproduce it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .dynamics import LindbladModel, evolve, steady_state
from .errors import G2qrcError
from .experiments import (
    BASELINE,
    WITH_RESERVOIR,
    SplitSpec,
    cross_evaluate,
    default_sweep,
    generalization_sweep,
    generate_dataset_multi,
    matrix_to_dict,
    photon_added_mixed_parts,
    report_to_dict,
    split,
    train_and_eval,
    write_dataset_csv,
    write_json_report,
)
from .forest import ForestConfig, fit, predict
from .hilbert import (
    mode_operator,
    second_order_coherence,
    space,
    two_level,
    vacuum_state,
)
from .reservoir import ReservoirConfig
from .seeding import derive_rng
from .sources import (
    SOURCE_IDS,
    CvMixtureSpec,
    PhotonAddedSpec,
    SweepSpec,
    build_cv_mixture,
    build_photon_added,
    cv_mixture_g2_analytic,
    photon_added_g2_analytic,
    photon_added_g2_m1,
    squeeze_operator,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


# ---------------------------------------------------------------------------
# Config loading and resolution

def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}")


class UsageError(Exception):
    pass


def _dataclass_from(cls, data: dict, where: str):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - fields
    if unknown:
        raise ValueError(f"unknown {where} fields: {sorted(unknown)}")
    coerced = dict(data)
    for key in ("window", "sample_times"):
        if key in coerced and isinstance(coerced[key], list):
            coerced[key] = tuple(coerced[key])
    return cls(**coerced)


def resolve_config(raw: dict, seed_override: int | None = None) -> dict:
    """Inline every default so the artifact is self-describing."""
    cfg = dict(raw)
    cfg.setdefault("root_seed", 0)
    if seed_override is not None:
        cfg["root_seed"] = int(seed_override)
    root = int(cfg["root_seed"])

    family = cfg.setdefault("family", "3B-Mix")
    if family not in SOURCE_IDS:
        raise ValueError(f"unknown source family {family!r}")
    base_spec, sweep, frac = default_sweep(family)

    res = dict(cfg.get("reservoir", {}))
    res.setdefault("seed", int(derive_rng(root, "seed:reservoir").integers(2**31)))
    cfg["reservoir"] = dataclasses.asdict(
        _dataclass_from(ReservoirConfig, res, "reservoir"))
    cfg["reservoir"]["window"] = list(cfg["reservoir"]["window"])
    cfg["reservoir"]["sample_times"] = list(cfg["reservoir"]["sample_times"])

    forest = dict(cfg.get("forest", {}))
    forest.setdefault("seed", int(derive_rng(root, "seed:forest").integers(2**31)))
    cfg["forest"] = dataclasses.asdict(
        _dataclass_from(ForestConfig, forest, "forest"))

    sp = dict(cfg.get("split", {}))
    sp.setdefault("test_fraction", frac)
    sp.setdefault("seed", int(derive_rng(root, "seed:split").integers(2**31)))
    cfg["split"] = dataclasses.asdict(_dataclass_from(SplitSpec, sp, "split"))

    sw = dict(cfg.get("sweep", {}))
    sw.setdefault("mode", sweep.mode)
    sw.setdefault("params", sweep.params)
    sw.setdefault("n_samples", sweep.n_samples)
    cfg["sweep"] = dataclasses.asdict(_dataclass_from(SweepSpec, sw, "sweep"))

    cfg.setdefault("source_params", {})
    cfg.setdefault("dataset_seed",
                   int(derive_rng(root, "seed:dataset").integers(2**31)))
    cfg.setdefault("mixed_photon_numbers", False)
    cfg["version"] = __version__
    return cfg


def _reservoir_config(cfg: dict) -> ReservoirConfig:
    return _dataclass_from(ReservoirConfig, cfg["reservoir"], "reservoir")


def _forest_config(cfg: dict) -> ForestConfig:
    return _dataclass_from(ForestConfig, cfg["forest"], "forest")


def _split_spec(cfg: dict) -> SplitSpec:
    return _dataclass_from(SplitSpec, cfg["split"], "split")


def _sweep_spec(cfg: dict) -> SweepSpec:
    raw = dict(cfg["sweep"])
    raw["params"] = {k: tuple(v) if isinstance(v, list) else v
                     for k, v in raw["params"].items()}
    return _dataclass_from(SweepSpec, raw, "sweep")


def _dataset_parts(cfg: dict):
    family = cfg["family"]
    base_spec, _, _ = default_sweep(family)
    if cfg["source_params"]:
        base_spec = dataclasses.replace(base_spec, **cfg["source_params"])
    if cfg.get("mixed_photon_numbers"):
        return photon_added_mixed_parts(cfg["sweep"]["n_samples"])
    return [(base_spec, _sweep_spec(cfg))]


def _build_dataset(cfg: dict):
    return generate_dataset_multi(cfg["family"], _dataset_parts(cfg),
                                  _reservoir_config(cfg), cfg["dataset_seed"])


def _slug(family: str) -> str:
    return family.lower()


# ---------------------------------------------------------------------------
# Subcommands

def cmd_gen(cfg: dict, out_dir: str) -> int:
    dataset = _build_dataset(cfg)
    slug = _slug(cfg["family"])
    csv_path = os.path.join(out_dir, f"{slug}.csv")
    write_dataset_csv(dataset, csv_path)
    write_json_report({
        "config": cfg,
        "reservoir_fingerprint": dataset.reservoir_fingerprint,
        "n_samples": len(dataset),
        "n_skipped": len(dataset.skipped),
        "skipped": [{"index": i, "reason": msg} for i, msg in dataset.skipped],
        "csv": os.path.basename(csv_path),
    }, os.path.join(out_dir, f"{slug}.manifest.json"))
    print(f"wrote {csv_path} ({len(dataset)} samples)")
    return EXIT_OK


def cmd_train_eval(cfg: dict, out_dir: str) -> int:
    dataset = _build_dataset(cfg)
    fc, sp = _forest_config(cfg), _split_spec(cfg)
    reports = {mode: report_to_dict(train_and_eval(dataset, mode, fc, sp))
               for mode in (WITH_RESERVOIR, BASELINE)}
    path = os.path.join(out_dir, f"{_slug(cfg['family'])}.train-eval.json")
    write_json_report({"config": cfg, "reports": reports}, path)
    print(f"{cfg['family']}: mse with reservoir {reports[WITH_RESERVOIR]['mse']:.6g}, "
          f"baseline {reports[BASELINE]['mse']:.6g} -> {path}")
    return EXIT_OK


def cmd_cross(cfg: dict, out_dir: str) -> int:
    datasets = {}
    for family in SOURCE_IDS:
        sub = resolve_config({**cfg, "family": family,
                              "mixed_photon_numbers": False,
                              "sweep": {}, "source_params": {},
                              "root_seed": cfg["root_seed"],
                              "reservoir": cfg["reservoir"]})
        datasets[family] = _build_dataset(sub)
    matrix = cross_evaluate(datasets, _forest_config(cfg), _split_spec(cfg))
    path = os.path.join(out_dir, "cross-eval.json")
    write_json_report({"config": cfg, "matrix": matrix_to_dict(matrix)}, path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_partition(cfg: dict, out_dir: str) -> int:
    train_family = cfg.get("train_family", cfg["family"])
    eval_family = cfg.get("eval_family", cfg["family"])
    train_cfg = resolve_config({**cfg, "family": train_family, "sweep": {},
                                "source_params": {},
                                "reservoir": cfg["reservoir"]})
    eval_cfg = resolve_config({**cfg, "family": eval_family, "sweep": {},
                               "source_params": {},
                               "reservoir": cfg["reservoir"]})
    from .experiments import partition_mse  # local to keep module load light
    train_set, _ = split(_build_dataset(train_cfg),
                         cfg["split"]["test_fraction"], cfg["split"]["seed"])
    model = fit(train_set.features(WITH_RESERVOIR), train_set.labels(),
                _forest_config(cfg))
    segments = partition_mse(model, _build_dataset(eval_cfg),
                             n_parts=int(cfg.get("n_parts", 4)))
    path = os.path.join(out_dir, "partition.json")
    write_json_report({"config": cfg, "train_family": train_family,
                       "eval_family": eval_family,
                       "segment_mse": segments}, path)
    print(f"segment mse {segments} -> {path}")
    return EXIT_OK


def cmd_sweep(cfg: dict, out_dir: str) -> int:
    gen = cfg.get("generalization", {})
    train_values = tuple(gen.get("train_values", (1.0, 1.6, 1.8)))
    test_value = float(gen.get("test_value", 1.4))
    report = generalization_sweep(
        train_values, test_value,
        _reservoir_config(cfg), _forest_config(cfg), cfg["dataset_seed"],
        delta_a_range=tuple(gen.get("delta_a_range", (-1.0, 4.0))),
        n_per_detuning=int(gen.get("n_per_detuning", 400)),
    )
    path = os.path.join(out_dir, "generalization.json")
    write_json_report({"config": cfg, "train_values": list(train_values),
                       "test_value": test_value,
                       "report": report_to_dict(report)}, path)
    print(f"generalization mse {report.mse:.6g} -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Oracle self-checks

def _check_mixture(n_grid: int = 8) -> float:
    worst = 0.0
    for theta in np.linspace(0.05, math.pi / 2 - 0.05, n_grid):
        for phi in np.linspace(0.05, math.pi / 2 - 0.05, n_grid):
            spec = CvMixtureSpec(theta=float(theta), phi=float(phi))
            src = build_cv_mixture(spec)
            numeric = second_order_coherence(src.rho, src.monitored_op)
            worst = max(worst, abs(numeric - cv_mixture_g2_analytic(spec)))
    return worst


def _check_photon_added(truncation: int) -> float:
    worst = 0.0
    for r in (0.2, 0.5, 0.8):
        for m in (0, 1, 2, 3):
            src = build_photon_added(PhotonAddedSpec(r=r, m=m,
                                                     truncation=truncation))
            numeric = second_order_coherence(src.rho, src.monitored_op)
            worst = max(worst, abs(numeric - photon_added_g2_analytic(r, m)))
            if m == 0:
                worst = max(worst, abs(photon_added_g2_analytic(r, 0)
                                       - (3 + 1 / math.sinh(r)**2)))
            if m == 1:
                worst = max(worst, abs(photon_added_g2_m1(r)
                                       - photon_added_g2_analytic(r, 1)))
    return worst


def _check_squeezed_vacuum(truncation: int) -> float:
    r = 0.5
    s = squeeze_operator(truncation, r)
    vec = s.matrix[:, 0]
    k = np.arange(truncation // 2)
    from scipy.special import gammaln
    log_mag = (0.5 * gammaln(2 * k + 1) - k * math.log(2.0) - gammaln(k + 1)
               + k * math.log(math.tanh(r)) - 0.5 * math.log(math.cosh(r)))
    expected = np.zeros(truncation)
    expected[2 * k] = (-1.0) ** k * np.exp(log_mag)
    return float(np.max(np.abs(vec - expected)))


def _check_resonance_fluorescence() -> float:
    gamma, omega, delta = 1.0, 0.3, 0.4
    hs = space(two_level("sigma"))
    sig = mode_operator(hs, "sigma", "lower")
    h = sig.dag() @ sig * delta + (sig + sig.dag()) * omega
    rho = steady_state(LindbladModel(space=hs, hamiltonian=h,
                                     dissipators=((sig, gamma),)))
    analytic = omega**2 / (gamma**2 / 4 + delta**2 + 2 * omega**2)
    return abs(rho.matrix[1, 1].real - analytic)


def _check_decay_curve() -> float:
    gamma = 1.0
    hs = space(two_level("sigma"))
    sig = mode_operator(hs, "sigma", "lower")
    rho0 = vacuum_state(hs)
    excited = np.zeros((2, 2), dtype=complex)
    excited[1, 1] = 1.0
    rho0 = type(rho0)(hs, excited)
    times = np.linspace(0.1, 5.0, 20)
    res = evolve(LindbladModel(space=hs, dissipators=((sig, gamma),)),
                 rho0, times, [sig.dag() @ sig])
    return float(np.max(np.abs(res.observable_traces[:, 0] - np.exp(-gamma * times))))


def cmd_oracle_check(cfg: dict) -> int:
    checks = [
        ("mixture analytic vs numeric", _check_mixture, 1e-8),
        ("photon-added analytic vs numeric",
         lambda: _check_photon_added(int(cfg.get("photon_added_truncation", 80))),
         1e-6),
        ("squeezed-vacuum expansion",
         lambda: _check_squeezed_vacuum(int(cfg.get("squeezed_truncation", 60))),
         1e-8),
        ("driven two-level steady state", _check_resonance_fluorescence, 1e-9),
        ("exponential decay curve", _check_decay_curve, 1e-7),
    ]
    failed = False
    for name, run, tol in checks:
        try:
            dev = run()
        except G2qrcError as exc:
            failed = True
            print(f"FAIL  {name}: {exc}")
            continue
        ok = dev < tol
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: max deviation {dev:.3e} "
              f"(tolerance {tol:g})")
    return EXIT_OK if not failed else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# Entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="g2qrc",
        description="Quantum-reservoir estimation of g2(0) from node occupations")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen", "train-eval", "cross", "partition", "sweep",
                 "oracle-check"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=0,
                       help="worker cap (0 = all cores)")
        p.add_argument("--seed", type=int, default=None,
                       help="override root_seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = _load_config(args.config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "oracle-check":
            return cmd_oracle_check(raw)
        cfg = resolve_config(raw, seed_override=args.seed)
        os.makedirs(args.out, exist_ok=True)
        handler = {
            "gen": cmd_gen,
            "train-eval": cmd_train_eval,
            "cross": cmd_cross,
            "partition": cmd_partition,
            "sweep": cmd_sweep,
        }[args.command]
        return handler(cfg, args.out)
    except (ValueError, TypeError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except G2qrcError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
