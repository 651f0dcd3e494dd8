"""Command-line front end: ``polystab <command> [options]``.

Exit status is 0 on success, 1 when a verification check or a per-degree
spectrum solve fails and 2 for usage errors (including an inadmissible
gamma).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import dynamics as dyn
from . import operators as op
from .discretization import make_grid
from .eigensolver import solve_gsep
from .equilibrium import GasLaw, build_equilibrium

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    gamma: float = 5.0 / 3.0
    rho_center: float = 1.0
    A: float = 1.0
    G: float = 1.0
    l: list = field(default_factory=lambda: [0, 1, 2])
    N: int = 400
    p: float = 2.0
    n_modes: int = 5
    out: str | None = None
    format: str = "json"
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def law(self) -> GasLaw:
        try:
            return GasLaw(self.gamma, A=self.A, G_const=self.G,
                          rho_center=self.rho_center)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    def validate(self):
        self.law()
        if self.N < 8:
            raise UsageError("--n must be at least 8")
        if self.p < 1:
            raise UsageError("--p must be at least 1")
        if self.n_modes < 0:
            raise UsageError("--n-modes must be non-negative")
        if any(l < 0 for l in self.l):
            raise UsageError("--l values must be non-negative")
        if self.format not in ("json", "csv"):
            raise UsageError("--format must be json or csv")


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_equilibrium(cfg: RunConfig) -> int:
    eq = build_equilibrium(cfg.law(), n_samples=cfg.extra.get("samples", 401))
    if cfg.format == "csv":
        rows = [[repr(float(x)) for x in row]
                for row in zip(eq.r_samples, eq.rho, eq.u, eq.P)]
        _emit(_csv(rows, ["r", "rho", "u", "P"]), cfg.out)
    else:
        _emit(eq.dumps(), cfg.out)
    return EXIT_OK


def merged_spectrum(eq, grid, ls, n_modes):
    """Per-degree ModeSets and the merged table with multiplicities 2l+1."""
    per_l, rows, errors = {}, [], {}
    lss = None
    if n_modes == 0:
        return per_l, lss, rows, errors
    for l in ls:
        if l == 0:
            lss = solve_gsep(op.assemble_Lss(eq, grid), n_modes)
        try:
            ms = solve_gsep(op.assemble_Nl(eq, grid, l), n_modes)
        except (ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
            errors[l] = f"{type(exc).__name__}: {exc}"
            if l == 0:
                # the nonzero degree-0 spectrum is the radial one
                rows.extend({"lambda": float(lam), "l": 0, "multiplicity": 1,
                             "source": "Lss",
                             "note": "unstable" if lam < 0 else ""}
                            for lam in lss.lambdas)
            continue
        per_l[l] = ms
        for lam, ker in zip(ms.lambdas, ms.zero_mask()):
            note = "unstable" if lam < 0 and not ker else (
                "numerical zero" if ker else "")
            rows.append({"lambda": float(lam), "l": l,
                         "multiplicity": 2 * l + 1, "source": f"N_{l}",
                         "note": note})
    rows.sort(key=lambda r: r["lambda"])
    rows.append({"lambda": 0.0, "l": None, "multiplicity": "inf",
                 "source": "kernel",
                 "note": "infinite multiplicity (kernel)"})
    return per_l, lss, rows, errors


def cmd_spectrum(cfg: RunConfig) -> int:
    eq = build_equilibrium(cfg.law())
    grid = make_grid(eq.R, cfg.N, cfg.p)
    per_l, lss, rows, errors = merged_spectrum(eq, grid, cfg.l, cfg.n_modes)
    for l, msg in errors.items():
        sys.stderr.write(f"polystab spectrum: l={l} failed: {msg}\n")
    if cfg.format == "csv":
        text = _csv([[repr(r["lambda"]), "" if r["l"] is None else r["l"],
                      r["multiplicity"], r["source"], r["note"]]
                     for r in rows],
                     ["lambda", "l", "multiplicity", "source", "note"])
    else:
        doc = {"gamma": cfg.gamma, "N": cfg.N, "p": cfg.p,
               "per_l": {str(l): ms.to_json() for l, ms in per_l.items()},
               "Lss": None if lss is None else lss.to_json(),
               "merged": rows,
               "errors": {str(l): m for l, m in errors.items()}}
        text = json.dumps(doc, indent=1)
    _emit(text, cfg.out)
    return EXIT_FAIL if errors else EXIT_OK


OPERATORS = ("Lss", "Nl", "Nl00", "A")


def _assemble(kind, eq, grid, l):
    if kind == "Lss":
        return op.assemble_Lss(eq, grid)
    if kind == "Nl":
        return op.assemble_Nl(eq, grid, l)
    if kind == "Nl00":
        return op.assemble_Nl00(eq, grid, l)
    return op.assemble_A(eq, grid)


def cmd_modes(cfg: RunConfig) -> int:
    eq = build_equilibrium(cfg.law())
    grid = make_grid(eq.R, cfg.N, cfg.p)
    kind = cfg.extra.get("operator", "Nl")
    l = cfg.l[0] if cfg.l else 0
    form = _assemble(kind, eq, grid, l)
    ms = solve_gsep(form, cfg.n_modes)
    full = np.column_stack([form.full_vector(v) for v in ms.vectors.T]) \
        if len(ms) else np.empty((grid.N + 1, 0))
    if cfg.format == "csv":
        header = ["r"] + [f"mode_{k}" for k in range(len(ms))]
        rows = [[repr(float(r))] + [repr(float(x)) for x in full[i]]
                for i, r in enumerate(grid.nodes)]
        text = _csv(rows, header)
    else:
        doc = ms.to_json()
        doc["r"] = grid.nodes.tolist()
        doc["vectors"] = full.T.tolist()
        text = json.dumps(doc, indent=1)
    _emit(text, cfg.out)
    return EXIT_OK


def cmd_evolve(cfg: RunConfig) -> int:
    eq = build_equilibrium(cfg.law())
    grid = make_grid(eq.R, cfg.N, cfg.p)
    l = cfg.l[0] if cfg.l else 1
    form = op.assemble_Nl(eq, grid, l)
    ms = solve_gsep(form)
    positive = np.nonzero((ms.lambdas > 0) & ~ms.zero_mask())[0]
    k = cfg.extra.get("mode", 0)
    if k >= len(positive):
        raise UsageError(f"mode index {k} out of range "
                         f"({len(positive)} positive modes)")
    lam, phi = float(ms.lambdas[positive[k]]), ms.vectors[:, positive[k]]
    E = cfg.extra.get("amplitude", 1.0)
    v0 = dyn.compatible_velocity(form, lam, phi, E)
    tor = cfg.extra.get("toroidal", 0.0)
    if tor:
        if l == 0:
            raise UsageError("toroidal residue needs l >= 1")
        rng = np.random.default_rng(cfg.seed)
        a = rng.standard_normal(10)
        prof = sum(a[j] * np.sin((j + 1) * math.pi * grid.nodes / eq.R)
                   for j in range(10))
        v0 = v0 + dyn.toroidal_field(grid, l, tor * prof)
    T = 2 * math.pi / math.sqrt(lam)
    times = np.linspace(0.0, cfg.extra.get("periods", 3.0) * T,
                        cfg.extra.get("n_times", 61))
    tr = dyn.evolve_mode(eq, form, lam, phi, E, v0, times)
    growing = not tr.periodic_flag
    if cfg.format == "csv":
        text = tr.to_csv()
    else:
        text = json.dumps({
            "gamma": cfg.gamma, "l": l, "lambda": lam, "period": T,
            "periodic": tr.periodic_flag, "growing": growing,
            "B_norm": tr.B_field.norm(eq),
            "t": tr.times.tolist(), "norm": tr.norms.tolist(),
            **{k: v.tolist() for k, v in tr.component_norms.items()}},
            indent=1)
    _emit(text, cfg.out)
    sys.stderr.write(f"periodic={str(tr.periodic_flag).lower()} "
                     f"growing={str(growing).lower()}\n")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from .verification import VerificationConfig, run_all
    vc = VerificationConfig(seed=cfg.seed,
                            tol_factor=cfg.extra.get("tol_factor", 1.0))
    if cfg.extra.get("gammas") is not None:
        vc.gammas = tuple(cfg.extra["gammas"])
    if cfg.extra.get("ls") is not None:
        vc.ls = tuple(cfg.extra["ls"])
    if cfg.extra.get("Ns") is not None:
        vc.Ns = tuple(cfg.extra["Ns"])
    if cfg.extra.get("only"):
        vc.only = tuple(cfg.extra["only"])
    report = run_all(vc)
    if cfg.extra.get("json"):
        with open(cfg.extra["json"], "w") as fh:
            fh.write(report.dumps())
    text = report.dumps() if cfg.format == "json" and cfg.out else \
        report.table()
    _emit(text, cfg.out)
    return EXIT_OK if report.ok else EXIT_FAIL


COMMANDS = {"equilibrium": cmd_equilibrium, "spectrum": cmd_spectrum,
            "modes": cmd_modes, "evolve": cmd_evolve, "verify": cmd_verify}


def _number(text: str) -> float:
    """Float that also accepts fractions such as 5/3."""
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--gamma", type=_number, default=5.0 / 3.0)
    common.add_argument("--rho-center", type=float, default=1.0)
    common.add_argument("--A", type=float, default=1.0)
    common.add_argument("--G", type=float, default=1.0)
    common.add_argument("--l", type=int, nargs="+", default=None)
    common.add_argument("--n", type=int, default=400)
    common.add_argument("--p", type=float, default=2.0)
    common.add_argument("--n-modes", type=int, default=5)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", default=None)

    parser = argparse.ArgumentParser(
        prog="polystab",
        description="Spectra and mode dynamics of linearised polytropes.")
    sub = parser.add_subparsers(dest="command", required=True)
    e = sub.add_parser("equilibrium", parents=[common],
                       help="Lane-Emden equilibrium profile")
    e.add_argument("--samples", type=int, default=401)
    sub.add_parser("spectrum", parents=[common],
                   help="eigenvalues per degree and merged table")
    m = sub.add_parser("modes", parents=[common],
                       help="eigenvectors of one operator")
    m.add_argument("--operator", choices=OPERATORS, default="Nl")
    ev = sub.add_parser("evolve", parents=[common],
                        help="closed-form trajectory of one mode")
    ev.add_argument("--mode", type=int, default=0,
                    help="index among the positive eigenvalues")
    ev.add_argument("--amplitude", type=float, default=1.0)
    ev.add_argument("--toroidal", type=float, default=0.0,
                    help="amplitude of an added toroidal velocity")
    ev.add_argument("--periods", type=float, default=3.0)
    ev.add_argument("--n-times", type=int, default=61)
    v = sub.add_parser("verify", parents=[common],
                       help="run the verification suite")
    v.add_argument("--json", default=None, help="write the JSON report here")
    v.add_argument("--tol-factor", type=float, default=1.0)
    v.add_argument("--gammas", type=_number, nargs="*", default=None)
    v.add_argument("--ls", type=int, nargs="+", default=None)
    v.add_argument("--ns", type=int, nargs="+", default=None)
    v.add_argument("--only", nargs="+", default=None)
    return parser


def config_from_args(args) -> RunConfig:
    default_l = [1] if args.command == "evolve" else (
        [0] if args.command == "modes" else [0, 1, 2])
    cfg = RunConfig(command=args.command, gamma=args.gamma,
                    rho_center=args.rho_center, A=args.A, G=args.G,
                    l=args.l if args.l is not None else default_l,
                    N=args.n, p=args.p, n_modes=args.n_modes, out=args.out,
                    format=args.format, seed=args.seed)
    for name in ("samples", "operator", "mode", "amplitude", "toroidal",
                 "periods", "n_times", "json", "tol_factor", "gammas", "ls",
                 "only"):
        if hasattr(args, name):
            cfg.extra[name] = getattr(args, name)
    if hasattr(args, "ns"):
        cfg.extra["Ns"] = args.ns
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        cfg.validate()
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        sys.stderr.write(f"polystab {args.command}: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
