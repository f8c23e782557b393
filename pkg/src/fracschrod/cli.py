"""Command-line front end: ``fracschrod <subcommand> CONFIG [--out DIR] [--strict]``.

Exit codes: 0 success, 1 configuration error (nothing written), 2 numerical
failure, 3 an inequality flag failed under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import critical as crit
from . import doob as db
from . import potential as pot
from . import spectral as sp
from .domain import Grid, build_box, build_interval
from .errors import ConfigurationError, NumericalError
from .operator import NonlocalForm, assemble, export_form

SCHEMA_VERSION = 1
SUBCOMMANDS = ("assemble", "eigen", "torsion", "compare", "heat", "moser", "critical", "all")
FLOAT = "%.12g"


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration (see README for the JSON layout)."""

    domain_kind: str
    lo: tuple
    hi: tuple
    n: tuple
    alpha: float
    potential_kind: str = "none"
    strength: float | None = None
    fraction: float | None = None
    truncation: float | None = None
    potential_path: str | None = None
    eigencount: int = 20
    tol: float = 1e-9
    t_list: tuple = (0.1, 0.5, 1.0, 2.0, 5.0)
    heat_t: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 30.0)
    t_units: str = "lambda0"
    moser_k_max: int = 20
    moser_q: float | None = None
    ladder_k_max: int = 32
    probes: int = 100
    sobolev_probes: int = 1000
    seed: int = 0
    r: float | None = None
    critical_r: float | None = None
    source: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_dict(cls, raw: dict, base: Path | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = set(raw) - {"domain", "alpha", "potential", "solver", "analysis"}
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        dom = _section(raw, "domain", required=True)
        kind = dom.get("kind")
        if kind == "interval":
            b = dom.get("bounds")
            if not (isinstance(b, list) and len(b) == 2):
                raise ConfigurationError("interval bounds must be [a, b]")
            lo, hi = (float(b[0]),), (float(b[1]),)
            n = (_int(dom.get("n"), "domain.n"),)
        elif kind == "box":
            b = dom.get("bounds")
            if not (isinstance(b, list) and len(b) == 2 and all(isinstance(p, list) and len(p) == 2 for p in b)):
                raise ConfigurationError("box bounds must be [[x0, x1], [y0, y1]]")
            lo, hi = (float(b[0][0]), float(b[1][0])), (float(b[0][1]), float(b[1][1]))
            nn = dom.get("n")
            n = tuple(_int(v, "domain.n") for v in nn) if isinstance(nn, list) else (_int(nn, "domain.n"),) * 2
            if len(n) != 2:
                raise ConfigurationError("box needs two node counts")
        else:
            raise ConfigurationError(f"domain.kind must be 'interval' or 'box', got {kind!r}")
        if "alpha" not in raw:
            raise ConfigurationError("alpha is required")
        alpha = _positive(raw["alpha"], "alpha")
        if not alpha < 2:
            raise ConfigurationError(f"alpha must lie in (0, 2), got {alpha}")
        p = _section(raw, "potential")
        pkind = p.get("kind", "none")
        if pkind not in ("none",) + pot.KINDS:
            raise ConfigurationError(f"potential.kind must be one of {('none',) + pot.KINDS}, got {pkind!r}")
        if "c" in p and "fraction" in p:
            raise ConfigurationError("give potential.c or potential.fraction, not both")
        strength = _nonneg(p["c"], "potential.c") if "c" in p else None
        fraction = _nonneg(p["fraction"], "potential.fraction") if "fraction" in p else None
        if fraction is not None and pkind not in ("hardy_origin", "hardy_boundary"):
            raise ConfigurationError("potential.fraction needs a Hardy potential")
        if pkind in ("hardy_origin", "hardy_boundary", "bounded_constant") and strength is None and fraction is None:
            raise ConfigurationError(f"potential {pkind} needs c or fraction")
        trunc = _positive(p["truncation"], "potential.truncation") if p.get("truncation") is not None else None
        path = p.get("path")
        if pkind == "tabulated":
            if not path:
                raise ConfigurationError("tabulated potential needs a path")
            path = str((base / path) if base is not None and not Path(path).is_absolute() else path)
        s = _section(raw, "solver")
        a = _section(raw, "analysis")
        units = a.get("t_units", "lambda0")
        if units not in ("lambda0", "absolute"):
            raise ConfigurationError("analysis.t_units must be 'lambda0' or 'absolute'")
        cfg = cls(domain_kind=kind, lo=lo, hi=hi, n=n, alpha=alpha, potential_kind=pkind, strength=strength,
                  fraction=fraction, truncation=trunc, potential_path=path,
                  eigencount=_int(s.get("eigencount", 20), "solver.eigencount"),
                  tol=_positive(s.get("tol", 1e-9), "solver.tol"),
                  t_list=_times(a.get("t_list", cls.t_list), "analysis.t_list"),
                  heat_t=_times(a.get("heat_t", cls.heat_t), "analysis.heat_t"), t_units=units,
                  moser_k_max=_int(a.get("moser_k_max", 20), "analysis.moser_k_max"),
                  moser_q=(_positive(a["moser_q"], "analysis.moser_q") if a.get("moser_q") is not None else None),
                  ladder_k_max=_int(a.get("ladder_k_max", 32), "analysis.ladder_k_max"),
                  probes=_int(a.get("probes", 100), "analysis.probes"),
                  sobolev_probes=_int(a.get("sobolev_probes", 1000), "analysis.sobolev_probes"),
                  seed=_int(a.get("seed", 0), "analysis.seed", minimum=0),
                  r=(_positive(a["r"], "analysis.r") if a.get("r") is not None else None),
                  critical_r=(_positive(a["critical_r"], "analysis.critical_r")
                              if a.get("critical_r") is not None else None),
                  source=raw)
        if cfg.eigencount < 2:
            raise ConfigurationError("solver.eigencount must be >= 2")
        if cfg.moser_q is not None and cfg.moser_q <= 1:
            raise ConfigurationError("analysis.moser_q must be > 1")
        if cfg.ladder_k_max < 3:
            raise ConfigurationError("analysis.ladder_k_max must be >= 3")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw, base=path.parent)

    def build_grid(self) -> Grid:
        if self.domain_kind == "interval":
            return build_interval(self.lo[0], self.hi[0], self.n[0])
        return build_box(self.lo, self.hi, self.n)

    def potential_spec(self, grid: Grid):
        """``PotentialSpec`` or ``None`` for ``V = 0``."""
        k = self.potential_kind
        if k == "none":
            return None
        if k in ("hardy_origin", "hardy_boundary"):
            cs = pot.critical_constant(k, grid.dim, self.alpha)
            c = self.fraction * cs if self.fraction is not None else self.strength
            return pot.PotentialSpec(kind=k, strength=c, alpha=self.alpha, critical=cs, truncation=self.truncation)
        if k == "bounded_constant":
            return pot.PotentialSpec(kind=k, strength=self.strength, truncation=self.truncation)
        values = pot.load_tabulated(self.potential_path, grid)
        return pot.PotentialSpec(kind=k, strength=1.0 if self.strength is None else self.strength,
                                 truncation=self.truncation, values=values)


def _section(raw, name, required=False):
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigurationError(f"config section {name!r} is required")
        return {}
    if not isinstance(sec, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    return sec


def _int(v, name, minimum=1):
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {v!r}")
    return v


def _num(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigurationError(f"{name} must be a finite number, got {v!r}")
    return float(v)


def _positive(v, name):
    v = _num(v, name)
    if not v > 0:
        raise ConfigurationError(f"{name} must be > 0, got {v}")
    return v


def _nonneg(v, name):
    v = _num(v, name)
    if v < 0:
        raise ConfigurationError(f"{name} must be >= 0, got {v}")
    return v


def _times(v, name):
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigurationError(f"{name} must be a nonempty list")
    return tuple(_positive(t, name) for t in v)


class Pipeline:
    """Lazily computed stages shared between subcommands."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.grid = cfg.build_grid()
        self.pspec = cfg.potential_spec(self.grid)
        self.V = pot.evaluate(self.pspec, self.grid) if self.pspec is not None else np.zeros(self.grid.size)
        self.report: dict = {}
        self.flags: dict = {}
        self.soft_flags: dict = {}
        self._cache: dict = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def form(self) -> NonlocalForm:
        return self._get("form", lambda: assemble(self.grid, self.cfg.alpha))

    @property
    def spectrum(self):
        m = min(self.cfg.eigencount, self.grid.size)
        return self._get("spec", lambda: sp.eigensolve(self.form, self.V, m=m, tol=self.cfg.tol))

    @property
    def full_spectrum(self):
        return self._get("full", lambda: sp.eigensolve(self.form, self.V, tol=self.cfg.tol))

    @property
    def xi(self):
        return self._get("xi", lambda: sp.torsion(self.form, self.V))

    @property
    def free_green(self):
        return self._get("green", lambda: sp.green_matrix(self.form, None))

    def times(self, ts):
        if self.cfg.t_units == "absolute":
            return list(ts)
        return [t / self.spectrum.lambda0 for t in ts]

    @property
    def ledger(self):
        def build():
            led, doob, _ = db.build_ledger(self.form, self.V, r=self.cfg.r, t_list=self.times(self.cfg.t_list),
                                           n_random=self.cfg.sobolev_probes, seed=self.cfg.seed,
                                           free_green=self.free_green)
            return led, doob
        return self._get("ledger", build)

    def potential_info(self):
        p = self.pspec
        if p is None:
            return {"kind": "none"}
        return {"kind": p.kind, "c": p.strength, "critical": p.critical, "fraction": p.fraction,
                "truncation": p.truncation}

    def run_assemble(self, out: Path):
        f = self.form
        export_form(f, out / "form.bin")
        self.report["assemble"] = {
            "size": f.size, "normalization": f.normalization, "markov": f.is_markov(),
            "killing_min": float(f.killing.min()), "killing_max": float(f.killing.max()),
            "relative_bound": pot.relative_bound(f, self.V), "potential": self.potential_info(),
        }
        self.flags["markov"] = f.is_markov()

    def run_eigen(self, out: Path):
        s = self.spectrum
        self.report["eigen"] = {"lambda0": s.lambda0, "gap": s.gap, "eigenvalues": s.eigenvalues.tolist(),
                                "relative_bound": s.relative_bound, "max_residual": s.max_residual,
                                "indefinite": s.indefinite}
        _write_csv(out / "spectrum.csv", ["k", "lambda"], [(k, l) for k, l in enumerate(s.eigenvalues)])
        self.flags["ground_state_positive"] = bool(np.all(s.ground_state > 0))

    def run_torsion(self, out: Path):
        xi = self.xi
        c = self.grid.center_index()
        self.report["torsion"] = {"max": float(xi.max()), "center": float(xi[c]), "min": float(xi.min()),
                                  "l2_norm": float(np.sqrt(np.sum(self.form.mass * xi**2)))}
        self.flags["torsion_positive"] = bool(np.all(xi > 0))

    def run_compare(self, out: Path):
        f, s, xi = self.form, self.spectrum, self.xi
        led, doob = self.ledger
        fg = self.free_green
        rep = db.compare(s, xi, led, doob)
        probes = db.doob_probes(doob, self.cfg.probes, seed=self.cfg.seed, extra=[fg.ground_state / doob.w])
        checks = [
            db.hardy_check(f, fg.ground_state, led.C_H, probes),
            db.w_lower_bound_check(doob, led, fg.ground_state),
            db.l2_estimate_check(doob, led, probes),
            db.lambda_check(doob, led, probes),
            db.is1_check(doob, led, probes),
        ]
        alt = db.l2_estimate_check(doob, led, probes, constant=led.C_H / led.C0**2)
        green_V = sp.green_matrix(f, self.V, spectral=s) if np.any(self.V) else fg
        identities = {
            "ground_state_representation": sp.ground_state_representation_residual(f, self.V, s, fg),
            "conjugation": doob.identity_error,
            "conjugated_spectrum": db.conjugated_spectrum_error(doob),
            "green_domination_min": float(np.min(green_V.G - fg.G)),
        }
        self.report["compare"] = {"ledger": led.to_dict(), "comparison": rep.to_dict(),
                                  "checks": [c.to_dict() for c in checks + [alt]], "identities": identities,
                                  "C_G_V": green_V.C_G}
        for c in checks:
            self.flags[c.name] = c.passed
        self.soft_flags[alt.name] = alt.passed
        self.flags["compare_upper"] = rep.upper_ok
        self.flags["compare_lower"] = rep.lower_ok
        self.flags["green_domination"] = identities["green_domination_min"] >= -1e-12 * float(np.max(fg.G))
        self.flags["exact_identities"] = bool(max(identities["ground_state_representation"],
                                                  identities["conjugation"],
                                                  identities["conjugated_spectrum"]) <= 1e-8)

    def run_heat(self, out: Path):
        s = self.full_spectrum
        xi = self.xi
        rows, entries = [], []
        for t in self.times(self.cfg.heat_t):
            p = sp.heat_kernel(s, t)
            lo, hi = sp.iuc_ratio(p, s.ground_state, s.lambda0, t)
            try:
                lam = sp.lambda_from_heat(p, xi, t)
            except NumericalError:
                lam = float("nan")
            rows.append((t, lo, hi, lam))
            entries.append({"t": t, "ratio_min": lo, "ratio_max": hi, "lambda_est": lam,
                            "lambda_bound": sp.lambda_from_heat_bound(p, s.ground_state, xi, s.lambda0, t)})
        t_semi = self.times([1.0])[0]
        self.report["heat"] = {"lambda0": s.lambda0, "gap": s.gap, "times": entries,
                               "semigroup_residual": sp.semigroup_residual(s, t_semi, 0.5 * t_semi)}
        _write_csv(out / "heat.csv", ["t", "ratio_min", "ratio_max", "lambda_est"], rows)
        self.flags["semigroup_law"] = self.report["heat"]["semigroup_residual"] <= 1e-8

    def run_moser(self, out: Path):
        led, _ = self.ledger
        s, xi = self.spectrum, self.xi
        q = self.cfg.moser_q if self.cfg.moser_q is not None else led.q
        rho = xi / s.ground_state
        theta = db.moser_ladder(rho, s.ground_state, q, self.cfg.moser_k_max, self.form.mass)
        tM, M = led.M_inf()
        ok, factor = db.moser_step_check(theta, q, M)
        j = 2.0 * q ** np.arange(theta.size)
        self.report["moser"] = {"q": q, "M": M, "t_M": tM, "theta": theta.tolist(), "rho_max": float(rho.max()),
                                "theta_last_over_max": float(theta[-1] / rho.max()),
                                "monotone": bool(np.all(np.diff(theta) >= -1e-12 * theta[:-1])),
                                "step_ok": ok.tolist()}
        _write_csv(out / "moser.csv", ["k", "j_k", "theta_k"], [(k, j[k], theta[k]) for k in range(theta.size)])
        self.soft_flags["moser_steps"] = bool(np.all(ok))
        self.flags["moser_monotone"] = self.report["moser"]["monotone"]

    def run_critical(self, out: Path):
        f = self.form
        fg = self.free_green
        L = crit.run_ladder(f, self.V, self.cfg.ladder_k_max, free_green=fg)
        lb = crit.critical_lower_bound_check(L, fg, self.cfg.alpha)
        singular = self._singular_mask()
        r = self.cfg.critical_r
        if r is None and not self.cfg.alpha < self.grid.dim:
            r = self.cfg.r if self.cfg.r is not None else 2.0
        sharp = crit.critical_sharp_comparison(L, f, r=r, exclude=singular, t_list=self.times(self.cfg.t_list),
                                               n_random=self.cfg.sobolev_probes, seed=self.cfg.seed,
                                               free_green=fg)
        sign_min = crit.sign_preservation_check(f, L.V_last, np.ones(f.size))
        try:
            t_heat, lam_heat = crit.limit_heat_lambda(L)
        except NumericalError:
            t_heat, lam_heat = 30.0 / L.lambda_star, float("nan")
        self.report["critical"] = {
            **L.to_dict(),
            "lower_bound": lb.__dict__,
            "sharp": {k: v for k, v in sharp.__dict__.items()},
            "sign_min": sign_min,
            "heat": {"t": t_heat, "lambda_est": lam_heat},
        }
        rows = [(int(k), l, c, d, w) for k, l, c, d, w in
                zip(L.k, L.lambdas, L.kappas, np.append(L.phi_diff, np.nan), L.w_constants)]
        _write_csv(out / "ladder.csv", ["k", "lambda0", "kappa", "phi_diff", "C0"], rows)
        self.soft_flags["ladder_decreasing"] = bool(np.all(np.diff(L.lambdas) < 0)) or not np.any(self.V)
        self.soft_flags["critical_sharp_upper"] = sharp.upper_ok
        self.soft_flags["critical_sharp_lower"] = sharp.lower_ok

    def _singular_mask(self):
        if self.pspec is not None and self.pspec.kind == "hardy_origin":
            return np.linalg.norm(self.grid.coords, axis=1) < self.grid.h
        return np.zeros(self.grid.size, dtype=bool)

    def write_nodes(self, out: Path):
        g = self.grid
        phi, xi = self.spectrum.ground_state, self.xi
        names = ["x"] if g.dim == 1 else ["x", "y"]
        cols = [g.coords[:, k] for k in range(g.dim)] + [g.delta, self.V, phi, xi, xi / phi]
        _write_csv(out / "nodes.csv", names + ["delta", "V", "phi0", "xi", "rho"], list(zip(*cols)))


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return FLOAT % float(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def run(subcommand: str, config_path, out=None, strict: bool = False) -> int:
    """Run one subcommand; returns the process exit code."""
    try:
        if subcommand not in SUBCOMMANDS:
            raise ConfigurationError(f"unknown subcommand {subcommand!r}; expected one of {SUBCOMMANDS}")
        cfg = RunConfig.load(config_path)
        pipe = Pipeline(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    out = Path(out) if out is not None else Path("out")
    stages = {
        "assemble": ["assemble"],
        "eigen": ["eigen"],
        "torsion": ["torsion"],
        "compare": ["eigen", "torsion", "compare"],
        "heat": ["eigen", "heat"],
        "moser": ["eigen", "torsion", "moser"],
        "critical": ["critical"],
        "all": ["assemble", "eigen", "torsion", "compare", "heat", "moser", "critical"],
    }[subcommand]
    try:
        out.mkdir(parents=True, exist_ok=True)
        for stage in stages:
            getattr(pipe, f"run_{stage}")(out)
        if subcommand not in ("assemble", "critical"):
            pipe.write_nodes(out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error in {exc.module or 'unknown'}: {exc}", file=sys.stderr)
        if exc.diagnostic:
            print(f"diagnostic: {json.dumps(_jsonable(exc.diagnostic), sort_keys=True)}", file=sys.stderr)
        return 2
    strict_ok = all(pipe.flags.values())
    report = {"schema_version": SCHEMA_VERSION, "subcommand": subcommand, "config": cfg.source,
              "grid": pipe.grid.to_dict(), **pipe.report, "flags": pipe.flags, "report_flags": pipe.soft_flags,
              "strict_ok": strict_ok}
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    if strict and not strict_ok:
        failed = sorted(k for k, v in pipe.flags.items() if not v)
        print(f"strict mode: failed flags {failed}", file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fracschrod", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config", help="JSON run configuration")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")
    parser.add_argument("--strict", action="store_true", help="exit 3 when an inequality flag fails")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.out, args.strict)


if __name__ == "__main__":
    sys.exit(main())
