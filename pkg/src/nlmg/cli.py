"""Command line front end.

Configuration files are flat ``key = value`` text with sections::

    [problem]
    type = annulus          ; annulus | interval | imported
    s = 0.25
    r_in = 0.5
    r_out = 1.0
    R = 2.0
    [mesh]
    level = 4               ; h = 2^-level (or give h directly)
    [datum]
    kind = annulus          ; annulus | constants | zero
    inner_value = 0.4
    [solver]
    method = newton         ; newton | gf
    [output]
    directory = out
    formats = csv, vtk

``nlmg validate --config FILE`` prints every key with its resolved default.
Exit codes: 0 ok, 2 solver did not converge, 3 configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, MeshValidationError, SolverError

log = logging.getLogger("nlmg")

EXIT_OK, EXIT_NOCONV, EXIT_CONFIG = 0, 2, 3

# section -> key -> (type, default); None default means required
SCHEMA: dict[str, dict[str, tuple]] = {
    "problem": {"type": (str, "annulus"), "s": (float, None), "r_in": (float, 0.5),
                "r_out": (float, 1.0), "R": (float, 2.0), "a": (float, -1.0),
                "b": (float, 1.0), "mesh_file": (str, "")},
    "mesh": {"level": (int, 4), "h": (float, 0.0)},
    "datum": {"kind": (str, "annulus"), "inner_value": (float, 0.4), "bands": (str, "")},
    "solver": {"method": (str, "newton"), "tau": (float, 1.0), "alpha": (float, 0.0),
               "tol": (float, 1e-8), "max_iters": (int, 0), "scaling": (str, "auto")},
    "quadrature": {"n_sing": (int, 5), "n_reg": (int, 0), "n_theta": (int, 0),
                   "n_rad": (int, 20), "n_far": (int, 0), "far_factor": (float, 4.0)},
    "output": {"directory": (str, "out"), "formats": (str, "csv, vtk"), "seed": (int, 0)},
}
CHOICES = {("problem", "type"): ("annulus", "interval", "imported"),
           ("datum", "kind"): ("annulus", "constants", "zero"),
           ("solver", "method"): ("newton", "gf"),
           ("solver", "scaling"): ("auto", "unscaled", "cds")}
FORMATS = ("csv", "vtk")
# near s = 1/2 the scaled energy stays O(1); below this s the raw energy is used
AUTO_SCALE_S = 0.45


@dataclass
class RunConfig:
    """Resolved run configuration (every key of SCHEMA, flattened)."""

    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    @property
    def s(self) -> float:
        return self.get("problem", "s")

    @property
    def problem(self) -> str:
        return self.get("problem", "type")

    @property
    def method(self) -> str:
        return self.get("solver", "method")

    @property
    def h(self) -> float:
        h = self.get("mesh", "h")
        return h if h > 0 else 2.0 ** -self.get("mesh", "level")

    @property
    def formats(self) -> tuple:
        return tuple(f.strip() for f in self.get("output", "formats").split(",") if f.strip())

    @property
    def max_iters(self) -> int:
        m = self.get("solver", "max_iters")
        return m if m > 0 else (50 if self.method == "newton" else 200)

    def scaling(self):
        from .assembly import Scaling
        sc = self.get("solver", "scaling")
        if sc == "auto":
            sc = "cds" if self.s > AUTO_SCALE_S else "unscaled"
        return Scaling.CDS_SCALED if sc == "cds" else Scaling.UNSCALED

    def quadrature(self):
        from .quadrature import QuadratureConfig
        q = {k: self.get("quadrature", k) for k in SCHEMA["quadrature"]}
        for k in ("n_reg", "n_theta", "n_far"):
            q[k] = q[k] or None
        return QuadratureConfig(**q)

    def datum(self):
        from .femspace import DatumSpec
        kind = self.get("datum", "kind")
        if kind == "zero":
            return DatumSpec.zero()
        if kind == "annulus":
            return DatumSpec.annulus(self.get("datum", "inner_value"), self.get("problem", "r_in"))
        return DatumSpec.constants(parse_bands(self.get("datum", "bands"),
                                               self.lines.get(("datum", "bands"))))

    def stem(self, solver: str | None = None) -> str:
        """File name stem built from (problem, s, h, solver)."""
        return f"{self.problem}_s{self.s:g}_h{self.h:g}_{solver or self.method}"

    def echo(self) -> str:
        out = [f"# resolved configuration from {self.source}"]
        for sec, keys in SCHEMA.items():
            out.append(f"[{sec}]")
            for k in keys:
                v = self.values[(sec, k)]
                out.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        return "\n".join(out)


def parse_bands(text: str, line=None) -> list:
    """'lo:hi:value, lo:hi:value' -> [(lo, hi, value), ...]."""
    bands = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        parts = item.split(":")
        try:
            lo, hi, v = (float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"[datum] bands: entry {item!r} is not lo:hi:value",
                              "bands", line) from None
        if not 0 <= lo < hi:
            raise ConfigError(f"[datum] bands: need 0 <= lo < hi in {item!r}", "bands", line)
        bands.append((lo, hi, v))
    if not bands:
        raise ConfigError("[datum] kind = constants needs at least one band", "bands", line)
    return bands


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, scanned the way configparser reads."""
    out, sec = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        ln = raw.strip()
        m = re.match(r"\[([^\]]+)\]", ln)
        if m:
            sec = m.group(1).strip()
        elif sec and ln and ln[0] not in "#;" and ("=" in ln or ":" in ln):
            key = re.split(r"[=:]", ln, maxsplit=1)[0].strip()
            out.setdefault((sec, key), i)
    return out


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a configuration file; raises ConfigError with the
    offending line when one can be located."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path), overrides)


def parse_config(text: str, source: str = "<string>", overrides: dict | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}: key outside any [section]", line=exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{source}: {exc.message.splitlines()[0]}", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"{source}: malformed line {exc.errors[0][1]!s}", line=lineno) from None
    lines = _line_index(text)
    vals = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}] (known: {', '.join(SCHEMA)})",
                              line=_section_line(text, sec))
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", key, lines.get((sec, key)))
    for sec, keys in SCHEMA.items():
        for key, (typ, default) in keys.items():
            raw = (overrides or {}).get((sec, key))
            if raw is None and cp.has_option(sec, key):
                raw = cp.get(sec, key)
            if raw is None:
                if default is None:
                    raise ConfigError(f"missing required key {key!r} in [{sec}]", key)
                vals[(sec, key)] = default
                continue
            try:
                vals[(sec, key)] = typ(raw) if not isinstance(raw, typ) else raw
            except ValueError:
                raise ConfigError(f"[{sec}] {key} = {raw!r} is not a valid {typ.__name__}",
                                  key, lines.get((sec, key))) from None
    cfg = RunConfig(vals, lines, source)
    _check(cfg)
    return cfg


def _section_line(text: str, sec: str):
    for i, ln in enumerate(text.splitlines(), 1):
        if ln.strip().startswith(f"[{sec}"):
            return i
    return None


def _check(cfg: RunConfig) -> None:
    def fail(sec, key, msg):
        raise ConfigError(f"[{sec}] {key}: {msg}", key, cfg.lines.get((sec, key)))

    for (sec, key), options in CHOICES.items():
        if cfg.get(sec, key) not in options:
            fail(sec, key, f"{cfg.get(sec, key)!r} not one of {', '.join(options)}")
    s = cfg.s
    if not 0.0 < s < 0.5:
        fail("problem", "s", f"s = {s!r} outside the admissible range (0, 1/2)")
    g = cfg.get
    if cfg.problem == "annulus" and not 0 < g("problem", "r_in") < g("problem", "r_out") <= g("problem", "R"):
        fail("problem", "R", "need 0 < r_in < r_out <= R")
    if cfg.problem == "interval" and not -g("problem", "R") < g("problem", "a") < g("problem", "b") < g("problem", "R"):
        fail("problem", "R", "need -R < a < b < R")
    if cfg.problem == "imported" and not g("problem", "mesh_file"):
        fail("problem", "mesh_file", "required for type = imported")
    if g("mesh", "h") < 0:
        fail("mesh", "h", "must be positive (or 0 to use level)")
    if not 0 <= g("mesh", "level") <= 12:
        fail("mesh", "level", "must lie in 0..12")
    if g("solver", "tol") <= 0:
        fail("solver", "tol", "tolerance must be positive")
    if g("solver", "tau") <= 0:
        fail("solver", "tau", "step size must be positive")
    if not 0.0 <= g("solver", "alpha") <= 1.0:
        fail("solver", "alpha", "must lie in [0, 1]")
    if g("solver", "max_iters") < 0:
        fail("solver", "max_iters", "must be >= 0 (0 selects the default)")
    bad = [f for f in cfg.formats if f not in FORMATS]
    if bad or not cfg.formats:
        fail("output", "formats", f"unknown format(s) {bad} (known: csv, vtk)")
    if cfg.get("datum", "kind") == "constants":
        cfg.datum()
    try:
        cfg.quadrature()
    except DomainError as exc:
        raise ConfigError(f"[quadrature] {exc}") from None


# ---------------------------------------------------------------------------
# problem setup

def build_mesh(cfg: RunConfig):
    from .mesh import generate_annulus_mesh, generate_interval_mesh, import_mesh
    g = cfg.get
    if cfg.problem == "annulus":
        return generate_annulus_mesh(g("problem", "r_in"), g("problem", "r_out"),
                                     g("problem", "R"), cfg.h)
    if cfg.problem == "interval":
        a, b = g("problem", "a"), g("problem", "b")
        n = max(2, int(round((b - a) / cfg.h)))
        return generate_interval_mesh(a, b, g("problem", "R"), n)
    return import_mesh(g("problem", "mesh_file"))


def mesh_stats(mesh) -> dict:
    return {"d": mesh.d, "N": int(mesh.interior_nodes.size), "vertices": mesh.n_vertices,
            "elements": mesh.n_elements, "omega_elements": int(mesh.omega_elements.size),
            "h": float(mesh.h), "sigma": float(mesh.shape_regularity), "R": float(mesh.R)}


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.get("output", "directory"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_solution(cfg: RunConfig, u, stem: str) -> list:
    out = _outdir(cfg)
    written = []
    if "csv" in cfg.formats:
        u.to_csv(out / f"{stem}_solution.csv")
        written.append(out / f"{stem}_solution.csv")
    if "vtk" in cfg.formats:
        u.to_vtk(out / f"{stem}_solution.vtk")
        written.append(out / f"{stem}_solution.vtk")
    return written


def _metrics_rows(cfg: RunConfig, u, report=None) -> list:
    from .assembly import get_assembler
    from .metrics import catenary_reference, norm_errors
    rows = [("N", int(u.mesh.interior_nodes.size)), ("h", float(u.mesh.h))]
    asm = get_assembler(u.mesh, cfg.s, cfg.quadrature())
    rows.append(("energy", asm.energy(u)))
    rows.append(("residual", float(np.linalg.norm(asm.residual(u)))))
    vals = u.interior_values
    rows += [("u_min", float(vals.min())), ("u_max", float(vals.max()))]
    if report is not None:
        rows += [("iterations", report.iterations), ("status", report.status.value)]
    if cfg.problem == "annulus" and cfg.get("datum", "kind") == "annulus" and u.mesh.d == 2:
        try:
            cat = catenary_reference(cfg.get("datum", "inner_value"), cfg.get("problem", "r_in"),
                                     cfg.get("problem", "r_out"))
            err = norm_errors(u, cat.at_points)
            rows += [(f"{k}_vs_catenary", v) for k, v in err.items()]
        except DomainError as exc:
            log.info("no catenary reference: %s", exc)
    return rows


def _initial(cfg: RunConfig, mesh):
    from .femspace import initial_guess
    return initial_guess(cfg.datum(), mesh)


def _solve(cfg: RunConfig, mesh, method: str):
    from .solvers import damped_newton, gradient_flow
    u0 = _initial(cfg, mesh)
    kw = dict(tol=cfg.get("solver", "tol"), config=cfg.quadrature(), scaling=cfg.scaling())
    if method == "newton":
        max_it = cfg.max_iters
        return damped_newton(u0, cfg.s, max_iters=max_it, **kw)
    max_it = cfg.get("solver", "max_iters") or 200
    return gradient_flow(u0, cfg.s, tau=cfg.get("solver", "tau"),
                         alpha=cfg.get("solver", "alpha"), max_iters=max_it, **kw)


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(cfg.echo())
    mesh = build_mesh(cfg)
    st = mesh_stats(mesh)
    print("# dry-run mesh statistics")
    print(f"N = {st['N']}")
    print(f"h = {st['h']!r}")
    print(f"sigma = {st['sigma']!r}")
    print(f"vertices = {st['vertices']}")
    print(f"elements = {st['elements']}")
    return EXIT_OK


def cmd_mesh(args) -> int:
    from .mesh import write_text, write_vtk
    cfg = load_config(args.config)
    mesh = build_mesh(cfg)
    out = _outdir(cfg)
    stem = f"{cfg.problem}_h{cfg.h:g}"
    write_text(mesh, out / f"{stem}_mesh.txt")
    if "vtk" in cfg.formats:
        write_vtk(mesh, out / f"{stem}_mesh.vtk")
    write_rows(out / f"{stem}_mesh_stats.csv", ["quantity", "value"], mesh_stats(mesh).items())
    for k, v in mesh_stats(mesh).items():
        print(f"{k} = {v}")
    return EXIT_OK


def _run_solver(args, method: str | None) -> int:
    cfg = load_config(args.config, _cli_overrides(args))
    method = method or cfg.method
    mesh = build_mesh(cfg)
    u, report = _solve(cfg, mesh, method)
    stem = cfg.stem(method)
    out = _outdir(cfg)
    _write_solution(cfg, u, stem)
    report.to_csv(out / f"{stem}_report.csv")
    write_rows(out / f"{stem}_metrics.csv", ["quantity", "value"], _metrics_rows(cfg, u, report))
    print(f"{method}: status={report.status.value} iterations={report.iterations} "
          f"residual={report.residual_history[-1]:.3e} energy={report.energy_history[-1]:.12g}")
    print(f"wall time {report.wall_time:.1f} s; outputs in {out}/{stem}_*")
    return EXIT_OK if report.converged else EXIT_NOCONV


def cmd_solve(args) -> int:
    return _run_solver(args, None)


def cmd_flow(args) -> int:
    return _run_solver(args, "gf")


def _read_solution(mesh, path):
    from .femspace import DiscreteFunction
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    vals = np.array([float(r[-1]) for r in rows[1:]])
    if vals.size != mesh.n_vertices:
        raise ConfigError(f"{path}: {vals.size} values for a mesh with {mesh.n_vertices} vertices")
    return DiscreteFunction(mesh, vals)


def cmd_energy(args) -> int:
    from .assembly import get_assembler
    cfg = load_config(args.config, _cli_overrides(args))
    mesh = build_mesh(cfg)
    u = _read_solution(mesh, args.solution) if args.solution else _initial(cfg, mesh)
    asm = get_assembler(mesh, cfg.s, cfg.quadrature())
    E = asm.energy(u)
    r = float(np.linalg.norm(asm.residual(u)))
    stem = cfg.stem("energy")
    write_rows(_outdir(cfg) / f"{stem}.csv", ["quantity", "value"], [("energy", E), ("residual", r)])
    print(f"energy = {E!r}\nresidual = {r!r}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .metrics import geometric_error_es
    cfg = load_config(args.config, _cli_overrides(args))
    mesh = build_mesh(cfg)
    u = _read_solution(mesh, args.solution)
    rows = _metrics_rows(cfg, u)
    if args.reference:
        v = _read_solution(mesh, args.reference)
        br = geometric_error_es(v, u, cfg.s, cfg.quadrature())
        rows += [("es_squared_direct", br.es_squared_direct),
                 ("es_squared_orthogonality", br.es_squared_ortho),
                 ("e_classical", br.e_classical)]
    write_rows(_outdir(cfg) / f"{cfg.stem('metrics')}.csv", ["quantity", "value"], rows)
    for k, v in rows:
        print(f"{k} = {v}")
    return EXIT_OK


def _study_config(args) -> RunConfig:
    if args.config:
        return load_config(args.config, _cli_overrides(args))
    text = "[problem]\ns = %r\n" % (args.s if args.s is not None else 0.25)
    return parse_config(text, "<study defaults>", _cli_overrides(args))


def cmd_study(args) -> int:
    from . import metrics
    out_dir = Path(args.out or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.kind == "rate":
        cfg = _study_config(args)
        table = metrics.StudyTable()
        cat = metrics.catenary_reference(cfg.get("datum", "inner_value"),
                                         cfg.get("problem", "r_in"), cfg.get("problem", "r_out"))
        hs, errs, status = [], [], EXIT_OK
        for lvl in args.levels:
            ov = _cli_overrides(args)
            ov[("mesh", "level")] = int(lvl)
            ov[("mesh", "h")] = 0.0
            c = parse_config("[problem]\ns = %r\n" % cfg.s, "<study>", {**_as_overrides(cfg), **ov})
            mesh = build_mesh(c)
            u, rep = _solve(c, mesh, c.method)
            if not rep.converged:
                status = EXIT_NOCONV
            err = metrics.norm_errors(u, cat.at_points)["L1"]
            table.add("L1", c.s, c.h, err, 0.0)
            hs.append(c.h)
            errs.append(err)
            print(f"h = {c.h:g}: L1 error {err:.6e} ({rep.status.value}, {rep.iterations} iterations)")
        if len(hs) >= 2:
            slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
            table.add("slope", cfg.s, min(hs), slope, 2.0)
            print(f"least-squares rate {slope:.4f}")
        stem = f"study_rate_{cfg.problem}_s{cfg.s:g}_{cfg.method}"
    elif args.kind == "limit":
        u, v = smooth_pair_1d(args.n)
        table = metrics.limit_study(u, v, args.s_list)
        for r in table.rows:
            print(f"{r['quantity']:12s} s={r['s']:<8g} value={r['value']:.8f} "
                  f"reference={r['reference']:.8f} gap={r['gap']:.3e}")
        stem = f"study_limit_interval_h{2.0 / args.n:g}"
    else:
        u, _ = smooth_pair_1d(args.n)
        pts = np.asarray(args.points, dtype=float)
        table = metrics.normals_study(u, pts[:, None], args.s_list)
        for r in table.rows:
            print(f"{r['quantity']:10s} s={r['s']:<8g} gap={r['gap']:.3e}")
        stem = f"study_normals_interval_h{2.0 / args.n:g}"
    table.to_csv(out_dir / f"{stem}.csv")
    table.to_dat(out_dir / f"{stem}.dat")
    return status if args.kind == "rate" else EXIT_OK


def smooth_pair_1d(n: int = 64, R: float = 2.0):
    """Fixed smooth compactly supported pair on Omega = (-1, 1): a bump and
    half of it, both interpolated on a uniform mesh with n elements."""
    from .femspace import DiscreteFunction
    from .mesh import generate_interval_mesh
    mesh = generate_interval_mesh(-1.0, 1.0, R, n)
    x = mesh.vertices[:, 0]
    bump = np.where(np.abs(x) < 1.0, (1.0 - x * x) ** 2, 0.0)
    return DiscreteFunction(mesh, 0.6 * bump), DiscreteFunction(mesh, 0.3 * bump)


def cmd_oracle(args) -> int:
    from . import oracle
    from .assembly import get_assembler
    from .femspace import DatumSpec, DiscreteFunction, exterior_clement
    from .mesh import generate_interval_mesh
    out_dir = Path(args.out or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    g = DatumSpec.constants([(1.0, 1.5, 0.5)])
    mesh = generate_interval_mesh(-1.0, 1.0, 2.0, args.n)
    base = exterior_clement(g, mesh)
    rows = []
    for s in args.s_list:
        asm = get_assembler(mesh, s)
        for k in range(args.samples):
            vals = base.values.copy()
            vals[mesh.interior_nodes] = rng.uniform(-1.0, 1.0, mesh.interior_nodes.size)
            u = DiscreteFunction(mesh, vals)
            Ea = asm.energy(u)
            Eb = oracle.brute_force_energy_1d(u, None, s)
            rows.append({"check": "energy", "s": float(s), "sample": k, "assembly": Ea,
                         "oracle": Eb, "rel_error": abs(Ea - Eb) / abs(Eb)})
            print(f"s={s:g} sample {k}: assembly {Ea:.10f} oracle {Eb:.10f} "
                  f"rel {rows[-1]['rel_error']:.2e}")
    oracle.write_report(rows, out_dir / f"oracle_interval_h{2.0 / args.n:g}_energy.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument handling

class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 3), keeping 2 for
    non-convergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _cli_overrides(args) -> dict:
    ov = {}
    for name, key in (("s", ("problem", "s")), ("tau", ("solver", "tau")),
                      ("level", ("mesh", "level")), ("out", ("output", "directory")),
                      ("method", ("solver", "method"))):
        v = getattr(args, name, None)
        if v is not None:
            ov[key] = v
    return ov


def _as_overrides(cfg: RunConfig) -> dict:
    return dict(cfg.values)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nlmg", description="Finite elements for nonlocal minimal graphs.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker count (NLMG_THREADS overrides; default all cores)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(name, func, help_, required=True):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=required, help="configuration file")
        sp.add_argument("--s", type=float, default=None, help="override [problem] s")
        sp.add_argument("--level", type=int, default=None, help="override [mesh] level")
        sp.add_argument("--out", default=None, help="override [output] directory")
        sp.set_defaults(func=func)
        return sp

    with_config("validate", cmd_validate, "echo the resolved configuration and mesh statistics")
    with_config("mesh", cmd_mesh, "generate the mesh and write it")
    sp = with_config("solve", cmd_solve, "run the configured solver")
    sp.add_argument("--method", choices=("newton", "gf"), default=None)
    sp = with_config("flow", cmd_flow, "run the gradient flow")
    sp.add_argument("--tau", type=float, default=None)
    sp = with_config("energy", cmd_energy, "energy and residual of a function")
    sp.add_argument("--solution", default=None, help="solution CSV (default: initial guess)")
    sp = with_config("metrics", cmd_metrics, "error metrics of a solution")
    sp.add_argument("--solution", required=True)
    sp.add_argument("--reference", default=None, help="reference solution CSV on the same mesh")

    st = sub.add_parser("study", help="convergence and limit studies")
    st.add_argument("kind", choices=("rate", "limit", "normals"))
    st.add_argument("--config", default=None)
    st.add_argument("--s", type=float, default=None)
    st.add_argument("--levels", type=int, nargs="+", default=[2, 3, 4])
    st.add_argument("--s-list", type=float, nargs="+", default=[0.3, 0.4, 0.45, 0.49])
    st.add_argument("--points", type=float, nargs="+", default=[-0.55, -0.2, 0.05, 0.3, 0.65])
    st.add_argument("--n", type=int, default=64, help="elements in Omega for 1d studies")
    st.add_argument("--method", choices=("newton", "gf"), default=None)
    st.add_argument("--out", default=None)
    st.set_defaults(func=cmd_study)

    orc = sub.add_parser("oracle", help="compare assembly energies with brute-force values")
    orc.add_argument("--s-list", type=float, nargs="+", default=[0.1, 0.25, 0.4])
    orc.add_argument("--samples", type=int, default=3)
    orc.add_argument("--n", type=int, default=8)
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--out", default=None)
    orc.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        from .parallel import set_threads
        set_threads(args.threads)
        if getattr(args, "kind", None) == "rate" and args.s is not None and not 0 < args.s < 0.5:
            raise ConfigError(f"s = {args.s!r} outside the admissible range (0, 1/2)", "s")
        for sv in getattr(args, "s_list", None) or ():
            if not 0 < sv < 0.5:
                raise ConfigError(f"s = {sv!r} outside the admissible range (0, 1/2)", "s")
        return args.func(args)
    except ConfigError as exc:
        print(f"nlmg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, MeshValidationError) as exc:
        print(f"nlmg: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"nlmg: solver failure: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
