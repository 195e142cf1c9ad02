"""Command-line front end.

    fracflow kernel --N 1 --s 0.5 --t 1 --radii 0:3:0.05 --out runs/k
    fracflow verdict --N 2 --s 0.75 --datum dipole
    fracflow probe-radial --h 1/32,1/64 --cache-dir ~/.cache/fracflow

Every run writes <out>/<command>.csv (data) and <out>/<command>.json (report,
config echo, versions, timing). Exit status: 0 ok, 2 bad configuration, 3
numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import time
import warnings
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from importlib import metadata
from pathlib import Path

import numpy as np

from . import ball_green, cauchy, kernel, probe
from .errors import (
    ConfigError,
    ContinuationError,
    DomainError,
    GeometryError,
    InconsistencyError,
    QuadratureError,
    TruncationError,
)
from .lattice import OPERATOR_VERSION, FracOperator, SpectralData, assemble_operator, build_domain, eigendecompose
from .specfun import MediumParams

log = logging.getLogger("fracflow")

COMMANDS = ("kernel", "verdict", "green", "resolvent", "probe-radial", "probe-centro", "probe-wave", "probe-free")
DATA = {"radial": 0, "dipole": 1, "quadrupole": 2, "octupole": 3}
NUMERICAL_ERRORS = (QuadratureError, TruncationError, InconsistencyError, ContinuationError,
                    np.linalg.LinAlgError, FloatingPointError)
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# per-command defaults for fields left as None
_DEFAULTS = {
    "kernel": dict(dim=1, order=0.5, times=[1.0], radii=[i * 0.05 for i in range(61)]),
    "verdict": dict(dim=2, order=0.75, datum="dipole"),
    "green": dict(dim=1, order=0.5, radii=[0.0, 0.25, 0.75], point=[0.5]),
    "resolvent": dict(dim=2, order=0.5, datum="quadrupole", lams=[0.5, 1.0, 2.0, 4.0]),
    "probe-radial": dict(dim=2, order=0.75, domain="ball"),
    "probe-centro": dict(dim=2, order=0.75, domain="centrosymmetric_star"),
    "probe-wave": dict(dim=2, order=0.75, domain="ball", observable="grad_resolvent"),
    "probe-free": dict(dim=2, order=0.75),
}
_PROBE_FAMILY = {"ball": "radial", "centrosymmetric_star": "centro"}


@dataclass
class ExperimentConfig:
    command: str = "kernel"
    dim: int | None = None
    order: float | None = None
    times: list | None = None
    radii: list | None = None
    lams: list | None = None
    hs: list | None = None
    domain: str | None = None
    datum: str | None = None
    kind: str = "critical"
    parity: str = "even"
    observable: str | None = None
    radius: float = 1.0
    point: list | None = None
    tol: float = 1e-8
    threshold: float = 30.0
    out: str = "fracflow_out"
    cache_dir: str | None = None
    threads: int | None = None

    def resolved(self) -> "ExperimentConfig":
        """Fill per-command defaults and validate; raises ConfigError naming the broken invariant."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        pp = probe.ProbeParams()
        base = dict(times=list(pp.times), lams=list(pp.lams), hs=[pp.h, pp.h / 2])
        base.update(_DEFAULTS[self.command])
        cfg = replace(self, **{k: v for k, v in base.items() if getattr(self, k) is None})
        cfg._validate()
        return cfg

    def _validate(self):
        try:
            p = MediumParams(int(self.dim), float(self.order))
        except DomainError as exc:
            raise ConfigError(f"medium: {exc}") from None
        if self.dim > 3:
            raise ConfigError("medium: dimension must be 1, 2 or 3")
        if self.command not in ("kernel",) and p.is_local:
            raise ConfigError(f"{self.command}: order s must satisfy 0 < s < 1")
        if self.command.startswith("probe") and self.dim != 2:
            raise ConfigError("probes run on planar lattices: N must be 2")
        for name in ("times", "radii", "lams", "hs"):
            grid = getattr(self, name)
            if grid is not None and len(grid) == 0:
                raise ConfigError(f"grid {name} must be nonempty")
        if any(t <= 0 for t in self.times or ()):
            raise ConfigError("times must be positive")
        if any(lam <= 0 for lam in self.lams or ()):
            raise ConfigError("lambda values must be positive")
        if any(r < 0 for r in self.radii or ()):
            raise ConfigError("radii must be non-negative")
        if any(h <= 0 for h in self.hs or ()):
            raise ConfigError("spacings h must be positive")
        if self.hs and any(not np.isclose(b, a / 2, rtol=1e-12) for a, b in zip(self.hs, self.hs[1:])):
            raise ConfigError("the h grid must halve from one level to the next")
        if not (self.tol > 0 and self.threshold > 0 and self.radius > 0):
            raise ConfigError("tolerances, threshold and radius must be positive")
        if self.datum is not None:
            if self.datum not in DATA:
                raise ConfigError(f"unknown datum {self.datum!r}; builders: {', '.join(DATA)}")
            if self.dim == 1 and DATA[self.datum] > 1:
                raise ConfigError("in one dimension only the radial and dipole data exist")
        if self.kind not in ("critical", "zero"):
            raise ConfigError("kind must be 'critical' or 'zero'")
        if self.parity not in ("even", "odd"):
            raise ConfigError("parity must be 'even' or 'odd'")
        if self.command.startswith("probe-") and self.command != "probe-free":
            allowed = ["ball"] if self.command == "probe-radial" else ["centrosymmetric_star"]
            if self.command == "probe-wave":
                allowed = list(_PROBE_FAMILY)
            if self.domain not in allowed:
                raise ConfigError(f"{self.command}: domain must be one of {', '.join(allowed)}")
        if self.observable is not None and self.observable not in ("grad_resolvent", "value_resolvent"):
            raise ConfigError("observable must be grad_resolvent or value_resolvent")
        if self.command == "green":
            if self.point is None or len(self.point) != self.dim:
                raise ConfigError(f"green: the source point needs {self.dim} coordinates")
            if np.linalg.norm(self.point) >= self.radius or max(self.radii) >= self.radius:
                raise ConfigError("green: radii and source point must lie inside the ball")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be at least 1")

    @property
    def medium(self) -> MediumParams:
        return MediumParams(self.dim, self.order)

    def probe_params(self) -> probe.ProbeParams:
        return probe.ProbeParams(order=self.order, h=self.hs[0], times=tuple(self.times), lams=tuple(self.lams),
                                 levels=len(self.hs), threshold=self.threshold)


# -- config parsing ----------------------------------------------------------------------------------


def parse_number(text: str) -> float:
    """Decimal or fraction ('1/32')."""
    return float(Fraction(text.strip())) if "/" in text else float(text)


def parse_list(text: str) -> list:
    return [parse_number(x) for x in text.split(",") if x.strip()]


def parse_range(text: str) -> list:
    """'a:b:step' inclusive of b, or a comma list."""
    if ":" not in text:
        return parse_list(text)
    parts = [parse_number(x) for x in text.split(":")]
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise ConfigError(f"range {text!r} must read a:b:step with a <= b and step > 0")
    a, b, step = parts
    n = int(round((b - a) / step))
    return [a + i * step for i in range(n + 1)]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracflow", description="Fractional heat flow experiments")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON document with ExperimentConfig fields; flags override it")
    ap.add_argument("--N", dest="dim", type=int)
    ap.add_argument("--s", dest="order", type=parse_number)
    ap.add_argument("--t", dest="times", type=parse_list)
    ap.add_argument("--radii", type=parse_range)
    ap.add_argument("--lambda", dest="lams", type=parse_list)
    ap.add_argument("--h", dest="hs", type=parse_list)
    ap.add_argument("--domain")
    ap.add_argument("--datum")
    ap.add_argument("--kind")
    ap.add_argument("--parity")
    ap.add_argument("--observable")
    ap.add_argument("--radius", type=parse_number)
    ap.add_argument("--point", type=parse_list)
    ap.add_argument("--tol", type=parse_number)
    ap.add_argument("--threshold", type=parse_number)
    ap.add_argument("--out")
    ap.add_argument("--cache-dir", dest="cache_dir")
    ap.add_argument("--threads", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args: argparse.Namespace, environ=os.environ) -> ExperimentConfig:
    values = {}
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        for name in ("times", "lams", "hs", "point"):
            if isinstance(values.get(name), str):
                values[name] = parse_list(values[name])
        if isinstance(values.get("radii"), str):
            values["radii"] = parse_range(values["radii"])
    values["command"] = args.command
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "command":
            values[f.name] = v
    if environ.get("FRACFLOW_CACHE"):
        values["cache_dir"] = environ["FRACFLOW_CACHE"]
    return ExperimentConfig(**values)


# -- export ------------------------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def export_csv(path, header, rows) -> Path:
    """RFC-4180 CSV with a header row; floats carry 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(buf.getvalue().encode("utf-8"))
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def versions() -> dict:
    import mpmath
    import scipy

    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"fracflow": own, "operator": OPERATOR_VERSION, "numpy": np.__version__, "scipy": scipy.__version__,
            "mpmath": mpmath.__version__, "python": platform.python_version()}


# -- operator cache ---------------------------------------------------------------------------------


class CacheCorruptionWarning(UserWarning):
    pass


class OperatorCache:
    """Content-addressed .npz store for lattice operators and their spectra.

    Entries are keyed by the hash of (shape, node set, h, s, operator version)
    and carry a sha256 sidecar; a mismatch warns and the entry is rebuilt.
    """

    def __init__(self, root):
        self.root = Path(root).expanduser()
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self.corrupt = 0
        self._memo = {}

    @staticmethod
    def key(shape: str, domain_key: str, h: float, order: float) -> str:
        text = f"{shape}|{domain_key}|{h!r}|{order!r}|{OPERATOR_VERSION}"
        return hashlib.sha256(text.encode()).hexdigest()

    def _paths(self, key):
        return self.root / f"{key}.npz", self.root / f"{key}.sha256"

    def lookup(self, key: str):
        data_p, sum_p = self._paths(key)
        if not data_p.exists():
            return None
        blob = data_p.read_bytes()
        expected = sum_p.read_text().strip() if sum_p.exists() else ""
        if hashlib.sha256(blob).hexdigest() != expected:
            self.corrupt += 1
            warnings.warn(f"cache entry {key[:12]} failed its checksum; recomputing", CacheCorruptionWarning,
                          stacklevel=2)
            return None
        with np.load(io.BytesIO(blob)) as z:
            return {k: z[k] for k in z.files}

    def store(self, key: str, payload: dict):
        buf = io.BytesIO()
        np.savez(buf, **payload)
        blob = buf.getvalue()
        data_p, sum_p = self._paths(key)
        tmp = data_p.with_suffix(".tmp")
        tmp.write_bytes(blob)
        os.replace(tmp, data_p)
        sum_p.write_text(hashlib.sha256(blob).hexdigest() + "\n")

    def problem(self, spec, h: float, order: float):
        d = build_domain(spec, h)
        key = self.key(spec.shape, d.key(), h, order)
        if key in self._memo:
            return self._memo[key]
        p = MediumParams(2, order)
        t0 = time.perf_counter()
        payload = self.lookup(key)
        if payload is not None:
            self.hits += 1
            A = FracOperator(payload["matrix"], p, float(payload["consistency_tol"]), d.key(),
                             float(payload["diagonal"]))
            S = SpectralData(payload["eigenvalues"], payload["eigenvectors"])
            log.info("cache hit %s %s h=%g s=%g: assembly skipped (%.3fs)", key[:12], spec.shape, h, order,
                     time.perf_counter() - t0)
        else:
            self.misses += 1
            A = assemble_operator(d, p)
            S = eigendecompose(A, d.size)
            self.store(key, {"matrix": A.matrix, "diagonal": A.diagonal, "consistency_tol": A.consistency_tol,
                             "eigenvalues": S.eigenvalues, "eigenvectors": S.eigenvectors})
            log.info("cache miss %s %s h=%g s=%g: assembled (%.3fs)", key[:12], spec.shape, h, order,
                     time.perf_counter() - t0)
        self._memo[key] = (d, A, S)
        return self._memo[key]


# -- commands ----------------------------------------------------------------------------------------


def _datum(cfg: ExperimentConfig, support: float):
    ell = DATA[cfg.datum]
    if cfg.datum == "dipole":
        return cauchy.dipole(cfg.dim, support)
    if ell == 0:
        return cauchy.radial_bump(cfg.dim, support)
    return cauchy.harmonic_bump(cfg.dim, ell, ell if cfg.dim == 2 else 0, support=support)


def cmd_kernel(cfg):
    header = ("t", "r", "P", "method")
    rows = []
    for t in cfg.times:
        for r in cfg.radii:
            v = kernel.heat_kernel(kernel.KernelQuery(r, t, cfg.medium))
            rows.append((t, r, v.density, v.method))
    return header, rows, {"points": len(rows)}


def cmd_verdict(cfg):
    u0 = _datum(cfg, 1.0)
    tol = cfg.tol * u0.sup_norm() * u0.support**u0.dim
    verdict, ev = cauchy.stationarity_verdict(u0, cfg.medium, tol=tol, kind=cfg.kind)
    header = ("t", "response", "bound")
    rows = list(zip(ev.times, ev.responses, ev.bounds))
    return header, rows, {"verdict": verdict, "datum": cfg.datum, "kind": cfg.kind, "moment_sup": ev.moment_sup,
                          "tol": ev.tol, "route": ev.route}


def cmd_green(cfg):
    b = ball_green.BallSpec(cfg.radius, cfg.medium)
    y = np.asarray(cfg.point, dtype=float)
    header = ("r", "G", "branch")
    rows = []
    for r in cfg.radii:
        x = np.zeros(cfg.dim)
        x[0] = r
        g = ball_green.green_ball(x, y, b)
        rows.append((r, g.value, g.branch))
    return header, rows, {"point": list(cfg.point), "radius": cfg.radius}


def cmd_resolvent(cfg):
    b = ball_green.BallSpec(cfg.radius, cfg.medium)
    grid = ball_green.BallNystrom(b)
    u0 = _datum(cfg, 0.5 * cfg.radius)
    f = grid.sample(u0)
    header = ("lambda", "shifts", "terms", "max_abs", "balance")
    rows = []
    for lam in cfg.lams:
        res = ball_green.neumann_resolvent(f, lam, b, grid=grid)
        bal = float(np.max(np.abs(grid.balance_profile(res.values)))) if cfg.dim > 1 else float("nan")
        rows.append((lam, res.shifts, res.terms, float(np.max(np.abs(res.values))), bal))
    return header, rows, {"datum": cfg.datum, "nodes": grid.size}


def cmd_probe(cfg):
    params = cfg.probe_params()
    if cfg.command == "probe-radial":
        rep = probe.radial_probe(params)
    elif cfg.command == "probe-centro":
        rep = probe.centro_probe(params, cfg.parity)
    elif cfg.command == "probe-wave":
        rep = probe.wave_probe(params, cfg.observable, _PROBE_FAMILY[cfg.domain], cfg.parity)
    else:
        rep = probe.free_space_probe(params)
    summary = rep.to_dict()
    summary["separated"] = bool(rep.separation_ratio >= cfg.threshold)
    return probe.CSV_HEADER, rep.rows, summary


_RUNNERS = {"kernel": cmd_kernel, "verdict": cmd_verdict, "green": cmd_green, "resolvent": cmd_resolvent}


def _limit_threads(n):
    if n is None:
        from contextlib import nullcontext

        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def run(config: ExperimentConfig) -> int:
    """Execute one experiment; returns the exit status."""
    try:
        cfg = config.resolved()
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    cache = OperatorCache(cfg.cache_dir) if cfg.cache_dir else None
    previous = probe.use_store(cache)
    t0 = time.perf_counter()
    try:
        with _limit_threads(cfg.threads):
            header, rows, result = _RUNNERS.get(cfg.command, cmd_probe)(cfg)
    except (DomainError, GeometryError, ConfigError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        log.error("numerical failure (%s): %s", type(exc).__name__, exc)
        return EXIT_NUMERIC
    finally:
        probe.use_store(previous)
    elapsed = time.perf_counter() - t0
    out = Path(cfg.out)
    stem = cfg.command.replace("-", "_")
    export_csv(out / f"{stem}.csv", header, rows)
    timing = {"seconds": elapsed}
    if cache is not None:
        timing.update(cache_hits=cache.hits, cache_misses=cache.misses, cache_corrupt=cache.corrupt,
                      assembly_skipped=cache.hits > 0 and cache.misses == 0)
    report = {"command": cfg.command, "config": asdict(cfg), "versions": versions(), "result": result,
              "timing": timing}
    (out / f"{stem}.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n")
    log.info("%s: %d rows in %.2fs -> %s", cfg.command, len(rows), elapsed, out)
    return EXIT_OK


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        cfg = load_config(args)
    except (ConfigError, TypeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
