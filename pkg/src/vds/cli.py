"""Command line entry point.

    vds simulate CONFIG [--out DIR]
    vds sweep CONFIG --param SECTION.KEY --values V1,V2,... [--out DIR] [--jobs N]
    vds check-feasibility CONFIG
    vds fit-decay ENERGY_CSV [--config CONFIG] [--witness FORM --a A] [--t0 T0]

CONFIG is a TOML path, or ``@name`` for a bundled config (``@default``,
``@sinusoidal``, ``@powerlaw``, ``@transport``, ``@unstable``).
``VDS_OUT`` overrides the output directory.

Exit codes: 0 ok, 1 config error, 2 infeasible (check-feasibility only),
3 divergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import energy as en
from . import kernel as kn
from .config import ConfigError, RunConfig, parse_config, set_path, tomllib
from .runner import RunResult, run

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIVERGED = 0, 1, 2, 3

SWEEP_COLUMNS = ("param", "value", "verdict", "margin", "k_fit", "r2", "final_E", "status", "detail")


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("vds.configs").iterdir() if p.name.endswith(".toml"))


def read_config_text(source: str) -> str:
    if source.startswith("@"):
        name = source[1:]
        path = resources.files("vds.configs") / f"{name}.toml"
        if not path.is_file():
            raise ConfigError([f"no bundled config {name!r}; available: {', '.join(bundled_names())}"])
        return path.read_text(encoding="utf-8")
    try:
        return Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config {source}: {exc.strerror}"]) from None


def write_atomic(path: Path, text: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(text, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def fmt(x) -> str:
    """Round-trip decimal text for floats."""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def energy_csv(result: RunResult) -> str:
    lines = [",".join(en.CSV_COLUMNS)]
    lines += [",".join(repr(float(v)) for v in rec.row()) for rec in result.records]
    lines += [f"# {line}" for line in fit_lines(result)]
    return "\n".join(lines) + "\n"


def fit_lines(result: RunResult) -> list[str]:
    if result.fit is not None:
        return result.fit.as_lines()
    return [f"fit_error={result.fit_error}"]


def certificate_text(result: RunResult) -> str:
    lines = result.certificate.as_lines()
    g2 = result.g2
    if g2 is None:
        lines.append("g2=not applicable")
    else:
        lines.append("g2=holds" if g2.holds else f"g2=violated at t={g2.violation_time!r}")
    lines.append(f"witness={en.witness_label(result.config.witness)}")
    lines.append(f"dt={result.dt!r}")
    lines.append(f"steps={result.n_steps}")
    return "\n".join(lines) + "\n"


def snapshot_payload(result: RunResult, t: float, u: np.ndarray) -> tuple[str, str | bytes]:
    g = result.config.grid
    header = f"# dim={g.dim} extents={','.join(map(repr, g.extents))} counts={','.join(map(str, g.counts))} t={t!r}\n"
    stem = f"snapshot_t{t:.6f}"
    if result.config.solver.snapshot_format == "binary":
        return f"{stem}.bin", header.encode() + np.ascontiguousarray(u, dtype="<f8").tobytes()
    rows = np.atleast_2d(u) if g.dim == 2 else u.reshape(-1, 1)
    body = "\n".join(",".join(repr(float(x)) for x in row) for row in rows)
    return f"{stem}.csv", header + body + "\n"


def write_outputs(result: RunResult, out: Path) -> None:
    write_atomic(out / "energy.csv", energy_csv(result))
    write_atomic(out / "certificate.txt", certificate_text(result))
    write_atomic(out / "fit.txt", "\n".join(fit_lines(result)) + "\n")
    for t, u in result.snapshots:
        name, payload = snapshot_payload(result, t, u)
        write_atomic(out / name, payload)
    if result.consistency:
        text = "t,consistency_error\n" + "".join(f"{t!r},{err!r}\n" for t, err in result.consistency)
        write_atomic(out / "consistency.csv", text)


def out_dir(arg: str | None, default: str) -> Path:
    return Path(os.environ.get("VDS_OUT") or arg or default)


def cmd_simulate(args) -> int:
    cfg = parse_config(read_config_text(args.config))
    result = run(cfg)
    out = out_dir(args.out, "vds_out")
    write_outputs(result, out)
    print("\n".join(fit_lines(result)))
    if result.diverged:
        print(f"diverged: t={result.divergence.t!r} max_abs={result.divergence.max_abs:.3e}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_check_feasibility(args) -> int:
    cfg = parse_config(read_config_text(args.config))
    from .feasibility import certify

    cert = certify(cfg.damping, cfg.delay)
    print(cert)
    return EXIT_OK if cert.feasible else EXIT_INFEASIBLE


def parse_value(text: str):
    text = text.strip()
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _sweep_one(job: tuple[str, str, object]) -> dict:
    template, path, value = job
    row = {"param": path, "value": value, "verdict": "", "margin": "", "k_fit": "", "r2": "", "final_E": "", "status": "", "detail": ""}
    try:
        cfg = parse_config(set_path(tomllib.loads(template), path, value))
        result = run(cfg)
    except ConfigError as exc:
        row.update(status="error", detail="; ".join(exc.violations))
        return row
    except Exception as exc:  # recorded in-row; the sweep continues
        row.update(status="error", detail=f"{type(exc).__name__}: {exc}")
        return row
    row.update(
        verdict=result.certificate.verdict,
        margin=result.certificate.margin,
        final_E=result.final_energy,
        status="diverged" if result.diverged else "ok",
    )
    if result.fit is not None:
        row.update(k_fit=result.fit.k_fit, r2=result.fit.r2)
    details = []
    if result.diverged:
        details.append(f"diverged at t={result.divergence.t:.6g}")
    if result.fit_error:
        details.append(result.fit_error)
    row["detail"] = "; ".join(details)
    return row


def sweep(template: str, path: str, values: list, jobs: int | None = None) -> list[dict]:
    """Run one simulation per value; rows come back in input order."""
    if not values:
        raise ConfigError(["sweep: empty value list"])
    parse_config(template)  # template itself must be valid
    set_path({}, path, None)  # and the axis must exist
    work = [(template, path, v) for v in values]
    jobs = jobs or os.cpu_count() or 1
    if jobs == 1 or len(work) == 1:
        return [_sweep_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
        return list(pool.map(_sweep_one, work))


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([fmt(row[c]) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    template = read_config_text(args.config)
    values = [parse_value(v) for v in args.values.split(",") if v.strip()] if args.values else []
    rows = sweep(template, args.param, values, args.jobs)
    out = out_dir(args.out, "vds_sweep")
    text = sweep_csv(rows)
    write_atomic(out / "sweep.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def read_energy_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    rows = list(reader)
    if not rows or "t" not in rows[0] or "E" not in rows[0]:
        raise ConfigError([f"{path}: not an energy.csv (missing t/E columns)"])
    return np.array([float(r["t"]) for r in rows]), np.array([float(r["E"]) for r in rows])


def cmd_fit_decay(args) -> int:
    t, E = read_energy_csv(args.energy_csv)
    cfg: RunConfig | None = parse_config(read_config_text(args.config)) if args.config else None
    if args.witness:
        a = args.a if args.a is not None else (cfg.witness.a if cfg else 1.0)
        witness = kn.Constant(a) if args.witness == "constant" else kn.Hyperbolic(a)
    else:
        witness = cfg.witness if cfg else kn.Constant(args.a if args.a is not None else 1.0)
    t0 = args.t0 if args.t0 is not None else (cfg.fit_t0 if cfg else float(t[0]))
    try:
        fit = en.fit_decay(t, E, witness, t0)
    except en.FitError as exc:
        print(f"fit_error={exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("\n".join(fit.as_lines()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vds", description="Viscoelastic wave equation with delayed feedback")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one configuration")
    s.add_argument("config")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a one-parameter sweep")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="section.key, e.g. damping.a1")
    s.add_argument("--values", default="", help="comma-separated TOML values")
    s.add_argument("--out", default=None)
    s.add_argument("--jobs", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("check-feasibility", help="print the feasibility certificate")
    s.add_argument("config")
    s.set_defaults(func=cmd_check_feasibility)

    s = sub.add_parser("fit-decay", help="re-fit an energy.csv")
    s.add_argument("energy_csv")
    s.add_argument("--config", default=None)
    s.add_argument("--witness", choices=("constant", "hyperbolic"), default=None)
    s.add_argument("--a", type=float, default=None)
    s.add_argument("--t0", type=float, default=None)
    s.set_defaults(func=cmd_fit_decay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
