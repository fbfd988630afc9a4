"""Command-line front end: config handling, experiment orchestration, output.

Commands map one-to-one onto the experiment routines:

  run      one sweep on one instance (optional trajectory dump)
  profile  curvature-versus-lambda table for offline control / plotting
  sweep-t  P(T) curves for both controllers on one instance -> fig2_curve.csv
  scaling  mean time-to-target versus qubit count        -> fig3_scaling.csv
  deltap   mean relative improvement versus gain          -> fig4_deltap.csv

Every value a command uses is resolved as flag > config file > default and
echoed, with its provenance, into <out>/manifest.json next to the tables,
so a run is reproducible from its own output directory.  Output files are
written to a temporary name and renamed into place; floats are serialized
with repr (round-trip exact).  Exit codes: 0 ok, 2 usage, 3 numerical
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import evolution as evo
from . import experiments as xp
from . import hamiltonians as ham
from . import spectral
from .errors import ProfileFormatError, SimulationError

OUTDIR_ENV = "AQCSIM_OUTDIR"

__all__ = ["RunConfig", "parse_config", "emit_tables", "replay_profile", "main"]


def _int_list(text: str):
    return tuple(int(tok) for tok in text.split(","))


def _float_list(text: str):
    """Comma-separated values, or lo:hi:count for a geometric grid."""
    if ":" in text:
        lo, hi, count = text.split(":")
        return tuple(np.geomspace(float(lo), float(hi), int(count)))
    return tuple(float(tok) for tok in text.split(","))


def _bool(text: str):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# Option registry: key -> (converter, help).  Keys double as config-file keys
# and as --flags with dashes.  A key is available to the commands listed in
# _COMMAND_OPTIONS below; defaults live in _DEFAULTS.
_CONVERTERS = {
    "n": int,
    "seed": int,
    "epsilon": _float_list,
    "controller": str,
    "t_total": float,
    "k": float,
    "curvature_floor": float,
    "source": str,
    "replay": str,
    "steps": int,
    "sample_stride": int,
    "resolution": int,
    "t_min": float,
    "t_max": float,
    "t_points": int,
    "t_units": str,
    "n_values": _int_list,
    "samples": int,
    "master_seed": int,
    "target_p": float,
    "k_grid": _float_list,
    "out": str,
    "plots": _bool,
    "workers": int,
}

_COMMON = ("out", "plots", "workers")
_COMMAND_OPTIONS = {
    "run": _COMMON
    + ("n", "seed", "epsilon", "controller", "t_total", "k", "curvature_floor",
       "source", "replay", "steps", "sample_stride"),
    "profile": _COMMON + ("n", "seed", "epsilon", "resolution"),
    "sweep-t": _COMMON
    + ("n", "seed", "epsilon", "steps", "curvature_floor",
       "t_min", "t_max", "t_points", "t_units"),
    "scaling": _COMMON
    + ("n_values", "samples", "master_seed", "target_p", "steps"),
    "deltap": _COMMON + ("n", "samples", "master_seed", "k_grid", "steps"),
}

_DEFAULTS = {
    "out": None,  # resolved against the environment below
    "plots": False,
    "workers": 0,
    "n": 2,
    "seed": 7,
    "epsilon": None,
    "controller": "linear",
    "t_total": None,
    "k": None,
    "curvature_floor": None,
    "source": "live",
    "replay": None,
    "steps": 2048,
    "sample_stride": 0,
    "resolution": 1024,
    "t_min": 0.5,
    "t_max": 2.0,
    "t_points": 16,
    "t_units": "tad",
    "n_values": (2, 3, 4, 5),
    "samples": 100,
    "master_seed": 7,
    "target_p": 0.9,
    "k_grid": tuple(np.geomspace(3e-3, 3.0, 13)),
}

_HELP = {
    "n": "qubit count",
    "seed": "instance seed",
    "epsilon": "explicit coupling list c1,c2,... (overrides sampling)",
    "controller": "linear or feedback",
    "t_total": "total sweep time (linear controller)",
    "k": "controller gain (feedback controller)",
    "curvature_floor": "pace floor on |c2| (default: 1e-6 of the profile max)",
    "source": "curvature source for feedback: live or replay",
    "replay": "path to a (lambda, c2) profile CSV for --source replay",
    "steps": "number of schedule cells",
    "sample_stride": "trajectory rows every N nodes (0 = no dump)",
    "resolution": "number of lambda samples",
    "t_min": "smallest sweep time in the grid",
    "t_max": "largest sweep time in the grid",
    "t_points": "number of grid points",
    "t_units": "'tad' (multiples of the adiabatic time) or 'abs'",
    "n_values": "comma-separated qubit counts, e.g. 2,3,4,5",
    "samples": "instances per ensemble cell",
    "master_seed": "seed from which all instance seeds derive",
    "target_p": "success probability to reach",
    "k_grid": "gain values: comma list or lo:hi:count (geometric)",
    "out": f"output directory (default ${OUTDIR_ENV} or ./aqcsim_out)",
    "plots": "also write simple SVG line plots",
    "workers": "process-pool size for ensembles (0 = in-process)",
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict
    provenance: dict  # key -> "flag" | "config" | "default"

    def __getitem__(self, key):
        return self.values[key]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aqcsim",
        description="Annealing-schedule simulator with curvature feedback",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command, keys in _COMMAND_OPTIONS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="key = value file; flags take precedence")
        for key in keys:
            flag = "--" + key.replace("_", "-")
            if key == "plots":
                p.add_argument(flag, action="store_const", const=True,
                               default=None, help=_HELP[key])
            else:
                p.add_argument(flag, type=_CONVERTERS[key], default=None,
                               help=_HELP[key])
    return parser


def _read_config_file(path: str) -> dict:
    """Flat `key = value` lines; blank lines and # comments ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, text = line.partition("=")
            values[key.strip().replace("-", "_")] = text.strip()
    return values


def _validate(command: str, v: dict) -> None:
    """Reject combinations the commands cannot honor, field by field."""
    if command == "run":
        if v["controller"] == "linear":
            if v["t_total"] is None:
                raise ValueError("--t-total is required for --controller linear")
            for bad in ("k", "curvature_floor", "replay"):
                if v[bad] is not None:
                    raise ValueError(
                        f"--{bad.replace('_', '-')} is not valid for --controller linear"
                    )
        elif v["controller"] == "feedback":
            if v["k"] is None:
                raise ValueError("--k is required for --controller feedback")
            if v["t_total"] is not None:
                raise ValueError("--t-total is not valid for --controller feedback")
            if (v["source"] == "replay") != (v["replay"] is not None):
                raise ValueError("--source replay and --replay must be used together")
        else:
            raise ValueError(f"unknown controller {v['controller']!r}")
    if command == "sweep-t" and v["t_units"] not in ("tad", "abs"):
        raise ValueError("--t-units must be 'tad' or 'abs'")
    if "epsilon" in v and v["epsilon"] is not None and "n" in v:
        want = 2 ** v["n"] - 1
        if len(v["epsilon"]) != want:
            raise ValueError(f"--epsilon needs {want} values for n={v['n']}")


def parse_config(argv=None) -> RunConfig:
    """Resolve flags over config-file values over defaults, then validate."""
    ns = _build_parser().parse_args(argv)
    command = ns.command
    keys = _COMMAND_OPTIONS[command]
    file_values = _read_config_file(ns.config) if ns.config else {}
    unknown = set(file_values) - set(keys)
    if unknown:
        raise ValueError(
            f"config keys not accepted by '{command}': {', '.join(sorted(unknown))}"
        )
    values, provenance = {}, {}
    for key in keys:
        flag_value = getattr(ns, key)
        if flag_value is not None:
            values[key], provenance[key] = flag_value, "flag"
        elif key in file_values:
            values[key] = _CONVERTERS[key](file_values[key])
            provenance[key] = "config"
        else:
            values[key], provenance[key] = _DEFAULTS[key], "default"
    if values["out"] is None:
        values["out"] = os.environ.get(OUTDIR_ENV, "aqcsim_out")
        if provenance["out"] == "default" and OUTDIR_ENV in os.environ:
            provenance["out"] = f"env:{OUTDIR_ENV}"
    _validate(command, values)
    return RunConfig(command=command, values=values, provenance=provenance)


def _format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit_tables(results: dict, out_dir: str, manifest: dict | None = None):
    """Write CSV tables (and the manifest) atomically into out_dir.

    results maps file name -> (column names, row iterable).  Rows may be
    empty; the header is still written so downstream tooling sees the
    schema.  Returns the written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, (columns, rows) in results.items():
        lines = [",".join(columns)]
        lines.extend(",".join(_format_cell(cell) for cell in row) for row in rows)
        path = os.path.join(out_dir, name)
        _atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)
    if manifest is not None:
        path = os.path.join(out_dir, "manifest.json")
        _atomic_write(path, json.dumps(manifest, indent=2, default=str) + "\n")
        written.append(path)
    return written


def _manifest(cfg: RunConfig, results: dict | None = None) -> dict:
    doc = {
        "tool": "aqcsim",
        "version": __version__,
        "command": cfg.command,
        "config": {
            key: {"value": cfg.values[key], "source": cfg.provenance[key]}
            for key in sorted(cfg.values)
        },
    }
    if results:
        doc["results"] = results
    return doc


def replay_profile(path: str):
    """Load a (lambda, c2) CSV for offline-control feedback runs.

    The lambda column must descend strictly from 1 to 0.  Extra columns
    beyond the second are ignored (the profile command writes c2_pair
    there).  Returns (lams, c2) arrays; interpolation between rows is the
    evolution module's job.
    """
    lams, c2s = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split(",")
            if lineno == 1 and any(
                not _is_number(tok) for tok in tokens[:2]
            ):
                continue  # header row
            if len(tokens) < 2:
                raise ProfileFormatError("expected at least two columns", line=lineno)
            try:
                lam, c2 = float(tokens[0]), float(tokens[1])
            except ValueError:
                raise ProfileFormatError(
                    f"non-numeric row: {line!r}", line=lineno
                ) from None
            if lams and lam >= lams[-1]:
                raise ProfileFormatError(
                    f"lambda must descend strictly (got {lam} after {lams[-1]})",
                    line=lineno,
                )
            lams.append(lam)
            c2s.append(c2)
    if len(lams) < 2:
        raise ProfileFormatError(f"{path}: profile needs at least two rows")
    if lams[0] != 1.0 or lams[-1] != 0.0:
        raise ProfileFormatError(
            f"{path}: profile must span lambda = 1 down to 0, "
            f"got [{lams[0]}, {lams[-1]}]"
        )
    return np.asarray(lams), np.asarray(c2s)


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _instance(cfg: RunConfig) -> ham.HamiltonianPair:
    if cfg.values.get("epsilon") is not None:
        spec = ham.ProblemSpec(
            n=cfg["n"], epsilon=np.array(cfg["epsilon"]), seed=cfg["seed"]
        )
        return ham.make_pair(spec)
    return ham.pair_from_seed(cfg["n"], cfg["seed"])


def _cmd_run(cfg: RunConfig) -> dict:
    pair = _instance(cfg)
    if cfg["controller"] == "linear":
        controller = evo.PaceController.linear(cfg["t_total"])
    else:
        profile = replay_profile(cfg["replay"]) if cfg["source"] == "replay" else None
        controller = evo.PaceController.feedback(
            cfg["k"],
            curvature_floor=cfg["curvature_floor"],
            source=cfg["source"],
            profile=profile,
        )
    record = evo.evolve(
        pair, controller, steps=cfg["steps"], sample_stride=cfg["sample_stride"]
    )
    tables = {}
    if record.samples is not None:
        tables["trajectory.csv"] = (evo.SAMPLE_COLUMNS, record.samples)
    results = {
        "P": record.P,
        "T": record.T,
        "norm_drift": record.norm_drift,
        "problem_seed": pair.seed,
    }
    emit_tables(tables, cfg["out"], _manifest(cfg, results))
    print(f"P = {record.P!r}  T = {record.T!r}  norm_drift = {record.norm_drift:.3e}")
    return results


def _cmd_profile(cfg: RunConfig) -> dict:
    pair = _instance(cfg)
    samples = spectral.curvature_profile(pair, cfg["resolution"])
    rows = [(s.lam, s.c2_full, s.c2_pair) for s in samples]
    tables = {"profile.csv": (("lambda", "c2_full", "c2_pair"), rows)}
    emit_tables(tables, cfg["out"], _manifest(cfg))
    if cfg["plots"]:
        _plot_lines(
            os.path.join(cfg["out"], "profile.svg"),
            [("|c2|", [(s.lam, abs(s.c2_full)) for s in samples])],
            xlabel="lambda", ylabel="|c2|", logy=True,
        )
    peak = max(samples, key=lambda s: abs(s.c2_full))
    print(f"profile written; |c2| peaks at lambda = {peak.lam!r}")
    return {"peak_lambda": peak.lam}


def _cmd_sweep_t(cfg: RunConfig) -> dict:
    pair = _instance(cfg)
    grid = np.linspace(cfg["t_min"], cfg["t_max"], cfg["t_points"])
    results: dict = {}
    if cfg["t_units"] == "tad":
        t_ad = evo.adiabatic_time(pair)
        results["T_ad"] = t_ad
        grid = grid * t_ad
    curves = xp.sweep_T(
        pair, grid, steps=cfg["steps"], curvature_floor=cfg["curvature_floor"]
    )
    rows = [
        (fam, T, P) for fam in ("linear", "feedback") for T, P in curves[fam]
    ]
    emit_tables({"fig2_curve.csv": (("controller", "T", "P"), rows)},
                cfg["out"], _manifest(cfg, results))
    if cfg["plots"]:
        _plot_lines(
            os.path.join(cfg["out"], "fig2_curve.svg"),
            [(fam, [tuple(row) for row in curves[fam]]) for fam in curves],
            xlabel="T", ylabel="P",
        )
    print(f"sweep-t: {len(rows)} rows -> fig2_curve.csv")
    return results


def _cmd_scaling(cfg: RunConfig) -> dict:
    spec = xp.EnsembleSpec(
        n_values=cfg["n_values"],
        samples_per_n=cfg["samples"],
        master_seed=cfg["master_seed"],
        target_P=cfg["target_p"],
    )
    summary = xp.scaling_study(spec, steps=cfg["steps"], workers=cfg["workers"])
    rows = [
        (c.n, c.controller, c.mean_T, c.std_T, c.count) for c in summary.cells
    ]
    results = {
        fam: {
            "exponent": fit.exponent,
            "intercept": fit.intercept,
            "residual_rms": fit.residual_rms,
        }
        for fam, fit in summary.fits.items()
    }
    results["excluded"] = {
        f"n={c.n},{c.controller}": c.excluded for c in summary.cells if c.excluded
    }
    emit_tables(
        {"fig3_scaling.csv": (("n", "controller", "meanT", "stdT", "count"), rows)},
        cfg["out"], _manifest(cfg, results),
    )
    if cfg["plots"]:
        series = [
            (fam, [(c.n, c.mean_T) for c in summary.cells if c.controller == fam])
            for fam in spec.controller_families
        ]
        _plot_lines(os.path.join(cfg["out"], "fig3_scaling.svg"), series,
                    xlabel="n", ylabel="mean T", logx=True, logy=True)
    for fam, fit in summary.fits.items():
        print(f"{fam}: T ~ n^{fit.exponent:.2f} (residual {fit.residual_rms:.3f})")
    return results


def _cmd_deltap(cfg: RunConfig) -> dict:
    res = xp.delta_p_sweep(
        cfg["k_grid"],
        n=cfg["n"],
        samples=cfg["samples"],
        master_seed=cfg["master_seed"],
        steps=cfg["steps"],
        workers=cfg["workers"],
    )
    rows = [
        (k, m, s, res.count)
        for k, m, s in zip(res.k_values, res.mean_dP, res.std_dP)
    ]
    best = int(np.argmax(res.mean_dP))
    results = {
        "best_k": float(res.k_values[best]),
        "best_mean_dP": float(res.mean_dP[best]),
        "excluded": res.excluded,
    }
    emit_tables(
        {"fig4_deltap.csv": (("k", "mean_dP", "std_dP", "count"), rows)},
        cfg["out"], _manifest(cfg, results),
    )
    if cfg["plots"]:
        _plot_lines(
            os.path.join(cfg["out"], "fig4_deltap.svg"),
            [("mean dP", list(zip(res.k_values, res.mean_dP)))],
            xlabel="k", ylabel="mean dP", logx=True,
        )
    print(
        f"deltap: peak mean dP = {results['best_mean_dP']:.4f} "
        f"at k = {results['best_k']:.4g}"
    )
    return results


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _plot_lines(path, series, xlabel="", ylabel="", logx=False, logy=False):
    """Tiny dependency-free SVG line plot; enough to eyeball the tables."""
    W, H, M = 640, 440, 60

    def tx(values, log):
        v = np.asarray(values, dtype=float)
        return np.log10(v) if log else v

    all_x = np.concatenate([tx([p[0] for p in pts], logx) for _, pts in series])
    all_y = np.concatenate([tx([p[1] for p in pts], logy) for _, pts in series])
    x0, x1 = float(all_x.min()), float(all_x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    xspan = (x1 - x0) or 1.0
    yspan = (y1 - y0) or 1.0

    def sx(x):
        return M + (x - x0) / xspan * (W - 2 * M)

    def sy(y):
        return H - M - (y - y0) / yspan * (H - 2 * M)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{M}" y1="{H - M}" x2="{W - M}" y2="{H - M}" stroke="black"/>',
        f'<line x1="{M}" y1="{M}" x2="{M}" y2="{H - M}" stroke="black"/>',
        f'<text x="{W // 2}" y="{H - 15}" font-size="13">'
        f"{xlabel}{' (log)' if logx else ''}</text>",
        f'<text x="15" y="{H // 2}" font-size="13" '
        f'transform="rotate(-90 15 {H // 2})">'
        f"{ylabel}{' (log)' if logy else ''}</text>",
    ]
    for i, (label, pts) in enumerate(series):
        xs = tx([p[0] for p in pts], logx)
        ys = tx([p[1] for p in pts], logy)
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{W - M + 5}" y="{M + 18 * i}" font-size="12" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    _atomic_write(path, "\n".join(parts) + "\n")


_COMMANDS = {
    "run": _cmd_run,
    "profile": _cmd_profile,
    "sweep-t": _cmd_sweep_t,
    "scaling": _cmd_scaling,
    "deltap": _cmd_deltap,
}


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ValueError as err:
        print(f"aqcsim: {err}", file=sys.stderr)
        return 2
    try:
        _COMMANDS[cfg.command](cfg)
    except SimulationError as err:
        print(f"aqcsim: numerical failure: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"aqcsim: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"aqcsim: I/O failure: {err}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
