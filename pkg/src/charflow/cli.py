"""Scenario presets, configuration, simulation orchestration and file outputs.

Every run echoes its fully resolved configuration to config.json; feeding that
file back through --config reproduces the identical effective configuration,
and identical configurations produce byte-identical outputs on one platform.

Exit codes (stable): 0 = run completed and every hard diagnostic passed,
2 = configuration error, 3 = simulation failure (energy-drift hard limit,
xi positivity, non-finite state, step-size guard), 4 = output I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .evolve import (
    BREAKING_THRESHOLD,
    CharflowError,
    RunConfig,
    RunResult,
    run,
)
from .model import ModelParams, validate_params
from .reconstruct import (
    EPSILON_SING,
    CharflowError as _ReconstructError,
    holder_fit_at_cusp,
    measure_decompose,
    to_physical,
)
from .transform import GaussianBump, InitialData, PeakonSum, Zero, tabulated_from_csv

SCHEMA_VERSION = 1


class ConfigError(CharflowError):
    """Configuration problem; message carries a one-line remedy."""


class MissingScenario(ConfigError):
    pass


class ConflictingOptions(ConfigError):
    pass


# ---------------------------------------------------------------------------
# scenario presets


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    lam: int
    L: float
    N: int
    dt: float
    T_end: float
    snapshot_every: int
    check_every: int
    make_initial_data: Callable[["EffectiveConfig"], InitialData]

    def initial_data(self, cfg: "EffectiveConfig") -> InitialData:
        return self.make_initial_data(cfg)


def _gaussian_smooth(cfg):
    return GaussianBump(amplitude=1.1, width=2.0)


def _gaussian_breaking(cfg):
    return GaussianBump(amplitude=1.0, width=0.5)


def _peakon(cfg):
    return PeakonSum(peaks=((1.0, -5.0),))


def _antipeakon_collision(cfg):
    return PeakonSum(peaks=((1.0, -2.0), (-1.0, 2.0)))


def _two_peakon(cfg):
    return PeakonSum(peaks=((1.5, -6.0), (0.75, -1.0)))


def _tabulated(cfg):
    if not cfg.input_csv:
        raise ConflictingOptions(
            "scenario tabulated_file requires --input-csv <file> with two columns x,u"
        )
    return tabulated_from_csv(cfg.input_csv)


SCENARIOS = {
    "gaussian_smooth": ScenarioPreset(
        "gaussian_smooth", lam=1, L=20.0, N=4096, dt=1e-3, T_end=5.0,
        snapshot_every=250, check_every=50, make_initial_data=_gaussian_smooth,
    ),
    "gaussian_breaking": ScenarioPreset(
        "gaussian_breaking", lam=1, L=15.0, N=4096, dt=1e-3, T_end=5.0,
        snapshot_every=250, check_every=50, make_initial_data=_gaussian_breaking,
    ),
    "peakon": ScenarioPreset(
        "peakon", lam=0, L=33.0, N=4096, dt=1e-3, T_end=5.0,
        snapshot_every=250, check_every=50, make_initial_data=_peakon,
    ),
    "antipeakon_collision": ScenarioPreset(
        "antipeakon_collision", lam=0, L=32.0, N=8192, dt=5e-4, T_end=4.0,
        snapshot_every=500, check_every=100, make_initial_data=_antipeakon_collision,
    ),
    "two_peakon": ScenarioPreset(
        "two_peakon", lam=0, L=36.0, N=4096, dt=1e-3, T_end=5.0,
        snapshot_every=250, check_every=50, make_initial_data=_two_peakon,
    ),
    "tabulated_file": ScenarioPreset(
        "tabulated_file", lam=0, L=15.0, N=4096, dt=1e-3, T_end=5.0,
        snapshot_every=250, check_every=50, make_initial_data=_tabulated,
    ),
}

# flag name -> (json key, type); the json keys are identical to the flag names
_CONFIG_KEYS = [
    ("scenario", str),
    ("lambda", float),
    ("L", float),
    ("N", int),
    ("dt", float),
    ("T", float),
    ("snapshot-every", int),
    ("check-every", int),
    ("epsilon-sing", float),
    ("output-dir", str),
    ("oracle", bool),
    ("compensated-sum", bool),
    ("input-csv", str),
]


@dataclass
class EffectiveConfig:
    scenario: str
    lam: int
    L: float
    N: int
    dt: float
    T_end: float
    snapshot_every: int
    check_every: int
    epsilon_sing: float
    output_dir: str
    oracle: bool
    compensated_sum: bool
    input_csv: Optional[str]

    def as_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "lambda": self.lam,
            "L": self.L,
            "N": self.N,
            "dt": self.dt,
            "T": self.T_end,
            "snapshot-every": self.snapshot_every,
            "check-every": self.check_every,
            "epsilon-sing": self.epsilon_sing,
            "output-dir": self.output_dir,
            "oracle": self.oracle,
            "compensated-sum": self.compensated_sum,
            "input-csv": self.input_csv,
        }

    def model_params(self) -> ModelParams:
        return validate_params(self.lam, self.L, self.N)

    def run_config(self) -> RunConfig:
        return RunConfig(
            dt=self.dt,
            T_end=self.T_end,
            snapshot_every=self.snapshot_every,
            check_every=self.check_every,
            oracle=self.oracle,
            compensated=self.compensated_sum,
        )

    def initial_data(self) -> InitialData:
        return SCENARIOS[self.scenario].initial_data(self)


def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="charflow",
        description="Energy-conservative solver for the lambda-family peakon equations",
        epilog="Exit codes: 0 ok, 2 config error, 3 simulation failure, 4 I/O error.",
    )
    ap.add_argument("--scenario", choices=sorted(SCENARIOS))
    ap.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="family index (0 = Camassa-Holm, 1 = Novikov)")
    ap.add_argument("--L", type=float, default=None, help="physical domain half-width")
    ap.add_argument("--N", type=int, default=None, help="label grid size")
    ap.add_argument("--dt", type=float, default=None, help="time step")
    ap.add_argument("--T", type=float, default=None, help="final time")
    ap.add_argument("--snapshot-every", type=int, default=None)
    ap.add_argument("--check-every", type=int, default=None)
    ap.add_argument("--epsilon-sing", type=float, default=None,
                    help="cos^2(v/2) threshold flagging singular samples")
    ap.add_argument("--output-dir", type=str, default=None)
    ap.add_argument("--oracle", action="store_true", default=None,
                    help="force the O(N^2) kernel path")
    ap.add_argument("--compensated-sum", action="store_true", default=None,
                    help="extended-precision kernel sweeps")
    ap.add_argument("--config", type=str, default=None, help="flat JSON config file")
    ap.add_argument("--input-csv", type=str, default=None,
                    help="two-column x,u CSV for scenario tabulated_file")
    return ap


def parse_config(argv) -> EffectiveConfig:
    """Resolve flags, optional config file and scenario defaults.

    Precedence: explicit flags > config file > scenario preset defaults.
    """
    ns = _build_argparser().parse_args(argv)
    file_vals = {}
    if ns.config:
        try:
            with open(ns.config, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}; check the --config path")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON ({e}); fix or regenerate it")
        known = {key for key, _ in _CONFIG_KEYS}
        for key in raw:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}; valid keys: {sorted(known)}")
        file_vals = raw

    def pick(flag_key, ns_val, default):
        if ns_val is not None:
            return ns_val
        if flag_key in file_vals and file_vals[flag_key] is not None:
            return file_vals[flag_key]
        return default

    scenario = pick("scenario", ns.scenario, None)
    if scenario is None:
        raise MissingScenario(
            f"missing --scenario; choose one of {', '.join(sorted(SCENARIOS))}"
        )
    if scenario not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {scenario!r}; choose one of {', '.join(sorted(SCENARIOS))}"
        )
    preset = SCENARIOS[scenario]

    lam = pick("lambda", ns.lam, preset.lam)
    cfg = EffectiveConfig(
        scenario=scenario,
        lam=int(lam) if float(lam).is_integer() else lam,
        L=float(pick("L", ns.L, preset.L)),
        N=int(pick("N", ns.N, preset.N)),
        dt=float(pick("dt", ns.dt, preset.dt)),
        T_end=float(pick("T", ns.T, preset.T_end)),
        snapshot_every=int(pick("snapshot-every", ns.snapshot_every, preset.snapshot_every)),
        check_every=int(pick("check-every", ns.check_every, preset.check_every)),
        epsilon_sing=float(pick("epsilon-sing", ns.epsilon_sing, EPSILON_SING)),
        output_dir=str(pick("output-dir", ns.output_dir, "charflow_out")),
        oracle=bool(pick("oracle", ns.oracle, False)),
        compensated_sum=bool(pick("compensated-sum", ns.compensated_sum, False)),
        input_csv=pick("input-csv", ns.input_csv, None),
    )
    # validation with structured errors (and a k computation check)
    cfg.lam = validate_params(cfg.lam, cfg.L, cfg.N).lam
    if cfg.oracle and cfg.N > 8192:
        raise ConflictingOptions("--oracle is limited to N <= 8192; lower --N or drop --oracle")
    if cfg.input_csv and cfg.scenario != "tabulated_file":
        raise ConflictingOptions("--input-csv only applies to --scenario tabulated_file")
    if cfg.dt <= 0 or cfg.T_end <= 0:
        raise ConfigError("--dt and --T must be positive")
    return cfg


# ---------------------------------------------------------------------------
# output emission


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def emit_outputs(result: RunResult, cfg: EffectiveConfig, summary_extra: dict = None) -> dict:
    """Write config.json, per-snapshot CSVs, diagnostics.csv and summary.json.

    Returns the summary dict.  Field order and float formatting are fixed so
    repeated runs with one config produce byte-identical files.
    """
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.as_json_dict(), fh, indent=2)
        fh.write("\n")

    params = result.params
    nodes = result.grid.nodes
    for i, snap in enumerate(result.snapshots):
        s, f = snap.state, snap.fields
        path = os.path.join(outdir, f"snap_{i:04d}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("T,Y,x,u,v,xi,P,Px,Q,Qx\n")
            for j in range(params.N):
                fh.write(
                    ",".join(
                        _fmt(z)
                        for z in (
                            s.T, nodes[j], s.x[j], s.u[j], s.v[j], s.xi[j],
                            f.P[j], f.Px[j], f.Q[j], f.Qx[j],
                        )
                    )
                    + "\n"
                )
        xs = np.linspace(s.x[0], s.x[-1], 2049)
        phys = to_physical(s, params, xs, cfg.epsilon_sing)
        with open(os.path.join(outdir, f"physical_{i:04d}.csv"), "w", encoding="utf-8") as fh:
            fh.write("x,u,ux,singular\n")
            for j in range(xs.size):
                ux = 0.0 if phys.singular_mask[j] else phys.ux_s[j]
                fh.write(
                    f"{_fmt(xs[j])},{_fmt(phys.u_s[j])},{_fmt(ux)},{int(phys.singular_mask[j])}\n"
                )

    margin_names = [
        "sup_u", "sup_P", "sup_Px", "convolution",
        "xi_positive", "x_monotone", "angle_guard",
    ]
    with open(os.path.join(outdir, "diagnostics.csv"), "w", encoding="utf-8") as fh:
        fh.write(
            "T,E,H,dH_dt_predicted,residual_uY,residual_xY,min_cos2,"
            + ",".join("margin_" + m for m in margin_names)
            + ",all_bounds_hold\n"
        )
        for rep in result.reports:
            row = [
                rep.T, rep.E_lower, rep.H_higher, rep.dH_dt_predicted,
                rep.residual_uY, rep.residual_xY, rep.min_cos2_half_v,
            ]
            row += [rep.bound_margins.get(m, math.nan) for m in margin_names]
            fh.write(",".join(_fmt(z) for z in row) + f",{int(rep.all_bounds_hold)}\n")

    summary = build_summary(result, cfg)
    if summary_extra:
        summary.update(summary_extra)
    with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return summary


def build_summary(result: RunResult, cfg: EffectiveConfig) -> dict:
    params = result.params
    drifts = [abs(r.E_lower - result.E0) / max(result.E0, 1e-300) for r in result.reports]
    hard_ok = all(r.bound_flags.get("xi_positive", False) for r in result.reports)
    monitor_names = ("sup_u", "sup_P", "sup_Px", "convolution")
    monitors_ok = all(
        all(r.bound_flags.get(m, False) for m in monitor_names) for r in result.reports
    )
    summary = {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.scenario,
        "lambda": params.lam,
        "k": params.k,
        "N": params.N,
        "dt": cfg.dt,
        "T_end": cfg.T_end,
        "E0": result.E0,
        "energy_drift_max": max(drifts) if drifts else None,
        "first_breaking_time": result.first_breaking_time,
        "min_cos2_global": result.min_cos2_global,
        "holder_reference": 1.0 - 1.0 / params.k,
        "holder_fit": None,
        "atoms": [],
        "n_snapshots": len(result.snapshots),
        "completed": result.completed,
        "hard_diagnostics_passed": bool(result.completed and hard_ok),
        "bound_monitors_passed": bool(monitors_ok),
    }
    if result.deepest is not None and result.first_breaking_time is not None:
        s = result.deepest.state
        md = measure_decompose(s, params, result.grid, cfg.epsilon_sing)
        summary["atoms"] = [
            {"x": a.x, "mass": a.mass, "u": a.u, "T": s.T} for a in md.atoms
        ]
        try:
            fit = holder_fit_at_cusp(s, params)
            summary["holder_fit"] = {
                "exponent": fit.exponent,
                "side_exponents": list(fit.side_exponents),
                "rms_residual": fit.rms_residual,
                "T": s.T,
                "inner": fit.inner,
                "outer": fit.outer,
            }
        except _ReconstructError:
            summary["holder_fit"] = None
    return summary


# ---------------------------------------------------------------------------
# convergence study


def thread_cap(n_tasks: int) -> int:
    env = os.environ.get("CHARFLOW_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def convergence_study(cfg: EffectiveConfig, levels: int = 3, t_probe: float = None):
    """Run the scenario at (N, dt), (2N, dt/2), ... and report convergence.

    Returns a list of per-level dicts with grid sizes, energy drift, identity
    residuals, and the sup-norm difference of the reconstructed profile
    against the previous level on a common physical grid (with the observed
    order for consecutive pairs).
    """
    if levels < 3:
        raise ConfigError("convergence study needs at least 3 levels")
    t_probe = cfg.T_end if t_probe is None else t_probe
    u0 = cfg.initial_data()

    def one(level):
        params = validate_params(cfg.lam, cfg.L, cfg.N * 2**level)
        rc = RunConfig(
            dt=cfg.dt / 2**level,
            T_end=t_probe,
            snapshot_every=10**9,
            check_every=max(1, cfg.check_every * 2**level),
            oracle=cfg.oracle,
            compensated=cfg.compensated_sum,
        )
        return run(u0, params, rc)

    with ThreadPoolExecutor(max_workers=thread_cap(levels)) as ex:
        results = list(ex.map(one, range(levels)))

    xs = np.linspace(-cfg.L * 0.98, cfg.L * 0.98, 4097)
    profiles = [
        to_physical(r.snapshots[-1].state, r.params, xs, cfg.epsilon_sing).u_s
        for r in results
    ]
    rows = []
    prev_diff = None
    for level, r in enumerate(results):
        drifts = [abs(rep.E_lower - r.E0) / max(r.E0, 1e-300) for rep in r.reports]
        row = {
            "N": r.params.N,
            "dt": r.cfg.dt,
            "energy_drift_max": max(drifts),
            "residual_uY_max": max(rep.residual_uY for rep in r.reports),
            "residual_xY_max": max(rep.residual_xY for rep in r.reports),
            "sup_diff_prev": None,
            "observed_order": None,
        }
        if level > 0:
            d = float(np.max(np.abs(profiles[level] - profiles[level - 1])))
            row["sup_diff_prev"] = d
            if prev_diff is not None and d > 0:
                row["observed_order"] = math.log2(prev_diff / d)
            prev_diff = d
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        u0 = cfg.initial_data()
        params = cfg.model_params()
    except SystemExit as e:  # argparse already printed the message
        return int(e.code or 0)
    except CharflowError as e:
        print(f"charflow: configuration error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"charflow: configuration error: {e}", file=sys.stderr)
        return 2

    status = 0
    result = None
    failure = None
    try:
        result = run(u0, params, cfg.run_config())
    except CharflowError as e:
        failure = e
        result = getattr(e, "partial", None)
        status = 3

    if result is None:
        print(f"charflow: simulation failed before producing data: {failure}", file=sys.stderr)
        return 3

    extra = {}
    if failure is not None:
        extra["failure"] = f"{type(failure).__name__}: {failure}"
    try:
        summary = emit_outputs(result, cfg, summary_extra=extra)
    except OSError as e:
        print(f"charflow: I/O error writing outputs: {e}", file=sys.stderr)
        return 4

    if failure is not None:
        print(f"charflow: simulation failed: {failure}", file=sys.stderr)
        return status
    if not summary["hard_diagnostics_passed"]:
        print("charflow: hard diagnostics failed; see diagnostics.csv", file=sys.stderr)
        return 3
    print(
        f"charflow: completed scenario {cfg.scenario} (lambda={params.lam}, N={params.N}) "
        f"drift={summary['energy_drift_max']:.3e} -> {cfg.output_dir}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
