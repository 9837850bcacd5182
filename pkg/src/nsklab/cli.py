"""Batch front door: ``nsklab <command> --config run.toml --out dir``.

Commands: validate, eigen, decay, resolvent, simulate. Every run writes a
flat ``manifest.txt`` (key=value) next to its CSV artifacts. Failures
print a one-line JSON error report on stderr and also leave it in
``error.json`` when the output directory is known.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import _kernels, __version__
from .errors import (
    ConfigError,
    ExponentError,
    NSKError,
    ParameterError,
    ParseError,
    UnknownKey,
    ValidationError,
)
from .grid import Grid, SpectralState, read_checkpoint, to_spectral, write_checkpoint
from .model import ExponentSet, ModelParams, make_pressure, validate_exponents, validate_params

log = logging.getLogger("nsklab")

COMMANDS = ("validate", "eigen", "decay", "resolvent", "simulate")

REQUIRED = object()

# section -> key -> default (REQUIRED marks physics values with no default)
SCHEMA: dict[str, dict[str, object]] = {
    "model": {"mu_star": REQUIRED, "nu_star": REQUIRED, "kappa_star": REQUIRED, "rho_star": REQUIRED},
    "pressure": {"family": REQUIRED, "A": None, "gamma_exp": None, "r": None, "P": None},
    "exponents": {"p": REQUIRED, "q1": REQUIRED, "q2": REQUIRED, "tau": REQUIRED},
    "grid": {"dim": 3, "box_length": 40.0, "modes": 32},
    "integrator": {
        "dt": 0.08,
        "t_end": 8.0,
        "scheme": "etd2rk",
        "form": "conservative",
        "nonlinear": True,
        "stride": 10,
        "picard": False,
        "picard_max_iters": 20,
        "picard_tol": 1e-10,
    },
    "data": {
        "family": "gaussian",
        "amplitude": 1.0,
        "width": None,
        "theta_weight": 1.0,
        "velocity": True,
        "noise": 0.0,
        "target_I": None,
    },
    "decay": {"p": REQUIRED, "q": REQUIRED, "j": 0, "t_min": 1.0, "t_max": None, "samples": 24,
              "hf_epsilon": 0.25, "tolerance": 0.15},
    "resolvent": {
        "epsilon_angle": math.pi / 4,
        "lambda0": 1.0,
        "gammas": [1.0, 1.0, 1.0],
        "q": 2.0,
        "n_angles": 16,
        "per_decade": 25,
        "lambda_max": 1e6,
        "flatness_max": 10.0,
    },
    "eigen": {"xi_min": 1e-6, "xi_max": 1e6, "per_decade": 10},
    "output": {"dir": "out", "seed": 0},
}

# sections that may be omitted entirely
OPTIONAL_SECTIONS = ("exponents", "decay")


@dataclass
class RunConfig:
    tree: dict
    params: ModelParams
    exponents: ExponentSet | None
    grid: Grid
    seed: int
    out_dir: Path

    def canonical(self) -> str:
        return emit_canonical(self.tree)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def emit_canonical(tree: dict) -> str:
    """Deterministic TOML text: sections and keys sorted, None entries dropped."""
    clean = {}
    for sec in sorted(tree):
        body = {k: tree[sec][k] for k in sorted(tree[sec]) if tree[sec][k] is not None}
        clean[sec] = body
    return tomli_w.dumps(clean)


def _check_type(path: str, value, default):
    if default is REQUIRED or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError("expected a boolean", key=path)
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError("expected an integer", key=path)
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError("expected a number", key=path)
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ValidationError("expected a string", key=path)
    return value


def normalize(raw: dict) -> dict:
    """Reject unknown keys, fill numerical-policy defaults, keep physics values explicit."""
    tree: dict = {}
    for sec, body in raw.items():
        if sec not in SCHEMA:
            raise UnknownKey("unknown section", key=sec)
        if not isinstance(body, dict):
            raise ValidationError("must be a table", key=sec)
        for k in body:
            if k not in SCHEMA[sec]:
                raise UnknownKey("unknown key", key=f"{sec}.{k}")
    for sec, spec in SCHEMA.items():
        if sec not in raw and (sec in OPTIONAL_SECTIONS):
            continue
        body = raw.get(sec, {})
        out = {}
        for k, default in spec.items():
            path = f"{sec}.{k}"
            if k in body:
                out[k] = _check_type(path, body[k], default)
            elif default is REQUIRED:
                raise ValidationError("required and has no default", key=path)
            else:
                out[k] = copy.deepcopy(default)
        tree[sec] = out
    return tree


def _pressure_from(tree: dict):
    pr = tree["pressure"]
    fam = pr["family"]
    if fam == "polytropic":
        for k in ("A", "gamma_exp"):
            if pr.get(k) is None:
                raise ValidationError("required for the polytropic family", key=f"pressure.{k}")
        spec = {"family": fam, "A": pr["A"], "gamma_exp": pr["gamma_exp"]}
    elif fam == "tabulated":
        for k in ("r", "P"):
            if pr.get(k) is None:
                raise ValidationError("required for the tabulated family", key=f"pressure.{k}")
        spec = {"family": fam, "r": pr["r"], "P": pr["P"]}
    else:
        raise ValidationError(f"must be 'polytropic' or 'tabulated', got {fam!r}",
                              key="pressure.family")
    try:
        return make_pressure(spec)
    except (ValueError, TypeError) as exc:
        raise ValidationError(str(exc), key="pressure") from exc


def build_config(tree: dict) -> RunConfig:
    """Validate a normalized tree through the owning modules."""
    pressure = _pressure_from(tree)
    m = tree["model"]
    try:
        params = validate_params(m["mu_star"], m["nu_star"], m["kappa_star"], m["rho_star"], pressure)
    except ParameterError as exc:
        key = exc.key or "model"
        path = key if key.startswith("pressure") else f"model.{key}"
        err = ValidationError(f"{exc} (rule: {exc.rule})", key=path)
        err.rule = exc.rule
        raise err from exc
    g = tree["grid"]
    try:
        grid = Grid(g["dim"], g["box_length"], g["modes"])
    except (ValueError, NSKError) as exc:
        raise ValidationError(str(exc), key="grid") from exc
    exps = None
    if "exponents" in tree:
        e = tree["exponents"]
        try:
            exps = validate_exponents(e["p"], e["q1"], e["q2"], e["tau"], grid.dim)
        except ExponentError as exc:
            err = ValidationError(f"{exc} (rule: {exc.condition})", key="exponents")
            err.rule = exc.condition
            raise err from exc
    from .integrator import IntegratorConfig

    it = tree["integrator"]
    try:
        IntegratorConfig(dt=it["dt"], t_end=it["t_end"], scheme=it["scheme"], form=it["form"],
                         nonlinear=it["nonlinear"], stride=it["stride"])
    except ConfigError as exc:
        raise ValidationError(exc.detail, key=exc.key) from exc
    out = tree["output"]
    seed = out["seed"]
    if not 0 <= seed < 2**64:
        raise ValidationError("must be an unsigned 64-bit integer", key="output.seed")
    return RunConfig(tree, params, exps, grid, seed, Path(out["dir"]))


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except FileNotFoundError as exc:
        raise ParseError(f"config file not found: {path}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"config is not UTF-8: {exc}") from exc
    return parse_config_text(text)


def parse_config_text(text: str) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"invalid TOML: {exc}") from exc
    return build_config(normalize(raw))


# -- artifacts -----------------------------------------------------------------


class Manifest:
    def __init__(self, cfg: RunConfig, command: str):
        self.entries: list[tuple[str, str]] = []
        self.checks: dict[str, bool] = {}
        self.add("command", command)
        self.add("config_hash", cfg.config_hash)
        self.add("seed", cfg.seed)
        self.add("nsklab_version", __version__)
        self.add("python_version", platform.python_version())
        self.add("numpy_version", np.__version__)
        import scipy

        self.add("scipy_version", scipy.__version__)
        self.add("backend", _kernels.backend())
        self.add("threads", _kernels.get_threads())
        self.add("wraparound_time", repr(cfg.params.wraparound_time(cfg.grid.box_length)))

    def add(self, key, value):
        if isinstance(value, (float, np.floating)):
            value = repr(float(value))
        self.entries.append((key, str(value)))

    def check(self, name: str, ok: bool, detail=None):
        self.checks[name] = bool(ok)
        if detail is not None:
            self.add(f"check.{name}.value", detail)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def write(self, path: Path, wall: float):
        lines = [f"{k}={v}" for k, v in self.entries]
        lines += [f"check.{k}={'pass' if v else 'fail'}" for k, v in self.checks.items()]
        lines.append(f"wall_time={wall:.3f}")
        path.write_text("\n".join(lines) + "\n")


def _fmt(x) -> str:
    return repr(float(x))


def build_initial(cfg: RunConfig, q: float = 2.0) -> SpectralState:
    """Initial state from [data]; optional seeded noise and rescaling to a target data size."""
    from .experiments import DataSpec
    from .norms import data_norm_I

    d = cfg.tree["data"]
    spec = DataSpec(d["family"], d["amplitude"], d["width"], d["theta_weight"], d["velocity"])
    x0 = spec.build(cfg.grid, q)
    if d["noise"] > 0:
        rng = np.random.default_rng(cfg.seed)
        shape = (cfg.grid.dim + 1,) + cfg.grid.shape
        noise = rng.standard_normal(shape)
        from .grid import dealias

        nh = dealias(to_spectral(noise, cfg.grid.dim), cfg.grid)
        x0 = SpectralState.from_stacked(x0.stacked() + d["noise"] * d["amplitude"] * nh)
    if d["target_I"] is not None:
        if cfg.exponents is None:
            raise ValidationError("needs an [exponents] section", key="data.target_I")
        size = data_norm_I(x0.theta_hat, x0.u_hat, cfg.exponents, cfg.grid)
        x0 = x0.scaled(d["target_I"] / size)
    return x0


# -- commands ------------------------------------------------------------------


def command_validate(cfg: RunConfig, out: Path, man: Manifest, args) -> None:
    p = cfg.params
    man.check("viscosity", p.mu_star > 0 and p.mu_star + p.nu_star > 0)
    man.check("capillarity", p.kappa_star > 0)
    man.check("pressure", p.pressure.dP(p.rho_star) > 0)
    man.check("nondegenerate", p.delta_star != 0)
    for k in ("alpha_star", "beta_star", "gamma_star", "delta_star"):
        man.add(k, float(getattr(p, k)))
    if cfg.exponents is not None:
        e = cfg.exponents
        n = e.dim
        man.check("exponents[2<p<inf]", 2 < e.p < math.inf)
        man.check("exponents[q1<N<q2]", e.q1 < n < e.q2)
        man.check("exponents[1/q1=1/q2+1/N]", abs(1 / e.q1 - 1 / e.q2 - 1 / n) <= 1e-12)
        man.check("exponents[2/p+N/q2<1]", 2 / e.p + n / e.q2 < 1)
        man.check("exponents[1/p<tau<N/q2+1/p]", 1 / e.p < e.tau < n / e.q2 + 1 / e.p)
        man.check("exponents[q1/2>1]", e.q1 / 2 > 1)
        man.add("ell_1", e.ell_1)
        man.add("ell_2", e.ell_2)


def command_eigen(cfg: RunConfig, out: Path, man: Manifest, args) -> None:
    from .experiments import asymptotics_experiment, eigen_table, write_eigen_csv

    ec = cfg.tree["eigen"]
    lo, hi = math.log10(ec["xi_min"]), math.log10(ec["xi_max"])
    n = int(round((hi - lo) * ec["per_decade"])) + 1
    xs = 10.0 ** np.linspace(lo, hi, n)
    rows = eigen_table(xs, cfg.params)
    write_eigen_csv(out / "eigen.csv", rows)
    re_max = max(max(r[1], r[3]) for r in rows)
    man.check("stability", re_max < 0, re_max)
    apb = cfg.params.alpha_star + cfg.params.beta_star
    rk, rg = cfg.params.rho_star * cfg.params.kappa_star, cfg.params.rho_star * cfg.params.gamma_star
    worst = 0.0
    for x, a, b, c, d, _ in rows:
        q = x * x
        lp, lm = complex(a, b), complex(c, d)
        s_ref, p_ref = -apb * q, rk * q * q + rg * q
        worst = max(worst, abs(lp + lm - s_ref) / abs(s_ref), abs(lp * lm - p_ref) / abs(p_ref))
    man.check("vieta", worst < 1e-10, worst)
    tab = asymptotics_experiment(cfg.params, per_decade=1)
    tab.write_csv(out / "asymptotics.csv")
    dl, dh = tab.deviation_at(1e-3, "low"), tab.deviation_at(1e3, "high")
    man.check("asymptotic_low", dl < 1e-2, dl)
    man.check("asymptotic_high", dh < 1e-2, dh)
    man.check("asymptotic_monotone", tab.low_monotone and tab.high_monotone)


def command_decay(cfg: RunConfig, out: Path, man: Manifest, args) -> None:
    from .experiments import DataSpec, check_admissible_pq, decay_experiment, high_frequency_decay

    if "decay" not in cfg.tree:
        raise ValidationError("the decay command needs this section", key="decay")
    dc = cfg.tree["decay"]
    p, q, j = float(dc["p"]), float(dc["q"]), int(dc["j"])
    check_admissible_pq(p, q)
    d = cfg.tree["data"]
    spec = DataSpec(d["family"], d["amplitude"], d["width"], d["theta_weight"], d["velocity"])
    t_wrap = 0.2 * cfg.params.wraparound_time(cfg.grid.box_length)
    t_max = dc["t_max"] if dc["t_max"] is not None else t_wrap
    times = np.geomspace(dc["t_min"], t_max, dc["samples"])
    rep = decay_experiment(spec, p, q, j, cfg.grid, cfg.params, times, (dc["t_min"], t_max))
    rep.write_csv(out / "decay.csv")
    man.add("decay.slope", rep.slope)
    man.add("decay.predicted_exponent", rep.predicted)
    man.add("decay.fit_residual", rep.residual)
    man.add("decay.window", f"{rep.window[0]!r},{rep.window[1]!r}")
    man.check("decay_slope", rep.relative_mismatch <= dc["tolerance"], rep.relative_mismatch)
    c, _, _ = high_frequency_decay(spec, dc["hf_epsilon"], q, cfg.grid, cfg.params,
                                   np.linspace(0.5, t_wrap / 4, 12))
    man.check("high_frequency_rate", c > 0, c)


def command_resolvent(cfg: RunConfig, out: Path, man: Manifest, args) -> None:
    from .experiments import DataSpec, lambda_grid, resolvent_sweep
    from .symbols import Sector

    rc = cfg.tree["resolvent"]
    d = cfg.tree["data"]
    sector = Sector(rc["epsilon_angle"], rc["lambda0"])
    probe = DataSpec(d["family"], d["amplitude"], d["width"], d["theta_weight"], d["velocity"]).build(
        cfg.grid, rc["q"]
    )
    lams = lambda_grid(sector, rc["n_angles"], rc["per_decade"], rc["lambda_max"])
    rep = resolvent_sweep(sector, tuple(rc["gammas"]), cfg.params, rc["q"], cfg.grid, probe, lams)
    rep.write_csv(out / "resolvent.csv")
    man.add("resolvent.sup", rep.sup)
    man.check("resolvent_finite", rep.all_finite)
    man.check("resolvent_flatness", rep.flatness < rc["flatness_max"], rep.flatness)


def command_simulate(cfg: RunConfig, out: Path, man: Manifest, args) -> None:
    from .integrator import IntegratorConfig, PicardConfig, picard_iterate, run_simulation
    from .norms import data_norm_I, script_N, sobolev_pair_name

    it = cfg.tree["integrator"]
    if args.restart:
        x0, grid = read_checkpoint(args.restart)
        if grid != cfg.grid:
            raise ValidationError("checkpoint grid does not match", key="grid")
        man.add("restart_from", Path(args.restart).name)
    else:
        x0 = build_initial(cfg, cfg.exponents.q1 if cfg.exponents else 2.0)
    icfg = IntegratorConfig(dt=it["dt"], t_end=it["t_end"], scheme=it["scheme"], form=it["form"],
                            nonlinear=it["nonlinear"], stride=it["stride"],
                            picard=PicardConfig(it["picard_max_iters"], it["picard_tol"]))
    t_wrap = 0.2 * cfg.params.wraparound_time(cfg.grid.box_length)
    man.add("t_end", icfg.t_end)
    man.add("wraparound_cap", t_wrap)
    man.check("within_wraparound", x0.time + icfg.t_end <= t_wrap + 1e-12)
    if cfg.exponents is not None:
        size = data_norm_I(x0.theta_hat, x0.u_hat, cfg.exponents, cfg.grid)
        man.add("data_size_I", size)
    if it["picard"]:
        traj, res = picard_iterate(x0, icfg.t_end, cfg.params, icfg, cfg.grid)
        with open(out / "picard_residuals.csv", "w") as fh:
            fh.write("iteration,residual\n")
            for k, r in enumerate(res, 1):
                fh.write(f"{k},{r!r}\n")
        man.check("picard_converged", res[-1] < icfg.picard.contraction_tol, res[-1])
        write_checkpoint(out / "final.kspec", traj.final, cfg.grid)
        return
    traj = run_simulation(x0, cfg.params, cfg.exponents, icfg, cfg.grid)
    traj.timeline.write_csv(out / "norms.csv")
    with open(out / "snapshots.csv", "w") as fh:
        fh.write("t,theta_zero_mode_re,l2_norm\n")
        for s in traj.states:
            fh.write(f"{s.time!r},{float(s.theta_hat.flat[0].real)!r},{s.norm()!r}\n")
    write_checkpoint(out / "final.kspec", traj.final, cfg.grid)
    man.check("range_condition", traj.halted is None)
    man.add("t_reached", traj.final.time)
    if cfg.exponents is not None and len(traj.timeline):
        t_last = traj.timeline.times[-1]
        man.add("measured_script_N", script_N(traj.timeline, cfg.exponents, t_last))
        name = sobolev_pair_name(1, 0, cfg.exponents.q2)
        _, vals = traj.timeline.series(name)
        sup = float(np.max(vals))
        man.add("sup_W10_q2", sup)
        man.check("small_data_bound", sup <= 10 * size, sup / size)


HANDLERS = {
    "validate": command_validate,
    "eigen": command_eigen,
    "decay": command_decay,
    "resolvent": command_resolvent,
    "simulate": command_simulate,
}


def _error_report(exc: BaseException) -> dict:
    rep = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("key", "rule", "condition"):
        val = getattr(exc, attr, None)
        if val is not None:
            rep[attr] = val
    if type(exc).__name__ == "InadmissiblePQ":
        rep["condition"] = "1 < q <= 2 <= p <= inf"
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsklab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides output.seed)")
    ap.add_argument("--restart", help="checkpoint to resume from (simulate only)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for kernels, FFTs and sweeps")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out) if args.out else None
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ValidationError("--seed must be an unsigned 64-bit integer", key="output.seed")
            cfg.tree["output"]["seed"] = args.seed
            cfg.seed = args.seed
        if out is None:
            out = cfg.out_dir
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1", key="threads")
        _kernels.set_threads(args.threads)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.toml").write_text(cfg.canonical())
        man = Manifest(cfg, args.command)
        t0 = time.perf_counter()
        HANDLERS[args.command](cfg, out, man, args)
        man.write(out / "manifest.txt", time.perf_counter() - t0)
        failed = [k for k, v in man.checks.items() if not v]
        if failed:
            print(json.dumps({"error": "CheckFailed", "checks": failed}), file=sys.stderr)
            return 1
        return 0
    except (NSKError, ValueError) as exc:
        rep = _error_report(exc)
        line = json.dumps(rep, sort_keys=True)
        print(line, file=sys.stderr)
        if out is not None:
            try:
                out.mkdir(parents=True, exist_ok=True)
                (out / "error.json").write_text(line + "\n")
            except OSError:
                pass
        return 2 if isinstance(exc, ConfigError) else 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
