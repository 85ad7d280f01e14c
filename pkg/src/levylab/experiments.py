"""Experiment registry, reports and the ``run_experiment`` dispatcher."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fluctuation as fl
from . import lamperti as lp
from . import stationary as st
from .config import ExperimentConfig, validate
from .errors import Unsupported
from .ladder import LadderData
from .levy_model import LevyModel, classify_ladder_mean, closed_form_ladder, make_model, mean_increment
from .paths import simulate
from .report import CheckReport
from .stats import ks_distance, mean_and_se

SCHEMA_VERSION = 1


@dataclass
class ExperimentReport:
    """Self-contained record of one run: rerunning ``config`` reproduces every number."""

    experiment: str
    config: dict
    statistics: list
    provenance: dict
    flags: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict, repr=False)
    files: list = field(default_factory=list)
    schema: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(s.passed is not False for s in self.statistics)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def __getitem__(self, name):
        for s in self.statistics:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"schema": self.schema, "experiment": self.experiment, "config": self.config,
                "statistics": [s.to_dict() for s in self.statistics], "provenance": dict(self.provenance),
                "flags": _jsonable(self.flags), "passed": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def to_text(self) -> str:
        rows = [("statistic", "value", "stderr", "rule", "threshold", "result")]
        for s in self.statistics:
            res = {True: "PASS", False: "FAIL", None: "-"}[s.passed]
            thr = "" if s.threshold is None else _fmt(s.threshold)
            rows.append((s.name, _fmt(s.value), _fmt(s.stderr) if s.stderr is not None else "",
                         "" if s.rule == "info" else s.rule, thr, res))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = [f"experiment: {self.experiment}",
                 f"seed: {self.provenance['seed']}  n: {self.provenance['n']}  wall_ms: {self.provenance['wall_ms']}"]
        for k, r in enumerate(rows):
            lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
            if k == 0:
                lines.append("  ".join("-" * w for w in widths))
        for k, v in self.flags.items():
            lines.append(f"flag {k}: {_fmt(v)}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def statistics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["name", "value", "stderr", "rule", "threshold", "pass"])
        for s in self.statistics:
            d = s.to_dict()
            thr = d["threshold"]
            w.writerow([d["name"], d["value"], "" if d["stderr"] is None else d["stderr"], d["rule"],
                        "" if thr is None else (";".join(map(str, thr)) if isinstance(thr, list) else thr),
                        "" if d["pass"] is None else str(d["pass"]).lower()])
        return buf.getvalue()

    def write(self, out_dir, formats=("json", "text"), figures: bool = False) -> list:
        """Write the report (and CSV dumps when ``csv`` is among ``formats``); returns the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in formats:
            written.append(out / "report.json")
            written[-1].write_text(self.to_json() + "\n", encoding="utf-8")
        if "text" in formats:
            written.append(out / "summary.txt")
            written[-1].write_text(self.to_text(), encoding="utf-8")
        if "csv" in formats:
            written.append(out / "statistics.csv")
            written[-1].write_text(self.statistics_csv(), encoding="utf-8", newline="")
            for name, (header, rows) in self.artifacts.items():
                p = out / f"{name}.csv"
                with open(p, "w", newline="", encoding="utf-8") as fh:
                    w = csv.writer(fh)
                    w.writerow(header)
                    w.writerows(rows)
                written.append(p)
        if figures:
            from .plotting import render_figures
            written += render_figures(self, out)
        self.files = [str(p) for p in written]
        return written


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


@dataclass(frozen=True)
class ExperimentSpec:
    """A runnable experiment: ``run(model, params, seed) -> (CheckReport, artifacts)``."""

    run: object
    defaults: dict
    required: tuple = ()
    needs_model: bool = True
    description: str = ""


# ---------------------------------------------------------------- shared pieces

_LADDER_DEFAULTS = {"ladder": "auto", "ladder_paths": 100_000, "ladder_dt": 1e-3}


def _ladder(model: LevyModel, p: dict, seed: int) -> LadderData:
    """Closed form when asked for (or available under ``auto``), otherwise the Monte Carlo estimate."""
    src = p.get("ladder", "auto")
    if src not in ("auto", "closed", "estimate"):
        raise Unsupported(f"ladder source must be auto, closed or estimate, got {src!r}")
    if src != "estimate":
        try:
            return closed_form_ladder(model)
        except Unsupported:
            if src == "closed":
                raise
    return fl.estimate_ladder(model, n_paths=p["ladder_paths"], dt=p["ladder_dt"], seed=seed + 7919)


def _ecdf_rows(label: str, values, max_rows: int = 2000):
    x = np.sort(np.asarray(values, float))
    x = x[np.isfinite(x)]
    if x.size == 0:
        return []
    idx = np.unique(np.linspace(0, x.size - 1, min(max_rows, x.size)).astype(int))
    return [(label, repr(float(x[i])), repr(float((i + 1) / x.size))) for i in idx]


ECDF_HEADER = ("series", "x", "ecdf")


# ---------------------------------------------------------------- experiments

def _simulate(model, p, seed):
    rep = CheckReport("simulate", seed=seed)
    n = p["n_paths"]
    finals = np.empty(n)
    first = None
    for k in range(n):
        path = simulate(model, p["x0"], p["horizon"], p["dt"], seed=seed * 1_000_003 + k)
        finals[k] = path.value_at(path.end_time)
        if first is None:
            first = path
    rep.n = n
    m, se = mean_and_se(finals)
    expected = p["x0"] + mean_increment(model) * p["horizon"]
    rep.info("final_mean", m, se)
    rep.add("final_mean_z", abs(m - expected) / se if se > 0 else abs(m - expected), 4.0)
    ts, _, vs = first.knots()
    return rep, {"path": (("t", "value"), [(repr(float(a)), repr(float(b))) for a, b in zip(ts, vs)]),
                 "final_values": (ECDF_HEADER, _ecdf_rows("final", finals))}


def _ladder_exp(model, p, seed):
    rep = CheckReport("ladder", seed=seed)
    est = fl.estimate_ladder(model, n_paths=p["n_paths"], horizon=p["horizon"], dt=p["dt"], seed=seed)
    rep.n = p["n_paths"]
    x = np.linspace(p["x_min"], p["x_max"], 26)
    rep.info("EH", est.EH)
    rep.info("a_plus", est.a_plus)
    rep.info("green_fit_residual", est.meta.get("green_fit_residual", float("nan")))
    rep.info("vigon_residual", est.meta.get("vigon_residual", float("nan")))
    rep.add("mass_m_residual", est.meta.get("mass_m_residual", float("nan")), p["mass_tol"])
    try:
        exact = closed_form_ladder(model)
    except Unsupported:
        exact = None
    if exact is not None:
        ratio = est.U_plus(x) / exact.U_plus(x)
        rep.add("u_plus_max_rel_error", float(np.max(np.abs(ratio - 1.0))), p["tol"])
        rep.add("EH_rel_error", abs(est.EH / exact.EH - 1.0), p["tol"])
    try:
        rep.flags["classification"] = classify_ladder_mean(model).value
    except Exception as exc:  # undetermined classifications are reported, not fatal
        rep.flags["classification"] = type(exc).__name__
    rows = [(repr(float(a)), repr(float(est.U_plus(a))), repr(float(est.U_minus(a))),
             repr(float(exact.U_plus(a))) if exact is not None else "") for a in np.linspace(0, p["x_max"], 61)]
    return rep, {"renewal": (("x", "U_plus", "U_minus", "U_plus_exact"), rows)}


def _rho_exp(model, p, seed):
    rep = CheckReport("rho", seed=seed)
    ladder = _ladder(model, p, seed)
    rho = fl.build_rho(model, ladder)
    rep.add("total_mass_error", abs(rho.total_mass - 1.0), p["mass_tol"])
    rep.info("atom_mass", rho.atom_mass)
    mass = fl.mass_of_m(model, ladder)
    rep.add("mass_m_vs_EH", abs(mass / ladder.EH - 1.0), p["mass_tol"])
    rep.flags["ladder_source"] = ladder.source.value
    x = np.linspace(0.0, p["x_max"], 81)[1:]
    rows = [(repr(float(a)), repr(float(rho.rho1_density(a))), repr(float(rho.rho2_density(a)))) for a in x]
    return rep, {"rho_marginals": (("x", "rho1_density", "rho2_density"), rows)}


def _silverstein(model, p, seed):
    ladder = _ladder(model, p, seed)
    return fl.silverstein_check(model, ladder, x_ref=p["x_ref"], n_paths=p["n_paths"], seed=seed, dt=p["dt"],
                                horizon=p["horizon"], tol=p["tol"]), {}


def _duality(model, p, seed):
    ladder = _ladder(model, p, seed)
    return fl.green_duality_check(model, ladder, t=p["t"], n_paths=p["n_paths"], seed=seed, dt=p["dt"],
                                  tol=p["tol"]), {}


def _potential(model, p, seed):
    ladder = _ladder(model, p, seed)
    rho = fl.build_rho(model, ladder)
    return fl.potential_identity_check(model, ladder, rho, x_max=p["x_max"], n_paths=p["n_paths"], seed=seed,
                                       dt=p["dt"], x_min=p["x_min"], tol=p["tol"]), {}


def _overshoot(model, p, seed):
    ladder = _ladder(model, p, seed)
    rho = fl.build_rho(model, ladder)
    return fl.overshoot_limit_check(model, rho, z_list=tuple(p["z_list"]), n_paths=p["n_paths"], seed=seed,
                                    terminal_tol=p["terminal_tol"], memoryless_tol=p["memoryless_tol"]), {}


def _stationary(model, p, seed):
    ladder = _ladder(model, p, seed)
    rho = fl.build_rho(model, ladder)
    probes = tuple(p["probe_times"])
    rep = CheckReport("stationary", seed=seed)
    ens = st.stationary_ensemble(model, ladder, rho, p["level"], probes, n_paths=p["n_paths"], seed=seed,
                                 cond_dt=p["cond_dt"])
    rep.merge(st.crossing_stationarity_check(ens, rho, tol=p["tol"]), "crossing.")
    if model.has_positive_jumps:
        rep.merge(st.conditional_independence_check(ens, probe_time=probes[0]), "independence.")
    else:
        rep.flags["independence"] = "DegenerateCase"
    rep.merge(st.spatial_stationarity_check(model, ladder, rho, p["x"], probes, n_paths=p["n_paths"],
                                            seed=seed + 1, tol=p["spatial_tol"], cond_dt=p["cond_dt"]), "spatial.")
    return rep, {}


def _reversal(model, p, seed):
    ladder = _ladder(model, p, seed)
    rho = fl.build_rho(model, ladder)
    probes = tuple(p["t_probes"])
    ens = st.stationary_ensemble(model, ladder, rho, p["level"], tuple(-t for t in probes), n_paths=p["n_paths"],
                                 seed=seed, cond_dt=p["cond_dt"])
    return st.reversal_check(ens, model, ladder, probes, seed=seed + 1, dt=p["dt"], tol=p["tol"]), {}


def _williams(model, p, seed):
    return st.williams_check(model, x=p["x"], n_paths=p["n_paths"], seed=seed, probes=tuple(p["probes"]),
                             dt=p["dt"], horizon=p["horizon"], tol=p["tol"]), {}


def _duquesne(model, p, seed):
    ladder = _ladder(model, p, seed)
    return st.duquesne_check(model, ladder, x=p["x"], n_paths=p["n_paths"], seed=seed, dt=p["dt"],
                             horizon=p["horizon"], tol=p["tol"]), {}


def _converge(model, p, seed):
    ladder = _ladder(model, p, seed)
    rho = fl.build_rho(model, ladder)
    return st.convergence_from_minus_infinity(model, ladder, rho, x_list=tuple(p["x_list"]), b=p["b"],
                                              probe_times=tuple(p["probe_times"]), n_paths=p["n_paths"],
                                              seed=seed, terminal_tol=p["terminal_tol"],
                                              negative_tol=p["negative_tol"], cond_dt=p["cond_dt"]), {}


def _coupling(model, p, seed):
    ladder = _ladder(model, p, seed)
    rho = fl.build_rho(model, ladder)
    rep = CheckReport("coupling", seed=seed)
    rep.merge(st.coupling_epsilon(model, rho, epsilon=p["epsilon"], n_runs=p["n_paths"], seed=seed,
                                  ks_tol=p["ks_tol"]), "epsilon.")
    rep.merge(st.coupling_exact(model, rho, n_runs=p["n_runs"], seed=seed + 1), "exact.")
    return rep, {}


def _clock(p) -> lp.ClockSpec:
    return lp.ClockSpec.exponential(p["index"])


def _lamperti_exp(model, p, seed):
    ladder = _ladder(model, p, seed)
    rho = fl.build_rho(model, ladder)
    clock = _clock(p)
    t, c = p["t"], p["c"]
    t_small = t / c ** p["index"]
    sample = lp.entrance_sample(model, ladder, rho, sorted({t_small, t}), n_paths=p["n_paths"], seed=seed,
                                dt=p["dt"], clock=clock)
    rep = CheckReport("lamperti", seed=seed)
    rep.merge(lp.exp_functional_mean_check(model, ladder, rho, n_paths=p["n_paths"], seed=seed, dt=p["dt"],
                                           clock=clock, sample=sample), "mean.")
    rep.merge(lp.self_similarity_check(model, ladder, rho, c=c, t=t, n_paths=p["n_paths"], seed=seed, dt=p["dt"],
                                       clock=clock, ks_tol=p["ks_tol"], sample=sample), "scaling.")
    rep.flags.update(sample.flags)
    arts = {"marginals": (ECDF_HEADER, _ecdf_rows(f"X_{t:g}", sample.marginal(t))
                          + _ecdf_rows(f"{c:g}X_{t_small:g}", c * sample.marginal(t_small)))}
    return rep, arts


def _entrance(model, p, seed):
    ladder = _ladder(model, p, seed)
    rho = fl.build_rho(model, ladder)
    rep = lp.entrance_convergence_check(model, ladder, rho, x_list=tuple(p["x_list"]),
                                        t_probes=tuple(p["t_probes"]), n_paths=p["n_paths"], seed=seed,
                                        dt=p["dt"], clock=_clock(p), ks_tol=p["ks_tol"])
    return rep, {}


def _ks_calibration(model, p, seed):
    rep = CheckReport("ks_calibration", seed=seed)
    rate = ks_null_rejection_rate(p["reps"], p["sample_size"], p["level"], seed)
    rep.n = p["reps"]
    rep.add("rejection_rate", rate, (p["level"] - p["band"], p["level"] + p["band"]), "in",
            stderr=math.sqrt(p["level"] * (1 - p["level"]) / p["reps"]))
    return rep, {}


def ks_null_rejection_rate(reps: int = 1000, sample_size: int = 500, level: float = 0.05, seed: int = 0) -> float:
    """Fraction of same-law two-sample KS tests rejected at ``level``."""
    rng = np.random.default_rng([seed, 7])
    hits = 0
    for _ in range(reps):
        a = rng.standard_normal(sample_size)
        b = rng.standard_normal(sample_size)
        hits += ks_distance(a, b).pvalue < level
    return hits / reps


def _selftest(model, p, seed):
    from .selftest import run_selftest
    return run_selftest(), {}


_COMMON = {"n_paths": 100_000}

EXPERIMENTS = {
    "simulate": ExperimentSpec(_simulate, {"x0": 0.0, "horizon": 1.0, "dt": 1e-3, "n_paths": 1000},
                               description="simulate paths; CSV dump of the first path"),
    "ladder": ExperimentSpec(_ladder_exp, {**_COMMON, "dt": 1e-3, "horizon": 1e4, "x_min": 0.5, "x_max": 3.0,
                                           "tol": 0.03, "mass_tol": 0.02},
                             description="Monte Carlo ladder estimate vs closed form"),
    "rho": ExperimentSpec(_rho_exp, {**_LADDER_DEFAULTS, "x_max": 5.0, "mass_tol": 0.02},
                          description="stationary overshoot law"),
    "silverstein": ExperimentSpec(_silverstein, {**_LADDER_DEFAULTS, **_COMMON, "x_ref": 1.0, "dt": 1e-3,
                                                 "horizon": 25.0, "tol": 0.05}),
    "duality": ExperimentSpec(_duality, {**_LADDER_DEFAULTS, "n_paths": 1_000_000, "t": 0.5, "dt": 2e-3,
                                         "tol": 0.07}),
    "potential": ExperimentSpec(_potential, {**_LADDER_DEFAULTS, **_COMMON, "x_min": 0.2, "x_max": 2.0,
                                             "dt": 5e-3, "tol": 0.05}),
    "overshoot": ExperimentSpec(_overshoot, {**_LADDER_DEFAULTS, **_COMMON, "z_list": (2.0, 5.0, 10.0),
                                             "terminal_tol": 0.02, "memoryless_tol": 0.01}),
    "stationary": ExperimentSpec(_stationary, {**_LADDER_DEFAULTS, **_COMMON, "level": 1.0, "x": 1.0,
                                               "probe_times": (-0.5, 0.5), "cond_dt": 1e-3, "tol": 0.02,
                                               "spatial_tol": 0.03}),
    "reversal": ExperimentSpec(_reversal, {**_LADDER_DEFAULTS, **_COMMON, "level": 1.0, "t_probes": (0.1, 0.3),
                                           "dt": 1e-3,
                                           "cond_dt": 1e-3, "tol": 0.03}),
    "williams": ExperimentSpec(_williams, {**_COMMON, "x": 1.0, "probes": (0.1, 0.3), "dt": 1e-4,
                                           "horizon": 1e4, "tol": 0.02}),
    "duquesne": ExperimentSpec(_duquesne, {**_LADDER_DEFAULTS, **_COMMON, "x": 1.0, "dt": 1e-4,
                                           "horizon": 1e4, "tol": 0.03}),
    "converge": ExperimentSpec(_converge, {**_LADDER_DEFAULTS, **_COMMON, "x_list": (-2.0, -5.0, -10.0),
                                           "b": -1.0, "probe_times": (0.0, -0.5), "cond_dt": 1e-3,
                                           "terminal_tol": 0.02, "negative_tol": 0.05}),
    "coupling": ExperimentSpec(_coupling, {**_LADDER_DEFAULTS, "n_paths": 20_000, "n_runs": 300_000,
                                           "epsilon": 0.1, "ks_tol": 0.02}),
    "lamperti": ExperimentSpec(_lamperti_exp, {**_LADDER_DEFAULTS, **_COMMON, "dt": 1e-3, "index": 1.0,
                                               "t": 1.0, "c": 2.0, "ks_tol": 0.02}),
    "entrance": ExperimentSpec(_entrance, {**_LADDER_DEFAULTS, **_COMMON, "dt": 1e-3, "index": 1.0,
                                           "x_list": (0.5, 0.1, 0.02), "t_probes": (1.0,), "ks_tol": 0.03}),
    "selftest": ExperimentSpec(_selftest, {}, needs_model=False, description="trivial-tier suite"),
    "ks_calibration": ExperimentSpec(_ks_calibration, {"reps": 1000, "sample_size": 500, "level": 0.05,
                                                       "band": 0.01}, needs_model=False),
}

# operation names accepted as aliases of the subcommands
ALIASES = {"williams_check": "williams", "duquesne_check": "duquesne", "silverstein_check": "silverstein",
           "green_duality_check": "duality", "potential_identity_check": "potential",
           "overshoot_limit_check": "overshoot", "reversal_check": "reversal", "estimate_ladder": "ladder",
           "build_rho": "rho", "convergence_from_minus_infinity": "converge",
           "entrance_convergence_check": "entrance"}


def resolve_name(name: str) -> str:
    return ALIASES.get(name, name)


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentReport:
    """Validate ``config``, run it and (when ``output_dir`` is set) write the outputs.

    Raises
    ------
    UnknownExperiment, ConfigError
        Before any simulation starts; the error carries the field path.
    """
    config.name = resolve_name(config.name)
    validate(config, EXPERIMENTS)
    spec = EXPERIMENTS[config.name]
    params = {**spec.defaults, **config.params}
    model = make_model(dict(config.model)) if spec.needs_model else None
    t0 = time.perf_counter()
    check, artifacts = spec.run(model, params, config.seed)
    wall_ms = int(round(1000 * (time.perf_counter() - t0)))
    echo = config.echo()
    echo["params"] = {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}
    flags = dict(check.flags)
    report = ExperimentReport(config.name, _jsonable(echo), list(check.statistics),
                              {"seed": config.seed, "n": int(check.n or params.get("n_paths", 0)),
                               "wall_ms": wall_ms}, flags, artifacts)
    if write and config.output_dir:
        report.write(config.output_dir, config.formats, config.figures)
    return report
