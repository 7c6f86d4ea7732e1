"""Config-driven command-line front end with reproducible file outputs.

Every command reads one config file (sectioned key=value text or the JSON
equivalent), derives all randomness from a single root seed, and writes its
artifacts — CSV tables, a JSON run manifest embedding the resolved
configuration and its hash, and a generated SCHEMA.md — into one output
directory.  Nothing is written anywhere else.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure,
3 differential-test mismatch (``oracle-diff`` only).

Work items (replicas, grid points, battery instances) are mapped over a
thread pool when ``--threads`` > 1; every item derives its own stream from
the root seed and item index, and results are reduced in item order, so the
CSV bodies are byte-identical for any thread count.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .connectivity import components_json
from .dynamics import (
    empirical_transition_counts,
    fk_to_potts,
    heat_bath_probability,
    make_chain,
    make_coupled_family,
    pack_checkpoint,
    run_continuous,
    run_coupled,
    run_ensemble_discrete,
)
from .errors import ConfigError, FkdynError
from .estimators import (
    estimate_connectivity_decay,
    estimate_phi,
    estimate_ssm,
    estimate_wsm,
    estimate_wsm_within_phase,
    fit_decay,
    measure_coupling_time,
    sample_equilibrium,
)
from .io import RawConfig, config_hash, read_config, write_csv, write_json
from .lattice import build_geometry, descriptor, make_boundary
from .oracle import (
    MAX_MATRIX_EDGES,
    bridge_state_table,
    exact_distribution,
    exact_conductance,
    exact_mixing_time,
    exact_potts_distribution,
    exact_transition_matrix,
    fk_pushforward_to_potts,
    largest_component_table,
)
from .phases import PhaseSpec, estimate_stability
from .rng import RandomnessStream
from .weights import learn_weights, ledger_rows, sample_random_phase_init, summary_dict

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_DIFF = 3

SCHEMA_VERSION = 1

COMMANDS = ("sample", "mix", "spatial", "weights", "bottleneck", "oracle-diff")


# ---------------------------------------------------------------------------
# Output schema registry (rendered into SCHEMA.md on every run)
# ---------------------------------------------------------------------------

_COMMON = [
    ("seed", "int", "root seed of the run"),
    ("config_hash", "str", "12-hex digest of the resolved config (seed included, output/threads excluded)"),
]

_FIT_COLUMNS = [
    ("estimator", "str", "which probe produced the row"),
    ("x", "float", "grid point (radius, side, or time)"),
    ("estimate", "float", "point estimate at x"),
    ("stderr", "float", "standard error across replicas"),
    ("replicas", "int", "independent replicas behind the estimate"),
    ("fit_rate", "float", "log-linear decay rate fitted over the grid (NaN if too few usable points)"),
    ("fit_r2", "float", "R^2 of the log-linear fit"),
] + _COMMON

_SCHEMAS = {
    "samples.csv": [
        ("replica", "int", "replica index"),
        ("events", "int", "update events processed by the replica"),
        ("open_count", "int", "open edges at the horizon"),
        ("largest_component", "int", "largest-component size over lattice vertices"),
    ] + _COMMON,
    "potts.csv": [
        ("replica", "int", "replica index"),
        ("vertex", "int", "lattice vertex id"),
        ("color", "int", "spin in {0..q-1} from uniform component coloring"),
    ] + _COMMON,
    "mix.csv": [
        ("n", "int", "lattice side"),
        ("d", "int", "dimension"),
        ("p", "float", "edge probability"),
        ("q", "float", "cluster weight"),
        ("mode", "str", "worst (extremal coupled pair) or random_phase (mixture init)"),
        ("statistic", "str", "summary name (q25/median/q75/max/mean/eps_time_median/censored)"),
        ("value", "float", "summary value (times in continuous time; censored is a count)"),
        ("replicas", "int", "replicas behind the summary"),
        ("horizon_cap", "float", "per-replica time cap; censored replicas hit it"),
    ] + _COMMON,
    "disagreement.csv": [
        ("n", "int", "lattice side"),
        ("d", "int", "dimension"),
        ("p", "float", "edge probability"),
        ("q", "float", "cluster weight"),
        ("mode", "str", "initialization mode of the pair"),
        ("t", "float", "continuous time of the observation"),
        ("disagreement", "float", "disagreeing-edge fraction of the tracked pair"),
    ] + _COMMON,
    "wsm.csv": _FIT_COLUMNS,
    "ssm.csv": _FIT_COLUMNS,
    "within_phase.csv": _FIT_COLUMNS,
    "phi.csv": _FIT_COLUMNS,
    "connectivity.csv": _FIT_COLUMNS,
    "weights_ledger.csv": [
        ("direction", "str", "FreeUp or WiredDown"),
        ("i", "int", "step index along the schedule"),
        ("p_prev", "float", "source edge probability of the step"),
        ("p_next", "float", "target edge probability of the step"),
        ("a_i", "float", "estimated partition-ratio factor for the step"),
        ("stderr", "float", "across-replica standard error of a_i"),
        ("samples", "int", "weighted samples behind the step"),
        ("horizon_used", "float", "continuous time spent by the step's sampler"),
    ] + _COMMON,
    "bottleneck.csv": [
        ("n", "int", "lattice side"),
        ("d", "int", "dimension"),
        ("p", "float", "edge probability"),
        ("q", "float", "cluster weight"),
        ("eps", "float", "phase threshold density"),
        ("statistic", "str", "phi / pi_free / t_mix_quarter / lower_bound / bound_satisfied"),
        ("value", "float", "exact value (bound_satisfied is 0/1)"),
    ] + _COMMON,
    "stability.csv": [
        ("n", "int", "lattice side"),
        ("d", "int", "dimension"),
        ("p", "float", "edge probability"),
        ("q", "float", "cluster weight"),
        ("eps", "float", "phase threshold density"),
        ("estimate", "float", "boundary-layer mass of the phase"),
        ("stderr", "float", "binomial standard error"),
        ("samples", "int", "equilibrium samples drawn"),
    ] + _COMMON,
    "diff.csv": [
        ("check", "str", "differential check name"),
        ("d", "int", "instance dimension"),
        ("n", "int", "instance side"),
        ("kind", "str", "instance lattice kind"),
        ("p", "float", "edge probability"),
        ("q", "float", "cluster weight"),
        ("statistic", "float", "observed discrepancy statistic"),
        ("threshold", "float", "pass threshold for the statistic"),
        ("passed", "bool", "whether the check passed"),
    ] + _COMMON,
}

_BINARY_NOTE = """\
## samples.bin

Fixed-size records, one per replica in replica order.  Each record is the
checkpoint encoding of the final configuration: a little-endian header
(magic "FKC1", dimension u8, side u16, kind u8 where 0=box/1=torus, p f64,
q f64, seed u64, event count u64) followed by the open-edge mask packed
8 edges per byte, least-significant bit first, in edge-id order.  Record
size = header (29 bytes) + ceil(|E|/8).

## manifest.json

Embeds the resolved configuration (seed override applied), the config hash,
package version, output inventory, and wall time.  `threads` and
`wall_time_s` are informational and vary between runs; every other artifact
is a deterministic function of config + seed.
"""


def _render_schema() -> str:
    lines = ["# Output schemas", "",
             "All floats are written with 17 significant digits; booleans as",
             "`true`/`false`.  Every row carries the run seed and config hash.", ""]
    for name in sorted(_SCHEMAS):
        lines.append(f"## {name}")
        lines.append("")
        lines.append("| column | type | meaning |")
        lines.append("|--------|------|---------|")
        for col, typ, meaning in _SCHEMAS[name]:
            lines.append(f"| {col} | {typ} | {meaning} |")
        lines.append("")
    lines.append(_BINARY_NOTE)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Run context
# ---------------------------------------------------------------------------


@dataclass
class RunContext:
    command: str
    cfg: RawConfig
    seed: int
    threads: int
    out: Path
    resolved: dict
    hash: str
    outputs: list = field(default_factory=list)

    def stamp(self, rows):
        for row in rows:
            row["seed"] = self.seed
            row["config_hash"] = self.hash
        return rows

    def write_rows(self, name, rows):
        columns = [c for c, _, _ in _SCHEMAS[name]]
        write_csv(self.out / name, columns, self.stamp(rows))
        self.outputs.append(name)

    def parallel(self, fn, items):
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


def _derive_seed(base: int, *labels) -> int:
    """Stable 63-bit seed for components that take an integer seed."""
    text = repr((int(base),) + tuple(labels)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little") >> 1


def _load_context(args, command: str) -> RunContext:
    cfg = read_config(args.config)
    if not cfg.has_section("experiment"):
        raise ConfigError(f"{args.config}: missing [experiment] section")
    version = cfg.get_int("experiment", "schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"{args.config}: schema_version {version} not supported (expected {SCHEMA_VERSION})")
    kind = cfg.get_choice("experiment", "kind", COMMANDS)
    if kind != command:
        raise ConfigError(
            f"{args.config}: config is for '{kind}' but the '{command}' command was invoked")
    seed = args.seed if args.seed is not None else cfg.get_int("experiment", "seed", default=0)
    if args.out is not None:
        out = Path(args.out)
    else:
        out = Path(cfg.get_str("output", "dir", default="out") if cfg.has_section("output") else "out")
    resolved = cfg.resolved()
    resolved.setdefault("experiment", {})["seed"] = seed
    hashed = {k: v for k, v in resolved.items() if k != "output"}
    return RunContext(command, cfg, seed, args.threads, out, resolved, config_hash(hashed))


def _geometry_from(ctx: RunContext):
    cfg = ctx.cfg
    d = cfg.get_int("geometry", "d")
    n = cfg.get_int("geometry", "n")
    kind = cfg.get_choice("geometry", "kind", ("box", "torus", "cylinder"), default="box")
    wrap = cfg.get_ints("geometry", "wrap_axes", default=None) if kind == "cylinder" else None
    geometry = build_geometry(d, n, kind, wrap_axes=wrap)
    bc_kind = cfg.get_choice("geometry", "boundary", ("free", "wired"), default="free")
    bc = make_boundary(geometry, bc_kind)
    return geometry, bc


def _finish(ctx: RunContext, started: float, summary: dict) -> None:
    (ctx.out / "SCHEMA.md").write_text(_render_schema())
    ctx.outputs.append("SCHEMA.md")
    manifest = {
        "command": ctx.command,
        "package_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "seed": ctx.seed,
        "config_hash": ctx.hash,
        "threads": ctx.threads,
        "wall_time_s": round(time.monotonic() - started, 3),
        "outputs": sorted(set(ctx.outputs + ["manifest.json"])),
        "summary": summary,
        "config": ctx.resolved,
    }
    write_json(ctx.out / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def _largest_component(engine) -> int:
    return max(len(members) for members in components_json(engine).values())


def cmd_sample(ctx: RunContext) -> int:
    cfg = ctx.cfg
    geometry, bc = _geometry_from(ctx)
    p = cfg.get_float("sample", "p")
    q = cfg.get_float("sample", "q")
    replicas = cfg.get_int("sample", "replicas", default=8)
    horizon = cfg.get_float("sample", "horizon", default=8.0)
    engine = cfg.get_choice("sample", "engine", ("fully_dynamic", "naive"),
                            default="fully_dynamic")
    initial = cfg.get_choice("sample", "initial", ("free", "wired"), default="free")
    potts = cfg.get_bool("sample", "potts", default=False)
    if potts:
        if not bc.is_free():
            raise ConfigError("potts output requires free boundary conditions")
        if abs(q - round(q)) > 1e-9 or round(q) < 1:
            raise ConfigError(f"potts output requires integer q >= 1, got {q}")
    desc = descriptor(geometry, bc)

    def work(r):
        chain = make_chain(geometry, p, q, bc=bc, initial=initial, engine=engine)
        run_continuous(chain, horizon, RandomnessStream(ctx.seed, ("cli", "sample", r)))
        row = {
            "replica": r,
            "events": chain.events,
            "open_count": int(chain.open_mask.sum()),
            "largest_component": _largest_component(chain.engine),
        }
        blob = pack_checkpoint(chain, seed=ctx.seed) if desc["kind"] != "cylinder" else b""
        colors = None
        if potts:
            colors = fk_to_potts(chain, q, RandomnessStream(ctx.seed, ("cli", "potts", r))).colors
        return row, blob, colors

    results = ctx.parallel(work, range(replicas))
    ctx.write_rows("samples.csv", [row for row, _, _ in results])
    if desc["kind"] != "cylinder":
        (ctx.out / "samples.bin").write_bytes(b"".join(blob for _, blob, _ in results))
        ctx.outputs.append("samples.bin")
    if potts:
        spin_rows = [{"replica": r, "vertex": v, "color": int(c)}
                     for r, (_, _, colors) in enumerate(results)
                     for v, c in enumerate(colors)]
        ctx.write_rows("potts.csv", spin_rows)
    mean_open = float(np.mean([row["open_count"] for row, _, _ in results]))
    print(f"sample: {replicas} replicas, horizon {horizon:g}, "
          f"mean open edges {mean_open:.2f}/{geometry.num_edges}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# mix
# ---------------------------------------------------------------------------


def _plateau_time(geometry, bc, p, q, init, stream, spacing, cap):
    """Relaxation proxy: time until the open-fraction window mean stops drifting."""
    chain = make_chain(geometry, p, q, bc=bc, initial=init)
    m = geometry.num_edges
    prev_mean = prev_se = None
    while chain.time < cap:
        vals = np.empty(8)
        for i in range(8):
            run_continuous(chain, spacing, stream)
            vals[i] = chain.open_mask.mean()
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
        if prev_mean is not None:
            tol = 2.0 * math.hypot(se, prev_se) + 0.5 / m
            if abs(mean - prev_mean) <= tol:
                return chain.time, False
        prev_mean, prev_se = mean, se
    return cap, True


def _disagreement_curve(geometry, bc, p, q, horizon, stream, max_rows=128):
    top = make_chain(geometry, p, q, bc=bc, initial="wired")
    bot = make_chain(geometry, p, q, bc=bc, initial="free")
    family = make_coupled_family([bot, top], order=[(0, 1)])
    run_coupled(family, horizon, stream)
    ts = np.asarray(family.disagreement_times)
    counts = np.asarray(family.disagreement_counts, dtype=np.float64)
    if len(ts) > max_rows:
        keep = np.unique(np.linspace(0, len(ts) - 1, max_rows).astype(int))
        ts, counts = ts[keep], counts[keep]
    return ts, counts / geometry.num_edges


def cmd_mix(ctx: RunContext) -> int:
    cfg = ctx.cfg
    d = cfg.get_int("geometry", "d")
    kind = cfg.get_choice("geometry", "kind", ("box", "torus", "cylinder"), default="box")
    bc_kind = cfg.get_choice("geometry", "boundary", ("free", "wired"), default="free")
    n_grid = cfg.get_ints("mix", "n_grid", default=[cfg.get_int("geometry", "n")])
    p = cfg.get_float("mix", "p")
    q = cfg.get_float("mix", "q")
    mode = cfg.get_choice("mix", "mode", ("worst", "random_phase"), default="worst")
    replicas = cfg.get_int("mix", "replicas", default=8)
    eps_target = cfg.get_float("mix", "eps_target", default=0.25)
    horizon_cap = cfg.get_float("mix", "horizon_cap", default=200.0)
    m_star = cfg.get_float("mix", "m_star", default=0.5)
    spacing = cfg.get_float("mix", "plateau_spacing", default=0.5)

    def work(item):
        idx, n = item
        geometry = build_geometry(d, n, kind)
        bc = make_boundary(geometry, bc_kind)
        rows, curve_rows = [], []
        base = {"n": n, "d": d, "p": p, "q": q, "mode": mode,
                "replicas": replicas, "horizon_cap": horizon_cap}
        if mode == "worst":
            summary = measure_coupling_time(geometry, bc, p, q, eps_target, replicas,
                                            _derive_seed(ctx.seed, "mix", n),
                                            horizon_cap=horizon_cap)
            for statistic, value in sorted(summary.quantiles.items()):
                rows.append(dict(base, statistic=statistic, value=value))
            finite_eps = summary.eps_times[np.isfinite(summary.eps_times)]
            rows.append(dict(base, statistic="eps_time_median",
                             value=float(np.median(finite_eps)) if len(finite_eps) else float("nan")))
            rows.append(dict(base, statistic="censored", value=float(summary.horizon_exceeded)))
            ts, frac = _disagreement_curve(
                geometry, bc, p, q, horizon_cap,
                RandomnessStream(ctx.seed, ("cli", "mix-curve", n)))
            for t, f in zip(ts, frac):
                curve_rows.append({"n": n, "d": d, "p": p, "q": q, "mode": mode,
                                   "t": float(t), "disagreement": float(f)})
        else:
            times = np.empty(replicas)
            censored = 0
            for r in range(replicas):
                init = sample_random_phase_init(
                    m_star, _derive_seed(ctx.seed, "mix-init", n, r), geometry)
                t_r, hit_cap = _plateau_time(
                    geometry, bc, p, q, init,
                    RandomnessStream(ctx.seed, ("cli", "mix-plateau", n, r)),
                    spacing, horizon_cap)
                times[r] = t_r
                censored += int(hit_cap)
            for statistic, which in (("q25", 0.25), ("median", 0.5), ("q75", 0.75)):
                rows.append(dict(base, statistic=statistic,
                                 value=float(np.quantile(times, which))))
            rows.append(dict(base, statistic="max", value=float(times.max())))
            rows.append(dict(base, statistic="mean", value=float(times.mean())))
            rows.append(dict(base, statistic="censored", value=float(censored)))
        return rows, curve_rows

    results = ctx.parallel(work, list(enumerate(n_grid)))
    ctx.write_rows("mix.csv", [row for rows, _ in results for row in rows])
    curve = [row for _, rows in results for row in rows]
    if curve:
        ctx.write_rows("disagreement.csv", curve)
    medians = {n: next((r["value"] for r in rows if r["statistic"] == "median"), float("nan"))
               for (rows, _), n in zip(results, n_grid)}
    print("mix:", ", ".join(f"n={n} median {t:.3g}" for n, t in medians.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# spatial
# ---------------------------------------------------------------------------


def _fit_rows(name, fit, replicas):
    return [{"estimator": name, "x": float(x), "estimate": float(v),
             "stderr": float(s), "replicas": replicas,
             "fit_rate": fit.rate, "fit_r2": fit.r2}
            for x, v, s in zip(fit.xs, fit.values, fit.stderrs)]


def cmd_spatial(ctx: RunContext) -> int:
    cfg = ctx.cfg
    d = cfg.get_int("geometry", "d")
    p = cfg.get_float("spatial", "p")
    q = cfg.get_float("spatial", "q")
    replicas = cfg.get_int("spatial", "replicas", default=8)
    names = cfg.get_str("spatial", "estimators", default="wsm").replace(" ", "").split(",")
    known = ("wsm", "ssm", "within_phase", "phi", "connectivity")
    for name in names:
        if name not in known:
            raise ConfigError(f"unknown estimator '{name}' (choose from {', '.join(known)})")

    def run_one(name):
        seed = _derive_seed(ctx.seed, "spatial", name)
        if name == "wsm":
            grid = cfg.get_ints("spatial", "wsm_r_grid", default=[4, 6, 8])
            host = cfg.get_choice("spatial", "wsm_host", ("box", "torus"), default="box")
            fit = estimate_wsm(grid, p, q, replicas, seed, d=d, host=host)
        elif name == "ssm":
            n = cfg.get_int("spatial", "ssm_n", default=9)
            bc_kind = cfg.get_choice("spatial", "ssm_boundary", ("free", "wired"), default="free")
            grid = cfg.get_ints("spatial", "ssm_m_grid", default=[2, 3, 4])
            fit = estimate_ssm(n, bc_kind, grid, p, q, replicas, seed, d=d)
        elif name == "within_phase":
            n = cfg.get_int("spatial", "within_n", default=8)
            grid = cfg.get_ints("spatial", "within_r_grid", default=[2, 3])
            phase = cfg.get_choice("spatial", "within_phase", ("wired", "free"), default="wired")
            fit = estimate_wsm_within_phase(grid, n, p, q, phase, replicas, seed, d=d)
        elif name == "phi":
            geometry, bc = _geometry_from(ctx)
            e = cfg.get_int("spatial", "phi_edge", default=0)
            m = cfg.get_int("spatial", "phi_m", default=3)
            t_grid = cfg.get_floats("spatial", "phi_t_grid", default=[0.5, 1.0, 2.0])
            points = [estimate_phi(geometry, bc, e, m, t, p, q, replicas,
                                   _derive_seed(ctx.seed, "spatial", name, t))
                      for t in t_grid]
            fit = fit_decay([pt.t for pt in points], [pt.estimate for pt in points],
                            [pt.stderr for pt in points], label="phi")
        else:
            ckind = cfg.get_choice("spatial", "conn_kind", ("ord", "dis"), default="ord")
            grid = cfg.get_ints("spatial", "conn_m_grid", default=[4, 6])
            fit = estimate_connectivity_decay(ckind, d, grid, p, q, replicas, seed)
        return name, fit

    results = ctx.parallel(run_one, names)
    for name, fit in results:
        ctx.write_rows(f"{name}.csv", _fit_rows(name, fit, replicas))
    print("spatial:", ", ".join(f"{name} rate {fit.rate:.4g} (r2 {fit.r2:.3f})"
                                for name, fit in results))
    return EXIT_OK


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def cmd_weights(ctx: RunContext) -> int:
    cfg = ctx.cfg
    geometry, bc = _geometry_from(ctx)
    if not bc.is_free():
        raise ConfigError("weight learning runs on the bare host; set boundary = free")
    p = cfg.get_float("weights", "p")
    q = cfg.get_float("weights", "q")
    kwargs = {
        "budget": cfg.get_float("weights", "budget", default=None),
        "eps": cfg.get_float("weights", "eps", default=0.25),
        "replicas": cfg.get_int("weights", "replicas", default=16),
        "samples_per_replica": cfg.get_int("weights", "samples_per_replica", default=24),
        "sample_spacing": cfg.get_float("weights", "sample_spacing", default=0.5),
        "equilibration": cfg.get_float("weights", "equilibration", default=2.0),
        "max_step_sd": cfg.get_float("weights", "max_step_sd", default=0.25),
        "engine": cfg.get_choice("weights", "engine", ("fully_dynamic", "naive"),
                                 default="fully_dynamic"),
        "restrict": cfg.get_bool("weights", "restrict", default=True),
    }
    weights = learn_weights(geometry, p, q, seed=ctx.seed, **kwargs)
    ctx.write_rows("weights_ledger.csv", ledger_rows(weights))
    summary = summary_dict(weights)
    summary["config_hash"] = ctx.hash
    write_json(ctx.out / "weights_summary.json", summary)
    ctx.outputs.append("weights_summary.json")
    print(f"weights: m* = {weights.m_star:.6f} +- {weights.stderr:.4f} "
          f"(log Zhat {weights.log_wired_weight:.3f}, log Zcheck {weights.log_free_weight:.3f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bottleneck
# ---------------------------------------------------------------------------


def cmd_bottleneck(ctx: RunContext) -> int:
    cfg = ctx.cfg
    geometry, bc = _geometry_from(ctx)
    p = cfg.get_float("bottleneck", "p")
    q = cfg.get_float("bottleneck", "q")
    eps = cfg.get_float("bottleneck", "eps", default=0.25)
    desc = descriptor(geometry, bc)
    base = {"n": desc["n"], "d": desc["d"], "p": p, "q": q, "eps": eps}
    if geometry.num_edges <= MAX_MATRIX_EDGES:
        model = exact_distribution(geometry, p, q, bc=bc)
        chain = exact_transition_matrix(model)
        threshold = math.ceil(eps * geometry.num_vertices)
        free_states = np.where(largest_component_table(model) < threshold)[0]
        result = exact_conductance(chain, free_states)
        t_mix = exact_mixing_time(chain, 0.25)
        rows = [dict(base, statistic="phi", value=result.phi),
                dict(base, statistic="pi_free", value=result.pi_a),
                dict(base, statistic="t_mix_quarter", value=float(t_mix)),
                dict(base, statistic="lower_bound", value=result.mixing_time_lower_bound),
                dict(base, statistic="bound_satisfied",
                     value=float(t_mix >= result.mixing_time_lower_bound))]
        ctx.write_rows("bottleneck.csv", rows)
        print(f"bottleneck: phi = {result.phi:.6g}, t_mix(1/4) = {t_mix} "
              f">= {result.mixing_time_lower_bound:.6g}")
    else:
        samples = cfg.get_int("bottleneck", "samples", default=64)
        horizon = cfg.get_float("bottleneck", "horizon", default=32.0)
        spec = PhaseSpec(geometry, eps)

        def draw(i):
            mask, _ = sample_equilibrium(geometry, bc, p, q, horizon,
                                         RandomnessStream(ctx.seed, ("cli", "stab", i)))
            return make_chain(geometry, p, q, bc=bc, initial=mask)

        report = estimate_stability(spec, p, q, samples, draw)
        ctx.write_rows("stability.csv", [dict(base, estimate=report.estimate,
                                              stderr=report.stderr, samples=report.samples)])
        print(f"bottleneck: boundary-layer mass {report.estimate:.4f} "
              f"+- {report.stderr:.4f} ({report.samples} samples)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle-diff
# ---------------------------------------------------------------------------


def _parse_instances(text):
    instances = []
    for part in text.split(";"):
        fields = part.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise ConfigError(
                f"instance '{part.strip()}' must be 'd n kind p q'")
        d, n, kind, p, q = fields
        if kind not in ("box", "torus", "cylinder"):
            raise ConfigError(f"instance kind '{kind}' must be box, torus, or cylinder")
        try:
            instances.append((int(d), int(n), kind, float(p), float(q)))
        except ValueError as exc:
            raise ConfigError(f"instance '{part.strip()}': {exc}") from None
    if not instances:
        raise ConfigError("oracle-diff needs at least one instance")
    return instances


def _kernel_matrix(graph, bc, p, bridge_prob):
    """Single-edge heat-bath kernel with an explicit bridge acceptance value."""
    m = graph.num_edges
    size = 1 << m
    bridges = bridge_state_table(graph, bc)
    states = np.arange(size, dtype=np.int64)
    matrix = np.zeros((size, size))
    for e in range(m):
        bit = np.int64(1) << e
        r = np.where(bridges[:, e], bridge_prob, p)
        np.add.at(matrix, (states, states | bit), r / m)
        np.add.at(matrix, (states, states & ~bit), (1.0 - r) / m)
    return matrix


def cmd_oracle_diff(ctx: RunContext) -> int:
    cfg = ctx.cfg
    sec = "oracle_diff"
    default_battery = "2 2 box 0.6 2.0; 1 5 box 0.45 3.0; 2 3 box 0.5 1.0"
    instances = _parse_instances(cfg.get_str(sec, "instances", default=default_battery))
    fault = cfg.get_choice(sec, "fault", ("none", "wrong_bridge_constant"), default="none")
    samples_per_state = cfg.get_int(sec, "samples_per_state", default=2000)
    tv_replicas = cfg.get_int(sec, "tv_replicas", default=6000)
    z_threshold = cfg.get_float(sec, "z_threshold", default=5.5)

    def check_instance(item):
        idx, (d, n, kind, p, q) = item
        geometry = build_geometry(d, n, kind)
        bc = make_boundary(geometry, "free")
        if geometry.num_edges > MAX_MATRIX_EDGES:
            raise ConfigError(
                f"instance d={d} n={n} {kind} has {geometry.num_edges} edges; "
                f"the differential battery needs <= {MAX_MATRIX_EDGES}")
        m = geometry.num_edges
        base = {"d": d, "n": n, "kind": kind, "p": p, "q": q}
        rows = []
        model = exact_distribution(geometry, p, q, bc=bc)
        chain = exact_transition_matrix(model)
        exact = chain.P.toarray()

        # Reference kernel rebuilt from the bridge table; the fault flag swaps
        # in a deliberately wrong bridge acceptance so downstream comparisons
        # must flag it (sentinel for the battery's discrimination power).
        bridge_prob = p if fault == "wrong_bridge_constant" else heat_bath_probability(p, q, True)
        reference = _kernel_matrix(geometry, bc, p, bridge_prob)
        construction_gap = float(np.abs(reference - exact).max())
        rows.append(dict(base, check="kernel_construction", statistic=construction_gap,
                         threshold=1e-12, passed=construction_gap <= 1e-12))

        counts = empirical_transition_counts(
            geometry, bc, p, q, samples_per_state,
            RandomnessStream(_derive_seed(ctx.seed, "diff-kernel", idx), ("kernel",)))
        freq = counts / samples_per_state
        se = np.sqrt(np.maximum(reference * (1.0 - reference), 1.0 / samples_per_state)
                     / samples_per_state)
        z_max = float((np.abs(freq - reference) / se).max())
        rows.append(dict(base, check="kernel_empirical", statistic=z_max,
                         threshold=z_threshold, passed=z_max <= z_threshold))

        t_mix = exact_mixing_time(chain, 0.005)
        finals = run_ensemble_discrete(
            geometry, bc, p, q, 0, tv_replicas, t_mix,
            RandomnessStream(_derive_seed(ctx.seed, "diff-marginal", idx), ("marginal",)))
        marginal_z = 0.0
        for e in range(m):
            empirical = float(((finals >> e) & 1).mean())
            exact_marg = float(model.pi[(np.arange(1 << m) >> e) & 1 == 1].sum())
            se_e = math.sqrt(max(exact_marg * (1.0 - exact_marg), 1.0 / tv_replicas)
                             / tv_replicas)
            marginal_z = max(marginal_z, abs(empirical - exact_marg) / (se_e + 0.005 / 5.0))
        rows.append(dict(base, check="edge_marginals", statistic=marginal_z,
                         threshold=z_threshold, passed=marginal_z <= z_threshold))

        if abs(q - round(q)) < 1e-9 and round(q) >= 2 and round(q) ** geometry.num_vertices <= 4096:
            push = fk_pushforward_to_potts(model)
            direct = exact_potts_distribution(geometry, p, int(round(q)))
            gap = float(np.abs(push - direct).max())
            rows.append(dict(base, check="potts_pushforward", statistic=gap,
                             threshold=1e-10, passed=gap <= 1e-10))
        return rows

    results = ctx.parallel(check_instance, list(enumerate(instances)))
    rows = [row for rows_ in results for row in rows_]
    ctx.write_rows("diff.csv", rows)
    failures = [row for row in rows if not row["passed"]]
    report = {
        "instances": len(instances),
        "checks": len(rows),
        "failures": [{k: row[k] for k in ("check", "d", "n", "kind", "p", "q", "statistic")}
                     for row in failures],
        "fault": fault,
        "all_pass": not failures,
        "config_hash": ctx.hash,
    }
    write_json(ctx.out / "diff_report.json", report)
    ctx.outputs.append("diff_report.json")
    if failures:
        print(f"oracle-diff: {len(failures)}/{len(rows)} checks FAILED "
              f"({', '.join(sorted({row['check'] for row in failures}))})")
        return EXIT_DIFF
    print(f"oracle-diff: all {len(rows)} checks passed on {len(instances)} instances")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


_HANDLERS = {
    "sample": cmd_sample,
    "mix": cmd_mix,
    "spatial": cmd_spatial,
    "weights": cmd_weights,
    "bottleneck": cmd_bottleneck,
    "oracle-diff": cmd_oracle_diff,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors: exit 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fkdyn",
                     description="Cluster-dynamics laboratory: config-driven runs "
                                 "with deterministic file outputs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} experiment from a config file")
        cmd.add_argument("--config", required=True, help="path to the config file")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config's root seed")
        cmd.add_argument("--threads", type=_positive_int, default=1,
                         help="worker threads (outputs are identical for any count)")
        cmd.add_argument("--out", default=None,
                         help="override the config's output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.monotonic()
    try:
        ctx = _load_context(args, args.command)
        ctx.out.mkdir(parents=True, exist_ok=True)
        code = _HANDLERS[args.command](ctx)
        _finish(ctx, started, {"exit_code": code})
        return code
    except ConfigError as exc:
        print(f"fkdyn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FkdynError, OSError) as exc:
        print(f"fkdyn: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
