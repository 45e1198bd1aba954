"""
Scenario runner: executes the configured checks in dependency order, writes
one JSON report per check plus CSV tables and optional SVG figures, and
records everything in manifest.json.

Monte Carlo replicas draw from substream(seed, check, replica) and are merged
by replica index, so outputs do not depend on the number of worker processes.
"""

import datetime as _dt
import logging
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

import brwends
from brwends import seeding
from brwends.ball import build_ball
from brwends.branching import (OffspringLaw, OccupancyTable, classify_regime, extract_trace,
                               occupancy_verdict, run_tree_indexed_walk, sample_tree)
from brwends.config import ExperimentConfig
from brwends.ends import end_census, end_structure, find_trifurcation_sets
from brwends.group import make_group
from brwends.mtp import FUNCTIONALS, exact_sides, paired_verdict, sample_sides
from brwends.reports import ball_adjacency_rows, write_csv, write_json
from brwends.walk import (check_ancona, check_green_vanishing, estimate_spectral_radius,
                          fit_green_decay, free_rho, green_sums,
                          validate_driving_measure, uniform_measure)

log = logging.getLogger(__name__)

ORDER = ("rho", "green", "decay", "ancona", "brw", "phase", "ends", "trifurcation", "mtp",
         "prop32")
BLOCK = 25                   # replicas per parallel task; fixed so results ignore --jobs


# ---------------------------------------------------------------------------
# results and manifest


@dataclass
class CheckResult:
    name: str
    verdict: str             # PASS, FAIL or ERROR
    acceptance: bool         # acceptance-tagged checks decide the exit status
    data: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)   # name -> list of row dicts
    figures: dict = field(default_factory=dict)  # name -> SVG text
    exports: dict = field(default_factory=dict)  # name -> JSON-ready object
    files: list = field(default_factory=list)


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    seed: int
    started: str
    finished: str
    checks: list             # [{name, verdict, acceptance, files, error?}]
    files: list              # every file under the output directory, relative
    success: bool
    out: str = ""

    def to_dict(self):
        return {"config_hash": self.config_hash, "code_version": self.code_version,
                "seed": self.seed, "timestamps": {"started": self.started,
                                                  "finished": self.finished},
                "checks": self.checks, "files": self.files, "success": self.success}

    @property
    def exit_status(self):
        return 0 if self.success else 1

    def verdict(self, name):
        for c in self.checks:
            if c["name"] == name:
                return c["verdict"]
        raise KeyError(name)


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# shared state of one run


class Context:
    def __init__(self, cfg):
        self.cfg = cfg
        self.pres = cfg.group.presentation()
        self.group = make_group(self.pres, None if cfg.group.solver == "auto"
                                else cfg.group.solver)
        self.q = driving_measure(cfg, self.pres)
        self.law = OffspringLaw({int(k): v for k, v in cfg.branching.law.items()})
        self.seed = cfg.run.seed
        self.jobs = cfg.run.jobs
        self.tol = cfg.run.tolerances
        self._ball = None
        self._rho = None
        self._ensemble = None

    def ball(self, radius):
        """B(o, radius), restricted from the largest ball built so far when possible."""
        if self._ball is None or self._ball.radius < radius:
            self._ball = build_ball(self.group, radius)
        b = self._ball
        return b if b.radius == radius else b.restrict(radius)

    def rho(self):
        if self._rho is None:
            R = self.cfg.walk.ball_radius
            self._rho = estimate_spectral_radius(self.pres, self.q, R, ball=self.ball(R))
        return self._rho

    def oracle_rho(self):
        """Closed-form rho for isotropic walks on the free group, else None."""
        if self.pres.preset_tag != "free_rank2" or len(set(self.q.weights)) != 1:
            return None
        return free_rho(self.q)

    def rho_value(self):
        orc = self.oracle_rho()
        return orc if orc is not None else self.rho().estimate

    def R_hat(self):
        return 1.0 / self.rho().estimate

    def substream(self, name, index=0):
        return seeding.substream(self.seed, name, index)

    def ensemble(self, name, fn, payload, runs):
        """[fn(payload, rng_i) for i < runs] with rng_i = substream(seed, name, i)."""
        tasks = [(fn, payload, self.seed, name, a, b)
                 for _, a, b in seeding.blocks(runs, BLOCK)]
        out = []
        for part in seeding.parallel_map(_run_block, tasks, self.jobs):
            out.extend(part)
        return out


def _run_block(task):
    fn, payload, seed, name, a, b = task
    return [fn(payload, seeding.substream(seed, name, i)) for i in range(a, b)]


def driving_measure(cfg, pres):
    if cfg.walk.weights:
        return validate_driving_measure(pres, cfg.walk.weights)
    lazy = None if cfg.walk.lazy < 0 else cfg.walk.lazy
    return uniform_measure(pres, lazy)


# ---------------------------------------------------------------------------
# checks


def check_rho(ctx):
    est = ctx.rho()
    data = {"estimate": est.to_dict(), "q": ctx.q.to_dict()}
    orc = ctx.oracle_rho()
    rows = [{"radius": r, "top_eigenvalue": v} for r, v in zip(est.radii, est.lower_bounds)]
    if orc is None:
        ok = 0 < est.lower_bound <= est.estimate <= 1
        return CheckResult("rho", "PASS" if ok else "FAIL", False, data, {"rho_radii": rows})
    rel = abs(est.estimate - orc) / orc
    data.update({"oracle": orc, "relative_error": rel, "tolerance": ctx.tol["rho_rel"]})
    return CheckResult("rho", "PASS" if rel <= ctx.tol["rho_rel"] else "FAIL", True, data,
                       {"rho_radii": rows})


def check_green(ctx):
    R = ctx.cfg.walk.ball_radius
    r = ctx.R_hat()
    table = check_green_vanishing(ctx.ball(R), r, ctx.q)
    data = {"r": r, "R_hat": r, "ball_radius": R, "strictly_decreasing": table.passed,
            "tail_unbounded": True, "maxima": table.maxima}
    return CheckResult("green", "PASS" if table.passed else "FAIL", True, data,
                       {"green_vanishing": table.to_rows()})


def _decay_r(ctx):
    v = ctx.cfg.walk.decay_r
    return ctx.R_hat() if v == "R_hat" else float(v)


def check_decay(ctx):
    R = ctx.cfg.walk.ball_radius
    r = _decay_r(ctx)
    top = min(ctx.cfg.walk.decay_max_distance, R)
    fit = fit_green_decay(ctx.ball(R), r, ctx.q, distances=range(2, top + 1))
    ok = fit.rho_hat_decay < 1 and fit.r_squared >= ctx.tol["decay_r2"]
    data = {"r": r, "fit": fit.to_dict(), "tolerance_r_squared": ctx.tol["decay_r2"]}
    rows = [{"distance": d, "green": g, "fitted": fit.C1_hat * fit.rho_hat_decay ** d}
            for d, g in zip(fit.distances, fit.values)]
    return CheckResult("decay", "PASS" if ok else "FAIL", True, data, {"green_decay": rows})


def check_ancona_(ctx):
    w = ctx.cfg.walk
    ball = ctx.ball(w.ancona_radius)
    R_hat = ctx.R_hat()
    grid = np.linspace(1.0, R_hat, w.r_grid_points)
    mode = w.ancona_mode
    if mode == "auto":
        mode = "direct" if ctx.pres.preset_tag == "free_rank2" else "translate"
    rep = check_ancona(ball, grid, ctx.q, w.ancona_samples, ctx.substream("ancona"), mode,
                       w.ancona_points)
    data = {"C_hat": rep.C_hat, "C_hat_raw": rep.C_hat_raw, "spread": rep.spread(),
            "samples": rep.samples, "mode": mode, "R_hat": R_hat,
            "ball_radius": w.ancona_radius}
    if ctx.pres.preset_tag == "free_rank2":
        ok = abs(rep.C_hat - 1.0) <= ctx.tol["ancona_free"]
        data["tolerance"] = ctx.tol["ancona_free"]
    else:
        ok = rep.spread() <= ctx.tol["ancona_spread"]
        data["tolerance"] = ctx.tol["ancona_spread"]
    return CheckResult("ancona", "PASS" if ok else "FAIL", True, data, {"ancona": rep.per_r})


def _visits_replica(payload, rng):
    group, q, law, depth, flavor, targets = payload
    tree = sample_tree(law, depth, rng, flavor)
    run = run_tree_indexed_walk(tree, q, group.identity, rng, group)
    counts = np.zeros(len(targets), dtype=np.int64)
    for s in run.states:
        j = targets.get(s)
        if j is not None:
            counts[j] += 1
    return counts


def check_brw(ctx):
    b = ctx.cfg.branching
    R = ctx.cfg.walk.ball_radius
    ball = ctx.ball(R)
    law = OffspringLaw.with_mean(b.visits_m)
    rng = ctx.substream("brw-targets")
    pool = np.arange(1, int(ball.sphere_offsets[b.visits_target_radius + 1]))
    k = min(b.visits_targets, len(pool))
    idx = np.sort(rng.choice(pool, size=k, replace=False))
    exact = green_sums(ball, 0, [law.mean], b.visits_depth, ctx.q)[0][idx]
    targets = {ball.state(int(i)): j for j, i in enumerate(idx)}
    payload = (ctx.group, ctx.q, law, b.visits_depth, "GW", targets)
    counts = np.array(ctx.ensemble("brw", _visits_replica, payload, b.visits_runs))
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / math.sqrt(len(counts))
    z = np.where(se > 0, (mean - exact) / np.where(se > 0, se, 1), 0.0)
    ok = bool(np.all(np.abs(z) <= ctx.tol["visits_z"]))
    rows = [{"vertex": ctx.pres.spell(ball.word(int(i))), "exact": e, "mean": m, "se": s,
             "z": zz} for i, e, m, s, zz in zip(idx, exact, mean, se, z)]
    data = {"m": law.mean, "law": law.to_dict(), "depth": b.visits_depth,
            "runs": b.visits_runs, "max_abs_z": float(np.abs(z).max()),
            "tolerance": ctx.tol["visits_z"]}
    return CheckResult("brw", "PASS" if ok else "FAIL", True, data, {"expected_visits": rows})


def _occupancy_replica(payload, rng):
    group, q, law, depth, flavor, cap, target = payload
    tree = sample_tree(law, depth, rng, flavor, cap)
    run = run_tree_indexed_walk(tree, q, group.identity, rng, group)
    inside = np.fromiter((s in target for s in run.states), dtype=bool, count=tree.n)
    return np.bincount(tree.generation[inside], minlength=depth + 1)


def phase_diagram(ctx_or_cfg, m_grid=None):
    """Per-m predicted regime from m * rho and occupancy verdicts of simulated runs.

    Returns (rows sorted by m, passed) where passed requires agreement of at least
    the configured fraction of runs for every m outside the critical band.
    """
    ctx = ctx_or_cfg if isinstance(ctx_or_cfg, Context) else Context(ctx_or_cfg)
    a = ctx.cfg.analysis
    m_grid = sorted(a.m_grid if m_grid is None else m_grid)
    rho = ctx.rho_value()
    depth = a.phase_depth
    target = frozenset(ctx.ball(a.phase_target_radius).state(i)
                       for i in range(ctx.ball(a.phase_target_radius).n))
    rows, passed = [], True
    for m in m_grid:
        law = OffspringLaw.with_mean(m)
        pred = classify_regime(m, rho, margin=ctx.tol["critical_band"])
        payload = (ctx.group, ctx.q, law, depth, a.phase_flavor,
                   ctx.cfg.branching.population_cap, target)
        counts = np.array(ctx.ensemble(f"phase-{m!r}", _occupancy_replica, payload,
                                       ctx.cfg.run.runs))
        table = OccupancyTable(counts, depth)
        obs = occupancy_verdict(table, a.phase_window)
        agree = float((obs == pred.regime).mean())
        last = table.last_visit()
        med = float(np.median(last))
        observed = "recurrent" if med >= depth - a.phase_window + 1 else "transient"
        ok = pred.critical or agree >= ctx.tol["regime_agreement"]
        passed &= ok
        rows.append({"m": m, "m_rho": m * rho, "predicted": pred.regime,
                     "critical": pred.critical, "agreement": agree,
                     "median_last_visit": med, "mean_last_visit": float(last.mean()),
                     "mean_final_occupancy": float(table.mean[-1]),
                     "observed": observed, "passed": ok})
    return rows, passed


def check_phase(ctx):
    rows, ok = phase_diagram(ctx)
    a = ctx.cfg.analysis
    data = {"rho": ctx.rho_value(), "rho_source": "oracle" if ctx.oracle_rho() else "estimate",
            "depth": a.phase_depth, "runs": ctx.cfg.run.runs, "window": a.phase_window,
            "flavor": a.phase_flavor, "target_radius": a.phase_target_radius,
            "tolerance": ctx.tol["regime_agreement"], "band": ctx.tol["critical_band"],
            "rows": rows}
    return CheckResult("phase", "PASS" if ok else "FAIL", True, data, {"phase_diagram": rows})


def _ends_replica(payload, rng):
    group, q, law, depth, flavor, cap, radii, window, horizon, n, budget, trif = payload
    tree = sample_tree(law, depth, rng, flavor, cap)
    run = run_tree_indexed_walk(tree, q, group.identity, rng, group)
    trace = extract_trace(run)
    top = int(trace.distance.max())
    eff = [r for r in radii if r < top]
    counts = [0] * len(radii)
    cand = 0
    if eff:
        st = end_structure(trace, eff, horizon)
        counts[:len(eff)] = st.counts()
        if len(eff) >= window:
            cand = end_census(st, window).isolated_candidates
        elif eff == radii:
            cand = end_census(st, len(eff)).isolated_candidates
    out = {"vertices": trace.n, "edges": len(trace.edges), "max_distance": top,
           "counts": counts, "isolated_candidates": int(cand)}
    if trif:
        rep = find_trifurcation_sets(trace, n, budget, horizon)
        out.update({"trifurcation": bool(rep.found), "exhaustive": rep.exhaustive,
                    "checked": rep.checked})
    return out


def _horizon(a):
    h = a.horizon
    return h if h == "frontier" else int(h)


def ends_ensemble(ctx):
    if ctx._ensemble is None:
        a, b = ctx.cfg.analysis, ctx.cfg.branching
        payload = (ctx.group, ctx.q, ctx.law, b.depth, b.flavor, b.population_cap,
                   ctx.cfg.radii(), a.window, _horizon(a), a.trifurcation_n,
                   a.trifurcation_budget, True)
        ctx._ensemble = ctx.ensemble("ends", _ends_replica, payload, ctx.cfg.run.runs)
    return ctx._ensemble


def _wilson(k, n, z=1.96):
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    d = 1 + z * z / n
    c = (p + z * z / (2 * n)) / d
    h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / d
    return (max(0.0, c - h), min(1.0, c + h))


def check_ends(ctx):
    res = ends_ensemble(ctx)
    radii = ctx.cfg.radii()
    counts = np.array([r["counts"] for r in res])
    med = np.median(counts, axis=0)
    nondecr = bool(np.all(np.diff(med) >= 0))
    final_ok = bool(med[-1] >= ctx.tol["min_final_components"])
    with_cand = sum(r["isolated_candidates"] > 0 for r in res)
    frac = with_cand / len(res)
    cand_ok = frac <= ctx.tol["isolated_runs"]
    ok = nondecr and final_ok and cand_ok
    rows = [{"radius": r, "median": float(m), "mean": float(c.mean()),
             "q10": float(np.quantile(c, 0.1)), "q90": float(np.quantile(c, 0.9))}
            for r, m, c in zip(radii, med, counts.T)]
    per_run = [{"run": i, "vertices": r["vertices"], "max_distance": r["max_distance"],
                "isolated_candidates": r["isolated_candidates"],
                **{f"r{rad}": c for rad, c in zip(radii, r["counts"])}}
               for i, r in enumerate(res)]
    data = {"runs": len(res), "law": ctx.law.to_dict(), "m": ctx.law.mean,
            "depth": ctx.cfg.branching.depth, "flavor": ctx.cfg.branching.flavor,
            "radii": radii, "window": ctx.cfg.analysis.window,
            "horizon": ctx.cfg.analysis.horizon,
            "median_counts": med.tolist(), "median_nondecreasing": nondecr,
            "final_median_ok": final_ok, "runs_with_isolated_candidates": int(with_cand),
            "isolated_fraction": frac, "isolated_fraction_ci95": _wilson(with_cand, len(res)),
            "criteria": {"a": nondecr and final_ok, "b": cand_ok},
            "mean_isolated_candidates": float(np.mean([r["isolated_candidates"] for r in res]))}
    if ctx._rho is not None:
        data["m_rho"] = ctx.law.mean * ctx._rho.estimate
    return CheckResult("ends", "PASS" if ok else "FAIL", True, data,
                       {"end_counts": rows, "end_runs": per_run},
                       exports={"trace_0": trace_export(first_trace(ctx))})


def first_trace(ctx):
    """The trace of replica 0, regenerated from its substream."""
    b = ctx.cfg.branching
    rng = ctx.substream("ends", 0)
    tree = sample_tree(ctx.law, b.depth, rng, b.flavor, b.population_cap)
    return extract_trace(run_tree_indexed_walk(tree, ctx.q, ctx.group.identity, rng, ctx.group))


def trace_export(trace):
    pres = trace.group.presentation
    return {"vertices": [pres.spell(trace.group.normal_form(s)) for s in trace.states],
            "edges": trace.edges.tolist(),
            "edge_generators": [pres.generators[t] for t in trace.edge_labels.tolist()],
            "multiplicity": trace.multiplicity.tolist(), "frontier": trace.frontier.tolist(),
            "start": trace.start}


def check_trifurcation(ctx):
    res = ends_ensemble(ctx)
    k = sum(r["trifurcation"] for r in res)
    frac = k / len(res)
    ok = frac >= ctx.tol["trifurcation_runs"]
    rows = [{"run": i, "found": r["trifurcation"], "exhaustive": r["exhaustive"],
             "checked": r["checked"]} for i, r in enumerate(res)]
    data = {"n": ctx.cfg.analysis.trifurcation_n, "runs": len(res), "found_runs": int(k),
            "fraction": frac, "fraction_ci95": _wilson(k, len(res)),
            "tolerance": ctx.tol["trifurcation_runs"]}
    return CheckResult("trifurcation", "PASS" if ok else "FAIL", True, data,
                       {"trifurcation_runs": rows})


def _mtp_run(ctx, law, names, flavor, tag):
    a = ctx.cfg.analysis
    nblk = math.ceil(a.mtp_samples / 1000)
    sizes = [min(1000, a.mtp_samples - 1000 * i) for i in range(nblk)]
    parts = seeding.parallel_map(
        _run_sized, [(law, names, a.mtp_horizon, s, flavor, ctx.seed, tag, i)
                     for i, s in enumerate(sizes)], ctx.jobs)
    out = []
    for name in names:
        L = np.concatenate([p[name][0] for p in parts])
        R = np.concatenate([p[name][1] for p in parts])
        out.append(paired_verdict(name, L, R, a.confidence, flavor))
    return out


def _run_sized(task):
    law, names, horizon, size, flavor, seed, tag, i = task
    return sample_sides(law, names, horizon, size, seeding.substream(seed, tag, i), flavor)


def check_mtp(ctx):
    a = ctx.cfg.analysis
    names = list(FUNCTIONALS)
    rows, ok = [], True
    for j, raw in enumerate(a.mtp_laws):
        law = OffspringLaw({int(k): v for k, v in raw.items()})
        for rep in _mtp_run(ctx, law, names, "UGW", f"mtp-{j}"):
            ok &= rep.passed
            rows.append({"law": j, **rep.to_dict()})
    # degenerate law: both sides are constant, so agreement must be exact
    delta = OffspringLaw({1: 1.0})
    exact_ok = True
    for name in names:
        L, R = exact_sides(delta, name)
        exact_ok &= L == R
        rows.append({"law": "delta1", "functional": name, "left": L, "right": R,
                     "passed": L == R, "flavor": "UGW", "samples": 0})
    # control: the 1/deg transport is not balanced on plain GW trees
    ctrl = _mtp_run(ctx, OffspringLaw({int(k): v for k, v in a.mtp_laws[0].items()}),
                    ["inv_degree"], "GW", "mtp-control")[0]
    data = {"laws": a.mtp_laws, "samples": a.mtp_samples, "confidence": a.confidence,
            "ugw_all_pass": bool(ok), "delta1_exact": bool(exact_ok),
            "gw_control": ctrl.to_dict(), "gw_control_detects_bias": not ctrl.passed}
    return CheckResult("mtp", "PASS" if ok and exact_ok else "FAIL", True, data,
                       {"mtp": rows})


def _prop32_replica(payload, rng):
    from brwends.prop32 import simulate_replica

    points, group, q, law, depth, flavor = payload
    return simulate_replica(points, group, q, law, depth, rng, flavor)


def check_prop32(ctx):
    from brwends.prop32 import build_sectors, prop32_plan, summarize

    a = ctx.cfg.analysis
    R = ctx.cfg.walk.ball_radius
    ball = ctx.ball(R)
    depth = a.prop32_depth if a.prop32_depth >= 0 else R
    setup = build_sectors(ball)
    plan = prop32_plan(ball, ctx.q, ctx.law.mean, depth, tuple(a.K), setup)
    payload = (plan.points, ctx.group, ctx.q, ctx.law, depth, a.prop32_flavor)
    res = ctx.ensemble("prop32", _prop32_replica, payload, a.prop32_runs)
    hits = np.array([h for h, _ in res])
    visits = np.array([v for _, v in res])
    rep = summarize(plan, hits, visits)
    ok = rep.strictly_decreasing() and rep.all_within_bound()
    data = {"depth": depth, "m": ctx.law.mean, "runs": a.prop32_runs, "K": list(a.K),
            "flavor": a.prop32_flavor, "rays": [ctx.pres.spell(d) for d in rep.rays],
            "sector_sizes": rep.sector_sizes, "C1": rep.C1, "C2": rep.C2,
            "rho_decay": rep.rho_decay, "bounds_strictly_decreasing": rep.strictly_decreasing(),
            "tail_form_decreasing": rep.tail_decreasing(),
            "all_within_bound": rep.all_within_bound(),
            "markov_consistent": rep.markov_consistent()}
    figs = {}
    if "svg" in ctx.cfg.run.format:
        from brwends.svg import ball_svg

        small = ball.restrict(min(R, 4))
        figs["prop32_sectors"] = ball_svg(small, sectors=setup.partition.assignment[:small.n],
                                          highlight=[p.index for p in plan.points
                                                     if p.index < small.n])
    return CheckResult("prop32", "PASS" if ok else "FAIL", True, data,
                       {"prop32": rep.to_rows()}, figs)


CHECK_FUNCS = {"rho": check_rho, "green": check_green, "decay": check_decay,
               "ancona": check_ancona_, "brw": check_brw, "phase": check_phase,
               "ends": check_ends, "trifurcation": check_trifurcation, "mtp": check_mtp,
               "prop32": check_prop32}


# ---------------------------------------------------------------------------
# orchestration


def _emit(res, out, formats, seed, tol):
    files = []
    if "json" in formats:
        rec = {"check": res.name, "verdict": res.verdict, "acceptance": res.acceptance,
               "seed": seed, "tolerances": tol, "results": res.data}
        files.append(write_json(out / f"{res.name}.json", rec))
        for name, obj in res.exports.items():
            files.append(write_json(out / f"{name}.json", obj))
    if "csv" in formats:
        for name, rows in res.tables.items():
            if rows:
                files.append(write_csv(out / f"{name}.csv", rows))
    if "svg" in formats:
        for name, text in res.figures.items():
            p = out / f"{name}.svg"
            p.write_text(text, encoding="utf-8")
            files.append(p)
    return [str(p.relative_to(out)) for p in files]


def run_scenario(config, out=None):
    """Run the configured checks; every emitted file is listed in the manifest."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    cfg.validate()
    out = Path(out or cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    ctx = Context(cfg)
    stored = cfg.to_dict()
    for k in ("jobs", "out"):
        stored["run"].pop(k)
    (out / "config.toml").write_text(tomli_w.dumps(stored), encoding="utf-8")
    records = []
    for name in ORDER:
        if name not in cfg.run.checks:
            continue
        log.info("check %s", name)
        try:
            res = CHECK_FUNCS[name](ctx)
        except Exception as exc:  # recorded per check; independent checks continue
            log.error("check %s failed: %s", name, exc)
            res = CheckResult(name, "ERROR", True,
                              {"error": f"{type(exc).__name__}: {exc}",
                               "traceback": traceback.format_exc(limit=3).splitlines()[-3:]})
        res.files = _emit(res, out, cfg.run.format, cfg.run.seed, cfg.run.tolerances)
        rec = {"name": name, "verdict": res.verdict, "acceptance": res.acceptance,
               "files": res.files}
        if res.verdict == "ERROR":
            rec["error"] = res.data["error"]
        records.append(rec)
    success = all(r["verdict"] == "PASS" for r in records if r["acceptance"])
    files = sorted({str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()}
                   | {"manifest.json"})
    man = RunManifest(cfg.hash(), brwends.__version__, cfg.run.seed, started, _now(),
                      records, files, success, str(out))
    write_json(out / "manifest.json", man.to_dict())
    return man


def export_ball(cfg, radius, out, formats=("csv",)):
    """Ball adjacency as CSV (vertex_id, generator, neighbor_id) and optionally SVG."""
    ctx = Context(cfg)
    ball = ctx.ball(radius)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if "csv" in formats:
        files.append(write_csv(out / f"ball_r{radius}.csv", ball_adjacency_rows(ball),
                               ["vertex_id", "generator", "neighbor_id"]))
    if "json" in formats:
        files.append(write_json(out / f"ball_r{radius}.json",
                                {"preset": ctx.pres.preset_tag, "radius": radius,
                                 "vertices": ball.n, "sphere_sizes": ball.sphere_sizes,
                                 "method": ball.method}))
    if "svg" in formats:
        from brwends.svg import ball_svg

        p = out / f"ball_r{radius}.svg"
        p.write_text(ball_svg(ball), encoding="utf-8")
        files.append(p)
    return ball, files
