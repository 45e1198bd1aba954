import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwends import cli, seeding
from brwends.config import CHECKS, ExperimentConfig, dumps_config, load_config, loads_config
from brwends.reports import to_json, write_csv
from brwends.runner import export_ball, phase_diagram, run_scenario
from brwends.svg import ball_svg, disk_layout


def small(**run):
    return ExperimentConfig.from_dict({
        "group": {"preset": "free_rank2"},
        "walk": {"ball_radius": 8},
        "run": {"checks": [], **run}})


# -- configuration -------------------------------------------------------------


def test_empty_file_is_valid(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("")
    cfg = load_config(p)
    assert cfg == ExperimentConfig()


def test_round_trip_default():
    cfg = ExperimentConfig()
    assert loads_config(dumps_config(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), depth=st.integers(6, 40),
       radii=st.lists(st.integers(1, 3), min_size=0, max_size=4),
       checks=st.lists(st.sampled_from(CHECKS), unique=True))
def test_round_trip_property(seed, depth, radii, checks):
    rs = list(np.cumsum(radii)) if radii else []
    rs = [int(r) for r in rs if r < depth]
    cfg = ExperimentConfig.from_dict({
        "branching": {"depth": depth}, "analysis": {"radii": rs},
        "run": {"seed": seed, "checks": checks}})
    again = loads_config(dumps_config(cfg))
    assert again == cfg and again.hash() == cfg.hash()


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown keys"):
        ExperimentConfig.from_dict({"walk": {"radius": 3}})
    with pytest.raises(ValueError, match="sections"):
        ExperimentConfig.from_dict({"extra": {}})
    with pytest.raises(ValueError, match="check"):
        ExperimentConfig.from_dict({"run": {"checks": ["nope"]}})


def test_consistency_rules():
    with pytest.raises(ValueError, match="radii"):
        ExperimentConfig.from_dict({"branching": {"depth": 10}, "analysis": {"radii": [2, 12]}})
    with pytest.raises(ValueError, match="increasing"):
        ExperimentConfig.from_dict({"analysis": {"radii": [4, 2]}})
    with pytest.raises(ValueError, match="too small"):
        ExperimentConfig.from_dict({"walk": {"ball_radius": 4}})
    with pytest.raises(ValueError, match="prop32"):
        ExperimentConfig.from_dict({"analysis": {"prop32_depth": 12}})


def test_default_radii():
    assert ExperimentConfig().radii() == [2, 4, 6, 8, 10, 12, 14, 16]


def test_hash_ignores_jobs_and_out():
    a = small(jobs=1, out="x")
    b = small(jobs=4, out="y")
    c = small(seed=7)
    assert a.hash() == b.hash() != c.hash()


def test_tolerance_merge():
    cfg = ExperimentConfig.from_dict({"run": {"tolerances": {"rho_rel": 0.02}}})
    assert cfg.run.tolerances["rho_rel"] == 0.02 and "visits_z" in cfg.run.tolerances


# -- seeding and writers ---------------------------------------------------------


def test_substreams_independent_of_order():
    a = seeding.substream(1, "brw", 3).random(4)
    seeding.substream(1, "ends", 0).random(100)
    b = seeding.substream(1, "brw", 3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, seeding.substream(1, "brw", 4).random(4))
    assert not np.array_equal(a, seeding.substream(1, "ends", 3).random(4))


def _square(x):
    return x * x


def test_parallel_map_ordered():
    assert seeding.parallel_map(_square, range(7), jobs=2) == [x * x for x in range(7)]
    assert seeding.blocks(7, 3) == [(0, 0, 3), (1, 3, 6), (2, 6, 7)]


def test_json_stable():
    a = to_json({"b": np.float64(0.1), "a": [np.int64(2), np.inf], "c": np.bool_(True)})
    assert a == to_json({"c": True, "a": [2, float("inf")], "b": 0.1})
    assert json.loads(a)["a"] == [2, "inf"]


def test_csv(tmp_path):
    p = write_csv(tmp_path / "t.csv", [{"x": 1, "y": 2.5}, {"x": 2}])
    assert p.read_text() == "x,y\n1,2.5\n2,\n"


# -- drawing ---------------------------------------------------------------------


def test_disk_layout(surface_ball5):
    b = surface_ball5.restrict(3)
    xy = disk_layout(b)
    r = np.hypot(xy[:, 0], xy[:, 1])
    assert r[0] == 0 and np.all(np.diff([r[b.dist == d].mean() for d in range(4)]) > 0)
    assert r.max() == pytest.approx(0.95)
    # distinct vertices get distinct positions
    assert len({(round(x, 9), round(y, 9)) for x, y in xy}) == b.n


def test_neighbours_of_origin_follow_planar_order(surface, surface_ball5):
    b = surface_ball5.restrict(2)
    xy = disk_layout(b)
    ang = {surface.generators[t]: np.arctan2(*xy[b.nbr[0, t]][::-1]) % (2 * np.pi)
           for t in range(8)}
    order = sorted(ang, key=ang.get)
    assert order == list(surface.planar_order)


def test_svg_document(surface_ball5):
    text = ball_svg(surface_ball5.restrict(2), sectors=np.zeros(65, dtype=np.int8),
                    highlight=[0])
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert text.count("<circle") == 66


# -- runner and CLI ---------------------------------------------------------------


def test_empty_checks_manifest(tmp_path):
    man = run_scenario(small(), out=tmp_path)
    assert man.success and man.checks == [] and man.exit_status == 0
    assert sorted(man.files) == ["config.toml", "manifest.json"]
    stored = loads_config((tmp_path / "config.toml").read_text())
    assert stored.hash() == man.config_hash


def test_manifest_lists_every_file(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "group": {"preset": "free_rank2"},
        "walk": {"ball_radius": 8, "ancona_samples": 20, "ancona_radius": 6},
        "run": {"checks": ["rho", "green", "ancona"], "format": ["json", "csv", "svg"]}})
    man = run_scenario(cfg, out=tmp_path)
    on_disk = sorted(str(p.relative_to(tmp_path)) for p in tmp_path.rglob("*") if p.is_file())
    assert on_disk == man.files
    rec = json.loads((tmp_path / "rho.json").read_text())
    assert rec["seed"] == cfg.run.seed and "tolerances" in rec and rec["verdict"] in ("PASS", "FAIL")


def test_errors_are_recorded_and_run_continues(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "group": {"preset": "free_rank2"},
        "walk": {"ball_radius": 8},
        "analysis": {"K": [30]},
        "run": {"checks": ["prop32", "mtp"]}})
    cfg.analysis.mtp_samples = 500
    man = run_scenario(cfg, out=tmp_path)
    assert man.verdict("prop32") == "ERROR" and man.verdict("mtp") == "PASS"
    assert not man.success and man.exit_status == 1
    recs = {c["name"]: c for c in json.loads((tmp_path / "manifest.json").read_text())["checks"]}
    assert list(recs) == ["mtp", "prop32"]
    assert "NoSectorPoint" in recs["prop32"]["error"] and "error" not in recs["mtp"]


def test_diagnostic_checks_never_fail_the_run(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "group": {"preset": "surface_genus2"}, "walk": {"ball_radius": 6},
        "branching": {"visits_depth": 8},
        "run": {"checks": ["rho"]}})
    man = run_scenario(cfg, out=tmp_path)
    assert man.checks[0]["acceptance"] is False and man.success


def test_phase_rows_sorted(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "group": {"preset": "free_rank2"}, "walk": {"ball_radius": 8},
        "analysis": {"phase_depth": 12, "phase_window": 4},
        "run": {"runs": 10}})
    rows, _ = phase_diagram(cfg, [1.3, 1.02, 1.1])
    assert [r["m"] for r in rows] == [1.02, 1.1, 1.3]
    assert [r["m_rho"] for r in rows] == sorted(r["m_rho"] for r in rows)
    assert rows[0]["predicted"] == "transient" and rows[-1]["predicted"] == "recurrent"
    with pytest.raises(ValueError):
        phase_diagram(cfg, [1.0])


def test_export_ball(tmp_path):
    ball, files = export_ball(ExperimentConfig(), 2, tmp_path, ("csv", "svg"))
    lines = (tmp_path / "ball_r2.csv").read_text().splitlines()
    assert lines[0] == "vertex_id,generator,neighbor_id"
    assert len(lines) - 1 == int(ball.degrees().sum())


def test_cli_rho(tmp_path, capsys):
    code = cli.main(["--preset", "free_rank2", "rho", "--out", str(tmp_path),
                     "--set", "walk.ball_radius=8"])
    out = capsys.readouterr().out
    assert "rho" in out and (tmp_path / "manifest.json").exists()
    assert code in (0, 1)


def test_cli_config_errors(tmp_path, capsys):
    assert cli.main(["rho", "--set", "nodot=1"]) == 2
    assert cli.main(["rho", "--set", "walk.nope=1"]) == 2


def test_cli_flags_before_and_after_command(tmp_path):
    args = cli.build_parser().parse_args(["--seed", "5", "ball", "--radius", "1"])
    assert args.seed == 5 and args.radius == 1
    args = cli.build_parser().parse_args(["ball", "--seed", "6"])
    assert args.seed == 6


def test_cli_config_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[group]\npreset = "free_rank2"\n[run]\nchecks = []\n')
    assert cli.main(["all", "--config", str(p), "--out", str(tmp_path / "o")]) == 0


def test_readme_config_block_is_the_default():
    import re

    import tomli

    text = (Path(__file__).parents[1] / "README.md").read_text(encoding="utf-8")
    block = re.search(r"```toml\n(.*?)```", text, re.S).group(1)
    assert ExperimentConfig.from_dict(tomli.loads(block)) == ExperimentConfig()
