"""Command-line entry point: ``brwends <check> [options]``."""

import argparse
import logging
import sys

import tomli

from brwends.config import CHECKS, load_config

COMMANDS = ("ball",) + CHECKS + ("all",)


def _value(text):
    """Parse a --set value as TOML, falling back to a bare string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def _common(suppress):
    """Global flags; subcommand copies must not overwrite values given before the command."""
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--config", help="TOML configuration file", **kw)
    c.add_argument("--seed", type=int, help="master seed", **kw)
    c.add_argument("--out", help="output directory", **kw)
    c.add_argument("--jobs", type=int, help="worker processes", **kw)
    c.add_argument("--format", action="append", choices=("json", "csv", "svg"),
                   help="output format (repeatable)", **kw)
    c.add_argument("--preset", choices=("free_rank2", "surface_genus2", "custom"),
                   help="group preset", **kw)
    c.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config key, value in TOML syntax", **kw)
    c.add_argument("-v", "--verbose", action="store_true", **kw)
    return c


def build_parser():
    p = argparse.ArgumentParser(prog="brwends", parents=[_common(False)],
                                description="Branching random walks on Cayley graphs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[_common(True)])
        if name == "ball":
            sp.add_argument("--radius", type=int, default=4)
    return p


def _overrides(args):
    ov = {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep or "." not in key:
            raise ValueError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        ov[key.strip()] = _value(val.strip())
    if args.preset:
        ov["group.preset"] = args.preset
    if args.seed is not None:
        ov["run.seed"] = args.seed
    if args.out:
        ov["run.out"] = args.out
    if args.jobs is not None:
        ov["run.jobs"] = args.jobs
    if args.format:
        ov["run.format"] = list(dict.fromkeys(args.format))
    if args.command not in ("all", "ball"):
        ov["run.checks"] = [args.command]
    return ov


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
    except (ValueError, OSError, tomli.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "ball":
        from brwends.runner import export_ball

        ball, files = export_ball(cfg, args.radius, cfg.run.out, cfg.run.format)
        print(f"{cfg.group.preset} radius {args.radius}: {ball.n} vertices, "
              f"spheres {ball.sphere_sizes}")
        for f in files:
            print(f)
        return 0

    from brwends.runner import run_scenario

    man = run_scenario(cfg)
    for c in man.checks:
        tag = "" if c["acceptance"] else " (diagnostic)"
        extra = f"  {c['error']}" if "error" in c else ""
        print(f"{c['name']:<13} {c['verdict']}{tag}{extra}")
    print(f"manifest: {man.out}/manifest.json")
    return man.exit_status


if __name__ == "__main__":
    sys.exit(main())
