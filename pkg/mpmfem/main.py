"""Entry point for the mpmfem command line."""

import argparse
import logging
import sys
from pathlib import Path

from mpmfem.config import configure_logging, get_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="mpmfem",
        description="mpmfem - implicit MPM/FEM simulation with barrier frictional contact",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Simulate a scene and write CSV frames")
    run.add_argument("scene", help="Scene file path or bundled scene name")
    run.add_argument("--output-dir", help="Directory for frame and diagnostics CSVs")
    run.add_argument("--end-time", type=float, help="Override the scene end time (s)")
    run.add_argument("--dt", type=float, help="Override the time step (s)")
    run.add_argument("--transfer", choices=["apic", "pic", "flip"], help="Override the transfer scheme")
    run.add_argument("--frames-per-second", type=float, help="Frame output rate")
    run.add_argument(
        "--desk-scale",
        action="store_true",
        help="Use the scene's coarsened desk profile",
    )

    validate = commands.add_parser("validate", help="Check a scene file and report every problem")
    validate.add_argument("scene", help="Scene file path or bundled scene name")

    commands.add_parser("list", help="List bundled scenes")
    return parser.parse_args(argv)


def _load(reference: str):
    from mpmfem.domain.scene import resolve_scene

    return resolve_scene(reference)


def _report(error: Exception) -> None:
    logger.error(str(error))
    print(f"error: {error}", file=sys.stderr)


def cmd_validate(args: argparse.Namespace) -> int:
    from mpmfem.core.errors import SceneParseError, SceneValidationError

    try:
        scene, _ = _load(args.scene)
    except (SceneParseError, SceneValidationError) as e:
        _report(e)
        return EXIT_INVALID
    print(f"{scene.name}: ok")
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    from mpmfem.domain.scene import bundled_scene_names

    for name in bundled_scene_names():
        print(name)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    from mpmfem.application.simulation import run_simulation
    from mpmfem.core.errors import SceneParseError, SceneValidationError, SimulationError
    from mpmfem.domain.scene import apply_desk_profile, apply_overrides
    from mpmfem.storage.writers import FrameWriter

    config = get_config()
    try:
        scene, base_dir = _load(args.scene)
    except (SceneParseError, SceneValidationError) as e:
        _report(e)
        return EXIT_INVALID

    if args.desk_scale:
        scene = apply_desk_profile(scene)
    scene = apply_overrides(
        scene,
        end_time=args.end_time,
        dt=args.dt,
        transfer=args.transfer,
        frames_per_second=args.frames_per_second,
        output_dir=args.output_dir,
    )
    directory = Path(scene.output.directory) if scene.output.directory else config.output_dir / scene.name

    try:
        result = run_simulation(scene, FrameWriter(directory), base_dir=base_dir, config=config)
    except SimulationError as e:
        # raised while building the scene, before any step
        _report(e)
        return EXIT_INVALID

    if result.status != EXIT_OK:
        print(f"error: solver failure at {result.error}; last frame flushed to {directory}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"{scene.name}: {result.steps} steps, {result.frames} frames written to {directory}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the application."""
    args = parse_args(argv)
    configure_logging()

    # Import handlers lazily so logging is configured first
    handlers = {"run": cmd_run, "validate": cmd_validate, "list": cmd_list}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
