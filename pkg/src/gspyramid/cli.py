"""Command-line front end: build, perceive, compress, decompress, stats.

Exit codes: 0 ok, 2 I/O or unreadable input, 3 invalid configuration or
camera file, 4 codec failure. Errors go to stderr as one JSON line with a
stable ``code`` field.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cloud_io import atomic_write, load_schema, read_cameras, read_ply, write_ply
from .codec import QuantSpec, compress, decompress, stats
from .errors import CameraError, CodecError, ConfigError, GSPyramidError, InvalidCloud, PlyFormatError
from .perception import PerceptionParams, perceive
from .pyramid import AUTO, PyramidConfig, build_pyramid, default_base_resolution

log = logging.getLogger("gspyramid")

EXIT_IO, EXIT_CONFIG, EXIT_CODEC = 2, 3, 4


def _levels(text: str) -> int | str:
    if text.lower() == AUTO:
        return AUTO
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}") from None
    return value


def parse_steps(text: str | None) -> dict[str, float]:
    steps: dict[str, float] = {}
    if not text:
        return steps
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--q entry {item!r} is not channel=step")
        try:
            steps[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--q step {value!r} is not a number", channel=name.strip()) from None
    return steps


def _pyramid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--levels", type=_levels, default=AUTO, help="level count or 'auto' (default)")
    p.add_argument("--base-resolution", type=float, default=None,
                   help="coarsest voxel edge; default: largest bbox extent / 16")
    p.add_argument("--seed", type=int, default=0, help="sampling seed for --levels auto")
    p.add_argument("--schema", type=Path, default=None, help="JSON map channel -> HIGH_FREQ|SMOOTH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gspyramid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("build", help="build the voxel pyramid and write its manifest")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, help="manifest JSON (stdout when omitted)")
    p.add_argument("--export-levels", type=Path, help="directory for one PLY per residual level")
    _pyramid_flags(p)

    p = sub.add_parser("perceive", help="score pyramid levels against a camera set")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--cameras", type=Path, required=True)
    p.add_argument("--output", type=Path, help="report JSON (stdout when omitted)")
    p.add_argument("--level", type=int, default=None, help="current level (default: finest)")
    p.add_argument("--level-csv", type=Path, help="write the (anchor, camera, level) matrix as CSV")
    p.add_argument("--sigma-thresh", type=float, default=50.0)
    p.add_argument("--alpha-depth", type=float, default=0.7)
    p.add_argument("--beta-coverage", type=float, default=0.5)
    p.add_argument("--d-std", type=float, default=None, help="reference distance (default: bbox diagonal)")
    _pyramid_flags(p)

    p = sub.add_parser("compress", help="encode a PLY into a container")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--q", default=None, help="per-channel steps, e.g. 'opacity=0.01,x=0.001'")
    p.add_argument("--q-scale", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0005, help="rate weight (metadata only)")
    _pyramid_flags(p)

    p = sub.add_parser("decompress", help="decode a container to PLY")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("stats", help="rate/distortion report for a container")
    p.add_argument("--input", type=Path, required=True, help="container")
    p.add_argument("--original", type=Path, required=True, help="source PLY")
    p.add_argument("--output", type=Path, help="stats JSON (stdout when omitted)")
    p.add_argument("--schema", type=Path, default=None)
    return parser


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write(path, text.encode("utf-8"))


def _load_cloud(args, path: Path | None = None):
    schema = load_schema(args.schema) if args.schema else None
    return read_ply(path or args.input, schema)


def _pyramid(args, cloud):
    rho0 = args.base_resolution if args.base_resolution is not None else default_base_resolution(cloud.positions)
    cfg = PyramidConfig(rho0, args.levels, seed=args.seed)
    log.info("building pyramid: base_resolution=%g levels=%s", rho0, args.levels)
    return build_pyramid(cloud, cfg)


def cmd_build(args) -> int:
    cloud = _load_cloud(args)
    pyr = _pyramid(args, cloud)
    _emit(pyr.manifest_json(), args.output)
    if args.output is not None:
        for l, r in enumerate(pyr.levels):
            print(f"level {l}: resolution={pyr.config.resolution(l):.6g} count={len(r)}")
    if args.export_levels is not None:
        args.export_levels.mkdir(parents=True, exist_ok=True)
        for l, r in enumerate(pyr.levels):
            write_ply(cloud.subset(r), args.export_levels / f"level_{l}.ply")
    return 0


def cmd_perceive(args) -> int:
    cloud = _load_cloud(args)
    try:
        cameras = read_cameras(args.cameras)
    except (OSError, ValueError) as e:
        raise CameraError(f"cannot read camera file: {e}") from None
    if not cameras:
        raise CameraError("camera file holds no cameras")
    params = PerceptionParams(args.sigma_thresh, args.alpha_depth, args.beta_coverage, args.d_std)
    pyr = _pyramid(args, cloud)
    level = pyr.num_levels - 1 if args.level is None else args.level
    report = perceive(pyr, cameras, level, params)
    _emit(report.to_json(), args.output)
    if args.level_csv is not None:
        atomic_write(args.level_csv, report.level_matrix_csv().encode("utf-8"))
    return 0


def cmd_compress(args) -> int:
    cloud = _load_cloud(args)
    spec = QuantSpec(parse_steps(args.q), args.q_scale, args.lam)
    pyr = _pyramid(args, cloud)
    data = compress(pyr, spec)
    atomic_write(args.output, data)
    log.info("wrote %d bytes for %d points", len(data), cloud.n)
    return 0


def cmd_decompress(args) -> int:
    _, cloud = decompress(Path(args.input).read_bytes())
    write_ply(cloud, args.output)
    return 0


def cmd_stats(args) -> int:
    data = Path(args.input).read_bytes()
    original = _load_cloud(args, args.original)
    try:
        report = stats(data, original)
    except InvalidCloud as e:
        raise CodecError(str(e)) from None
    _emit(json.dumps(report, indent=2) + "\n", args.output)
    return 0


COMMANDS = {
    "build": cmd_build,
    "perceive": cmd_perceive,
    "compress": cmd_compress,
    "decompress": cmd_decompress,
    "stats": cmd_stats,
}


def _fail(code: int, payload: dict) -> int:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.subcommand](args)
    except CameraError as e:
        return _fail(EXIT_CONFIG, e.to_dict())
    except ConfigError as e:
        return _fail(EXIT_CONFIG, e.to_dict())
    except (CodecError, InvalidCloud) as e:
        return _fail(EXIT_CODEC, e.to_dict())
    except PlyFormatError as e:
        return _fail(EXIT_IO, e.to_dict())
    except OSError as e:
        return _fail(EXIT_IO, {"code": "io_error", "message": str(e)})
    except GSPyramidError as e:
        return _fail(EXIT_CONFIG, e.to_dict())
    except ValueError as e:
        return _fail(EXIT_CONFIG, {"code": "invalid_value", "message": str(e)})


if __name__ == "__main__":
    sys.exit(main())
