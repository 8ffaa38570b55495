"""Command-line entry point.

Subcommands::

    shadowsmith augment   --input DIR --output DIR --method {cpil,re,dbi,none} ...
    shadowsmith synth     --output DIR [--images N --size S --seed N ...]
    shadowsmith inspect   --input DIR
    shadowsmith dcn-check [--seed N --cases N --grad-cases N]

Option precedence is flags > config file (--config, ``key = value`` lines) >
environment (``SHADOWSMITH_SEED``, seed only) > built-in defaults. Exit codes:
0 success, 1 I/O or runtime failure, 2 configuration error. Logs go to
stderr; machine-readable output to stdout or files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import dcn_verify
from .dataset import (
    BACKGROUNDS_DIRNAME,
    Dataset,
    load_backgrounds,
    load_layout,
    write_dataset,
)
from .errors import ConfigError, ShadowsmithError
from .pipeline import REPORT_FILENAME, AugmentConfig, Method, augment_dataset
from .synth import SceneConfig, generate_dataset

logger = logging.getLogger("shadowsmith")

SEED_ENV_VAR = "SHADOWSMITH_SEED"

SMALL_AREA = 32 * 32
MEDIUM_AREA = 96 * 96


def size_class(bbox_area: int) -> str:
    """COCO-style S/M/L bucket by bbox area (thresholds 32^2 and 96^2)."""
    if bbox_area < SMALL_AREA:
        return "S"
    if bbox_area < MEDIUM_AREA:
        return "M"
    return "L"


# ---------------------------------------------------------------------------
# option resolution: flags > config file > env (seed) > defaults


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def parse_config_file(path) -> dict[str, str]:
    """Plain-text ``key = value`` overlay; '#' starts a comment line."""
    entries: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


class _Resolver:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_cfg = parse_config_file(args.config) if getattr(args, "config", None) else {}

    def get(self, key: str, default, conv, from_env: str | None = None):
        flag_value = getattr(self.args, key)
        if flag_value is not None:
            return flag_value
        if key in self.file_cfg:
            try:
                return conv(self.file_cfg[key])
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"config file option {key}: {exc}") from exc
        if from_env is not None and from_env in os.environ:
            try:
                return conv(os.environ[from_env])
            except ValueError as exc:
                raise ConfigError(f"{from_env}: {exc}") from exc
        return default

    def seed(self, default: int = 0) -> int:
        return self.get("seed", default, int, from_env=SEED_ENV_VAR)


def _method(text: str) -> Method:
    try:
        return Method(text.lower())
    except ValueError:
        # ValueError so both argparse and the config-file resolver turn it
        # into a configuration error (exit 2)
        raise ValueError(f"unknown method {text!r}; choose from cpil, re, dbi, none") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_augment(args: argparse.Namespace) -> int:
    res = _Resolver(args)
    input_dir = Path(args.input)
    output_dir = Path(args.output)
    if input_dir.resolve() == output_dir.resolve():
        raise ConfigError("--output must differ from --input (inputs are never mutated)")
    method = res.get("method", None, _method)
    if method is None:
        raise ConfigError("--method is required (cpil, re, dbi, or none)")

    cfg = AugmentConfig(
        method=method,
        rs_range=(res.get("rs_min", 0.2, float), res.get("rs_max", 0.4, float)),
        ra_range=(res.get("ra_min", 0.5, float), res.get("ra_max", 2.0, float)),
        apply_prob=res.get("prob", 1.0, float),
        copies=res.get("copies", 1, int),
        seed=res.seed(),
        workers=res.get("workers", 1, int),
        include_originals=bool(res.get("include_originals", False, _parse_bool)),
    )
    cfg.validate()

    backgrounds = res.get("backgrounds", None, str)
    if backgrounds is None:
        default_bg = input_dir / BACKGROUNDS_DIRNAME
        backgrounds = default_bg if default_bg.is_dir() else None
    if backgrounds is None and method in (Method.CPIL, Method.DBI):
        raise ConfigError(
            f"method {method.value} needs a background pool: pass --backgrounds "
            f"or provide {input_dir / BACKGROUNDS_DIRNAME}"
        )

    ds = load_layout(input_dir)
    if backgrounds is not None:
        ds.background_pool = load_backgrounds(backgrounds)
    logger.info("loaded %d images, %d annotations, %d backgrounds",
                len(ds.images), len(ds.annotations), len(ds.background_pool))

    out, report = augment_dataset(ds, cfg)
    write_dataset(out, output_dir)
    report.write(output_dir / REPORT_FILENAME)
    logger.info("wrote %d images to %s", len(out.images), output_dir)
    print(json.dumps(report.counts(), sort_keys=True))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    res = _Resolver(args)
    cfg = SceneConfig(
        size=res.get("size", 96, int),
        ship_count=(res.get("ships_min", 1, int), res.get("ships_max", 3, int)),
        ship_size=(res.get("ship_size_min", 8, int), res.get("ship_size_max", 24, int)),
        background_mean=res.get("mean", 40.0, float),
        looks=res.get("looks", 4, int),
        shadow=not bool(res.get("no_shadow", False, _parse_bool)),
        depth=res.get("depth", 8, int),
    )
    cfg.validate()
    n_images = res.get("images", 16, int)
    n_backgrounds = res.get("backgrounds", 2, int)
    if n_images < 1 or n_backgrounds < 0:
        raise ConfigError("--images must be >= 1 and --backgrounds >= 0")
    ds = generate_dataset(cfg, n_images, seed=res.seed(), n_backgrounds=n_backgrounds)
    write_dataset(ds, Path(args.output))
    logger.info("wrote %d images, %d annotations to %s",
                len(ds.images), len(ds.annotations), args.output)
    print(json.dumps({"images": len(ds.images), "annotations": len(ds.annotations),
                      "backgrounds": len(ds.background_pool)}, sort_keys=True))
    return 0


def _dataset_stats(ds: Dataset) -> dict:
    classes = {"S": 0, "M": 0, "L": 0}
    for ann in ds.annotations:
        classes[size_class(ann.bbox.area)] += 1
    return {
        "images": len(ds.images),
        "annotations": len(ds.annotations),
        "backgrounds": len(ds.background_pool),
        "size_classes": classes,
    }


def cmd_inspect(args: argparse.Namespace) -> int:
    ds = load_layout(Path(args.input), with_backgrounds=True)
    print(json.dumps(_dataset_stats(ds), sort_keys=True))
    return 0


def cmd_dcn_check(args: argparse.Namespace) -> int:
    res = _Resolver(args)
    results = dcn_verify.run_all_checks(
        seed=res.seed(),
        equivalence_cases=res.get("cases", 100, int),
        conv_grad_cases=res.get("grad_cases", 10, int),
        pool_grad_cases=res.get("grad_cases", 10, int),
        inject_fault=bool(args.inject_fault),
    )
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadowsmith",
        description="Instance-level SAR augmentation toolkit and deformable-kernel checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", metavar="FILE",
                       help="key = value overlay (flags take precedence)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("augment", help="augment a dataset")
    p.add_argument("--input", required=True, metavar="DIR")
    p.add_argument("--output", required=True, metavar="DIR")
    p.add_argument("--method", type=_method, default=None,
                   help="cpil, re, dbi, or none")
    p.add_argument("--rs-min", type=float, default=None)
    p.add_argument("--rs-max", type=float, default=None)
    p.add_argument("--ra-min", type=float, default=None)
    p.add_argument("--ra-max", type=float, default=None)
    p.add_argument("--prob", type=float, default=None,
                   help="per-instance application probability")
    p.add_argument("--copies", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--backgrounds", metavar="DIR", default=None)
    p.add_argument("--include-originals", action="store_true", default=None)
    add_common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--output", required=True, metavar="DIR")
    p.add_argument("--images", type=int, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--ships-min", type=int, default=None)
    p.add_argument("--ships-max", type=int, default=None)
    p.add_argument("--ship-size-min", type=int, default=None)
    p.add_argument("--ship-size-max", type=int, default=None)
    p.add_argument("--mean", type=float, default=None)
    p.add_argument("--looks", type=int, default=None)
    p.add_argument("--depth", type=int, choices=(8, 16), default=None)
    p.add_argument("--backgrounds", type=int, default=None,
                   help="number of ship-free pool images")
    p.add_argument("--no-shadow", action="store_true", default=None)
    add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="print dataset statistics")
    p.add_argument("--input", required=True, metavar="DIR")
    p.add_argument("--config", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("dcn-check", help="run the kernel verification suite")
    p.add_argument("--cases", type=int, default=None,
                   help="zero-offset equivalence cases per kernel")
    p.add_argument("--grad-cases", type=int, default=None,
                   help="finite-difference cases per kernel")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    add_common(p)
    p.set_defaults(func=cmd_dcn_check)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return 2
    except ShadowsmithError as exc:
        logger.error("%s", exc)
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
