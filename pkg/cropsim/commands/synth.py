# cropsim/commands/synth.py
import argparse
import logging
import sys
from dataclasses import replace

from cropsim.commands.common import add_common_arguments, experiment_config
from cropsim.dataset.synth import synth_generate

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("synth", help="render a synthetic crop-plot dataset")
    add_common_arguments(parser, manifest=False)
    parser.add_argument("--n-sequences", type=int, default=None)
    parser.add_argument("--n-times", type=int, default=None)
    parser.add_argument("--image-size", type=int, default=None)
    parser.add_argument("--n-treatments", type=int, default=None)
    parser.add_argument(
        "--site-shift", type=float, default=None, help="soil/illumination shift of a second site"
    )
    parser.set_defaults(handler=cmd_synth)


def cmd_synth(args: argparse.Namespace) -> int:
    config = experiment_config(args).synth
    overrides = {
        "n_sequences": args.n_sequences,
        "n_times": args.n_times,
        "image_size": args.image_size,
        "n_treatments": args.n_treatments,
        "site_shift": args.site_shift,
    }
    config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    manifest = synth_generate(config, args.out, progress=sys.stderr.isatty())
    logger.info(f"Days: {config.times}; manifest: {manifest}")
    return 0
