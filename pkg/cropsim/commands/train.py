# cropsim/commands/train.py
import argparse
import logging
import sys
from dataclasses import replace

from cropsim.commands.common import (
    CommandError,
    add_common_arguments,
    app_config,
    experiment_config,
    load_split,
    load_vocabulary,
)
from cropsim.dataset.sampling import ImageCache
from cropsim.services.checkpoint_service import CheckpointService
from cropsim.services.logging_service import LogCategory, LogLevel, RunLogger
from cropsim.services.service_loader import init_training_services, prepare_runtime
from cropsim.traits.biomass import labelled_images, train_biomass_regressor
from cropsim.utils.config import TrainConfig, normalize_conditions

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="train the conditional generator and critic")
    add_common_arguments(parser)
    parser.add_argument("--conditions", default=None, help="comma list from t,c,b (t required)")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--n-critic", type=int, default=None)
    parser.add_argument("--lambda-gp", type=float, default=None)
    parser.add_argument("--image-size", type=int, default=None)
    parser.add_argument("--extractor", choices=["seeded", "vgg16"], default=None)
    parser.add_argument("--max-val-pairs", type=int, default=None)
    parser.add_argument("--resume", default=None, help="checkpoint to resume from (e.g. last.pt)")
    parser.set_defaults(handler=cmd_train)

    reg = subparsers.add_parser("train-regressor", help="train the two-species biomass estimator")
    add_common_arguments(reg)
    reg.add_argument("--epochs", type=int, default=None)
    reg.add_argument("--image-size", type=int, default=None)
    reg.set_defaults(handler=cmd_train_regressor)


def train_config_from_args(args: argparse.Namespace, n_treatments: int) -> TrainConfig:
    config = experiment_config(args).train
    model_overrides = {"n_treatments": n_treatments}
    if args.conditions is not None:
        model_overrides["conditions"] = normalize_conditions(args.conditions)
    if args.image_size is not None:
        model_overrides["image_size"] = args.image_size
    overrides = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "n_critic": args.n_critic,
        "lambda_gp": args.lambda_gp,
        "extractor": args.extractor,
        "max_val_pairs": args.max_val_pairs,
    }
    return replace(
        config,
        model=replace(config.model, **model_overrides),
        **{k: v for k, v in overrides.items() if v is not None},
    )


def cmd_train(args: argparse.Namespace) -> int:
    train_records = load_split(args.manifest, "train")
    val_records = load_split(args.manifest, "val")
    vocab = load_vocabulary(args.manifest, train_records + val_records)
    config = train_config_from_args(args, len(vocab))
    if "b" in config.conditions:
        missing = [r.sequence_id for r in train_records + val_records if not r.has_biomass()]
        if missing:
            raise CommandError(f"biomass conditioning needs labels for every image; missing in {missing[:5]}")

    device = prepare_runtime(app_config(), config.seed)
    services = init_training_services(config, args.out, device=device, progress=sys.stderr.isatty())
    resume = None
    if args.resume:
        resume = services.checkpoints.load(args.resume, map_location=device)

    services.trainer.fit(train_records, val_records, resume_from=resume)
    logger.info(f"Best checkpoint: {args.out / 'best.pt'} (epoch {services.trainer.best_epoch})")
    return 0


def cmd_train_regressor(args: argparse.Namespace) -> int:
    experiment = experiment_config(args)
    config = experiment.regressor
    if args.epochs is not None:
        config = replace(config, epochs=args.epochs)
    image_size = args.image_size or experiment.train.image_size

    train_records = load_split(args.manifest, "train", require_biomass=True)
    val_records = load_split(args.manifest, "val", require_biomass=True)
    device = prepare_runtime(app_config(), config.seed)
    train_x, train_y = labelled_images(train_records, ImageCache(train_records, image_size))
    val_x, val_y = labelled_images(val_records, ImageCache(val_records, image_size))

    run_logger = RunLogger(args.out)
    run_logger.log(
        LogCategory.DATA,
        LogLevel.INFO,
        "Biomass regressor data",
        {"train_images": len(train_x), "val_images": len(val_x), "image_size": image_size},
    )
    regressor, history = train_biomass_regressor(train_x, train_y, config, val_x, val_y, device=device)
    path = CheckpointService(args.out).save_regressor(
        regressor,
        args.out / "biomass.pt",
        {
            "best_epoch": history.best_epoch,
            "image_size": image_size,
            "val_metrics": history.val_metrics,
            "train_mse": history.train_mse,
            "val_mse": history.val_mse,
        },
    )
    run_logger.log(
        LogCategory.CHECKPOINT,
        LogLevel.SUCCESS,
        f"Biomass regressor saved to {path}",
        {"best_epoch": history.best_epoch},
    )
    run_logger.write_summary(
        {"best_epoch": history.best_epoch, "val_metrics": history.val_metrics},
        name="regressor_summary.json",
    )
    return 0
