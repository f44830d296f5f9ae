"""Command-line interface.

Subcommands: generate, degrade, group, segment, evaluate, volumes,
fit-ageing. Exit codes: 0 success, 1 usage error, 2 runtime failure.
All randomness flows from --seed.
"""

import argparse
import os
import sys

import numpy as np

from . import generator, hierarchy, metrics, volumetry
from .labels import TISSUE_CLASS_IDS, default_taxonomy, group_tissues, load_taxonomy
from .nifti import NiftiParseError, read_nifti, write_nifti
from .priors import (overrides_from_config, parse_config, preset_priors)
from .volume import INTENSITY, LABEL


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_priors_options(sub):
    sub.add_argument("--preset", default=None,
                     choices=["generative", "degradation"])
    sub.add_argument("--config", default=None,
                     help="flat key=value file of prior overrides")
    sub.add_argument("--override", action="append", default=[],
                     metavar="KEY=LO,HI", help="inline prior override")
    sub.add_argument("--seed", type=int, default=0)


def _resolve_priors(args, default_preset):
    priors = preset_priors(args.preset or default_preset)
    config = {}
    if args.config:
        config.update(parse_config(args.config))
    for item in args.override:
        if "=" not in item:
            raise UsageError(f"--override expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        config[key.strip()] = value.strip()
    if config:
        priors = priors.with_overrides(overrides_from_config(config))
    return priors


def _load_taxonomy(args):
    if getattr(args, "taxonomy", None):
        return load_taxonomy(args.taxonomy)
    return default_taxonomy()


def _label_paths(spec):
    if os.path.isdir(spec):
        names = sorted(n for n in os.listdir(spec)
                       if n.endswith(".nii") or n.endswith(".nii.gz"))
        paths = [os.path.join(spec, n) for n in names]
    else:
        paths = [spec]
    if not paths:
        raise UsageError(f"no label maps found at {spec}")
    return paths


def _cmd_generate(args):
    priors = _resolve_priors(args, "generative")
    tax = _load_taxonomy(args)
    paths = _label_paths(args.labels)
    generator.generate_dataset(paths, args.out, args.n, priors,
                               role=getattr(args, "for"), seed=args.seed,
                               workers=args.workers, tax=tax)
    print(f"wrote {args.n} pairs to {args.out}")
    return 0


def _cmd_degrade(args):
    priors = _resolve_priors(args, "degradation")
    image = read_nifti(args.image, kind=INTENSITY)
    labels = read_nifti(args.labels, kind=LABEL)
    rng = np.random.default_rng(args.seed)
    degraded, warped = generator.degrade_image(image, labels, priors, rng)
    os.makedirs(args.out, exist_ok=True)
    write_nifti(os.path.join(args.out, "degraded.nii.gz"), degraded)
    write_nifti(os.path.join(args.out, "labels.nii.gz"), warped)
    generator.write_meta(os.path.join(args.out, "meta.txt"),
                         {"seed": args.seed, "preset": priors.preset,
                          "image": args.image, "labels": args.labels})
    print(f"wrote degraded pair to {args.out}")
    return 0


def _cmd_group(args):
    tax = _load_taxonomy(args)
    labels = read_nifti(getattr(args, "in"), kind=LABEL)
    write_nifti(args.out, group_tissues(labels, tax))
    return 0


def _build_segment_spec(args, tax):
    tissue_ids = TISSUE_CLASS_IDS
    predicted = tuple(tax.predicted_values)
    variant = args.variant
    preds = {}

    def need(flag, value):
        if not value:
            raise UsageError(f"--variant {variant} requires {flag}")
        return value

    if variant == hierarchy.SYNTHSEG:
        preds["S"] = hierarchy.external_predictor(
            need("--s-cmd", args.s_cmd), predicted)
    elif variant == hierarchy.CASCADE:
        preds["S1"] = hierarchy.external_predictor(
            need("--s1-cmd", args.s1_cmd), tissue_ids)
        preds["S2"] = hierarchy.external_predictor(
            need("--s2-cmd", args.s2_cmd), predicted, wants_conditioning=True)
    elif variant == hierarchy.SYNTHSEG_PLUS:
        preds["S1"] = hierarchy.external_predictor(
            need("--s1-cmd", args.s1_cmd), tissue_ids)
        preds["D"] = hierarchy.external_predictor(
            need("--d-cmd", args.d_cmd), tissue_ids,
            wants_image=False, wants_conditioning=True)
        preds["S2"] = hierarchy.external_predictor(
            need("--s2-cmd", args.s2_cmd), predicted, wants_conditioning=True)
    else:  # postdenoise
        if args.s_cmd:
            preds["S"] = hierarchy.external_predictor(args.s_cmd, predicted)
        else:
            preds["S1"] = hierarchy.external_predictor(
                need("--s1-cmd", args.s1_cmd), tissue_ids)
            preds["S2"] = hierarchy.external_predictor(
                need("--s2-cmd", args.s2_cmd), predicted,
                wants_conditioning=True)
        preds["D"] = hierarchy.external_predictor(
            need("--d-cmd", args.d_cmd), predicted,
            wants_image=False, wants_conditioning=True)
    return hierarchy.PipelineSpec(variant, preds)


def _cmd_segment(args):
    tax = _load_taxonomy(args)
    spec = _build_segment_spec(args, tax)
    image = read_nifti(getattr(args, "in"), kind=INTENSITY)
    final, intermediates = hierarchy.run_pipeline(spec, image)
    write_nifti(args.out, final)
    if args.intermediates:
        os.makedirs(args.intermediates, exist_ok=True)
        for role, soft in intermediates.items():
            write_nifti(os.path.join(args.intermediates, f"{role}.nii.gz"), soft)
    print(f"wrote segmentation to {args.out}")
    return 0


def _cmd_evaluate(args):
    pred = read_nifti(args.pred, kind=LABEL)
    gt = read_nifti(args.gt, kind=LABEL)
    labels = None
    if args.labels:
        labels = [int(v) for v in args.labels.split(",") if v.strip()]
    tax = _load_taxonomy(args) if args.taxonomy else None
    report = metrics.hard_dice(pred, gt, labels)
    csv_text = report.to_csv(tax)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    print(f"mean_dice={report.mean:.6f}")
    return 0


def _cmd_volumes(args):
    labels = read_nifti(getattr(args, "in"), kind=LABEL)
    tax = _load_taxonomy(args) if args.taxonomy else None
    csv_text = metrics.volumes_to_csv(metrics.region_volumes(labels), tax)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    return 0


def _cmd_fit_ageing(args):
    samples = volumetry.load_samples_csv(args.csv, region=args.region)
    if not samples:
        raise ValueError(f"no samples for region {args.region} in {args.csv}")
    if args.lmbda == "auto":
        lam, model = volumetry.select_lambda(samples, direction=args.direction)
    else:
        lam = float(args.lmbda)
        model = volumetry.fit_ageing(samples, lam, direction=args.direction)
    with open(f"{args.out_prefix}_coeffs.csv", "w", encoding="utf-8") as fh:
        fh.write(volumetry.model_to_csv(model))
    with open(f"{args.out_prefix}_trajectory.csv", "w", encoding="utf-8") as fh:
        fh.write(volumetry.trajectory_to_csv(model))
    print(f"lambda={lam!r} violation={volumetry.monotonicity_violation(model):.3e}")
    return 0


def build_parser():
    parser = _Parser(prog="synthbrain",
                     description="Synthetic MRI generation, degradation, "
                                 "hierarchical segmentation and ageing fits")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[], help="generate training pairs")
    p.add_argument("--labels", required=True, help="label map file or directory")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--for", dest="for", default="s1", choices=["s1", "s2"])
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--taxonomy", default=None)
    _add_priors_options(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("degrade", help="degrade a real image + labels")
    p.add_argument("--image", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    _add_priors_options(p)
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("group", help="collapse labels to tissue classes")
    p.add_argument("--in", dest="in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--taxonomy", default=None)
    p.set_defaults(func=_cmd_group)

    p = sub.add_parser("segment", help="run a segmentation pipeline variant")
    p.add_argument("--variant", required=True, choices=list(hierarchy.VARIANTS))
    p.add_argument("--in", dest="in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--s-cmd", default=None)
    p.add_argument("--s1-cmd", default=None)
    p.add_argument("--d-cmd", default=None)
    p.add_argument("--s2-cmd", default=None)
    p.add_argument("--intermediates", default=None)
    p.add_argument("--taxonomy", default=None)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("evaluate", help="Dice report between two label maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--labels", default=None, help="comma-separated label values")
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("volumes", help="per-region volumes in mm^3")
    p.add_argument("--in", dest="in", required=True)
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_volumes)

    p = sub.add_parser("fit-ageing", help="fit the volumetric ageing model")
    p.add_argument("--csv", required=True)
    p.add_argument("--region", type=int, required=True)
    p.add_argument("--lambda", dest="lmbda", default="auto")
    p.add_argument("--direction", default=volumetry.DECREASING,
                   choices=[volumetry.DECREASING, volumetry.INCREASING])
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_fit_ageing)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:   # --help
        return int(exc.code or 0)
    try:
        return args.func(args) or 0
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ValueError, OSError, NiftiParseError,
            hierarchy.PredictorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
