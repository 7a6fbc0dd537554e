"""``fp-volseg`` command line entry point.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric or
contract error.  Diagnostics go to stderr; machine-readable results go to
stdout or to the files named by flags.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .errors import ContractError, DataError, FormatError, NumericError, ParameterError
from .focused_practice import save_checkpoint
from .inference import EnsembleSpec, ensemble_average, postprocess_open, threshold_prob
from .metrics import CONNECTIVITIES, DEFAULT_CONNECTIVITY, evaluate_case, summarize
from .model import ToyModel
from .patches import compute_grid, extract_array_patch
from .phantoms import PhantomSpec, load_case, read_manifest, split_model_wise, synthesize_dataset
from .training import TrainConfig, fit
from .volume import FORMAT_VERSION, atomic_write_bytes, load_volume, normalize_channels, save_volume, stack_channels

log = logging.getLogger("fpvolseg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _triple(text):
    parts = [int(p) for p in text.replace("x", ",").split(",")]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected N or Z,Y,X, got {text!r}")
    return tuple(parts)


def _float_triple(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected S or SZ,SY,SX, got {text!r}")
    return tuple(parts)


def _member(text):
    path, sep, weight = text.rpartition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected PATH:WEIGHT, got {text!r}")
    return path, float(weight)


def _emit(obj, out=None):
    line = json.dumps(obj)
    if out:
        atomic_write_bytes(out, (line + "\n").encode("utf-8"))
    else:
        print(line)


def cmd_synth(args):
    spec = PhantomSpec(
        shape=args.shape,
        n_lesions=args.n_lesions,
        lesion_radius_range=(args.radius_min, args.radius_max),
        pet_lesion_intensity=args.pet_lesion_intensity,
        pet_background=args.pet_background,
        ct_contrast=args.ct_contrast,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        spacing_mm=args.spacing,
    )
    records = synthesize_dataset(args.out_dir, args.n_cases, spec, args.normal_frac, args.seed, args.prefix)
    log.info("wrote %d cases to %s", len(records), args.out_dir)
    _emit({"manifest": os.path.join(args.out_dir, "manifest.jsonl"), "n_cases": len(records)})


def cmd_split(args):
    cases = read_manifest(args.manifest)
    val_sets, pool = split_model_wise(cases, args.k, args.lesion, args.normal, args.seed)
    _emit({"val_sets": val_sets, "train_pool": pool, "seed": args.seed}, args.out)


def _load_pair(ct_path, pet_path):
    return stack_channels(load_volume(ct_path), load_volume(pet_path))


def cmd_extract_patches(args):
    mc = normalize_channels(_load_pair(args.input, args.input_pet))
    grid = compute_grid(mc.shape, args.patch, args.overlap)
    arr = mc.as_array()
    arrays = {
        "origins": np.array(grid.origins, dtype=np.int64).reshape(-1, 3),
        "patches": np.stack([extract_array_patch(arr, o, grid.patch_size) for o in grid.origins]),
    }
    if args.mask:
        mask = load_volume(args.mask)
        arrays["masks"] = np.stack([extract_array_patch(mask.data, o, grid.patch_size) for o in grid.origins])
    tmp = args.out + ".part.npz"
    np.savez(tmp, **arrays)
    os.replace(tmp, args.out)
    _emit({"out": args.out, "n_patches": len(grid), "patch_size": list(grid.patch_size), "stride": list(grid.stride)})


def _cases_from_manifest(path):
    out = []
    for rec in read_manifest(path):
        ct, pet, mask = load_case(rec)
        out.append((stack_channels(ct, pet), mask))
    return out


def cmd_train(args):
    config = TrainConfig.from_file(args.config)
    if args.seed is not None:
        config = TrainConfig.from_mapping({**asdict(config), "seed": args.seed})
    train_cases = _cases_from_manifest(args.manifest)
    val_cases = _cases_from_manifest(args.val_manifest) if args.val_manifest else train_cases
    model, stats, registry = fit(config, train_cases, val_cases)
    model.save(args.model_out, patch_size=config.patch_size, overlap=config.overlap)
    trail = "".join(s.to_json() + "\n" for s in stats)
    if args.stats_out:
        atomic_write_bytes(args.stats_out, trail.encode("utf-8"))
    else:
        sys.stdout.write(trail)
    if args.registry_out:
        save_checkpoint(args.registry_out, registry)


def cmd_infer(args):
    model, meta = ToyModel.load(args.model)
    patch = args.patch or _triple(str(meta.get("patch_size", 64)))
    mc = _load_pair(args.input, args.input_pet)
    prob = model.predict_volume(mc, patch, args.overlap)
    save_volume(prob, args.out)
    _emit({"out": args.out, "shape": list(prob.shape)})


def cmd_ensemble(args):
    spec = EnsembleSpec(tuple((path, w) for path, w in args.member))
    probs = [load_volume(path) for path, _ in args.member]
    save_volume(ensemble_average(probs, spec), args.out)
    _emit({"out": args.out, "weights": spec.weights})


def cmd_postprocess(args):
    vol = load_volume(args.input)
    mask = vol if vol.kind == "mask" else threshold_prob(vol, args.threshold)
    if args.open_radius:
        mask = postprocess_open(mask, args.open_radius)
    save_volume(mask, args.out)
    _emit({"out": args.out, "foreground_voxels": int(mask.data.sum())})


def cmd_eval(args):
    if len(args.pred) != len(args.gt):
        raise ParameterError("--pred and --gt must be given the same number of times")
    ids = args.case_id or []
    if ids and len(ids) != len(args.pred):
        raise ParameterError("--case-id must be given once per --pred or not at all")
    lines, reports = [], []
    for i, (p, g) in enumerate(zip(args.pred, args.gt)):
        pred, gt = load_volume(p), load_volume(g)
        if pred.kind != "mask":
            pred = threshold_prob(pred, args.threshold)
        report = evaluate_case(pred, gt, args.connectivity)
        reports.append(report)
        case_id = ids[i] if ids else os.path.splitext(os.path.basename(p))[0]
        lines.append(json.dumps({"case_id": case_id, **report.as_dict()}))
    lines.append(json.dumps(summarize(reports)))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        atomic_write_bytes(args.out, text.encode("utf-8"))
    sys.stdout.write(text)


def build_parser():
    parser = _Parser(prog="fp-volseg", description="Patch-based volumetric lesion segmentation toolkit.")
    parser.add_argument("--version", action="version", version=f"fp-volseg {__version__} (format {FORMAT_VERSION})")
    parser.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic PET/CT phantoms")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-cases", type=int, default=10)
    p.add_argument("--normal-frac", type=float, default=0.5)
    p.add_argument("--shape", type=_triple, default=(64, 64, 64))
    p.add_argument("--n-lesions", type=int, default=2)
    p.add_argument("--radius-min", type=int, default=4)
    p.add_argument("--radius-max", type=int, default=7)
    p.add_argument("--pet-lesion-intensity", type=float, default=10.0)
    p.add_argument("--pet-background", type=float, default=1.0)
    p.add_argument("--ct-contrast", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.5)
    p.add_argument("--spacing", type=_float_triple, default=(1.5, 1.5, 1.5))
    p.add_argument("--prefix", default="case")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="model-wise validation split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--lesion", type=int, default=30)
    p.add_argument("--normal", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("extract-patches", help="cut a CT/PET pair into grid patches (npz)")
    p.add_argument("--input", required=True)
    p.add_argument("--input-pet", required=True)
    p.add_argument("--mask")
    p.add_argument("--patch", type=_triple, default=(64, 64, 64))
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_patches)

    p = sub.add_parser("train", help="train the toy model")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--val-manifest")
    p.add_argument("--model-out", required=True)
    p.add_argument("--stats-out")
    p.add_argument("--registry-out")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="sliding-window inference")
    p.add_argument("--input", required=True)
    p.add_argument("--input-pet", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--patch", type=_triple, default=None)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ensemble", help="weighted average of probability volumes")
    p.add_argument("--member", type=_member, action="append", required=True, metavar="PATH:WEIGHT")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("postprocess", help="threshold and optional morphological opening")
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--open-radius", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("eval", help="dice / FPV / FNV / score per case")
    p.add_argument("--pred", action="append", required=True)
    p.add_argument("--gt", action="append", required=True)
    p.add_argument("--case-id", action="append")
    p.add_argument("--connectivity", type=int, choices=CONNECTIVITIES, default=DEFAULT_CONNECTIVITY)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    if args.threads:
        import numba

        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        args.func(args)
    except ParameterError as exc:
        print(f"fp-volseg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DataError, OSError) as exc:
        print(f"fp-volseg: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ContractError) as exc:
        print(f"fp-volseg: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
