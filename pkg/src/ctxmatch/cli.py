"""Batch command line: synth, codebook, train, infer, regularize, eval.

Every stage is seeded and writes deterministic artifacts, so a pipeline run
twice with the same seed produces byte-identical models and metric reports.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from ctxmatch import boosting, matcher
from ctxmatch.backend import set_num_threads
from ctxmatch.bench import io as bio
from ctxmatch.bench import metrics as bmetrics
from ctxmatch.bench.synth import synth_generate
from ctxmatch.codebook import (
    Codebook,
    codebook_digest,
    load_codebook,
    save_codebook,
    train_kmeans,
)
from ctxmatch.config import default_config, load_config, save_config
from ctxmatch.crf import CrfConfig, regularize
from ctxmatch.data import DatasetPair, DisparityMap, FlowField
from ctxmatch.features import dense_descriptor, filter_bank_17
from ctxmatch.grid import Image, to_cielab
from ctxmatch.matcher import winner_take_all
from ctxmatch.representation import build_representation, sample_rectangles


def _fail(msg: str) -> int:
    print("error: %s" % msg, file=sys.stderr)
    return 1


def _parse_params(items: Optional[Sequence[str]]) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError("parameter %r is not key=value" % item)
        key, val = item.split("=", 1)
        out[key] = yaml.safe_load(val)
    return out


def _bow_families(cfg: dict) -> Tuple[str, ...]:
    return tuple(cfg["families"])


def _codebook_path(outdir: Path, family: str) -> Path:
    return outdir / ("%s.codebook" % family)


def _load_codebooks(cbdir: str, families: Tuple[str, ...]) -> Dict[str, Codebook]:
    books = {}
    for fam in families:
        path = _codebook_path(Path(cbdir), fam)
        if not path.exists():
            raise FileNotFoundError("missing codebook file: %s" % path)
        books[fam] = load_codebook(path)
    return books


def _digests(cbdir: str, families: Tuple[str, ...]) -> Dict[str, str]:
    return {fam: codebook_digest(_codebook_path(Path(cbdir), fam)) for fam in families}


def _build_rep(img: Image, books: Dict[str, Codebook], cfg: dict):
    return build_representation(
        img, books, _bow_families(cfg),
        descriptor_params=cfg["descriptor_params"],
        bow_factor=cfg["bow_factor"],
    )


def _build_rep_for_model(img: Image, books: Dict[str, Codebook], model, cfg: dict):
    return build_representation(
        img, books, model.families[:-1],
        descriptor_params=cfg["descriptor_params"],
        bow_factor=model.bow_factor,
    )


def _descriptor_field(img: Image, family: str, cfg: dict):
    lab = to_cielab(img)
    if family == "texton":
        return filter_bank_17(lab)
    return dense_descriptor(lab, family, **cfg["descriptor_params"].get(family, {}))


def _downsample_image(img: Image, factor: int) -> Image:
    """Block-average downsampling; trailing partial rows/columns dropped."""
    c, h, w = img.data.shape
    hh, ww = h // factor, w // factor
    blocks = img.data[:, :hh * factor, :ww * factor]
    blocks = blocks.reshape(c, hh, factor, ww, factor)
    return Image.from_array(np.moveaxis(blocks.mean(axis=(2, 4)), 0, 2))


def _downsample_flow(gt: FlowField, factor: int) -> FlowField:
    """Per-block mean of valid flow vectors, divided by the factor; a block
    with no valid pixel is invalid."""
    h, w = gt.valid.shape
    hh, ww = h // factor, w // factor
    vals = gt.values[:hh * factor, :ww * factor].reshape(hh, factor, ww, factor, 2)
    ok = gt.valid[:hh * factor, :ww * factor].reshape(hh, factor, ww, factor)
    cnt = ok.sum(axis=(1, 3))
    summed = (vals * ok[:, :, :, :, None]).sum(axis=(1, 3))
    valid = cnt > 0
    mean = np.where(valid[:, :, None], summed / np.maximum(cnt, 1)[:, :, None], 0.0)
    return FlowField(values=mean / factor, valid=valid)


def _flow_protocol_pair(pair: DatasetPair, factor: int) -> DatasetPair:
    if factor <= 1:
        return pair
    return DatasetPair(
        image1=_downsample_image(pair.image1, factor),
        image2=_downsample_image(pair.image2, factor),
        ground_truth=_downsample_flow(pair.ground_truth, factor),
    )


def _flow_window(cfg: dict) -> Tuple[int, int, int, int]:
    fx0, fx1, fy0, fy1 = cfg["flow"]["window"]
    return int(fx0), int(fx1), int(fy0), int(fy1)


def _crf_config(cfg: dict) -> CrfConfig:
    c = cfg["crf"]
    return CrfConfig(
        sigma_app=float(c["sigma_app"]), sigma_loc=float(c["sigma_loc"]),
        sigma_pln=float(c["sigma_pln"]), sigma=float(c["sigma"]),
        pairwise_weight=float(c["pairwise_weight"]),
        max_iters=int(c["max_iters"]), ransac_iters=int(c["ransac_iters"]),
        radius=None if c["radius"] is None else int(c["radius"]),
    )


def _write_report(report: Dict[str, float], path: Optional[str]) -> None:
    text = yaml.safe_dump({k: float(v) for k, v in sorted(report.items())},
                          sort_keys=True, default_flow_style=False)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    params = _parse_params(args.param)
    outdir = Path(args.out)
    for i in range(args.count):
        pair = synth_generate(args.kind, seed=args.seed + i, **params)
        dest = outdir if args.count == 1 else outdir / ("pair_%03d" % i)
        bio.save_pair(pair, dest)
    return 0


def cmd_codebook(args) -> int:
    cfg = load_config(args.config)
    stride = int(cfg["kmeans_stride"])
    pairs = [bio.load_pair(p) for p in args.pairs]
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for fam in _bow_families(cfg):
        chunks: List[np.ndarray] = []
        for pair in pairs:
            for img in (pair.image1, pair.image2):
                fld = _descriptor_field(img, fam, cfg)
                chunks.append(fld.data[::stride, ::stride].reshape(-1, fld.dim))
        samples = np.concatenate(chunks, axis=0)
        cb = train_kmeans(samples, int(cfg["codebook_k"]), seed=args.seed, kind=fam)
        save_codebook(cb, _codebook_path(outdir, fam))
        print("codebook %s: %d words from %d samples" % (fam, cb.k, len(samples)))
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    pairs = [bio.load_pair(p) for p in args.pairs]
    task = pairs[0].task
    if any(p.task != task for p in pairs):
        return _fail("training pairs mix tasks")
    if task == "flow":
        factor = int(cfg["flow"]["downsample"])
        pairs = [_flow_protocol_pair(p, factor) for p in pairs]
    books = _load_codebooks(args.codebooks, _bow_families(cfg))
    reps = [(_build_rep(p.image1, books, cfg), _build_rep(p.image2, books, cfg))
            for p in pairs]
    rects = sample_rectangles(
        seed=int(cfg["rects"]["seed"]),
        count=int(cfg["rects"]["count"]),
        max_extent=int(cfg["rects"]["max_extent"]),
    )
    bo = cfg["boost"]
    samples = boosting.assemble_samples(
        pairs,
        neg_ratio=int(bo["neg_ratio"]),
        seed=args.seed,
        d_max=int(cfg["stereo"]["d_max"]) if task == "stereo" else None,
        flow_window=_flow_window(cfg) if task == "flow" else None,
        max_positives=None if bo["max_positives"] is None else int(bo["max_positives"]),
    )
    model, losses = boosting.train(
        samples, reps, rects,
        rounds=int(bo["rounds"]),
        dims_per_round=int(bo["dims_per_round"]),
        seed=args.seed,
        absolute=bool(bo["absolute"]),
        neg_ratio=int(bo["neg_ratio"]),
        codebook_digests=_digests(args.codebooks, _bow_families(cfg)),
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    boosting.save_model(model, args.out)
    print("trained %d stumps on %d samples, final loss %.6f"
          % (model.n_stumps, len(samples), losses[-1]))
    return 0


def _load_model_and_pair(args, cfg):
    if not Path(args.model).exists():
        raise FileNotFoundError("missing model file: %s" % args.model)
    model = boosting.load_model(args.model)
    pair = bio.load_pair(args.pair)
    books = _load_codebooks(args.codebooks, model.families[:-1])
    want = model.codebook_digests
    have = _digests(args.codebooks, model.families[:-1])
    for fam, dig in want.items():
        if dig and have.get(fam) != dig:
            raise ValueError("codebook digest mismatch for family %r" % fam)
    return model, pair, books


def cmd_infer(args) -> int:
    cfg = load_config(args.config)
    model, pair, books = _load_model_and_pair(args, cfg)
    if args.task == "flow":
        pair = _flow_protocol_pair(pair, int(cfg["flow"]["downsample"]))
    rep1 = _build_rep_for_model(pair.image1, books, model, cfg)
    rep2 = _build_rep_for_model(pair.image2, books, model, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.task == "stereo":
        d_max = int(cfg["stereo"]["d_max"])
        vol = matcher.score_stereo(model, rep1, rep2, d_max)
        labels = winner_take_all(vol)
        if args.validate:
            back = winner_take_all(matcher.score_stereo_backward(model, rep1, rep2, d_max))
            labels = matcher.inverse_validate(labels, back, tol=float(cfg["validate_tol"]))
        bio.save_disparity(DisparityMap(values=labels.disparity(), valid=labels.valid), out)
        if args.volume:
            matcher.save_volume(vol, args.volume)
    elif args.task == "flow":
        window = _flow_window(cfg)
        vol = matcher.score_flow(model, rep1, rep2, window)
        labels = winner_take_all(vol)
        if args.validate:
            back = winner_take_all(matcher.score_flow_backward(model, rep1, rep2, window))
            labels = matcher.inverse_validate(labels, back, tol=float(cfg["validate_tol"]))
        bio.write_flow(FlowField(values=labels.flow(), valid=labels.valid), out)
        if args.volume:
            matcher.save_volume(vol, args.volume)
    else:  # change
        vol = matcher.score_change(model, rep1, rep2)
        mask = vol.scores[:, :, 0] < float(cfg["change_threshold"])
        bio.save_mask(mask, out)
        if args.volume:
            matcher.save_volume(vol, args.volume)
    return 0


def cmd_regularize(args) -> int:
    cfg = load_config(args.config)
    vol = matcher.load_volume(args.volume)
    pair = bio.load_pair(args.pair)
    valid_mask = None
    if args.valid_from:
        est = bio.load_kitti_disparity(args.valid_from)
        valid_mask = est.valid
    labels = regularize(vol, pair.image1, _crf_config(cfg), seed=args.seed,
                        valid_mask=valid_mask)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    bio.save_disparity(DisparityMap(values=labels.disparity(), valid=labels.valid),
                       args.out)
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    pair = bio.load_pair(args.pair)
    if pair.task == "stereo":
        est = bio.load_kitti_disparity(args.est)
        report = bmetrics.stereo_metrics(est.values, pair.ground_truth, pair.occlusion)
    elif pair.task == "flow":
        gt = _downsample_flow(pair.ground_truth, int(cfg["flow"]["downsample"]))
        report = bmetrics.flow_metrics(bio.read_flow(args.est), gt)
    else:
        scores = np.where(bio.load_mask(args.est), -1.0, 1.0)
        report = bmetrics.change_metrics(scores, 0.5, pair.ground_truth)
    _write_report(report, args.out)
    return 0


def cmd_config(args) -> int:
    save_config(default_config(), args.out)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ctxmatch",
        description="Learned pixel-matching: training, score volumes, CRF regularization.",
    )
    ap.add_argument("--seed", type=int, default=0, help="master random seed")
    ap.add_argument("--config", default=None, help="YAML configuration file")
    ap.add_argument("--threads", type=int, default=None, help="kernel thread count")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic labelled pair")
    p.add_argument("--kind", required=True,
                   choices=["shift-stereo", "plane-scene", "two-plane",
                            "flow-shift", "change-paste"])
    p.add_argument("--out", required=True, help="output pair directory")
    p.add_argument("--count", type=int, default=1, help="number of pairs")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="generator parameter override")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("codebook", help="train visual vocabularies")
    p.add_argument("--pairs", nargs="+", required=True, help="pair directories")
    p.add_argument("--out", required=True, help="output codebook directory")
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("train", help="boost a matching classifier")
    p.add_argument("--pairs", nargs="+", required=True, help="pair directories")
    p.add_argument("--codebooks", required=True, help="codebook directory")
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="evaluate a model into a label map")
    p.add_argument("task", choices=["stereo", "flow", "change"])
    p.add_argument("--model", required=True)
    p.add_argument("--codebooks", required=True, help="codebook directory")
    p.add_argument("--pair", required=True, help="pair directory")
    p.add_argument("--out", required=True, help="output disparity/flow/mask file")
    p.add_argument("--volume", default=None, help="also save the raw score volume")
    p.add_argument("--validate", action="store_true",
                   help="inverse-matching consistency check")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("regularize", help="mean-field CRF over a stereo volume")
    p.add_argument("--volume", required=True, help="saved score volume")
    p.add_argument("--pair", required=True, help="pair directory (for image 1)")
    p.add_argument("--out", required=True, help="output disparity file")
    p.add_argument("--valid-from", default=None,
                   help="disparity file whose invalid pixels get uniform unaries")
    p.set_defaults(func=cmd_regularize)

    p = sub.add_parser("eval", help="score an estimate against ground truth")
    p.add_argument("--est", required=True, help="estimated disparity/flow/mask file")
    p.add_argument("--pair", required=True, help="pair directory with ground truth")
    p.add_argument("--out", default=None, help="metrics report file (YAML)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("config", help="write the default configuration")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_config)

    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    if args.threads is not None:
        set_num_threads(args.threads)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, ArithmeticError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
