"""Command-line surface binding all modules into reproducible experiments.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.  Every
command takes a single 64-bit seed; identical config + seed reproduce
bit-identical output files (trace CSVs may differ in the seconds column).
"""

import argparse
import os
import sys

import numpy as np

from . import classify as CLF
from . import config as CFG
from . import datasets as DS
from . import gradcheck as GC
from . import network as NET
from . import quilting as Q
from . import synthesis as SYN
from .imgio import load_png, save_png
from .optimize import OptTrace

__all__ = ["main"]


class UsageError(Exception):
    pass


def _load_image(path):
    if not os.path.isfile(path):
        raise UsageError(f"no such image file: {path}")
    return load_png(path)


def _load_cfg(path):
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise UsageError(f"no such config file: {path}")
    try:
        return CFG.load_config(path)
    except CFG.ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _make_net(cfg, seed):
    path = cfg.get("net")
    if path:
        if not os.path.isfile(path):
            raise UsageError(f"no such weight file: {path}")
        return NET.load_weights(path)
    return NET.init_random(NET.tex_net_small_spec(), seed=seed,
                           mean=np.full(3, 0.5))


def _make_job(cfg, args, net):
    size = cfg.get("size", 224)
    job = SYN.SynthesisJob(net=net, size=(size, size))
    if "layers" in cfg:
        job.layers = cfg["layers"]
    job.alpha = cfg.get("alpha", job.alpha)
    job.prior_weight = cfg.get("gamma", job.prior_weight)
    job.tv_exponent = cfg.get("tv_exponent", job.tv_exponent)
    job.grad_normalize = cfg.get("grad_normalize", job.grad_normalize)
    job.content_layer = cfg.get("content_layer", job.content_layer)
    job.iterations = cfg.get("iterations", job.iterations)
    job.seed = cfg.get("seed", 0)
    job.transfer_alpha = cfg.get("transfer_alpha", job.transfer_alpha)
    init = getattr(args, "init", None) or cfg.get("init")
    if init:
        job.init = init
    if "init_image" in cfg:
        job.init_image = _load_image(cfg["init_image"])
        job.init = "image"
    if getattr(args, "seed", None) is not None:
        job.seed = args.seed
    if getattr(args, "iterations", None) is not None:
        job.iterations = args.iterations
    if "patch" in cfg:
        job.quilt_params = Q.QuiltParams(
            patch=cfg["patch"],
            out_h=cfg.get("out_h", size),
            out_w=cfg.get("out_w", size),
            overlap=cfg.get("overlap", 0),
            tolerance=cfg.get("tolerance", 0.1),
            seed=job.seed,
        )
    snap = cfg.get("snapshot_every", 0)
    if snap > 0 and getattr(args, "out", None):
        base, ext = os.path.splitext(args.out)

        def snapshot(i, img, _fx):
            if i % snap == 0:
                save_png(img, f"{base}.iter{i:04d}{ext}")

        job.callback = snapshot
    return job


def _finish(image, trace, args):
    save_png(image, args.out)
    if getattr(args, "trace", None):
        trace.to_csv(args.trace)
    return 0


def cmd_synth(args):
    cfg = _load_cfg(args.config)
    source = _load_image(args.source)
    net = _make_net(cfg, cfg.get("seed", 0))
    job = _make_job(cfg, args, net)
    image, trace = SYN.synthesize_texture(job, source)
    return _finish(image, trace, args)


def cmd_transfer(args):
    cfg = _load_cfg(args.config)
    content = _load_image(args.content)
    style = _load_image(args.style)
    net = _make_net(cfg, cfg.get("seed", 0))
    job = _make_job(cfg, args, net)
    lam = args.lam if args.lam is not None else cfg.get("lambda", 1.0)
    image, trace = SYN.style_transfer(content, style, lam, job)
    return _finish(image, trace, args)


def _load_heads(paths):
    heads = {}
    for path in paths:
        if not os.path.isfile(path):
            raise UsageError(f"no such classifier file: {path}")
        clf = CLF.load_classifier(path)
        heads[clf.layer] = clf
    return heads


def cmd_invert(args):
    cfg = _load_cfg(args.config)
    heads = _load_heads(args.classifier)
    any_head = next(iter(heads.values()))
    if args.class_name not in any_head.class_names:
        raise UsageError(
            f"unknown class {args.class_name!r}; classifier knows "
            f"{list(any_head.class_names)}"
        )
    class_id = any_head.class_names.index(args.class_name)
    net = _make_net(cfg, cfg.get("seed", 0))
    job = _make_job(cfg, args, net)
    job.alpha = cfg.get("alpha", 0.0)  # pure inversion unless alpha given
    beta = args.beta if args.beta is not None else cfg.get("beta", 100.0)
    source = _load_image(args.texture) if args.texture else None
    image, trace = SYN.invert_category(class_id, job, heads, beta=beta,
                                       texture_source=source)
    return _finish(image, trace, args)


def cmd_edit(args):
    cfg = _load_cfg(args.config)
    heads = _load_heads(args.classifier)
    any_head = next(iter(heads.values()))
    targets = []
    for spec in args.attribute:
        name, _, weight = spec.partition("=")
        if name not in any_head.class_names:
            raise UsageError(f"unknown attribute {name!r}")
        try:
            w = float(weight) if weight else (1000.0 if args.mode == "texture" else 1.0)
        except ValueError as exc:
            raise UsageError(f"bad attribute weight in {spec!r}") from exc
        targets.append((any_head.class_names.index(name), w))
    source = _load_image(args.source)
    net = _make_net(cfg, cfg.get("seed", 0))
    job = _make_job(cfg, args, net)
    lam = cfg.get("lambda", 5e-8)
    image, trace = SYN.edit_with_attribute(source, targets, args.mode, job,
                                           heads, lam=lam)
    return _finish(image, trace, args)


def cmd_quilt(args):
    cfg = _load_cfg(args.config)
    source = _load_image(args.source)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    params = Q.QuiltParams(
        patch=cfg.get("patch", max(min(source.shape[:2]) // 4, 8)),
        out_h=cfg.get("out_h", cfg.get("size", source.shape[0])),
        out_w=cfg.get("out_w", cfg.get("size", source.shape[1])),
        overlap=cfg.get("overlap", 0),
        tolerance=cfg.get("tolerance", 0.1),
        seed=seed,
    )
    placements = []
    out = Q.quilt(source, params, placements=placements)
    save_png(out, args.out)
    worst = max((p.seam_cost - p.straight_cost for p in placements), default=0.0)
    print(f"quilt: {len(placements)} placements, "
          f"worst seam-vs-straight margin {worst:.3e}")
    return 0


def cmd_train(args):
    cfg = _load_cfg(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    dataset = DS.make_dataset(
        n_per_class=cfg.get("n_per_class", 12),
        base_size=cfg.get("base_size", 40),
        crop=cfg.get("crop", 32),
        seed=seed,
    )
    if args.head not in ("bilinear", "fc"):
        raise UsageError(f"unknown head {args.head!r} (use bilinear or fc)")
    if args.jitter not in ("f1", "f5", "f25"):
        raise UsageError(f"unknown jitter level {args.jitter!r}")
    model, err = CLF.train_head_scratch(dataset, args.head, args.jitter,
                                        epochs=cfg.get("epochs", 10), seed=seed)
    CLF.save_scratch_model(model, args.out + ".net", args.out + ".head")
    CLF.write_error_table(
        [{"head": args.head, "jitter": args.jitter, "seed": seed,
          "val_error": err}],
        args.out + ".csv",
    )
    print(f"train: head={args.head} jitter={args.jitter} seed={seed} "
          f"val_error={err:.4f}")
    return 0


def cmd_gradcheck(args):
    only = None if args.module == "all" else args.module
    if only is not None and only not in GC.MODULES:
        raise UsageError(f"unknown module {only!r}; "
                         f"choose from {sorted(GC.MODULES)} or 'all'")
    results = GC.run_all(seed=args.seed or 0, only=only)
    worst = 0.0
    for name, err in sorted(results.items()):
        status = "ok" if err < GC.THRESHOLD else "FAIL"
        print(f"gradcheck {name}: max relative error {err:.3e} [{status}]")
        worst = max(worst, err)
    return 0 if worst < GC.THRESHOLD else 1


def _build_parser():
    p = argparse.ArgumentParser(prog="gramtex",
                                description="Gram-feature texture engine")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="texture synthesis")
    sp.add_argument("source")
    sp.add_argument("--config")
    sp.add_argument("--init", choices=["rand", "quilt", "image"])
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace")
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("transfer", help="style transfer")
    tp.add_argument("content")
    tp.add_argument("style")
    tp.add_argument("--config")
    tp.add_argument("--init", choices=["rand", "quilt", "image"])
    tp.add_argument("--iterations", type=int)
    tp.add_argument("--seed", type=int)
    tp.add_argument("--lam", type=float, dest="lam")
    tp.add_argument("--out", required=True)
    tp.add_argument("--trace")
    tp.set_defaults(func=cmd_transfer)

    ip = sub.add_parser("invert", help="category inversion")
    ip.add_argument("class_name")
    ip.add_argument("--classifier", action="append", required=True)
    ip.add_argument("--config")
    ip.add_argument("--init", choices=["rand", "quilt", "image"])
    ip.add_argument("--iterations", type=int)
    ip.add_argument("--seed", type=int)
    ip.add_argument("--beta", type=float)
    ip.add_argument("--texture", help="optional texture source image")
    ip.add_argument("--out", required=True)
    ip.add_argument("--trace")
    ip.set_defaults(func=cmd_invert)

    ep = sub.add_parser("edit", help="attribute-based image editing")
    ep.add_argument("source")
    ep.add_argument("--attribute", action="append", required=True,
                    help="name or name=weight; repeatable")
    ep.add_argument("--mode", choices=["texture", "content"], default="texture")
    ep.add_argument("--classifier", action="append", required=True)
    ep.add_argument("--config")
    ep.add_argument("--init", choices=["rand", "quilt", "image"])
    ep.add_argument("--iterations", type=int)
    ep.add_argument("--seed", type=int)
    ep.add_argument("--out", required=True)
    ep.add_argument("--trace")
    ep.set_defaults(func=cmd_edit)

    qp = sub.add_parser("quilt", help="standalone image quilting")
    qp.add_argument("source")
    qp.add_argument("--config")
    qp.add_argument("--seed", type=int)
    qp.add_argument("--out", required=True)
    qp.set_defaults(func=cmd_quilt)

    rp = sub.add_parser("train", help="scratch-training jitter harness")
    rp.add_argument("--config")
    rp.add_argument("--head", required=True)
    rp.add_argument("--jitter", required=True)
    rp.add_argument("--seed", type=int)
    rp.add_argument("--out", required=True, help="output file prefix")
    rp.set_defaults(func=cmd_train)

    gp = sub.add_parser("gradcheck", help="finite-difference verification")
    gp.add_argument("--module", default="all")
    gp.add_argument("--seed", type=int)
    gp.set_defaults(func=cmd_gradcheck)

    return p


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NET.WeightFileError, CFG.ConfigError, FileNotFoundError,
            KeyError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
