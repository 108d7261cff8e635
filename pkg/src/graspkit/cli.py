"""``graspkit`` command line: stage-by-stage pipeline over files.

Layout under ``--out`` (default ``run``)::

    gt/           generated ground-truth sequences
    perturbed/    perturbed copies of gt/
    represent/    feature dumps for inspection
    train/<net>/  weights.gkw, losses.csv
    refined/<v>/  refined sequences (network, then post-optimization)
    eval/<name>/  report.txt, per_frame.csv
    report/       report.md and SVG plots

Every stage directory carries a ``manifest.json`` with the config hash and
SHA-256 checksums of its inputs and outputs.  Exit codes: 0 success,
2 invalid configuration or arguments, 3 runtime failure (missing or corrupt
inputs included).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import container
from .hand_model import resolve_model
from .hstnet.config import ConfigError, NetworkConfig
from .hstnet.train import TrainHyper, load_checkpoint, make_sample, refine_sequence, save_checkpoint, train
from .metrics import SUMMARY_COLUMNS, MetricsReport, evaluate_many
from .perturbation import perturb_sequence
from .postopt import optimize, refine_parameters, trace_csv
from .representation import RepresentationKind, sequence_features
from .runconfig import RunConfig
from .sequence_io import filter_by_wrist_distance, generate_synthetic_sequence, load_sequence, save_sequence

log = logging.getLogger("graspkit")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
SEQ_SUFFIX = ".gks"
ABLATIONS = {
    "temporal=long_only": "long_only_temporal",
    "temporal=swap": "swap_temporal_order",
    "spatial=flat": "flat_spatial",
}


class UsageError(ValueError):
    """Invalid arguments or configuration (exit code 2)."""


class StageError(RuntimeError):
    """A stage could not complete (exit code 3)."""


# ---------------------------------------------------------------------------
# helpers


def _seed_for(seed: int, *path) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def _sha(path: Path) -> str:
    return container.sha256_file(path)


def _rel(path: Path, root: Path) -> str:
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return path.as_posix()


def _prepare_dir(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise UsageError(f"{path} already exists and is not empty (use --force to overwrite)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(stage_dir: Path, root: Path, stage: str, cfg: RunConfig, inputs: dict, outputs: list,
                    settings: dict | None = None) -> None:
    manifest = {
        "stage": stage,
        "config_hash": cfg.hash(),
        "inputs": inputs,
        "outputs": {_rel(p, root): _sha(p) for p in sorted(outputs)},
        "settings": settings or {},
    }
    (stage_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _sequence_files(directory: Path) -> list:
    if not directory.is_dir():
        raise StageError(f"input directory {directory} does not exist (run the upstream stage first)")
    files = sorted(directory.glob(f"*{SEQ_SUFFIX}"))
    if not files:
        raise StageError(f"no sequence files in {directory}")
    return files


def _load(path: Path):
    try:
        return load_sequence(path)
    except (ValueError, OSError) as exc:
        raise StageError(f"cannot read {path}: {exc}") from None


def _network_config(cfg: RunConfig, args) -> NetworkConfig:
    net = cfg.network_config()
    over = {}
    for item in getattr(args, "ablate", None) or []:
        if item not in ABLATIONS:
            raise UsageError(f"--ablate {item!r}: expected one of {', '.join(sorted(ABLATIONS))}")
        over[ABLATIONS[item]] = True
    if getattr(args, "representation", None):
        over["representation"] = args.representation
    return net.replace(**over) if over else net


def _net_name(net: NetworkConfig) -> str:
    return f"{net.representation}__{net.ablation}"


def _variant_name(net: NetworkConfig, postopt: bool) -> str:
    return _net_name(net) + ("" if postopt else "__nopost")


def _identity(net: NetworkConfig, postopt: bool) -> dict:
    return {"representation": net.representation, "ablation": net.ablation,
            "swap_temporal_order": net.swap_temporal_order, "long_only_temporal": net.long_only_temporal,
            "flat_spatial": net.flat_spatial, "postopt": postopt}


# ---------------------------------------------------------------------------
# stages


def cmd_generate(cfg: RunConfig, args) -> int:
    root = Path(cfg["out"])
    g = cfg["generate"]
    count = g["count"] if args.count is None else args.count
    if count < 0:
        raise UsageError("--count must be >= 0")
    out = _prepare_dir(root / "gt", args.force)
    model = resolve_model(cfg.hand_model_ref)
    files = []
    for i in range(count):
        kind = g["object_kinds"][i % len(g["object_kinds"])]
        seed = _seed_for(cfg.seed, 0, i)
        seq = generate_synthetic_sequence(kind, g["n_frames"], seed=seed, model=model, fps=g["fps"])
        path = out / f"seq_{i:03d}{SEQ_SUFFIX}"
        save_sequence(seq, path, provenance={"stage": "generate", "config_hash": cfg.hash(), "index": i})
        files.append(path)
        log.info("generated %s (%s, seed %d)", path.name, kind, seed)
    _write_manifest(out, root, "generate", cfg, {}, files, {"count": count})
    print(f"wrote {len(files)} sequences to {out}")
    return EXIT_OK


def cmd_perturb(cfg: RunConfig, args) -> int:
    root = Path(cfg["out"])
    src = Path(args.input) if args.input else root / "gt"
    files = _sequence_files(src)
    over = {k: v for k, v in (("mode", args.mode), ("sigma_translation", args.sigma_t),
                              ("sigma_pose", args.sigma_r), ("lowpass", args.lowpass)) if v is not None}
    if over:
        cfg = RunConfig({**cfg.data, "perturb": {**cfg["perturb"], **over}})
    out = _prepare_dir(root / "perturbed", args.force)
    written, inputs = [], {}
    for i, f in enumerate(files):
        seq = _load(f)
        spec = cfg.perturb_spec()
        spec = type(spec)(spec.mode, spec.sigma_translation, spec.sigma_pose, _seed_for(cfg.seed, 1, i), spec.lowpass)
        try:
            noisy = perturb_sequence(seq, spec)
        except ValueError as exc:
            raise StageError(f"{f}: {exc}") from None
        inputs[_rel(f, root)] = _sha(f)
        path = out / f.name
        save_sequence(noisy, path, provenance={"stage": "perturb", "config_hash": cfg.hash(),
                                               "source": {_rel(f, root): inputs[_rel(f, root)]}})
        written.append(path)
    _write_manifest(out, root, "perturb", cfg, inputs, written, {"perturb": cfg["perturb"]})
    print(f"perturbed {len(written)} sequences into {out}")
    return EXIT_OK


def cmd_represent(cfg: RunConfig, args) -> int:
    root = Path(cfg["out"])
    files = [Path(p) for p in args.inputs] if args.inputs else _sequence_files(root / "perturbed")
    kind = args.kind or cfg.network_config().representation
    try:
        RepresentationKind(kind)
    except ValueError:
        raise UsageError(f"--kind: unknown representation {kind!r}") from None
    out = _prepare_dir(root / "represent", args.force)
    n_obj = cfg.network_config().n_object_points
    written, inputs = [], {}
    for f in files:
        if not f.exists():
            raise StageError(f"input {f} does not exist")
        seq = _load(f)
        feats = sequence_features(seq, kind, n_obj)
        path = out / f"{f.stem}.{kind}.npy"
        np.save(path, feats)
        inputs[_rel(f, root)] = _sha(f)
        written.append(path)
    _write_manifest(out, root, "represent", cfg, inputs, written, {"kind": kind, "n_object_points": n_obj})
    print(f"wrote {len(written)} feature arrays to {out}")
    return EXIT_OK


def _training_samples(cfg: RunConfig, net: NetworkConfig, root: Path, model):
    gt_files = _sequence_files(root / "gt")
    pert_dir = root / "perturbed"
    samples, inputs = [], {}
    f = cfg["filter"]
    for g_path in gt_files:
        p_path = pert_dir / g_path.name
        if not p_path.exists():
            raise StageError(f"missing perturbed counterpart {p_path} (run perturb first)")
        gt, noisy = _load(g_path), _load(p_path)
        if gt.n_frames != noisy.n_frames:
            raise StageError(f"{p_path} has {noisy.n_frames} frames but {g_path} has {gt.n_frames}")
        for w in filter_by_wrist_distance(gt, f["max_distance"], window=net.T, stride=f["stride"], model=model):
            samples.append(make_sample(noisy.slice(w.start, w.stop), net, gt.slice(w.start, w.stop), model))
        inputs[_rel(g_path, root)] = _sha(g_path)
        inputs[_rel(p_path, root)] = _sha(p_path)
    if not samples:
        raise StageError("no training windows survived the wrist-distance filter")
    return samples, inputs


def cmd_train(cfg: RunConfig, args) -> int:
    root = Path(cfg["out"])
    net_cfg = _network_config(cfg, args)
    model = resolve_model(cfg.hand_model_ref)
    samples, inputs = _training_samples(cfg, net_cfg, root, model)
    t = cfg["train"]
    steps = args.steps or t["steps"]
    hyper = TrainHyper(lr=t["lr"], weight_decay=t["weight_decay"], batch=t["batch"], steps=steps,
                       seed=_seed_for(cfg.seed, 2))
    out = _prepare_dir(root / "train" / _net_name(net_cfg), args.force)
    log.info("training %s on %d windows for %d steps", _net_name(net_cfg), len(samples), steps)
    result = train(samples, net_cfg, hyper)
    weights = out / "weights.gkw"
    save_checkpoint(result.net, weights, {"config_hash": cfg.hash(), "inputs": inputs,
                                          "train": {**t, "steps": steps, "seed": hyper.seed},
                                          "n_windows": len(samples)})
    losses = out / "losses.csv"
    losses.write_text("step,loss\n" + "".join(f"{i + 1},{v!r}\n" for i, v in enumerate(result.step_losses)))
    _write_manifest(out, root, "train", cfg, inputs, [weights, losses],
                    {"network": net_cfg.to_dict(), "windows": len(samples), "steps": steps})
    print(f"trained {_net_name(net_cfg)}: loss {result.step_losses[0]:.4g} -> {result.step_losses[-1]:.4g}")
    return EXIT_OK


def cmd_refine(cfg: RunConfig, args) -> int:
    root = Path(cfg["out"])
    net_cfg = _network_config(cfg, args)
    use_postopt = cfg["postopt"]["enabled"] and not args.no_postopt
    ckpt = Path(args.checkpoint) if args.checkpoint else root / "train" / _net_name(net_cfg) / "weights.gkw"
    if not ckpt.exists():
        raise StageError(f"checkpoint {ckpt} not found (run train with the same --ablate/representation)")
    try:
        net, _ = load_checkpoint(ckpt)
    except (ValueError, OSError) as exc:
        raise StageError(f"cannot load checkpoint: {exc}") from None
    if net.cfg != net_cfg:
        raise UsageError(f"checkpoint {ckpt} was trained as {_net_name(net.cfg)}, requested {_net_name(net_cfg)}")
    model = resolve_model(cfg.hand_model_ref)
    src = Path(args.input) if args.input else root / "perturbed"
    files = _sequence_files(src)
    name = _variant_name(net_cfg, use_postopt)
    out = _prepare_dir(root / "refined" / name, args.force)
    pcfg = cfg.postopt_config()
    ckpt_sha = _sha(ckpt)
    written, inputs = [], {_rel(ckpt, root): ckpt_sha}
    for f in files:
        seq = _load(f)
        inputs[_rel(f, root)] = _sha(f)
        coarse = refine_sequence(seq, net_cfg, net, model)
        identity = _identity(net_cfg, use_postopt)
        if use_postopt:
            res = (optimize(model, seq.beta, seq.theta, coarse, pcfg) if seq.has_params
                   else refine_parameters(model, coarse, cfg=pcfg))
            refined = seq.with_params(res.beta, res.theta, refined=identity)
            if args.trace:
                (out / f"{f.stem}.trace.csv").write_text(trace_csv(res.trace))
        else:
            refined = seq.with_vertices(coarse, refined=identity)
        path = out / f.name
        save_sequence(refined, path, provenance={"stage": "refine", "config_hash": cfg.hash(),
                                                 "checkpoint": ckpt_sha, "source": {_rel(f, root): inputs[_rel(f, root)]},
                                                 "variant": identity})
        written.append(path)
    extra = sorted(out.glob("*.trace.csv"))
    _write_manifest(out, root, "refine", cfg, inputs, written + extra,
                    {"variant": _identity(net_cfg, use_postopt), "postopt": cfg["postopt"]})
    print(f"refined {len(written)} sequences into {out}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    root = Path(cfg["out"])
    if args.pred:
        pred_dir = Path(args.pred)
        if not pred_dir.exists() and (root / args.pred).exists():
            pred_dir = root / args.pred
    else:
        net_cfg = _network_config(cfg, args)
        pred_dir = root / "refined" / _variant_name(net_cfg, cfg["postopt"]["enabled"] and not args.no_postopt)
    gt_dir = Path(args.gt) if args.gt else root / "gt"
    pred_files = _sequence_files(pred_dir)
    gt_files = {f.name: f for f in _sequence_files(gt_dir)}
    missing = [f.name for f in pred_files if f.name not in gt_files]
    if missing:
        raise StageError(f"no ground truth for {', '.join(missing)} in {gt_dir}")
    preds = [_load(f) for f in pred_files]
    gts = [_load(gt_files[f.name]) for f in pred_files]
    name = args.name or pred_dir.name
    inputs = {}
    for f in pred_files:
        inputs[_rel(f, root)] = _sha(f)
        inputs[_rel(gt_files[f.name], root)] = _sha(gt_files[f.name])
    variant = preds[0].meta.get("refined", {"representation": "-", "ablation": "-", "postopt": False})
    m = cfg["metrics"]
    model = resolve_model(gts[0].hand_model_ref)
    report = evaluate_many(preds, gts, model, m["contact_threshold"], m["voxel_size"],
                           m["ciou_pooling"] == "pooled", m["contact_mode"],
                           meta={"name": name, "variant": variant, "config_hash": cfg.hash(),
                                 "inputs": inputs})
    out = _prepare_dir(root / "eval" / name, args.force)
    (out / "report.txt").write_text(report.to_text())
    (out / "per_frame.csv").write_text(report.per_frame_csv())
    _write_manifest(out, root, "eval", cfg, inputs, [out / "report.txt", out / "per_frame.csv"], {"name": name})
    print(f"{name}: MPJPE {report.mpjpe:.2f} mm  MPVPE {report.mpvpe:.2f} mm  "
          f"IV {report.iv:.3f} cm3  C-IoU {report.ciou:.2f} %")
    return EXIT_OK


def _read_report(directory: Path) -> tuple:
    text_path = directory / "report.txt"
    if not text_path.exists():
        raise StageError(f"{text_path} not found")
    values, meta = {}, {}
    for line in text_path.read_text().splitlines():
        key, _, raw = line.partition(": ")
        if key.startswith("meta."):
            meta[key[5:]] = json.loads(raw)
        elif key:
            values[key] = float(raw)
    per_frame = {}
    csv_path = directory / "per_frame.csv"
    if csv_path.exists():
        rows = list(csv.reader(io.StringIO(csv_path.read_text())))
        for i, col in enumerate(rows[0][1:], start=1):
            per_frame[col] = np.array([float(r[i]) for r in rows[1:]])
    return values, meta, per_frame


def _plot_svg(path: Path, series: list, xlabel: str, ylabel: str, title: str, logy=False) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "graspkit"
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for label, x, y in series:
        ax.plot(x, y, label=label, linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if logy:
        ax.set_yscale("log")
    if series:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_report(reports: list, names: list) -> str:
    """Markdown comparison table; raises UsageError if the metric sets differ."""
    columns = list(SUMMARY_COLUMNS)
    for (values, _meta, _pf), name in zip(reports, names):
        missing = [c for c in columns if c not in values]
        if missing:
            raise UsageError(f"report {name} is missing columns: {', '.join(missing)}")
        extra = sorted(set(values) - set(columns))
        if extra:
            raise UsageError(f"report {name} has columns the others lack: {', '.join(extra)}")
    lines = ["| method | variant | MPJPE (mm) | MPVPE (mm) | IV (cm^3) | C-IoU (%) |",
             "|---|---|---:|---:|---:|---:|"]
    for (values, meta, _pf), name in zip(reports, names):
        v = meta.get("variant", {})
        tag = ", ".join(f"{k}={v[k]}" for k in ("representation", "ablation", "postopt") if k in v) or "-"
        lines.append(f"| {name} | {tag} | {values['mpjpe']:.2f} | {values['mpvpe']:.2f} | "
                     f"{values['iv']:.3f} | {values['ciou']:.2f} |")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig, args) -> int:
    root = Path(cfg["out"])
    dirs = [Path(d) if Path(d).exists() else root / "eval" / d for d in args.reports]
    if not dirs:
        dirs = sorted(p for p in (root / "eval").glob("*") if p.is_dir()) if (root / "eval").is_dir() else []
    if not dirs:
        raise UsageError("report needs at least one eval directory")
    reports = [_read_report(d) for d in dirs]
    names = [r[1].get("name", d.name) for r, d in zip(reports, dirs)]
    table = render_report(reports, names)
    out = _prepare_dir(root / "report", args.force)
    loss_files = [Path(p) for p in args.losses] if args.losses else sorted((root / "train").glob("*/losses.csv"))
    series = []
    for lf in loss_files:
        rows = list(csv.reader(io.StringIO(lf.read_text())))[1:]
        series.append((lf.parent.name, [int(r[0]) for r in rows], [float(r[1]) for r in rows]))
    written = [out / "report.md"]
    body = ["# graspkit report", "", table]
    if series:
        _plot_svg(out / "losses.svg", series, "step", "reconstruction loss (m^2)", "training loss", logy=True)
        written.append(out / "losses.svg")
        body += ["![training loss](losses.svg)", ""]
    frame_series = [(n, np.arange(len(pf["mpvpe"])), pf["mpvpe"]) for (_, _, pf), n in zip(reports, names)
                    if "mpvpe" in pf]
    if frame_series:
        _plot_svg(out / "per_frame.svg", frame_series, "frame (all sequences)", "MPVPE (mm)", "per-frame error")
        written.append(out / "per_frame.svg")
        body += ["![per-frame error](per_frame.svg)", ""]
    (out / "report.md").write_text("\n".join(body))
    inputs = {_rel(d / "report.txt", root): _sha(d / "report.txt") for d in dirs}
    inputs.update({_rel(lf, root): _sha(lf) for lf in loss_files})
    _write_manifest(out, root, "report", cfg, inputs, written, {"methods": names})
    print(table, end="")
    return EXIT_OK


def cmd_pipeline(cfg: RunConfig, args) -> int:
    """generate -> perturb -> train -> refine -> eval (refined and perturbed) -> report."""
    ns = argparse.Namespace(**vars(args))
    for key, value in (("count", None), ("input", None), ("mode", None), ("sigma_t", None), ("sigma_r", None),
                       ("lowpass", None), ("steps", None), ("checkpoint", None), ("pred", None), ("gt", None),
                       ("name", None), ("reports", []), ("losses", [])):
        if not hasattr(ns, key):
            setattr(ns, key, value)
    cmd_generate(cfg, ns)
    cmd_perturb(cfg, ns)
    cmd_train(cfg, ns)
    cmd_refine(cfg, ns)
    cmd_eval(cfg, ns)
    root = Path(cfg["out"])
    ns_pert = argparse.Namespace(**{**vars(ns), "pred": str(root / "perturbed"), "name": "perturbed"})
    cmd_eval(cfg, ns_pert)
    net_cfg = _network_config(cfg, ns)
    variant = _variant_name(net_cfg, cfg["postopt"]["enabled"] and not ns.no_postopt)
    ns_rep = argparse.Namespace(**{**vars(ns), "reports": [str(root / "eval" / "perturbed"),
                                                            str(root / "eval" / variant)]})
    return cmd_report(cfg, ns_rep)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output root (overrides the config)")
    common.add_argument("--force", action="store_true", help="overwrite existing stage outputs")
    common.add_argument("--trace", action="store_true", help="write post-optimization loss traces")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="graspkit", description="hand-object motion refinement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    def network_flags(p):
        p.add_argument("--ablate", action="append", default=[], metavar="FLAG",
                       help="temporal=long_only | temporal=swap | spatial=flat (repeatable)")
        p.add_argument("--representation", choices=[k.value for k in RepresentationKind])

    p = add("generate", cmd_generate, "write synthetic ground-truth sequences")
    p.add_argument("--count", type=int)
    p = add("perturb", cmd_perturb, "perturb ground-truth sequences")
    p.add_argument("--input", help="directory of sequences (default OUT/gt)")
    p.add_argument("--mode", choices=["T", "R", "B"])
    p.add_argument("--sigma-t", type=float, dest="sigma_t", help="translation noise std (m)")
    p.add_argument("--sigma-r", type=float, dest="sigma_r", help="pose noise std (rad)")
    p.add_argument("--lowpass", type=int, help="moving-average window for temporally correlated noise")
    p = add("represent", cmd_represent, "dump per-vertex features")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--kind", choices=[k.value for k in RepresentationKind])
    p = add("train", cmd_train, "train the network on gt/perturbed pairs")
    network_flags(p)
    p.add_argument("--steps", type=int)
    p = add("refine", cmd_refine, "network inference followed by post-optimization")
    network_flags(p)
    p.add_argument("--input", help="directory of perturbed sequences (default OUT/perturbed)")
    p.add_argument("--checkpoint")
    p.add_argument("--no-postopt", action="store_true", dest="no_postopt")
    p = add("eval", cmd_eval, "metrics of predicted sequences against ground truth")
    network_flags(p)
    p.add_argument("--pred", help="directory of predicted sequences (default: refined output of the variant)")
    p.add_argument("--gt", help="directory of ground-truth sequences (default OUT/gt)")
    p.add_argument("--name")
    p.add_argument("--no-postopt", action="store_true", dest="no_postopt")
    p = add("report", cmd_report, "markdown table and SVG plots from eval outputs")
    p.add_argument("reports", nargs="*", help="eval directories or names under OUT/eval")
    p.add_argument("--losses", nargs="*", default=[])
    p = add("pipeline", cmd_pipeline, "run every stage in order")
    network_flags(p)
    p.add_argument("--no-postopt", action="store_true", dest="no_postopt")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        cfg = RunConfig.load(args.config, overrides)
        return args.func(cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"graspkit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - every other failure maps to the runtime exit code
        if args.verbose:
            log.exception("stage failed")
        print(f"graspkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
