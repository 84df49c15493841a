"""Command-line front end.

Subcommands: explain-image and explain-text write an Explanation JSON (and
optionally a top-K overlay PPM); compare runs both surrogates over a corpus
and writes a CSV table, a plain-text summary and win-rate figures.

Exit codes: 0 success, 1 pipeline failure, 2 flag or input-format misuse.
Logging level comes from the LEDSNA_LOG environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import ppm
from .blackbox import parse_blackbox_spec
from .core import Instance, image_space, text_space
from .errors import ContractViolation
from .sampling import default_sigma, file_groups_provider, group_tokens, window_grouper
from .segmentation import SegmentMap, grid_segment, segments_connected, slic_segment
from .surrogate import ExplainConfig, Explanation, explain, explain_set, sample_for_space

log = logging.getLogger("ledsna")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging():
    level = os.environ.get("LEDSNA_LOG", "error").lower()
    if level not in _LOG_LEVELS:
        level = "error"
    logging.basicConfig(
        level=_LOG_LEVELS[level], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _add_surrogate_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--blackbox", required=True,
                        help="builtin:<name>[:args] | subprocess:<cmdline> | http:<url>")
    parser.add_argument("--surrogate", choices=("svr", "ridge"), default="svr")
    parser.add_argument("--kernel", choices=("gaussian", "linear"), default="gaussian")
    parser.add_argument("--gamma", type=float, default=None, help="gaussian width (default 1/d')")
    parser.add_argument("--c", type=float, default=1.0, help="SVR box constraint")
    parser.add_argument("--epsilon", type=float, default=0.001, help="SVR tube half-width")
    parser.add_argument("--lambda", dest="lam", type=float, default=1.0, help="ridge strength")
    parser.add_argument("--n-samples", type=int, default=1000)
    parser.add_argument("--sigma", type=float, default=None, help="proximity kernel width")
    parser.add_argument("--metric", choices=("l2", "cosine"), default=None)
    parser.add_argument("--k", type=int, default=4, help="top-K features to report")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="output path (JSON or CSV prefix)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ledsna",
                                     description="Local explanations of black-box classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    img = sub.add_parser("explain-image", help="explain one PPM image")
    img.add_argument("--image", required=True, help="binary PPM (P6) input")
    img.add_argument("--slic", default=None, metavar="K[,COMPACTNESS[,ITERS]]")
    img.add_argument("--grid", default=None, metavar="RxC")
    img.add_argument("--labels", default=None, help="precomputed label map (.pgm or .json)")
    img.add_argument("--save-labels", default=None,
                     help="export the segmentation used (.pgm or .json, by extension)")
    img.add_argument("--overlay", default=None, help="write top-K overlay PPM here")
    _add_surrogate_flags(img)

    txt = sub.add_parser("explain-text", help="explain one text instance")
    txt.add_argument("--text", required=True, help="UTF-8 text file")
    txt.add_argument("--per-line", action="store_true",
                     help="treat each line as one instance (see --index)")
    txt.add_argument("--index", type=int, default=0, help="which line to explain with --per-line")
    txt.add_argument("--deps", default=None, help="dependency-group JSON file")
    txt.add_argument("--window", type=int, default=1, help="built-in grouper window size")
    _add_surrogate_flags(txt)

    cmp_p = sub.add_parser("compare", help="compare surrogates over a corpus")
    cmp_p.add_argument("--corpus", required=True, help="directory of .ppm/.txt instances")
    cmp_p.add_argument("--per-line", action="store_true",
                       help="split each .txt corpus file into per-line instances")
    cmp_p.add_argument("--slic", default=None, metavar="K[,COMPACTNESS[,ITERS]]")
    cmp_p.add_argument("--grid", default=None, metavar="RxC")
    cmp_p.add_argument("--window", type=int, default=1)
    cmp_p.add_argument("--trials", type=int, default=1)
    cmp_p.add_argument("--method-a", choices=("svr", "ridge"), default="svr")
    cmp_p.add_argument("--method-b", choices=("svr", "ridge"), default="ridge")
    cmp_p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    _add_surrogate_flags(cmp_p)
    return parser


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(part) for part in text.lower().split("x"))
    except ValueError as exc:
        raise ContractViolation(f"--grid expects RxC, got {text!r}") from exc
    return rows, cols


def _parse_slic(text: str) -> tuple[int, float, int]:
    parts = text.split(",")
    if not 1 <= len(parts) <= 3:
        raise ContractViolation(f"--slic expects K[,COMPACTNESS[,ITERS]], got {text!r}")
    try:
        k = int(parts[0])
        compactness = float(parts[1]) if len(parts) > 1 else 10.0
        iterations = int(parts[2]) if len(parts) > 2 else 10
    except ValueError as exc:
        raise ContractViolation(f"--slic expects numbers, got {text!r}") from exc
    return k, compactness, iterations


def _segment(instance: Instance, args) -> SegmentMap:
    chosen = [name for name in ("slic", "grid", "labels")
              if getattr(args, name, None) is not None]
    if len(chosen) != 1:
        raise ContractViolation("exactly one of --slic/--grid/--labels is required")
    if args.slic is not None:
        k, compactness, iterations = _parse_slic(args.slic)
        return slic_segment(instance, k, compactness=compactness, iterations=iterations)
    if args.grid is not None:
        rows, cols = _parse_grid(args.grid)
        return grid_segment(instance, rows, cols)
    labels = ppm.read_label_map(args.labels)
    if labels.shape != instance.image.shape[:2]:
        raise ContractViolation(
            f"label map {labels.shape} does not match image {instance.image.shape[:2]}"
        )
    seg = SegmentMap.from_labels(labels)
    if not segments_connected(seg.labels):
        raise ContractViolation("imported label map has a segment that is not 4-connected")
    return seg


def _config_from_args(args, seed: int | None = None) -> ExplainConfig:
    return ExplainConfig(
        surrogate_kind=args.surrogate,
        kernel=args.kernel,
        gamma=args.gamma,
        c=args.c,
        epsilon=args.epsilon,
        lam=args.lam,
        n_samples=args.n_samples,
        sigma=args.sigma,
        metric=args.metric,
        k=args.k,
        seed=args.seed if seed is None else seed,
    )


def _effective_config(config: ExplainConfig, d_prime: int, kind: str,
                      extra: dict | None = None) -> dict:
    metric = config.metric
    if metric is None:
        metric = "l2" if kind == "image" else "cosine"
    sigma = config.sigma if config.sigma is not None else default_sigma(metric, d_prime)
    gamma = config.gamma
    if config.surrogate_kind == "svr" and config.kernel == "gaussian" and gamma is None:
        gamma = 1.0 / d_prime
    out = {
        "surrogate": config.surrogate_kind,
        "kernel": config.kernel,
        "gamma": gamma,
        "c": config.c,
        "epsilon": config.epsilon,
        "lambda": config.lam,
        "n_samples": config.n_samples,
        "sigma": sigma,
        "metric": metric,
        "k": config.k,
        "seed": config.seed,
        "d_prime": d_prime,
    }
    if extra:
        out.update(extra)
    return out


def explanation_payload(explanation: Explanation, instance_id: str, config: dict) -> dict:
    r2 = explanation.r_squared
    return {
        "instance_id": instance_id,
        "surrogate": explanation.surrogate_kind,
        "attributions": [float(a) for a in explanation.attributions],
        "top_k": list(explanation.top_k),
        "g_at_x": float(explanation.g_at_x),
        "f_at_x": float(explanation.f_at_x),
        "err": float(explanation.err),
        "r_squared": None if explanation.fidelity.undefined else float(r2),
        "n_samples": config["n_samples"],
        "seed": config["seed"],
        "config": config,
    }


def _emit_json(payload: dict, out: str | None):
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def render_overlay(image: np.ndarray, labels: np.ndarray, top_k) -> np.ndarray:
    """Keep top-K segments at original brightness, dim the rest to 30%."""
    keep = np.isin(labels, np.asarray(list(top_k)))
    dimmed = np.rint(image.astype(np.float64) * 0.3).astype(np.uint8)
    return np.where(keep[..., None], image, dimmed)


def _save_labels(path: str, segment_map: SegmentMap):
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        ppm.write_pgm(path, segment_map.labels)
    elif suffix == ".json":
        ppm.write_label_json(path, segment_map.labels)
    else:
        raise ContractViolation(f"--save-labels wants .pgm or .json, got {suffix!r}")


def cmd_explain_image(args) -> int:
    instance = ppm.read_ppm(args.image)
    segment_map = _segment(instance, args)
    if args.save_labels:
        _save_labels(args.save_labels, segment_map)
    space = image_space(segment_map)
    adapter = parse_blackbox_spec(args.blackbox)
    config = _config_from_args(args)

    explanation = explain(instance, space, adapter, config)
    payload = explanation_payload(
        explanation, instance.id, _effective_config(config, space.d_prime, "image")
    )
    _emit_json(payload, args.out)
    if args.overlay:
        overlay = render_overlay(instance.image, segment_map.labels, explanation.top_k)
        ppm.write_ppm(args.overlay, overlay)
    return 0


def cmd_explain_text(args) -> int:
    instances = ppm.read_text_instances(args.text, per_line=args.per_line)
    if not 0 <= args.index < len(instances):
        raise ContractViolation(f"--index {args.index} outside 0..{len(instances) - 1}")
    instance = instances[args.index]
    provider = file_groups_provider(args.deps) if args.deps else window_grouper(args.window)
    groups = group_tokens(instance, provider)
    space = text_space(groups.groups)
    adapter = parse_blackbox_spec(args.blackbox)
    config = _config_from_args(args)

    explanation = explain(instance, space, adapter, config, groups=groups)
    extra = {"groups": [list(g) for g in groups.groups]}
    if not args.deps:
        extra["window"] = args.window
    payload = explanation_payload(
        explanation, instance.id, _effective_config(config, space.d_prime, "text", extra)
    )
    _emit_json(payload, args.out)
    if log.isEnabledFor(logging.INFO):
        for rank, idx in enumerate(explanation.top_k, start=1):
            tokens = [instance.tokens[i] for i in groups.groups[idx]]
            log.info("top-%d group %d %s score=%+.4f",
                     rank, idx, tokens, explanation.attributions[idx])
    return 0


def _load_corpus(args) -> list[Instance]:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        raise ContractViolation(f"--corpus {corpus} is not a directory")
    instances: list[Instance] = []
    for path in sorted(corpus.iterdir()):
        if path.suffix.lower() == ".ppm":
            instances.append(ppm.read_ppm(path))
        elif path.suffix.lower() == ".txt":
            instances.extend(ppm.read_text_instances(path, per_line=args.per_line))
    if not instances:
        raise ContractViolation(f"no .ppm or .txt instances found in {corpus}")
    return instances


def cmd_compare(args) -> int:
    if args.out is None:
        raise ContractViolation("compare requires --out as the report prefix")
    if args.trials < 1:
        raise ContractViolation("--trials must be at least 1")
    instances = _load_corpus(args)
    adapter = parse_blackbox_spec(args.blackbox)
    methods = {"a": args.method_a, "b": args.method_b}

    rows = []
    per_instance: dict[str, dict[str, dict[str, list[float]]]] = {}
    for idx, instance in enumerate(instances):
        if instance.kind == "image":
            seg_args = argparse.Namespace(slic=args.slic, grid=args.grid, labels=None)
            space = image_space(_segment(instance, seg_args))
            groups = None
        else:
            groups = group_tokens(instance, window_grouper(args.window))
            space = text_space(groups.groups)
        for trial in range(args.trials):
            seed = args.seed + idx * args.trials + trial
            base = replace(_config_from_args(args, seed=seed))
            data = sample_for_space(instance, space, adapter, base, groups=groups)
            for label, kind in methods.items():
                expl = explain_set(data, replace(base, surrogate_kind=kind))
                method_name = f"{label}:{kind}"
                rows.append({
                    "instance_id": instance.id,
                    "method": method_name,
                    "trial": trial,
                    "f_at_x": expl.f_at_x,
                    "g_at_x": expl.g_at_x,
                    "err": expl.err,
                    "r_squared": expl.r_squared,
                    "n_samples": base.n_samples,
                    "seed": seed,
                })
                bucket = per_instance.setdefault(instance.id, {}).setdefault(
                    method_name, {"err": [], "r2": []}
                )
                bucket["err"].append(expl.err)
                bucket["r2"].append(expl.r_squared)
        log.info("compared %s (%d/%d)", instance.id, idx + 1, len(instances))

    summary = _win_rates(per_instance, f"a:{args.method_a}", f"b:{args.method_b}")
    _write_compare_outputs(args, rows, summary)
    return 0


def _win_rates(per_instance, method_a: str, method_b: str) -> dict:
    err_wins = err_ties = r2_wins = r2_ties = 0
    for buckets in per_instance.values():
        mean_err_a = float(np.mean(buckets[method_a]["err"]))
        mean_err_b = float(np.mean(buckets[method_b]["err"]))
        if mean_err_a < mean_err_b:
            err_wins += 1
        elif mean_err_a == mean_err_b:
            err_ties += 1
        mean_r2_a = float(np.mean(buckets[method_a]["r2"]))
        mean_r2_b = float(np.mean(buckets[method_b]["r2"]))
        if mean_r2_a > mean_r2_b:
            r2_wins += 1
        elif mean_r2_a == mean_r2_b:
            r2_ties += 1
    n = len(per_instance)
    return {
        "n_instances": n,
        "method_a": method_a,
        "method_b": method_b,
        "err_wins": err_wins,
        "err_ties": err_ties,
        "err_win_rate": (err_wins + 0.5 * err_ties) / n,
        "r2_wins": r2_wins,
        "r2_ties": r2_ties,
        "r2_win_rate": (r2_wins + 0.5 * r2_ties) / n,
    }


_CSV_FIELDS = ["instance_id", "method", "trial", "f_at_x", "g_at_x",
               "err", "r_squared", "n_samples", "seed"]


def _write_compare_outputs(args, rows: list[dict], summary: dict):
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)

    csv_path = prefix.with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=_CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row[k]) for k in _CSV_FIELDS})

    table = _pretty_table(rows, summary)
    sys.stdout.write(table)
    Path(str(prefix) + "_summary.txt").write_text(table, encoding="utf-8")

    if not args.no_figures:
        _write_figures(str(prefix), rows, summary)


def _csv_value(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _pretty_table(rows: list[dict], summary: dict) -> str:
    lines = [
        f"{'instance':<24} {'method':<10} {'trial':>5} {'f(x)':>9} {'g(x)':>9} "
        f"{'Err':>10} {'R^2':>10}"
    ]
    for row in rows:
        lines.append(
            f"{row['instance_id']:<24.24} {row['method']:<10} {row['trial']:>5d} "
            f"{row['f_at_x']:>9.4f} {row['g_at_x']:>9.4f} {row['err']:>10.4g} "
            f"{row['r_squared']:>10.4g}"
        )
    lines.append("")
    lines.append(
        f"{summary['method_a']} vs {summary['method_b']} over "
        f"{summary['n_instances']} instances:"
    )
    lines.append(
        f"  Err  wins {summary['err_wins']}, ties {summary['err_ties']}, "
        f"win rate {summary['err_win_rate']:.3f}"
    )
    lines.append(
        f"  R^2  wins {summary['r2_wins']}, ties {summary['r2_ties']}, "
        f"win rate {summary['r2_win_rate']:.3f}"
    )
    return "\n".join(lines) + "\n"


def _write_figures(prefix: str, rows: list[dict], summary: dict):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    method_a, method_b = summary["method_a"], summary["method_b"]
    for metric, key, better in (("r2", "r_squared", "higher"), ("err", "err", "lower")):
        a_vals, b_vals = [], []
        for row in rows:
            if row["method"] == method_a:
                a_vals.append(row[key])
            elif row["method"] == method_b:
                b_vals.append(row[key])
        a_arr, b_arr = np.asarray(a_vals), np.asarray(b_vals)
        order = np.argsort(b_arr)

        fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
        left.plot(b_arr[order], label=method_b, color="tab:orange", lw=1.2)
        left.plot(a_arr[order], label=method_a, color="tab:blue", lw=1.2)
        left.set_xlabel("instance (sorted by second method)")
        left.set_ylabel("R^2" if metric == "r2" else "Err")
        left.legend(fontsize=8)
        left.set_title(f"per-instance {'R^2' if metric == 'r2' else 'Err'}")

        rate = summary[f"{metric}_win_rate"]
        wins = summary[f"{metric}_wins"]
        ties = summary[f"{metric}_ties"]
        losses = summary["n_instances"] - wins - ties
        right.bar(["win", "tie", "loss"], [wins, ties, losses],
                  color=["tab:green", "tab:gray", "tab:red"])
        right.set_title(f"{method_a} {better} ({rate:.1%} win rate)")
        right.set_ylabel("instances")
        fig.tight_layout()
        fig.savefig(f"{prefix}_{metric}.png", dpi=120)
        plt.close(fig)


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    handlers = {
        "explain-image": cmd_explain_image,
        "explain-text": cmd_explain_text,
        "compare": cmd_compare,
    }
    try:
        return handlers[args.command](args)
    except ContractViolation as exc:
        print(f"ledsna: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pipeline failures
        log.debug("pipeline failure", exc_info=True)
        print(f"ledsna: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
