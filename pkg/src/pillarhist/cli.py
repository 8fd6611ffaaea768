"""Command-line interface.

Subcommands::

    pillarize      pillar inventory of a cloud
    encode         encode every pillar, write a feature batch
    calibrate      post-training quantization parameters from calibration clouds
    quantize-eval  full-precision vs fake-quantized encoder outputs
    analyze        channel-range and FLOPs reports
    flops          analytic FLOPs of both encoders
    synth          write a seeded synthetic scene
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .batchio import write_feature_batch
from .config import CALIBRATORS, RunConfig
from .core import PointCloud, read_point_cloud, write_point_cloud_bin, write_point_cloud_text
from .pillarization import pillarize, scene_stats
from .pipeline import ENCODERS, EncoderPipeline
from .pfe import segment_max
from .quant import dump_params, error_decompose, load_params, quantized_linear_forward


class CliError(Exception):
    pass


def _dump_jsonl(records, path) -> None:
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _dump_json(doc, path) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _input(args, cfg: RunConfig, key: str = "input"):
    path = args.input or cfg.paths.get(key)
    if not path:
        raise CliError("no input given (use --input or paths.input in the config)")
    return path


def _output(args, cfg: RunConfig, key: str = "output"):
    return args.output or cfg.paths.get(key)


def _load_pillars(path, cfg: RunConfig):
    return pillarize(read_point_cloud(path), cfg.grid)


def cmd_pillarize(args, cfg: RunConfig) -> int:
    pillars = _load_pillars(_input(args, cfg), cfg)
    records = [{"ix": p.index.ix, "iy": p.index.iy, "n_points": p.n_points,
                "x_center": p.x_center, "y_center": p.y_center} for p in pillars]
    _dump_jsonl(records, _output(args, cfg))
    print(json.dumps({"kind": "scene_stats", **scene_stats(pillars)}, sort_keys=True), file=sys.stderr)
    return 0


def cmd_encode(args, cfg: RunConfig) -> int:
    out = _output(args, cfg)
    if not out:
        raise CliError("encode needs --output (file stem)")
    pillars = _load_pillars(_input(args, cfg), cfg)
    pipe = cfg.pipeline()
    if args.stage == "inputs" and cfg.encoder != "pillarhist":
        raise CliError("--stage inputs is only defined for the pillarhist encoder")
    rows = pipe.inputs(pillars)[0] if args.stage == "inputs" else pipe.forward(pillars, threads=cfg.threads)
    meta = {"encoder": cfg.encoder, "stage": args.stage, "n_bins": cfg.hist.n_bins,
            "out_dim": pipe.out_dim, "n_max": cfg.n_max, "intensity_scale": cfg.hist.intensity_scale,
            "head_dims": list(cfg.head_dims), "grid": cfg.grid.to_dict(), "seed": cfg.seed}
    write_feature_batch(out, rows, [p.index for p in pillars], meta)
    print(json.dumps({"kind": "encode", "pillars": len(pillars), "row_length": int(rows.shape[1])}),
          file=sys.stderr)
    return 0


def _calibrate(cfg: RunConfig, pipe: EncoderPipeline, inputs):
    scenes = [_load_pillars(p, cfg) for p in inputs]
    return pipe.calibrate(scenes, cfg.quant.bits, cfg.quant.search(),
                          calibrator=cfg.quant.calibrator, first_last_fp=cfg.quant.first_last_fp)


def cmd_calibrate(args, cfg: RunConfig) -> int:
    inputs = args.input_list or cfg.paths.get("calib_inputs") or ([cfg.paths["input"]] if "input" in cfg.paths else [])
    if not inputs:
        raise CliError("calibrate needs at least one --input")
    pipe = cfg.pipeline()
    params = _calibrate(cfg, pipe, inputs)
    meta = {"encoder": cfg.encoder, "bits": cfg.quant.bits, "calibrator": cfg.quant.calibrator,
            "t_bins": cfg.quant.t_bins, "first_last_fp": cfg.quant.first_last_fp,
            "seed": cfg.seed, "calibration_inputs": [Path(p).name for p in inputs]}
    text = dump_params(params, meta)
    out = _output(args, cfg, "params")
    if out and out != "-":
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def quantize_eval(pipe: EncoderPipeline, pillars, params, threads: int = 1) -> dict:
    """Compare full-precision and fake-quantized outputs on one scene."""
    fp = pipe.forward(pillars, threads=threads)
    q = pipe.forward(pillars, params, threads=threads)
    diff2 = (q - fp) ** 2
    denom = float(np.sum(fp ** 2))
    per_pillar = diff2.mean(axis=1) if diff2.size else np.zeros(0)

    tensors = []
    # the quantized forward pass seen layer by layer, to report each tensor's error split
    x, offsets = pipe.inputs(pillars)
    for i, (layer, lq) in enumerate(zip(pipe.layers, params)):
        if lq.weight is not None:
            tensors.append({"tensor": f"layer{i}.weight", **error_decompose(layer.weights, lq.weight)._asdict()})
        if lq.activation is not None:
            tensors.append({"tensor": f"layer{i}.input", **error_decompose(x, lq.activation)._asdict()})
        x = quantized_linear_forward(layer, lq.weight, lq.activation, x)
        if pipe.encoder == "pfe" and i == 0:
            x = segment_max(x, offsets)

    return {"encoder": pipe.encoder, "pillars": len(pillars),
            "mse": float(diff2.mean()) if diff2.size else 0.0,
            "relative_mse": float(np.sum(diff2)) / denom if denom > 0 else 0.0,
            "max_abs_error": float(np.sqrt(diff2.max())) if diff2.size else 0.0,
            "per_pillar_mse_mean": float(per_pillar.mean()) if per_pillar.size else 0.0,
            "per_pillar_mse_max": float(per_pillar.max()) if per_pillar.size else 0.0,
            "tensors": tensors}


def cmd_quantize_eval(args, cfg: RunConfig) -> int:
    path = _input(args, cfg)
    pipe = cfg.pipeline()
    params_path = args.params or cfg.paths.get("params")
    if params_path:
        params, _ = load_params(Path(params_path).read_text(encoding="utf-8"))
        if len(params) != len(pipe.layers):
            raise CliError(f"params describe {len(params)} layers, pipeline has {len(pipe.layers)}")
    else:
        params = _calibrate(cfg, pipe, [path])
    report = quantize_eval(pipe, _load_pillars(path, cfg), params, cfg.threads)
    report.update({"bits": cfg.quant.bits, "calibrator": cfg.quant.calibrator})
    _dump_json(report, _output(args, cfg))
    return 0


def analyze_records(cfg: RunConfig, pillars, encoders) -> list[dict]:
    records = []
    n_points = sum(p.n_points for p in pillars)
    for enc in encoders:
        pipe = cfg.pipeline(enc)
        rows, _ = pipe.inputs(pillars)
        records += analysis.range_report(rows, pipe.channel_names(), enc, cfg.quant.bits).records()
        if enc == "pfe":
            rep = analysis.flops_report_pfe(len(pillars), cfg.n_max, pipe.in_dim, pipe.layers[0].out_dim)
        else:
            rep = analysis.flops_report_pillarhist(len(pillars), n_points, cfg.hist.n_bins,
                                                   pipe.layers[0].out_dim)
        records += rep.records()
    return records


def _scene(args, cfg: RunConfig):
    if args.input or cfg.paths.get("input"):
        return read_point_cloud(_input(args, cfg))
    return analysis.synthetic_scene(cfg.grid, args.points, cfg.seed)


def cmd_analyze(args, cfg: RunConfig) -> int:
    encoders = ENCODERS if args.encoder == "both" else (cfg.encoder,)
    pillars = pillarize(_scene(args, cfg), cfg.grid)
    if not pillars:
        raise CliError("scene has no in-range points")
    _dump_jsonl(analyze_records(cfg, pillars, encoders), _output(args, cfg))
    return 0


def cmd_flops(args, cfg: RunConfig) -> int:
    pfe = analysis.flops_pfe(cfg.n_max, 10, cfg.hist.out_dim)
    ph = analysis.flops_pillarhist(cfg.hist.n_bins, cfg.hist.out_dim)
    _dump_jsonl([{"kind": "flops", "encoder": "pfe", "per_pillar_flops": pfe,
                  "maxpool_comparisons": analysis.maxpool_comparisons(cfg.n_max, cfg.hist.out_dim)},
                 {"kind": "flops", "encoder": "pillarhist", "per_pillar_flops": ph},
                 {"kind": "flops_ratio", "pillarhist_over_pfe": ph / pfe}], _output(args, cfg))
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    out = _output(args, cfg)
    if not out:
        raise CliError("synth needs --output")
    cloud: PointCloud = analysis.synthetic_scene(cfg.grid, args.points, cfg.seed)
    if str(out).endswith(".txt"):
        write_point_cloud_text(cloud, out)
    else:
        write_point_cloud_bin(cloud, out)
    return 0


COMMANDS = {
    "pillarize": cmd_pillarize,
    "encode": cmd_encode,
    "calibrate": cmd_calibrate,
    "quantize-eval": cmd_quantize_eval,
    "analyze": cmd_analyze,
    "flops": cmd_flops,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output", help="output path ('-' for stdout)")
    common.add_argument("--encoder", choices=(*ENCODERS, "both"), help="'both' is accepted by analyze only")
    common.add_argument("--bits", type=int)
    common.add_argument("--calibrator", choices=CALIBRATORS)
    common.add_argument("--t-bins", type=int, dest="t_bins")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)

    parser = argparse.ArgumentParser(prog="pillarhist", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("pillarize", "encode", "quantize-eval"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--input")
        if name == "encode":
            p.add_argument("--stage", choices=("features", "inputs"), default="features",
                           help="'inputs' dumps the pre-projection histogram vectors")
        if name == "quantize-eval":
            p.add_argument("--params", help="params file written by calibrate")
    p = sub.add_parser("calibrate", parents=[common])
    p.add_argument("--input", action="append", dest="input_list", help="calibration cloud (repeatable)")
    p = sub.add_parser("analyze", parents=[common])
    p.add_argument("--input")
    p.add_argument("--points", type=int, default=20000, help="synthetic scene size when no input is given")
    sub.add_parser("flops", parents=[common])
    p = sub.add_parser("synth", parents=[common])
    p.add_argument("--points", type=int, default=20000)
    p.add_argument("--input", help=argparse.SUPPRESS)
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.encoder == "both" and args.command != "analyze":
        raise CliError("--encoder both is only valid for analyze")
    encoder = args.encoder if args.encoder in ENCODERS else None
    return cfg.with_overrides(encoder=encoder, seed=args.seed, threads=args.threads,
                              bits=args.bits, calibrator=args.calibrator, t_bins=args.t_bins)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        print(json.dumps({"kind": "effective_config", "command": args.command, **cfg.to_dict()},
                         sort_keys=True), file=sys.stderr)
        return COMMANDS[args.command](args, cfg)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error record
        msg = str(exc).replace("\n", " ")
        print(json.dumps({"kind": "error", "type": type(exc).__name__, "message": msg}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
