"""Command-line pipeline: generate | chart | train | subsample | eval.

Every command reads one declarative JSON config (explicit seeds, no hidden
entropy) plus file-path arguments; command-line flags override config
values. Outputs are written atomically, and the report paths additionally
render PNG figures next to the delimited files unless --no-figures is
given.

Exit codes: 0 success, 2 config error, 3 data/file error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluate, report, storage
from .charting import Chart, affine_alignment_error, isomap_init
from .config import load_run_config
from .datagen import build_scene, generate_dataset
from .errors import ConfigError, NumericError, StorageError
from .model import init_model
from .training import subsample_encoder, train


def cmd_generate(args) -> int:
    cfg = load_run_config(args.config)
    scene = build_scene(cfg.scene)
    dataset = generate_dataset(scene, cfg.geometry, cfg.counts, cfg.placement)
    storage.save_dataset(dataset, args.out)
    sizes = {s: dataset.split_size(s) for s in ("calibration", "train", "test")}
    print(f"wrote {args.out}: D={dataset.dim} "
          f"({dataset.antenna_count} antennas x {cfg.scene.subcarrier_count} subcarriers), "
          f"splits {sizes}")
    return 0


def cmd_chart(args) -> int:
    cfg = load_run_config(args.config)
    k = args.k if args.k is not None else cfg.chart_k
    d = args.d if args.d is not None else (cfg.model.d if cfg.model else 2)
    dataset = storage.load_dataset(args.dataset)
    H = dataset.channel_matrix("calibration")
    if H.shape[1] == 0:
        raise ConfigError("dataset has no calibration split")
    chart = isomap_init(H, k=k, d=d)
    storage.save_chart_csv(chart.Z, args.out)

    positions = dataset.positions("calibration")
    err = affine_alignment_error(chart.Z, positions)
    diag = dataset.scene.area.diagonal
    print(f"wrote {args.out}: {chart.n} locations in {chart.d}-D (k={k})")
    print(f"chart quality: affine-aligned mean position error {err:.3f} m "
          f"= {100.0 * err / diag:.1f}% of the scene diagonal")
    if not args.no_figures:
        fig_path = Path(args.out).with_suffix(".png")
        report.save_chart_figure(fig_path, chart.Z, positions)
        print(f"wrote {fig_path}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    model_cfg = cfg.require("model")
    train_cfg = cfg.require("train")
    if args.epochs is not None:
        train_cfg = replace(train_cfg, epochs=args.epochs)
    if args.freeze_encoder:
        train_cfg = replace(train_cfg, freeze_encoder=True)

    dataset = storage.load_dataset(args.dataset)
    Z = storage.load_chart_csv(args.chart)
    H_cal = dataset.channel_matrix("calibration")
    enc, dec = init_model(model_cfg, Chart(Z=Z), H_cal, n_out=dataset.antenna_count)

    sub_cfg = cfg.subsample
    if args.subsample is not None:
        if sub_cfg is None:
            raise ConfigError("--subsample requires a 'subsample' config section "
                              "(for swap_probability and rng_seed)")
        sub_cfg = replace(sub_cfg, keep_count=args.subsample)
    elif not args.apply_subsample:
        sub_cfg = None
    if sub_cfg is not None:
        enc = subsample_encoder(enc, sub_cfg)
        print(f"subsampled encoder to {enc.n_calibration} calibration columns")

    callback = None
    if args.checkpoint_every:
        out = Path(args.out)

        def callback(epoch, enc_now, dec_now):
            if epoch % args.checkpoint_every == 0:
                storage.save_checkpoint(enc_now, dec_now, model_cfg.target_subcarrier,
                                        out.with_name(f"{out.stem}_epoch{epoch:04d}{out.suffix}"))

    result = train(enc, dec, dataset, model_cfg.target_subcarrier, train_cfg,
                   epoch_callback=callback)
    storage.save_checkpoint(result.enc, result.dec, model_cfg.target_subcarrier, args.out)
    log_path = Path(args.out).with_suffix(".log.csv")
    storage.write_csv(log_path,
                      ["epoch", "train_loss", "val_median_rho", "val_mean_rho", "wall_time_s"],
                      [(r.epoch, r.train_loss, r.val_median_rho, r.val_mean_rho, r.wall_time_s)
                       for r in result.log])
    print(f"wrote {args.out} (best epoch {result.best_epoch}) and {log_path}")
    if not args.no_figures and result.log:
        fig_path = Path(args.out).with_suffix(".curves.png")
        report.save_training_curves_figure(fig_path, result.log)
        print(f"wrote {fig_path}")
    if result.diverged:
        print("training diverged (non-finite loss); kept the last good parameters",
              file=sys.stderr)
        return 4
    return 0


def cmd_subsample(args) -> int:
    cfg = load_run_config(args.config)
    sub_cfg = cfg.require("subsample")
    if args.keep is not None:
        sub_cfg = replace(sub_cfg, keep_count=args.keep)
    enc, dec, target_s = storage.load_checkpoint(args.checkpoint)
    enc2 = subsample_encoder(enc, sub_cfg)
    storage.save_checkpoint(enc2, dec, target_s, args.out)
    print(f"wrote {args.out}: encoder reduced {enc.n_calibration} -> {enc2.n_calibration} "
          f"calibration columns")
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    eval_cfg = cfg.require("eval")
    dataset = storage.load_dataset(args.dataset)
    H = dataset.channel_matrix("test")
    if H.shape[1] == 0:
        raise ConfigError("dataset has no test split")

    if args.oracle:
        model_cfg = cfg.require("model")
        d = model_cfg.d
        target_s = model_cfg.target_subcarrier
        targets = dataset.target_blocks("test", target_s)
        stats = evaluate.oracle_rho_stats(targets)
        curve = evaluate.sum_rate_sweep(None, None, H, targets, eval_cfg.K,
                                        eval_cfg.snr_grid_db, eval_cfg.group_seed,
                                        oracle=True)
        n_cal = cfg.counts.calibration
        f_count, t_width = (cfg.model.F, cfg.model.T) if cfg.model else (0, 0)
    else:
        if args.checkpoint is None:
            raise ConfigError("--checkpoint is required unless --oracle is given")
        enc, dec, target_s = storage.load_checkpoint(args.checkpoint)
        d = enc.Zmat.shape[0]
        targets = dataset.target_blocks("test", target_s)
        stats = evaluate.rho_stats(enc, dec, H, targets)
        curve = evaluate.sum_rate_sweep(enc, dec, H, targets, eval_cfg.K,
                                        eval_cfg.snr_grid_db, eval_cfg.group_seed)
        n_cal = enc.n_calibration
        f_count, t_width = dec.B.shape[0], dec.W1.shape[0]

    n_a = dataset.antenna_count
    n_s = dataset.scene.subcarrier_count
    gamma = evaluate.compression_ratio(n_a, n_s, d)
    gamma_loc = evaluate.compression_ratio_location_only(n_a, n_s, d)
    dim = n_a * n_s
    params_total = evaluate.param_count(dim, n_cal, d, f_count, t_width, n_a)
    params_dec = evaluate.param_count(dim, n_cal, d, f_count, t_width, n_a,
                                      encoder_learnable=False)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_csv(out / "rho.csv", ["index", "rho"],
                      [(i, v) for i, v in enumerate(stats.values)])
    storage.write_csv(out / "rho_cdf.csv", ["rho", "cumulative_fraction"],
                      [(row[0], row[1]) for row in stats.cdf])
    storage.write_csv(out / "sum_rate.csv", ["precoder", "snr_db", "rate_bps_hz"],
                      [(name, snr, rate)
                       for name in evaluate.PRECODER_TYPES
                       for snr, rate in zip(curve.snr_db, curve.rates[name])])
    summary = {
        "median_rho": stats.median,
        "mean_rho": stats.mean,
        "test_size": int(stats.values.size),
        "oracle": bool(args.oracle),
        "target_subcarrier": int(target_s),
        "compression_ratio": float(gamma),
        "compression_ratio_exact": [gamma.numerator, gamma.denominator],
        "compression_ratio_location_only": float(gamma_loc),
        "param_count": {"total": params_total,
                        "encoder": params_total - params_dec,
                        "decoder": params_dec},
        "sum_rate": {"K": eval_cfg.K, "group_count": curve.group_count,
                     "snr_grid_db": [float(v) for v in curve.snr_db]},
    }
    storage.write_json(out / "summary.json", summary)
    written = ["rho.csv", "rho_cdf.csv", "sum_rate.csv", "summary.json"]
    if not args.no_figures:
        report.save_rho_cdf_figure(out / "rho_cdf.png", stats.cdf, stats.median, stats.mean)
        report.save_sum_rate_figure(out / "sum_rate.png", curve.snr_db, curve.rates)
        written += ["rho_cdf.png", "sum_rate.png"]
    print(f"wrote {', '.join(written)} to {out}")
    print(f"median rho = {stats.median:.4f}, mean rho = {stats.mean:.4f}, "
          f"compression ratio = {float(gamma):.1f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chartcomp",
        description="Task-oriented CSI compression via channel charting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a dataset from the scene config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("chart", help="build the initial chart of the calibration split")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="chart CSV path")
    p.add_argument("--k", type=int, default=None, help="neighbor count override")
    p.add_argument("--d", type=int, default=None, help="embedding dimension override")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_chart)

    p = sub.add_parser("train", help="train encoder and decoder end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--chart", required=True, help="chart CSV from the chart command")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--freeze-encoder", action="store_true",
                   help="train only the decoder parameters")
    p.add_argument("--subsample", type=int, default=None, metavar="N",
                   help="subsample the encoder to N calibration columns before training")
    p.add_argument("--apply-subsample", action="store_true",
                   help="apply the config's subsample section before training")
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="N",
                   help="also write an epoch-suffixed checkpoint every N epochs")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("subsample", help="subsample a trained checkpoint's encoder")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--keep", type=int, default=None, help="override subsample.keep_count")
    p.set_defaults(func=cmd_subsample)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--oracle", action="store_true",
                   help="bypass the model and use the ideal precoder per sample")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StorageError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
