"""Command-line front end.

Subcommands cover the pipeline stages individually (phantom, simulate,
recon-tv, recon-dip, evaluate) and the batch drivers (sweep, grid-search).
Configuration comes from an optional key=value file plus repeatable
``--set KEY=VALUE`` overrides plus named flags; later sources win.  Exit
codes: 0 success, 2 configuration/data-format error, 3 numerical failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import iqa
from .dipnet import dip_reconstruct
from .errors import ConfigError, DataFormatError, NumericalError
from .harness import (add_relative_noise, grid_search, history_csv,
                      make_config, make_phantom, parse_config_text,
                      read_raw_field, run_experiment, sweep, write_pgm,
                      write_raw_field)
from .pdhg import solve as pdhg_solve
from .waveop import ForwardOperator, approximate_inverse, block_average, simulate_data

# flags applied on top of --config/--set; attribute name -> config key
_FLAG_KEYS = ("outdir", "nx", "method", "phantom", "noise_eta", "n_active",
              "alpha", "lam", "seed_phantom", "seed_noise", "seed_network")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", metavar="FILE",
                   help="key=value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--nx", help="reconstruction grid size")
    p.add_argument("--method", help="tv | dip | both")
    p.add_argument("--phantom", help="phantom kind")
    p.add_argument("--eta", dest="noise_eta", help="relative noise level")
    p.add_argument("--n-active", dest="n_active",
                   help="active detector count (0 = full ring)")
    p.add_argument("--alpha", help="TV weight of the variational solver")
    p.add_argument("--lam", help="TV weight of the network training loss")
    p.add_argument("--seed-phantom", dest="seed_phantom")
    p.add_argument("--seed-noise", dest="seed_noise")
    p.add_argument("--seed-network", dest="seed_network")


def _build_config(args):
    kv: dict[str, str] = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        kv.update(parse_config_text(text))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        kv[key.strip()] = val.strip()
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            kv[key] = val
    return make_config(kv)


def _read_field(path) -> np.ndarray:
    try:
        return read_raw_field(path).astype(np.float64)
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc


def _save_pair(out: Path, name: str, arr: np.ndarray) -> None:
    write_raw_field(out / f"{name}.raw", arr)
    write_pgm(out / f"{name}.pgm", arr)


def _outdir(cfg) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_gt(args, out: Path) -> np.ndarray | None:
    if args.gt_file:
        return _read_field(args.gt_file)
    default = out / "gt.raw"
    return _read_field(default) if default.exists() else None


def _cmd_phantom(args) -> None:
    cfg = _build_config(args)
    out = _outdir(cfg)
    f_fine = make_phantom(cfg.fine_grid(), cfg.phantom, cfg.seed_phantom,
                          support_radius=cfg.support_radius())
    gt = block_average(f_fine, cfg.fine_factor)
    _save_pair(out, "f_fine", f_fine)
    _save_pair(out, "gt", gt)
    print(f"wrote {out / 'f_fine.raw'} and {out / 'gt.raw'}")


def _cmd_simulate(args) -> None:
    cfg = _build_config(args)
    out = _outdir(cfg)
    f_fine = _read_field(args.phantom_file or out / "f_fine.raw")
    ring = cfg.ring()
    time_axis = cfg.time_axis()
    fine_op = ForwardOperator(cfg.fine_grid(), ring, time_axis)
    op = ForwardOperator(cfg.recon_grid(), ring, time_axis)
    g = simulate_data(f_fine, fine_op, op)
    g_noisy = add_relative_noise(g, cfg.noise_eta, cfg.seed_noise, active=ring.active)
    _save_pair(out, "data", g_noisy)
    norm = float(np.linalg.norm(g))
    eta = float(np.linalg.norm(g_noisy - g)) / norm if norm > 0 else 0.0
    print(f"wrote {out / 'data.raw'} (eta_measured={eta!r})")


def _cmd_recon_tv(args) -> None:
    cfg = _build_config(args)
    out = _outdir(cfg)
    g = _read_field(args.data_file or out / "data.raw")
    gt = _load_gt(args, out)
    op = ForwardOperator(cfg.recon_grid(), cfg.ring(), cfg.time_axis())
    f, rec = pdhg_solve(g, op, cfg.pdhg_config(), gt=gt)
    _save_pair(out, "recon_tv", f)
    (out / "history_tv.csv").write_text(history_csv(rec))
    status = "converged" if rec.converged else "hit max_iter"
    print(f"wrote {out / 'recon_tv.raw'} ({status} at iteration {rec.iterations_run})")


def _cmd_recon_dip(args) -> None:
    cfg = _build_config(args)
    out = _outdir(cfg)
    g = _read_field(args.data_file or out / "data.raw")
    gt = _load_gt(args, out)
    op = ForwardOperator(cfg.recon_grid(), cfg.ring(), cfg.time_axis())
    z = approximate_inverse(g, op, mode=cfg.init_mode)
    _save_pair(out, "init", z)
    img, rec = dip_reconstruct(g, z, op, cfg.dip_config(), cfg.unet_config(), gt=gt)
    name = f"recon_dip_{cfg.dip_selection}"
    _save_pair(out, name, img)
    (out / "history_dip.csv").write_text(history_csv(rec))
    print(f"wrote {out / (name + '.raw')} (selected iteration {rec.selected_index})")


def _cmd_evaluate(args) -> None:
    cfg = _build_config(args)
    rec = _read_field(args.rec)
    gt = _read_field(args.gt_file)
    roi = None if cfg.roi_threshold < 0 else iqa.roi_from_gt(gt, cfg.roi_threshold)
    rep = iqa.compute_report(rec, gt, roi)
    print("psnr_db,ssim,cc,haarpsi")
    print(",".join(repr(float(v)) for v in (rep.psnr_db, rep.ssim, rep.cc, rep.haarpsi)))


def _parse_list(raw: str, kind, what: str) -> list:
    try:
        vals = [kind(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad {what} list: {raw!r}") from exc
    if not vals:
        raise ConfigError(f"empty {what} list")
    return vals


def _cmd_sweep(args) -> None:
    cfg = _build_config(args)
    path = sweep(cfg, _parse_list(args.etas, float, "eta"),
                 _parse_list(args.coverages, int, "coverage"))
    print(f"wrote {path}")


def _cmd_grid_search(args) -> None:
    cfg = _build_config(args)
    path = grid_search(cfg, args.param, _parse_list(args.values, float, "value"))
    print(f"wrote {path}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patk",
        description="Photoacoustic image reconstruction: simulation, "
                    "variational and network-prior solvers, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a phantom and its coarse ground truth")
    _add_common(p)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("simulate", help="simulate detector data on the fine grid and add noise")
    _add_common(p)
    p.add_argument("--phantom-file", help="fine-grid phantom (default <outdir>/f_fine.raw)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("recon-tv", help="TV-regularized primal-dual reconstruction")
    _add_common(p)
    p.add_argument("--data-file", help="measured data (default <outdir>/data.raw)")
    p.add_argument("--gt-file", help="ground truth for the iteration history "
                                     "(default <outdir>/gt.raw when present)")
    p.set_defaults(func=_cmd_recon_tv)

    p = sub.add_parser("recon-dip", help="network-prior reconstruction")
    _add_common(p)
    p.add_argument("--data-file", help="measured data (default <outdir>/data.raw)")
    p.add_argument("--gt-file", help="ground truth for iterate selection "
                                     "(default <outdir>/gt.raw when present)")
    p.set_defaults(func=_cmd_recon_dip)

    p = sub.add_parser("evaluate", help="image quality metrics of a reconstruction")
    _add_common(p)
    p.add_argument("--rec", required=True, help="reconstruction to score")
    p.add_argument("--gt-file", required=True, help="ground truth")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="noise-level x detector-coverage batch of runs")
    _add_common(p)
    p.add_argument("--etas", default="0,0.1,0.2", help="comma-separated noise levels")
    p.add_argument("--coverages", default="0",
                   help="comma-separated active detector counts (0 = full ring)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("grid-search", help="regularization parameter search")
    _add_common(p)
    p.add_argument("--param", required=True, choices=("alpha", "lambda"))
    p.add_argument("--values", required=True, help="comma-separated parameter values")
    p.set_defaults(func=_cmd_grid_search)

    p = sub.add_parser("run", help="full experiment (simulate + reconstruct + evaluate)")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    return parser


def _cmd_run(args) -> None:
    cfg = _build_config(args)
    res = run_experiment(cfg)
    print(f"wrote {res['outdir'] / 'metrics.csv'} (eta_measured={res['eta_measured']!r})")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
