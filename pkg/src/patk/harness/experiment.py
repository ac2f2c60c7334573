"""End-to-end experiment runs: simulate, reconstruct, evaluate, persist.

One run executes phantom -> fine-grid data simulation -> noise ->
approximate inverse -> the selected reconstruction method(s), then writes
ground truth / initialization / reconstructions (raw + PGM preview),
``metrics.csv``, per-method iteration histories, and a re-parseable
``config.echo``.  Runs are sequential and single-threaded so that repeated
runs produce byte-identical CSVs; on failure, partially written outputs are
removed.
"""

import contextlib
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .. import iqa
from ..dipnet import dip_reconstruct_all
from ..dipnet.engine import SELECTIONS
from ..errors import ConfigError
from ..pdhg import solve as pdhg_solve
from ..waveop import ForwardOperator, approximate_inverse, block_average, simulate_data
from .config import ExperimentConfig, echo_config
from .io import write_pgm, write_raw_field
from .phantoms import add_relative_noise, make_phantom

_METRIC_COLUMNS = ("method", "selection", "psnr_db", "ssim", "cc", "haarpsi",
                   "iterations", "seconds")


def _fmt_float(x) -> str:
    # repr round-trips float64 exactly, keeping CSVs byte-stable
    return repr(float(x))


class _Workspace:
    """Tracks files and directories created by a run for failure cleanup."""

    def __init__(self):
        self.files: list[Path] = []
        self.dirs: list[Path] = []

    def mkdir(self, path: Path) -> None:
        missing = []
        p = path
        while not p.exists() and p != p.parent:
            missing.append(p)
            p = p.parent
        path.mkdir(parents=True, exist_ok=True)
        self.dirs.extend(reversed(missing))

    def write_text(self, path: Path, text: str) -> None:
        self.files.append(path)
        path.write_text(text)

    def cleanup(self) -> None:
        for f in reversed(self.files):
            with contextlib.suppress(OSError):
                f.unlink(missing_ok=True)
        for d in reversed(self.dirs):
            with contextlib.suppress(OSError):
                d.rmdir()


def _save_field(ws: _Workspace, out: Path, name: str, arr: np.ndarray) -> None:
    raw = out / f"{name}.raw"
    ws.files.append(raw)
    write_raw_field(raw, arr)
    pgm = out / f"{name}.pgm"
    ws.files.append(pgm)
    write_pgm(pgm, arr)


def _write_metrics(ws: _Workspace, path: Path, rows: list[dict], eta_measured: float) -> None:
    lines = [f"# eta_measured={_fmt_float(eta_measured)}", ",".join(_METRIC_COLUMNS)]
    for r in rows:
        lines.append(",".join((r["method"], r["selection"],
                               _fmt_float(r["psnr_db"]), _fmt_float(r["ssim"]),
                               _fmt_float(r["cc"]), _fmt_float(r["haarpsi"]),
                               str(int(r["iterations"])), _fmt_float(r["seconds"]))))
    ws.write_text(path, "\n".join(lines) + "\n")


def history_csv(rec) -> str:
    """Iteration history of one solver run as CSV text."""
    lines = ["iteration,objective,psnr,ssim"]
    for i, it in enumerate(rec.iteration):
        lines.append(f"{it},{_fmt_float(rec.objective[i])},"
                     f"{_fmt_float(rec.psnr[i])},{_fmt_float(rec.ssim[i])}")
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig,
                   outdir: str | Path | None = None) -> dict:
    """Run one configured experiment; returns the metric rows and eta."""
    config.validate()
    out = Path(outdir) if outdir is not None else Path(config.outdir)
    ws = _Workspace()
    try:
        with threadpool_limits(limits=1):
            return _run(config, out, ws)
    except BaseException:
        ws.cleanup()
        raise


def _run(config: ExperimentConfig, out: Path, ws: _Workspace) -> dict:
    ws.mkdir(out)
    clock = time.perf_counter if config.record_timings else (lambda: 0.0)

    grid = config.recon_grid()
    ring = config.ring()
    time_axis = config.time_axis()
    op = ForwardOperator(grid, ring, time_axis)
    fine_op = ForwardOperator(config.fine_grid(), ring, time_axis)

    f_fine = make_phantom(fine_op.grid, config.phantom, config.seed_phantom,
                          support_radius=config.support_radius())
    gt = block_average(f_fine, config.fine_factor)
    g_clean = simulate_data(f_fine, fine_op, op)
    g = add_relative_noise(g_clean, config.noise_eta, config.seed_noise,
                           active=ring.active)
    n_clean = float(np.linalg.norm(g_clean))
    eta_measured = float(np.linalg.norm(g - g_clean)) / n_clean if n_clean > 0 else 0.0

    t0 = clock()
    z = approximate_inverse(g, op, mode=config.init_mode)
    seconds_init = clock() - t0

    roi = None if config.roi_threshold < 0 else iqa.roi_from_gt(gt, config.roi_threshold)

    _save_field(ws, out, "gt", gt)
    _save_field(ws, out, "init", z)

    rows: list[dict] = []

    def add_row(method: str, selection: str, img: np.ndarray,
                iterations: int, seconds: float) -> None:
        rep = iqa.compute_report(img, gt, roi)
        rows.append({"method": method, "selection": selection,
                     "psnr_db": rep.psnr_db, "ssim": rep.ssim, "cc": rep.cc,
                     "haarpsi": rep.haarpsi, "iterations": iterations,
                     "seconds": seconds})

    add_row("initial", "-", z, 0, seconds_init)

    histories = {}
    if config.method in ("dip", "both"):
        t0 = clock()
        choices, rec = dip_reconstruct_all(g, z, op, config.dip_config(),
                                           config.unet_config(), gt)
        seconds = clock() - t0
        histories["dip"] = rec
        for sel in SELECTIONS:
            idx, img = choices[sel]
            _save_field(ws, out, f"recon_dip_{sel}", img)
            add_row("dip", sel, img, idx, seconds)
    if config.method in ("tv", "both"):
        t0 = clock()
        f_tv, rec_tv = pdhg_solve(g, op, config.pdhg_config(), gt=gt)
        seconds = clock() - t0
        histories["tv"] = rec_tv
        _save_field(ws, out, "recon_tv", f_tv)
        add_row("tv", "converged" if rec_tv.converged else "max_iter", f_tv,
                rec_tv.iterations_run, seconds)

    _write_metrics(ws, out / "metrics.csv", rows, eta_measured)
    for name, rec in histories.items():
        ws.write_text(out / f"history_{name}.csv", history_csv(rec))
    ws.write_text(out / "config.echo", echo_config(config))

    return {"outdir": out, "rows": rows, "eta_measured": eta_measured}


def sweep(config: ExperimentConfig, etas: list[float],
          coverages: list[int]) -> Path:
    """Noise-level x detector-coverage grid of runs, one subdirectory each.

    ``coverages`` are active-element counts (0 keeps the full ring).  Writes
    ``sweep_summary.csv`` under config.outdir with every run's metric rows.
    """
    if not etas or not coverages:
        raise ConfigError("sweep needs at least one eta and one coverage value")
    base = Path(config.outdir)
    ws = _Workspace()
    try:
        ws.mkdir(base)
        lines = ["eta,n_active," + ",".join(_METRIC_COLUMNS)]
        for eta in etas:
            for cov in coverages:
                sub = replace(config, noise_eta=float(eta), n_active=int(cov),
                              outdir=str(base / f"eta{eta:g}_cov{int(cov)}"))
                res = run_experiment(sub)
                for r in res["rows"]:
                    lines.append(f"{eta:g},{int(cov)}," + ",".join(
                        (r["method"], r["selection"], _fmt_float(r["psnr_db"]),
                         _fmt_float(r["ssim"]), _fmt_float(r["cc"]),
                         _fmt_float(r["haarpsi"]), str(int(r["iterations"])),
                         _fmt_float(r["seconds"]))))
        path = base / "sweep_summary.csv"
        ws.write_text(path, "\n".join(lines) + "\n")
    except BaseException:
        ws.cleanup()
        raise
    return path


def grid_search(config: ExperimentConfig, param: str, values: list[float]) -> Path:
    """Run per regularization value and emit metric-vs-parameter CSV.

    ``param`` 'alpha' tunes the variational solver (metrics from its row);
    'lambda' tunes the network training term (metrics from the early-stop
    row).  The argmax-PSNR row is flagged in the ``best`` column.
    """
    if param not in ("alpha", "lambda"):
        raise ConfigError("grid_search param must be 'alpha' or 'lambda'")
    if not values:
        raise ConfigError("grid_search needs at least one value")
    base = Path(config.outdir)
    ws = _Workspace()
    try:
        ws.mkdir(base)
        picked = []
        for v in values:
            v = float(v)
            if param == "alpha":
                sub = replace(config, alpha=v, method="tv",
                              outdir=str(base / f"alpha{v:g}"))
                want = "tv"
            else:
                sub = replace(config, lam=v, method="dip",
                              outdir=str(base / f"lambda{v:g}"))
                want = "dip"
            res = run_experiment(sub)
            row = next(r for r in res["rows"]
                       if r["method"] == want and
                       (want == "tv" or r["selection"] == "early_stop_psnr"))
            picked.append((v, row))
        best = max(range(len(picked)), key=lambda i: picked[i][1]["psnr_db"])
        lines = [f"{param},psnr_db,ssim,cc,haarpsi,iterations,best"]
        for i, (v, r) in enumerate(picked):
            lines.append(f"{v:g},{_fmt_float(r['psnr_db'])},{_fmt_float(r['ssim'])},"
                         f"{_fmt_float(r['cc'])},{_fmt_float(r['haarpsi'])},"
                         f"{int(r['iterations'])},{int(i == best)}")
        path = base / f"grid_{param}.csv"
        ws.write_text(path, "\n".join(lines) + "\n")
    except BaseException:
        ws.cleanup()
        raise
    return path
