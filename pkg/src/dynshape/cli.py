"""``dynshape`` command-line driver.

Usage::

    dynshape phantom|simulate|reconstruct|metrics|compress-study|export CONFIG [--set k=v]... [--out DIR]

Each command reads its inputs from the output directory (or from the
``inputs`` section of the config) and writes its results there.  Exit codes:
0 success, 2 configuration error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as dio
from .baselines import binned_reconstruct, boxl2_reconstruct
from .config import Experiment, apply_overrides, load_config, validate
from .dss import dss_attenuation, dss_reconstruct, trace_to_csv
from .errors import ConfigError, GeometryError, NumericalError
from .metrics import report
from .phantoms import NonRigidSpec, RigidBallSpec, add_awgn, disk, nonrigid_bell, rigid_balls
from .projector import forward_sequence
from .transforms import compression_error

log = logging.getLogger("dynshape")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4

COMMANDS = ("phantom", "simulate", "reconstruct", "metrics", "compress-study", "export")


def _input(exp: Experiment, key: str, default: str) -> Path:
    given = exp.raw["inputs"][key]
    return Path(given) if given else exp.output_dir / default


def _require(stem: Path) -> Path:
    for suffix in (".raw", ".json"):
        if not stem.with_suffix(suffix).is_file():
            raise FileNotFoundError(f"missing input file {stem.with_suffix(suffix)}")
    return stem


def make_phantom(exp: Experiment) -> np.ndarray:
    spec = exp.phantom_spec
    if isinstance(spec, RigidBallSpec):
        return rigid_balls(spec)
    if isinstance(spec, NonRigidSpec):
        return nonrigid_bell(spec)
    _, n, T, radius = spec
    return np.repeat(disk(n, radius)[None], T, axis=0)


def cmd_phantom(exp: Experiment) -> list[Path]:
    seq = make_phantom(exp)
    return [dio.write_volume(exp.output_dir / "phantom", seq, exp.grid.pixel_size)]


def _check_grid(exp: Experiment, grid, what: str):
    if grid.shape != exp.grid.shape or grid.pixel_size != exp.grid.pixel_size:
        raise ConfigError(f"{what} grid {grid} does not match the configured {exp.grid}")


def cmd_simulate(exp: Experiment) -> list[Path]:
    seq, grid = dio.read_volume(_require(_input(exp, "phantom", "phantom")))
    _check_grid(exp, grid, "phantom")
    if seq.shape[0] != exp.schedule.T:
        raise ConfigError(f"phantom has {seq.shape[0]} frames, config expects {exp.schedule.T}")
    sino = forward_sequence(seq, exp.schedule, exp.detector, grid)
    sino = add_awgn(sino, exp.snr_db, exp.seed)
    return [dio.write_sinogram(exp.output_dir / "sinogram", sino, grid)]


def _check_sinogram(exp: Experiment, sino):
    _check_grid(exp, sino.grid, "sinogram")
    mine = (exp.schedule.theta1, exp.schedule.delta_theta, exp.schedule.T, exp.detector.n_det, exp.detector.det_spacing)
    theirs = (sino.schedule.theta1, sino.schedule.delta_theta, sino.T, sino.detector.n_det, sino.detector.det_spacing)
    if mine != theirs:
        raise ConfigError(f"sinogram geometry {theirs} does not match config {mine} "
                          "(theta1, delta_theta, T, n_det, det_spacing)")


def run_method(exp: Experiment, sino):
    """Dispatch to a reconstructor; returns ``(sequence, trace, coeffs, bins, attenuation)``."""
    m = exp.method
    if m in ("static", "css"):
        res = binned_reconstruct(sino, m, sino.grid, exp.baseline, exp.recon)
        return res.sequence, res.trace, res.coeffs, res.bins, None
    if m == "boxl2":
        res = boxl2_reconstruct(sino, sino.grid, exp.baseline)
        return res.sequence, res.trace, [], None, None
    solver = dss_attenuation if m == "dss-atten" else dss_reconstruct
    res = solver(sino, sino.grid, exp.recon, exp.extension)
    if res.stalled:
        log.warning("line search stalled in outer iterations %s", res.stalled)
    return res.sequence, res.trace, [res.coeffs], None, res.attenuation


def _write_text(path: Path, text: str) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
    return path


def cmd_reconstruct(exp: Experiment) -> list[Path]:
    sino = dio.read_sinogram(_require(_input(exp, "sinogram", "sinogram")))
    _check_sinogram(exp, sino)
    seq, trace, coeffs, bins, u = run_method(exp, sino)
    if not np.all(np.isfinite(seq)):
        raise NumericalError("reconstruction contains non-finite values")
    out = exp.output_dir
    out.mkdir(parents=True, exist_ok=True)
    written = [dio.write_volume(out / "recon", seq, sino.grid.pixel_size),
               _write_text(out / "trace.csv", trace_to_csv(trace))]
    if coeffs:
        written.append(dio.write_coeffs(out / "coeffs", coeffs, bins))
    if u is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "attenuation"])
        w.writerows([t, repr(float(v))] for t, v in enumerate(u))
        written.append(_write_text(out / "attenuation.csv", buf.getvalue()))
    return written


def cmd_metrics(exp: Experiment) -> list[Path]:
    gt, g1 = dio.read_volume(_require(_input(exp, "phantom", "phantom")))
    rec, g2 = dio.read_volume(_require(_input(exp, "recon", "recon")))
    if gt.shape != rec.shape:
        raise ConfigError(f"ground truth {gt.shape} and reconstruction {rec.shape} differ in shape")
    rep = report(gt, rec)
    for note in rep.diagnostics:
        log.warning("%s", note)
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    return [_write_text(exp.output_dir / "metrics.csv", rep.to_csv())]


def compress_study(volume: np.ndarray, fractions, heaviside_width: float, seed: int) -> str:
    """CSV of ``fraction, phantom, mode, mse, ssim`` for smooth and time-permuted copies."""
    perm = np.random.default_rng(seed).permutation(volume.shape[0])
    phantoms = {"smooth": volume, "permuted": volume[perm]}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fraction", "phantom", "mode", "mse", "ssim"])
    for f in fractions:
        for name, vol in phantoms.items():
            for mode in ("levelset", "direct"):
                mse, s = compression_error(vol, float(f), mode == "levelset", heaviside_width)
                w.writerow([repr(float(f)), name, mode, repr(float(mse)), repr(float(s))])
    return buf.getvalue()


def cmd_compress_study(exp: Experiment) -> list[Path]:
    vol, _ = dio.read_volume(_require(_input(exp, "phantom", "phantom")))
    if vol.min() < 0 or vol.max() > 1:
        raise ConfigError("compress-study expects a volume with values in [0, 1]")
    study = exp.raw["study"]
    text = compress_study(vol, study["fractions"], float(study["heaviside_width"]), exp.seed)
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    return [_write_text(exp.output_dir / "compress_study.csv", text)]


def cmd_export(exp: Experiment) -> list[Path]:
    vol, _ = dio.read_volume(_require(_input(exp, "recon", "recon")))
    ex = exp.raw["export"]
    return dio.export_frames(vol, exp.output_dir / "frames", ex["format"], int(ex["stride"]))


_HANDLERS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "metrics": cmd_metrics,
    "compress-study": cmd_compress_study,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynshape", description="Single-shot dynamic CT shape reconstruction.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="YAML experiment config")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. --set method-params.M=5")
    parser.add_argument("--out", help="output directory (overrides output-dir)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.overrides)
        if args.out:
            overrides.append(f"output-dir={args.out}")
        config = apply_overrides(load_config(args.config), overrides)
        exp = validate(config)
        for path in _HANDLERS[args.command](exp):
            print(path)
    except (ConfigError, GeometryError, ValueError) as exc:
        print(f"dynshape: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"dynshape: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, ArithmeticError) as exc:
        print(f"dynshape: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
