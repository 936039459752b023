"""Command-line interface.

Subcommands: inpaint, eval, genmask, gridsearch, flowviz, selfcheck.
Exit codes: 0 ok, 1 usage error, 2 file-format error, 3 numeric or
convergence failure.  All commands are deterministic: identical flags and
inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import flowio, metrics
from .calibrate import GridSpec, calibrate, calibration_csv
from .errors import ConfigError, ConvergenceError, FlowIOError, MetricError
from .pipeline import (DEFAULT_ITERATIONS, MODE_EED, MODE_ZFIELD,
                       PipelineConfig, _spread, inpaint)
from .selfcheck import CHECK_NAMES, run_selfcheck
from .solver import SolverConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _float_list(text):
    return tuple(float(v) for v in text.split(","))


def _int_list(text):
    return tuple(int(v) for v in text.split(","))


def _build_parser():
    parser = _Parser(prog="nxflow", description=__doc__)
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("NXF_THREADS", "1")),
                        help="worker cap for independent sweep entries "
                             "(results do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inpaint", help="densify a sparse flow field")
    p.add_argument("--image", required=True, help="reference image (8-bit PNG/PPM)")
    p.add_argument("--flow", required=True,
                   help="sparse flow (.flo, or KITTI 16-bit .png with validity)")
    p.add_argument("--mask", help="8-bit mask PNG (nonzero = known)")
    p.add_argument("--density", type=float,
                   help="generate/subsample a random mask of this density")
    p.add_argument("--seed", type=int, default=0, help="mask seed")
    p.add_argument("--mode", choices=[MODE_EED, MODE_ZFIELD], default=MODE_EED)
    p.add_argument("--zfield", help="zfield stack file (required in zfield mode)")
    p.add_argument("--out", required=True, help="output .flo path")
    p.add_argument("--viz", help="also write a color visualization PNG")
    p.add_argument("--gt", help=".flo ground truth; prints EPE when given")
    _add_pipeline_flags(p)

    p = sub.add_parser("eval", help="score a flow estimate or run a density sweep")
    p.add_argument("--est", help="estimated flow (.flo)")
    p.add_argument("--gt", help="ground-truth flow (.flo or KITTI .png)")
    p.add_argument("--scope", choices=[metrics.SCOPE_ALL, metrics.SCOPE_UNKNOWN,
                                       metrics.SCOPE_HELDOUT],
                   default=metrics.SCOPE_ALL)
    p.add_argument("--mask", help="known mask PNG (for scope=unknown)")
    p.add_argument("--heldout-mask", help="evaluation mask PNG (for scope=heldout)")
    p.add_argument("--fl-mode", choices=["and", "or"], default="and")
    p.add_argument("--image", help="reference image (sweep mode)")
    p.add_argument("--gt-flow", help="dense ground-truth .flo (sweep mode)")
    p.add_argument("--densities", type=_float_list, help="e.g. 0.01,0.05,0.1")
    p.add_argument("--seeds", type=_int_list, default=(0,), help="e.g. 1,2,3")
    p.add_argument("--csv", help="write sweep reports to this CSV file")
    _add_pipeline_flags(p)

    p = sub.add_parser("genmask", help="write a random exact-density mask")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--density", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output mask PNG")

    p = sub.add_parser("gridsearch", help="calibrate contrast/alpha by grid search")
    p.add_argument("--image", action="append", required=True,
                   help="sample image (repeatable)")
    p.add_argument("--gt-flow", action="append", required=True,
                   help="sample ground-truth .flo (repeatable, paired in order)")
    p.add_argument("--density", type=float, required=True)
    p.add_argument("--seeds", type=_int_list, default=(0,))
    p.add_argument("--lambda-min", type=float, default=1e-6)
    p.add_argument("--lambda-max", type=float, default=1e-2)
    p.add_argument("--lambda-steps", type=int, default=9)
    p.add_argument("--alpha-min", type=float, default=0.001)
    p.add_argument("--alpha-max", type=float, default=0.5)
    p.add_argument("--alpha-steps", type=int, default=14)
    p.add_argument("--search-tol", type=float, default=1e-5)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=0.25)
    p.add_argument("--csv", help="write all evaluated grid points to this CSV")

    p = sub.add_parser("flowviz", help="render a .flo file on the flow color wheel")
    p.add_argument("--flow", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-mag", type=float, help="saturation normalization")

    p = sub.add_parser("selfcheck", help="run the numeric oracle suite")
    p.add_argument("checks", nargs="*", metavar="CHECK",
                   help=f"subset of {', '.join(CHECK_NAMES)} (default: all)")
    p.add_argument("--tau", type=float, default=0.25,
                   help="time-step to probe (stability must fail for large values)")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _add_pipeline_flags(p):
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--iterations", type=_int_list,
                   help="per-level counts, coarse to fine (fixed mode)")
    p.add_argument("--lam", "--lambda", dest="lam", type=_float_list,
                   default=None, help="contrast parameter(s), coarse to fine")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--tau", type=float, default=0.25)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--stop", choices=["residual", "fixed"], default=None,
                   help="default: residual for eed, fixed for zfield")
    p.add_argument("--fsi-cycle", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=200_000)


def _pipeline_config(args, mode):
    stop = args.stop or ("fixed" if mode == MODE_ZFIELD else "residual")
    levels = args.levels
    lams = args.lam
    if lams is None:
        lams = (1.0,) * levels if mode == MODE_ZFIELD else (1e-4,) * levels
    elif len(lams) == 1:
        lams = lams * levels
    iters = args.iterations
    if iters is None:
        iters = _spread(DEFAULT_ITERATIONS, levels)
    solver = SolverConfig(tau=args.tau, fsi_cycle_len=args.fsi_cycle,
                          stop_mode=stop, residual_tol=args.tol,
                          max_steps=args.max_steps)
    return PipelineConfig(levels=levels, mode=mode, iterations=iters,
                          lambdas=lams, rho=args.rho, alpha=args.alpha,
                          solver=solver)


def _load_sparse_flow(args):
    """Returns (flow, mask) honoring --mask / --density / KITTI validity."""
    if args.flow.lower().endswith(".png"):
        flow, valid = flowio.read_kitti_png(args.flow)
    else:
        flow = flowio.read_flo(args.flow)
        valid = np.ones(flow.shape[:2], dtype=bool)

    if args.mask is not None and args.density is not None:
        raise _UsageError("give either --mask or --density, not both")
    if args.mask is not None:
        mask = flowio.read_mask_png(args.mask)
        if mask.shape != valid.shape:
            raise _UsageError("mask dims do not match the flow")
        mask &= valid
    elif args.density is not None:
        mask = metrics.genmask_subset(valid, args.density, args.seed)
    else:
        mask = valid
    return flow * mask[:, :, None], mask


def _cmd_inpaint(args):
    image = flowio.read_image(args.image)
    flow, mask = _load_sparse_flow(args)
    if image.shape[:2] != mask.shape:
        raise _UsageError("image dims do not match the flow")
    z_levels = None
    if args.mode == MODE_ZFIELD:
        if not args.zfield:
            raise _UsageError("zfield mode requires --zfield")
        z_levels = flowio.read_zfield(args.zfield)
    elif args.zfield:
        raise _UsageError("--zfield only applies to --mode zfield")

    cfg = _pipeline_config(args, args.mode)
    result = inpaint(image, mask, flow, cfg, z_levels=z_levels)
    if result.empty_mask:
        print("warning: empty mask, writing the all-zero field", file=sys.stderr)
    flowio.write_flo(args.out, result.flow)
    if args.viz:
        flowio.write_image(args.viz, flowio.flow_to_color(result.flow))
    if args.gt:
        gt = flowio.read_flo(args.gt)
        print(f"epe={metrics.epe(result.flow, gt)!r}")
    if not result.converged:
        raise ConvergenceError("solver hit the step cap before the tolerance")
    return EXIT_OK


def _cmd_eval(args):
    if args.est:
        if not args.gt:
            raise _UsageError("pair evaluation needs --est and --gt")
        est = flowio.read_flo(args.est)
        if args.gt.lower().endswith(".png"):
            gt, valid = flowio.read_kitti_png(args.gt)
        else:
            gt, valid = flowio.read_flo(args.gt), None
        scope = None
        if args.scope == metrics.SCOPE_UNKNOWN:
            if not args.mask:
                raise _UsageError("scope=unknown needs --mask")
            scope = ~flowio.read_mask_png(args.mask)
        elif args.scope == metrics.SCOPE_HELDOUT:
            if not args.heldout_mask:
                raise _UsageError("scope=heldout needs --heldout-mask")
            scope = flowio.read_mask_png(args.heldout_mask)
        if valid is not None:
            scope = valid if scope is None else (scope & valid)
        e = metrics.epe(est, gt, scope)
        f = metrics.fl_rate(est, gt, scope, mode=args.fl_mode)
        n = int(gt.shape[0] * gt.shape[1] if scope is None else scope.sum())
        print(f"epe={e!r} fl={f!r} n_pixels={n} scope={args.scope}")
        return EXIT_OK

    if not (args.image and args.gt_flow and args.densities):
        raise _UsageError("sweep mode needs --image, --gt-flow and --densities")
    image = flowio.read_image(args.image)
    gt = flowio.read_flo(args.gt_flow)
    cfg = _pipeline_config(args, MODE_EED)
    reports = metrics.density_sweep(image, gt, args.densities, cfg, args.seeds,
                                    scope=args.scope if args.scope != "heldout"
                                    else metrics.SCOPE_ALL,
                                    fl_mode=args.fl_mode,
                                    max_workers=max(args.threads, 1))
    csv_text = metrics.reports_to_csv(reports)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv_text)
    print(csv_text, end="")
    return EXIT_OK


def _cmd_genmask(args):
    mask = metrics.genmask(args.width, args.height, args.density, args.seed)
    flowio.write_mask_png(args.out, mask)
    print(f"known={int(mask.sum())} density={mask.mean()!r}")
    return EXIT_OK


def _cmd_gridsearch(args):
    if len(args.image) != len(args.gt_flow):
        raise _UsageError("--image and --gt-flow must be paired")
    samples = [(flowio.read_image(img), flowio.read_flo(flo))
               for img, flo in zip(args.image, args.gt_flow)]
    spec = GridSpec(
        lambda_range=(args.lambda_min, args.lambda_max),
        lambda_steps=args.lambda_steps,
        alpha_range=(args.alpha_min, args.alpha_max),
        alpha_steps=args.alpha_steps,
        search_tol=args.search_tol)
    result = calibrate(samples, args.density, spec, args.seeds,
                       levels=args.levels, rho=args.rho, tau=args.tau)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(calibration_csv(result.entries))
    print(f"lambda={result.lam!r} alpha={result.alpha!r} epe={result.epe!r}")
    return EXIT_OK


def _cmd_flowviz(args):
    flow = flowio.read_flo(args.flow)
    flowio.write_image(args.out, flowio.flow_to_color(flow, max_mag=args.max_mag))
    return EXIT_OK


def _cmd_selfcheck(args):
    results = run_selfcheck(args.checks or None, tau=args.tau, seed=args.seed)
    for res in results:
        print(res.human_line())
    for res in results:
        print(res.json_line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


_COMMANDS = {
    "inpaint": _cmd_inpaint,
    "eval": _cmd_eval,
    "genmask": _cmd_genmask,
    "gridsearch": _cmd_gridsearch,
    "flowviz": _cmd_flowviz,
    "selfcheck": _cmd_selfcheck,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, MetricError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FlowIOError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
