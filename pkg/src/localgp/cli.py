"""Command line front end: data generation, fitting, and benchmarks.

All subcommands are file-driven and seeded. Exit codes: 0 success, 2 usage,
3 data error (unreadable, malformed, or inconsistent inputs), 4 numerical
failure. Dataset files are comma-separated with a header row, columns
x1..xp and optionally y; path files carry a leading integer path column.
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from .benchmarks import (PathSpec, borehole, embed_path, gen_paths_2d,
                         grid_2d, lhs_design, michalewicz,
                         product_response_4d, test_function_2d)
from .design import SearchConfig, predict_surface
from .gp import NumericalError, predict_joint
from .metrics import (SPECIES_ORDER, mahalanobis, mixture_drag, proper_score,
                      rmse, rmspe)
from .path import PathSearchConfig, greedy_joint_design, sample_paths
from .pipeline import MethodSpec, fit_predict, parse_method
from .subsample import (GlobalScale, SubsampleSpec, bootstrap_lengthscales,
                        choose_m, prescale)

_PW = {"alc-pw": "alc", "nn-pw": "nn"}


# ==== table plumbing ========================================================

def _cell(v):
    return v if isinstance(v, str) else "%.17g" % v


def _write_rows(path, names, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        if isinstance(rows, np.ndarray):
            if rows.size:
                np.savetxt(fh, np.atleast_2d(rows), fmt="%.17g",
                           delimiter=",")
        else:
            for row in rows:
                fh.write(",".join(_cell(v) for v in row) + "\n")


def _read_table(path):
    with open(path, newline="") as fh:
        head = fh.readline()
        if not head.strip():
            raise ValueError(f"{path}: empty file")
        names = [c.strip() for c in head.strip().split(",")]
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except Exception as exc:
            raise ValueError(f"{path}: {exc}") from None
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    if data.shape[1] != len(names):
        raise ValueError(f"{path}: {data.shape[1]} columns under "
                         f"{len(names)} header names")
    return names, data


def _design_xy(names, data, path, need_y=False):
    """Split a dataset table into X and optional y, validating the header."""
    has_y = names[-1] == "y"
    xnames = names[:-1] if has_y else names
    p = len(xnames)
    if p == 0 or xnames != [f"x{i}" for i in range(1, p + 1)]:
        raise ValueError(f"{path}: expected columns x1..xp then optional y")
    if need_y and not has_y:
        raise ValueError(f"{path}: a y column is required")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite values")
    return data[:, :p], data[:, p] if has_y else None


def _read_paths(path):
    """Path file to a list of (path id, points matrix), ids ascending."""
    names, data = _read_table(path)
    if names[0] != "path" or \
            names[1:] != [f"x{i}" for i in range(1, len(names))]:
        raise ValueError(f"{path}: expected columns path,x1..xp")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite values")
    ids = data[:, 0].astype(int)
    if np.any(ids != data[:, 0]):
        raise ValueError(f"{path}: path ids must be integers")
    return [(int(pid), data[ids == pid, 1:]) for pid in np.unique(ids)]


def _read_scale(path):
    """Parse a global-scale table back into lengthscales + provenance."""
    with open(path, newline="") as fh:
        head = fh.readline().strip()
        names = [c.strip() for c in head.split(",")]
        if not names or names[0] != "rep" or len(names) < 2:
            raise ValueError(f"{path}: expected columns rep,theta1..thetap")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    width = len(names) - 1
    if any(len(r) != width + 1 for r in rows):
        raise ValueError(f"{path}: ragged rows")
    agg = [r for r in rows if r[0] == "aggregate"]
    if len(agg) != 1:
        raise ValueError(f"{path}: need exactly one aggregate row")
    try:
        ls = np.array([float(v) for v in agg[0][1:]])
        prov = [[float(v) for v in r[1:]] for r in rows if r[0] != "aggregate"]
    except ValueError:
        raise ValueError(f"{path}: non-numeric lengthscales") from None
    return GlobalScale(ls, np.array(prov) if prov else ls[None, :])


def _child_seeds(seed, k):
    """k reproducible integer seeds derived from one master seed."""
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(2, np.uint64)[0]) for c in ss.spawn(k)]


def _seed_int(ss):
    return int(ss.generate_state(2, np.uint64)[0])


def _threads(args):
    if args.threads < 0:
        raise ValueError("--threads must be >= 0")
    return os.cpu_count() or 1 if args.threads == 0 else args.threads


# ==== subcommands ===========================================================

def cmd_gen_design(args):
    if args.n < 1:
        raise ValueError("--n must be positive")
    if args.fn == "borehole":
        p = 8 if args.p is None else args.p
        if p != 8:
            raise ValueError("borehole takes exactly 8 input dimensions")
        X = lhs_design(args.n, p, seed=args.seed)
        y = borehole(X)
    else:
        p = 4 if args.p is None else args.p
        X = lhs_design(args.n, p, seed=args.seed) * math.pi
        y = michalewicz(X, M=args.M)
    names = [f"x{i}" for i in range(1, p + 1)] + ["y"]
    _write_rows(args.out, names, np.column_stack([X, np.atleast_1d(y)]))
    return 0


def cmd_gen_paths(args):
    spec = PathSpec(resolution=args.resolution, rectangle=args.rect)
    paths, _ = gen_paths_2d(spec, args.count, seed=args.seed)
    blocks = [np.column_stack([np.full(len(w), float(i)), w])
              for i, w in enumerate(paths)]
    _write_rows(args.out, ["path", "x1", "x2"], np.vstack(blocks))
    return 0


def cmd_global_scale(args):
    names, data = _read_table(args.train)
    X, Y = _design_xy(names, data, args.train, need_y=True)
    m = choose_m(len(X), X.shape[1]) if args.m is None else args.m
    boot = args.boot
    if boot is None:
        boot = 30 if args.mode == "blhs" else 1
    spec = SubsampleSpec(m=m, bootstrap_count=boot, mode=args.mode,
                         seed=args.seed)
    gs = bootstrap_lengthscales(X, Y, spec)
    cols = ["rep"] + [f"theta{i}" for i in range(1, X.shape[1] + 1)]
    rows = [(b + 1, *gs.provenance[b]) for b in range(gs.provenance.shape[0])]
    rows.append(("aggregate", *gs.lengthscales))
    _write_rows(args.out, cols, rows)
    return 0


def cmd_predict(args):
    base = parse_method(args.method)
    spec = MethodSpec(design_method=base.design_method,
                      kernel_mode=base.kernel_mode,
                      prescale_mode=base.prescale_mode,
                      n0=args.n0, n=args.n, candidate_limit=args.nprime)
    names, data = _read_table(args.train)
    Xtr, Ytr = _design_xy(names, data, args.train, need_y=True)
    tnames, tdata = _read_table(args.test)
    Xte, Yte = _design_xy(tnames, tdata, args.test)
    if Xte.shape[1] != Xtr.shape[1]:
        raise ValueError(f"{args.test}: {Xte.shape[1]} input dimensions "
                         f"against {Xtr.shape[1]} in the training file")
    gs = _read_scale(args.scale) if args.scale else None
    out = fit_predict(Xtr, Ytr, Xte, spec, threads=_threads(args),
                      seed=args.seed, global_scale=gs)
    pred = out.pred
    cols = [f"x{i}" for i in range(1, Xte.shape[1] + 1)] + \
        ["mean", "scale2", "dof"]
    _write_rows(args.out, cols,
                np.column_stack([Xte, pred.mean, pred.scale2,
                                 np.asarray(pred.dof, dtype=float)]))
    if pred.errors:
        print(f"failed-points: {len(pred.errors)}", file=sys.stderr)
    if Yte is not None:
        print(f"rmse={rmse(pred.mean, Yte):.17g}")
        try:
            print(f"rmspe={rmspe(pred.mean, Yte):.17g}")
        except ValueError:
            pass
        dof = np.asarray(pred.dof, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            var = pred.scale2 * dof / (dof - 2.0)
        if var.size and np.all(np.isfinite(var)) and np.all(var > 0):
            print(f"proper_score={proper_score(Yte, pred.mean, var):.17g}")
    return 0


def _path_fit(X, Y, W, method, n0, n, seed=None, draws=0, threads=1,
              candidate_limit=None):
    """One path, one method: (mean, covariance, dof, draws or None).

    Joint methods carry the full predictive covariance; the pointwise
    baselines emit a diagonal one (their off-diagonal structure is simply
    absent), with independent per-point draws to match. candidate_limit
    widens the joint search pool only; the pointwise baselines keep their
    per-point default of min(N, 1000) nearest rows and a local
    lengthscale fit.
    """
    if method in _PW:
        cfg = SearchConfig(n0=n0, n=n, method=_PW[method],
                           kernel_mode="isotropic")
        pr = predict_surface(X, Y, W, cfg, threads=threads)
        if pr.errors:
            raise NumericalError(
                f"{len(pr.errors)} of {W.shape[0]} path points failed")
        dof = int(pr.dof[0])
        if dof <= 2:
            raise ValueError("local designs of size <= 2 have no variance")
        var = pr.scale2 * (dof / (dof - 2.0))
        smp = None
        if draws:
            rng = np.random.default_rng(seed)
            g = rng.standard_normal((draws, W.shape[0]))
            chi = rng.chisquare(dof, (draws, W.shape[0]))
            smp = pr.mean + np.sqrt(pr.scale2) * g * np.sqrt(dof / chi)
        return pr.mean, np.diag(var), dof, smp
    cfg = PathSearchConfig(n0=n0, n=n, method=method,
                           candidate_limit=candidate_limit)
    ld = greedy_joint_design(X, Y, W, cfg)
    mean, scale, dof = predict_joint(ld.model, W)
    if dof <= 2:
        raise ValueError("local designs of size <= 2 have no variance")
    cov = scale * (dof / (dof - 2.0))
    smp = sample_paths(ld.model, W, draws, seed=seed) if draws else None
    return mean, cov, dof, smp


def cmd_path_predict(args):
    names, data = _read_table(args.train)
    X, Y = _design_xy(names, data, args.train, need_y=True)
    groups = _read_paths(args.paths)
    if groups[0][1].shape[1] != X.shape[1]:
        raise ValueError(f"{args.paths}: {groups[0][1].shape[1]} input "
                         f"dimensions against {X.shape[1]} in training")
    if args.scale:
        gs = _read_scale(args.scale)
        X = prescale(X, gs)
        groups = [(pid, prescale(W, gs)) for pid, W in groups]
    kids = np.random.SeedSequence(args.seed).spawn(len(groups))
    pred_rows, cov_rows, draw_rows = [], [], []
    for (pid, W), child in zip(groups, kids):
        mean, cov, dof, smp = _path_fit(
            X, Y, W, args.method, args.n0, args.n, seed=_seed_int(child),
            draws=args.draws, threads=_threads(args),
            candidate_limit=args.nprime)
        t = W.shape[0]
        idx = np.arange(t, dtype=float)
        var = np.diag(cov)
        pred_rows.append(np.column_stack(
            [np.full(t, float(pid)), idx, mean, var]))
        if args.method in _PW:
            cov_rows.append(np.column_stack(
                [np.full(t, float(pid)), idx, idx, var]))
        else:
            ii = np.repeat(idx, t)
            jj = np.tile(idx, t)
            cov_rows.append(np.column_stack(
                [np.full(t * t, float(pid)), ii, jj, cov.ravel()]))
        if smp is not None:
            dd = np.repeat(np.arange(smp.shape[0], dtype=float), t)
            cc = np.tile(idx, smp.shape[0])
            draw_rows.append(np.column_stack(
                [np.full(smp.size, float(pid)), dd, cc, smp.ravel()]))
    _write_rows(args.out_pred, ["path", "i", "mean", "var"],
                np.vstack(pred_rows))
    _write_rows(args.out_cov, ["path", "i", "j", "value"],
                np.vstack(cov_rows))
    _write_rows(args.out_draws, ["path", "draw", "i", "value"],
                np.vstack(draw_rows) if draw_rows else
                np.empty((0, 4)))
    return 0


def cmd_ensemble(args):
    inames, idata = _read_table(args.inputs)
    Xin, _ = _design_xy(inames, idata, args.inputs)
    mnames, mdata = _read_table(args.mix)
    if mnames != list(SPECIES_ORDER):
        raise ValueError(
            f"{args.mix}: expected columns {','.join(SPECIES_ORDER)}")
    if not np.all(np.isfinite(mdata)):
        raise ValueError(f"{args.mix}: non-finite values")
    if mdata.shape[0] == 1:
        chi = np.broadcast_to(mdata[0], (Xin.shape[0], mdata.shape[1]))
    elif mdata.shape[0] == Xin.shape[0]:
        chi = mdata
    else:
        raise ValueError(f"{args.mix}: need one row, or one per input row")
    base = parse_method(args.method)
    kids = np.random.SeedSequence(args.seed).spawn(len(SPECIES_ORDER))
    means = np.empty((len(SPECIES_ORDER), Xin.shape[0]))
    for k, (species, child) in enumerate(zip(SPECIES_ORDER, kids)):
        fpath = os.path.join(args.models, f"{species}.csv")
        tnames, tdata = _read_table(fpath)
        Xs, Ys = _design_xy(tnames, tdata, fpath, need_y=True)
        if Xs.shape[1] != Xin.shape[1]:
            raise ValueError(f"{fpath}: dimension mismatch with inputs")
        spec = MethodSpec(design_method=base.design_method,
                          kernel_mode=base.kernel_mode,
                          prescale_mode=base.prescale_mode,
                          n0=args.n0, n=args.n)
        out = fit_predict(Xs, Ys, Xin, spec, threads=_threads(args),
                          seed=_seed_int(child))
        if out.pred.errors:
            raise NumericalError(
                f"{species}: {len(out.pred.errors)} points failed")
        means[k] = out.pred.mean
    drag = mixture_drag(means.T, chi)
    cols = [f"x{i}" for i in range(1, Xin.shape[1] + 1)] + ["y"]
    _write_rows(args.out, cols, np.column_stack([Xin, drag]))
    return 0


# ==== benchmark experiments =================================================

def _boxplot(path, title, labels, groups, ylabel):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(labels) + 1.5), 4.0))
    ax.boxplot(groups)
    ax.set_xticks(np.arange(1, len(labels) + 1))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _bench_grid(args, threads):
    if args.experiment == "borehole-grid":
        comparators = ("nn", "alc", "alc.s", "alc.sb")
        p, fn, span = 8, borehole, 1.0
    else:
        comparators = ("nn", "alcsep", "alcsep.s", "alcsep.sb")
        p, fn, span = 4, michalewicz, math.pi
    n_train = max(64, round(10000 * args.scale))
    n_test = max(16, round(1000 * args.scale))
    results, timings = [], []
    for rep, ss in enumerate(np.random.SeedSequence(args.seed).spawn(args.reps)):
        s_train, s_test, *s_fit = ss.spawn(2 + len(comparators))
        Xtr = lhs_design(n_train, p, seed=s_train) * span
        Xte = lhs_design(n_test, p, seed=s_test) * span
        Ytr, Yte = fn(Xtr), fn(Xte)
        for name, child in zip(comparators, s_fit):
            tic = time.perf_counter()
            out = fit_predict(Xtr, Ytr, Xte, name, threads=threads,
                              seed=_seed_int(child))
            secs = time.perf_counter() - tic
            results.append((name, rep, "rmse", rmse(out.pred.mean, Yte)))
            try:
                results.append((name, rep, "rmspe",
                                rmspe(out.pred.mean, Yte)))
            except ValueError:
                pass
            timings.append((name, rep, secs))
    return results, timings


def _bench_paths(args, threads, four_d):
    methods = ("alc-ex", "alc-opt", "nn-joint", "alc-pw", "nn-pw")
    n0, n = 6, 60
    data_ss, path_ss = np.random.SeedSequence(args.seed).spawn(2)
    if four_d:
        n_train = max(200, round(10000 * args.scale))
        X = lhs_design(n_train, 4, seed=data_ss) * 4.0 - 2.0
        Y = product_response_4d(X)
    else:
        side = max(12, round(100 * math.sqrt(args.scale)))
        X = grid_2d(side)
        Y = test_function_2d(X)
    spec = PathSpec()
    results, timings = [], []
    for rep, ss in enumerate(path_ss.spawn(args.reps)):
        s_path, s_embed, *s_fit = ss.spawn(2 + len(methods))
        W = gen_paths_2d(spec, 1, seed=s_path)[0][0]
        if four_d:
            rng = np.random.default_rng(s_embed)
            dims = rng.choice(4, size=2, replace=False)
            fill = rng.uniform(-2.0, 2.0, size=4)
            W = embed_path(W, dims, fill)
            truth = product_response_4d(W)
        else:
            truth = test_function_2d(W)
        for name, child in zip(methods, s_fit):
            tic = time.perf_counter()
            mean, cov, dof, _ = _path_fit(X, Y, W, name, n0, n,
                                          seed=_seed_int(child),
                                          threads=threads,
                                          candidate_limit=X.shape[0])
            secs = time.perf_counter() - tic
            dist = mahalanobis(truth, mean, cov)
            results.append((name, rep, "log-mahalanobis",
                            math.log(max(dist, 1e-300))))
            timings.append((name, rep, secs))
    return results, timings


def _write_bench(outdir, experiment, results, timings):
    _write_rows(os.path.join(outdir, "results.csv"),
                ["comparator", "rep", "metric", "value"], results)
    _write_rows(os.path.join(outdir, "timings.csv"),
                ["comparator", "rep", "seconds"], timings)
    comparators = list(dict.fromkeys(r[0] for r in results))
    metrics = list(dict.fromkeys(r[2] for r in results))
    summary = []
    for name in comparators:
        for metric in metrics:
            vals = np.array([r[3] for r in results
                             if r[0] == name and r[2] == metric])
            if vals.size:
                qs = np.nanquantile(vals, (0.05, 0.25, 0.5, 0.75, 0.95))
                summary.append((name, metric, *qs))
    _write_rows(os.path.join(outdir, "summary.csv"),
                ["comparator", "metric", "q05", "q25", "q50", "q75", "q95"],
                summary)
    for metric in metrics:
        labels, groups = [], []
        for name in comparators:
            vals = [r[3] for r in results
                    if r[0] == name and r[2] == metric and np.isfinite(r[3])]
            if vals:
                labels.append(name)
                groups.append(vals)
        if groups:
            _boxplot(os.path.join(outdir, f"{metric}.png"),
                     f"{experiment}: {metric} over replicates",
                     labels, groups, metric)
    labels = list(dict.fromkeys(r[0] for r in timings))
    groups = [[r[2] for r in timings if r[0] == name] for name in labels]
    if groups:
        _boxplot(os.path.join(outdir, "seconds.png"),
                 f"{experiment}: wall seconds", labels, groups, "seconds")


def cmd_bench(args):
    if args.scale <= 0:
        raise ValueError("--scale must be positive")
    if args.reps < 1:
        raise ValueError("--reps must be positive")
    threads = _threads(args)
    os.makedirs(args.outdir, exist_ok=True)
    if args.experiment in ("borehole-grid", "michalewicz-grid"):
        results, timings = _bench_grid(args, threads)
    else:
        results, timings = _bench_paths(args, threads,
                                        four_d=args.experiment == "paths-4d")
    _write_bench(args.outdir, args.experiment, results, timings)
    return 0


# ==== parser ================================================================

def _rect(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected xmin,xmax,ymin,ymax")
    try:
        x0, x1, y0, y1 = (float(v) for v in parts)
    except ValueError:
        raise argparse.ArgumentTypeError("expected four reals") from None
    return ((x0, x1), (y0, y1))


def _add_fit_flags(sp, n_default=50):
    sp.add_argument("--n0", type=int, default=6,
                    help="seed size for the local search (default 6)")
    sp.add_argument("--n", type=int, default=n_default,
                    help=f"local design size (default {n_default})")
    sp.add_argument("--threads", type=int, default=1,
                    help="worker processes; 0 auto-detects (default 1)")
    sp.add_argument("--seed", type=int, default=None,
                    help="master seed (default: nondeterministic)")


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="localgp",
        description="Local Gaussian-process emulation experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-design",
                       help="Latin hypercube design plus test responses")
    g.add_argument("--fn", required=True, choices=("borehole", "michalewicz"))
    g.add_argument("--n", type=int, required=True, help="number of rows")
    g.add_argument("--p", type=int, default=None,
                   help="input dimension (borehole fixes 8; default 4)")
    g.add_argument("--M", type=float, default=10.0,
                   help="michalewicz steepness (default 10)")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_design)

    g = sub.add_parser("gen-paths", help="random 2d prediction paths")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--resolution", type=int, default=100)
    g.add_argument("--rect", type=_rect, default=((-2.0, 2.0), (-2.0, 2.0)),
                   help="xmin,xmax,ymin,ymax (default -2,2,-2,2)")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_paths)

    g = sub.add_parser("global-scale",
                       help="bootstrapped global lengthscale estimate")
    g.add_argument("--train", required=True)
    g.add_argument("--mode", choices=("blhs", "random"), default="blhs")
    g.add_argument("--m", type=int, default=None,
                   help="blocks per axis (default: sized for ~1000 rows)")
    g.add_argument("--boot", type=int, default=None,
                   help="bootstrap repetitions (default 30 blhs, 1 random)")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_global_scale)

    g = sub.add_parser("predict", help="local GP prediction at test rows")
    g.add_argument("--method", default="alc",
                   help="comparator name, e.g. nn, alcsep.sb (default alc)")
    g.add_argument("--train", required=True)
    g.add_argument("--test", required=True)
    g.add_argument("--nprime", type=int, default=None,
                   help="candidate pool size (default min(N, 1000))")
    g.add_argument("--out", required=True)
    g.add_argument("--scale", default=None,
                   help="global-scale file overriding the method's own "
                        "scaling stage")
    _add_fit_flags(g)
    g.set_defaults(func=cmd_predict)

    g = sub.add_parser("path-predict",
                       help="joint prediction along stored paths")
    g.add_argument("--method", required=True,
                   choices=("alc-ex", "alc-opt", "nn-joint",
                            "alc-pw", "nn-pw"))
    g.add_argument("--train", required=True)
    g.add_argument("--paths", required=True)
    g.add_argument("--draws", type=int, default=30,
                   help="posterior sample paths per path (default 30)")
    g.add_argument("--nprime", type=int, default=None,
                   help="candidate pool for the joint search (default: "
                        "sized automatically); pointwise baselines keep "
                        "min(N, 1000)")
    g.add_argument("--scale", default=None,
                   help="global-scale file; prescales training rows and "
                        "paths alike")
    g.add_argument("--out-pred", required=True)
    g.add_argument("--out-cov", required=True)
    g.add_argument("--out-draws", required=True)
    _add_fit_flags(g)
    g.set_defaults(func=cmd_path_predict)

    g = sub.add_parser("bench", help="seeded benchmark experiments")
    g.add_argument("--experiment", required=True,
                   choices=("borehole-grid", "michalewicz-grid",
                            "paths-2d", "paths-4d"))
    g.add_argument("--scale", type=float, default=1.0,
                   help="problem size multiplier (default 1.0)")
    g.add_argument("--reps", type=int, default=5)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--outdir", required=True)
    g.set_defaults(func=cmd_bench)

    g = sub.add_parser("ensemble",
                       help="mixture drag from six species models")
    g.add_argument("--models", required=True,
                   help="directory holding O.csv, O2.csv, N.csv, N2.csv, "
                        "He.csv, H.csv")
    g.add_argument("--mix", required=True,
                   help="mole fraction table, columns "
                        + ",".join(SPECIES_ORDER))
    g.add_argument("--inputs", required=True)
    g.add_argument("--method", default="alc")
    g.add_argument("--out", required=True)
    _add_fit_flags(g)
    g.set_defaults(func=cmd_ensemble)
    return ap


def _join_rect(argv):
    # "--rect -2,2,-2,2" confuses argparse (the value looks like an option);
    # fold it into the "--rect=..." form it parses unambiguously
    out, it = [], iter(argv)
    for a in it:
        if a == "--rect":
            nxt = next(it, None)
            out.append(a if nxt is None else f"--rect={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None):
    parser = _build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(_join_rect(list(argv)))
    except SystemExit as exc:
        return 2 if exc.code is None else int(exc.code)
    try:
        return args.func(args) or 0
    except (ValueError, KeyError, OSError) as exc:
        print(f"data-error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical-error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
