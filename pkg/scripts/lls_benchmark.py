"""Sketch-preconditioned LSQR against a dense SVD solve on random systems.

Each row reports the ensemble, sketch size, LSQR iterations, measured
distortion, relative error to the SVD solution and solve time.

    python3 scripts/lls_benchmark.py --n 4000 --d 100 --cond 1e6 --out lls_bench.csv
"""
import argparse
import csv
import sys
import time

import numpy as np
import scipy.sparse as sp

from subspace_opt.kernels import SparseMatrix
from subspace_opt.lls import LlsConfig, sketch_solve


def dense_system(n, d, cond, rng):
    U = np.linalg.qr(rng.standard_normal((n, d)))[0]
    V = np.linalg.qr(rng.standard_normal((d, d)))[0]
    return (U * np.geomspace(1.0, 1.0 / cond, d)) @ V.T


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--d", type=int, default=100)
    ap.add_argument("--cond", type=float, default=1e6)
    ap.add_argument("--density", type=float, default=0.01, help="density of the sparse test matrix")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="lls_bench.csv")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    Ad = dense_system(args.n, args.d, args.cond, rng)
    Ms = sp.random(args.n, args.d, density=args.density, random_state=args.seed, format="csr") + sp.eye(args.n, args.d)
    cases = [("dense", Ad, Ad, e) for e in ("hrht", "gaussian", "hashing_s")]
    cases += [("sparse", SparseMatrix.from_scipy(Ms), Ms.toarray(), e) for e in ("hashing_s", "gaussian")]
    b = np.ones(args.n)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["matrix", "ensemble", "m", "rank", "eps_measured", "lsqr_iterations", "rel_error", "seconds"])
        for kind, A, dense, ens in cases:
            x_ref = np.linalg.lstsq(dense, b, rcond=None)[0]
            t0 = time.perf_counter()
            x, diag = sketch_solve(A, b, LlsConfig(ensemble=ens, s=2 if ens == "hashing_s" else None), seed=args.seed)
            dt = time.perf_counter() - t0
            err = np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref)
            w.writerow([kind, ens, diag.m, diag.p, repr(diag.eps_measured), diag.lsqr_iterations, repr(err), f"{dt:.4f}"])
            print(f"{kind:6s} {ens:10s} m={diag.m:5d} iters={diag.lsqr_iterations:4d} rel.err={err:.2e} {dt:.3f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
