"""Time the numba kernels against their numpy/python fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

The end-to-end section runs a Gaussian prediction in two subprocesses, one
with KRR_OVERFIT_DISABLE_NUMBA=1, so import-time backend selection is covered.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from krr_overfit import _accel, _kernels
from krr_overfit.spectrum import SpectrumSpec, build_spectrum


def _cases():
    s = build_spectrum(SpectrumSpec(6, 1.0), 1024)
    ll, lc, cnt = s.log_lambda, s.log_count, s.count_array
    lo, hi = float(ll[-1]) - 20.0, 10.0
    return {
        "cf_ratio(v=150, x=80)": (
            lambda: _kernels.cf_ratio_nb(150.0, 80.0, 100000),
            lambda: _kernels.cf_ratio_py(150.0, 80.0, 100000)),
        "ratio_chain(400 orders)": (
            lambda: _kernels.ratio_chain_nb(2.0, 400, 30.0, 100000),
            lambda: _kernels.ratio_chain_py(2.0, 400, 30.0, 100000)),
        "log_i_series(v=120, x=60)": (
            lambda: _kernels.log_i_series_nb(120.0, 60.0),
            lambda: _kernels.log_i_series_np(120.0, 60.0)),
        f"kappa_excess({ll.size} blocks)": (
            lambda: _kernels.kappa_excess_nb(ll, lc, cnt, 1024.0, 0.0, -10.0),
            lambda: _kernels.kappa_excess_np(ll, lc, cnt, 1024.0, 0.0, -10.0)),
        f"kappa_bisect({ll.size} blocks)": (
            lambda: _kernels.kappa_bisect_nb(ll, lc, cnt, 1024.0, 0.0, lo, hi, 0.0),
            lambda: _kernels.kappa_bisect_np(ll, lc, cnt, 1024.0, 0.0, lo, hi, 0.0)),
    }


_PROBE = """
import json, time
t = time.perf_counter()
from krr_overfit import _accel, eigenframework as ef
for d, tau in [(4, 1.0), (6, 0.5), (8, 2.0), (16, 1.0)]:
    for m in (64, 256, 1024, 4096):
        ef.predicted_risk(ef.gaussian_system(d, tau, m), ef.TargetSpec.constant(1.0), 1.0, m)
print(json.dumps({"backend": _accel.backend(), "seconds": time.perf_counter() - t}))
"""


def _end_to_end(disable):
    env = dict(os.environ)
    env.pop("KRR_OVERFIT_DISABLE_NUMBA", None)
    if disable:
        env["KRR_OVERFIT_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _PROBE], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba unavailable or disabled; only the end-to-end numpy timing runs")
    else:
        print(f"{'kernel':32s} {'numba us':>10s} {'numpy us':>10s} {'speedup':>8s}")
        for name, (fast, slow) in _cases().items():
            fast()  # compile
            n = 200
            tf = min(timeit.repeat(fast, number=n, repeat=args.repeat)) / n * 1e6
            ts = min(timeit.repeat(slow, number=n, repeat=args.repeat)) / n * 1e6
            print(f"{name:32s} {tf:10.2f} {ts:10.2f} {ts / tf:8.1f}")
    print("\nend to end (16 Gaussian predictions, fresh interpreter, includes import and JIT load):")
    for disable in (False, True):
        r = _end_to_end(disable)
        print(f"  {r['backend']:6s} {r['seconds']:.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
