"""Smoke test for the supnorm_py extension.

Build first with `cargo build --release -p supnorm-py`; the script loads the
shared library from target/release when the module is not installed.
"""

import importlib.machinery
import importlib.util
import json
import math
import pathlib
import sys


def load():
    try:
        import supnorm_py

        return supnorm_py
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for name in ("libsupnorm_py.so", "libsupnorm_py.dylib", "supnorm_py.dll"):
        path = root / "target" / "release" / name
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("supnorm_py", str(path))
            spec = importlib.util.spec_from_file_location("supnorm_py", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("supnorm_py not found; run `cargo build --release -p supnorm-py`")


def main():
    sp = load()

    truth = sp.Density("lipschitz-sine")
    assert truth.domain == (0.0, 1.0)
    xs = truth.sample(4096, 7)
    assert xs == truth.sample(4096, 7)
    assert all(0.0 <= x <= 1.0 for x in xs)

    j = sp.choose_j(len(xs), 1.0)
    post = sp.HistogramPosterior.fit(xs, j)
    weights = post.bayes_weights()
    assert len(weights) == 2**j and math.isclose(sum(weights), 1.0)
    mass = post.posterior_supnorm_mass(truth, 3.0 * sp.epsilon_rate(len(xs), 1.0), 200, 11)
    assert 0.0 <= mass <= 0.5, mass

    q = sp.quantile([1.0] * 1025, 0.0, 1.0, 0.3)
    assert abs(q - 0.3) < 1e-9
    meds = post.posterior_quantiles(0.5, 50, 3)
    assert all(abs(m - 0.36) < 0.1 for m in meds)

    report = sp.gof_test(xs, sp.Density("uniform"), 4)
    assert not report["reject"], report

    table = sp.lemma1_check(sp.Density("laplace"), "gaussian", 2.0, [0.03, 0.01, 0.003, 0.001])
    assert abs(table["rows"][-1]["ratio"] - 1.0) < 0.05, table["rows"]

    limit, target = sp.moment_limit_check("gaussian", 2)
    assert abs(limit - target) < 1e-3

    cfg = {"study_id": "smoke", "truth": "lipschitz-sine", "n_list": [1024, 4096], "reps": 2}
    records, fit = sp.rate_study(json.dumps(cfg))
    assert len(records) == 4 and math.isfinite(fit["slope"])

    try:
        sp.Density("no-such-density")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown density accepted")

    print("smoke test ok: J=%d mass=%.3f lemma1 ratio=%.4f" % (j, mass, table["rows"][-1]["ratio"]))


if __name__ == "__main__":
    main()
