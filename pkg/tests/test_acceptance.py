"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (outside
pytest's capture) and asserts the criterion at its stated tolerance.
"""

import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from nematiclab.bulk_potential import (
    MaterialParams,
    packed_bulk_density,
    packed_molecular_field,
    uniaxial_equilibrium,
)
from nematiclab.config import load_config, parse_config
from nematiclab.experiments import run_config, taylor_green
from nematiclab.fields import Grid2D, TensorField, VectorField
from nematiclab.inequality_verifier import parameter_grid, verify_all
from nematiclab.solver import IMEX_BDF2, SimState, run
from nematiclab.tensor_core import eigen_property_suite, packed_eigvals, packed_inner, random_packed, uniaxial

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def test_criterion_1_inequalities(report):
    t0 = time.perf_counter()
    worst = math.inf
    ok = True
    for params in parameter_grid():
        for rep in verify_all(params, 10 ** 6, seed=0):
            worst = min(worst, rep.worst_margin)
            ok &= rep.passed and rep.samples_checked >= 10 ** 6 and rep.worst_margin >= -1e-12
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    assert report(1, ok, f"27 parameter sets x 4 checks x 1e6 samples, worst margin {worst:.3e}, {elapsed:.1f}s")


def test_criterion_2_eigen_solver(report):
    t0 = time.perf_counter()
    res = eigen_property_suite(10 ** 5, seed=0)
    elapsed = time.perf_counter() - t0
    ok = all(v["pass"] for v in res.values()) and elapsed < 10
    detail = ", ".join(f"{k} {v['worst']:.2e}" for k, v in res.items())
    assert report(2, ok, f"{detail}, {elapsed:.2f}s")


def test_criterion_3_gradient_consistency(report):
    rng = np.random.default_rng(2024)
    q = random_packed(1000, rng, (-1.0, 0.3))
    d = random_packed(1000, rng, (0.0, 0.0))
    worst = 0.0
    for params in (MaterialParams(a=0.0, b=1.0, c=1.0), MaterialParams(a=-0.3, b=2.0, c=0.5)):
        h = 1e-5
        fd = (packed_bulk_density(q + h * d, params) - packed_bulk_density(q - h * d, params)) / (2 * h)
        exact = -packed_inner(packed_molecular_field(q, params), d)
        worst = max(worst, float(np.max(np.abs(fd - exact))))
    assert report(3, worst <= 1e-8, f"1e3 pairs, h = 1e-5, max deviation {worst:.2e}")


def _solver_oracles():
    g = Grid2D(64, 64)
    X, _ = g.coords()
    zero_u = np.zeros((2,) + g.shape)

    def nothing(_):
        return None

    # (i) heat kernel
    p = MaterialParams(L=0.1, a=0, b=0, c=0)
    q = np.zeros((5,) + g.shape)
    q[1] = 0.3 * np.sin(3 * X)
    _, st = run(SimState(0.0, VectorField(g, zero_u), TensorField(g, q), p, 1e-2), 1.0, 1.0, nothing)
    exact = q[1] * math.exp(-0.1 * 9)
    heat = float(np.max(np.abs(st.Q.data[1] - exact)) / np.max(np.abs(exact)))

    # (ii) stationary uniaxial equilibrium
    p = MaterialParams(a=0, b=1, c=1)
    q = np.broadcast_to(uniaxial(uniaxial_equilibrium(p), [0, 0.6, 0.8]).packed[:, None, None],
                        (5,) + g.shape).copy()
    _, st = run(SimState(0.0, VectorField(g, zero_u), TensorField(g, q), p, 1e-3), 1.0, 1.0, nothing)
    drift = float(np.max(np.abs(st.Q.data - q)))

    # (iii) Taylor-Green decay without coupling
    p = MaterialParams(nu=0.7, lambda_c=0.0)
    u = taylor_green(g, 1.0)
    st0 = SimState(0.0, VectorField(g, u.copy()), TensorField(g, np.zeros((5,) + g.shape)), p, 1e-2)
    _, st = run(st0, 1.0, 1.0, nothing)
    tg = float(np.max(np.abs(st.u.data - u * math.exp(-1.4))) / math.exp(-1.4))

    # (iv) spatially constant field reduces to the scalar order ODE
    p = MaterialParams(a=0.01, b=1, c=1, gamma=2.0)
    g8 = Grid2D(8, 8)
    s0 = 0.3
    q = np.broadcast_to(uniaxial(s0, [1, 0, 0]).packed[:, None, None], (5,) + g8.shape).copy()
    st0 = SimState(0.0, VectorField.zeros(g8), TensorField(g8, q), p, 1e-3, scheme=IMEX_BDF2)
    _, st = run(st0, 1.0, 1.0, nothing)
    ref = solve_ivp(lambda t, s: p.gamma * (-p.a * s + p.b / 3 * s ** 2 - 2 * p.c / 3 * s ** 3),
                    (0, 1), [s0], rtol=1e-12, atol=1e-14).y[0, -1]
    ode = float(np.max(np.abs(1.5 * packed_eigvals(st.Q.data)[0] - ref)))
    return heat, drift, tg, ode


def test_criterion_4_solver_oracles(report):
    t0 = time.perf_counter()
    heat, drift, tg, ode = _solver_oracles()
    elapsed = time.perf_counter() - t0
    ok = heat <= 1e-6 and drift <= 1e-10 and tg <= 1e-6 and ode <= 1e-6 and elapsed < 120
    assert report(4, ok, f"heat {heat:.1e}, stationary drift {drift:.1e}, Taylor-Green {tg:.1e}, "
                         f"ODE {ode:.1e}, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# criteria 5-9 share the scenario runs
# --------------------------------------------------------------------------

_RUNS: dict = {}


def _scenario_run(name, out_root):
    if name not in _RUNS:
        cfg = load_config(CONFIGS / f"{name}.ini")
        out = out_root / name
        t0 = time.perf_counter()
        summary = run_config(cfg, out)
        _RUNS[name] = (cfg, out, summary, time.perf_counter() - t0)
    return _RUNS[name]


@pytest.fixture(scope="module")
def out_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def test_criterion_5_theorem(report, out_root):
    cfg, out, s, elapsed = _scenario_run("theorem", out_root)
    assert cfg.params.a == 0 and cfg.grid.nx == 64 and cfg.run.T == 1.0
    on_disk = json.loads((out / "summary.json").read_text())
    hi, lo, tol = 1 / 3, -1 / 6, s["tol_h"]
    ok = (s["l1_max"] <= hi + tol and s["l3_min"] >= lo - tol
          and s["calibration"]["shrink_ratio"] >= 1.5 and on_disk["tol_h"] == tol
          and s["checks"]["upper_bound"] and s["checks"]["lower_bound"] and elapsed < 300)
    assert report(5, ok, f"max l1 {s['l1_max']:.6f}, min l3 {s['l3_min']:.6f}, tol_h {tol:.2e}, "
                         f"shrink x{s['calibration']['shrink_ratio']:.2f}, {elapsed:.1f}s")


def test_criterion_6_corollary(report, out_root):
    cfg, out, s, elapsed = _scenario_run("corollary", out_root)
    with open(out / "monitor.csv") as fh:
        l1 = [float(row["l1_max"]) for row in csv.DictReader(fh)]
    ok = (abs(l1[0] - 0.5) < 1e-12
          and all(v <= 0.5 + s["tol_h"] for v in l1)
          and l1[-1] <= l1[0] and elapsed < 300)
    assert report(6, ok, f"initial l1 {l1[0]:.6f}, max {max(l1):.6f}, "
                         f"final {l1[-1]:.6f}, tol_h {s['tol_h']:.2e}, {elapsed:.1f}s")


def test_criterion_7_regularization(report, out_root):
    cfg, out, s, elapsed = _scenario_run("regularization", out_root)
    rows = s["rows"]
    deltas = [r["delta"] for r in rows]
    errs = [r["err_l2_final"] for r in rows]
    ok = (deltas == [0.4, 0.2, 0.1, 0.05, 0.025]
          and all(b < a for a, b in zip(errs, errs[1:]))
          and all(r["err_l2_final"] <= r["gronwall_bound"] * (1 + 1e-10) for r in rows)
          and elapsed < 180)
    assert report(7, ok, "errors " + ", ".join(f"{e:.3e}" for e in errs)
                  + f"; fitted C {s['gronwall_C']:.4f}, {elapsed:.1f}s")


def test_criterion_8_linf_bound(report, out_root, tmp_path):
    results = []
    runs = {
        "custom.ini": load_config(CONFIGS / "custom.ini"),
        "dirichlet": parse_config(
            "[params]\nL = 0.05\na = 0\nb = 1\nc = 1\nnu = 0.5\n"
            "[grid]\nnx = 24\nny = 24\nboundary = dirichlet\n"
            "[run]\nbackend = fd\ndt = 2e-3\nT = 0.5\nmonitor_interval = 0.05\n"
            "[initial]\nu0 = taylor-green\nu0_amplitude = 0.5\n"),
        "uniaxial-relax": parse_config(
            "[params]\nL = 0.05\na = -0.2\nb = 1\nc = 1\n[grid]\nnx = 16\nny = 16\n"
            "[run]\ndt = 2e-3\nT = 1\nmonitor_interval = 0.1\n"
            "[initial]\nq0 = uniaxial\ns = 1.2\nu0 = modes\nu0_amplitude = 0.3\n"),
    }
    for name, cfg in runs.items():
        s = run_config(cfg, tmp_path / name)
        results.append((name, s["linf_max"], s["linf_bound"], s["pass"]))
    # the theorem/corollary runs record the same bound
    for name in ("theorem", "corollary"):
        _, _, s, _ = _scenario_run(name, out_root)
        results.append((name, s["linf_max"], s["linf_bound"], s["checks"]["linf_bound"]))
    ok = all(p and m <= b + 1e-6 for _, m, b, p in results)
    assert report(8, ok, "; ".join(f"{n} {m:.4f} <= {b:.4f}" for n, m, b, _ in results))


def test_criterion_9_determinism(report, tmp_path, out_root):
    same = []
    for name, csv_name in (("theorem", "monitor.csv"), ("corollary", "monitor.csv"),
                           ("regularization", "regularization.csv")):
        _, out, _, _ = _scenario_run(name, out_root)
        cfg = load_config(CONFIGS / f"{name}.ini")
        run_config(cfg, tmp_path / name)
        a = (out / csv_name).read_bytes()
        b = (tmp_path / name / csv_name).read_bytes()
        same.append(a == b and len(a) > 0)
        same.append((out / "summary.json").read_bytes() == (tmp_path / name / "summary.json").read_bytes())
    assert report(9, all(same), f"{sum(same)}/{len(same)} CSV and summary files byte-identical on rerun")
