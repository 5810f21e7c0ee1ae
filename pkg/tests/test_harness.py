import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import j0

from conftest import polys
from haarexp import harness as hs
from haarexp import rmt
from haarexp.expansion import FourierSpec
from haarexp.ncalg import NCPoly, U, V, Z

# -- parser -------------------------------------------------------------------


def test_parse_examples():
    P = hs.parse_poly("U1 Z1 U1* Z1")
    assert P == U(1) * Z(1) * V(1) * Z(1)
    assert hs.parse_poly("U1^3") == U(1) ** 3
    assert hs.parse_poly("(U1 + U1*)^2") == (U(1) + V(1)) ** 2
    assert hs.parse_poly("Z1*") == Z(1).adjoint()
    assert hs.parse_poly("i U1") == 1j * U(1)
    assert hs.parse_poly("2 U1 - (0.5+1i) Z2") == 2 * U(1) - (0.5 + 1j) * Z(2)
    assert hs.parse_poly("U1 * U2") == U(1) * U(2)
    assert hs.parse_poly("(U1 Z1)*") == Z(1).adjoint() * V(1)
    assert hs.parse_poly("U1* * Z1") == V(1) * Z(1)
    assert hs.parse_poly("3") == 3 * NCPoly.one()


@pytest.mark.parametrize("text,pos", [("U1 )", 3), ("U1 +", 4), ("U0", 1), ("Q1", 0),
                                      ("U1 Z1 [", 6), ("(1+2i", 0), ("U1^", 3), ("2 *", 3),
                                      ("", 0)])
def test_parse_errors_report_position(text, pos):
    with pytest.raises(hs.ParseError) as info:
        hs.parse_poly(text)
    assert info.value.pos == pos
    assert "<HERE>" in str(info.value)


@given(polys())
def test_format_parse_roundtrip(P):
    assert hs.parse_poly(hs.format_poly(P)) == P


@given(st.text(alphabet="UZ12*^()+- i.", max_size=14))
def test_parser_fuzz_only_raises_parse_error(text):
    try:
        out = hs.parse_poly(text)
    except hs.ParseError:
        return
    assert isinstance(out, NCPoly)


def test_fspec_roundtrip():
    for text in ("moment:4", "trig:(0.5,1.0);(-0.5,(1+2i))", "identity"):
        f = hs.parse_fspec(text)
        g = hs.parse_fspec(hs.format_fspec(f))
        if f is None:
            assert g is None
        else:
            assert g.moment == f.moment and list(g.atoms) == list(f.atoms)
    for bad in ("moment:x", "trig:", "trig:0.5,1", "sine:2"):
        with pytest.raises(ValueError):
            hs.parse_fspec(bad)


# -- config ---------------------------------------------------------------------


def test_config_json_roundtrip(tmp_path):
    cfg = hs.ExperimentConfig(kind="fit", polys=["U1 + U1*"], f="moment:2", Ns=[4, 8, 16, 32],
                              samples=50, seed=3, matrices={"Z1": {"diag": [1, -1]}},
                              params={"alpha": False})
    back = hs.ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert hs.ExperimentConfig.load(str(path)) == cfg


@pytest.mark.parametrize("patch", [{"kind": "nope"}, {"samples": 0}, {"extra": 1},
                                   {"polys": ["U1 +"]}, {"matrices": {"A": {"diag": [1]}}},
                                   {"matrices": {"Z1": {"ones": 2}}}, {"schema": "other/2"}])
def test_config_rejects(patch):
    data = hs.ExperimentConfig(kind="expand", polys=["U1"]).to_dict()
    data.update(patch)
    with pytest.raises(ValueError):
        try:
            hs.ExperimentConfig.from_dict(data)
        except Exception as exc:  # jsonschema errors are not ValueErrors
            if exc.__class__.__name__ == "ValidationError":
                raise ValueError(str(exc)) from exc
            raise


def test_make_matrices():
    m = hs.make_matrices({"Z1": {"diag": [1, -1]}, "Z2": {"diag": ["(1+1i)"]}}, 4)
    assert np.allclose(np.diag(m[1]), [1, -1, 1, -1])
    assert np.allclose(np.diag(m[2]), [1 + 1j] * 4)
    with pytest.raises(ValueError):
        hs.make_matrices({"Z1": {"diag": [1, 2, 3]}}, 4)
    h = hs.make_matrices({"Z1": {"hermitian": {"seed": 2}}}, 6)[1]
    assert np.allclose(h, h.conj().T)
    assert np.linalg.norm(h, 2) == pytest.approx(1.0)


# -- CSV ---------------------------------------------------------------------------


def test_csv_format():
    text = hs.csv_text([{"N": 4, "x": 0.1, "z": 1 + 2j, "flag": True}])
    lines = text.splitlines()
    assert lines[0] == "N,x,z_re,z_im,flag"
    assert lines[1] == "4,0.1,1.0,2.0,true"
    for x in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(hs.format_number(x)) == x


def _fit_cfg():
    return hs.ExperimentConfig(kind="fit", polys=["U1 Z1 U1* Z1"], f="moment:1", Ns=[2, 4, 6, 8],
                               samples=40, seed=11, matrices={"Z1": {"diag": [1, -1]}})


def test_fit_deterministic_across_threads(tmp_path):
    a, _ = hs.run_experiment(_fit_cfg(), threads=1)
    b, _ = hs.run_experiment(_fit_cfg(), threads=3)
    assert hs.csv_text(a.rows) == hs.csv_text(b.rows)
    c = _fit_cfg()
    c.seed = 12
    assert hs.csv_text(hs.run_experiment(c)[0].rows) != hs.csv_text(a.rows)
    rep, path = hs.run_experiment(_fit_cfg(), out_dir=str(tmp_path))
    assert path.endswith("fit.csv")
    with open(path) as fh:
        assert fh.read() == hs.csv_text(a.rows)


def test_fit_columns():
    rep, _ = hs.run_experiment(_fit_cfg())
    header = hs.csv_text(rep.rows).splitlines()[0].split(",")
    for col in ("N", "mean", "stderr", "intercept", "slope", "alpha0", "alpha1"):
        assert col in header or col + "_re" in header
    assert rep.summary["alpha1"] == pytest.approx(0, abs=1e-9)


def test_covcheck_columns():
    cfg = hs.ExperimentConfig(kind="covcheck", polys=["U1", "U1", "U1 Z1", "U1 Z1"], Ns=[4],
                              samples=20, matrices={"Z1": {"diag": [1, -1]}},
                              params={"T": 0.2, "nodes": 3, "steps": 20, "rhs_samples": 20})
    rep, _ = hs.run_experiment(cfg)
    assert len(rep.rows) == 2
    header = hs.csv_text(rep.rows).splitlines()[0].split(",")
    assert header == ["P", "Q", "N", "T", "lhs_re", "lhs_im", "lhs_stderr", "rhs_re", "rhs_im",
                      "rhs_stderr", "z", "z_max_component"]
    with pytest.raises(ValueError):
        hs.run_experiment(hs.ExperimentConfig(kind="covcheck", polys=["U1"]))


# -- spectrum confinement -------------------------------------------------------


def test_reference_support_for_fixed_matrix():
    ref = hs.reference_support(Z(1), {"Z1": np.diag([1.0, -1.0]).astype(complex)}, 16)
    lo = min(a for a, _ in ref["intervals"])
    hi = max(b for _, b in ref["intervals"])
    assert lo == pytest.approx(-1, abs=1e-8) and hi == pytest.approx(1, abs=1e-8)


def test_reference_support_arcsine():
    ref = hs.reference_support(U(1) + V(1), {}, 64)
    assert len(ref["intervals"]) == 1
    lo, hi = ref["intervals"][0]
    assert abs(lo + 2) < 0.02 and abs(hi - 2) < 0.02


def test_confine_exact_containment():
    cfg = hs.ExperimentConfig(kind="confine", polys=["Z1"], Ns=[8, 16], seed=1,
                              matrices={"Z1": {"diag": [1, -1]}},
                              params={"runs": 2, "moments": 16})
    rep, _ = hs.run_experiment(cfg)
    assert all(r["outlier_fraction"] == 0 for r in rep.rows)
    assert rep.summary["zero_runs_N16"] == 1.0


def test_confine_rejects():
    with pytest.raises(ValueError):
        hs.run_experiment(hs.ExperimentConfig(kind="confine", polys=["U1"]))
    with pytest.raises(ValueError):
        hs.run_experiment(hs.ExperimentConfig(kind="confine", polys=["U1 + U1*"],
                                              params={"alpha": 0.5}))


# -- tensor probe ---------------------------------------------------------------


def test_tensor_eval_with_M_one(rng):
    P = hs.parse_poly("U1 Z1 U1* + Z1")
    U1 = rmt.haar_sample(5, rmt.RngStream(1))
    Y = np.array([[2.0 + 1j]])
    big = hs._tensor_eval(P, {1: U1}, {1: Y})
    direct = rmt.eval_poly(P, {1: U1}, {1: Y[0, 0] * np.eye(5)})
    assert np.allclose(big, direct)


def test_tensor_lemma_exact_for_scalars():
    A, B, C, D = (np.eye(1) * c for c in (1.0, 2.0, 0.5j, -1.0))
    est, exact = hs.tensor_trace_lemma(A, B, C, D, 10, rmt.RngStream(0))
    assert est.mean == pytest.approx(exact)
    assert est.stderr == pytest.approx(0, abs=1e-12)


def test_tensor_probe_guard_and_rows():
    cfg = hs.ExperimentConfig(kind="tensor-probe", polys=["U1 + U1*"], Ns=[4, 8], Ms=[1, 2],
                              samples=200, matrices={"Z1": {"diag": [1]}},
                              params={"runs": 2, "lemma_M": 3})
    rep, _ = hs.run_experiment(cfg)
    assert rep.rows[0]["part"] == "lemma"
    assert len(rep.rows) == 5
    cfg.params["max_dim"] = 16
    with pytest.raises(MemoryError):
        hs.run_experiment(cfg)


# -- conjugation freeness ------------------------------------------------------


def test_conjugation_single_matrix_is_deterministic():
    # with one matrix, a_1 is conjugated by y = 0, so the moment is ts((A^c)^2)
    cfg = hs.ExperimentConfig(kind="conjugate-freeness", polys=["U1 + U1*"], Ns=[4, 8],
                              samples=5, matrices={"Z1": {"diag": [1, 0]}})
    rep, _ = hs.run_experiment(cfg)
    for r in rep.rows:
        assert r["moment"] == pytest.approx(0.25)
        assert r["stderr"] == pytest.approx(0, abs=1e-14)


def test_conjugation_rejects_matrix_letters():
    cfg = hs.ExperimentConfig(kind="conjugate-freeness", polys=["U1 Z1 U1*"], Ns=[4], samples=4,
                              matrices={"Z1": {"diag": [1, 0]}})
    with pytest.raises(ValueError):
        hs.run_experiment(cfg)


def test_conjugation_constant_poly():
    cfg = hs.ExperimentConfig(kind="conjugate-freeness", polys=["1"], Ns=[4], samples=4,
                              matrices={"Z1": {"diag": [1, 1, 0, 0]}, "Z2": {"diag": [1, 0, 0, 0]}})
    rep, _ = hs.run_experiment(cfg)
    assert rep.rows[0]["moment"] == pytest.approx(0.125)


def test_free_conjugation_closed_form():
    cfg = hs.ExperimentConfig(kind="conjugate-freeness", polys=["U1 + U1*"], Ns=[4], samples=4,
                              matrices={"Z1": {"diag": [1, 1, 0, 0]}, "Z2": {"diag": [1, 0, 0, 0]}},
                              params={"free_limit": True, "gap": 2.0})
    rep, _ = hs.run_experiment(cfg)
    assert rep.rows[0]["free_limit"] == pytest.approx(0.125 * j0(4.0) ** 2, abs=1e-9)
    cfg.params["p"] = 3
    rep, _ = hs.run_experiment(cfg)
    assert np.isnan(rep.rows[0]["free_limit"].real)


def test_selftest_runs():
    rep, _ = hs.run_experiment(hs.ExperimentConfig(kind="selftest", samples=50))
    vals = {r["check"]: r["value"] for r in rep.rows}
    assert vals["haar_unitarity"].real < 1e-12
    assert vals["alpha1"] == pytest.approx(vals["weingarten_a1"], abs=1e-8)
    assert vals["J3_size"] == 960
    assert vals["fubm_density_total"].real == pytest.approx(2 * np.pi, rel=1e-8)


# -- command line --------------------------------------------------------------


def _cli(*args):
    env = dict(os.environ)
    return subprocess.run([sys.executable, "-m", "haarexp", *args], capture_output=True,
                          text=True, env=env, timeout=300)


def test_cli_oracle_and_indexsets():
    r = _cli("oracle", "--word", "U Z U* Z U Z U* Z", "--N", "16")
    assert r.returncode == 0
    header, row = r.stdout.strip().splitlines()
    assert header.startswith("word,N,value_re")
    assert "a1_re" in header
    vals = dict(zip(header.split(","), row.split(",")))
    assert float(vals["a1_re"]) == pytest.approx(-1.0)
    r = _cli("indexsets", "dump", "--order", "1")
    assert r.returncode == 0 and len(r.stdout.splitlines()) == 4


def test_cli_errors_and_globals(tmp_path):
    r = _cli("expand", "--poly", "U1 +")
    assert r.returncode == 2 and "position 4" in r.stderr
    r = _cli("fit", "--poly", "U1 + U1*", "--f", "moment:2", "--Ns", "2,4,6,8", "--samples", "20",
             "--no-alpha", "--seed", "5", "--out", str(tmp_path))
    assert r.returncode == 0
    assert (tmp_path / "fit.csv").exists()
    r2 = _cli("--seed", "5", "fit", "--poly", "U1 + U1*", "--f", "moment:2", "--Ns", "2,4,6,8",
              "--samples", "20", "--no-alpha")
    with open(tmp_path / "fit.csv") as fh:
        assert fh.read() == r2.stdout


def test_cli_config_file(tmp_path):
    cfg = hs.ExperimentConfig(kind="expand", polys=["U1 Z1 U1* Z1 U1 Z1 U1* Z1"],
                              matrices={"Z1": {"diag": [1, -1]}}, quadrature={"nodes": 16})
    path = tmp_path / "e.json"
    path.write_text(cfg.to_json())
    r = _cli("expand", "--config", str(path))
    assert r.returncode == 0
    summary = json.loads(r.stderr.strip().splitlines()[-1])
    assert summary["alpha1"][0] == pytest.approx(-1.0, abs=1e-6)
