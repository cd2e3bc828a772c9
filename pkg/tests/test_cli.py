import json

import pytest

from torus_kam.cli import generate_field, main, parse_alpha, parse_frequency


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parsers():
    assert parse_frequency("golden").alpha is not None
    assert parse_frequency("1,2").values == (1.0, 2.0)
    with pytest.raises(ValueError):
        parse_frequency("a,b")
    assert float(parse_alpha("sqrt:2")) == pytest.approx(2**0.5)
    assert float(parse_alpha("quad:1,5,2")) == pytest.approx(1.6180339887)


def test_constants_verdicts(capsys):
    code, out, _ = run(capsys, "constants", "--a", "0.5", "--kappa", "1.5", "--r", "400", "--tau", "1")
    assert code == 0 and "PASS" in out and "316.767" in out
    code, out, _ = run(capsys, "constants", "--a", "0.5", "--kappa", "1.5", "--r", "100", "--tau", "1")
    assert code == 0 and "FAIL" in out


def test_constants_bad_kappa(capsys):
    code, _, err = run(capsys, "constants", "--kappa", "2")
    assert code == 2 and "kappa" in err


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kam": {"K_max": "lots"}}))
    code, _, _ = run(capsys, "kam", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2


def test_classify(tmp_path, capsys):
    code, out, _ = run(capsys, "classify", "--alpha", "golden", "--terms", "30", "--out", str(tmp_path))
    assert code == 0
    rep = json.loads((tmp_path / "classify.json").read_text())
    assert rep["continued_fraction"]["denominators"][:8] == [1, 1, 2, 3, 5, 8, 13, 21]
    assert len(rep["continued_fraction"]["bruno_sums"]) == 30
    code, _, _ = run(capsys, "classify", "--omega", "1,2", "--out", str(tmp_path))
    assert code == 3


def test_classify_liouville(tmp_path, capsys):
    code, out, _ = run(capsys, "classify", "--builder", "power2", "--terms", "8", "--out", str(tmp_path))
    assert code == 0 and "russmann" in out
    rep = json.loads((tmp_path / "classify.json").read_text())
    assert rep["classification"]["conditions"]["russmann"]["verdict"] == "refuted"


def test_cohomology(tmp_path, capsys, data_dir):
    code, out, _ = run(capsys, "cohomology", "--input", str(data_dir / "single_mode.json"), "--out", str(tmp_path))
    assert code == 0 and "0.1287590537" in out
    assert (tmp_path / "spectra" / "g.json").exists()
    code, _, _ = run(capsys, "cohomology", "--input", str(data_dir / "constant.json"), "--out", str(tmp_path))
    assert json.loads((tmp_path / "spectra" / "g.json").read_text())["entries"] == []


def test_cohomology_liouville_table(tmp_path, capsys):
    code, out, _ = run(capsys, "cohomology", "--liouville-cutoffs", "4,5,6,7", "--r", "0.1", "--out", str(tmp_path))
    assert code == 0
    rep = json.loads((tmp_path / "cohomology.json").read_text())
    assert rep["liouville_growth"]["growth_x10"] == [True, True, True]


def test_smooth(tmp_path, capsys, caplog, data_dir):
    code, _, _ = run(capsys, "smooth", "--input", str(data_dir / "gevrey_envelope.json"), "--J", "4",
                     "--out", str(tmp_path), "--workers", "2")
    assert code == 0 and "exceeds" in caplog.text
    assert (tmp_path / "decay.csv").read_text().startswith("j,u,N,N_used")
    assert len(list((tmp_path / "spectra").glob("stage_*.json"))) == 5


def test_workers_do_not_change_results(tmp_path, capsys, data_dir):
    for w in ("1", "3"):
        run(capsys, "smooth", "--input", str(data_dir / "gevrey_envelope.json"), "--J", "3",
            "--out", str(tmp_path / w), "--workers", w)
    assert (tmp_path / "1" / "smoothing.json").read_text() == (tmp_path / "3" / "smoothing.json").read_text()


def test_kam_outputs_and_determinism(tmp_path, capsys, data_dir):
    cfg = str(data_dir / "kam_generic.json")
    for d in ("a", "b"):
        code, out, _ = run(capsys, "kam", "--config", cfg, "--out", str(tmp_path / d))
        assert code == 0
    a = (tmp_path / "a" / "certificate.json").read_text()
    assert a == (tmp_path / "b" / "certificate.json").read_text()
    cert = json.loads(a)
    assert cert["final"]["residual"] < 1e-10
    assert cert["hypotheses"]["r_gt_c_tau"] is False
    assert cert["config"]["K_max"] == 32 and cert["source"]["seed"] == 7
    assert (tmp_path / "a" / "stages.csv").exists()
    assert (tmp_path / "a" / "spectra" / "phi.json").exists()


def test_kam_zero_field(tmp_path, capsys):
    cfg = tmp_path / "z.json"
    cfg.write_text(json.dumps({"generator": {"kind": "zero", "K": 4}, "kam": {"K_max": 4}}))
    code, _, _ = run(capsys, "kam", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 0
    phi = json.loads((tmp_path / "spectra" / "phi.json").read_text())
    assert phi["kind"] == "map" and all(c == [] for c in phi["components"])


def test_kam_divergent_exit_4(tmp_path, capsys, data_dir):
    code, _, err = run(capsys, "kam", "--config", str(data_dir / "kam_divergent.json"), "--out", str(tmp_path))
    assert code == 4 and "residual history" in err
    assert json.loads((tmp_path / "divergence.json").read_text())["residual_history"]


def test_kam_strict_envelope_exit_4(tmp_path, capsys):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"seed": 7, "generator": {"kind": "gevrey_random", "K": 16},
                               "kam": {"K_max": 16, "C2": 0.001, "C4": 0.001}}))
    code, _, err = run(capsys, "kam", "--config", str(cfg), "--strict", "--out", str(tmp_path))
    assert code == 4 and "envelope" in err


def test_oracle_check(tmp_path, capsys, data_dir):
    cfg = tmp_path / "o.json"
    cfg.write_text(json.dumps({"kam": {"K_max": 16}}))
    code, out, _ = run(capsys, "oracle-check", "--input", str(data_dir / "oracle_f.json"), "--config", str(cfg),
                       "--out", str(tmp_path))
    assert code == 0 and "AGREE" in out


def test_generator_seeded():
    a = generate_field({"kind": "gevrey_random", "K": 8}, 3)
    b = generate_field({"kind": "gevrey_random", "K": 8}, 3)
    c = generate_field({"kind": "gevrey_random", "K": 8}, 4)
    assert a == b and not a == c
