import json
import subprocess
import sys

import numpy as np
import pytest

from stochequiv.cli import main
from stochequiv.documents import load_relation, load_system, save_system
from stochequiv.equivalence import check_bisimulation
from stochequiv.relations import relation_subspace

from generators import random_system


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestCheck:
    def test_bisim_true(self, capsys, fixtures):
        code, out, _ = run(capsys, "check", "bisim", fixtures / "degenerate_2d.json", fixtures / "integrator.json",
                           "-r", fixtures / "first_coordinate.json")
        assert code == 0 and out.startswith("bisim: true")

    def test_bisim_false_names_h5(self, capsys, fixtures):
        code, out, _ = run(capsys, "check", "bisim", fixtures / "full_noise_2d.json", fixtures / "integrator.json",
                           "-r", fixtures / "first_coordinate.json", "--format", "json")
        assert code == 1
        doc = json.loads(out)
        failed = [c for c in doc["conditions"] if not c["passed"]]
        assert [c["id"] for c in failed] == ["h5"] and failed[0]["note"].startswith("i=1")

    def test_ext_without_relation(self, capsys, fixtures):
        code, out, _ = run(capsys, "check", "ext", fixtures / "full_noise_2d.json", fixtures / "integrator.json")
        assert code == 0

    def test_bisim_needs_relation(self, capsys, fixtures):
        code, _, err = run(capsys, "check", "bisim", fixtures / "degenerate_2d.json", fixtures / "integrator.json")
        assert code == 2 and "relation" in err

    def test_lin_with_transform(self, capsys, tmp_path, fixtures):
        s = random_system(np.random.default_rng(0), 2)
        T = np.array([[2.0, 1.0], [0.0, 1.0]])
        save_system(s, tmp_path / "a.json")
        save_system(s.transformed(T), tmp_path / "b.json")
        code, _, _ = run(capsys, "check", "lin", tmp_path / "a.json", tmp_path / "b.json",
                         "-t", fixtures / "transform.json")
        assert code == 0
        code, _, err = run(capsys, "check", "lin", tmp_path / "a.json", tmp_path / "b.json")
        assert code == 2

    def test_lin_dimension_mismatch(self, capsys, fixtures):
        code, _, err = run(capsys, "check", "lin", fixtures / "degenerate_2d.json", fixtures / "integrator.json",
                           "-t", fixtures / "transform.json")
        assert code == 2 and "DimensionError" in err

    def test_realization(self, capsys, fixtures):
        code, _, _ = run(capsys, "check", "realization", fixtures / "ar1.json", fixtures / "ar1.json")
        assert code == 0

    def test_tolerance_flags_and_env(self, capsys, fixtures, monkeypatch):
        args = ["check", "bisim", fixtures / "degenerate_2d.json", fixtures / "integrator.json",
                "-r", fixtures / "first_coordinate.json", "--format", "json"]
        code, out, _ = run(capsys, *args, "--eq-abs", "1e-6")
        assert json.loads(out)["tolerance"]["eq_abs"] == 1e-6
        monkeypatch.setenv("STOCHEQUIV_RANK_TOL", "1e-7")
        code, out, _ = run(capsys, *args)
        assert json.loads(out)["tolerance"]["rank_rel"] == 1e-7
        monkeypatch.setenv("STOCHEQUIV_RANK_TOL", "abc")
        assert run(capsys, *args)[0] == 2

    def test_malformed_document(self, capsys, tmp_path, fixtures):
        bad = tmp_path / "bad.json"
        bad.write_text("{ nope")
        code, _, err = run(capsys, "check", "ext", bad, fixtures / "integrator.json")
        assert code == 2 and "line 1" in err

    def test_argparse_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["check", "nonsense"])
        assert exc.value.code == 2


class TestMaximalRelation:
    def test_example_pair(self, capsys, tmp_path, fixtures):
        out = tmp_path / "rel.json"
        code, _, _ = run(capsys, "maximal-relation", "ext", fixtures / "full_noise_2d.json",
                         fixtures / "integrator.json", "-o", out)
        assert code == 0
        K = relation_subspace(load_relation(out))
        assert K.dim == 2 and K.contains_vector([1.0, 0.0, 1.0])


class TestReduce:
    def test_ext(self, capsys, tmp_path, fixtures):
        out = tmp_path / "red.json"
        code, text, _ = run(capsys, "reduce", "ext", fixtures / "full_noise_2d.json", "-o", out)
        assert code == 0 and "2 -> 1" in text and "observability-kernel" in text
        assert load_system(out).n == 1
        assert (tmp_path / "red.relation.json").exists()

    def test_bisim_closure(self, capsys, tmp_path, fixtures):
        out = tmp_path / "red.json"
        code, text, _ = run(capsys, "reduce", "bisim", fixtures / "sum_closure.json", "-o", out,
                            "--relation-output", tmp_path / "link.json", "--format", "json")
        assert code == 0
        doc = json.loads(text)
        assert doc["reduced_dim"] == 2 and doc["certificate"]["route"] == "eigenspace-splitting"
        red, orig = load_system(out), load_system(fixtures / "sum_closure.json")
        assert check_bisimulation(red, orig, load_relation(tmp_path / "link.json")).verdict is True

    def test_irreducible(self, capsys, tmp_path):
        s = random_system(np.random.default_rng(2), 3)
        save_system(s, tmp_path / "s.json")
        code, text, _ = run(capsys, "reduce", "bisim", tmp_path / "s.json", "-o", tmp_path / "r.json")
        assert code == 0 and "3 -> 3" in text and "irreducible" in text


class TestSimulate:
    def test_writes_ensemble_and_summary(self, capsys, tmp_path, fixtures):
        out = tmp_path / "ens.txt"
        code, text, _ = run(capsys, "simulate", fixtures / "degenerate_2d.json", "--seed", 3, "-N", 500, "-T", 4,
                            "--x0", "0,1", "-o", out, "--format", "json")
        assert code == 0
        doc = json.loads(text)
        assert doc["max_support_distance"] < 1e-9
        lines = out.read_text().splitlines()
        assert len(lines) == 2 + 500 * 5

    def test_bad_x0(self, capsys, tmp_path, fixtures):
        code, _, err = run(capsys, "simulate", fixtures / "degenerate_2d.json", "--seed", 3, "--x0", "1",
                           "-o", tmp_path / "e.txt")
        assert code == 2 and "--x0" in err


class TestValidate:
    def test_degenerate_pair(self, capsys, fixtures):
        code, text, _ = run(capsys, "validate", fixtures / "degenerate_2d.json", fixtures / "integrator.json",
                            fixtures / "first_coordinate.json", "--seed", 5, "-N", 20000, "-T", 4,
                            "--boxes", fixtures / "degenerate_boxes.json")
        assert code == 0, text
        assert text.count("box t=") == 3

    def test_one_step_pair_fails(self, capsys, fixtures):
        code, text, _ = run(capsys, "validate", fixtures / "coupled.json", fixtures / "decoupled.json",
                            fixtures / "second_coordinate.json", "--seed", 5, "-N", 20000, "-T", 2,
                            "--boxes", fixtures / "one_step_boxes.json")
        assert code == 1 and "box t=2 (i): FAIL" in text and "box t=1 (i): pass" in text

    def test_unrelated_initial_states(self, capsys, fixtures):
        code, _, err = run(capsys, "validate", fixtures / "degenerate_2d.json", fixtures / "integrator.json",
                           fixtures / "first_coordinate.json", "--seed", 5, "--x0-1", "1,0", "--x0-2", "0")
        assert code == 2 and "not related" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "stochequiv", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("stochequiv ")
