import numpy as np
import pytest

from umps.cli import main, parse_mask
from umps.data import load_dataset_text, load_model
from umps.train import nll


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture
def trained(tmp_path):
    model = tmp_path / "model.umps"
    trace = tmp_path / "trace.csv"
    code = run(
        ["train", "--data", "bas:2", "--r-max", 4, "--theta", 0.05, "--l-max", 4,
         "--seed", 0, "--model-out", model, "--trace-out", trace]
    )
    assert code == 0
    return model, trace


class TestParseMask:
    def test_right_half_28x28(self):
        assert parse_mask("393-784", 784) == list(range(392, 784))

    def test_mixed_ranges(self):
        assert parse_mask("1,5,9-11", 16) == [0, 4, 8, 9, 10]

    def test_empty(self):
        assert parse_mask("", 16) == []

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            parse_mask("0-3", 16)
        with pytest.raises(ValueError):
            parse_mask("10-20", 16)


class TestTrain:
    def test_outputs_exist_with_headers(self, trained, capsys):
        model, trace = trained
        assert model.exists()
        lines = trace.read_text().splitlines()
        assert lines[0].startswith("# umps ")
        assert any(line.startswith("loop,site,dir,nll") for line in lines)

    def test_final_nll_reported(self, tmp_path, capsys):
        model = tmp_path / "m.umps"
        trace = tmp_path / "t.csv"
        run(["train", "--data", "bas:2", "--r-max", 4, "--theta", 0.05, "--l-max", 4,
             "--seed", 0, "--model-out", model, "--trace-out", trace])
        out = capsys.readouterr().out
        assert "final nll:" in out and "r_mean:" in out and "r_max:" in out

    def test_deterministic_model_bytes(self, tmp_path):
        paths = []
        for name in ("a.umps", "b.umps"):
            model = tmp_path / name
            run(["train", "--data", "bas:2", "--r-max", 4, "--theta", 0.05, "--l-max", 3,
                 "--seed", 3, "--model-out", model, "--trace-out", tmp_path / f"{name}.csv"])
            paths.append(model)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_zero_loops_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run(["train", "--data", "bas:2", "--l-max", 0,
                 "--model-out", tmp_path / "m", "--trace-out", tmp_path / "t"])
        assert exc.value.code == 2

    def test_baseline_trainer_selectable(self, tmp_path):
        code = run(["train", "--data", "bas:2", "--trainer", "baseline", "--l-max", 2,
                    "--model-out", tmp_path / "m.umps", "--trace-out", tmp_path / "t.csv"])
        assert code == 0

    def test_bas4_protocol_reaches_entropy_bound(self, tmp_path):
        model = tmp_path / "bas4.umps"
        trace = tmp_path / "trace.csv"
        code = run(["train", "--data", "bas:4", "--r-max", 16, "--theta", 0.03,
                    "--l-max", 20, "--seed", 3, "--model-out", model, "--trace-out", trace])
        assert code == 0
        assert model.exists()
        rows = [l for l in trace.read_text().splitlines() if l and not l.startswith(("#", "loop,"))]
        assert float(rows[-1].split(",")[3]) <= np.log(30) + 0.1

    def test_bad_dataset_spec_exits_1(self, tmp_path, capsys):
        code = run(["train", "--data", "nope", "--model-out", tmp_path / "m",
                    "--trace-out", tmp_path / "t"])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestSample:
    def test_count_and_length(self, trained, tmp_path):
        model, _ = trained
        out = tmp_path / "samples.txt"
        assert run(["sample", "--model", model, "--count", 5, "--seed", 1, "--out", out]) == 0
        lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert len(lines) == 5
        assert all(len(l) == 4 and set(l) <= {"0", "1"} for l in lines)

    def test_seed_reproducible(self, trained, tmp_path):
        model, _ = trained
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        run(["sample", "--model", model, "--count", 8, "--seed", 9, "--out", a])
        run(["sample", "--model", model, "--count", 8, "--seed", 9, "--out", b])
        strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("#")]
        assert strip(a) == strip(b)

    def test_pgm_grid(self, trained, tmp_path):
        model, _ = trained
        pgm = tmp_path / "grid.pgm"
        code = run(["sample", "--model", model, "--count", 4, "--seed", 0,
                    "--out", tmp_path / "s.txt", "--pgm-out", pgm,
                    "--width", 2, "--height", 2])
        assert code == 0
        assert pgm.read_bytes().startswith(b"P5\n")

    def test_missing_model_exits_1(self, tmp_path, capsys):
        code = run(["sample", "--model", tmp_path / "absent.umps", "--out", tmp_path / "s.txt"])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestReconstruct:
    def test_full_mask_is_identity(self, trained, tmp_path):
        model, _ = trained
        src = tmp_path / "in.txt"
        src.write_text("0101\n1111\n0000\n")
        out = tmp_path / "out.txt"
        code = run(["reconstruct", "--model", model, "--data", f"file:{src}",
                    "--mask", "1-4", "--seed", 0, "--out", out])
        assert code == 0
        assert load_dataset_text(out).strings() == ["0101", "1111", "0000"]

    def test_partial_mask_preserves_given_sites(self, trained, tmp_path):
        model, _ = trained
        src = tmp_path / "in.txt"
        src.write_text("0110\n1001\n")
        out = tmp_path / "out.txt"
        run(["reconstruct", "--model", model, "--data", f"file:{src}",
             "--mask", "2-3", "--seed", 5, "--out", out])
        rows = load_dataset_text(out).strings()
        assert [r[1:3] for r in rows] == ["11", "00"]

    def test_empty_mask_matches_sampling(self, trained, tmp_path):
        model, _ = trained
        src = tmp_path / "in.txt"
        src.write_text("0000\n")
        rec_out = tmp_path / "rec.txt"
        run(["reconstruct", "--model", model, "--data", f"file:{src}", "--seed", 3,
             "--out", rec_out])
        smp_out = tmp_path / "smp.txt"
        run(["sample", "--model", model, "--count", 1, "--seed", 3, "--out", smp_out])
        strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("#")]
        assert strip(rec_out) == strip(smp_out)

    def test_mask_out_of_range_exits_1(self, trained, tmp_path, capsys):
        model, _ = trained
        src = tmp_path / "in.txt"
        src.write_text("0101\n")
        code = run(["reconstruct", "--model", model, "--data", f"file:{src}",
                    "--mask", "1-9", "--out", tmp_path / "o.txt"])
        assert code == 1


class TestEval:
    def test_matches_trace_nll(self, trained, tmp_path, capsys):
        model, trace = trained
        code = run(["eval", "--model", model, "--data", "bas:2"])
        assert code == 0
        out = capsys.readouterr().out
        reported = float(next(l for l in out.splitlines() if l.startswith("nll:")).split()[1])
        final = [l for l in trace.read_text().splitlines() if l and not l.startswith(("#", "loop,"))][-1]
        assert reported == pytest.approx(float(final.split(",")[3]), abs=1e-9)
        z = float(next(l for l in out.splitlines() if l.startswith("z:")).split()[1])
        assert abs(z - 1.0) <= 1e-6
        assert "bond_dims:" in out

    def test_direct_nll_agreement(self, trained):
        model_path, _ = trained
        from umps.data import bas_generate

        model = load_model(model_path)
        assert nll(model, bas_generate(2)) > 0

    def test_sweep_rows(self, trained, tmp_path):
        model, _ = trained
        sweep = tmp_path / "sweep.csv"
        code = run(["eval", "--model", model, "--data", "bas:2", "--sweep", "2,4,6",
                    "--sweep-out", sweep])
        assert code == 0
        rows = [l for l in sweep.read_text().splitlines() if l and not l.startswith("#")]
        assert rows[0] == "size,nll"
        assert len(rows) == 4


class TestOutDirEnv:
    def test_default_paths_under_env_dir(self, trained, tmp_path, monkeypatch):
        model, _ = trained
        outdir = tmp_path / "outputs"
        outdir.mkdir()
        monkeypatch.setenv("UMPS_OUT_DIR", str(outdir))
        assert run(["sample", "--model", model, "--count", 2, "--seed", 0]) == 0
        assert (outdir / "samples.txt").exists()
