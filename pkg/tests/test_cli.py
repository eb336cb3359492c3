import csv
import json

import numpy as np
import pytest

from conftest import make_image_dataset, write_config
from egctex import cli


@pytest.fixture
def workspace(tmp_path):
    root = make_image_dataset(tmp_path / "data", n_c=10, n_s=10, size=20)
    return tmp_path, root


def dataset_config(tmp_path, root, classifier, name="cfg", **extra):
    cfg = {"dataset": {"root": str(root), "name": "TW"}, "preprocessing": ["grayscale"],
           "descriptor": {"name": "LBP"}, "classifier": classifier, "folds": {"k": 4}, **extra}
    return str(write_config(tmp_path / f"{name}.json", cfg))


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def write_external(path, registry_csv, shift):
    """An outside model's output: an existing member's rows, nudged towards S."""
    rows = read_rows(registry_csv)
    with open(path, "w") as fh:
        fh.write("sample_id,fold,p_C,p_S\n")
        for r in rows:
            p_s = min(1.0, max(0.0, float(r["p_S"]) + shift))
            fh.write(f"{r['sample_id']},{r['fold']},{1 - p_s!r},{p_s!r}\n")


class TestExtract:
    def test_manifest_and_features(self, workspace, capsys):
        tmp, root = workspace
        out = tmp / "ws"
        assert run("extract", "--config", dataset_config(tmp, root, {"name": "gnb"}), "--out", out) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["counts"] == {"C": 10, "S": 10}
        assert manifest["published_counts"] == {"S": 192, "C": 224}
        assert manifest["n_features"] == 59
        first = (out / "features.csv").read_text().splitlines()[0]
        assert first == f"# fingerprint={manifest['config_fingerprint']} seed=42"
        assert "event=extracted" in capsys.readouterr().err

    def test_empty_class_folder_exits_2(self, workspace, capsys):
        tmp, root = workspace
        for f in (root / "TW" / "S").iterdir():
            f.unlink()
        assert run("extract", "--config", dataset_config(tmp, root, {"name": "gnb"}), "--out", tmp / "ws") == 2
        assert "empty class folder" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path):
        assert run("extract", "--out", tmp_path) == 2


class TestRun:
    def test_outputs(self, workspace, capsys):
        tmp, root = workspace
        out = tmp / "ws"
        assert run("run", "--config", dataset_config(tmp, root, {"name": "knn"}), "--out", out, "--id", "knn") == 0
        rd = out / "runs" / "knn"
        assert sorted(p.name for p in rd.iterdir()) == ["config.json", "fold_plan.csv", "metrics.json", "models",
                                                        "probabilities.csv"]
        assert sorted(p.name for p in (rd / "models").iterdir()) == [f"fold_{i:02d}.json" for i in range(4)]
        assert len(read_rows(rd / "probabilities.csv")) == 20
        index = json.loads((out / "registry" / "index.json").read_text())
        assert index["knn"]["kind"] == "H" and index["knn"]["source"] == "runs/knn"
        assert cli.verify_run(rd) == index["knn"]["config_fingerprint"]
        assert "knn: F-measure" in capsys.readouterr().out

    @pytest.mark.parametrize("classifier", [{"name": "rf", "params": {"trees": 8}},
                                            {"name": "svm", "params": {"C_grid": [1, 8], "gamma_grid": [1, 8]}}])
    def test_reruns_are_byte_identical_across_threads(self, workspace, classifier):
        tmp, root = workspace
        cfg = dataset_config(tmp, root, classifier)
        outputs = []
        for threads, ws in ((1, "a"), (1, "b"), (4, "c")):
            assert run("run", "--config", cfg, "--out", tmp / ws, "--id", "m", "--threads", threads) == 0
            rd = tmp / ws / "runs" / "m"
            outputs.append({p.relative_to(rd).as_posix(): p.read_bytes() for p in rd.rglob("*") if p.is_file()})
        assert outputs[0] == outputs[1] == outputs[2]

    def test_seed_flag_overrides_config(self, workspace):
        tmp, root = workspace
        cfg = dataset_config(tmp, root, {"name": "gnb"})
        assert run("run", "--config", cfg, "--out", tmp / "a", "--id", "g", "--seed", 7) == 0
        assert json.loads((tmp / "a" / "runs" / "g" / "config.json").read_text())["seed"] == 7

    def test_conflicting_fold_plan_exits_2(self, workspace, capsys):
        tmp, root = workspace
        cfg = dataset_config(tmp, root, {"name": "gnb"})
        assert run("run", "--config", cfg, "--out", tmp / "ws", "--id", "a") == 0
        assert run("run", "--config", cfg, "--out", tmp / "ws", "--id", "b", "--seed", 9) == 2
        assert "fold plan differs" in capsys.readouterr().err

    def test_computation_failure_exits_1(self, workspace, monkeypatch, capsys):
        tmp, root = workspace

        def boom(*args, **kwargs):
            raise FloatingPointError("overflow in kernel")

        monkeypatch.setattr(cli, "run_experiment", boom)
        assert run("run", "--config", dataset_config(tmp, root, {"name": "gnb"}), "--out", tmp / "ws") == 1
        assert "event=computation_failure" in capsys.readouterr().err


@pytest.fixture
def populated(workspace):
    """Workspace with three trained members (H) and three imported ones (N)."""
    tmp, root = workspace
    out = tmp / "ws"
    for cid, classifier in (("gnb", {"name": "gnb"}), ("knn", {"name": "knn"}),
                            ("rf", {"name": "rf", "params": {"trees": 6}})):
        assert run("run", "--config", dataset_config(tmp, root, classifier, cid), "--out", out, "--id", cid) == 0
    for i, shift in enumerate((0.05, -0.1, 0.2)):
        write_external(tmp / f"ext{i}.csv", out / "registry" / "knn.csv", shift)
        assert run("import-proba", "--csv", tmp / f"ext{i}.csv", "--id", f"cnn{i}", "--out", out) == 0
    return tmp, out


class TestImportAndFuse:
    def test_missing_fold_is_rejected_by_id(self, populated, capsys):
        tmp, out = populated
        rows = read_rows(out / "registry" / "gnb.csv")
        with open(tmp / "bad.csv", "w") as fh:
            fh.write("sample_id,fold,p_C,p_S\n")
            fh.writelines(f"{r['sample_id']},{r['fold']},{r['p_C']},{r['p_S']}\n" for r in rows if r["fold"] != "2")
        assert run("import-proba", "--csv", tmp / "bad.csv", "--id", "bad", "--out", out) == 2
        assert "fold 2 missing" in capsys.readouterr().err
        assert "bad" not in json.loads((out / "registry" / "index.json").read_text())

    def test_rows_summing_to_099_are_accepted_with_warning(self, populated, capsys):
        tmp, out = populated
        rows = read_rows(out / "registry" / "gnb.csv")
        with open(tmp / "soft.csv", "w") as fh:
            fh.write("sample_id,fold,p_C,p_S\n")
            fh.write(f"{rows[0]['sample_id']},{rows[0]['fold']},0.495,0.495\n")
            fh.writelines(f"{r['sample_id']},{r['fold']},{r['p_C']},{r['p_S']}\n" for r in rows[1:])
        capsys.readouterr()
        assert run("import-proba", "--csv", tmp / "soft.csv", "--id", "soft", "--out", out) == 0
        err = capsys.readouterr().err
        assert "event=renormalized" in err and "level=WARNING" in err

    def test_import_needs_a_plan(self, tmp_path):
        (tmp_path / "x.csv").write_text("sample_id,fold,p_C,p_S\na,0,0.5,0.5\n")
        assert run("import-proba", "--csv", tmp_path / "x.csv", "--id", "x", "--out", tmp_path / "empty") == 2

    def test_six_member_sweep(self, populated, capsys):
        _, out = populated
        capsys.readouterr()
        assert run("fuse", "--out", out, "--top", 5, "--threads", 3) == 0
        rows = read_rows(out / "fusion" / "sweep.csv")
        assert len(rows) == 171
        scores = [float(r["f_measure"]) for r in rows]
        assert scores == sorted(scores, reverse=True)
        header = (out / "fusion" / "sweep.csv").read_text().splitlines()[0]
        assert "cnn0:N:imported" in header and "gnb:H:" in header
        assert len(capsys.readouterr().out.strip().splitlines()) == 6

    def test_single_member_exits_2(self, populated, capsys):
        _, out = populated
        assert run("fuse", "--out", out, "--members", "gnb") == 2
        assert "at least 2 members" in capsys.readouterr().err

    def test_tampered_run_exits_2(self, populated, capsys):
        _, out = populated
        cfg_path = out / "runs" / "rf" / "config.json"
        cfg = json.loads(cfg_path.read_text())
        cfg["classifier"]["params"]["trees"] = 7
        cfg_path.write_text(json.dumps(cfg))
        assert run("fuse", "--out", out, "--members", "gnb,rf") == 2
        assert "fingerprint" in capsys.readouterr().err


class TestStats:
    TABLE = ("row,group,LBP,RLBP,LPQ\n"
             "AIA,AIA,0.7895,0.8062,0.7535\n"
             "TW,TW,0.9470,0.9500,0.9400\n"
             "D,D,0.8800,0.8700,0.8900\n")

    def test_ranks_and_wilcoxon(self, tmp_path, capsys):
        (tmp_path / "t.csv").write_text(self.TABLE)
        assert run("stats", "--table", tmp_path / "t.csv", "--wilcoxon", "RLBP,LPQ", "--out", tmp_path) == 0
        out = capsys.readouterr().out
        assert "AIA: LBP=2, RLBP=1, LPQ=3" in out
        report = json.loads((tmp_path / "stats.json").read_text())
        assert report["ranks"]["rows"]["AIA"] == {"LBP": 2.0, "RLBP": 1.0, "LPQ": 3.0}
        assert report["wilcoxon"]["method"] == "exact" and report["wilcoxon"]["n_effective"] == 3

    def test_uncorrected_normal_option(self, tmp_path, capsys):
        (tmp_path / "t.csv").write_text("row,F,U\n" + "".join(f"r{i},{i + 1},0\n" for i in range(5)))
        assert run("stats", "--table", tmp_path / "t.csv", "--wilcoxon", "F,U", "--method", "normal",
                   "--no-continuity", "--out", tmp_path) == 0
        assert "p=0.0215572" in capsys.readouterr().out  # 0.0216 at four decimals

    def test_malformed_table_exits_2(self, tmp_path):
        (tmp_path / "t.csv").write_text("row,a,b\nr1,0.5\n")
        assert run("stats", "--table", tmp_path / "t.csv", "--out", tmp_path) == 2
        assert run("stats", "--out", tmp_path) == 2
