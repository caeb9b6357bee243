import json

import pytest

import scdl.cli as cli
from scdl.cli import main
from scdl.corpus import inject_noise, parse_conll, write_conll
from scdl.training import ABLATIONS, TrainingDiverged
from synthdata import default_vocab, make_synthetic_corpus

FAST_CONFIG = """\
batch_size=16
gamma=2.0
pretrain_epochs=1
max_epochs=1
update_cycle=5
hash_buckets=512
net1_embed_dim=8
net1_hidden_dim=10
net2_embed_dim=6
net2_window=2
net2_hidden_dim=8
"""


@pytest.fixture
def workspace(tmp_path):
    vocab = default_vocab()
    train_c = make_synthetic_corpus(48, vocab, seed=0)
    dev_c = make_synthetic_corpus(16, vocab, seed=1)
    noisy, _ = inject_noise(train_c, 40, vocab, seed=0)
    paths = {
        "gold": tmp_path / "gold.conll",
        "train": tmp_path / "train.conll",
        "dev": tmp_path / "dev.conll",
        "config": tmp_path / "config.txt",
        "dir": tmp_path,
    }
    paths["gold"].write_text(write_conll(train_c, vocab, "gold"))
    paths["train"].write_text(write_conll(noisy, vocab, "noisy_i"))
    paths["dev"].write_text(write_conll(dev_c, vocab, "gold"))
    paths["config"].write_text(FAST_CONFIG)
    return paths


class TestInject:
    def test_outputs_and_determinism(self, workspace, capsys):
        out = workspace["dir"] / "noisy.conll"
        argv = [
            "inject", "--corpus", str(workspace["gold"]), "--k", "40",
            "--seed", "3", "--out", str(out),
        ]
        assert main(argv) == 0
        first = out.read_bytes()
        log = (workspace["dir"] / "noisy.conll.alterations.tsv").read_text()
        assert log.count("\n") == len(log.splitlines())
        assert "altered" in capsys.readouterr().out
        assert main(argv) == 0
        assert out.read_bytes() == first

    def test_parses_back(self, workspace):
        out = workspace["dir"] / "noisy.conll"
        main(["inject", "--corpus", str(workspace["gold"]), "--k", "40", "--out", str(out)])
        parse_conll(out.read_text(), default_vocab())

    def test_bad_k(self, workspace, capsys):
        rc = main([
            "inject", "--corpus", str(workspace["gold"]), "--k", "150",
            "--out", str(workspace["dir"] / "x.conll"),
        ])
        assert rc == 1
        assert "error" in capsys.readouterr().err


class TestAnnotate:
    def test_run_and_summary(self, workspace, capsys):
        gaz = workspace["dir"] / "gaz.tsv"
        gaz.write_text("per0\tPER\nper1\tPER,LOC\nloc0\tLOC\n")
        out = workspace["dir"] / "distant.conll"
        rc = main([
            "annotate", "--corpus", str(workspace["gold"]), "--gazetteer", str(gaz),
            "--coverage", "0.8", "--seed", "1", "--out", str(out),
        ])
        assert rc == 0
        summary = json.loads((workspace["dir"] / "distant.conll.summary.json").read_text())
        assert summary["gold_spans"] == (
            summary["correct"] + summary["incomplete"] + summary["inaccurate"] + summary["other"]
        )
        assert summary["incomplete"] > 0  # the tiny gazetteer misses most mentions
        parse_conll(out.read_text(), default_vocab())


class TestPretrainCmd:
    def test_run_dir(self, workspace):
        out_dir = workspace["dir"] / "pre"
        rc = main([
            "pretrain", "--config", str(workspace["config"]),
            "--train", str(workspace["train"]), "--dev", str(workspace["dev"]),
            "--out-dir", str(out_dir),
        ])
        assert rc == 0
        assert (out_dir / "net1.ckpt").exists()
        assert (out_dir / "net2.ckpt").exists()
        assert (out_dir / "config.txt").exists()
        assert len((out_dir / "metrics.jsonl").read_text().splitlines()) == 2


class TestTrainCmd:
    def test_run_dir_contents(self, workspace):
        out_dir = workspace["dir"] / "run"
        rc = main([
            "train", "--config", str(workspace["config"]),
            "--train", str(workspace["train"]), "--dev", str(workspace["dev"]),
            "--out-dir", str(out_dir),
        ])
        assert rc == 0
        for name in ("config.txt", "metrics.jsonl", "curve.csv", "refinery.csv",
                     "best.ckpt", "best.json"):
            assert (out_dir / name).exists(), name
        best = json.loads((out_dir / "best.json").read_text())
        assert best["model"] in ("teacher1", "student1", "teacher2", "student2")
        assert set(best["track_checksums"]) == {
            "noisy_i_initial", "noisy_ii_initial", "noisy_i_final", "noisy_ii_final"
        }
        curve = (out_dir / "curve.csv").read_text().splitlines()
        assert curve[0] == "step,model,split,precision,recall,f1"
        assert len(curve) == 1 + 4 * 2  # four models at step 0 and epoch 1
        ckpts = list((out_dir / "checkpoints").iterdir())
        assert len(ckpts) == 4 * 2

    def test_rerun_byte_identical(self, workspace):
        args = [
            "train", "--config", str(workspace["config"]),
            "--train", str(workspace["train"]), "--dev", str(workspace["dev"]),
        ]
        a, b = workspace["dir"] / "run_a", workspace["dir"] / "run_b"
        assert main(args + ["--out-dir", str(a)]) == 0
        assert main(args + ["--out-dir", str(b)]) == 0
        for name in ("metrics.jsonl", "curve.csv", "refinery.csv", "best.ckpt", "best.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_seed_override_changes_config(self, workspace):
        out_dir = workspace["dir"] / "run_seed"
        main([
            "train", "--config", str(workspace["config"]), "--seed", "7",
            "--train", str(workspace["train"]), "--dev", str(workspace["dev"]),
            "--out-dir", str(out_dir),
        ])
        assert "seed=7" in (out_dir / "config.txt").read_text().splitlines()

    def test_ablate_flag_labels_metrics(self, workspace):
        out_dir = workspace["dir"] / "run_abl"
        main([
            "train", "--config", str(workspace["config"]), "--ablate", "hard_labels",
            "--train", str(workspace["train"]), "--dev", str(workspace["dev"]),
            "--out-dir", str(out_dir),
        ])
        records = [json.loads(l) for l in (out_dir / "metrics.jsonl").read_text().splitlines()]
        assert all(r["ablation"] == "hard_labels" for r in records)

    def test_missing_file_exit_code(self, workspace, capsys):
        rc = main([
            "train", "--train", str(workspace["dir"] / "nope.conll"),
            "--dev", str(workspace["dev"]), "--out-dir", str(workspace["dir"] / "x"),
        ])
        assert rc == 1

    def test_divergence_exit_code(self, workspace, capsys, monkeypatch):
        def boom(*args, **kwargs):
            raise TrainingDiverged("synthetic failure")

        monkeypatch.setattr(cli, "train", boom)
        rc = main([
            "train", "--config", str(workspace["config"]),
            "--train", str(workspace["train"]), "--dev", str(workspace["dev"]),
            "--out-dir", str(workspace["dir"] / "d"),
        ])
        assert rc == 2
        assert "diverged" in capsys.readouterr().err


class TestEvalCmd:
    def test_eval_checkpoint(self, workspace, capsys):
        out_dir = workspace["dir"] / "run"
        main([
            "train", "--config", str(workspace["config"]),
            "--train", str(workspace["train"]), "--dev", str(workspace["dev"]),
            "--out-dir", str(out_dir),
        ])
        rc = main(["eval", "--checkpoint", str(out_dir / "best.ckpt"),
                   "--corpus", str(workspace["dev"])])
        assert rc == 0
        assert "f1" in capsys.readouterr().out

    def test_vocab_mismatch(self, workspace, capsys):
        out_dir = workspace["dir"] / "run"
        main([
            "train", "--config", str(workspace["config"]),
            "--train", str(workspace["train"]), "--dev", str(workspace["dev"]),
            "--out-dir", str(out_dir),
        ])
        two_types = workspace["dir"] / "small.conll"
        two_types.write_text("a\tB-PER\n\nb\tB-LOC\n")
        rc = main(["eval", "--checkpoint", str(out_dir / "best.ckpt"),
                   "--corpus", str(two_types)])
        assert rc == 1


class TestAblateCmd:
    def test_all_variants_run(self, workspace):
        out_dir = workspace["dir"] / "ablations"
        rc = main([
            "ablate", "--config", str(workspace["config"]),
            "--train", str(workspace["train"]), "--dev", str(workspace["dev"]),
            "--out-dir", str(out_dir),
        ])
        assert rc == 0
        for ablation in ABLATIONS:
            records = [
                json.loads(l)
                for l in (out_dir / ablation / "metrics.jsonl").read_text().splitlines()
            ]
            assert records and all(r["ablation"] == ablation for r in records)
        single = json.loads((out_dir / "single_network" / "best.json").read_text())
        sums = single["track_checksums"]
        assert sums["noisy_i_final"] == sums["noisy_i_initial"]
        assert sums["noisy_ii_final"] == sums["noisy_ii_initial"]


class TestSweepCmd:
    def test_row_counts_and_format(self, workspace):
        out = workspace["dir"] / "sweep.csv"
        rc = main([
            "sweep", "--config", str(workspace["config"]),
            "--corpus", str(workspace["gold"]), "--ks", "20,60",
            "--seeds", "0,1", "--out", str(out),
        ])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "k,seed,method,dev_f1,initial_refinery_f1,final_refinery_f1"
        assert len(lines) == 1 + 2 * 2 * 2
        methods = {line.split(",")[2] for line in lines[1:]}
        assert methods == {"scdl", "pretrain_only"}

    def test_empty_k_list(self, workspace):
        rc = main([
            "sweep", "--corpus", str(workspace["gold"]), "--ks", ",",
            "--seeds", "0", "--out", str(workspace["dir"] / "s.csv"),
        ])
        assert rc == 1
