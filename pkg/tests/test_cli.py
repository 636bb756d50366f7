import json

import numpy as np
import pytest

from ggmclust.cli import main


def _bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.fixture
def bundle(tmp_path):
    out = tmp_path / "ds"
    assert main(["synth", "--clusters", "3,3", "--n", "200", "--seed", "4", "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_outputs(self, bundle):
        assert sorted(p.name for p in bundle.iterdir()) == ["spec.json", "stats.json", "truth.json"]
        stats = json.loads((bundle / "stats.json").read_text())
        assert stats["n"] == 200 and stats["p"] == 6
        assert json.loads((bundle / "truth.json").read_text())["labels"] == [0, 0, 0, 1, 1, 1]

    def test_write_data(self, tmp_path):
        out = tmp_path / "d"
        assert main(["synth", "--clusters", "2,2", "--n", "20", "--write-data", "--out", str(out)]) == 0
        rows = (out / "data.csv").read_text().splitlines()
        assert len(rows) == 20 and len(rows[0].split(",")) == 4

    def test_p_mismatch_is_usage_error(self, tmp_path):
        assert main(["synth", "--p", "7", "--clusters", "3,3", "--n", "10", "--out", str(tmp_path / "x")]) == 1


class TestExitCodes:
    def test_usage(self, capsys):
        assert main(["synth", "--n", "10"]) == 1
        assert main(["nonsense"]) == 1
        assert main(["synth", "--clusters", "a,b", "--n", "10", "--out", "x"]) == 1

    def test_missing_file(self, tmp_path):
        assert main(["candidates", "--stats", str(tmp_path / "none.json")]) == 2

    def test_empty_csv(self, tmp_path):
        f = tmp_path / "empty.csv"
        f.write_text("")
        assert main(["ingest", "--csv", str(f)]) == 2

    def test_invalid_covariance_is_data_error(self, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text(json.dumps({"n": 10, "p": 2, "S": [[1.0, 2.0], [2.0, 1.0]]}))
        c = tmp_path / "c.json"
        c.write_text(json.dumps({"candidates": [{"labels": [0, 1]}]}))
        assert main(["score", "--stats", str(f), "--candidates", str(c), "--criterion", "basic-iw"]) == 2

    def test_numerical(self, bundle, tmp_path, monkeypatch):
        import ggmclust.cli as cli
        from ggmclust.core import NotPositiveDefiniteError

        def fail(*args, **kwargs):
            raise NotPositiveDefiniteError("iterate lost definiteness")

        monkeypatch.setattr(cli, "score_record", fail)
        c = tmp_path / "c.json"
        c.write_text(json.dumps({"candidates": [{"labels": [0, 0, 0, 1, 1, 1]}]}))
        assert main(["score", "--stats", str(bundle / "stats.json"), "--candidates", str(c)]) == 3

    def test_help(self, capsys):
        assert main(["--help"]) == 0


class TestIngest:
    def test_standardizes(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((50, 3)) * [1.0, 5.0, 0.1] + 3.0
        f = tmp_path / "x.csv"
        f.write_text("a,b,c\n" + "\n".join(",".join(repr(float(v)) for v in row) for row in X) + "\n")
        out = tmp_path / "s.json"
        assert main(["ingest", "--csv", str(f), "--header", "--out", str(out)]) == 0
        S = np.array(json.loads(out.read_text())["S"])
        np.testing.assert_allclose(np.diag(S), 1.0, rtol=1e-10)


class TestPipeline:
    def test_select_recovers_truth(self, bundle, tmp_path):
        cands = tmp_path / "c.json"
        assert main(["candidates", "--stats", str(bundle / "stats.json"), "--method", "average", "--truth", str(bundle / "truth.json"), "--out", str(cands)]) == 0
        assert json.loads(cands.read_text())["oracle_anmi"] == 1.0
        sel = tmp_path / "sel.json"
        assert main(["select", "--stats", str(bundle / "stats.json"), "--candidates", str(cands), "--truth", str(bundle / "truth.json"), "--out", str(sel)]) == 0
        obj = json.loads(sel.read_text())
        assert obj["anmi"] == 1.0
        assert obj["criterion"] == "proposed-vi:0.02"

    def test_score_records(self, bundle, tmp_path):
        cands = tmp_path / "c.json"
        main(["candidates", "--stats", str(bundle / "stats.json"), "--method", "single", "--out", str(cands)])
        out = tmp_path / "s.json"
        assert main(["score", "--stats", str(bundle / "stats.json"), "--candidates", str(cands), "--criterion", "ebic:0.5", "--out", str(out)]) == 0
        obj = json.loads(out.read_text())
        assert obj["criterion"] == "ebic:0.5"
        assert len(obj["records"]) == 5


class TestDeterminism:
    def test_every_command_is_byte_identical(self, tmp_path):
        def run(root):
            root.mkdir()
            ds = root / "ds"
            assert main(["synth", "--clusters", "3,3", "--n", "150", "--seed", "2", "--eta", "0.05", "--write-data", "--out", str(ds)]) == 0
            assert main(["ingest", "--csv", str(ds / "data.csv"), "--out", str(root / "ingest.json")]) == 0
            st = str(ds / "stats.json")
            assert main(["candidates", "--stats", st, "--k-max", "4", "--seed", "3", "--out", str(root / "spec.json")]) == 0
            assert main(["candidates", "--stats", st, "--method", "average", "--out", str(root / "avg.json")]) == 0
            c = str(root / "avg.json")
            assert main(["score", "--stats", st, "--candidates", c, "--out", str(root / "score.json")]) == 0
            assert main(["select", "--stats", st, "--candidates", c, "--criterion", "proposed-mcmc", "--samples", "100", "--kappa", "1", "--seed", "5", "--out", str(root / "mcmc.json")]) == 0
            assert main(["select", "--stats", st, "--candidates", c, "--criterion", "chi", "--out", str(root / "chi.json")]) == 0
            cfg = root / "cfg.json"
            cfg.write_text(json.dumps({"regimes": [{"cluster_sizes": [2, 2], "n": [60]}], "repetitions": 2, "candidate_method": "average", "criteria": ["proposed-vi:0.02", "aic"]}))
            assert main(["experiment", "--config", str(cfg), "--out", str(root / "exp")]) == 0
            files = {f"ds/{k}": v for k, v in _bytes(ds).items()}
            files.update({f"exp/{k}": v for k, v in _bytes(root / "exp").items()})
            files.update({p.name: p.read_bytes() for p in root.glob("*.json")})
            return files

        a, b = run(tmp_path / "a"), run(tmp_path / "b")
        assert a.keys() == b.keys()
        for name in a:
            if name == "exp/manifest.json":
                continue
            assert a[name] == b[name], name
        # the manifest embeds the config, which names no paths
        assert a["exp/manifest.json"] == b["exp/manifest.json"]
