from divrank.cli import main
from divrank.tree import DocTree


def test_simulate_writes_csv(tmp_path, capsys):
    out = tmp_path / "runs.csv"
    rc = main(["simulate", "--scenario", "discussion3", "--slots", "2",
               "--rounds", "500", "--algos", "random", "--seeds", "1",
               "--cadence", "100", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("run_id,algorithm,seed,round")
    assert len(lines) == 6
    assert "wrote 5 rows" in capsys.readouterr().out


def test_simulate_rejects_bad_config(capsys):
    rc = main(["simulate", "--scenario", "discussion3", "--rounds", "0",
               "--out", "/tmp/never.csv"])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_simulate_requires_out(capsys):
    rc = main(["simulate", "--scenario", "discussion3", "--rounds", "10"])
    assert rc == 2
    assert "--out" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path, capsys):
    cfgfile = tmp_path / "exp.cfg"
    cfgfile.write_text("scenario = discussion3\nslots = 2\nrounds = 400\n"
                       "algos = random\nseeds = 1\ncadence = 200\n")
    out = tmp_path / "runs.csv"
    rc = main(["simulate", "--config", str(cfgfile), "--rounds", "200",
               "--out", str(out)])
    assert rc == 0
    rows = out.read_text().splitlines()[1:]
    assert rows[-1].split(",")[3] == "200"  # flag beat the file's 400


def test_oracle_prints_values(capsys):
    rc = main(["oracle", "--scenario", "discussion3", "--k", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "optimal slate" in out and "0.75" in out


def test_dump_tree_roundtrips(tmp_path):
    out = tmp_path / "tree.txt"
    rc = main(["dump-tree", "--scenario", "two-peak", "--docs-log2", "3",
               "--tree-out", str(out)])
    assert rc == 0
    tree = DocTree.from_text(out.read_text())
    assert tree.n_leaves == 8
    assert tree.epsilon == 0.837


def test_verify_properties_smoke(capsys):
    rc = main(["verify-properties", "--family", "smoke", "--instances", "3"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "scaled-discorrelation: ok" in out
    assert "mixture-continuity: ok" in out
