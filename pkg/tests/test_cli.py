import json

import numpy as np
import pytest

from numeral211.cli import main


def test_emd_command(capsys):
    assert main(["emd", "--p", "0.5,0.5,0", "--q", "0,0.5,0.5"]) == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(1.0)


def test_emd_command_custom_matrix(tmp_path, capsys):
    from numeral211.emd import save_ground_matrix

    path = tmp_path / "d.txt"
    save_ground_matrix(np.array([[0.0, 3.0], [3.0, 0.0]]), path)
    assert main(["emd", "--p", "1,0", "--q", "0,1", "--matrix", str(path)]) == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(3.0)


def test_game_commands(capsys):
    assert main(["game", "--tree"]) == 0
    out = capsys.readouterr().out
    assert "910 decision nodes, 1457 terminal lines" in out
    assert main(["game", "--deal", "AsTs/2h2d/9s4c"]) == 0
    assert "p1 wins" in capsys.readouterr().out


def test_table3_command(tmp_path, capsys):
    out_csv = tmp_path / "t3.csv"
    assert main(["table3", "--out", str(out_csv)]) == 0
    printed = capsys.readouterr().out
    assert "62020" in printed and "51070" in printed and "99.69" in printed
    assert out_csv.exists()


def test_index_and_features_commands(tmp_path, capsys):
    assert main(["index", "--out", str(tmp_path), "--csv"]) == 0
    out = capsys.readouterr().out
    assert "phase 3: 62020 classes" in out
    assert (tmp_path / "signal_index_phase2.sigx").exists()
    assert (tmp_path / "signal_index_phase1.csv").exists()
    assert main(["features", "--phase", "2", "--recall", "1",
                 "--out", str(tmp_path), "--csv"]) == 0
    out = capsys.readouterr().out
    assert "winrate classes 2248, outcome classes 2260" in out
    assert (tmp_path / "krwf_phase2_k1.krwf").exists()


def test_abstract_solve_evaluate_pipeline(tmp_path, capsys):
    map_path = tmp_path / "tiny.n211map"
    assert main(["abstract", "--algo", "ehs", "--phase", "2", "--buckets", "12",
                 "--seed", "3", "--out", str(map_path)]) == 0
    assert map_path.exists()
    # a full-coverage map for the solver: merge with passthroughs via python API
    from numeral211.abstraction import AbstractionMap, merge_maps, passthrough_map
    from numeral211.features import get_features

    fs = get_features()
    full = merge_maps([
        passthrough_map("li", 1, fs),
        AbstractionMap.load(map_path),
        passthrough_map("pawi", 3, fs),
    ])
    full_path = tmp_path / "full.n211map"
    full.save(full_path)
    ck = tmp_path / "run.ck"
    assert main(["solve", "--abs1", str(full_path), "--abs2", str(full_path),
                 "--iters", "6000", "--seed", "1", "--batch", "1024",
                 "--checkpoint-every", "2500", "--out", str(ck)]) == 0
    out = capsys.readouterr().out
    assert "solved 6,000 iterations" in out
    assert (tmp_path / "run.ck.ck001").exists()
    assert (tmp_path / "run.ck.ck002").exists()


@pytest.mark.slow
def test_evaluate_command(tmp_path, capsys):
    from numeral211.abstraction import merge_maps, passthrough_map
    from numeral211.features import get_features
    from numeral211.cfr import Solver

    fs = get_features()
    full = merge_maps([passthrough_map("li", 1, fs), passthrough_map("pawi", 2, fs),
                       passthrough_map("paoi", 3, fs)])
    solver = Solver(full, full, seed=2, batch_size=4096)
    solver.run(50_000)
    ck = tmp_path / "a.ck"
    solver.save_checkpoint(ck)
    del solver
    csv_path = tmp_path / "curve.csv"
    assert main(["evaluate", "--strategy1", str(ck), "--strategy2", str(ck),
                 "--csv", str(csv_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["iteration"] == 50_000
    assert report["epsilon_mbg"] > 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "iteration,epsilon_mbg,strategy1,strategy2"
    assert lines[1].startswith("50000,")
