import json

import yaml

from gpudispatch.cli import cli_main
from gpudispatch.topology import parse_cluster_config


def run_cli(capsys, *argv):
    code = cli_main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_gen_cluster_a800x4(tmp_path, capsys):
    out = tmp_path / "cluster.yaml"
    code, _, _ = run_cli(
        capsys, "gen-cluster", "--hosts", "A800:4", "--uplink", "uniform:48.8",
        "--seed", "3", "--out", str(out),
    )
    assert code == 0
    topo = parse_cluster_config(out.read_text())
    assert topo.num_gpus == 32
    assert all(h.uplink_gbps == 48.8 for h in topo.hosts)


def test_dispatch_default_prints_first_ids(tmp_path, capsys):
    cluster = tmp_path / "c.yaml"
    run_cli(capsys, "gen-cluster", "--hosts", "A800:4", "--uplink", "uniform:48.8", "--out", str(cluster))
    code, out, _ = run_cli(
        capsys, "dispatch", "--cluster", str(cluster), "-k", "2", "--algo", "default"
    )
    assert code == 0
    assert out.splitlines()[0] == "0 1"


def test_dispatch_json_contract(tmp_path, capsys):
    cluster = tmp_path / "c.yaml"
    run_cli(capsys, "gen-cluster", "--hosts", "A6000:2", "--uplink", "random:20-40", "--out", str(cluster))
    code, out, _ = run_cli(
        capsys, "dispatch", "--cluster", str(cluster), "-k", "3", "--algo", "upper", "--json"
    )
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"chosen", "predicted_bw", "true_bw", "bw_calls", "elapsed_us"}
    assert len(doc["chosen"]) == 3
    assert doc["true_bw"] > 0


def test_dispatch_never_prints_unavailable(tmp_path, capsys):
    cluster = tmp_path / "c.yaml"
    run_cli(
        capsys, "gen-cluster", "--hosts", "V100:2", "--uplink", "uniform:20",
        "--seed", "4", "--unavailable-frac", "0.4", "--out", str(cluster),
    )
    topo = parse_cluster_config(cluster.read_text())
    for algo in ("default", "random", "topo", "upper"):
        code, out, _ = run_cli(
            capsys, "dispatch", "--cluster", str(cluster), "-k", "3", "--algo", algo
        )
        assert code == 0
        chosen = {int(t) for t in out.splitlines()[0].split()}
        assert chosen <= topo.available


def test_oracle_brute_matches_pruned(tmp_path, capsys):
    cluster = tmp_path / "c.yaml"
    run_cli(
        capsys, "gen-cluster", "--hosts", "4090:1,A6000:1", "--uplink", "random:20-40",
        "--seed", "2", "--out", str(cluster),
    )
    code1, out1, _ = run_cli(capsys, "oracle", "--cluster", str(cluster), "-k", "3", "--brute")
    code2, out2, _ = run_cli(capsys, "oracle", "--cluster", str(cluster), "-k", "3")
    assert code1 == code2 == 0
    assert out1.splitlines()[0] == out2.splitlines()[0]
    assert out1.startswith("optimal_bw_gbps=")


def test_measure_train_dispatch_pipeline(tmp_path, capsys):
    cluster = tmp_path / "c.yaml"
    space = tmp_path / "space"
    run_cli(
        capsys, "gen-cluster", "--hosts", "A6000:1,A800:1", "--uplink", "uniform:25",
        "--seed", "1", "--out", str(cluster),
    )
    code, _, _ = run_cli(capsys, "measure", "--cluster", str(cluster), "--out", str(space))
    assert code == 0
    assert (space / "tables" / "host_0.csv").exists()

    code, out, _ = run_cli(
        capsys, "train", "--cluster", str(cluster), "--tables", str(space),
        "--samples", "150", "--out", str(space / "model.bin"),
        "--epochs", "20", "--patience", "20", "--seed", "1",
    )
    assert code == 0
    assert (space / "model.bin").exists()

    code, out, _ = run_cli(
        capsys, "dispatch", "--cluster", str(cluster), "-k", "4",
        "--algo", "litegd", "--dataspace", str(space), "--json",
    )
    assert code == 0
    doc = json.loads(out)
    assert len(doc["chosen"]) == 4


def test_measure_import_log(tmp_path, capsys):
    cluster = tmp_path / "c.yaml"
    run_cli(capsys, "gen-cluster", "--hosts", "A800:1", "--uplink", "uniform:25", "--out", str(cluster))
    log = tmp_path / "probe.log"
    log.write_text("0,1,111.25\n")
    space = tmp_path / "space"
    code, _, _ = run_cli(
        capsys, "measure", "--cluster", str(cluster), "--out", str(space), "--import", str(log)
    )
    assert code == 0
    table = (space / "tables" / "host_0.csv").read_text()
    assert "3,111.25" in table.splitlines()


def test_evaluate_writes_report(tmp_path, capsys):
    config = tmp_path / "exp.yaml"
    config.write_text(
        yaml.safe_dump(
            {
                "hosts": "A6000:2",
                "uplink": "uniform:20",
                "seeds": [0],
                "ks": [2, 4],
                "algorithms": ["default", "upper"],
                "unavailable_frac": 0.0,
            }
        )
    )
    out = tmp_path / "report.csv"
    code, stdout, _ = run_cli(capsys, "evaluate", "--config", str(config), "--out", str(out))
    assert code == 0
    assert out.exists()
    assert out.with_suffix(".csv.per_k.csv").exists()
    assert "upper: mean GBE" in stdout


def test_exit_codes(tmp_path, capsys):
    code, _, err = run_cli(capsys, "dispatch", "--cluster", "x.yaml")  # missing -k
    assert code == 1
    assert "error" in err

    bad = tmp_path / "bad.yaml"
    bad.write_text("hosts:\n- {id: 0, type: t, gpus: 2, links: ['X NV4', 'SYS X'], uplink_gbps: 5}\n")
    code, _, err = run_cli(capsys, "dispatch", "--cluster", str(bad), "-k", "2", "--algo", "default")
    assert code == 2
    assert "asymmetric" in err

    missing = tmp_path / "nope.yaml"
    code, _, err = run_cli(capsys, "dispatch", "--cluster", str(missing), "-k", "2", "--algo", "default")
    assert code == 3


def test_litegd_requires_dataspace(tmp_path, capsys):
    cluster = tmp_path / "c.yaml"
    run_cli(capsys, "gen-cluster", "--hosts", "A800:2", "--uplink", "uniform:25", "--out", str(cluster))
    code, _, err = run_cli(capsys, "dispatch", "--cluster", str(cluster), "-k", "2")
    assert code == 2
    assert "dataspace" in err
