import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from sparsediff import persist
from sparsediff.cli import run
from sparsediff.diffusion import NoiseSource, brownian, free_drift, kuramoto, simulate
from sparsediff.graph_models import Graph, path_graph
from sparsediff.network import MarkedNetwork
from sparsediff.seeding import derive_seed


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def cli(tmp_path, cmd, config, *extra, out="out"):
    cfg = write(tmp_path, f"{out}.toml", config)
    od = tmp_path / out
    code = run([cmd, "--config", cfg, "--out", str(od), *extra])
    return code, od


def read(p):
    return p.read_bytes()


def test_er_no_edges(tmp_path):
    code, od = cli(tmp_path, "sample-graph", '[graph]\nmodel = "erdos_renyi"\nn = 10\np = 0.0\n')
    assert code == 0
    doc = json.loads((od / "graph.json").read_text())
    assert doc["n"] == 10 and doc["edges"] == []


def test_sample_graph_is_byte_deterministic(tmp_path):
    conf = '[graph]\nmodel = "erdos_renyi"\nn = 200\nmean_degree = 2.0\n'
    _, a = cli(tmp_path, "sample-graph", conf, "--seed", "5", out="a")
    _, b = cli(tmp_path, "sample-graph", conf, "--seed", "5", out="b")
    assert read(a / "graph.json") == read(b / "graph.json")
    _, c = cli(tmp_path, "sample-graph", conf, "--seed", "6", out="c")
    assert read(a / "graph.json") != read(c / "graph.json")


def test_gw_manifest_records_survival_depth(tmp_path):
    conf = ('seed = 3\n[graph]\nmodel = "gw"\ndepth = 13\n'
            'offspring = {kind = "binomial", n = 3, p = 0.6666666666666666}\n')
    code, od = cli(tmp_path, "sample-graph", conf)
    assert code == 0
    man = json.loads((od / "manifest.json").read_text())
    doc = json.loads((od / "graph.json").read_text())
    depth = np.array(doc["depth"])
    assert man["survival_depth"] == depth.max()
    assert man["generation_sizes"] == np.bincount(depth, minlength=14).tolist()
    assert man["seed_source"] == "config" and man["master_seed"] == 3


def _lib_csv(net, drift, T, dt, seed):
    ens = simulate(net, drift, T, dt, NoiseSource(derive_seed(seed, "noise")))
    return persist.csv_text(*persist.trajectory_rows(ens)).encode()


def _net_file(tmp_path, net):
    return write(tmp_path, "net.json", json.dumps(net.to_json_dict()))


def test_simulate_free_drift_matches_library(tmp_path):
    net = MarkedNetwork.build(path_graph(4), 1.0, omega=[0.5, -1.0, 2.0, 0.0], theta0=[0.0, 1.0, 2.0, 3.0])
    path = _net_file(tmp_path, net)
    conf = f'[simulate]\nnetwork = "{path}"\nT = 1.0\ndt = 0.125\ndrift = "free"\nnoise_scale = 0.0\n'
    code, od = cli(tmp_path, "simulate", conf, "--seed", "1")
    assert code == 0
    out = read(od / "trajectory.csv")
    assert out == _lib_csv(net, free_drift(0.0), 1.0, 0.125, 1)
    _, body = persist.read_csv(od / "trajectory.csv")
    assert np.allclose(body[-1, 1:], [0.5, 0.0, 4.0, 3.0], atol=1e-14)


def test_simulate_two_vertex_kuramoto_matches_library(tmp_path):
    net = MarkedNetwork.build(path_graph(2), 1.0, omega=[0.0, 0.0], theta0=[0.0, 1.0])
    path = _net_file(tmp_path, net)
    conf = f'[simulate]\nnetwork = "{path}"\nT = 0.5\ndt = 1e-3\ndrift = "kuramoto"\nnoise_scale = 0.0\n'
    code, od = cli(tmp_path, "simulate", conf, "--seed", "2")
    assert code == 0 and read(od / "trajectory.csv") == _lib_csv(net, kuramoto(0.0), 0.5, 1e-3, 2)


def test_simulate_single_vertex_brownian_matches_library(tmp_path):
    net = MarkedNetwork.build(Graph.from_edges(1, []), theta0=[0.0], omega=[0.0])
    path = _net_file(tmp_path, net)
    conf = f'[simulate]\nnetwork = "{path}"\nT = 1.0\ndt = 0.01\ndrift = "brownian"\nnoise_scale = 1.0\n'
    code, od = cli(tmp_path, "simulate", conf, "--seed", "9")
    assert code == 0 and read(od / "trajectory.csv") == _lib_csv(net, brownian(1.0), 1.0, 0.01, 9)
    # the manifest is enough to rerun
    code = run(["simulate", "--config", str(od / "manifest.json"), "--out", str(tmp_path / "again")])
    assert code == 0 and read(tmp_path / "again" / "trajectory.csv") == read(od / "trajectory.csv")


def test_simulate_rejects_zero_horizon(tmp_path, capsys):
    conf = '[graph]\nmodel = "cycle"\nn = 5\n[simulate]\nT = 0.0\n'
    code, od = cli(tmp_path, "simulate", conf)
    assert code in (2, 3)
    assert not (od / "trajectory.csv").exists()


def test_missing_network_file_names_path(tmp_path, capsys):
    missing = str(tmp_path / "nowhere" / "net.json")
    code, _ = cli(tmp_path, "simulate", f'[simulate]\nnetwork = "{missing}"\nT = 1.0\n')
    assert code == 2
    assert missing in capsys.readouterr().err


def test_unknown_keys_are_rejected(tmp_path, capsys):
    code, _ = cli(tmp_path, "sample-graph", '[graph]\nmodel = "cycle"\nn = 5\ncolour = "red"\n')
    assert code == 2 and "colour" in capsys.readouterr().err
    code, _ = cli(tmp_path, "sample-graph", 'sede = 1\n[graph]\nmodel = "cycle"\nn = 5\n', out="b")
    assert code == 2
    code, _ = cli(tmp_path, "sample-graph", '[graph\nmodel = "cycle"\n', out="c")
    assert code == 2


def test_seed_from_environment_is_echoed(tmp_path, monkeypatch):
    monkeypatch.setenv("SPARSEDIFF_SEED", "77")
    code, od = cli(tmp_path, "sample-graph", 'seed = 1\n[graph]\nmodel = "erdos_renyi"\nn = 20\np = 0.2\n')
    man = json.loads((od / "manifest.json").read_text())
    assert code == 0 and man["master_seed"] == 77 and man["seed_env"] == "77" and man["seed_source"] == "env"
    code, od = cli(tmp_path, "sample-graph", '[graph]\nmodel = "cycle"\nn = 4\n', "--seed", "8", out="b")
    man = json.loads((od / "manifest.json").read_text())
    assert man["master_seed"] == 8 and man["seed_source"] == "cli"


PHASE = ('[phase-diagram]\nmodel = "binomial"\ngenerations = 3\nT = 2.0\n'
         'K_min = 0.0\nK_max = 1.0\nK_step = 1.0\nreplications = 1\n')


def test_tiny_phase_diagram(tmp_path):
    t0 = time.perf_counter()
    code, od = cli(tmp_path, "phase-diagram", PHASE, "--seed", "4")
    assert code == 0 and time.perf_counter() - t0 < 10
    header, body = persist.read_csv(od / "sync_binomial_zero_one.csv")
    assert header == ["h", "0", "1"] and body.shape == (3, 3)
    assert body[:, 0].tolist() == [1, 2, 3]
    ok = ~np.isnan(body[:, 1:])
    assert np.all((body[:, 1:][ok] >= 0) & (body[:, 1:][ok] <= 1))
    _, se = persist.read_csv(od / "sync_binomial_zero_one_stderr.csv")
    assert se.shape == (3, 3)
    man = json.loads((od / "manifest.json").read_text())
    assert man["surfaces"][0]["seeds"] and "survival_counts" in man["surfaces"][0]


def test_converge_model_equal_to_limit(tmp_path):
    conf = ('[converge]\nfamily = "gw"\nlimit = "gw"\ndepth = 6\nsizes = [100, 300]\n'
            'replications = 4\nlimit_size = 800\ncompute_floor = true\n')
    code, od = cli(tmp_path, "converge", conf, "--seed", "3")
    assert code == 0
    with open(od / "convergence.csv") as fh:
        rows = [line.split(",") for line in fh.read().splitlines()[1:]]
    w1 = {int(r[0]): (float(r[2]), float(r[3])) for r in rows if r[1] == "w1"}
    fl = {int(r[0]): (float(r[2]), float(r[3])) for r in rows if r[1] == "w1_floor"}
    for n in (100, 300):
        assert abs(w1[n][0] - fl[n][0]) <= 3 * np.hypot(w1[n][1], fl[n][1])


def test_locality_free_drift_has_zero_gaps(tmp_path):
    conf = ('[graph]\nmodel = "gw"\ndepth = 5\noffspring = {kind = "deterministic", d = 2}\n'
            '[locality]\ndrift = "free"\nradii = [1, 2, 3]\nT = 0.5\ndt = 0.01\n')
    code, od = cli(tmp_path, "locality", conf)
    assert code == 0
    header, body = persist.read_csv(od / "locality.csv")
    assert header[:3] == ["r", "boundary_size", "gap"] and np.all(body[:, 2] == 0.0)


CONFIGS = {
    "sample-graph": '[graph]\nmodel = "erdos_renyi"\nn = 300\nmean_degree = 2.0\n',
    "simulate": '[graph]\nmodel = "erdos_renyi"\nn = 60\nmean_degree = 2.0\n[simulate]\nT = 0.5\n',
    "locality": ('[graph]\nmodel = "gw"\ndepth = 6\noffspring = {kind = "poisson", c = 2.0}\n'
                 '[locality]\nradii = [1, 2, 3]\nT = 0.5\ndt = 0.01\n'),
    "converge": '[converge]\ndepth = 6\nsizes = [100, 200]\nreplications = 3\nlimit_size = 400\n',
    "phase-diagram": PHASE.replace("replications = 1", "replications = 3"),
}


@pytest.mark.parametrize("cmd", sorted(CONFIGS))
@pytest.mark.parametrize("form", ["csv", "json"])
def test_every_subcommand_is_deterministic_and_worker_invariant(tmp_path, cmd, form):
    outs = []
    for k, w in enumerate((1, 1, 4)):
        code, od = cli(tmp_path, cmd, CONFIGS[cmd], "--seed", "21", "--workers", str(w), "--format", form,
                       out=f"r{k}")
        assert code == 0
        outs.append({p.name: read(p) for p in od.iterdir() if p.name != "manifest.json"})
    assert outs[0] and outs[0] == outs[1] == outs[2]


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 4)) * 10.0 ** rng.integers(-300, 300, (20, 4))
    p = tmp_path / "x.csv"
    persist.write_csv(p, ["a", "b", "c", "d"], x)
    h, y = persist.read_csv(p)
    assert h == ["a", "b", "c", "d"] and np.array_equal(x, y)
    code, od = cli(tmp_path, "simulate", CONFIGS["simulate"], "--seed", "2")
    ens = persist.trajectory_from_csv(od / "trajectory.csv")
    assert persist.csv_text(*persist.trajectory_rows(ens)).encode() == read(od / "trajectory.csv")


def test_entry_point_runs_as_module(tmp_path):
    cfg = write(tmp_path, "c.toml", '[graph]\nmodel = "cycle"\nn = 3\n')
    r = subprocess.run([sys.executable, "-m", "sparsediff.cli", "sample-graph", "--config", cfg,
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0 and os.path.exists(tmp_path / "o" / "manifest.json")
    r = subprocess.run([sys.executable, "-m", "sparsediff.cli", "bogus"], capture_output=True)
    assert r.returncode == 2
