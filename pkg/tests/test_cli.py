import json
import os

import numpy as np
import pytest

from sbpwave import cli


MINIMAL = """
scenario = "mms"

[grid]
n1_coarse = 17
"""


def test_minimal_config_defaults():
    cfg = cli.parse_config_text(MINIMAL)
    assert cfg.scenario == "mms"
    assert cfg.n1_coarse == cfg.n2_coarse == 17
    assert cfg.n3_coarse == 9 and cfg.n3_fine == 17
    assert cfg.n1_fine == 33
    assert cfg.cfl == 1.3
    assert cfg.tol == 1e-7
    assert cfg.method == "pcg"
    assert cfg.on_failure == "abort"


def test_round_trip_is_identity():
    cfg = cli.parse_config_text(MINIMAL)
    assert cli.parse_config_text(cli.serialize_config(cfg)) == cfg
    full = cli.RunConfig(scenario="gaussian-source", n1_coarse=41,
                         n2_coarse=41, n3_coarse=17, n3_fine=9,
                         method="jacobi", tol=3.5e-9, on_failure="warn",
                         cfl=1.1, t_end=0.125, dt=1e-3, directory="results",
                         snapshot_stride=50,
                         receivers=[[1000.0, 1000.0, 400.0],
                                    [1200.0, 900.0, 560.0]])
    assert cli.parse_config_text(cli.serialize_config(full)) == full


def test_unknown_keys_rejected_with_path():
    with pytest.raises(cli.ConfigError, match="solver.tolerance"):
        cli.parse_config_text(MINIMAL + "\n[solver]\ntolerance = 1e-9\n")
    with pytest.raises(cli.ConfigError, match="unknown key 'frobnicate'"):
        cli.parse_config_text('frobnicate = 3\n' + MINIMAL)


def test_nesting_violation_names_both_sizes():
    bad = MINIMAL + "n1_fine = 32\n"
    with pytest.raises(cli.ConfigError) as err:
        cli.parse_config_text(bad)
    msg = str(err.value)
    assert "32" in msg and "33" in msg and "17" in msg
    assert "nesting" in msg
    # the consistent value passes
    cli.parse_config_text(MINIMAL + "n1_fine = 33\n")


def test_config_validation_errors():
    with pytest.raises(cli.ConfigError, match="missing required"):
        cli.parse_config_text("[grid]\nn1_coarse = 9\n")
    with pytest.raises(cli.ConfigError, match="scenario"):
        cli.parse_config_text('scenario = "unknown-thing"\n')
    with pytest.raises(cli.ConfigError, match="solver.method"):
        cli.parse_config_text(MINIMAL + '[solver]\nmethod = "gmres"\n')
    with pytest.raises(cli.ConfigError, match="expected int"):
        cli.parse_config_text('scenario = "mms"\n[grid]\nn1_coarse = 2.5\n')
    with pytest.raises(cli.ConfigError, match="on_failure"):
        cli.parse_config_text(MINIMAL + '[solver]\non_failure = "retry"\n')


def test_parse_config_from_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(MINIMAL)
    assert cli.parse_config(p) == cli.parse_config_text(MINIMAL)


def test_snapshot_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    data = rng.standard_normal((5, 4, 3, 3))
    # include values that stress the float format
    data[0, 0, 0, 0] = np.pi * 1e-300
    data[0, 0, 0, 1] = -1.0 / 3.0
    header = cli.SnapshotHeader(block="fine", shape=(5, 4, 3),
                                spacing=(0.25, 1.0 / 3.0, 0.5), time=0.125)
    path = tmp_path / "snap.dat"
    cli.write_snapshot(path, header, data)
    h2, d2 = cli.read_snapshot(path)
    assert h2 == header
    assert d2.tobytes() == data.astype("<f8").tobytes()


def test_snapshot_shape_mismatch(tmp_path):
    header = cli.SnapshotHeader(block="coarse", shape=(4, 4, 4),
                                spacing=(0.1, 0.1, 0.1), time=0.0)
    with pytest.raises(ValueError):
        cli.write_snapshot(tmp_path / "x.dat", header, np.zeros((4, 4, 5, 3)))


def test_snapshot_rejects_foreign_file(tmp_path):
    p = tmp_path / "junk.dat"
    p.write_bytes(b"something else entirely\n")
    with pytest.raises(ValueError):
        cli.read_snapshot(p)


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def test_run_emits_artifacts(tmp_path):
    cfg = cli.RunConfig(scenario="energy", n1_coarse=15, n2_coarse=15,
                        n3_coarse=8, n3_fine=15, t_end=0.5,
                        directory=str(tmp_path), snapshot_stride=2,
                        receivers=[[np.pi, np.pi, np.pi]])
    manifest = cli.run(cfg)
    assert manifest["grid"] == {"coarse": [15, 15, 8], "fine": [29, 29, 15]}
    assert manifest["solver"]["stats"]["all_converged"]
    assert manifest["kappa_max"] > 0

    header, rows = _read_csv(tmp_path / "energy.csv")
    assert header == ["step", "t", "E", "rel_drift"]
    assert len(rows) == manifest["steps"]
    assert float(rows[0][2]) > 0

    header, rows = _read_csv(tmp_path / "receiver_00.csv")
    assert header == ["t", "u1", "u2", "u3"]
    assert len(rows) == manifest["steps"] + 1   # includes t = 0
    assert float(rows[0][0]) == 0.0

    snaps = sorted(p for p in os.listdir(tmp_path) if p.startswith("snap"))
    assert "snapshot_coarse_000000.dat" in snaps
    assert "snapshot_fine_000002.dat" in snaps
    h, d = cli.read_snapshot(tmp_path / "snapshot_fine_000002.dat")
    assert h.block == "fine" and h.shape == (17, 17, 9)
    assert np.all(np.isfinite(d))

    with open(tmp_path / "manifest.json") as fh:
        assert json.load(fh) == manifest


def test_zero_data_run_outputs_zero(tmp_path):
    cfg = cli.RunConfig(scenario="gaussian-source", n1_coarse=9, n2_coarse=9,
                        n3_coarse=5, n3_fine=5, t_end=1e-3, cfl=1.0,
                        directory=str(tmp_path),
                        receivers=[[1000.0, 1000.0, 400.0]])
    # kill the source: with zero data everything stays identically zero
    import sbpwave.scenarios as sc
    prob_builder = cli._build_problem
    cfg2 = cfg
    prob = prob_builder(cfg2)
    zero = np.zeros(prob.op_f.shape[:2] + (3,))
    prob.fine.bcs.dirichlet["z_high"] = lambda t: zero[:, :, :]
    stepper, nsteps = prob.make_stepper(cfl=cfg.cfl, t_end=cfg.t_end)
    for _ in range(nsteps):
        stepper.step()
    assert np.abs(stepper.c.curr).max() == 0.0
    assert np.abs(stepper.f.curr).max() == 0.0


def test_receiver_on_node_is_exact():
    import sbpwave.scenarios as sc
    prob = sc.energy_problem(nc=9)
    # physical location of an interior coarse node
    i, j, k = 3, 4, 2
    point = tuple(prob.met_c.x[a][i, j, k] for a in range(3))
    (tag, sampler), = prob.make_samplers([point])
    assert tag == "coarse"
    rng = np.random.default_rng(5)
    u = rng.standard_normal(prob.op_c.shape + (3,))
    assert np.abs(sampler(u) - u[i, j, k]).max() < 1e-12


def test_loh1_scenario_not_steppable():
    cfg = cli.RunConfig(scenario="loh1-geometry")
    with pytest.raises(cli.ConfigError, match="loh1-geometry"):
        cli._build_problem(cfg)


def test_sbp_check_command(capsys):
    rc = cli.main(["--seed", "3", "sbp-check", "--sizes", "8,12",
                   "--trials", "10"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "PASS" in out


def test_convergence_command_writes_table(tmp_path, capsys):
    rc = cli.main(["--output-dir", str(tmp_path), "convergence",
                   "--grids", "9,17", "--t-end", "0.02"])
    assert rc == 0
    header, rows = _read_csv(tmp_path / "convergence.csv")
    assert header == ["n_coarse", "spacing", "l2_total", "l2_fine",
                      "l2_coarse", "rate"]
    assert len(rows) == 2
    assert rows[0][5] == "" and float(rows[1][5]) > 2.0


def test_run_command_via_config_file(tmp_path):
    cfgfile = tmp_path / "energy.toml"
    cfgfile.write_text('scenario = "energy"\n'
                       "[grid]\nn1_coarse = 9\n"
                       "[time]\nt_end = 0.05\n"
                       f'[output]\ndirectory = "{tmp_path}/out"\n')
    rc = cli.main(["run", str(cfgfile)])
    assert rc == 0
    assert (tmp_path / "out" / "manifest.json").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    cfgfile = tmp_path / "bad.toml"
    cfgfile.write_text('scenario = "mms"\nbogus = 1\n')
    rc = cli.main(["run", str(cfgfile)])
    assert rc == 2
    assert "bogus" in capsys.readouterr().err
