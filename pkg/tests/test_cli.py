from subsing.cli import main


def run(argv):
    return main(argv)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_zeroone_verdicts(capsys):
    assert run(["zeroone", "--f", "pow:2", "--phi", "stable:0.5"]) == 0
    out = capsys.readouterr().out
    assert "verdict=AS_INFINITE" in out
    assert run(["zeroone", "--f", "pow:1", "--phi", "stable:0.5"]) == 0
    out = capsys.readouterr().out
    assert "verdict=AS_FINITE" in out
    assert "criterion_value=2.0" in out


def test_bf_report(capsys):
    assert run(["bf", "--phi", "ratio:0.5", "--eval-at", "3",
                "--invert-at", "1.5"]) == 0
    out = capsys.readouterr().out
    assert "phi(3.0)=1.5" in out
    assert "at_zero=" in out and "simulable=False" in out


def test_moment_exact_and_mc(capsys):
    assert run(["moment", "exact", "--alpha", "0.5", "--p", "-1",
                "--f", "const:1"]) == 0
    assert "value=2.0" in capsys.readouterr().out
    assert run(["moment", "mc", "--phi", "stable:0.5", "--p", "0.25",
                "--f", "const:1", "--T", "1", "--paths", "8000",
                "--seed", "7"]) == 0
    row = capsys.readouterr().out.strip().splitlines()[-1]
    mean = float(row.split(",")[1])
    assert abs(mean - 1.4464) < 0.08


def test_refusal_exit_code(capsys):
    code = run(["moment", "bound", "--phi", "stable:0.5", "--p", "0.7",
                "--theta", "0"])
    assert code == 2
    err = capsys.readouterr().err
    assert "log2" in err and "phi(2s)/phi(s)" in err


def test_usage_exit_code():
    assert run(["--definitely-not-a-flag"]) == 64
    assert run(["moment", "exact"]) == 64      # missing required --p


def test_galerkin_truncation_refused(capsys):
    code = run(["spde", "galerkin", "--n", "16", "--truncations", "4,16",
                "--paths", "2", "--T", "0.25", "--dt", "0.0625"])
    assert code == 2
    assert "truncation" in capsys.readouterr().err


def test_byte_identity(tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    args = ["sim", "--phi", "stable:0.6", "--T", "1", "--dt", "0.01",
            "--paths", "2000", "--seed", "42"]
    assert run(args + ["--out", str(out1)]) == 0
    assert run(args + ["--out", str(out2)]) == 0
    assert read(out1) == read(out2)
    assert (tmp_path / "a.csv.manifest").exists()


def test_seed_changes_output(tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    run(["sim", "--phi", "stable:0.6", "--paths", "500", "--seed", "1",
         "--out", str(out1)])
    run(["sim", "--phi", "stable:0.6", "--paths", "500", "--seed", "2",
         "--out", str(out2)])
    assert read(out1) != read(out2)


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nf = pow:2\nphi = stable:0.5\n")
    assert run(["zeroone", "--config", str(cfg)]) == 0
    assert "AS_INFINITE" in capsys.readouterr().out
    # explicit flag wins over the config value
    assert run(["zeroone", "--config", str(cfg), "--f", "pow:1"]) == 0
    assert "AS_FINITE" in capsys.readouterr().out


def test_sim_certification_columns(tmp_path):
    out = tmp_path / "c.csv"
    assert run(["sim", "--phi", "gamma", "--T", "1", "--dt", "0.05",
                "--paths", "4000", "--seed", "3", "--out", str(out)]) == 0
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "r,mc_mean,mc_se,exact,z"
    for row in lines[1:]:
        z = float(row.split(",")[-1])
        assert abs(z) < 4.0


def test_path_export(tmp_path):
    out = tmp_path / "p.csv"
    assert run(["sim", "--phi", "stable:0.5", "--T", "1", "--dt", "0.25",
                "--seed", "5", "--export-path", "--out", str(out)]) == 0
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "t,S_t"
    vals = [float(r.split(",")[1]) for r in lines[1:]]
    assert vals[0] == 0.0 and all(b >= a for a, b in zip(vals, vals[1:]))
    out2 = tmp_path / "j.csv"
    assert run(["sim", "--phi", "gamma", "--T", "1", "--dt", "0.25",
                "--seed", "5", "--export-path", "--out", str(out2)]) == 0
    text = out2.read_text()
    assert "time,size" in text and "drift=" in text


def test_equiv_and_spde_smoke(capsys):
    assert run(["moment", "equiv", "--phi", "stable:0.5", "--p", "0.25",
                "--lam", "1"]) == 0
    assert "BOTH_FINITE" in capsys.readouterr().out
    assert run(["spde", "smallball", "--phi", "stable:0.5", "--n", "4",
                "--T", "0.0625", "--dt", "0.00390625", "--delta", "0.5",
                "--paths", "400"]) == 0
    out = capsys.readouterr().out
    assert "probability" in out


def test_integrate_subcommand(capsys):
    assert run(["integrate", "--f", "pow:-0.5", "--phi", "stable:0.5",
                "--T", "1", "--paths", "2000", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "finite_fraction" in out


def test_spde_sim_and_scans(capsys):
    assert run(["spde", "sim", "--phi", "stable:0.6", "--n", "4",
                "--T", "0.5", "--dt", "0.125", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "t,S_t,|X_t|,|Z_t|" in out
    assert run(["spde", "convmom", "--phi", "stable:0.6", "--n", "4",
                "--p", "0.5", "--theta", "0", "--t-grid", "0.25,0.5,1",
                "--dt", "0.03125", "--paths", "200"]) == 0
    assert "ratio" in capsys.readouterr().out
    assert run(["spde", "maximal", "--phi", "stable:0.6", "--n", "4",
                "--p", "0.5", "--t-grid", "1,2", "--dt", "0.0625",
                "--paths", "200"]) == 0
    capsys.readouterr()
    assert run(["spde", "longrun", "--phi", "stable:0.6", "--n", "4",
                "--p", "0.5", "--theta", "0.25", "--t-grid", "2,4",
                "--dt", "0.0625", "--paths", "100"]) == 0
    assert "average" in capsys.readouterr().out


def test_spde_control_subcommand(capsys):
    assert run(["spde", "control", "--phi", "stable:0.6", "--n", "2",
                "--q-const", "--f-scale", "0", "--a4-c", "4.0",
                "--a4-delta", "0.25", "--T", "0.5", "--dt", "0.015625",
                "--seed", "9"]) == 0
    out = capsys.readouterr().out
    assert "# converged=True" in out and "u_norm" in out
    term = [l for l in out.splitlines() if l.startswith("# terminal_phi_norm")]
    assert float(term[0].split("=")[1]) < 1e-8


def test_spde_galerkin_subcommand(capsys):
    assert run(["spde", "galerkin", "--phi", "gamma", "--n", "16",
                "--truncations", "2,4,8", "--T", "0.5", "--dt", "0.03125",
                "--paths", "20", "--seed", "4"]) == 0
    out = capsys.readouterr().out
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0].startswith("n,mean_sq_sup")
    means = [float(r.split(",")[1]) for r in rows[1:]]
    assert means[0] > means[-1]
