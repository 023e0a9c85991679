import csv
import json
import subprocess
import sys

import pytest

from goldenphy.cli import main


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_gen_sequence_csv(tmp_path):
    assert main(["--out-dir", str(tmp_path), "gen-sequence", "--n", "131", "--root", "1", "--q", "0"]) == 0
    rows = _rows(tmp_path / "sequence.csv")
    assert rows[0] == ["k", "re", "im"] and len(rows) == 132
    manifest = json.loads((tmp_path / "sequence.csv.manifest.json").read_text())
    assert manifest["command"] == "gen-sequence" and manifest["params"]["n"] == 131
    assert manifest["outputs"] == [str(tmp_path / "sequence.csv")]


def test_gen_sequence_truncated_and_iq(tmp_path):
    assert main(["--out-dir", str(tmp_path), "gen-sequence", "--n", "2053", "--root", "5", "--truncate", "2048"]) == 0
    assert len(_rows(tmp_path / "sequence.csv")) == 2049
    assert main(["--out-dir", str(tmp_path), "gen-sequence", "--n", "31", "--format", "iq", "--out", "s.cf32"]) == 0
    assert (tmp_path / "s.cf32").stat().st_size == 31 * 8
    assert (tmp_path / "s.cf32.json").exists() and (tmp_path / "s.cf32.manifest.json").exists()


def test_invalid_params_exit_nonzero(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), "gen-sequence", "--n", "130", "--root", "2"]) != 0
    assert "gcd" in capsys.readouterr().err
    assert not (tmp_path / "sequence.csv").exists()


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("GOLDENPHY_OUT_DIR", str(tmp_path / "env"))
    assert main(["table1"]) == 0
    rows = _rows(tmp_path / "env" / "table1.csv")
    assert rows[0] == ["sf", "n", "rejection_db", "set_size"] and len(rows) == 11


def test_global_flags_before_and_after_subcommand(tmp_path):
    main(["--seed", "7", "--out-dir", str(tmp_path), "table1"])
    assert json.loads((tmp_path / "table1.csv.manifest.json").read_text())["seed"] == 7
    main(["table1", "--seed", "8", "--out-dir", str(tmp_path)])
    assert json.loads((tmp_path / "table1.csv.manifest.json").read_text())["seed"] == 8


def test_ber_sweep_theory_only(tmp_path):
    assert main(["--out-dir", str(tmp_path), "ber-sweep", "--sf", "8", "--trials", "0"]) == 0
    rows = _rows(tmp_path / "ber_sf8.csv")
    assert rows[0] == ["sf", "snr_db", "ber_theory", "ber_integral", "ber_mc", "mc_lo", "mc_hi", "trials", "errors",
                       "seed"]
    assert len(rows) == 18 and all(r[4] == "" and r[7] == "0" for r in rows[1:])


def test_ber_sweep_same_seed_same_bytes(tmp_path):
    args = ["ber-sweep", "--sf", "7", "--snr-start", "-12", "--snr-stop", "-10", "--trials", "300", "--seed", "5"]
    main(["--out-dir", str(tmp_path / "a")] + args)
    main(["--out-dir", str(tmp_path / "b"), "--threads", "2"] + args)
    assert (tmp_path / "a" / "ber_sf7.csv").read_bytes() == (tmp_path / "b" / "ber_sf7.csv").read_bytes()


def test_xcorr_matrix_grid(tmp_path):
    assert main(["--out-dir", str(tmp_path), "xcorr-matrix", "--n", "131", "--roots", "5", "--normalize", "n"]) == 0
    rows = _rows(tmp_path / "xcorr_matrix.csv")
    assert rows[0] == ["root", "1", "2", "3", "4", "5"]
    assert float(rows[1][1]) == pytest.approx(1.0)
    assert float(rows[1][2]) == pytest.approx(131**-0.5)


def test_delay_cross_multiuser_psd(tmp_path):
    d = str(tmp_path)
    assert main(["--out-dir", d, "delay-sweep", "--n", "131", "--pairs", "2", "--max-delay", "1"]) == 0
    assert len(_rows(tmp_path / "delay_sweep.csv")) == 1 + 2 * 5
    assert main(["--out-dir", d, "cross-sf", "--target-sf", "8", "--interferer-sf", "7", "--target-delay", "40"]) == 0
    assert len(_rows(tmp_path / "cross_sf.csv")) == 1 + 257
    assert main(["--out-dir", d, "multiuser", "--sf", "7", "--counts", "0,2", "--trials", "3",
                 "--payload-len", "2"]) == 0
    assert _rows(tmp_path / "multiuser_sf7.csv")[0] == ["sf", "n_interferers", "snr_db", "per", "ser", "trials", "seed"]
    assert main(["--out-dir", d, "psd", "--sf", "8", "--symbols", "40", "--segment", "1024"]) == 0
    man = json.loads((tmp_path / "psd.csv.manifest.json").read_text())
    assert "occupied_bandwidth_99_hz" in man["params"]["results"]


def test_cross_sf_same_sf_rejected(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), "cross-sf", "--target-sf", "9", "--interferer-sf", "9"]) != 0
    assert "distinct" in capsys.readouterr().err


def test_frame_files(tmp_path):
    d = str(tmp_path)
    assert main(["--out-dir", d, "frame", "encode", "--sf", "9", "--payload-hex", "c0ffee", "--offset", "33"]) == 0
    desc = json.loads((tmp_path / "frame.cf32.frame.json").read_text())
    assert desc["payload_bytes"] == 3 and desc["sf"] == 9
    assert main(["--out-dir", d, "frame", "decode", "--sf", "9", "--input", str(tmp_path / "frame.cf32"),
                 "--out", "payload.hex"]) == 0
    assert (tmp_path / "payload.hex").read_text().strip() == "c0ffee"


def test_frame_pipe_round_trip(tmp_path):
    exe = [sys.executable, "-m", "goldenphy.cli"]
    enc = subprocess.run(exe + ["frame", "encode", "--sf", "8", "--truncated", "--payload-hex", "00ff10", "--out", "-"],
                         capture_output=True, check=True, cwd=tmp_path)
    dec = subprocess.run(exe + ["frame", "decode", "--sf", "8", "--truncated", "--payload-bytes", "3"],
                         input=enc.stdout, capture_output=True, check=True, cwd=tmp_path)
    assert dec.stdout.decode().strip() == "00ff10"


def test_frame_decode_without_size_fails(tmp_path):
    exe = [sys.executable, "-m", "goldenphy.cli"]
    r = subprocess.run(exe + ["frame", "decode", "--sf", "8"], input=b"", capture_output=True, cwd=tmp_path)
    assert r.returncode != 0 and b"error" in r.stderr
