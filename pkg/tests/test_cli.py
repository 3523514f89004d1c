import json

import numpy as np
import pytest

from ssfkit import cli
from ssfkit.operators import write_dense_matrix


def read_csv(path):
    lines = path.read_text().splitlines()
    header = {}
    for ln in lines:
        if ln.startswith("# "):
            k, v = ln[2:].split(": ", 1)
            header[k] = json.loads(v)
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == "lambda,re_xi,im_xi,re_dxi,im_dxi,flag"
    rows = [r.split(",") for r in body[1:]]
    return header, rows


def test_compute_interacting_matches_closed_form(tmp_path):
    out = tmp_path / "xi.csv"
    code = cli.main(["compute", "--model", "toy:rank1-interacting", "--beta", "0.2",
                     "--grid", "-0.5:1.5:41", "--out", str(out)])
    assert code == cli.EXIT_OK
    header, rows = read_csv(out)
    assert len(rows) == 41 and len(header["config_hash"]) == 16
    lam = np.array([float(r[0]) for r in rows])
    xi = np.array([float(r[1]) + 1j * float(r[2]) for r in rows])
    ok = np.array([r[5] == "ok" for r in rows])
    from ssfkit.toy_models import interacting_ssf_closed_form
    assert np.max(np.abs(xi[ok] - interacting_ssf_closed_form(0.2, lam[ok]))) < 1e-6
    side = json.loads((tmp_path / "xi.csv.json").read_text())
    assert side["config_hash"] == header["config_hash"]


def test_config_hash_ignores_output_path():
    a = cli.RunConfig(model="toy:finite", out="a.csv")
    b = cli.RunConfig(model="toy:finite", out="b.csv")
    c = cli.RunConfig(model="toy:finite", beta=0.3)
    assert a.digest() == b.digest() != c.digest()


def test_crosscheck_finite_from_config(tmp_path):
    rng = np.random.default_rng(3)
    h0 = np.diag([-0.5, 0.0, 0.6])
    v = 0.2 * rng.standard_normal((3, 3))
    write_dense_matrix(tmp_path / "h0.txt", h0)
    write_dense_matrix(tmp_path / "v.txt", v)
    (tmp_path / "run.ini").write_text(
        "[run]\ngrid = -1.5:1.5:31\ntol = 1e-4\n\n[model]\nkind = finite\nh0 = h0.txt\nv = v.txt\n")
    out = tmp_path / "cc.csv"
    code = cli.main(["crosscheck", "--config", str(tmp_path / "run.ini"), "--out", str(out)])
    assert code == cli.EXIT_OK
    rows = [ln.split(",") for ln in out.read_text().splitlines() if not ln.startswith("#")][1:]
    assert len(rows) >= 3
    assert all(float(r[2]) <= 1e-4 for r in rows)


def test_scan_toy_critical(tmp_path):
    out = tmp_path / "scan.json"
    code = cli.main(["scan", "--model", "toy:rank1-interacting", "--beta", str(1 / np.pi),
                     "--grid", "0:1:11", "--out", str(out)])
    assert code == cli.EXIT_OK
    doc = json.loads(out.read_text())
    assert [e["side"] for e in doc["entries"]] == ["Outgoing"]
    assert doc["entries"][0]["lambda0"] == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("argv", [
    ["compute", "--model", "nope"],
    ["compute", "--model", "toy:finite", "--grid", "1:0:5"],
    ["compute", "--model", "toy:finite", "--pipeline", "warp"],
    ["scan", "--model", "toy:finite"],
    ["compute", "--config", "/nonexistent.ini"],
    ["frobnicate"],
])
def test_configuration_errors(argv):
    assert cli.main(argv) == cli.EXIT_CONFIG


def test_schrodinger_compute(tmp_path):
    (tmp_path / "s.ini").write_text(
        "[run]\nmodel = schrodinger\ngrid = 1:2:2\nresolution = 8\n\n"
        "[potential]\namplitude = 0.5+0.2j\nradius = 1.0\n")
    out = tmp_path / "s.csv"
    assert cli.main(["compute", "--config", str(tmp_path / "s.ini"), "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert len(rows) == 2 and all(r[3] != "nan" for r in rows)


def test_negative_grid_argument(tmp_path):
    out = tmp_path / "j.csv"
    assert cli.main(["compute", "--model", "toy:jordan", "--grid", "-0.5:1.5:5", "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert float(rows[0][0]) == -0.5
