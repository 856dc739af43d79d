import json

import numpy as np
import pytest

from cli import main
from codec import SpatialImage, read_qdct, write_pgm
from conftest import textured_pixels


@pytest.fixture
def cover_path(tmp_path):
    path = tmp_path / "cover.pgm"
    write_pgm(path, SpatialImage(textured_pixels(64, seed=3)))
    return path


def last_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_tcm_command(tmp_path, cover_path, capsys):
    out = tmp_path / "tcm.qdct"
    assert main(["tcm", str(cover_path), "--quality", "85", "-o", str(out)]) == 0
    summary = last_json(capsys)
    assert summary["iterations"] >= 1
    assert read_qdct(out).qtable.quality == 85


def test_embed_extract_commands(tmp_path, cover_path, capsys):
    msg = tmp_path / "msg.bin"
    msg.write_bytes(b"cli secret")
    stego = tmp_path / "stego.qdct"
    report = tmp_path / "report.json"
    code = main(["embed", str(cover_path), "--msg", str(msg), "--key", "c0ffee", "--payload", "0.1",
                 "--subimages", "4", "--workers", "1", "--report", str(report), "-o", str(stego)])
    assert code == 0
    assert last_json(capsys)["message_bytes"] == 10
    assert json.loads(report.read_text())["method"] == "rsvrc"

    out = tmp_path / "out.bin"
    assert main(["extract", str(stego), "--key", "c0ffee", "--payload", "0.1", "--subimages", "4",
                 "-o", str(out)]) == 0
    assert out.read_bytes() == b"cli secret"
    assert last_json(capsys)["success"] is True

    assert main(["extract", str(stego), "--key", "beef", "--subimages", "4", "-o", str(out)]) == 3


def test_capacity_error_exit_code(tmp_path, cover_path):
    msg = tmp_path / "big.bin"
    msg.write_bytes(bytes(4000))
    code = main(["embed", str(cover_path), "--msg", str(msg), "--key", "01", "--subimages", "4",
                 "-o", str(tmp_path / "s.qdct")])
    assert code == 2


def test_bad_bch_is_rejected(tmp_path, cover_path):
    with pytest.raises(SystemExit) as exc:
        main(["embed", str(cover_path), "--msg", "m", "--key", "01", "--bch", "127,65", "-o", "s.qdct"])
    assert exc.value.code == 2


def test_bad_container_exit_code(tmp_path):
    bogus = tmp_path / "bogus.qdct"
    bogus.write_bytes(b"not a container")
    assert main(["simulate", str(bogus)]) == 2


def test_simulate_and_costmap(tmp_path, cover_path, capsys):
    assert main(["simulate", str(cover_path), "--quality", "75", "--passes", "2"]) == 0
    assert len(last_json(capsys)["passes"]) == 2

    costs = tmp_path / "costs.bin"
    assert main(["costmap", str(cover_path), "-o", str(costs)]) == 0
    assert last_json(capsys)["wet"] == 0
    assert np.frombuffer(costs.read_bytes(), dtype="<f8").size == 64 * 64


def test_pe_min_command(tmp_path, capsys):
    cover = tmp_path / "cover.txt"
    stego = tmp_path / "stego.txt"
    cover.write_text("0.1 0.2\n0.3")
    stego.write_text("0.25 0.9")
    assert main(["pe-min", str(cover), str(stego)]) == 0
    assert last_json(capsys)["pe_min"] == pytest.approx(1 / 6)
