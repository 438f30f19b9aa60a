"""Loss-curve rendering: log parsing taxonomy and PNG outputs."""

import pytest

from satsr.plots import BRANCH_COLORS, PLOT_TERMS, parse_loss_log, \
    plot_loss_curves
from satsr.train import LOSS_CSV_HEADER

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _write_log(path, rows):
    lines = [LOSS_CSV_HEADER] + rows
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _good_rows():
    return ["1,rgb,0.5,0.4,0.3,0.2,0.1,2.0",
            "1,ir,0.6,0.5,0.4,0.3,0.2,2.5",
            "2,rgb,0.45,0.35,0.25,0.15,0.05,1.8",
            "2,ir,0.55,0.45,0.35,0.25,0.15,2.2"]


def test_parse_types_and_order(tmp_path):
    rows = parse_loss_log(_write_log(tmp_path / "log.csv", _good_rows()))
    assert len(rows) == 4
    assert rows[0] == {"step": 1, "branch": "rgb", "l2": 0.5, "lpips": 0.4,
                       "csd": 0.3, "fft": 0.2, "ndvi": 0.1, "total": 2.0}
    assert isinstance(rows[0]["step"], int)
    assert [r["branch"] for r in rows] == ["rgb", "ir", "rgb", "ir"]


def test_parse_header_only(tmp_path):
    assert parse_loss_log(_write_log(tmp_path / "log.csv", [])) == []


def test_parse_wrong_header(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("step,branch,oops\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header"):
        parse_loss_log(path)


def test_parse_bad_field_count(tmp_path):
    path = _write_log(tmp_path / "log.csv",
                      ["1,rgb,0.5,0.4,0.3"])
    with pytest.raises(ValueError, match="line 2"):
        parse_loss_log(path)


def test_parse_non_numeric(tmp_path):
    path = _write_log(tmp_path / "log.csv",
                      _good_rows() + ["3,rgb,a,b,c,d,e,f"])
    with pytest.raises(ValueError, match="line 6"):
        parse_loss_log(path)


def test_parse_unknown_branch(tmp_path):
    path = _write_log(tmp_path / "log.csv",
                      ["1,thermal,0.5,0.4,0.3,0.2,0.1,2.0"])
    with pytest.raises(ValueError, match="branch"):
        parse_loss_log(path)


def test_plot_outputs(tmp_path):
    log = _write_log(tmp_path / "log.csv", _good_rows())
    written = plot_loss_curves(log, tmp_path / "plots")
    assert len(written) == len(PLOT_TERMS) + 1
    names = {p.rsplit("/", 1)[-1] for p in written}
    assert names == {f"loss_{t}.png" for t in PLOT_TERMS} | {"combined.png"}
    for p in written:
        data = open(p, "rb").read()
        assert data[:8] == PNG_MAGIC
        assert len(data) > 1000


def test_plot_header_only_log(tmp_path):
    # an untrained run still renders (empty axes)
    log = _write_log(tmp_path / "log.csv", [])
    written = plot_loss_curves(log, tmp_path / "plots")
    assert len(written) == len(PLOT_TERMS) + 1


def test_branch_colors_cover_branches():
    assert set(BRANCH_COLORS) == {"rgb", "ir"}
