"""CLI exit codes, file outputs and determinism."""

import json
import os

import pytest

from hmfront.cli import EXIT_INPUT, EXIT_MEASURE, EXIT_OK, main
from hmfront.fronts import read_front_csv

SYN = ["--synthetic", "3", "400", "28", "0.4"]


def run(args):
    return main(args)


def test_moments_writes_report(tmp_path):
    out = tmp_path / "m"
    assert run(["moments", *SYN, "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "moments.json").read_text())
    assert doc["schema_version"] == "1"
    assert doc["n"] == 3 and doc["T"] == 400
    assert len(doc["mu"]) == 3
    assert "m3" not in doc


def test_moments_full_tensors_flag(tmp_path):
    out = tmp_path / "m"
    assert run(["moments", *SYN, "--out", str(out), "--full-tensors"]) == EXIT_OK
    doc = json.loads((out / "moments.json").read_text())
    assert len(doc["m3"]) == 3 and len(doc["m3"][0]) == 9
    assert len(doc["m4"][0]) == 27


def test_moments_json_round_trips(tmp_path):
    out = tmp_path / "m"
    run(["moments", *SYN, "--out", str(out)])
    text = (out / "moments.json").read_text()
    assert json.dumps(json.loads(text), indent=2, sort_keys=True) + "\n" == text


def test_moments_constant_column_reports_zero_variance(tmp_path):
    csv = tmp_path / "r.csv"
    rows = ["A,B", "0.01,0.02", "0.01,0.03", "0.01,0.01"]
    csv.write_text("\n".join(rows), encoding="utf-8")
    out = tmp_path / "m"
    assert run(["moments", "--input", str(csv), "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "moments.json").read_text())
    assert doc["sigma"][0][0] == 0.0


def test_malformed_csv_exits_2(tmp_path):
    csv = tmp_path / "bad.csv"
    csv.write_text("A,B\n0.1,nope\n0.2,0.3\n", encoding="utf-8")
    assert run(["moments", "--input", str(csv), "--out", str(tmp_path)]) == EXIT_INPUT


def test_missing_input_exits_2(tmp_path):
    assert run(["moments", "--out", str(tmp_path)]) == EXIT_INPUT


def test_unknown_method_param_exits_2(tmp_path):
    code = run(
        ["front", *SYN, "--method", "tracer", "--param", "bogus=3", "--out", str(tmp_path)]
    )
    assert code == EXIT_INPUT


def test_front_tracer_outputs(tmp_path):
    out = tmp_path / "f"
    code = run(
        [
            "front",
            *SYN,
            "--method",
            "tracer",
            "--param",
            "max_points=12",
            "--param",
            "n_starts=2",
            "--seed",
            "3",
            "--out",
            str(out),
            "--gnuplot",
        ]
    )
    assert code == EXIT_OK
    front = read_front_csv(out / "front.csv")
    assert len(front.points) == 12
    means = [pt.mean for pt in front.points]
    assert means == sorted(means, reverse=True)
    doc = json.loads((out / "front.json").read_text())
    assert doc["partial"] is False
    assert doc["schema_version"] == "1"
    dat = (out / "front.dat").read_text().splitlines()
    assert dat[0].startswith("# mean variance skewness")
    assert len(dat) == 13


def test_front_epsilon_metadata(tmp_path):
    out = tmp_path / "f"
    code = run(
        [
            "front",
            *SYN,
            "--method",
            "epsilon",
            "--param",
            "n1=5",
            "--param",
            "n2=5",
            "--param",
            "rounds=0",
            "--seed",
            "0",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    doc = json.loads((out / "front.json").read_text())
    assert doc["metadata"]["attempted"] == 25


def test_quality_command(tmp_path):
    front_dir = tmp_path / "f"
    run(
        [
            "front",
            *SYN,
            "--method",
            "tracer",
            "--param",
            "max_points=10",
            "--param",
            "n_starts=2",
            "--out",
            str(front_dir),
        ]
    )
    out = tmp_path / "q"
    code = run(
        [
            "quality",
            *SYN,
            "--front",
            str(front_dir / "front.csv"),
            "--reference-n",
            "6",
            "6",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    doc = json.loads((out / "quality.json").read_text())
    for key in ("coverage_error", "uniformity", "cardinality", "dominated_count"):
        assert key in doc
    assert doc["cardinality"] >= 2


def test_quality_single_point_front_exits_5(tmp_path):
    front_dir = tmp_path / "f"
    run(
        [
            "front",
            *SYN,
            "--method",
            "utility",
            "--out",
            str(front_dir),
        ]
    )
    out = tmp_path / "q"
    code = run(
        [
            "quality",
            *SYN,
            "--front",
            str(front_dir / "front.csv"),
            "--reference-n",
            "4",
            "4",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_MEASURE


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "method": "tracer",
                "synthetic": [3, 400, 28, 0.4],
                "method_params": {"max_points": 5, "n_starts": 2},
                "seed": 9,
            }
        ),
        encoding="utf-8",
    )
    out = tmp_path / "f"
    code = run(["front", "--config", str(cfg), "--out", str(out)])
    assert code == EXIT_OK
    doc = json.loads((out / "front.json").read_text())
    assert doc["seed"] == 9
    assert len(doc["points"]) == 5


def test_unknown_config_field_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"motive": "nope"}), encoding="utf-8")
    assert run(["front", "--config", str(cfg)]) == EXIT_INPUT


def _hash_tree(root):
    out = {}
    for name in sorted(os.listdir(root)):
        with open(os.path.join(root, name), "rb") as fh:
            out[name] = fh.read()
    return out


@pytest.mark.parametrize(
    "args",
    [
        ["moments", *SYN],
        [
            "front",
            *SYN,
            "--method",
            "tracer",
            "--param",
            "max_points=8",
            "--param",
            "n_starts=2",
            "--seed",
            "5",
            "--gnuplot",
        ],
        [
            "front",
            *SYN,
            "--method",
            "epsilon",
            "--param",
            "n1=4",
            "--param",
            "n2=4",
            "--param",
            "rounds=1",
            "--seed",
            "5",
        ],
        ["verify", *SYN, "--samples", "3", "--seed", "5"],
    ],
)
def test_byte_identical_reruns(tmp_path, args):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run([*args, "--out", str(a)]) in (EXIT_OK,)
    assert run([*args, "--out", str(b)]) in (EXIT_OK,)
    ha, hb = _hash_tree(a), _hash_tree(b)
    assert ha.keys() == hb.keys()
    for name in ha:
        assert ha[name] == hb[name], "output %s differs between runs" % name
