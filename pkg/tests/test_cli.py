import csv
import json

from fopinn.cli import main

SMALL = {
    "trainer": {"iters": 3, "validate_every": 3, "log_wall_time": False},
    "sampler": {"counts": {"interior": 64, "boundary": 16}},
    "network": {"layers": 2, "width": 8},
}


def write(tmp_path, name, **over):
    d = json.loads(json.dumps(SMALL))
    for k, v in over.items():
        d[k] = v
    d.setdefault("output_dir", str(tmp_path / name.replace(".json", "")))
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def test_train_writes_log_and_checkpoint(tmp_path, capsys):
    cfg = write(tmp_path, "fo.json")
    assert main(["train", "--config", cfg]) == 0
    assert (tmp_path / "fo/train_log.csv").is_file()
    assert (tmp_path / "fo/checkpoint.ckpt").is_file()
    assert main(["evaluate", "--config", cfg, "--boundary-points", "100", "--output", str(tmp_path / "r.json")]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["max_boundary_error"] <= 1e-12


def test_missing_config(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.json")]) != 0
    assert "not found" in capsys.readouterr().err


def test_unknown_key_lists_valid_keys(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"trainer": {"itres": 3}}))
    assert main(["train", "--config", str(p)]) != 0
    err = capsys.readouterr().err
    assert "itres" in err and "iters" in err


def test_compare_with_different_seeds_fails(tmp_path, capsys):
    a = write(tmp_path, "a.json")
    b = write(tmp_path, "b.json", sampler={"counts": {"interior": 64, "boundary": 16}, "seed": 9})
    assert main(["compare", "--a", a, "--b", b, "--output-dir", str(tmp_path / "cmp")]) != 0
    assert "seed" in capsys.readouterr().err


def test_compare_happy_path(tmp_path, capsys):
    a = write(tmp_path, "a.json")
    b = write(tmp_path, "b.json", formulation="second_order", bc_mode="soft")
    assert main(["compare", "--a", a, "--b", b, "--output-dir", str(tmp_path / "cmp")]) == 0
    assert (tmp_path / "cmp/comparison_00.csv").is_file()


def test_geom_probe_and_sample_dump(tmp_path):
    cfg = write(tmp_path, "ns.json", problem="navier_stokes", bc_mode="soft")
    out = tmp_path / "g.csv"
    assert main(["geom", "probe", "--config", cfg, "--n", "21", "--output", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["x", "y", "phi"] and len(rows) == 1 + 21 * 21
    assert min(float(r[2]) for r in rows[1:]) < 0
    out = tmp_path / "s.csv"
    assert main(["sample", "dump", "--config", cfg, "--output", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][:4] == ["kind", "label", "x", "y"]
    assert len(rows) == 1 + 64 + 16


def test_exact_bc_for_ns_rejected(tmp_path, capsys):
    cfg = write(tmp_path, "ns.json", problem="navier_stokes", bc_mode="exact")
    assert main(["train", "--config", cfg]) != 0
    assert "exact" in capsys.readouterr().err
