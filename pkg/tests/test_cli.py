import json

import pytest

from audiocap.cli import main
from audiocap.harness import ResultTable, make_aligned_toy_world


def run(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


@pytest.mark.parametrize(
    "argv",
    [
        ["--help"],
        ["caption", "--help"],
        ["evaluate", "--help"],
        ["ablate", "--help"],
        ["sweep", "--help"],
        ["keywords", "--help"],
        ["fixtures", "--help"],
    ],
)
def test_help_exits_zero(capsys, argv):
    with pytest.raises(SystemExit) as exit_info:
        main(argv)
    assert exit_info.value.code == 0
    assert "usage" in capsys.readouterr().out.lower()


def test_unknown_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main(["caption", "--bogus-flag"])
    assert exit_info.value.code == 2


def test_caption_is_deterministic(capsys):
    rc1, out1, _ = run(capsys, "caption", "--toy", "--seed", "7", "--clip", "clip00")
    rc2, out2, _ = run(capsys, "caption", "--toy", "--seed", "7", "--clip", "clip00")
    assert rc1 == rc2 == 0
    assert out1 == out2
    assert out1.startswith("clip00\t")


def test_caption_demo_world_is_aligned(capsys):
    rc, out, _ = run(capsys, "caption", "--toy", "--clip", "clip00")
    assert rc == 0
    world = make_aligned_toy_world()
    assert out.strip() == f"clip00\t{world.descriptions()['clip00']} ."


def test_no_magic_l0_equals_greedy(capsys):
    _, guided_off, _ = run(capsys, "caption", "--toy", "--clip", "clip01",
                           "-l", "0", "--no-magic", "--w-end", "0")
    _, greedy, _ = run(capsys, "caption", "--toy", "--clip", "clip01",
                       "--greedy", "--w-end", "0")
    assert guided_off == greedy


def test_caption_print_config_echoes_tuned_values(capsys):
    rc, out, _ = run(capsys, "caption", "--toy", "--clip", "clip00",
                     "--tau", "10", "--k", "45", "--print-config")
    assert rc == 0
    config_line = out.splitlines()[0]
    doc = json.loads(config_line)
    assert doc["config"]["tau"] == 10.0
    assert doc["config"]["k"] == 45


def test_caption_needs_a_backend(capsys):
    rc, _, err = run(capsys, "caption", "--clip", "x")
    assert rc == 2
    assert "backend" in err


def test_caption_needs_clip_or_manifest(capsys):
    rc, _, err = run(capsys, "caption", "--toy")
    assert rc == 2


def test_caption_manifest_output_and_sidecar(capsys, tmp_path):
    out_path = tmp_path / "captions.json"
    world = make_aligned_toy_world()
    from audiocap.harness import write_manifest

    manifest_path = tmp_path / "m.jsonl"
    write_manifest(manifest_path, world.manifest)
    rc, out, _ = run(capsys, "caption", "--toy", "--manifest", str(manifest_path),
                     "--output", str(out_path), "--trace")
    assert rc == 0
    doc = json.loads(out_path.read_text())
    assert len(doc) == len(world.manifest)
    assert all("steps" in rec for rec in doc.values())
    sidecar = json.loads((tmp_path / "captions.json.meta.json").read_text())
    assert sidecar["config"]["k"] == world.cfg.k


def test_config_file_equals_flags(capsys, tmp_path):
    config_path = tmp_path / "cfg.json"
    config_path.write_text(json.dumps({"tau": 3.0, "w_magic": 0.25, "max_tokens": 5}))
    _, via_config, _ = run(capsys, "caption", "--toy", "--clip", "clip02",
                           "--config", str(config_path))
    _, via_flags, _ = run(capsys, "caption", "--toy", "--clip", "clip02",
                          "--tau", "3.0", "--w-magic", "0.25", "--max-tokens", "5")
    assert via_config == via_flags


def test_flags_beat_config_file(capsys, tmp_path):
    config_path = tmp_path / "cfg.json"
    config_path.write_text(json.dumps({"k": 2}))
    rc, out, _ = run(capsys, "caption", "--toy", "--clip", "clip00",
                     "--config", str(config_path), "--k", "45", "--print-config")
    assert json.loads(out.splitlines()[0])["config"]["k"] == 45


def test_paper_aliases_map_onto_weights(capsys):
    _, via_alias, _ = run(capsys, "caption", "--toy", "--clip", "clip01",
                          "--paper-gamma", "0", "--print-config")
    doc = json.loads(via_alias.splitlines()[0])
    assert doc["config"]["w_magic"] == 0.0


def test_keywords_merge_counts(capsys, tmp_path):
    base = tmp_path / "base.txt"
    extra = tmp_path / "extra.txt"
    base.write_text("\n".join(f"class {i}" for i in range(512)))
    extra.write_text("\n".join(f"class {i}" for i in range(512))
                     + "\n" + "\n".join(f"extra {i}" for i in range(1987 - 512)))
    out_path = tmp_path / "merged.txt"
    rc, out, _ = run(capsys, "keywords", "merge", str(base), str(extra),
                     "-o", str(out_path))
    assert rc == 0
    assert out.strip().startswith("1987 unique keywords")
    assert len(out_path.read_text().splitlines()) == 1987


def test_keywords_show(capsys, tmp_path):
    path = tmp_path / "kw.txt"
    path.write_text("Dog\ndog\nRain\n")
    rc, out, _ = run(capsys, "keywords", "show", str(path))
    assert rc == 0
    assert out.splitlines()[:2] == ["dog", "rain"]


def test_fixtures_gen_toy_validate_and_reproduce(capsys, tmp_path):
    fix_dir = tmp_path / "fixtures"
    rc, out, _ = run(capsys, "fixtures", "gen-toy", "-o", str(fix_dir),
                     "--clips", "6", "--seed", "7")
    assert rc == 0
    for name in ("embeddings.jsonl", "lm.json", "manifest.jsonl", "keywords.txt", "config.json"):
        assert (fix_dir / name).exists()

    rc, out, _ = run(capsys, "fixtures", "validate",
                     "--embeddings", str(fix_dir / "embeddings.jsonl"),
                     "--lm", str(fix_dir / "lm.json"))
    assert rc == 0
    assert "embeddings ok" in out and "lm ok" in out

    # the fixture-fed engine reproduces the toy world's captions
    rc, fixture_out, _ = run(
        capsys, "caption",
        "--embeddings", str(fix_dir / "embeddings.jsonl"),
        "--lm", str(fix_dir / "lm.json"),
        "--config", str(fix_dir / "config.json"),
        "--manifest", str(fix_dir / "manifest.jsonl"),
    )
    assert rc == 0
    world = make_aligned_toy_world(n_clips=6, seed=7)
    for line in fixture_out.strip().splitlines():
        clip_id, text = line.split("\t")
        assert text.rstrip(" .") == world.descriptions()[clip_id]


def test_fixtures_validate_missing_file(capsys, tmp_path):
    rc, _, err = run(capsys, "fixtures", "validate",
                     "--embeddings", str(tmp_path / "nope.jsonl"),
                     "--lm", str(tmp_path / "nope.json"))
    assert rc == 1
    assert "error" in err


def test_evaluate_prints_table_and_writes_json(capsys, tmp_path):
    cands = tmp_path / "cands.json"
    refs = tmp_path / "refs.json"
    cands.write_text(json.dumps({"a": "dog barks loudly", "b": ["rain falls hard"]}))
    refs.write_text(json.dumps({"a": ["dog barks loudly"], "b": ["rain falls hard"]}))
    report_path = tmp_path / "report.json"
    rc, out, _ = run(capsys, "evaluate", "--candidates", str(cands),
                     "--refs", str(refs), "--json", str(report_path))
    assert rc == 0
    assert "bleu2" in out and "nlg_mean" in out
    doc = json.loads(report_path.read_text())
    assert doc["bleu2"] == 1.0


def test_sweep_writes_csv_with_one_row_per_value(capsys, tmp_path):
    out_path = tmp_path / "sweep.csv"
    rc, out, _ = run(capsys, "sweep", "--toy", "--axis", "l",
                     "--values", "0,1,2,3,4", "--out", str(out_path))
    assert rc == 0
    table = ResultTable.from_csv(out_path)
    assert [r["value"] for r in table.rows] == [0, 1, 2, 3, 4]
    assert (tmp_path / "sweep.csv.meta.json").exists()


def test_ablate_grid_csv(capsys, tmp_path):
    out_path = tmp_path / "ablate.csv"
    rc, _, _ = run(capsys, "ablate", "--toy",
                   "--variant", "aligned=builtin", "--variant", "none=none",
                   "--out", str(out_path))
    assert rc == 0
    table = ResultTable.from_csv(out_path)
    assert len(table.rows) == 4
    assert {r["magic_search"] for r in table.rows} == {"on", "off"}
