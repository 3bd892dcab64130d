import json

import pytest

import tokprobe


def test_render_and_oracles():
    units = ["a", "b", "a"]
    assert tokprobe.render(units, "d") == "['a', 'b', 'a']"
    assert tokprobe.parse_rendered("a, b, a", "c") == units
    assert tokprobe.oracle_count(units, "a") == 2
    assert tokprobe.oracle_sort(list("2CsU4bSc")) == "24CSUbcs"
    assert tokprobe.oracle_reverse(list("hello")) == "olleh"


def test_bpe_roundtrip_and_alignment():
    merges = tokprobe.train_bpe(["abab", "abab", "aabb"], 3)
    out = tokprobe.tokenize(merges, "abab", ["a", "b", "a", "b"])
    assert "".join(out["tokens"]) == "abab"
    assert out["merged_unit_count"] > 0
    listed = tokprobe.tokenize(merges, "['a', 'b']", ["a", "b"])
    assert listed["merged_unit_count"] == 0


def test_generate_render_parse():
    insts = tokprobe.generate("counting:a", "ab", 10, 20, 5, "b", seed=3)
    assert len(insts) == 5
    assert insts == tokprobe.generate("counting:a", "ab", 10, 20, 5, "b", seed=3)
    bundle = tokprobe.render_prompt(insts[0], "scot")
    assert insts[0]["rendered"] in bundle["text"]
    parsed = tokprobe.parse_answer("counting:a", "Step 1...\nResult: 7")
    assert parsed["kind"] == "count" and parsed["count"] == 7
    rev = tokprobe.parse_answer("reversing", "{'Result': 'olleh'}")
    assert rev["value"] == "olleh"


def test_errors_map_to_value_error():
    with pytest.raises(ValueError):
        tokprobe.render(["a"], "e")
    with pytest.raises(tokprobe.ParseError):
        tokprobe.parse_rendered("a,, b", "c")


def test_statistics():
    assert tokprobe.spearman([0.07, 1.48, 6.02, 12.7], [38.4, 39.8, 45.9, 48.1]) == pytest.approx(1.0)
    assert tokprobe.pearson([1, 1, 1], [1, 2, 3]) is None
    assert tokprobe.format_pct(54.1) == "54.10"


def test_pipeline_smoke(tmp_path):
    cfg = {
        "n": 3,
        "seed": 1,
        "output_dir": str(tmp_path / "out"),
        "backend": {"kind": "simulated"},
        "experiments": [
            {"task": "counting", "targets": ["a"], "alphabet": "ab", "buckets": ["10:20"],
             "formats": ["a", "d"], "variants": ["scot"]}
        ],
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    first = tokprobe.run_pipeline(path)
    assert first["requests"] == 6 and first["failed"] == 0
    second = tokprobe.run_pipeline(path)
    assert second["requests"] == 0 and second["cache_hits"] == 6
    assert (tmp_path / "out" / "report.json").exists()
