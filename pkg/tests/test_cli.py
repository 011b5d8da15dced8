import json

from gdtm.cli import corpus_table, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_trace_external_copy(capsys, tmp_path):
    out_file = tmp_path / "trace.jsonl"
    code, out, _ = run(capsys, "trace", "--machine", "copy", "--input", "11", "--out", str(out_file))
    assert code == 0
    assert "steps=3 halted=true oracle=match" in out
    rows = [json.loads(r) for r in out_file.read_text().splitlines()]
    assert len(rows) == 4 and rows[-1]["state"].startswith("H/")


def test_trace_no_halt(capsys):
    code, out, _ = run(capsys, "trace", "--input", "1111111111", "--max-iters", "10")
    assert code == 2 and "no halt within 10" in out


def test_trace_internal_linesearch(capsys):
    for name in ("copy", "increment", "mark_copy"):
        code, out, _ = run(capsys, "trace", "--construction", "internal", "--mode", "linesearch",
                           "--machine", name)
        assert code == 0
        assert out.count("loss strictly decreasing: true") == out.count("\n")


def test_trace_full_enumeration(capsys):
    code, out, _ = run(capsys, "trace", "--construction", "internal", "--full-enumeration",
                       "--input", "")
    assert code == 0 and "vertices=12288" in out and "oracle=match" in out


def test_short_tape_is_a_config_error(capsys):
    code, _, err = run(capsys, "trace", "--input", "1", "--tau", "3")
    assert code == 1 and "raise --tau" in err


def test_output_is_deterministic(capsys):
    a = run(capsys, "trace", "--machine", "increment")
    b = run(capsys, "trace", "--machine", "increment")
    assert a == b


def test_train(capsys, tmp_path):
    rep = tmp_path / "report.json"
    code, out, _ = run(capsys, "train", "--codec", "mantissa-exponent", "--m-q", "3", "--n-q", "2",
                       "--out", str(rep))
    assert code == 0
    assert "steps = k_t+1: true; F == f_TM(x,y)(x): true" in out
    js = json.loads(rep.read_text())
    assert js["s_init_flips"] == [1] and js["s_net_flips"] == [js["steps"]]


def test_train_labels_size(capsys):
    code, _, err = run(capsys, "train", "--dataset", '{"x": [[1.0]], "y": [[1.0, 1.0]], "eps": 3}')
    assert code == 1 and "labels-size violation" in err


def test_config_file_overrides(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"construction": "internal", "input": "1011"}))
    code, out, _ = run(capsys, "trace", "--input", "11", "--config", str(cfg))
    assert code == 0 and "copy 1011: steps=5" in out and "vertices=" in out


def test_config_errors(capsys, tmp_path):
    assert run(capsys, "trace", "--machine", "nope.json")[0] == 1
    assert run(capsys, "trace", "--input", "12")[0] == 1
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert run(capsys, "trace", "--config", str(cfg))[0] == 1


def test_verify_rejects_b16(capsys):
    code, out, _ = run(capsys, "verify", "--b", "16")
    assert code == 1 and "halting-separation" in out


def test_corpus_table():
    rows = corpus_table().splitlines()
    assert rows[0].split()[:5] == ["machine", "|Q|", "d", "tau", "k_t"]
    assert len(rows) == 1 + 3 + 4 + 3
    assert rows[1].split()[:5] == ["copy", "3", "2", "6", "3"]
