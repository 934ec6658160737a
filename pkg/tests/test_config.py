import pytest
from hypothesis import given, strategies as st

from edgefuse.bench import RunConfig, format_branches, parse_branches
from edgefuse.config import ConfigError, from_kv, parse_kv, read_kv, to_kv
from edgefuse.train import TrainConfig


def test_parse_comments_and_blanks():
    text = "# header\nmode = anc\n\nbudget = 0.5  # trailing\n"
    assert parse_kv(text) == {"mode": "anc", "budget": "0.5"}


@pytest.mark.parametrize("text,msg", [("mode anc", "expected"), ("a = 1\na = 2", "duplicate"), (" = 3", "empty")])
def test_parse_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_kv(text)


def test_typed_coercion():
    cfg = from_kv(RunConfig, {"mode": "sttf", "synth": "tiny", "seed": "0x10", "tau": "0.8",
                              "fusion_policy": "yes", "prompt": "1, 2,3", "stream": "none"})
    assert cfg.seed == 16 and cfg.tau == 0.8 and cfg.fusion_policy is True
    assert cfg.prompt == (1, 2, 3) and cfg.stream is None


def test_unknown_key_and_bad_value():
    with pytest.raises(ConfigError, match="unknown"):
        from_kv(RunConfig, {"colour": "red"})
    with pytest.raises(ConfigError, match="seed"):
        from_kv(RunConfig, {"seed": "many"})
    with pytest.raises(ConfigError):
        from_kv(TrainConfig, {"lr": "-1"})


def test_roundtrip_through_text(tmp_path):
    cfg = TrainConfig(steps=7, lambda1=0.1, task="echo")
    p = tmp_path / "t.cfg"
    p.write_text(to_kv(cfg))
    assert from_kv(TrainConfig, read_kv(p)) == cfg


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        read_kv("/nonexistent/x.cfg")


@given(st.lists(st.tuples(st.text("abcdefghij", min_size=1, max_size=5), st.integers(1, 32),
                          st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=4))
def test_branch_spec_roundtrip(items):
    text = ",".join(f"{n}:{k * h}:{d}:{h}" for n, k, d, h in items)
    assert format_branches(parse_branches(text)) == text


@pytest.mark.parametrize("text", ["tiny:12:1", "tiny:x:1:2"])
def test_bad_branch_spec(text):
    with pytest.raises(ConfigError):
        parse_branches(text)


@pytest.mark.parametrize("kw", [dict(), dict(synth="tiny", stream="a.evs"), dict(synth="tiny", mode="fast"),
                                dict(synth="nope"), dict(synth="tiny", rgb="x.npy"), dict(synth="tiny", budget=2.0),
                                dict(synth="tiny", mode="anc", fusion_policy=True)])
def test_run_config_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw).validate()
