import json

import pytest

from ssl_batchlab import config
from ssl_batchlab.errors import ConfigError


def test_round_trip_defaults():
    d = config.to_dict(config.RunConfig())
    assert config.to_dict(config.from_dict(d)) == d


def test_version_key_required():
    with pytest.raises(ConfigError, match="spec_version"):
        config.from_dict({"name": "x"})
    with pytest.raises(ConfigError):
        config.from_dict({"spec_version": 2})


@pytest.mark.parametrize("bad, key", [
    ({"spec_version": 1, "trian": {}}, "trian"),
    ({"spec_version": 1, "train": {"lr": 0.1}}, "train.lr"),
    ({"spec_version": 1, "train": {"lr0": "fast"}}, "train.lr0"),
    ({"spec_version": 1, "sampler": {"batch_size": 1.5}}, "sampler.batch_size"),
    ({"spec_version": 1, "fixmatch": {"tau": 0.0}}, "fixmatch.tau"),
    ({"spec_version": 1, "data": {"n_labeled": [4, 4]}}, "data.n_labeled"),
])
def test_rejections_name_the_key(bad, key):
    with pytest.raises(ConfigError) as exc:
        config.from_dict(bad)
    assert exc.value.key == key


def test_int_accepted_for_float():
    cfg = config.from_dict({"spec_version": 1, "train": {"lr0": 1}})
    assert cfg.train.lr0 == 1.0 and isinstance(cfg.train.lr0, float)


def test_overrides():
    cfg = config.apply_overrides(config.RunConfig(), [config.parse_override("fixmatch.lambda_s=0"),
                                                      config.parse_override("sampler.mode=explicit")])
    assert cfg.fixmatch.lambda_s == 0.0 and cfg.sampler.mode == "explicit"
    with pytest.raises(ConfigError):
        config.apply_overrides(cfg, [("fixmatch.nope", 1)])
    with pytest.raises(ConfigError):
        config.parse_override("novalue")


@pytest.mark.parametrize("name", config.preset_names())
def test_presets_load(name):
    cfg = config.load(name)
    assert config.to_dict(config.from_dict(json.loads(config.dumps(cfg)))) == config.to_dict(cfg)


def test_presets_exist():
    assert {"moons_implicit", "moons_explicit", "moons_supervised"} <= set(config.preset_names())


def test_load_missing():
    with pytest.raises(ConfigError):
        config.load("no_such_preset")
