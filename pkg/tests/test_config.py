from pathlib import Path

import pytest

from ncdlab.config import ConfigError, ExperimentConfig, load_config, parse_config
from ncdlab.model import PRESETS

REFERENCE = Path(__file__).resolve().parents[1] / "configs" / "reference.ini"


def test_reference_file_equals_defaults():
    assert load_config(REFERENCE) == ExperimentConfig()


def test_round_trip_through_text():
    cfg = parse_config("[data]\np_u = 1/2, 1/8, 1/8, 1/8, 1/8\n[train]\nseed = 9\nbatch_unlabeled = 64\n")
    assert parse_config(cfg.to_text()) == cfg
    assert cfg.data.p_u == (0.5, 0.125, 0.125, 0.125, 0.125)


def test_empty_text_gives_defaults():
    assert parse_config("") == ExperimentConfig()


def test_digest_tracks_content():
    a = ExperimentConfig()
    assert a.digest() == ExperimentConfig().digest()
    assert a.digest() != a.with_seed(5).digest()


@pytest.mark.parametrize(
    "text, field",
    [
        ("[data]\np_u = 0.3, 0.3, 0.3\n", "data.p_u"),
        ("[data]\np_u = 0.5, 0.5, 0\n", "data.p_u"),
        ("[train]\nbatch_unlabeled = 29\n", "train.batch_unlabeled"),
        ("[data]\nwidth = 3\n", "data.width"),
        ("[data]\ndim = eight\n", "data.dim"),
        ("[augment]\nkind = medium\n", "augment.kind"),
        ("[bogus]\nx = 1\n", "bogus"),
    ],
)
def test_invalid_configs_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field
    assert field in str(info.value)


def test_batch_floor_is_exactly_ten_u():
    parse_config("[train]\nbatch_unlabeled = 30\n")
    with pytest.raises(ConfigError, match="10 x U"):
        parse_config("[train]\nbatch_unlabeled = 29\n")


def test_hidden_accepts_preset_names():
    assert parse_config("[net]\nhidden = deep\n").net.hidden == PRESETS["deep"]


def test_weak_augment_section():
    cfg = parse_config("[augment]\nkind = weak\nnoise = 0.2\n")
    assert cfg.augment.kind == "weak" and cfg.augment.noise == 0.2


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/ncdlab.ini")
