import pytest

from peginhole import config
from peginhole.config import ConfigError, RunConfig


def write(tmp_path, text):
    p = tmp_path / "run.yaml"
    p.write_text(text)
    return p


def test_defaults_without_file():
    cfg = config.load(None, environ={})
    assert cfg == RunConfig()
    assert cfg.stage2.d0_mm == 3.0 and cfg.stage2.grid_c_mm == 5.0


def test_round_trip(tmp_path):
    cfg = config.load(write(tmp_path, "seed: 4\nhp:\n  alpha: 0.02\n  batch: 32\nsim:\n  friction_mu: 0.25\n"), environ={})
    assert cfg.seed == 4 and cfg.hp.alpha == 0.02 and cfg.hp.batch == 32 and cfg.sim.friction_mu == 0.25
    config.save(cfg, tmp_path / "back.yaml")
    assert config.load(tmp_path / "back.yaml", environ={}) == cfg


@pytest.mark.parametrize("text,line,key", [
    ("seed: 1\nhp:\n  alpha: fast\n", 3, "hp.alpha"),
    ("seed: 1\n\nhp:\n  gama: 0.9\n", 4, "hp.gama"),
    ("seed: 1\nbogus: 2\n", 2, "bogus"),
    ("hp:\n  batch: 10\n  replay_capacity: 5\n", 3, "hp.replay_capacity"),
    ("stage1:\n  d0_mm: 12.0\n", 2, "stage1.d0_mm"),
    ("threaded: yes please\n", 1, "threaded"),
    ("transport: carrier-pigeon\n", 1, "transport"),
])
def test_errors_name_file_and_line(tmp_path, text, line, key):
    path = write(tmp_path, text)
    with pytest.raises(ConfigError) as ei:
        config.load(path, environ={})
    msg = str(ei.value)
    assert msg.startswith(f"{path}:{line}:"), msg
    assert key in msg


def test_bad_yaml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match=r"run.yaml:\d+: not valid YAML"):
        config.load(write(tmp_path, "seed: 1\nhp: [unclosed\n"), environ={})
    with pytest.raises(ConfigError, match="no such config file"):
        config.load(tmp_path / "nope.yaml", environ={})
    with pytest.raises(ConfigError, match=":1: top level"):
        config.load(write(tmp_path, "- 1\n- 2\n"), environ={})


def test_environment_overrides(tmp_path):
    env = {"PEGINHOLE_SEED": "9", "PEGINHOLE_HP__ALPHA": "0.05", "PEGINHOLE_SIM__FRICTION_MU": "0.3",
           "PEGINHOLE_BIND": "0.0.0.0:1", "OTHER": "x"}
    cfg = config.load(write(tmp_path, "seed: 1\nhp:\n  batch: 16\n"), environ=env)
    assert cfg.seed == 9 and cfg.hp.alpha == 0.05 and cfg.hp.batch == 16 and cfg.sim.friction_mu == 0.3


def test_bad_environment_override_is_reported():
    with pytest.raises(ConfigError, match="hp.alpha"):
        config.load(None, environ={"PEGINHOLE_HP__ALPHA": "abc"})


def test_insertion_hp_inherits_from_hp(tmp_path):
    cfg = config.load(write(tmp_path, "hp:\n  gamma: 0.8\ninsertion_hp:\n  alpha: 0.004\n"), environ={})
    assert cfg.insertion_hp.gamma == 0.8 and cfg.insertion_hp.alpha == 0.004
    cur = cfg.curriculum()
    assert cur.insertion_hp is cfg.insertion_hp and cur.seed == cfg.seed


def test_phase_ranges_become_tuples(tmp_path):
    cfg = config.load(write(tmp_path, "insertion:\n  clearance_um: [10, 20]\n  tilt_deg: 1.0\n"), environ={})
    assert cfg.insertion.clearance_um == (10.0, 20.0)
    assert cfg.insertion.tilt_deg == (1.0, 1.0)
