from pathlib import Path

import pytest

from opbench.config import default_config, load_config, parse_config
from opbench.grf import Kernel

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize("name", ["ode", "diffusion", "burgers", "ode_desk", "diffusion_desk", "burgers_desk"])
def test_shipped_configs_parse(name):
    cfg = load_config(CONFIGS / f"{name}.cfg")
    assert cfg.problem == name.split("_")[0]
    assert len(cfg.hash()) == 16


def test_full_scale_configs_match_defaults():
    # the shipped files spell out solver constants and sweeps; everything else is the default
    for problem in ("ode", "diffusion", "burgers"):
        a, b = load_config(CONFIGS / f"{problem}.cfg").to_dict(), default_config(problem).to_dict()
        for key in ("data", "arch", "train", "baseline"):
            assert a[key] == b[key]


def test_full_scale_sizes():
    ode = load_config(CONFIGS / "ode.cfg")
    assert (ode.n_train, ode.data.n_test, ode.train.iterations) == (150, 1000, 10_000)
    assert ode.arch.branch == [100, 40, 40] and ode.arch.trunk == [1, 40, 40]
    diff = load_config(CONFIGS / "diffusion.cfg")
    assert diff.n_train * diff.data.n_queries == 100_000
    diff.full = True
    assert diff.n_train * diff.data.n_queries == 1_000_000
    burg = load_config(CONFIGS / "burgers.cfg")
    assert burg.data.grf.kernel is Kernel.PERIODIC_RBF and burg.data.grf.domain == (0.0, 10.0)
    assert burg.train.iterations == 50_000
    assert burg.sweep_widths == [20, 40, 60, 80]


def test_full_changes_hash():
    a = default_config("diffusion")
    b = default_config("diffusion")
    b.full = True
    assert a.hash() != b.hash() and a.data_hash() != b.data_hash()


def test_training_fields_do_not_change_data_hash():
    a = parse_config("[experiment]\nproblem = ode\n")
    b = parse_config("[experiment]\nproblem = ode\n[train]\niterations = 5\n")
    assert a.data_hash() == b.data_hash()
    assert a.hash() != b.hash()


def test_problem_fallback():
    assert parse_config("[train]\niterations = 3\n", problem="burgers").problem == "burgers"
    assert parse_config("").problem == "ode"


def test_overrides():
    cfg = parse_config(
        "[experiment]\nproblem = diffusion\nseed = 9\n[model]\ntrunk = 2 60 40\nstacked = true\n"
        "[solver]\nreaction = 0.1\n[sweep]\niterations = 10, 20\n"
    )
    assert cfg.seed == 9 and cfg.arch.trunk == [2, 60, 40] and cfg.arch.stacked
    assert cfg.solver == {"reaction": 0.1}
    assert cfg.sweep_iterations == [10, 20]
    assert cfg.train_config().seed == 9


def test_bad_problem():
    with pytest.raises(ValueError):
        parse_config("[experiment]\nproblem = heat\n")


def test_bad_value():
    with pytest.raises(ValueError):
        parse_config("[train]\niterations = many\n")
