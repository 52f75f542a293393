import pytest

from piiw.config import ConfigError, ExperimentConfig, config_keys, load_config, parse_config, parse_pairs, parse_seeds


def test_defaults_follow_hyperparameter_table():
    c = ExperimentConfig()
    assert (c.discount_factor, c.batch_size, c.learning_rate, c.clip_grad_norm) == (0.99, 32, 0.0005, 40.0)
    assert (c.rmsprop_decay, c.rmsprop_epsilon, c.tree_budget, c.dataset_size, c.l2_factor) == (0.99, 0.1, 50, 1000, 1e-3)
    assert (c.p_uct, c.dirichlet_alpha, c.noise_factor) == (0.5, 0.03, 0.25)


def test_round_trip_is_stable():
    c = ExperimentConfig(algorithm="alphazero", seeds=(0, 1, 2), stop_avg_return=1.0, record_wall_time=False)
    text = c.serialize()
    again = parse_config(text)
    assert again == c and again.serialize() == text


def test_load_config(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\nmap = maze2\ninteractions = 2e5  # budget\nseeds = 0-4\n")
    c = load_config(path)
    assert c.map == "maze2" and c.interactions == 200000 and c.seeds == (0, 1, 2, 3, 4)


@pytest.mark.parametrize(
    "text",
    [
        "nonsense = 1",
        "learning_rate = fast",
        "interactions = 2.5",
        "algorithm = dqn",
        "tree_budget = 0",
        "discount_factor = 1.5",
        "record_wall_time = maybe",
        "map = maze1\nmap = maze2",
        "just a line",
        " = 3",
        "seeds = 4-1",
    ],
)
def test_invalid_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_parse_pairs_comments():
    assert parse_pairs("a = 1 # x\n\n# only comment\nb=2") == {"a": "1", "b": "2"}


def test_parse_seeds():
    assert parse_seeds("3") == (3,)
    assert parse_seeds("0,2, 5") == (0, 2, 5)
    assert parse_seeds("2-4") == (2, 3, 4)


def test_every_field_is_a_key():
    assert "tree_budget" in config_keys() and len(config_keys()) == len(ExperimentConfig().serialize().splitlines())
