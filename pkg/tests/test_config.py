import pytest

from aubrylab.config import RunConfig, load_config, parse_config, serialize_config
from aubrylab.errors import ConfigError
from aubrylab.torus import CohomologyClass, FieldSpec, FourierMode

MINIMAL = """
metric = "zero"
cohomology = [[1.0, 0.0]]
[grid]
n = 16
[stencil]
radius = 2
"""


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert (cfg.grid_n, cfg.radius) == (16, 2)
    assert cfg.metric == FieldSpec()
    assert cfg.classes() == [CohomologyClass(1.0, 0.0)]
    assert cfg.tolerances.bisection == 1e-9 and cfg.tolerances.max_count == 64
    assert cfg.tolerances.cycle is None and cfg.tolerances.aubry is None
    assert cfg.experiment.trials == 0 and cfg.output_dir == "results"
    assert cfg.metric_instances() == [("base", FieldSpec())]


def test_default_class_grid_when_absent():
    cfg = parse_config("[grid]\nn = 8\n[stencil]\nradius = 1\n")
    assert len(cfg.classes()) == 49


@pytest.mark.parametrize("text,field", [
    (MINIMAL + "[tolerances]\nbisection = -1e-9\n", "tolerances.bisection"),
    (MINIMAL + "[tolerances]\ncycle = 0.0\n", "tolerances.cycle"),
    (MINIMAL.replace("n = 16", "n = 3"), "grid.n"),
    (MINIMAL.replace("radius = 2", "radius = 0"), "stencil.radius"),
    (MINIMAL + "[experiment]\ntrials = 4\n", "experiment.seed"),
    (MINIMAL + "[grid2]\nn = 1\n", "grid2"),
    (MINIMAL.replace("[stencil]", "[stencil]\nshape = 'disc'"), "stencil.shape"),
    ("[grid]\nn = 16\n", "stencil.radius"),
    (MINIMAL.replace('metric = "zero"', 'metric = {modes = [{k1 = 0, k2 = 1, amp = 0.1}]}'), "metric.modes[0].amp"),
])
def test_validation_names_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field
    assert info.value.as_record()["field"] == field


def test_duplicate_key_is_parse_error():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "[tolerances]\nbisection = 1e-9\nbisection = 1e-8\n")
    record = info.value.as_record()
    assert record["error"] == "config" and record["line"] is not None


def test_round_trip_and_hash_stability():
    cfg = RunConfig(
        grid_n=24, radius=3, metric=FieldSpec(modes=(FourierMode(0, 1, 0.1),)),
        cohomology=(CohomologyClass(1, 0), CohomologyClass(0.5, -0.5)),
        instances=(("a", FieldSpec()), ("b", FieldSpec(modes=(FourierMode(0, 2, 0.1, kind="cos"),)))),
    )
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()
    # keys after a table header belong to it, so put the top-level keys first
    reordered = 'metric = "zero"\ncohomology = [[1.0, 0.0]]\n[stencil]\nradius = 2\n[grid]\nn = 16\n'
    assert parse_config(reordered).config_hash() == parse_config(MINIMAL).config_hash()
    assert parse_config(MINIMAL + "[tolerances]\nbisection = 1e-8\n").config_hash() != cfg.config_hash()


def test_overrides_are_validated():
    cfg = parse_config(MINIMAL)
    assert cfg.with_overrides(seed=3, grid_n=32, radius=3).grid_n == 32
    with pytest.raises(ConfigError):
        cfg.with_overrides(grid_n=2)


def test_load_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(MINIMAL)
    assert load_config(path) == parse_config(MINIMAL)
