import pytest

from fairplan.generator import GeneratorConfig, generate
from fairplan.model import duration, dump_context, dump_orders_csv, load_instance


def test_same_seed_same_instance():
    a = generate(GeneratorConfig(seed=0))
    b = generate(GeneratorConfig(seed=0))
    assert a.batches == b.batches
    assert a.workers == b.workers
    assert dump_context(a) == dump_context(b)


def test_different_seeds_differ():
    a = generate(GeneratorConfig(seed=1))
    b = generate(GeneratorConfig(seed=2))
    assert dump_context(a) != dump_context(b)


def test_demo_scale_config():
    config = GeneratorConfig(
        seed=3, n_batches=(8, 8), n_lines=(3, 3), n_workers=(43, 43), lines_per_batch=(1, 1)
    )
    instance = generate(config)
    assert len(instance.batches) == 8
    assert len(instance.lines) == 3
    assert len(instance.workers) == 43


@pytest.mark.parametrize("seed", range(60))
def test_generated_instances_pass_validation(seed):
    instance = generate(GeneratorConfig(seed=seed))
    reloaded = load_instance(dump_orders_csv(instance), dump_context(instance))
    assert reloaded.batches == instance.batches
    assert reloaded.workers == instance.workers


@pytest.mark.parametrize("seed", range(30))
def test_due_dates_cover_fastest_duration(seed):
    instance = generate(GeneratorConfig(seed=seed))
    for batch in instance.batches:
        fastest = min(duration(batch, lid) for lid in batch.options)
        assert batch.due_date >= fastest


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(n_batches=(5, 2))
    with pytest.raises(ValueError):
        GeneratorConfig(priority_probability=1.5)
    with pytest.raises(ValueError):
        GeneratorConfig(due_tightness=(0.5, 2.0))
