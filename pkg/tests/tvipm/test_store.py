import json

from sqlalchemy import create_engine, inspect

from tvipm.store import RunRecord, SampleRecord, StoreMixin, record_run


def _record(**overrides):
    kwargs = dict(
        scenario="tvqp",
        mode="barrier",
        preset="paper",
        seed=None,
        rng_name=None,
        config={"integrator.tau": "0.1"},
        status="ok",
        exit_code=0,
        rows=[{"t": 0.0, "x1": -2.0}, {"t": 0.1, "x1": -1.9}],
    )
    kwargs.update(overrides)
    return record_run(**kwargs)


def test_record_run(database):
    run = _record()
    assert run is not None
    assert run.id == 1
    assert run.sample_count == 2
    assert json.loads(run.config) == {"integrator.tau": "0.1"}

    samples = SampleRecord.store_list_all()
    assert [sample.t for sample in samples] == [0.0, 0.1]
    assert json.loads(samples[1].payload) == {"t": 0.1, "x1": -1.9}
    assert all(sample.run_id == run.id for sample in samples)


def test_list_all_filters(database):
    _record()
    _record(scenario="l1ls", mode="compare", seed=3, rng_name="PCG64", rows=[])
    _record(status="NotConverged", exit_code=3)

    assert len(RunRecord.store_list_all()) == 3
    l1ls = RunRecord.store_list_all(filter_by={"scenario": "l1ls"})
    assert [(run.seed, run.rng_name, run.sample_count) for run in l1ls] == [
        (3, "PCG64", 0)
    ]
    failed = RunRecord.store_list_all(filter_by={"exit_code": 3})
    assert [run.status for run in failed] == ["NotConverged"]


def test_rejected_rows_return_none(database):
    assert SampleRecord._store_create(run_id=None, index=0) is None
    assert _record(status=None) is None
    assert RunRecord.store_list_all() == []


def test_second_initialize_keeps_first_engine(database, tmp_path):
    other = create_engine(f"sqlite:///{tmp_path / 'other.sqlite'}")
    StoreMixin.store_initialize(other)
    _record()
    assert len(RunRecord.store_list_all()) == 1
    assert not inspect(other).has_table("run_record")
    other.dispose()


def test_close_allows_rebinding(database, tmp_path):
    _record()
    StoreMixin.store_close()
    StoreMixin.store_initialize(create_engine(f"sqlite:///{tmp_path / 'new.sqlite'}"))
    assert RunRecord.store_list_all() == []
