import os
import tempfile

import pytest
from sqlalchemy import create_engine

from tvipm.scenarios import build_tvqp
from tvipm.store import Base, StoreMixin
from tests.problems import moving_center, scalar_barrier, sum_equals_time


@pytest.fixture
def database():
    temp_dir = tempfile.mkdtemp()
    db_path = os.path.join(temp_dir, "test.sqlite")
    engine = create_engine(f"sqlite:///{db_path}")
    Base.metadata.create_all(engine)
    StoreMixin.store_initialize(engine)

    yield engine

    # Cleanup
    StoreMixin.store_close()
    try:
        os.remove(db_path)
        os.rmdir(temp_dir)
    except (OSError, FileNotFoundError):
        pass


@pytest.fixture
def tvqp():
    return build_tvqp()


@pytest.fixture
def scalar():
    return scalar_barrier()


@pytest.fixture
def tracking():
    return moving_center()


@pytest.fixture
def sum_constraint():
    return sum_equals_time()
