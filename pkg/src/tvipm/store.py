"""
SQLite run registry.

Every ``tvipm run --store PATH`` adds one :class:`RunRecord` and one
:class:`SampleRecord` per output row. Nothing is read back into a
computation.
"""
import json
import logging
from datetime import datetime
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional

from sqlalchemy import (
    Column,
    DateTime,
    Float,
    ForeignKey,
    Integer,
    String,
    Text,
    create_engine,
)
from sqlalchemy.engine import Engine
from sqlalchemy.exc import IntegrityError
from sqlalchemy.orm import DeclarativeBase, relationship, sessionmaker


class Base(DeclarativeBase):
    pass


class DeclarativeBaseWithId(DeclarativeBase):
    id: Column


if TYPE_CHECKING:
    mixin_parent = DeclarativeBaseWithId
else:
    mixin_parent = object


def _pretty_class_name(cls) -> str:
    return " ".join(cls.__tablename__.split("_")).title()


class StoreMixin(mixin_parent):
    """
    Session handling shared by the store models.
    """

    @classmethod
    def store_initialize(cls, engine: Engine):
        """
        Binds the models to ``engine`` and creates missing tables. Must be
        called before any other method.
        """
        if cls._store_is_initialized():
            logging.warning(
                f"StoreMixin.store_initialize called multiple times for {cls.__name__}"
            )
            return
        Base.metadata.create_all(engine)
        cls._sessions = sessionmaker(engine, expire_on_commit=False)

    @classmethod
    def store_close(cls):
        """
        Disposes the bound engine so the store can be initialized again.
        """
        if cls._store_is_initialized():
            cls._sessions.kw["bind"].dispose()
        StoreMixin._sessions = None

    @classmethod
    def _store_is_initialized(cls) -> bool:
        return getattr(cls, "_sessions", None) is not None

    @classmethod
    def store_get_sessions(cls) -> sessionmaker:
        assert cls._store_is_initialized(), "call store_initialize first"
        return cls._sessions

    @classmethod
    def store_list_all(cls, filter_by: Optional[dict] = None) -> list:
        """
        Returns all objects of this class, ordered by id.

        :param filter_by: A dictionary of keyword arguments to filter by.
        """
        filter_by = filter_by or {}
        with cls.store_get_sessions()() as session:
            return session.query(cls).order_by(cls.id).filter_by(**filter_by).all()

    @classmethod
    def _store_create(cls, **kwargs) -> Optional[Any]:
        """
        Creates a new object of this class; returns it, or ``None`` when the
        database rejects it.
        """
        obj = cls(**kwargs)
        session = cls.store_get_sessions()()
        try:
            with session.begin():
                session.add(obj)
        except IntegrityError as e:
            logging.exception(f"Error creating {_pretty_class_name(cls)}: {e.orig}")
            return None
        else:
            logging.info(f"{_pretty_class_name(cls)} {obj.id} added")
            return obj
        finally:
            session.close()

    @classmethod
    def _store_create_all(cls, rows: Iterable[Dict[str, Any]]) -> int:
        """
        Creates one object per keyword dictionary in a single transaction.
        """
        objects = [cls(**row) for row in rows]
        session = cls.store_get_sessions()()
        try:
            with session.begin():
                session.add_all(objects)
        except IntegrityError as e:
            logging.exception(
                f"Error creating {_pretty_class_name(cls)} rows: {e.orig}"
            )
            return 0
        finally:
            session.close()
        return len(objects)


class RunRecord(Base, StoreMixin):
    __tablename__ = "run_record"

    id = Column(Integer, primary_key=True)
    created = Column(DateTime, default=datetime.now)
    scenario = Column(String, nullable=False)
    mode = Column(String)
    preset = Column(String)
    seed = Column(Integer)
    rng_name = Column(String)
    config = Column(Text)
    status = Column(String, nullable=False)
    exit_code = Column(Integer, nullable=False)
    sample_count = Column(Integer, default=0)

    samples = relationship("SampleRecord", back_populates="run")


class SampleRecord(Base, StoreMixin):
    __tablename__ = "sample_record"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("run_record.id"), nullable=False)
    index = Column(Integer, nullable=False)
    t = Column(Float)
    payload = Column(Text)

    run = relationship("RunRecord", back_populates="samples")


def open_store(path) -> Engine:
    engine = create_engine(f"sqlite:///{path}")
    StoreMixin.store_initialize(engine)
    return engine


def record_run(
    *,
    scenario: str,
    mode: Optional[str],
    preset: Optional[str],
    seed: Optional[int],
    rng_name: Optional[str],
    config: Dict[str, Any],
    status: str,
    exit_code: int,
    rows: List[Dict[str, Any]],
) -> Optional[RunRecord]:
    """
    Stores one run and its output rows. ``rows`` are the CSV rows as
    dictionaries; each must carry a ``t`` entry.
    """
    run = RunRecord._store_create(
        scenario=scenario,
        mode=mode,
        preset=preset,
        seed=seed,
        rng_name=rng_name,
        config=json.dumps(config, sort_keys=True),
        status=status,
        exit_code=exit_code,
        sample_count=len(rows),
    )
    if run is None:
        return None
    SampleRecord._store_create_all(
        {"run_id": run.id, "index": i, "t": row.get("t"), "payload": json.dumps(row)}
        for i, row in enumerate(rows)
    )
    return run
