import logging
import os

import pandas as pd
from sqlalchemy import Boolean, Column, Float, ForeignKey, Integer, String, create_engine
from sqlalchemy.orm import Session, declarative_base

logger = logging.getLogger(__name__)

Base = declarative_base()


class Run(Base):
    __tablename__ = 'runs'
    run_id = Column(Integer, primary_key=True, autoincrement=True)
    scenario = Column(String, nullable=False)
    config_hash = Column(String, nullable=False)
    wall_time = Column(Float)
    passed = Column(Boolean)


class CheckRow(Base):
    __tablename__ = 'checks'
    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('runs.run_id'), nullable=False)
    check = Column(String, nullable=False)
    value = Column(Float)
    tolerance = Column(Float)
    passed = Column(Boolean)
    reason = Column(String)


def init_db(db_path='data/db/phaseflow.db'):
    """Inicializa banco SQLite e retorna engine"""
    os.makedirs(os.path.dirname(db_path) or '.', exist_ok=True)
    engine = create_engine(f'sqlite:///{db_path}', echo=False)
    Base.metadata.create_all(engine)
    return engine


def save_report(engine, report) -> int:
    """Grava o cabeçalho do run e as linhas de check; retorna o run_id"""
    with Session(engine) as session:
        run = Run(scenario=report.name, config_hash=report.config_hash,
                  wall_time=float(report.wall_time), passed=report.passed)
        session.add(run)
        session.commit()
        run_id = run.run_id
    df = report.to_frame().rename(columns={'pass': 'passed'})
    df.insert(0, 'run_id', run_id)
    df.to_sql('checks', engine, if_exists='append', index=False)
    logger.info("[db] run %d com %d checks salvo", run_id, len(df))
    return run_id


def load_reports(db_path='data/db/phaseflow.db') -> pd.DataFrame:
    """Todas as linhas de check com o cabeçalho do run correspondente"""
    if not os.path.exists(db_path):
        raise FileNotFoundError(f"Arquivo não encontrado: {db_path}")
    engine = create_engine(f'sqlite:///{db_path}', echo=False)
    query = ("SELECT r.run_id, r.scenario, r.config_hash, c.\"check\", c.value, c.tolerance, "
             "c.passed, c.reason FROM checks c JOIN runs r ON r.run_id = c.run_id "
             "ORDER BY r.run_id, c.id")
    with engine.connect() as conn:
        return pd.read_sql_query(query, conn)
