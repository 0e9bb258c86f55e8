import json
import logging
from pathlib import Path

from peewee import *

from memlab.utils import InvalidInputError

# bound to a file by init_db()
db = SqliteDatabase(None)

STATUSES = ("ok", "failed", "skipped")


class BaseModel(Model):
    class Meta:
        database = db


class Run(BaseModel):
    """One evolution run of a sweep."""

    mode = CharField(max_length=10)
    n = IntegerField()
    delta = FloatField()
    N = IntegerField(column_name="grid_N")  # SQLite column names are case-insensitive; avoid clash with n
    status = CharField(max_length=10)
    exit_code = IntegerField(default=0)
    final_t = FloatField(null=True)
    min_g = FloatField(null=True)
    outputs = TextField(default="[]")
    error = TextField(null=True)

    class Meta:
        database = db
        primary_key = CompositeKey("mode", "n", "delta", "N")

    def __str__(self):
        return f"{self.mode}-n{self.n}-delta{self.delta:g}-N{self.N}"

    @property
    def output_list(self):
        return json.loads(self.outputs)

    def as_summary(self):
        entry = {
            "mode": self.mode,
            "n": self.n,
            "delta": self.delta,
            "N": self.N,
            "status": self.status,
            "exit_code": self.exit_code,
            "final_t": self.final_t,
            "min_g": self.min_g,
            "outputs": self.output_list,
        }
        if self.error:
            entry["error"] = self.error
        return entry


def init_db(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    db.init(str(path))
    db.connect(reuse_if_open=True)
    db.create_tables([Run])
    return db


def close_db():
    if not db.is_closed():
        db.close()


def record_run(mode, n, delta, N, status, exit_code=0, final_t=None, min_g=None, outputs=(), error=None):
    """Insert or replace the registry row of a run."""
    if status not in STATUSES:
        raise InvalidInputError(f"Unknown run status: {status}")
    Run.replace(
        mode=mode,
        n=n,
        delta=float(delta),
        N=N,
        status=status,
        exit_code=exit_code,
        final_t=final_t,
        min_g=min_g,
        outputs=json.dumps(sorted(str(o) for o in outputs)),
        error=error,
    ).execute()
    logging.info("registry: %s-n%d-delta%g-N%d %s", mode, n, delta, N, status)
    return get_run(mode, n, delta, N)


def get_run(mode, n, delta, N):
    return Run.get_or_none((Run.mode == mode) & (Run.n == n) & (Run.delta == float(delta)) & (Run.N == N))


def is_complete(mode, n, delta, N):
    run = get_run(mode, n, delta, N)
    return run is not None and run.status == "ok"


def sweep_runs(mode, n, N):
    return list(Run.select().where((Run.mode == mode) & (Run.n == n) & (Run.N == N)).order_by(Run.delta))
