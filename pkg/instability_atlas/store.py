from __future__ import annotations

import collections.abc
import contextlib
import dataclasses
import datetime
import fcntl
import hashlib
import json
import logging
import os
import pathlib
import re
import typing as ty

import pydantic

from .error import IntegrityError, InvalidIdError, StoreIoError

__all__ = ["RunStore", "RunRecord", "record_id", "default_data_dir"]

_logger = logging.getLogger(__name__)

DATA_DIR_ENV = "ATLAS_DATA"
RECORD_VERSION = "1"
_ID_PATTERN = re.compile(r"^[0-9a-f]{64}$")
_LINE_ID_PATTERN = re.compile(r'"id"\s*:\s*"([0-9a-f]{64})"')


def default_data_dir() -> pathlib.Path:
    """Store directory taken from ``ATLAS_DATA``, ``./atlas-data`` otherwise"""
    return pathlib.Path(os.environ.get(DATA_DIR_ENV, "atlas-data"))


def canonical_json(value: ty.Any) -> str:
    """Key-sorted compact JSON, floats in their shortest round-trip form"""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), allow_nan=False)


def record_id(op: str, inputs: collections.abc.Mapping[str, ty.Any], ver: str = RECORD_VERSION) -> str:
    """Content id of an operation run

    :param op: Operation name
    :param inputs: Operation inputs, including ``family`` and ``params``
    :param ver: Version tag of the code producing the payload
    :return: sha256 hex digest
    """
    return hashlib.sha256(canonical_json({"op": op, "inputs": inputs, "ver": ver}).encode()).hexdigest()


def payload_sum(payload: ty.Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


class RunRecord(pydantic.BaseModel):
    """One line of a store file"""

    id: str
    op: str
    inputs: dict[str, ty.Any]
    payload: ty.Any
    seed: int | None = None
    ts: str
    ver: str = RECORD_VERSION
    sum: str

    @property
    def family(self) -> str:
        return str(self.inputs.get("family", ""))

    def to_line(self) -> str:
        return canonical_json(self.model_dump()) + "\n"


@dataclasses.dataclass(frozen=True)
class _Entry:
    path: pathlib.Path
    offset: int
    op: str | None
    inputs: dict[str, ty.Any] | None


class RunStore:
    """Append-only JSON-lines store, one file per map family"""

    def __init__(self, path: pathlib.Path | None = None) -> None:
        self._path = path if path is not None else default_data_dir()
        self._index: dict[str, _Entry] = {}

    def __enter__(self) -> RunStore:
        self.open()
        return self

    def __exit__(self, *args: ty.Any) -> None:
        self.close()

    @property
    def path(self) -> pathlib.Path:
        return self._path

    def open(self) -> None:
        """Index all records of the store directory"""
        self._index.clear()
        if not self._path.exists():
            _logger.debug("Store does not exist at '%s', will be created on the first write", self._path)
            return
        try:
            for file in sorted(self._path.glob("*.jsonl")):
                self._index_file(file)
        except OSError as exc:
            raise StoreIoError(f"Cannot read store at '{self._path}': {exc}") from exc
        _logger.debug("Indexed %d records in '%s'", len(self._index), self._path)

    def close(self) -> None:
        self._index.clear()

    def _index_file(self, file: pathlib.Path) -> None:
        offset = 0
        with file.open("rb") as handle:
            for raw in handle:
                line = raw.decode(errors="replace")
                try:
                    record = RunRecord.model_validate_json(line)
                    entry = _Entry(file, offset, record.op, record.inputs)
                    key = record.id
                except pydantic.ValidationError:
                    match = _LINE_ID_PATTERN.search(line)
                    if match is None:
                        _logger.warning("Skipping unreadable line at offset %d of '%s'", offset, file)
                        offset += len(raw)
                        continue
                    key = match.group(1)
                    entry = _Entry(file, offset, None, None)
                    _logger.warning("Corrupted record %s in '%s'", key, file)
                existing = self._index.get(key)
                if existing is None or (existing.op is None and entry.op is not None):
                    self._index[key] = entry
                offset += len(raw)

    def __contains__(self, id_: object) -> bool:
        return id_ in self._index

    def _file(self, family: str) -> pathlib.Path:
        return self._path / f"{family or 'unknown'}.jsonl"

    def put(
        self,
        op: str,
        inputs: collections.abc.Mapping[str, ty.Any],
        payload: ty.Any,
        seed: int | None = None,
    ) -> str:
        """Store the payload of an operation run unless a record with the same id exists

        :return: Id of the record
        :raises StoreIoError: Raised if the store file cannot be written
        """
        inputs = json.loads(canonical_json(inputs))
        id_ = record_id(op, inputs)
        if id_ in self._index:
            _logger.debug("Record %s for '%s' already in store", id_, op)
            return id_

        payload = json.loads(canonical_json(payload))
        record = RunRecord(
            id=id_,
            op=op,
            inputs=inputs,
            payload=payload,
            seed=seed,
            ts=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            sum=payload_sum(payload),
        )
        file = self._file(record.family)
        try:
            self._path.mkdir(parents=True, exist_ok=True)
            with file.open("ab") as handle:
                fcntl.flock(handle, fcntl.LOCK_EX)
                try:
                    handle.seek(0, os.SEEK_END)
                    offset = handle.tell()
                    handle.write(record.to_line().encode())
                    handle.flush()
                finally:
                    fcntl.flock(handle, fcntl.LOCK_UN)
        except OSError as exc:
            raise StoreIoError(f"Cannot write to '{file}': {exc}") from exc
        self._index[id_] = _Entry(file, offset, op, inputs)
        _logger.debug("Stored record %s for '%s'", id_, op)
        return id_

    def get(self, id_: str) -> RunRecord | None:
        """Read a record

        :return: The stored record, or None if the id is unknown
        :raises InvalidIdError: Raised if ``id_`` is not a sha256 hex digest
        :raises IntegrityError: Raised if the stored line is corrupted
        """
        if not _ID_PATTERN.match(id_):
            raise InvalidIdError(f"'{id_}' is not a 64 digit hex id")
        entry = self._index.get(id_)
        if entry is None:
            return None
        try:
            with entry.path.open("rb") as handle:
                handle.seek(entry.offset)
                line = handle.readline().decode(errors="replace")
        except OSError as exc:
            raise StoreIoError(f"Cannot read '{entry.path}': {exc}") from exc
        try:
            record = RunRecord.model_validate_json(line)
        except pydantic.ValidationError as exc:
            raise IntegrityError(f"Record {id_} cannot be decoded") from exc
        if record.id != id_ or record.sum != payload_sum(record.payload):
            raise IntegrityError(f"Record {id_} does not match its checksum")
        return record

    def query(self, family: str, params: collections.abc.Mapping[str, ty.Any], op: str) -> list[str]:
        """Ids of all intact records of an operation for one map, in insertion order"""
        params = json.loads(canonical_json(params))
        return [
            id_
            for id_, entry in self._index.items()
            if entry.op == op
            and entry.inputs is not None
            and entry.inputs.get("family") == family
            and entry.inputs.get("params") == params
        ]

    def lookup(self, op: str, inputs: collections.abc.Mapping[str, ty.Any]) -> RunRecord | None:
        """Intact record of an earlier run with the same inputs, if any"""
        with contextlib.suppress(IntegrityError):
            return self.get(record_id(op, json.loads(canonical_json(inputs))))
        return None

    def cached(
        self,
        op: str,
        inputs: collections.abc.Mapping[str, ty.Any],
        compute: collections.abc.Callable[[], ty.Any],
        seed: int | None = None,
    ) -> tuple[str, ty.Any]:
        """Payload of a stored run, computing and storing it on a miss

        :return: 2-tuple of (id, payload)
        """
        if (record := self.lookup(op, inputs)) is not None:
            _logger.info("Using stored result %s for '%s'", record.id[:12], op)
            return record.id, record.payload
        id_ = record_id(op, json.loads(canonical_json(inputs)))
        payload = compute()
        if id_ in self._index:
            _logger.warning("Replacing corrupted record %s", id_)
            del self._index[id_]
        return self.put(op, inputs, payload, seed=seed), json.loads(canonical_json(payload))
