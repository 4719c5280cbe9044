from __future__ import annotations

import pathlib

import pytest

from instability_atlas.error import IntegrityError, InvalidIdError
from instability_atlas.store import RunStore, record_id

INPUTS = {"family": "standard", "params": {"k": 1.0}, "p": 0, "q": 1}


def test_put_and_get(store: RunStore) -> None:
    payload = {"points": [[0.5, 0.0]], "residue": -0.25}
    id_ = store.put("find_all_pq", INPUTS, payload, seed=3)
    assert id_ == record_id("find_all_pq", INPUTS)
    assert id_ in store

    record = store.get(id_)
    assert record is not None
    assert record.payload == payload
    assert record.op == "find_all_pq"
    assert record.seed == 3
    assert record.family == "standard"


def test_records_survive_reopening(tmp_path: pathlib.Path) -> None:
    with RunStore(tmp_path) as store:
        id_ = store.put("find_all_pq", INPUTS, [1.5, 2.5])
    with RunStore(tmp_path) as store:
        record = store.get(id_)
    assert record is not None
    assert record.payload == [1.5, 2.5]


def test_identical_runs_are_stored_once(store: RunStore) -> None:
    first = store.put("find_all_pq", INPUTS, [1])
    second = store.put("find_all_pq", dict(reversed(INPUTS.items())), [2])
    assert first == second
    lines = (store.path / "standard.jsonl").read_text().splitlines()
    assert len(lines) == 1
    record = store.get(first)
    assert record is not None
    assert record.payload == [1]


def test_different_inputs_get_different_ids(store: RunStore) -> None:
    assert store.put("find_all_pq", INPUTS, []) != store.put("find_all_pq", {**INPUTS, "q": 2}, [])
    assert store.put("find_all_pq", INPUTS, []) != store.put("classify", INPUTS, [])


def test_corrupted_record(tmp_path: pathlib.Path) -> None:
    with RunStore(tmp_path) as store:
        broken = store.put("find_all_pq", INPUTS, {"value": 1})
        intact = store.put("find_all_pq", {**INPUTS, "q": 2}, {"value": 1})

    file = tmp_path / "standard.jsonl"
    lines = file.read_text().splitlines(keepends=True)
    lines[0] = lines[0].replace('"value":1', '"value":2')
    file.write_text("".join(lines))

    with RunStore(tmp_path) as store:
        with pytest.raises(IntegrityError):
            store.get(broken)
        record = store.get(intact)
        assert record is not None
        assert record.payload == {"value": 1}


def test_truncated_line_is_an_integrity_error(tmp_path: pathlib.Path) -> None:
    with RunStore(tmp_path) as store:
        id_ = store.put("find_all_pq", INPUTS, {"value": 1})
    file = tmp_path / "standard.jsonl"
    file.write_text(file.read_text()[:-20] + "\n")

    with RunStore(tmp_path) as store:
        assert id_ in store
        with pytest.raises(IntegrityError):
            store.get(id_)
        assert store.lookup("find_all_pq", INPUTS) is None


def test_unknown_and_invalid_ids(store: RunStore) -> None:
    assert store.get("0" * 64) is None
    with pytest.raises(InvalidIdError):
        store.get("not-an-id")
    with pytest.raises(InvalidIdError):
        store.get("A" * 64)


def test_query(store: RunStore) -> None:
    first = store.put("orbit", {"family": "standard", "params": {"k": 1.0}, "orbit_id": "a"}, {})
    store.put("orbit", {"family": "standard", "params": {"k": 2.0}, "orbit_id": "a"}, {})
    store.put("branch", {"family": "standard", "params": {"k": 1.0}, "orbit_id": "a"}, {})
    store.put("orbit", {"family": "nontwist", "params": {"k": 1.0}, "orbit_id": "a"}, {})
    second = store.put("orbit", {"family": "standard", "params": {"k": 1.0}, "orbit_id": "b"}, {})

    assert store.query("standard", {"k": 1.0}, "orbit") == [first, second]
    assert store.query("standard", {"k": 3.0}, "orbit") == []
    assert (store.path / "nontwist.jsonl").exists()


def test_cached_computes_once(store: RunStore) -> None:
    calls = []

    def compute() -> list[float]:
        calls.append(1)
        return [0.25]

    first = store.cached("find_all_pq", INPUTS, compute)
    second = store.cached("find_all_pq", INPUTS, compute)
    assert first == second
    assert first[1] == [0.25]
    assert len(calls) == 1


def test_cached_replaces_corrupted_record(tmp_path: pathlib.Path) -> None:
    with RunStore(tmp_path) as store:
        store.put("find_all_pq", INPUTS, {"value": 1})
    file = tmp_path / "standard.jsonl"
    file.write_text(file.read_text().replace('"value":1', '"value":2'))

    with RunStore(tmp_path) as store:
        id_, payload = store.cached("find_all_pq", INPUTS, lambda: {"value": 3})
        assert payload == {"value": 3}
        record = store.get(id_)
        assert record is not None
        assert record.payload == {"value": 3}
    assert len(file.read_text().splitlines()) == 2


def test_missing_directory_is_created_on_write(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "nested" / "store"
    with RunStore(path) as store:
        assert store.get("0" * 64) is None
        store.put("find_all_pq", INPUTS, [])
    assert (path / "standard.jsonl").exists()
