import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahdenv.domains import DOMAINS
from ahdenv.instancegen import (
    DESIGN,
    SPLITS,
    VALIDATION,
    DatasetSchemaError,
    InvalidSizeError,
    dataset_checksum,
    dataset_filename,
    dataset_path,
    dumps_dataset,
    file_checksum,
    generate,
    generate_cvrp,
    generate_mkp,
    generate_op,
    generate_ovrp,
    generate_tsp,
    load_dataset,
    loads_dataset,
    op_max_length,
    op_prizes,
    save_dataset,
    standard_split,
)

from conftest import GOLDEN


@pytest.mark.parametrize("domain", sorted(DOMAINS))
def test_generation_is_deterministic(domain):
    n = 12 if domain == "mkp_aco" else 10
    a, b = generate(domain, n, 3, 5), generate(domain, n, 3, 5)
    assert dumps_dataset(a) == dumps_dataset(b)
    assert dumps_dataset(a) != dumps_dataset(generate(domain, n, 3, 6))


@pytest.mark.parametrize("domain", sorted(DOMAINS))
def test_golden_files_match_the_generator(domain):
    checksums = json.loads((GOLDEN / "checksums.json").read_text())
    n = 12 if domain == "mkp_aco" else 10
    ds = generate(domain, n, 2, 7)
    name = f"{domain}_{dataset_filename(ds)}"
    assert file_checksum(GOLDEN / name) == checksums[name]
    assert load_dataset(GOLDEN / name) == ds


def test_instance_prefix_is_stable_under_count():
    # instance k depends only on (seed, role, k), not on how many instances are drawn
    small, big = generate_tsp(20, 2, 3), generate_tsp(20, 5, 3)
    for a, b in zip(small, big):
        assert np.array_equal(a.coordinates, b.coordinates)


def test_design_and_validation_streams_differ():
    d = generate_tsp(20, 1, 3, role=DESIGN)[0]
    v = generate_tsp(20, 1, 3, role=VALIDATION)[0]
    assert not np.array_equal(d.coordinates, v.coordinates)


def test_tsp_shapes_and_range():
    inst = generate_tsp(30, 1, 0)[0]
    assert inst.coordinates.shape == (30, 2)
    assert np.all((inst.coordinates >= 0) & (inst.coordinates < 1))
    assert np.allclose(inst.distances, inst.distances.T)
    assert np.all(np.diag(inst.distances) == 0)


def test_cvrp_variants():
    c = generate_cvrp(20, 2, 1)[0]
    assert c.coordinates.shape == (21, 2) and c.capacity == 40
    assert c.demands[0] == 0 and np.all((c.demands[1:] >= 1) & (c.demands[1:] <= 9))
    a = generate_cvrp(20, 2, 1, variant="aco", domain="cvrp_aco")[0]
    assert a.capacity == 50 and np.array_equal(a.coordinates[0], [0.5, 0.5])
    o = generate_ovrp(20, 2, 1)[0]
    assert o.capacity == 40 and np.array_equal(o.coordinates, c.coordinates)


def test_op_prizes_and_budget():
    inst = generate_op(50, 1, 2)[0]
    prizes = inst.prizes
    assert prizes.max() == 1.0 and prizes[1:].min() >= 0.01
    assert np.allclose(prizes * 100, np.round(prizes * 100))
    assert inst.max_length == 3.0
    coords = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 4.0], [0.3, 0.4]])
    assert list(op_prizes(coords)) == [0.01, 0.01, 1.0, 0.1]
    assert op_max_length(51) == 4.0 and op_max_length(300) == 6.0
    with pytest.raises(InvalidSizeError):
        op_max_length(301)


def test_mkp_is_normalized_and_nontrivial():
    inst = generate_mkp(40, 1, 3)[0]
    assert inst.weights.shape == (40, 5) and inst.values.shape == (40,)
    assert np.all(inst.capacities == 1.0)
    col = inst.weights.sum(axis=0)
    assert np.all(col >= 1.0 - 1e-12)  # taking every item is never feasible
    assert np.all(inst.weights <= 1.0 + 1e-12)  # every single item fits
    # with 40 items the largest-weight guard is inactive, so each column sums to 1 / tightness
    assert col == pytest.approx(np.full(5, 2.0), abs=1e-12)


@pytest.mark.parametrize("domain,n", [("tsp_c", 2), ("cvrp_c", 0), ("op_aco", 2), ("mkp_aco", 0)])
def test_invalid_sizes_are_rejected(domain, n):
    with pytest.raises(InvalidSizeError):
        generate(domain, n, 1, 0)


def test_count_and_role_are_validated():
    with pytest.raises(ValueError):
        generate_tsp(10, 0, 0)
    with pytest.raises(ValueError):
        generate_tsp(10, 1, 0, role="train")


@settings(max_examples=20, deadline=None)
@given(domain=st.sampled_from(sorted(DOMAINS)), n=st.integers(6, 15), seed=st.integers(0, 10**6))
def test_serialization_round_trip(domain, n, seed):
    ds = generate(domain, n, 2, seed)
    back = loads_dataset(dumps_dataset(ds))
    assert back == ds and dataset_checksum(back) == dataset_checksum(ds)
    for a, b in zip(ds, back):
        assert a.id == b.id


def test_truncated_file_is_an_error(tmp_path):
    path = save_dataset(generate_tsp(10, 3, 0), tmp_path / "d.jsonl")
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:-1]))
    with pytest.raises(DatasetSchemaError):
        load_dataset(path)
    path.write_text('{"schema": "other"}\n')
    with pytest.raises(DatasetSchemaError):
        load_dataset(path)


def test_paths_and_standard_split(tmp_path):
    ds = generate_tsp(10, 1, 4)
    assert dataset_path(tmp_path, ds) == tmp_path / "data" / "tsp_c" / "design_10_4.jsonl"
    design, validation = standard_split("mkp_aco", 0)
    n, count, sizes, vcount = SPLITS["mkp_aco"]
    assert (design.n, design.count) == (n, count)
    assert [v.n for v in validation] == list(sizes) and all(v.count == vcount for v in validation)
    assert all(v.role == VALIDATION for v in validation)
