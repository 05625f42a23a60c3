import numpy as np
import pytest

from lpqreview.model import (
    DatasetError,
    ObjectivityError,
    Params,
    ReviewDataset,
    apply_objectivity,
    build_monotone_order,
    satisfies_objectivity,
    validate_dataset,
)


def chain():
    return validate_dataset([[1, 2], [3, 4]], [[1, 2], [1, 2]])


def test_chain_order_is_a_chain():
    order = build_monotone_order(chain())
    assert order.num_nodes == 4
    assert order.edges == ((0, 1), (1, 2), (2, 3))
    assert order.cell_node.tolist() == [[0, 1], [2, 3]]
    # closure holds every ordered pair of the chain
    assert len(order.closure_edges()) == 6


def test_equal_vectors_pool_into_one_node():
    ds = validate_dataset([[5, 5], [5, 7]], [[2, 2], [3, 4]])
    order = build_monotone_order(ds)
    assert order.num_nodes == 2
    assert sorted(order.nodes[0]) == [(0, 0), (0, 1), (1, 0)]


def test_incomparable_vectors_have_no_edge():
    scores = np.array([[[0.0, 9.0], [9.0, 0.0]]])
    order = build_monotone_order(validate_dataset(scores, [[1, 2]]))
    assert order.edges == ()


def test_transitive_edges_are_dropped():
    scores = np.array([[[0, 0], [1, 1], [2, 2]]], dtype=float)
    order = build_monotone_order(validate_dataset(scores, [[1, 2, 3]]))
    assert order.edges == ((0, 1), (1, 2))
    assert order.closure[0, 2]


def test_missing_cell_is_rejected():
    with pytest.raises(DatasetError, match="incomplete matrix"):
        validate_dataset([[1, np.nan]], [[1, 2]])


def test_out_of_range_score_is_rejected():
    with pytest.raises(DatasetError, match="outside"):
        validate_dataset([[1, 11]], [[1, 2]])
    with pytest.raises(DatasetError, match="outside"):
        validate_dataset([[1, 2]], [[-0.5, 2]])


def test_equal_vectors_need_equal_recommendations():
    with pytest.raises(DatasetError, match="equal score vectors"):
        validate_dataset([[3, 3]], [[1, 2]])


def test_monotonicity_violation_warns_or_raises():
    ds = validate_dataset([[1, 2]], [[5, 3]])
    assert ds.warnings and "monotonicity" in ds.warnings[0]
    with pytest.raises(DatasetError, match="monotonicity"):
        validate_dataset([[1, 2]], [[5, 3]], strict=True)


def test_arrays_are_read_only():
    ds = chain()
    with pytest.raises(ValueError):
        ds.scores[0, 0, 0] = 9.0


def test_from_cells_matches_direct_construction():
    cells = {(0, 0): (1, 1), (0, 1): (2, 2), (1, 0): (3, 1), (1, 1): (4, 2)}
    assert ReviewDataset.from_cells(cells, 2, 2).same_data(chain())
    with pytest.raises(DatasetError, match="incomplete"):
        ReviewDataset.from_cells({(0, 0): (1, 1)}, 1, 2)


def test_objectivity():
    scores = np.broadcast_to([[0.0, 9.0], [9.0, 0.0]], (3, 2, 2))
    ds = validate_dataset(scores, np.ones((3, 2)))
    assert satisfies_objectivity(ds)
    assert apply_objectivity(ds).num_nodes == 2
    with pytest.raises(ObjectivityError) as info:
        apply_objectivity(chain())
    assert info.value.paper_id == "p0"


@pytest.mark.parametrize("kwargs", [dict(p=0.5), dict(q=float("inf")), dict(tolerance=0), dict(seed=-1)])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        Params(**kwargs)
