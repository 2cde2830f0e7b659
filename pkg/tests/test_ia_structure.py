import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from helpers import assert_directional_derivative_matches, assert_gradients_match, weighted_sum
from config.run_config import IAConfig
from src.autograd import Tensor
from src.interaction import (
    FeatureSet, IAStack, block_forward, build, classify, dense_query, dense_weights, ia_forward,
)
from src.utils.errors import InvalidOrderError, ShapeMismatchError


def _inputs(rng, d, n_p=2, n_o=2, n_m=4):
    persons = FeatureSet.from_arrays(rng.uniform(-1, 1, size=(n_p, d)), np.ones(n_p, bool))
    objects = FeatureSet.from_arrays(rng.uniform(-1, 1, size=(n_o, d)), np.ones(n_o, bool))
    memory = FeatureSet.from_arrays(rng.uniform(-1, 1, size=(n_m, d)), np.ones(n_m, bool))
    return persons, objects, memory


def test_serial_build_repeats_order():
    stack = build(IAConfig(structure="serial", order=["P", "O", "M"], repeats=2, d=4), seed=0)
    assert [b.kind for b in stack.blocks] == ["P", "O", "M", "P", "O", "M"]
    assert stack.dense_logits is None


def test_dense_serial_predecessor_sets():
    stack = build(IAConfig(structure="dense_serial", order=["P", "O", "M"], repeats=1, d=4), seed=0)
    assert stack.predecessors(2) == 3
    assert [len(logits) for logits in stack.dense_logits] == [1, 2, 3]
    assert all(np.array_equal(t.data, np.zeros(4)) for logits in stack.dense_logits for t in logits)


def test_parallel_build_makes_one_branch_per_kind():
    stack = build(IAConfig(structure="parallel", order=["P", "O", "M"], repeats=1, d=4), seed=0)
    assert [[b.kind for b in branch] for branch in stack.branches] == [["P"], ["O"], ["M"]]


@pytest.mark.parametrize("order", [[], ["P", "P"], ["P", "X"]])
def test_invalid_order_rejected(order):
    with pytest.raises(InvalidOrderError):
        build(IAConfig.model_construct(structure="serial", order=order, repeats=1, d=4,
                                       ffn_enabled=True, ffn_mult=2, heads=1, ln_eps=1e-5), seed=0)


def test_build_is_seeded():
    config = IAConfig(structure="serial", order=["P", "M"], repeats=1, d=4)
    a, b = build(config, seed=3), build(config, seed=3)
    assert all(np.array_equal(x.data, y.data) for (_, x), (_, y) in zip(a.named_parameters(), b.named_parameters()))


def test_dense_query_examples(rng):
    e = Tensor(rng.uniform(-1, 1, size=(2, 3)))
    assert np.array_equal(dense_query([e], [Tensor(np.zeros(3))]).data, e.data)

    f = Tensor(rng.uniform(-1, 1, size=(2, 3)))
    mean = dense_query([e, f], [Tensor(np.zeros(3)), Tensor(np.zeros(3))]).data
    assert np.allclose(mean, (e.data + f.data) / 2)

    saturated = dense_query([e, f], [Tensor([1e9, 0.0, 0.0]), Tensor([-1e9, 0.0, 0.0])]).data
    assert np.allclose(saturated[:, 0], e.data[:, 0])

    with pytest.raises(ShapeMismatchError):
        dense_query([e, f], [Tensor(np.zeros(3))])


@given(arrays(np.float64, (4, 6), elements=st.floats(-5, 5)))
def test_dense_weights_sum_to_one_per_dimension(logits):
    weights = dense_weights([Tensor(row) for row in logits]).data
    assert np.allclose(weights.sum(axis=0), 1.0, atol=1e-6)
    assert np.all((weights > 0) & (weights < 1))


def test_empty_stack_passes_persons_through(rng):
    persons, objects, memory = _inputs(rng, 4)
    out = ia_forward(IAStack.empty(4), persons, objects, memory)
    assert np.array_equal(out.data, persons.features.data)


def test_serial_matches_step_by_step_blocks(rng):
    stack = build(IAConfig(structure="serial", order=["P", "O", "M"], repeats=1, d=5), seed=1)
    persons, objects, memory = _inputs(rng, 5)
    out = ia_forward(stack, persons, objects, memory).data

    p_block, o_block, m_block = stack.blocks
    expected = block_forward(p_block, persons, persons)
    expected = block_forward(o_block, expected, objects)
    expected = block_forward(m_block, expected, memory)
    assert np.allclose(out, expected.features.data, atol=1e-6)


def test_masked_objects_and_memory_leave_only_p_interaction(rng):
    config = IAConfig(structure="serial", order=["P", "O", "M"], repeats=1, d=4, ffn_enabled=False)
    stack = build(config, seed=2)
    persons, _, _ = _inputs(rng, 4)
    out = ia_forward(stack, persons, FeatureSet.empty(2, 4), FeatureSet.empty(4, 4)).data

    after_p = block_forward(stack.blocks[0], persons, persons)
    after_o = block_forward(stack.blocks[1], after_p, FeatureSet.empty(2, 4))
    assert np.allclose(out, block_forward(stack.blocks[2], after_o, FeatureSet.empty(4, 4)).features.data)


def test_single_block_dense_equals_serial(rng):
    serial = build(IAConfig(structure="serial", order=["M"], repeats=1, d=4), seed=5)
    dense = build(IAConfig(structure="dense_serial", order=["M"], repeats=1, d=4), seed=5)
    persons, objects, memory = _inputs(rng, 4)
    assert np.array_equal(ia_forward(serial, persons, objects, memory).data,
                          ia_forward(dense, persons, objects, memory).data)


def test_parallel_differs_from_serial(rng):
    config = dict(order=["P", "O", "M"], repeats=1, d=4)
    serial = build(IAConfig(structure="serial", **config), seed=7)
    parallel = build(IAConfig(structure="parallel", **config), seed=7)
    persons, objects, memory = _inputs(rng, 4)
    assert not np.allclose(ia_forward(serial, persons, objects, memory).data,
                           ia_forward(parallel, persons, objects, memory).data)


def test_parallel_merges_branches_by_mean(rng):
    stack = build(IAConfig(structure="parallel", order=["O", "M"], repeats=1, d=4), seed=8)
    persons, objects, memory = _inputs(rng, 4)
    out = ia_forward(stack, persons, objects, memory).data
    o_out = block_forward(stack.blocks[0], persons, objects).features.data
    m_out = block_forward(stack.blocks[1], persons, memory).features.data
    assert np.allclose(out, (o_out + m_out) / 2)


def test_targets_select_rows_and_empty_persons_allowed(rng):
    stack = build(IAConfig(structure="serial", order=["P", "O"], repeats=1, d=4), seed=0)
    persons, objects, memory = _inputs(rng, 4, n_p=3)
    out = ia_forward(stack, persons, objects, memory, targets=np.array([True, False, True]))
    assert out.shape == (2, 4)

    empty = ia_forward(stack, FeatureSet.empty(0, 4), objects, memory)
    assert empty.shape == (0, 4)


def test_ia_forward_is_deterministic_and_traced(rng):
    stack = build(IAConfig(structure="dense_serial", order=["P", "O", "M"], repeats=1, d=4), seed=0)
    persons, objects, memory = _inputs(rng, 4)
    trace = []
    first = ia_forward(stack, persons, objects, memory, trace=trace).data
    assert np.array_equal(first, ia_forward(stack, persons, objects, memory).data)
    assert [(t.index, t.kind) for t in trace] == [(0, "P"), (1, "O"), (2, "M")]


def test_dimension_mismatch_raises(rng):
    stack = build(IAConfig(structure="serial", order=["P"], repeats=1, d=4), seed=0)
    persons, objects, _ = _inputs(rng, 4)
    with pytest.raises(ShapeMismatchError):
        ia_forward(stack, persons, objects, FeatureSet.empty(2, 3))


def test_classify_examples(rng):
    bias = Tensor([0.1, -0.2, 0.3, 0.4])
    head = Tensor(rng.uniform(-1, 1, size=(4, 4)))
    assert np.array_equal(classify(head, Tensor(np.zeros((2, 4))), bias).data, np.tile(bias.data, (2, 1)))

    features = Tensor(rng.uniform(-1, 1, size=(3, 4)))
    assert np.allclose(classify(Tensor(np.eye(4)), features).data, features.data)

    expected = [[sum(features.data[i, k] * head.data[k, j] for k in range(4)) for j in range(4)] for i in range(3)]
    assert np.allclose(classify(head, features).data, expected)

    with pytest.raises(ShapeMismatchError):
        classify(head, Tensor(np.zeros((2, 3))))


def test_two_block_serial_gradients_match_finite_differences(rng):
    config = IAConfig(structure="serial", order=["P", "M"], repeats=1, d=3, ffn_enabled=False)
    stack = build(config, seed=11)
    x = Tensor(rng.uniform(-1, 1, size=(2, 3)), requires_grad=True)
    m = Tensor(rng.uniform(-1, 1, size=(4, 3)), requires_grad=True)
    objects = FeatureSet.empty(1, 3)
    w = rng.uniform(-1, 1, size=(2, 3))
    params = [x, m] + [t for _, t in stack.named_parameters()]

    def loss():
        persons = FeatureSet(x, np.ones(2, bool))
        memory = FeatureSet(m, np.array([True, True, True, False]))
        return weighted_sum(ia_forward(stack, persons, objects, memory), w)

    assert_gradients_match(loss, params)


def test_dense_serial_gradients_reach_dense_logits(rng):
    config = IAConfig(structure="dense_serial", order=["P", "O"], repeats=1, d=3, ffn_enabled=False)
    stack = build(config, seed=4)
    persons, objects, memory = _inputs(rng, 3)
    w = rng.uniform(-1, 1, size=(2, 3))
    logits = [t for row in stack.dense_logits for t in row]
    assert_gradients_match(lambda: weighted_sum(ia_forward(stack, persons, objects, memory), w), logits)


def test_parallel_gradients_match_finite_differences(rng):
    config = IAConfig(structure="parallel", order=["P", "M"], repeats=1, d=3, ffn_enabled=False)
    stack = build(config, seed=7)
    x = Tensor(rng.uniform(-1, 1, size=(2, 3)), requires_grad=True)
    m = Tensor(rng.uniform(-1, 1, size=(3, 3)), requires_grad=True)
    objects = FeatureSet.empty(1, 3)
    w = rng.uniform(-1, 1, size=(2, 3))
    params = [x, m] + [t for _, t in stack.named_parameters()]

    def loss():
        persons = FeatureSet(x, np.ones(2, bool))
        memory = FeatureSet(m, np.array([True, False, True]))
        return weighted_sum(ia_forward(stack, persons, objects, memory), w)

    assert_gradients_match(loss, params, h=1e-5)


@pytest.mark.parametrize("structure", ["serial", "dense_serial", "parallel"])
def test_structure_gradients_match_along_random_directions(structure, rng):
    for seed in range(100):
        config = IAConfig(structure=structure, order=["P", "O", "M"], repeats=1, d=3, ffn_enabled=False)
        stack = build(config, seed=seed)
        named = stack.named_parameters()
        for name, tensor in named:
            if name.endswith("gamma"):
                tensor.data = rng.uniform(0.5, 1.5, size=tensor.shape)
            elif name.endswith("beta") or "dense" in name:
                tensor.data = rng.uniform(-0.5, 0.5, size=tensor.shape)

        n_p = int(rng.integers(1, 3))
        x = Tensor(rng.uniform(-1, 1, size=(n_p, 3)), requires_grad=True)
        o = Tensor(rng.uniform(-1, 1, size=(2, 3)), requires_grad=True)
        m = Tensor(rng.uniform(-1, 1, size=(2, 3)), requires_grad=True)
        object_mask = rng.random(2) < 0.7
        memory_mask = rng.random(2) < 0.7
        w = rng.uniform(-1, 1, size=(n_p, 3))

        def loss():
            out = ia_forward(stack, FeatureSet(x, np.ones(n_p, bool)), FeatureSet(o, object_mask),
                             FeatureSet(m, memory_mask))
            return weighted_sum(out, w)

        assert_directional_derivative_matches(loss, [x, o, m] + [t for _, t in named], rng)
