from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fraglab.datagen import DGPConfig, ExposureSpec, PreferenceSpec, attach_strata, generate_population
from fraglab.errors import ConfigError, ParseError
from fraglab.fragmentation import (
    AssignmentMatrix,
    draw_assignment,
    fragment,
    load_fragments_csv,
    split_by_device,
    stack,
    stack_common,
    stack_device_specific,
    true_design,
    write_fragments_csv,
)
from fraglab.scenarios import table1_population


def table1_fragments(panel):
    pop = table1_population(panel)
    return fragment(pop, AssignmentMatrix.constant(2, 0, 2))


def rows_of(f):
    return Counter((float(y), *map(float, x)) for y, x in zip(f.y, f.X))


def test_table1b_rows():
    assert rows_of(table1_fragments("b")) == Counter({(1.0, 2.0): 1, (0.0, 0.0): 1, (1.0, 3.0): 1, (0.0, 1.0): 1})


def test_table1c_rows():
    assert rows_of(table1_fragments("c")) == Counter({(1.0, 0.0): 1, (0.0, 2.0): 1, (1.0, 1.0): 1, (0.0, 3.0): 1})


def test_table1b_common_design():
    d = stack_common(table1_fragments("b"))
    assert Counter(map(tuple, d.X)) == Counter({(1.0, 2.0): 1, (1.0, 0.0): 1, (1.0, 3.0): 1, (1.0, 1.0): 1})


def test_table1b_device_specific_design():
    d = stack_device_specific(table1_fragments("b"))
    expected = Counter({(1.0, 2.0, 0.0): 1, (1.0, 3.0, 0.0): 1, (1.0, 0.0, 0.0): 1, (1.0, 0.0, 1.0): 1})
    assert Counter(map(tuple, d.X)) == expected
    assert d.terms == ["intercept", "x1_d1", "x1_d2"]


def test_table1b_split_device1():
    d1 = split_by_device(table1_fragments("b"))[0]
    assert sorted(zip(map(tuple, d1.X), d1.Y)) == [((1.0, 2.0), 1.0), ((1.0, 3.0), 1.0)]


def small_pop(J=3, k=2, n=50, seed=4, **kw):
    cfg = DGPConfig(n_users=n, n_devices=J, n_covariates=k, beta0=1.0, beta1=[0.4] * k,
                    exposure=ExposureSpec(mean=2.0), seed=seed, **kw)
    return generate_population(cfg)


def test_outcome_lands_on_one_fragment_and_sums():
    pop = small_pop()
    f = fragment(pop, draw_assignment(pop))
    Y, X = f.device_blocks()
    assert np.allclose(Y.sum(axis=0), pop.y, atol=0)
    assert np.all((Y != 0).sum(axis=0) <= 1)
    assert np.array_equal(X.sum(axis=0), pop.total_exposure)


def test_fragment_ids_unique_and_uninformative():
    pop = small_pop(n=500)
    f = fragment(pop, draw_assignment(pop))
    assert len(set(f.fragment_id)) == f.n_rows
    assert abs(np.corrcoef(f.fragment_id, f.true_user)[0, 1]) < 0.1


def test_strata_inherited():
    pop = attach_strata(small_pop(), {"MSA": 5})
    f = fragment(pop, draw_assignment(pop))
    assert np.array_equal(f.strata["MSA"], pop.strata["MSA"][f.true_user])


def test_assignment_respects_preferences():
    cfg = DGPConfig(n_users=20000, beta1=[0.1], seed=2, preference=PreferenceSpec(kind="constant", lam=[0.8, 0.2]))
    pop = generate_population(cfg)
    share = (draw_assignment(pop).device == 0).mean()
    assert abs(share - 0.8) < 0.02
    a, b = draw_assignment(pop), draw_assignment(pop)
    assert np.array_equal(a.device, b.device)
    assert not np.array_equal(a.device, draw_assignment(pop, rep=1).device)


def test_assignment_validation():
    with pytest.raises(ConfigError):
        AssignmentMatrix(np.array([0, 2]), 2)
    pop = small_pop(n=10)
    with pytest.raises(ConfigError):
        fragment(pop, AssignmentMatrix.constant(9, 0, 3))


@given(st.integers(2, 5), st.integers(1, 3), st.integers(1, 40), st.integers(0, 2**31))
def test_reconstruction_recovers_true_design(J, k, n, seed):
    pop = small_pop(J=J, k=k, n=n, seed=seed)
    f = fragment(pop, draw_assignment(pop))
    d = stack_common(f)
    assert np.max(np.abs(d.reconstruct() - true_design(pop).X)) <= 1e-14
    assert np.max(np.abs(d.W() @ d.Y - pop.y)) <= 1e-12
    ds = stack_device_specific(f)
    W = np.asarray(ds.W() @ ds.X) * ds.omega
    assert np.max(np.abs(W - true_design(pop, "device-specific").X)) <= 1e-14


def test_stack_dispatch_and_errors():
    pop = small_pop()
    f = fragment(pop, draw_assignment(pop))
    assert stack(f, "common-stacked").model_form == "common-stacked"
    assert len(stack(f, "device-split")) == 3
    with pytest.raises(ConfigError):
        stack(f, "pooled")
    with pytest.raises(ConfigError):
        true_design(pop, "split")


def test_canonical_restores_order_after_shuffle():
    pop = small_pop()
    f = fragment(pop, draw_assignment(pop))
    perm = np.random.default_rng(0).permutation(f.n_rows)
    from dataclasses import replace
    shuffled = replace(f, fragment_id=f.fragment_id[perm], device=f.device[perm], y=f.y[perm], X=f.X[perm],
                       true_user=f.true_user[perm], strata={})
    assert shuffled.n_users is None
    c = shuffled.canonical()
    assert np.array_equal(c.y, f.y) and np.array_equal(c.X, f.X)
    with pytest.raises(ConfigError):
        shuffled.without_oracle().canonical()


def test_fragments_csv_round_trip(tmp_path):
    pop = attach_strata(small_pop(), {"MSA": 4})
    f = fragment(pop, draw_assignment(pop))
    path = tmp_path / "frag.csv"
    write_fragments_csv(f, path)
    back = load_fragments_csv(path)
    for name in ("fragment_id", "device", "y", "X", "true_user"):
        assert np.array_equal(getattr(back, name), getattr(f, name)), name
    assert np.array_equal(back.strata["MSA"], f.strata["MSA"])
    write_fragments_csv(f, path, include_oracle=False)
    assert not load_fragments_csv(path).has_oracle


@pytest.mark.parametrize("text, msg", [
    ("", "empty"),
    ("fragment_id,y,x1\n1,0,1\n", "device"),
    ("fragment_id,device,y\n1,1,0\n", "x1"),
    ("fragment_id,device,y,x1\n", "no rows"),
    ("fragment_id,device,y,x1\n1,1,0,1\n2,2,zz,1\n", "row 2"),
])
def test_fragments_csv_errors(tmp_path, text, msg):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ParseError, match=msg):
        load_fragments_csv(path)
