import numpy as np
import pytest

from regseg.mapping import (CoverageError, MappingError, MappingSyntaxError, NameMapping,
                            TensorShapeError)


def test_parse_rules_and_wildcards():
    m = NameMapping.parse("""
        # comment
        a.*.w -> x.block*.w   # trailing comment
        b.* -> -
        c.*.*.weight -> y.block*.branch*.w split=0/2, transpose
    """)
    assert [r.lineno for r in m.rules] == [3, 4, 5]
    assert m.rules[0].match("a.3.w") == "x.block3.w"
    assert m.rules[0].match("a.3.v") is None
    assert m.rules[1].match("b.anything") == "-"
    assert m.rules[2].match("c.stage16.1.weight") == "y.blockstage16.branch1.w"
    assert m.rules[2].transforms == ["split=0/2", "transpose"]


@pytest.mark.parametrize("text", [
    "a b",
    "a ->",
    "a.* -> b",
    "a -> b flip",
    "a -> b split=2/2",
    "a -> b group_permute=0",
])
def test_syntax_errors_name_the_line(text):
    with pytest.raises(MappingSyntaxError) as e:
        NameMapping.parse("x -> y\n" + text)
    assert e.value.lineno == 2


def test_transforms():
    m = NameMapping.parse("""
        w -> t.w transpose
        s -> a.w split=0/2
        s -> b.w split=1/2
        g -> g.w group_permute=2
        r -> r.var bn
    """)
    w = np.arange(6, dtype=np.float32).reshape(2, 3)
    s = np.arange(4, dtype=np.float32)
    g = np.arange(6, dtype=np.float32)  # groups m=0..2, branches b=0..1: [m0b0, m0b1, m1b0, ...]
    slots = {"t.w": (3, 2, 1, 1), "a.w": (1, 2, 1, 1), "b.w": (1, 2, 1, 1),
             "g.w": (1, 6, 1, 1), "r.var": (1, 1, 1, 1), "r.eps": (1, 1, 1, 1)}
    res = NameMapping.apply(m, {"w": w, "s": s, "g": g, "r": np.ones(1)}, slots, bn_eps=1e-3)
    assert res.tensors["t.w"].reshape(3, 2).tolist() == w.T.tolist()
    assert res.tensors["a.w"].ravel().tolist() == [0, 1]
    assert res.tensors["b.w"].ravel().tolist() == [2, 3]
    assert res.tensors["g.w"].ravel().tolist() == [0, 2, 4, 1, 3, 5]
    assert res.tensors["r.eps"].ravel().tolist() == [np.float32(1e-3)]
    assert res.filled_eps == ["r.eps"]
    assert all(res.tensors[k].shape == v for k, v in slots.items())


def test_group_permute_with_rows_per_group():
    m = NameMapping.parse("g -> g.w group_permute=2:2")
    g = np.arange(8, dtype=np.float32)  # m0b0 = [0,1], m0b1 = [2,3], m1b0 = [4,5], m1b1 = [6,7]
    res = m.apply({"g": g}, {"g.w": (8, 1, 1, 1)})
    assert res.tensors["g.w"].ravel().tolist() == [0, 1, 4, 5, 2, 3, 6, 7]


def test_missing_slot_is_named():
    m = NameMapping.parse("a -> x.w\n")
    with pytest.raises(CoverageError) as e:
        m.apply({"a": np.ones(2)}, {"x.w": (1, 2, 1, 1), "y.w": (1, 2, 1, 1)})
    assert e.value.missing == ["y.w"]
    assert "y.w" in str(e.value)


def test_duplicate_production():
    m = NameMapping.parse("a -> x.w\nb -> x.w\n")
    with pytest.raises(CoverageError) as e:
        m.apply({"a": np.ones(2), "b": np.ones(2)}, {"x.w": (1, 2, 1, 1)})
    assert e.value.duplicated == ["x.w"]


def test_shape_mismatch_lists_each_tensor():
    m = NameMapping.parse("a -> x.w\nb -> y.w\n")
    with pytest.raises(TensorShapeError) as e:
        m.apply({"a": np.ones(3), "b": np.ones((2, 2))}, {"x.w": (1, 2, 1, 1), "y.w": (4, 1, 1, 1)})
    assert [p[0] for p in e.value.problems] == ["x.w", "y.w"]


def test_bn_passthrough_checks_the_slot():
    m = NameMapping.parse("a -> x.w bn\n")
    with pytest.raises(TensorShapeError):
        m.apply({"a": np.ones(2)}, {"x.w": (1, 2, 1, 1)})


def test_unknown_slot():
    with pytest.raises(MappingError):
        NameMapping.parse("a -> nope\n").apply({"a": np.ones(1)}, {"x": (1, 1, 1, 1)})


def test_unused_sources_are_reported():
    res = NameMapping.parse("a -> x\n").apply({"a": np.ones(1), "zz": np.ones(1)},
                                              {"x": (1, 1, 1, 1)})
    assert res.unused_sources == ["zz"]
