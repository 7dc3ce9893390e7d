from opte.rng import RngStream


def test_word_deterministic_and_sized():
    a = RngStream(7, ("cell", 3)).word(100)
    b = RngStream(7, ("cell", 3)).word(100)
    assert a == b
    assert len(a) == 100 and not a.strip("01")


def test_children_independent_of_sibling_order():
    root = RngStream(1)
    x = root.child("a").word(64)
    root2 = RngStream(1)
    _ = root2.child("b").word(64)
    assert root2.child("a").word(64) == x


def test_sequential_draws_differ():
    s = RngStream(5)
    assert s.word(64) != s.word(64)


def test_distinct_tags_give_distinct_streams():
    assert RngStream(9, ("x",)).word(64) != RngStream(9, ("y",)).word(64)
    assert RngStream(9).word(64) != RngStream(10).word(64)


def test_uniform_range_and_reproducibility():
    s = RngStream(11, ("u",))
    vals = [s.uniform() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in vals)
    s2 = RngStream(11, ("u",))
    assert vals[:10] == [s2.uniform() for _ in range(10)]
    assert 0.4 < sum(vals) / len(vals) < 0.6


def test_randint_bounds():
    s = RngStream(3)
    vals = [s.randint(7) for _ in range(500)]
    assert set(vals) <= set(range(7))
    assert len(set(vals)) == 7


def test_zero_bits_word():
    assert RngStream(0).word(0) == ""
