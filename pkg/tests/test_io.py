import numpy as np

from morlbalance.io import atomic_write_text, format_csv, read_csv, stream


def test_streams_are_addressable_and_independent():
    a = stream(5, 1, 2).random(4)
    np.testing.assert_array_equal(a, stream(5, 1, 2).random(4))
    assert not np.array_equal(a, stream(5, 1, 3).random(4))
    assert not np.array_equal(a, stream(6, 1, 2).random(4))


def test_csv_round_trip(tmp_path):
    text = format_csv(("a", "flag", "x"), [(1, True, 0.1), (2, False, 1 / 3)], {"seed": 4})
    atomic_write_text(tmp_path / "sub" / "f.csv", text)
    prov, rows = read_csv(tmp_path / "sub" / "f.csv")
    assert prov == {"seed": 4}
    assert rows[1] == {"a": "2", "flag": "0", "x": repr(1 / 3)}
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.csv"]
