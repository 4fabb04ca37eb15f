import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasibalance.panel import (ColumnMap, Observation, PairedPanel, PanelError, load_panel,
                                pair_periods, write_observations)
from quasibalance.synth import GeneratorSpec, gen_panel


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_negative_value_rejected(tmp_path):
    f = _write(tmp_path / "p.csv", "entity_id,period,value\nA,1,3.5\nB,1,-5\nC,1,2\n")
    res = load_panel(f)
    assert len(res) == 2
    assert len(res.rejected) == 1
    assert res.rejected[0].line == 3 and "non-positive" in res.rejected[0].reason


def test_unparsable_fields_rejected(tmp_path):
    f = _write(tmp_path / "p.csv", "entity_id,period,value\nA,1,x\nB,y,2\nC,1\nD,1,0\nE,1,1.5\n")
    res = load_panel(f)
    assert [o.entity_id for o in res] == ["E"]
    assert sorted(r.reason for r in res.rejected) == sorted(
        ["unparsable value", "unparsable period", "too few fields", "non-positive value"])


def test_duplicate_key_names_it(tmp_path):
    f = _write(tmp_path / "p.csv", "entity_id,period,value\nA,1,3\nA,1,4\n")
    with pytest.raises(PanelError, match=r"\('A', 1\)"):
        load_panel(f)


def test_missing_file_and_bad_header(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_panel(tmp_path / "nope.csv")
    f = _write(tmp_path / "h.csv", "id,year,v\nA,1,3\n")
    with pytest.raises(PanelError, match="lacks columns"):
        load_panel(f)
    res = load_panel(f, ColumnMap("id", "year", "v"))
    assert res.observations == [Observation("A", 1, 3.0)]
    e = _write(tmp_path / "e.csv", "")
    with pytest.raises(PanelError, match="empty"):
        load_panel(e)


def test_zero_valid_rows(tmp_path):
    f = _write(tmp_path / "z.csv", "entity_id,period,value\nA,1,-1\n")
    with pytest.raises(PanelError, match="no valid rows"):
        load_panel(f)


def test_tab_delimited(tmp_path):
    f = _write(tmp_path / "p.tsv", "value\tperiod\tentity_id\n2.5\t7\tX\n")
    assert load_panel(f).observations == [Observation("X", 7, 2.5)]


def test_round_trip_bit_identical(tmp_path):
    panel, _ = gen_panel(GeneratorSpec(n_entities=5000, seed=3))
    f = tmp_path / "panel.csv"
    write_observations(f, panel)
    res = load_panel(f)
    assert len(res) == 10_000 and not res.rejected
    back = pair_periods(res, 1, 2)
    assert back.entity_ids == panel.entity_ids
    assert np.array_equal(back.x1, panel.x1) and np.array_equal(back.x2, panel.x2)


def test_pair_intersection():
    obs = [Observation("A", 1, 1.0), Observation("B", 1, 2.0), Observation("B", 2, 3.0), Observation("C", 2, 4.0)]
    p = pair_periods(obs, 1, 2)
    assert p.count == 1 and p.entity_ids == ("B",) and p.pairs == [(2.0, 3.0)]
    with pytest.raises(ValueError):
        pair_periods(obs, 2, 1)
    with pytest.raises(PanelError):
        pair_periods(obs, 1, 3)


def test_generator_count_structural():
    panel, _ = gen_panel(GeneratorSpec(n_entities=1234, seed=0))
    rows = [Observation(e, 1, v) for e, v in zip(panel.entity_ids, panel.x1)]
    rows += [Observation(e, 2, v) for e, v in zip(panel.entity_ids, panel.x2)]
    assert pair_periods(rows, 1, 2).count == 1234


def test_observation_and_panel_invariants():
    with pytest.raises(ValueError):
        Observation("A", 1, 0.0)
    with pytest.raises(ValueError):
        PairedPanel.from_arrays([1.0, -1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        PairedPanel.from_arrays([1.0], [1.0], period_1=2, period_2=2)
    p = PairedPanel.from_arrays([1.0, 2.0], [3.0, 4.0])
    with pytest.raises(ValueError):
        p.x1[0] = 5.0
    s = p.swapped()
    assert s.pairs == [(3.0, 1.0), (4.0, 2.0)]


obs_strategy = st.lists(
    st.tuples(st.sampled_from("ABCDEFGH"), st.sampled_from([1, 2, 3]), st.floats(0.1, 1e6)),
    max_size=40,
).map(lambda rows: list({(e, p): Observation(e, p, v) for e, p, v in rows}.values()))


@given(obs_strategy, st.randoms())
def test_pairing_permutation_invariant_and_bounded(obs, rnd):
    try:
        ref = pair_periods(obs, 1, 2)
    except PanelError:
        return
    shuffled = list(obs)
    rnd.shuffle(shuffled)
    again = pair_periods(shuffled, 1, 2)
    assert again.entity_ids == ref.entity_ids
    assert np.array_equal(again.x1, ref.x1) and np.array_equal(again.x2, ref.x2)
    n1 = sum(o.period == 1 for o in obs)
    n2 = sum(o.period == 2 for o in obs)
    assert ref.count <= min(n1, n2)
    assert list(ref.entity_ids) == sorted(ref.entity_ids)
