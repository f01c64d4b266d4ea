import numpy as np
import pytest

from nlb.stream import (CsvSchema, LinkStream, NodeLabelEvent, StreamError, assign_labels_to_links,
                        chronological_split, ingest_csv, inductive_mask, load_cache, read_id_map,
                        save_cache, write_csv, write_id_map)


def _write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_featureless_file(tmp_path):
    s = ingest_csv(_write(tmp_path, "1,2,10,\n2,3,11,\n3,1,12,\n"))
    assert len(s) == 3
    assert s.features.dim == 0


def test_row_with_two_features(tmp_path):
    s = ingest_csv(_write(tmp_path, "5,9,100,0,0.1,0.2\n"))
    link = s.link(0)
    assert (s.id_map["5"], s.id_map["9"]) == (link.src, link.dst)
    assert link.ts == 100
    assert s.features.dim == 2
    np.testing.assert_allclose(s.features.take(np.array([link.edge_feat]))[0], [0.1, 0.2],
                               rtol=1e-6)


def test_header_is_skipped(tmp_path):
    s = ingest_csv(_write(tmp_path, "user,item,timestamp,state_label\n1,2,3,0\n"))
    assert len(s) == 1


def test_decreasing_timestamp_names_line(tmp_path):
    with pytest.raises(StreamError, match="line 3"):
        ingest_csv(_write(tmp_path, "1,2,10,\n2,3,11,\n3,1,9,\n"))


def test_ragged_features_rejected(tmp_path):
    with pytest.raises(StreamError, match="line 2"):
        ingest_csv(_write(tmp_path, "1,2,10,,0.5,0.5\n2,3,11,,0.5\n"))


def test_float_timestamps_scaled_and_truncated(tmp_path):
    s = ingest_csv(_write(tmp_path, "1,2,1.25,\n1,2,2.999,\n"), CsvSchema(scale=100))
    assert list(s.ts) == [125, 299]


def test_bipartite_namespaces(tmp_path):
    s = ingest_csv(_write(tmp_path, "0,0,1,\n1,0,2,\n"), CsvSchema(bipartite=True))
    assert s.n_nodes == 3
    assert s.src[0] != s.dst[0]


def test_ids_densified_in_first_appearance_order(tmp_path):
    s = ingest_csv(_write(tmp_path, "100,7,1,\n7,55,2,\n"))
    assert list(s.src) == [0, 1] and list(s.dst) == [1, 2]
    p = tmp_path / "ids.csv"
    write_id_map(s.id_map, p)
    assert read_id_map(p) == s.id_map


def test_csv_round_trip_is_byte_identical(tmp_path, small_stream):
    a, b, c = (tmp_path / f"{x}.csv" for x in "abc")
    write_csv(small_stream, a)
    s1 = ingest_csv(a)
    write_csv(s1, b)
    s2 = ingest_csv(b)
    write_csv(s2, c)
    assert b.read_bytes() == c.read_bytes()
    assert s1.content_hash() == s2.content_hash()
    assert np.array_equal(s2.ts, small_stream.ts)


def test_cache_round_trip(tmp_path):
    p = _write(tmp_path, "1,2,10,1,0.5,0.25\n2,3,11,,1.0,2.0\n3,1,12,0,3.0,4.0\n")
    s = ingest_csv(p)
    save_cache(s, tmp_path / "c.bin")
    c = load_cache(tmp_path / "c.bin")
    assert c.content_hash() == s.content_hash()
    assert c.labels == s.labels
    np.testing.assert_array_equal(c.features.rows, s.features.rows)


def test_from_arrays_rejects_decreasing_time():
    with pytest.raises(StreamError):
        LinkStream.from_arrays([0, 1], [1, 0], [5, 4])


@pytest.mark.parametrize("n,cut", [(100, (70, 85)), (7, (4, 5))])
def test_split_boundaries(n, cut):
    s = LinkStream.from_arrays(np.zeros(n, int), np.ones(n, int), np.arange(n))
    sp = chronological_split(s)
    assert (sp.train.stop, sp.val.stop) == cut
    assert sp.test.stop == n


def test_split_single_event():
    sp = chronological_split(LinkStream.from_arrays([0], [1], [0]))
    assert list(sp.train) == [0] and len(sp.val) == 0 and len(sp.test) == 0


def test_split_empty_and_bad_ratios():
    with pytest.raises(ValueError):
        chronological_split(LinkStream.from_arrays([], [], []))
    with pytest.raises(ValueError):
        chronological_split(LinkStream.from_arrays([0], [1], [0]), (0.5, 0.2, 0.2))


def test_split_respects_chronology(small_stream):
    sp = chronological_split(small_stream)
    ts = small_stream.ts
    assert ts[sp.train.stop - 1] <= ts[sp.val.start]
    assert ts[sp.val.stop - 1] <= ts[sp.test.start]


def test_inductive_mask_bounds_and_determinism(small_stream):
    sp = chronological_split(small_stream)
    assert inductive_mask(sp, small_stream, 0.0, 1).masked_nodes == frozenset()
    full = inductive_mask(sp, small_stream, 1.0, 1)
    later = np.r_[small_stream.src[sp.val.start:], small_stream.dst[sp.val.start:]]
    assert full.masked_nodes == frozenset(int(x) for x in later)
    a = inductive_mask(sp, small_stream, 0.1, 5)
    assert a == inductive_mask(sp, small_stream, 0.1, 5)


def test_inductive_view_has_no_masked_links(small_stream):
    sp = inductive_mask(chronological_split(small_stream), small_stream, 0.3, 2)
    idx = sp.train_indices(small_stream)
    masked = np.array(sorted(sp.masked_nodes))
    assert not np.isin(small_stream.src[idx], masked).any()
    assert not np.isin(small_stream.dst[idx], masked).any()
    assert np.all(idx < sp.train.stop)


def _labels_stream():
    # node 0 appears at t=3 (src), t=7 (dst), t=9 (src)
    return LinkStream.from_arrays([0, 1, 0], [1, 0, 2], [3, 7, 9], n_nodes=3)


def test_label_first_link_after():
    out, dropped = assign_labels_to_links(_labels_stream(), [NodeLabelEvent(0, 5, 1)])
    assert dropped == 0
    assert out[0].event_idx == 1 and out[0].side == "dst"


def test_label_without_future_link_dropped():
    s = LinkStream.from_arrays([0, 1], [1, 2], [4, 8], n_nodes=3)
    out, dropped = assign_labels_to_links(s, [NodeLabelEvent(0, 5, 1)])
    assert out == [] and dropped == 1


def test_two_labels_share_the_first_link():
    s = LinkStream.from_arrays([0, 0], [1, 2], [7, 9], n_nodes=3)
    out, _ = assign_labels_to_links(s, [NodeLabelEvent(0, 5, 0), NodeLabelEvent(0, 6, 1)])
    assert [o.event_idx for o in out] == [0, 0]
    assert [o.label for o in out] == [0, 1]
