from cacheleak.report import RowCollector, export_to_csv, export_to_jsonl, output_path


def test_csv_header_is_written_without_rows(tmp_path):
    path = output_path(str(tmp_path / "out"), "summary.csv")
    assert export_to_csv([], path, ['a', 'b']) == 0
    assert open(path, encoding='utf-8').read() == "a,b\n"


def test_csv_keeps_field_order(tmp_path):
    path = str(tmp_path / "rows.csv")
    export_to_csv([{'b': 2, 'a': 1}], path, ['a', 'b'])
    assert open(path, encoding='utf-8').read() == "a,b\n1,2\n"


def test_jsonl_writes_one_record_per_line(tmp_path):
    path = str(tmp_path / "trace.jsonl")
    assert export_to_jsonl(['{"x": 1}', '{"x": 2}'], path) == 2
    assert open(path, encoding='utf-8').read().splitlines() == ['{"x": 1}', '{"x": 2}']


def test_row_collector_is_a_sink(tmp_path):
    rows = RowCollector(['k'])
    rows({'k': 'v'})
    path = str(tmp_path / "c.csv")
    assert rows.write(path) == 1
    assert open(path, encoding='utf-8').read() == "k\nv\n"
