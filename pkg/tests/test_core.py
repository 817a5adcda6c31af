import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecbalance.core import CombinedDataset, SubjectRecord, build_dataset, ingest_csv, write_csv
from ecbalance.errors import (
    DegenerateArms,
    EcTreatedSubject,
    EmptyInput,
    InconsistentDimension,
    IoError,
    MissingColumn,
    ParseError,
)


def _rec(z, a, y=0.0, x=(0.0,)):
    return SubjectRecord(y=y, a=a, z=z, x=x)


class TestBuildDataset:
    def test_three_record_counts(self):
        ds = build_dataset([_rec(1, 1), _rec(1, 0), _rec(0, 0)])
        assert (ds.n11, ds.n10, ds.n2) == (1, 1, 1)
        assert ds.lam == pytest.approx(2 / 3)

    def test_setting_one_sizes(self):
        recs = [_rec(1, 1)] * 100 + [_rec(1, 0)] * 100 + [_rec(0, 0)] * 100
        ds = build_dataset(recs)
        assert (ds.n11, ds.n10, ds.n2) == (100, 100, 100)
        assert ds.lam == pytest.approx(2 / 3)

    def test_ec_treated_rejected(self):
        with pytest.raises(EcTreatedSubject):
            build_dataset([_rec(1, 1), _rec(0, 1)])

    def test_empty(self):
        with pytest.raises(EmptyInput):
            build_dataset([])

    def test_inconsistent_dimension(self):
        with pytest.raises(InconsistentDimension):
            build_dataset([_rec(1, 1, x=(1.0,)), _rec(0, 0, x=(1.0, 2.0))])

    @pytest.mark.parametrize("recs", [[_rec(1, 0), _rec(0, 0)], [_rec(1, 1), _rec(1, 1)]])
    def test_degenerate_arms(self, recs):
        with pytest.raises(DegenerateArms):
            build_dataset(recs)

    def test_order_preserved(self):
        recs = [_rec(0, 0, y=3.0), _rec(1, 1, y=1.0), _rec(1, 0, y=2.0)]
        ds = build_dataset(recs)
        assert list(ds.y) == [3.0, 1.0, 2.0]
        assert ds.records == recs

    def test_immutable(self):
        ds = build_dataset([_rec(1, 1), _rec(0, 0)])
        with pytest.raises(AttributeError):
            ds.n11 = 5
        with pytest.raises(ValueError):
            ds.y[0] = 1.0

    def test_nonfinite_covariate_rejected(self):
        with pytest.raises(ParseError):
            build_dataset([_rec(1, 1, x=(np.nan,)), _rec(0, 0)])

    def test_zero_covariates_allowed(self):
        ds = build_dataset([_rec(1, 1, x=()), _rec(0, 0, x=())])
        assert ds.p == 0


records_strategy = st.lists(
    st.tuples(
        st.sampled_from([(1, 1), (1, 0), (0, 0)]),
        st.floats(-1e6, 1e6, allow_nan=False),
        st.floats(-1e3, 1e3, allow_nan=False),
    ),
    min_size=2,
    max_size=40,
).filter(lambda rs: any(za == (1, 1) for za, _, _ in rs) and any(za != (1, 1) for za, _, _ in rs))


class TestProperties:
    @given(records_strategy, st.randoms(use_true_random=False))
    def test_counts_permutation_invariant(self, rows, rnd):
        recs = [SubjectRecord(y, a, z, (x,)) for (z, a), y, x in rows]
        ds = build_dataset(recs)
        shuffled = recs[:]
        rnd.shuffle(shuffled)
        ds2 = build_dataset(shuffled)
        assert (ds.n11, ds.n10, ds.n2) == (ds2.n11, ds2.n10, ds2.n2)

    @settings(max_examples=30)
    @given(rows=records_strategy)
    def test_csv_round_trip(self, rows, tmp_path_factory):
        recs = [SubjectRecord(y, a, z, (x,)) for (z, a), y, x in rows]
        ds = build_dataset(recs)
        path = tmp_path_factory.mktemp("rt") / "d.csv"
        write_csv(ds, path, metadata={"note": "round trip"})
        back = ingest_csv(path)
        assert back.records == ds.records
        assert back.covariate_names == ds.covariate_names


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestIngest:
    GOOD = "y,a,z,x1,x2\n5,1,1,0,0.5\n7,1,1,1,-0.2\n3,0,1,0,1.5\n1,0,1,1,0\n2,0,0,0,2.1\n4,0,0,1,1.9\n"

    def test_well_formed(self, tmp_path):
        ds = ingest_csv(_write(tmp_path / "d.csv", self.GOOD))
        assert len(ds) == 6
        assert ds.covariate_names == ("x1", "x2")
        assert (ds.n11, ds.n10, ds.n2) == (2, 2, 2)

    def test_bad_indicator_row_four(self, tmp_path):
        text = "y,a,z,x1\n1,1,1,0\n2,0,1,0\n3,0,0,1\n4,2,1,0\n"
        with pytest.raises(ParseError) as err:
            ingest_csv(_write(tmp_path / "d.csv", text))
        assert (err.value.row, err.value.column) == (4, "a")

    def test_truthy_strings_rejected(self, tmp_path):
        text = "y,a,z,x1\n1,true,1,0\n2,0,0,0\n"
        with pytest.raises(ParseError):
            ingest_csv(_write(tmp_path / "d.csv", text))

    def test_header_only(self, tmp_path):
        with pytest.raises(EmptyInput):
            ingest_csv(_write(tmp_path / "d.csv", "y,a,z,x1\n"))

    def test_missing_column(self, tmp_path):
        with pytest.raises(MissingColumn):
            ingest_csv(_write(tmp_path / "d.csv", "y,a,x1\n1,1,0\n"))

    def test_missing_covariate_cell(self, tmp_path):
        with pytest.raises(ParseError) as err:
            ingest_csv(_write(tmp_path / "d.csv", "y,a,z,x1\n1,1,1,\n2,0,0,1\n"))
        assert err.value.column == "x1"

    def test_file_not_found(self, tmp_path):
        with pytest.raises(IoError):
            ingest_csv(tmp_path / "nope.csv")

    def test_column_mapping(self, tmp_path):
        text = "outcome,trt,src,age,pi\n1,1,1,30,0.5\n2,0,0,40,0.5\n"
        ds = ingest_csv(_write(tmp_path / "d.csv", text), {"y": "outcome", "a": "trt", "z": "src"}, exclude=["pi"])
        assert ds.covariate_names == ("age",)
        assert list(ds.y) == [1.0, 2.0]

    def test_metadata_lines_skipped(self, tmp_path):
        ds = ingest_csv(_write(tmp_path / "d.csv", "# tool: x\n" + self.GOOD))
        assert len(ds) == 6


def test_from_arrays_matches_records():
    ds = CombinedDataset([1.0, 2.0], [1, 0], [1, 0], [[0.5], [1.5]])
    assert ds.records == [SubjectRecord(1.0, 1, 1, (0.5,)), SubjectRecord(2.0, 0, 0, (1.5,))]
