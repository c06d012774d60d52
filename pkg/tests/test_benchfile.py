import io

import numpy as np
import pytest

from cirfocus.augment import AugmentPlan, MockGenerationClient, TripletSource, apply_plan
from cirfocus.benchfile import (
    BenchFileError,
    read_benchmark,
    read_triplets,
    sample_mode,
    sample_to_dict,
    write_benchmark,
)
from cirfocus.synthworld import SynthWorld, WorldConfig
from cirfocus.types import Candidate, CandidateKind


def inline_samples(n=5):
    return SynthWorld(WorldConfig(seed=1)).samples(0, n, 0.5)


def asset_samples(n=4):
    from test_augment import _triplet

    triplets = [_triplet(i) for i in range(n)]
    return apply_plan(triplets, AugmentPlan(), MockGenerationClient())


def roundtrip(samples):
    buf = io.StringIO()
    mode = write_benchmark(buf, samples)
    buf.seek(0)
    mode_back, back = read_benchmark(buf)
    assert mode_back == mode
    return back


class TestRoundTrip:
    def test_inline_lossless(self):
        samples = inline_samples()
        back = roundtrip(samples)
        assert [sample_to_dict(s) for s in back] == [sample_to_dict(s) for s in samples]

    def test_asset_lossless(self):
        samples = asset_samples()
        back = roundtrip(samples)
        assert [sample_to_dict(s) for s in back] == [sample_to_dict(s) for s in samples]

    def test_double_roundtrip_stable_bytes(self):
        samples = inline_samples()
        buf1, buf2 = io.StringIO(), io.StringIO()
        write_benchmark(buf1, samples)
        buf1.seek(0)
        _, back = read_benchmark(buf1)
        write_benchmark(buf2, back)
        assert buf1.getvalue() == buf2.getvalue()


class TestModeDetection:
    def test_modes(self):
        assert sample_mode(inline_samples(1)[0]) == "inline"
        assert sample_mode(asset_samples(1)[0]) == "asset"

    def test_mixed_corpus_rejected(self):
        with pytest.raises(BenchFileError):
            write_benchmark(io.StringIO(), inline_samples(1) + asset_samples(1))

    def test_partially_annotated_sample_rejected(self):
        sample = inline_samples(1)[0]
        broken = type(sample)(
            sample_id=sample.sample_id,
            query=sample.query,
            candidates=sample.candidates[:-1]
            + (Candidate(id=99, kind=CandidateKind.DISTRACTOR, asset="x://y"),),
        )
        with pytest.raises(BenchFileError):
            sample_mode(broken)


class TestHeaders:
    def test_missing_header(self):
        with pytest.raises(BenchFileError):
            read_benchmark(io.StringIO(""))

    def test_wrong_format_name(self):
        with pytest.raises(BenchFileError):
            read_benchmark(io.StringIO('{"format":"other","version":1,"mode":"inline"}\n'))

    def test_wrong_version(self):
        with pytest.raises(BenchFileError):
            read_benchmark(io.StringIO('{"format":"fbcir-bench","version":9,"mode":"inline"}\n'))

    def test_unknown_mode(self):
        with pytest.raises(BenchFileError):
            read_benchmark(io.StringIO('{"format":"fbcir-bench","version":1,"mode":"weird"}\n'))

    def test_sample_mode_must_match_header(self):
        buf = io.StringIO()
        write_benchmark(buf, inline_samples(1))
        tampered = buf.getvalue().replace('"mode": "inline"', '"mode": "asset"')
        with pytest.raises(BenchFileError):
            read_benchmark(io.StringIO(tampered))

    def test_malformed_sample_line(self):
        buf = io.StringIO()
        write_benchmark(buf, inline_samples(1))
        with pytest.raises(BenchFileError):
            read_benchmark(io.StringIO(buf.getvalue() + "{bad json\n"))


class TestTriplets:
    def test_read_triplets(self):
        lines = (
            '{"query_image":"a.png","query_text":"t","positive_image":"p.png","source":"editing_driven","triplet_id":"t0"}\n'
            '{"query_image":"b.png","query_text":"t","positive_image":"q.png","source":"similarity_paired"}\n'
        )
        trips = read_triplets(io.StringIO(lines))
        assert len(trips) == 2
        assert trips[0].source is TripletSource.EDITING_DRIVEN
        assert trips[1].triplet_id == ""

    def test_bad_triplet(self):
        with pytest.raises(BenchFileError):
            read_triplets(io.StringIO('{"query_image":"a.png"}\n'))
        with pytest.raises(BenchFileError):
            read_triplets(io.StringIO("nope\n"))
