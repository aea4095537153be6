# Файл: tests/test_transcript.py
from fractions import Fraction

import pytest

from src.calibeat_engine.binning import GeneralBinning, PureBinning
from src.calibeat_engine.errors import (
    EmptySequence,
    NonContiguousPeriods,
    TranscriptParseError,
    UnknownLabel,
)
from src.calibeat_engine.scores import brier
from src.data_io.client import TranscriptClient
from src.data_io.transcript import dumps_jsonl, parse_csv, parse_jsonl


@pytest.fixture
def client():
    return TranscriptClient()


def test_bundled_jsonl_matches_replayed_example(client, example1, quadratic):
    transcript = client.load_transcript("example1.jsonl")
    assert transcript.exact
    assert len(transcript) == 10
    assert transcript.actions == example1.actions
    assert [c.key() for c in transcript.forecasts] == [c.key() for c in example1.forecasts]
    assert brier(quadratic, transcript.actions, transcript.forecasts) == Fraction(3, 10)
    assert list(transcript.binning("b").counts().values()) == [5, 5]


def test_bundled_csv_matches_jsonl(client):
    from_csv = client.load_transcript("example1.csv", exact=True)
    from_jsonl = client.load_transcript("example1.jsonl")
    assert from_csv.actions == from_jsonl.actions
    assert [c.key() for c in from_csv.forecasts] == [c.key() for c in from_jsonl.forecasts]
    assert [b.key() for b in from_csv.reference] == [b.key() for b in from_jsonl.reference]


def test_label_reference_transcript(client):
    transcript = client.load_transcript("example52.jsonl")
    assert set(transcript.reference) == {"b"}
    assert transcript.forecasts[3].scalar == Fraction(1, 3)


def test_dumps_round_trip(example1):
    restored = parse_jsonl(dumps_jsonl(example1))
    assert restored.exact
    assert restored.forecasts == example1.forecasts
    assert restored.reference == example1.reference


def test_reference_tuples_and_named_bins():
    text = "\n".join([
        '{"t": 1, "a": "0", "b_tuple": ["x", "p"], "c": [0.5, 0.5], "bins": {"h": "u", "s": {"u": 0.5, "v": 0.5}}}',
        '{"t": 2, "a": "1", "b_tuple": ["y", "p"], "c": [0.5, 0.5], "bins": {"h": "v", "s": {"v": 1}}}',
    ])
    transcript = parse_jsonl(text)
    assert transcript.reference == [("x", "p"), ("y", "p")]
    assert isinstance(transcript.binning("h"), PureBinning)
    assert isinstance(transcript.binning("s"), GeneralBinning)
    with pytest.raises(TranscriptParseError):
        transcript.binning("missing")
    assert parse_jsonl(dumps_jsonl(transcript)).reference == transcript.reference


def test_parse_errors():
    with pytest.raises(TranscriptParseError):
        parse_jsonl("not json")
    with pytest.raises(NonContiguousPeriods):
        parse_jsonl('{"t": 1, "a": "0"}\n{"t": 3, "a": "1"}')
    with pytest.raises(UnknownLabel):
        parse_jsonl('{"t": 1, "a": "2"}')
    with pytest.raises(EmptySequence):
        parse_jsonl('{"action_set": ["0", "1"]}')
    with pytest.raises(TranscriptParseError):
        parse_jsonl('{"t": 1, "a": "0", "c": [0.5, 0.5]}\n{"t": 2, "a": "1"}')


def test_csv_requires_period_and_action_columns():
    with pytest.raises(TranscriptParseError):
        parse_csv("x,y\n1,2\n")
    with pytest.raises(NonContiguousPeriods):
        parse_csv("t,a\n2,0\n")


def test_missing_forecasts_reported():
    transcript = parse_jsonl('{"t": 1, "a": "0", "b": "x"}')
    with pytest.raises(EmptySequence):
        transcript.binning("forecast")
