from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from marg.comments import format_numbered, is_prune_signal, parse_comment_list, parse_refinement


@pytest.mark.parametrize(
    "text, expected",
    [
        ('{"revised_comment": "X"}', ["X"]),
        ("1. A\n2. B", ["A", "B"]),
        ("no list here", ["no list here"]),
        ("", []),
        ("1) A\n2) B", ["A", "B"]),
        ("- A\n* B", ["A", "B"]),
        ('Here you go:\n```json\n{"comments": ["P", "Q"]}\n```', ["P", "Q"]),
        ('["a", "b"]', ["a", "b"]),
        ('{"comments": [{"comment": "c1"}, {"text": "c2"}]}', ["c1", "c2"]),
    ],
)
def test_parse_examples(text, expected):
    assert parse_comment_list(text) == expected


def test_preamble_dropped():
    text = "After discussing with the group, here is the list:\n\n1. Add baseline X.\n2. Report variance."
    assert parse_comment_list(text) == ["Add baseline X.", "Report variance."]


def test_bold_headers_kept_as_text():
    text = "1. **Ablation Studies**: isolate each part.\n2. __Seeds__: use more."
    assert parse_comment_list(text) == ["Ablation Studies: isolate each part.", "Seeds: use more."]


def test_continuation_and_nested_lines_fold_into_item():
    text = "1. First point\n   continues here\n   - detail\n2. Second\n\nThanks for reading."
    assert parse_comment_list(text) == ["First point continues here - detail", "Second"]


def test_trailing_prose_is_not_an_item():
    assert parse_comment_list("1. A\n2. B\n\nLet me know if you need more.") == ["A", "B"]


@pytest.mark.parametrize(
    "text, expected",
    [
        ('{"revised_comment": "Improved text"}', ["Improved text"]),
        ('{"revised_comments": []}', []),
        ('{"revised_comments": ["a", "b"]}', ["a", "b"]),
        ("null", []),
        ('{"revised_comment": null}', []),
        ("This comment should be removed because the paper already has ablations.", []),
        ("The comment is invalid.", []),
        ("1. Split part one\n2. Split part two", ["Split part one", "Split part two"]),
    ],
)
def test_refinement_parsing(text, expected):
    assert parse_refinement(text) == expected


def test_prune_signal_needs_wording():
    assert is_prune_signal("It should be pruned.")
    assert not is_prune_signal("Add more seeds.")


items = st.lists(
    st.text(alphabet="abcdefgh XYZ,;", min_size=1, max_size=30).map(lambda s: " ".join(s.split())).filter(bool),
    min_size=1,
    max_size=8,
)


@given(items)
def test_numbered_round_trip(comments):
    assert parse_comment_list(format_numbered(comments)) == comments
