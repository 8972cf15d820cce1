"""
Word dictionary extraction and per-sentence dictionary vocabularies
"""

import pytest

from utils.align import NULL, TTable
from utils.corpus import UNK, build_vocabulary
from utils.lexicon import WordDictionary, extract_dictionary, sentence_dict_vocab


@pytest.fixture
def table():
    return TTable({
        NULL: {4: 0.5, 5: 0.5},
        4: {4: 0.6, 5: 0.3, 6: 0.1},
        5: {6: 0.7, UNK: 0.2, 4: 0.1},
        6: {5: 0.5, 4: 0.5},
    })


def test_dictionary_ranks_by_probability_then_id(table):
    dictionary = extract_dictionary(table)

    assert dictionary.top(4, 3) == [4, 5, 6]
    assert dictionary.top(6, 2) == [4, 5]


def test_dictionary_skips_null_and_reserved_targets(table):
    dictionary = extract_dictionary(table)

    assert NULL not in dictionary.entries
    assert dictionary.top(5, 10) == [6, 4]


def test_dictionary_truncates_and_filters(table):
    dictionary = extract_dictionary(table, max_candidates=2, min_prob=0.2)

    assert dictionary.candidates(4) == [(4, 0.6), (5, 0.3)]
    assert dictionary.candidates(5) == [(6, 0.7)]
    assert dictionary.candidates(99) == []


def test_sentence_dict_vocab_is_union_of_top_n(table):
    dictionary = extract_dictionary(table)

    assert sentence_dict_vocab(dictionary, [4, 5, 4], top_n=1) == {4, 6}
    assert sentence_dict_vocab(dictionary, [4, 6], top_n=2) == {4, 5}
    assert sentence_dict_vocab(dictionary, [99], top_n=5) == set()


def test_sentence_dict_vocab_rejects_top_n_beyond_stored_candidates(table):
    dictionary = extract_dictionary(table, max_candidates=2)

    with pytest.raises(ValueError):
        sentence_dict_vocab(dictionary, [4], top_n=3)


def test_dictionary_file_reloads_the_same_entries(table, tmp_path):
    src_vocab = build_vocabulary([['a', 'b', 'c']], 100)
    tgt_vocab = build_vocabulary([['x', 'y', 'z']], 100)
    dictionary = extract_dictionary(table)
    path = tmp_path / 'dict.tsv'
    dictionary.save(str(path), src_vocab, tgt_vocab, header='# header')

    lines = path.read_text(encoding='utf-8').splitlines()
    reloaded = WordDictionary.from_lines(lines[1:], src_vocab, tgt_vocab)

    assert lines[0] == '# header'
    assert reloaded.entries == dictionary.entries
