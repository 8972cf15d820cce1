"""
Command line, configuration precedence and artifact headers
"""

import os

import pytest
from pydantic import ValidationError

from utils.artifacts import parse_header, read_artifact, stage_hash
from utils.enhanced_logger import get_enhanced_logger
from utils.errors import ArtifactError
from utils.pipeline import cmd_stats
from utils.pipeline_config import PipelineConfig, load_config
from vocab_sniper import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, parse_overrides

TINY_RUN = """
toy_pairs = 15
toy_test_pairs = 4
em_iters = 3
common_top_n = 5
stats_sweep = 1,2
d_emb = 6
d_h = 6
d_s = 6
d_o = 6
d_att = 6
batch_size = 5
epochs = 2
epsilon = 1e-3
beam = 2
decode_max_len = 8
decode_common_top_n = 5
decode_sweep = 2,5
"""


@pytest.fixture
def run_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for key in list(os.environ):
        if key.startswith('SNIPER_'):
            monkeypatch.delenv(key)
    conf = tmp_path / 'run.conf'
    conf.write_text(
        f"work_dir = {tmp_path / 'work'}\n"
        f"log_dir = {tmp_path / 'logs'}\n"
        f"train_src = {tmp_path / 'data' / 'train.src'}\n"
        f"train_tgt = {tmp_path / 'data' / 'train.tgt'}\n"
        f"test_src = {tmp_path / 'data' / 'test.src'}\n"
        f"test_tgt = {tmp_path / 'data' / 'test.tgt'}\n"
        + TINY_RUN,
        encoding='utf-8',
    )
    return tmp_path, str(conf)


def stage(conf, name, *extra):
    return main([name, '--config', conf, *extra])


def prepare(conf, *stages):
    for name in ('toy',) + stages:
        assert stage(conf, name) == EXIT_OK, name


def test_full_pipeline_runs_and_writes_headed_artifacts(run_dir):
    tmp_path, conf = run_dir
    prepare(conf, 'align', 'lexicon', 'phrases', 'stats', 'train')

    assert stage(conf, 'decode') == EXIT_OK

    work = tmp_path / 'work'
    for name, expected_stage in (('ttable.tsv', 'align'), ('alignments.gdfa', 'align'), ('dict.tsv', 'lexicon'),
                                 ('phrases.txt', 'phrases'), ('stats.txt', 'stats'), ('train.log', 'train'),
                                 ('decode_sweep.txt', 'decode')):
        first_line = (work / name).read_text(encoding='utf-8').splitlines()[0]
        assert parse_header(first_line)[0] == expected_stage, name
    assert (work / 'model.ckpt').exists()
    assert (work / 'model.epoch1.ckpt').exists()
    translations = (work / 'translations.txt').read_text(encoding='utf-8').splitlines()
    assert len(translations) == 4


def test_align_rerun_is_byte_identical(run_dir):
    tmp_path, conf = run_dir
    prepare(conf, 'align')
    work = tmp_path / 'work'
    names = ('vocab.src', 'vocab.tgt', 'ttable.tsv', 'ttable_rev.tsv', 'alignments.gdfa')
    first = {name: (work / name).read_bytes() for name in names}

    assert stage(conf, 'align') == EXIT_OK

    assert {name: (work / name).read_bytes() for name in names} == first


def test_stale_upstream_artifact_is_refused_unless_forced(run_dir):
    _, conf = run_dir
    prepare(conf, 'align')

    assert stage(conf, 'lexicon', '--em-iters', '4') == EXIT_DATA
    assert stage(conf, 'lexicon', '--em-iters', '4', '--force') == EXIT_OK


def test_downstream_settings_do_not_invalidate_upstream_artifacts(run_dir):
    _, conf = run_dir
    prepare(conf, 'align')

    assert stage(conf, 'lexicon', '--beam', '7', '--epochs', '9') == EXIT_OK


def test_missing_upstream_artifacts_exit_with_data_error(run_dir):
    _, conf = run_dir
    prepare(conf)

    assert stage(conf, 'phrases') == EXIT_DATA
    assert stage(conf, 'decode') == EXIT_DATA


def test_decode_refuses_checkpoint_from_another_training_config(run_dir):
    _, conf = run_dir
    prepare(conf, 'align', 'lexicon', 'phrases', 'train')

    assert stage(conf, 'decode', '--epochs', '3') == EXIT_DATA
    assert stage(conf, 'decode', '--epochs', '3', '--force') == EXIT_OK


def test_decode_keeps_empty_source_lines_and_is_repeatable(run_dir):
    tmp_path, conf = run_dir
    prepare(conf, 'align', 'lexicon', 'phrases', 'train')
    data = tmp_path / 'data'
    (data / 'test.src').write_text('s1 s2\n\ns3\n', encoding='utf-8')
    (data / 'test.tgt').write_text('s1 s2\n\ns3\n', encoding='utf-8')

    assert stage(conf, 'decode', '--attention-dump', str(tmp_path / 'attn.txt')) == EXIT_OK
    output = tmp_path / 'work' / 'translations.txt'
    first = output.read_bytes()
    lines = first.decode('utf-8').split('\n')
    assert lines[1] == ''
    assert len(lines) == 4
    assert (tmp_path / 'attn.txt').read_text(encoding='utf-8').startswith('# sentence 0')

    assert stage(conf, 'decode') == EXIT_OK
    assert output.read_bytes() == first


def test_usage_errors_exit_with_one(run_dir):
    _, conf = run_dir

    assert stage(conf, 'align', '--no-such-setting', '3') == EXIT_USAGE
    assert stage(conf, 'align', '--beam', 'wide') == EXIT_USAGE
    assert stage(conf, 'align', 'stray') == EXIT_USAGE
    assert stage(conf, 'align', '--stats-mode', 'sideways') == EXIT_USAGE
    with pytest.raises(SystemExit) as caught:
        main(['teleport'])
    assert caught.value.code == EXIT_USAGE


def test_missing_config_file_is_a_data_error(run_dir):
    tmp_path, _ = run_dir
    assert main(['align', '--config', str(tmp_path / 'nope.conf')]) == EXIT_DATA


def test_parse_overrides():
    assert parse_overrides(['--beam', '5', '--length-norm', '--dict_top_n=3']) == {
        'beam': '5', 'length_norm': 'true', 'dict_top_n': '3',
    }


def test_config_precedence(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    conf = tmp_path / 'c.conf'
    conf.write_text('beam = 4\n', encoding='utf-8')

    monkeypatch.delenv('SNIPER_BEAM', raising=False)
    assert load_config().beam == 12

    monkeypatch.setenv('SNIPER_BEAM', '3')
    assert load_config().beam == 3
    assert load_config(str(conf)).beam == 4
    assert load_config(str(conf), {'beam': '5'}).beam == 5


def test_config_fills_artifact_paths_and_parses_none(tmp_path):
    config = PipelineConfig(work_dir=str(tmp_path), freeze_embeddings_after='none', stats_sweep='10, 20')

    assert config.model == os.path.join(str(tmp_path), 'model.ckpt')
    assert config.freeze_embeddings_after is None
    assert config.sweep('stats_sweep') == [10, 20]


def test_config_rejects_diagonal_prior():
    with pytest.raises(ValueError):
        PipelineConfig(diagonal_tension=4.0)


def test_stage_hash_covers_only_upstream_settings():
    base = PipelineConfig()

    assert stage_hash(base, 'align') == stage_hash(PipelineConfig(beam=3, epochs=99), 'align')
    assert stage_hash(base, 'align') != stage_hash(PipelineConfig(em_iters=9), 'align')
    assert stage_hash(base, 'train') != stage_hash(PipelineConfig(em_iters=9), 'train')
    assert stage_hash(base, 'train') == stage_hash(PipelineConfig(beam=3), 'train')
    assert len(stage_hash(base, 'decode')) == 16


def test_read_artifact_requires_a_header(tmp_path):
    path = tmp_path / 'bare.txt'
    path.write_text('no header\n', encoding='utf-8')

    with pytest.raises(ArtifactError):
        read_artifact(str(path), 'align', PipelineConfig())
    with pytest.raises(ArtifactError):
        read_artifact(str(tmp_path / 'missing.txt'), 'align', PipelineConfig())


def test_stats_keeps_the_phrase_depth_fixed_across_the_dictionary_sweep(run_dir):
    _, conf = run_dir
    prepare(conf, 'align', 'lexicon', 'phrases')

    frame = cmd_stats(load_config(conf, {'phrase_top_k': '3'}), sweep=[1, 2])

    assert list(frame['top_n']) == [1] * 4 + [2] * 4
    assert set(frame['phrase_top_k']) == {3}
    phrase_rows = frame[frame['mix'] == 'P']
    assert phrase_rows['coverage'].nunique() == 1
    assert phrase_rows['avg_sentence_vocab'].nunique() == 1


def test_stats_sweep_deeper_than_the_stored_dictionary_is_refused(run_dir):
    _, conf = run_dir
    prepare(conf, 'align', 'lexicon', 'phrases')

    assert stage(conf, 'stats', '--stats-sweep', '2,51') == EXIT_DATA
    with pytest.raises(ArtifactError):
        cmd_stats(load_config(conf), sweep=[60])


@pytest.mark.parametrize('key', ['em_iters', 'beam', 'batch_size', 'epochs', 'decode_max_len', 'd_h', 'bench_runs'])
def test_counts_below_one_are_usage_errors(run_dir, key):
    _, conf = run_dir

    assert stage(conf, 'align', f"--{key.replace('_', '-')}", '0') == EXIT_USAGE
    with pytest.raises(ValidationError):
        PipelineConfig(**{key: 0})


def test_stage_timings_reach_the_run_summary(tmp_path):
    monitor = get_enhanced_logger(log_dir=str(tmp_path / 'logs'))

    with monitor.stage('align'):
        pass
    with pytest.raises(ArtifactError):
        with monitor.stage('lexicon'):
            raise ArtifactError('missing')

    summary = monitor.log_performance_summary()
    assert 'align' in summary['stages']
    assert 'lexicon' not in summary['stages']
    assert (tmp_path / 'logs' / 'vocabsniper_performance.log').exists()
