"""
Artifact headers and config-hash discipline.

Text artifacts start with
    # vocab_sniper stage=<stage> config_hash=<hex> config=<json>
where the hash covers only the settings that feed that stage, so a change
further downstream does not invalidate upstream files.
"""

import hashlib
import json
import logging
import os
import re
from typing import Dict, List, Optional, Tuple

from utils.errors import ArtifactError
from utils.pipeline_config import PipelineConfig

logger = logging.getLogger(__name__)

HEADER_PREFIX = '# vocab_sniper'
HEADER_PATTERN = re.compile(r'^# vocab_sniper stage=(\S+) config_hash=([0-9a-f]+)(?: config=(.*))?$')

_CORPUS_KEYS = ['train_src', 'train_tgt', 'max_len', 'src_vocab_cap', 'tgt_vocab_cap']
_ALIGN_KEYS = _CORPUS_KEYS + ['em_iters', 'diagonal_tension']
_LEXICON_KEYS = _ALIGN_KEYS + ['dict_max_candidates', 'dict_min_prob']
_PHRASE_KEYS = _ALIGN_KEYS + ['max_phrase_src', 'max_phrase_tgt']
_TRAIN_KEYS = sorted(set(_LEXICON_KEYS + _PHRASE_KEYS + [
    'd_emb', 'd_h', 'd_s', 'd_o', 'd_att', 'out_depth', 'rho', 'epsilon', 'lr', 'batch_size', 'epochs',
    'seed', 'freeze_embeddings_after', 'dict_top_n', 'phrase_top_k', 'common_top_n', 'full_softmax',
    'force_batch_vocab_size', 'max_batches', 'dtype',
]))

STAGE_KEYS: Dict[str, List[str]] = {
    'align': _ALIGN_KEYS,
    'lexicon': _LEXICON_KEYS,
    'phrases': _PHRASE_KEYS,
    'stats': sorted(set(_LEXICON_KEYS + _PHRASE_KEYS + [
        'dict_top_n', 'phrase_top_k', 'common_top_n', 'stats_mode', 'stats_sweep', 'test_src', 'test_tgt',
        'batch_size',
    ])),
    'train': _TRAIN_KEYS,
    'decode': sorted(set(_TRAIN_KEYS + [
        'test_src', 'test_tgt', 'beam', 'decode_max_len', 'decode_common_top_n', 'length_norm', 'unk_replace',
        'smooth_bleu', 'decode_sweep',
    ])),
    'bench': ['bench_vocab_size', 'bench_sweep', 'bench_train_sizes', 'bench_runs', 'bench_steps', 'bench_dim',
              'bench_train_pairs', 'seed'],
}


def stage_config(config: PipelineConfig, stage: str) -> Dict:
    if stage not in STAGE_KEYS:
        raise ValueError(f"unknown stage '{stage}'")
    return {key: getattr(config, key) for key in STAGE_KEYS[stage]}


def stage_hash(config: PipelineConfig, stage: str) -> str:
    payload = json.dumps(stage_config(config, stage), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]


def header_line(config: PipelineConfig, stage: str) -> str:
    settings = json.dumps(stage_config(config, stage), sort_keys=True, default=str, separators=(',', ':'))
    return f"{HEADER_PREFIX} stage={stage} config_hash={stage_hash(config, stage)} config={settings}"


def parse_header(line: str) -> Optional[Tuple[str, str]]:
    match = HEADER_PATTERN.match(line.rstrip('\n'))
    if not match:
        return None
    return match.group(1), match.group(2)


def read_artifact(path: str, stage: str, config: PipelineConfig, force: bool = False) -> List[str]:
    """Body lines of an artifact written by `stage`, after checking its header against config"""
    if not os.path.exists(path):
        raise ArtifactError(f"{stage} artifact {path} is missing; run the {stage} stage first")
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()

    header = parse_header(lines[0]) if lines else None
    if header is None:
        raise ArtifactError(f"{path} has no vocab_sniper header line")
    found_stage, found_hash = header
    expected = stage_hash(config, stage)
    if found_stage != stage or found_hash != expected:
        message = (f"{path} was produced by stage={found_stage} config_hash={found_hash}, "
                   f"current {stage} config hashes to {expected}")
        if not force:
            raise ArtifactError(f"stale artifact: {message} (rerun {stage} or pass --force)")
        logger.warning(f"⚠️ Using stale artifact under --force: {message}")
    return lines[1:]


def write_artifact(path: str, stage: str, config: PipelineConfig, lines: List[str]):
    ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(header_line(config, stage) + '\n')
        for line in lines:
            f.write(line + '\n')


def ensure_parent(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
