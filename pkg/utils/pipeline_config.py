"""
Pipeline configuration.

Precedence: command-line `--key value` > flat `key = value` config file >
SNIPER_* environment variables (.env included) > defaults.
"""

import os
from typing import Dict, List, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import Field, NonNegativeInt, PositiveFloat, PositiveInt, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from utils.errors import ArtifactError

# artifact path fields and their file names under work_dir
DEFAULT_ARTIFACTS = {
    'src_vocab': 'vocab.src',
    'tgt_vocab': 'vocab.tgt',
    'ttable': 'ttable.tsv',
    'ttable_rev': 'ttable_rev.tsv',
    'alignments': 'alignments.gdfa',
    'dict_path': 'dict.tsv',
    'phrases': 'phrases.txt',
    'model': 'model.ckpt',
    'train_log': 'train.log',
    'output': 'translations.txt',
    'stats_out': 'stats.txt',
    'sweep_out': 'decode_sweep.txt',
    'bench_out': 'bench.txt',
}

SWEEP_FIELDS = ('stats_sweep', 'decode_sweep', 'bench_sweep', 'bench_train_sizes')


def parse_sweep(value: str) -> List[int]:
    return [int(item) for item in value.replace(' ', '').split(',') if item]


class PipelineConfig(BaseSettings):
    model_config = SettingsConfigDict(env_prefix='SNIPER_', extra='forbid')

    # corpus and artifact locations
    work_dir: str = 'work'
    log_dir: str = 'logs'
    train_src: str = 'data/toy.src'
    train_tgt: str = 'data/toy.tgt'
    test_src: Optional[str] = None
    test_tgt: Optional[str] = None
    src_vocab: Optional[str] = None
    tgt_vocab: Optional[str] = None
    ttable: Optional[str] = None
    ttable_rev: Optional[str] = None
    alignments: Optional[str] = None
    dict_path: Optional[str] = None
    phrases: Optional[str] = None
    model: Optional[str] = None
    train_log: Optional[str] = None
    output: Optional[str] = None
    attention_dump: Optional[str] = None
    vocab_dump: Optional[str] = None
    stats_out: Optional[str] = None
    sweep_out: Optional[str] = None
    bench_out: Optional[str] = None

    # corpus
    max_len: PositiveInt = 50
    src_vocab_cap: PositiveInt = 30000
    tgt_vocab_cap: PositiveInt = 30000

    # alignment
    em_iters: PositiveInt = 5
    diagonal_tension: float = 0.0
    n_jobs: int = 1

    # dictionary and phrase library
    dict_max_candidates: PositiveInt = 50
    dict_min_prob: float = Field(0.0, ge=0.0, le=1.0)
    max_phrase_src: PositiveInt = 4
    max_phrase_tgt: PositiveInt = 4

    # sentence vocabularies
    dict_top_n: NonNegativeInt = 10
    phrase_top_k: NonNegativeInt = 10
    common_top_n: NonNegativeInt = 2000
    stats_mode: str = 'train'
    stats_sweep: str = '10,20,50'

    # model and training
    d_emb: PositiveInt = 64
    d_h: PositiveInt = 64
    d_s: PositiveInt = 64
    d_o: PositiveInt = 64
    d_att: PositiveInt = 64
    out_depth: PositiveInt = 1
    rho: float = Field(0.95, gt=0.0, lt=1.0)
    epsilon: PositiveFloat = 1e-6
    lr: PositiveFloat = 1.0
    batch_size: PositiveInt = 80
    epochs: PositiveInt = 10
    freeze_embeddings_after: Optional[NonNegativeInt] = None
    full_softmax: bool = False
    force_batch_vocab_size: Optional[PositiveInt] = None
    max_batches: Optional[PositiveInt] = None
    dtype: str = 'float64'

    # decoding
    beam: PositiveInt = 12
    decode_max_len: PositiveInt = 50
    decode_common_top_n: NonNegativeInt = 2000
    length_norm: bool = False
    unk_replace: bool = True
    smooth_bleu: bool = False
    decode_sweep: str = ''

    # benchmark
    bench_vocab_size: PositiveInt = 50000
    bench_sweep: str = '500,1000,2000,4000'
    bench_train_sizes: str = '2000,30000'
    bench_runs: PositiveInt = 5
    bench_warmup: NonNegativeInt = 1
    bench_steps: PositiveInt = 200
    bench_dim: PositiveInt = 32
    bench_train_pairs: PositiveInt = 40

    # synthetic corpus
    toy_task: str = 'copy'
    toy_pairs: PositiveInt = 50
    toy_test_pairs: NonNegativeInt = 20

    seed: int = 1234
    force: bool = False

    @field_validator('test_src', 'test_tgt', 'attention_dump', 'vocab_dump', 'freeze_embeddings_after',
                     'force_batch_vocab_size', 'max_batches', *DEFAULT_ARTIFACTS, mode='before')
    @classmethod
    def _none_words(cls, value):
        if isinstance(value, str) and value.strip().lower() in ('', 'none', 'null'):
            return None
        return value

    @field_validator(*SWEEP_FIELDS)
    @classmethod
    def _valid_sweep(cls, value: str) -> str:
        try:
            parse_sweep(value)
        except ValueError:
            raise ValueError(f"expected comma-separated integers, got '{value}'") from None
        return value

    @field_validator('diagonal_tension')
    @classmethod
    def _no_diagonal_prior(cls, value: float) -> float:
        if value != 0.0:
            raise ValueError("a diagonal alignment prior is not implemented; keep diagonal_tension = 0")
        return value

    @field_validator('stats_mode')
    @classmethod
    def _valid_mode(cls, value: str) -> str:
        if value not in ('train', 'decode'):
            raise ValueError(f"stats_mode must be 'train' or 'decode', got '{value}'")
        return value

    @field_validator('toy_task')
    @classmethod
    def _valid_task(cls, value: str) -> str:
        if value not in ('copy', 'ambiguous'):
            raise ValueError(f"toy_task must be 'copy' or 'ambiguous', got '{value}'")
        return value

    @model_validator(mode='after')
    def _default_paths(self):
        for name, filename in DEFAULT_ARTIFACTS.items():
            if getattr(self, name) is None:
                setattr(self, name, os.path.join(self.work_dir, filename))
        return self

    def sweep(self, name: str) -> List[int]:
        return parse_sweep(getattr(self, name))


def read_config_file(path: str) -> Dict[str, str]:
    if not os.path.exists(path):
        raise ArtifactError(f"config file {path} not found")
    return {key.strip().lower().replace('-', '_'): value
            for key, value in dotenv_values(path).items() if value is not None}


def load_config(config_file: Optional[str] = None, overrides: Optional[Dict[str, str]] = None) -> PipelineConfig:
    load_dotenv()
    values: Dict[str, str] = {}
    if config_file:
        values.update(read_config_file(config_file))
    values.update(overrides or {})
    return PipelineConfig(**values)
