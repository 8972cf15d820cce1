"""
Synthetic parallel corpora for smoke runs and end-to-end checks.

copy:      target = source over a fixed symbol inventory
ambiguous: a leading domain tag selects one of two translations for
           every following source symbol
"""

import logging
import os
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

COPY = 'copy'
AMBIGUOUS = 'ambiguous'
TASKS = (COPY, AMBIGUOUS)


def copy_task(n_pairs: int = 50, n_symbols: int = 30, min_len: int = 3, max_len: int = 8,
              seed: int = 0) -> Tuple[List[str], List[str]]:
    rng = np.random.default_rng(seed)
    lines = []
    for _ in range(n_pairs):
        length = int(rng.integers(min_len, max_len + 1))
        lines.append(' '.join(f"s{int(k)}" for k in rng.integers(0, n_symbols, size=length)))
    return lines, list(lines)


def ambiguous_task(n_pairs: int = 500, n_symbols: int = 20, min_len: int = 3, max_len: int = 8,
                   seed: int = 0) -> Tuple[List[str], List[str]]:
    """`<d0> w3 w7` -> `t3a t7a`, `<d1> w3 w7` -> `t3b t7b`"""
    rng = np.random.default_rng(seed)
    src_lines, tgt_lines = [], []
    for _ in range(n_pairs):
        domain = int(rng.integers(0, 2))
        length = int(rng.integers(min_len, max_len + 1))
        symbols = [int(k) for k in rng.integers(0, n_symbols, size=length)]
        suffix = 'ab'[domain]
        src_lines.append(' '.join([f"<d{domain}>"] + [f"w{k}" for k in symbols]))
        tgt_lines.append(' '.join(f"t{k}{suffix}" for k in symbols))
    return src_lines, tgt_lines


def generate(task: str, n_pairs: int, seed: int = 0, **kwargs) -> Tuple[List[str], List[str]]:
    if task == COPY:
        return copy_task(n_pairs, seed=seed, **kwargs)
    if task == AMBIGUOUS:
        return ambiguous_task(n_pairs, seed=seed, **kwargs)
    raise ValueError(f"unknown synthetic task '{task}', expected one of {', '.join(TASKS)}")


def write_corpus(src_lines: List[str], tgt_lines: List[str], src_path: str, tgt_path: str):
    for path in (src_path, tgt_path):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
    with open(src_path, 'w', encoding='utf-8') as f:
        f.writelines(line + '\n' for line in src_lines)
    with open(tgt_path, 'w', encoding='utf-8') as f:
        f.writelines(line + '\n' for line in tgt_lines)
    logger.info(f"📝 Wrote {len(src_lines)} synthetic pairs to {src_path} / {tgt_path}")
