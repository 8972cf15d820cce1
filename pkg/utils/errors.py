"""
Exception types shared by the pipeline stages.

Everything that is a problem with the data or with an artifact contract derives
from DataContractError so the CLI can map it to exit code 2.
"""

from typing import Optional


class DataContractError(ValueError):
    """Input data or an artifact violates a documented contract"""


class CorpusError(DataContractError):
    """Parallel corpus could not be read as a line-aligned pair of files"""


class VocabularyContractError(DataContractError):
    """A restricted vocabulary is missing an id it must contain"""


class ArtifactError(DataContractError):
    """A stage input is missing, malformed or was produced under another config"""


class TrainingDivergedError(DataContractError):
    """Loss became non-finite during training"""

    def __init__(self, epoch: int, batch: int, loss: Optional[float] = None):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch}, batch {batch} (loss={loss})")
