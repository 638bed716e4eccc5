"""Two-digit dataset generation, IDX ingestion and dataset files."""

from .bank import BankError, DigitBank, load_idx, synth_bank, write_idx
from .dataset import Dataset, Example, factored_gaussian_noise, gen_dataset
from .io import DatasetFormatError, load_dataset, save_dataset, write_manifest

__all__ = [
    "BankError",
    "Dataset",
    "DatasetFormatError",
    "DigitBank",
    "Example",
    "factored_gaussian_noise",
    "gen_dataset",
    "load_dataset",
    "load_idx",
    "save_dataset",
    "synth_bank",
    "write_idx",
    "write_manifest",
]
