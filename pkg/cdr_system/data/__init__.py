"""Synthetic data - generator and on-disk formats"""
from .io import (
    AnnotationRecord,
    Prediction,
    load_dataset,
    load_prediction,
    load_predictions,
    read_annotations,
    read_pgm,
    save_dataset,
    save_prediction,
    write_pgm,
)
from .synth import Dataset, Sample, SynthGenerator, generate
