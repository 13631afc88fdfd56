"""Gender-ambiguous voice transformation with privacy/utility evaluation."""

from ._core import (
    SAMPLE_RATE,
    CheckpointError,
    DivergenceError,
    GenganError,
    InvalidInput,
    MissingAsset,
    band_centers,
    build_corpus,
    compute_eer,
    discriminator_loss,
    evaluate,
    format_table,
    generator_loss,
    invert_mel,
    load_manifest,
    mel_spectrogram,
    normalized_eer,
    normalized_gr,
    read_wav,
    sample_soft_labels,
    train,
    train_attackers,
    transform,
    word_accuracy,
    word_error_rate,
    write_wav,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
