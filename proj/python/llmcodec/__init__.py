"""Python bindings for the llmcodec C++ core."""

from ._llmcodec import (
    Codec,
    Demonstration,
    Episode,
    Error,
    TaskKind,
    TokenStream,
    build_prompt,
    extract_label,
    load_episodes,
    load_wav,
    run_cli,
    save_episodes,
    save_wav,
    snr_db,
    stft_magnitude,
    tokens_per_second,
)

__all__ = [
    "Codec",
    "Demonstration",
    "Episode",
    "Error",
    "TaskKind",
    "TokenStream",
    "build_prompt",
    "extract_label",
    "load_episodes",
    "load_wav",
    "run_cli",
    "save_episodes",
    "save_wav",
    "snr_db",
    "stft_magnitude",
    "tokens_per_second",
]
