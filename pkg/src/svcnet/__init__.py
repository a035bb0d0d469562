"""Speaker-voice-code modelling: per-sound bottleneck encoders, a
pattern-completion network producing a compact speaker code from a few
words of speech, and a recognizer that consumes the code as an
adaptation input."""

__version__ = "0.1.0"
