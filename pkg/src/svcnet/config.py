"""Declarative run configuration: one JSON file, flag overrides win."""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

from .corpus import CorpusSpec
from .errors import DataError
from .nets import TrainConfig
from .recognizer import RecognizerConfig
from .svc import FEEDBACK, MODES


@dataclass
class RunConfig:
    out_dir: str = "runs/default"
    corpus_path: str = ""  # defaults to <out_dir>/corpus.csv
    model_dir: str = ""    # defaults to <out_dir>/models
    report_dir: str = ""   # defaults to <out_dir>/reports

    # corpus generation
    n_speakers: int = 20
    n_words: int = 10
    phones_per_word: int = 2
    states_per_phone: int = 3
    frames_per_state: int = 4
    noise_std: float = 0.05
    feature_dim: int = 8
    latent_dim: int = 2
    speaker_effect_scale: float = 1.0
    corpus_seed: int = 101

    # speaker-disjoint split
    train_fraction: float = 0.7
    split_seed: int = 202

    # per-sound encoders
    ppc_dim: int = 2
    ppc_learning_rate: float = 0.05
    ppc_epochs: int = 150
    ppc_seed: int = 303
    min_sound_frames: int = 2

    # pattern-completion net
    svc_dim: int = 2
    svc_flank: int = 12
    svc_learning_rate: float = 0.02
    svc_epochs: int = 200
    svc_seed: int = 404
    accumulation_mode: str = FEEDBACK

    # recognizer
    rec_acoustic_units: int = 24
    rec_state_units: int = 16
    rec_window: int = 0
    rec_learning_rate: float = 0.15
    rec_epochs: int = 50
    rec_seed: int = 505

    def __post_init__(self):
        if self.accumulation_mode not in MODES:
            raise DataError(f"accumulation_mode must be one of {MODES}")

    # resolved paths -----------------------------------------------------
    @property
    def resolved_corpus_path(self):
        return self.corpus_path or os.path.join(self.out_dir, "corpus.csv")

    @property
    def resolved_latents_path(self):
        return self.resolved_corpus_path + ".latents"

    @property
    def resolved_model_dir(self):
        return self.model_dir or os.path.join(self.out_dir, "models")

    @property
    def resolved_report_dir(self):
        return self.report_dir or os.path.join(self.out_dir, "reports")

    # derived stage configs ----------------------------------------------
    def corpus_spec(self):
        return CorpusSpec(
            n_speakers=self.n_speakers,
            n_words=self.n_words,
            phones_per_word=self.phones_per_word,
            states_per_phone=self.states_per_phone,
            frames_per_state=self.frames_per_state,
            noise_std=self.noise_std,
            seed=self.corpus_seed,
            feature_dim=self.feature_dim,
            latent_dim=self.latent_dim,
            speaker_effect_scale=self.speaker_effect_scale,
        )

    def ppc_train_config(self):
        return TrainConfig(self.ppc_learning_rate, self.ppc_epochs, self.ppc_seed)

    def svc_train_config(self):
        return TrainConfig(self.svc_learning_rate, self.svc_epochs, self.svc_seed)

    def recognizer_config(self):
        return RecognizerConfig(
            acoustic_units=self.rec_acoustic_units,
            state_units=self.rec_state_units,
            window=self.rec_window,
            learning_rate=self.rec_learning_rate,
            epochs=self.rec_epochs,
            seed=self.rec_seed,
        )

    def seeds(self):
        return {
            "corpus": self.corpus_seed,
            "split": self.split_seed,
            "ppc": self.ppc_seed,
            "svc": self.svc_seed,
            "rec": self.rec_seed,
        }

    def rebase_seeds(self, seed):
        self.corpus_seed = seed
        self.split_seed = seed + 1
        self.ppc_seed = seed + 2
        self.svc_seed = seed + 3
        self.rec_seed = seed + 4

    def config_hash(self):
        canon = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_file(cls, path):
        with open(path) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: invalid config JSON: {e}") from e
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**data)

    def save(self, path):
        from .fileio import atomic_write_text

        atomic_write_text(
            path, json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2) + "\n"
        )
