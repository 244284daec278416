
import logging
import os
import re
from dataclasses import dataclass, fields, replace
from typing import Any, Optional, get_type_hints

from fracmerge.agglomerator import (MAX_ITERATIONS, MERGE_THRESHOLD,
                                    AssemblyConfig)
from fracmerge.autoencoder_trainer import AutoencoderTrainingConfig
from fracmerge.command_cls import convert_value, type_name
from fracmerge.contacts import CONTACT_EPSILON
from fracmerge.denoise_transformer import DenoiserConfig
from fracmerge.denoiser_trainer import DenoiserTrainingConfig
from fracmerge.diffusion import DEFAULT_SAMPLING_STEPS
from fracmerge.fragment_autoencoder import COMMITMENT_WEIGHT, EncoderConfig
from fracmerge.fracture import PRIMITIVE_SHAPES
from fracmerge.inner_surface import INNER_SURFACE_DISTANCE
from fracmerge.invalid_argument import InvalidArgument
from fracmerge.noise_schedule import KNOT, NUM_TIMESTEPS
from fracmerge.pair_verifier import (ROTATION_THRESHOLD_DEG,
                                     TRANSLATION_THRESHOLD, VerifierConfig)
from fracmerge.verifier_trainer import VerifierTrainingConfig

logger = logging.getLogger(__name__)

_KEY_VALUE_REGEX = re.compile("([^ =]+)=(.+)")

AUTOENCODER_CHECKPOINT = "autoencoder.ckpt"
DENOISER_CHECKPOINT = "denoiser.ckpt"
VERIFIER_CHECKPOINT = "verifier.ckpt"


@dataclass(frozen=True)
class RunConfig:
    """Every setting of a pipeline run, with the standard training and
    inference values as defaults."""

    # data
    data_root: str = "data"
    dataset: str = "synthetic"
    breaking_bad_subset: str = "everyday"
    breaking_bad_split_file: Optional[str] = None
    shapes: tuple[str, ...] = PRIMITIVE_SHAPES
    count: int = 40
    min_frags: int = 2
    max_frags: int = 8
    split: str = "test"
    # artifacts
    checkpoint_dir: str = "checkpoints"
    output_dir: str = "results"
    seed: int = 0
    device: str = "cpu"
    # autoencoder
    ae_epochs: int = 200
    ae_batch_size: int = 64
    ae_lr: float = 1e-3
    num_codes: int = 1024
    code_dim: int = 16
    commitment_weight: float = COMMITMENT_WEIGHT
    # denoiser
    num_timesteps: int = NUM_TIMESTEPS
    knot: int = KNOT
    hidden_size: int = 512
    num_heads: int = 8
    num_layers: int = 6
    epochs: int = 2000
    batch_size: int = 64
    lr: float = 2e-4
    weight_decay: float = 1e-6
    lr_decay_fractions: tuple[float, ...] = (0.6, 0.85)
    lr_decay: float = 0.1
    neighbor_anchor_probability: float = 0.5
    contact_epsilon: float = CONTACT_EPSILON
    # verifier
    verifier_epochs: int = 100
    verifier_batch_size: int = 64
    verifier_lr: float = 2e-4
    verifier_hidden_size: int = 256
    verifier_layers: int = 4
    rotation_threshold: float = ROTATION_THRESHOLD_DEG
    translation_threshold: float = TRANSLATION_THRESHOLD
    # assembly and evaluation
    steps: int = DEFAULT_SAMPLING_STEPS
    iterations: int = MAX_ITERATIONS
    threshold: float = MERGE_THRESHOLD
    inner_distance: float = INNER_SURFACE_DISTANCE
    iteration_sweep: tuple[int, ...] = (1, 2, 4, 6)
    step_sweep: tuple[int, ...] = (5, 10, 20, 50)
    rmse_aggregation: str = "assembly"
    include_anchor: bool = False
    limit: Optional[int] = None

    @property
    def autoencoder_path(self) -> str:
        return os.path.join(self.checkpoint_dir, AUTOENCODER_CHECKPOINT)

    @property
    def denoiser_path(self) -> str:
        return os.path.join(self.checkpoint_dir, DENOISER_CHECKPOINT)

    @property
    def verifier_path(self) -> str:
        return os.path.join(self.checkpoint_dir, VERIFIER_CHECKPOINT)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(num_codes=self.num_codes, code_dim=self.code_dim,
                             commitment_weight=self.commitment_weight)

    def autoencoder_training(self) -> AutoencoderTrainingConfig:
        return AutoencoderTrainingConfig(
            epochs=self.ae_epochs, batch_size=self.ae_batch_size,
            lr=self.ae_lr, seed=self.seed, device=self.device)

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            hidden_size=self.hidden_size, num_heads=self.num_heads,
            num_layers=self.num_layers, num_timesteps=self.num_timesteps,
            knot=self.knot)

    def denoiser_training(self) -> DenoiserTrainingConfig:
        return DenoiserTrainingConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            weight_decay=self.weight_decay,
            lr_decay_fractions=self.lr_decay_fractions,
            lr_decay=self.lr_decay,
            neighbor_anchor_probability=self.neighbor_anchor_probability,
            contact_epsilon=self.contact_epsilon, seed=self.seed,
            device=self.device)

    def verifier_config(self) -> VerifierConfig:
        return VerifierConfig(
            hidden_size=self.verifier_hidden_size,
            num_layers=self.verifier_layers,
            index_encoding_size=self.verifier_hidden_size // 2)

    def verifier_training(self) -> VerifierTrainingConfig:
        return VerifierTrainingConfig(
            epochs=self.verifier_epochs,
            batch_size=self.verifier_batch_size, lr=self.verifier_lr,
            weight_decay=self.weight_decay, seed=self.seed,
            device=self.device)

    def assembly_config(self) -> AssemblyConfig:
        return AssemblyConfig(max_iterations=self.iterations,
                              merge_threshold=self.threshold,
                              inner_distance=self.inner_distance)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Replaces the given settings, ignoring those passed as None.

        Raises
        ------
        InvalidArgument
            If a setting does not exist.
        """
        names = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise InvalidArgument(
                f"Unknown config keys: {', '.join(unknown)}")
        return replace(self, **{name: value
                                for name, value in overrides.items()
                                if value is not None})


def parse_run_config(text: str, source: str = "<string>") -> dict[str, Any]:
    """Parses a flat `key=value` document, one setting per line, `#` starting
    a comment, into converted values.

    Raises
    ------
    InvalidArgument
        On an unknown key, a malformed line or a value that cannot be
        converted to the setting's type.
    """
    hints = get_type_hints(RunConfig)
    values: dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        match = _KEY_VALUE_REGEX.fullmatch(line.replace(" = ", "="))
        if not match:
            raise InvalidArgument(
                f"{source}:{number}: expected key=value, got '{line}'")
        key, value = match.group(1).strip(), match.group(2).strip()
        if key not in hints:
            raise InvalidArgument(f"{source}:{number}: unknown key '{key}'")
        try:
            values[key] = convert_value(value, hints[key])
        except ValueError:
            raise InvalidArgument(
                f"{source}:{number}: cannot convert '{value}' to " +
                f"{type_name(hints[key])} for '{key}'")
    return values


def load_run_config(path: Optional[str] = None,
                    **overrides: Any) -> RunConfig:
    """Builds a RunConfig from the defaults, then the config file at `path`
    (if any), then `overrides` that are not None."""
    config = RunConfig()
    if path is not None:
        if not os.path.exists(path):
            raise InvalidArgument(f"Config file not found: {path}")
        with open(path, "r", encoding="utf-8") as file:
            config = config.with_overrides(
                **parse_run_config(file.read(), path))
        logger.info("Loaded run config from %s", path)
    return config.with_overrides(**overrides)
