"""
Configuration management for the extraction pipeline.

Environment settings (service endpoints and keys) are read via python-dotenv;
pipeline settings come from a JSON config file, per-task overrides and
command-line flags.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv

from src.exceptions import ConfigError
from src.extraction import MAX_SHOTS, CompletionMode, PromptVariant
from src.segmentation import MIN_SEGMENT_TOKENS, SerializationFormat
from src.summarization import SummarizationStrategy

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()


class Config:
    """Environment configuration for external services."""

    # LLM completion service (required only for the http backend)
    LLM_URL: str = os.getenv("HLDX_LLM_URL", "")
    LLM_KEY: str = os.getenv("HLDX_LLM_KEY", "")

    # External embedding service (required only for the http embedder)
    EMBED_URL: str = os.getenv("HLDX_EMBED_URL", "")
    EMBED_KEY: str = os.getenv("HLDX_EMBED_KEY", "")

    # Default pipeline config file
    CONFIG_PATH: str = os.getenv("HLDX_CONFIG", "")

    LOG_LEVEL: str = os.getenv("HLDX_LOG_LEVEL", "INFO")

    @classmethod
    def validate_llm(cls) -> None:
        """
        Validate that the LLM service settings are present.

        Raises:
            ValueError: If required configuration is missing.
        """
        missing = []
        if not cls.LLM_URL:
            missing.append("HLDX_LLM_URL")
        if not cls.LLM_KEY:
            missing.append("HLDX_LLM_KEY")
        if missing:
            raise ValueError(
                f"Missing required environment variables: {', '.join(missing)}. "
                f"Please create a .env file with these values (see .env.example)."
            )

    @classmethod
    def validate_embedder(cls) -> None:
        if not cls.EMBED_URL:
            raise ValueError(
                "Missing required environment variable: HLDX_EMBED_URL. "
                "Please create a .env file with this value (see .env.example)."
            )


BACKENDS = ("scripted", "replay", "http")
EMBEDDERS = ("tf", "http")
REFINE_ORDERS = ("document", "similarity")
PATH_FIELDS = ("fixture_path", "baseline_fixture_path", "record_path", "cache_path", "template_dir")


@dataclass(frozen=True)
class PipelineConfig:
    """Every setting of one pipeline run."""

    format: SerializationFormat = SerializationFormat.PLAIN
    max_tokens_per_segment: int = 512
    top_n: int = 3
    strategy: SummarizationStrategy = SummarizationStrategy.REFINE
    refine_order: str = "document"
    variant: PromptVariant = PromptVariant.TD_RSP
    mode: CompletionMode = CompletionMode.K_T_C
    shot_count: int = 1
    backend: str = "replay"
    fixture_path: Optional[str] = None
    baseline_fixture_path: Optional[str] = None
    record_path: Optional[str] = None
    cache_path: Optional[str] = None
    template_dir: Optional[str] = None
    embedder: str = "tf"
    parallelism: int = 4
    naive_context_tokens: int = 2048
    max_output_tokens: int = 256
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_tokens_per_segment < MIN_SEGMENT_TOKENS:
            raise ConfigError(f"max_tokens_per_segment must be >= {MIN_SEGMENT_TOKENS}")
        if self.top_n < 1:
            raise ConfigError("top_n must be >= 1")
        if not 0 <= self.shot_count <= MAX_SHOTS:
            raise ConfigError(f"shot_count must be in [0, {MAX_SHOTS}]")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.embedder not in EMBEDDERS:
            raise ConfigError(f"embedder must be one of {EMBEDDERS}, got {self.embedder!r}")
        if self.refine_order not in REFINE_ORDERS:
            raise ConfigError(f"refine_order must be one of {REFINE_ORDERS}, got {self.refine_order!r}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.naive_context_tokens < 1:
            raise ConfigError("naive_context_tokens must be >= 1")
        if self.max_output_tokens < 1:
            raise ConfigError("max_output_tokens must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")

    @classmethod
    def from_dict(cls, values: Dict[str, Any], base: Optional["PipelineConfig"] = None) -> "PipelineConfig":
        """
        Apply a dict of settings on top of base (default: built-in defaults).

        Raises:
            ConfigError: On unknown keys or invalid values
        """
        base = base or cls()
        if not values:
            return base
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        try:
            return replace(base, **{key: _coerce(key, value) for key, value in values.items()})
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid configuration value: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            key: (value.value if hasattr(value, "value") else value)
            for key, value in asdict(self).items()
        }


_INT_FIELDS = ("max_tokens_per_segment", "top_n", "shot_count", "parallelism",
               "naive_context_tokens", "max_output_tokens")


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        if key in PATH_FIELDS:
            return None
        raise ConfigError(f"{key} must not be null")
    if key == "format":
        return SerializationFormat.parse(value)
    if key == "strategy":
        return SummarizationStrategy.parse(value)
    if key == "variant":
        return PromptVariant.parse(value)
    if key == "mode":
        return CompletionMode.parse(value)
    if key in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {value!r}") from None
    if key == "temperature":
        return float(value)
    return str(value)


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a JSON config file into a dict of settings.

    Relative paths inside the file are resolved against the file's directory.

    Raises:
        ConfigError: If the file is missing, not JSON or not an object
    """
    path = Path(path)
    try:
        values = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(values, dict):
        raise ConfigError(f"Config file {path} must contain a JSON object")

    for key in PATH_FIELDS:
        if values.get(key) and not Path(values[key]).is_absolute():
            values[key] = str((path.parent / values[key]).resolve())
    # validate keys and values early
    PipelineConfig.from_dict(values)
    logger.info(f"Loaded pipeline config from {path}")
    return values


def resolve_config(
    file_values: Optional[Dict[str, Any]] = None,
    task_overrides: Optional[Dict[str, Any]] = None,
    cli_overrides: Optional[Dict[str, Any]] = None,
) -> PipelineConfig:
    """
    Merge settings with precedence: command line > task > config file > default.

    None values in cli_overrides mean "flag not given" and are ignored.
    """
    config = PipelineConfig.from_dict(file_values or {})
    config = PipelineConfig.from_dict(task_overrides or {}, base=config)
    flags = {key: value for key, value in (cli_overrides or {}).items() if value is not None}
    return PipelineConfig.from_dict(flags, base=config)
