"""
Prompt template pack.

Templates are plain text files with {placeholder} fields. The default pack
ships in src/templates/; a different directory can be supplied through the
pipeline configuration.
"""

import logging
import string
from pathlib import Path
from typing import Dict, FrozenSet, Optional, Union

from src.exceptions import TemplateError

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATE_DIR = Path(__file__).resolve().parent / "templates"

# Template name -> placeholders it may use
TEMPLATE_FIELDS: Dict[str, FrozenSet[str]] = {
    "extract_base": frozenset({"keyword", "summary"}),
    "precision_clause": frozenset(),
    "shot_plain": frozenset(),
    "shot_precision": frozenset(),
    "refine_init": frozenset({"keyword", "segment"}),
    "refine_step": frozenset({"keyword", "current_summary", "segment"}),
    "map": frozenset({"keyword", "segment"}),
    "reduce": frozenset({"keyword", "map_outputs"}),
}


def _placeholders(text: str) -> FrozenSet[str]:
    try:
        return frozenset(name for _, name, _, _ in string.Formatter().parse(text) if name is not None)
    except ValueError as e:
        raise TemplateError(f"Template has unbalanced braces: {e}") from e


class TemplatePack:
    """The eight templates used by summarization and extraction."""

    def __init__(self, templates: Dict[str, str], source: str = "<memory>"):
        missing = sorted(set(TEMPLATE_FIELDS) - set(templates))
        if missing:
            raise TemplateError(f"Template pack {source} is missing: {', '.join(missing)}")
        for name, allowed in TEMPLATE_FIELDS.items():
            unknown = _placeholders(templates[name]) - allowed
            if unknown:
                raise TemplateError(
                    f"Template {name} in {source} uses unknown placeholders: {', '.join(sorted(unknown))}"
                )
        self.templates = {name: templates[name] for name in TEMPLATE_FIELDS}
        self.source = source

    @classmethod
    def load(cls, directory: Optional[Union[str, Path]] = None) -> "TemplatePack":
        """
        Read every template file from a directory.

        Args:
            directory: Template directory (default: the bundled pack)

        Raises:
            TemplateError: If a file is missing or uses an unknown placeholder
        """
        directory = Path(directory) if directory else DEFAULT_TEMPLATE_DIR
        templates = {}
        for name in TEMPLATE_FIELDS:
            path = directory / f"{name}.txt"
            if not path.is_file():
                raise TemplateError(f"Template file missing: {path}")
            templates[name] = path.read_text(encoding="utf-8").rstrip("\n")
        logger.debug(f"Loaded template pack from {directory}")
        return cls(templates, source=str(directory))

    def render(self, name: str, **values: str) -> str:
        template = self.templates[name]
        try:
            return template.format_map(values)
        except KeyError as e:
            raise TemplateError(f"Template {name} needs a value for {e.args[0]}") from e

    def text(self, name: str) -> str:
        return self.templates[name]


_default_pack: Optional[TemplatePack] = None


def default_templates() -> TemplatePack:
    global _default_pack
    if _default_pack is None:
        _default_pack = TemplatePack.load()
    return _default_pack
