import re
import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Union

from pydantic import ValidationError

from backend.ingestion.panel import Role, VariableMeta, group_tags
from backend.utils.errors import ConfigError
from backend.utils.validators import validate_file

logger = logging.getLogger(__name__)

ENTRY_PATTERN = re.compile(r'^\s*([A-Za-z0-9_.\-@]+)\s*=\s*(.*?)\s*$')


class ConfigEntry(NamedTuple):
    key: str
    value: str
    line: int


def read_entries(path: Union[str, Path]) -> List[ConfigEntry]:
    """Read ``key = value`` lines, skipping blanks and ``#`` comments.

    Raises:
        ConfigError: If the file is missing or a line is not a key-value pair.
    """
    path = Path(path)
    if not validate_file(path, kind="config"):
        raise ConfigError(f"Config file failed validation: {path}")

    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            match = ENTRY_PATTERN.match(line)
            if not match:
                raise ConfigError(f"Expected 'key = value' in {path.name}: {raw.strip()!r}", line=lineno)
            entries.append(ConfigEntry(match.group(1), match.group(2), lineno))
    logger.debug(f"Read {len(entries)} entries from {path}")
    return entries


def split_list(value: str) -> List[str]:
    return [item for item in re.split(r'[,\s]+', value.strip()) if item]


def as_bool(entry: ConfigEntry) -> bool:
    lowered = entry.value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"Expected a boolean for '{entry.key}', got {entry.value!r}", line=entry.line, key=entry.key)


def parse_sidecar(path: Union[str, Path]) -> Dict[str, VariableMeta]:
    """Parse a metadata sidecar.

    Each line reads ``<variable-id> = <role>[, <category>, <smallest-group>][, also:<cat>|<cat>][, lags:<n>]``.

    Returns:
        Mapping from variable id to its metadata.
    """
    schema: Dict[str, VariableMeta] = {}
    for entry in read_entries(path):
        if entry.key in schema:
            raise ConfigError(f"Duplicate variable id '{entry.key}' in sidecar", line=entry.line, key=entry.key)
        tokens = [t.strip() for t in entry.value.split(",") if t.strip()]
        if not tokens:
            raise ConfigError(f"Missing role for '{entry.key}'", line=entry.line, key=entry.key)

        fields = {"name": entry.key, "role": tokens[0]}
        positional = [t for t in tokens[1:] if ":" not in t]
        options = dict(t.split(":", 1) for t in tokens[1:] if ":" in t)
        try:
            if tokens[0] == Role.SURVEY.value:
                if len(positional) != 2:
                    raise ConfigError(
                        f"Survey variable '{entry.key}' needs '<category>, <smallest-group>'",
                        line=entry.line, key=entry.key,
                    )
                fields["survey_category"] = positional[0]
                fields["country_group_tags"] = group_tags(positional[1])
            elif positional:
                raise ConfigError(f"Only survey variables take a category and group: '{entry.key}'",
                                  line=entry.line, key=entry.key)
            if "also" in options:
                fields["extra_categories"] = frozenset(c for c in options.pop("also").split("|") if c)
            if "lags" in options:
                fields["lags"] = int(options.pop("lags"))
            if options:
                raise ConfigError(f"Unknown options {sorted(options)} for '{entry.key}'", line=entry.line, key=entry.key)
            schema[entry.key] = VariableMeta(**fields)
        except ConfigError as e:
            if e.line is not None:
                raise
            raise ConfigError(str(e), line=entry.line, key=entry.key) from e
        except (ValidationError, ValueError) as e:
            raise ConfigError(f"Invalid metadata for '{entry.key}': {e}", line=entry.line, key=entry.key) from e
    logger.info(f"Parsed metadata for {len(schema)} variables from {Path(path).name}")
    return schema


def format_sidecar_line(meta: VariableMeta) -> str:
    parts = [meta.role.value]
    if meta.role == Role.SURVEY:
        parts += [meta.survey_category, meta.smallest_group]
        if meta.extra_categories:
            parts.append("also:" + "|".join(sorted(meta.extra_categories)))
        if meta.lags != 2:
            parts.append(f"lags:{meta.lags}")
    return f"{meta.name} = {', '.join(parts)}"


def write_sidecar(schema: Dict[str, VariableMeta], path: Union[str, Path]) -> Path:
    """Write metadata in the sidecar format read by ``parse_sidecar``."""
    path = Path(path)
    lines = ["# variable-id = role[, category, smallest-group][, also:cat|cat][, lags:n]"]
    lines += [format_sidecar_line(schema[v]) for v in schema]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
