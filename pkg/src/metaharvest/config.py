"""Pipeline configuration from an INI file, overridable by command-line flags.

Example::

    [pipeline]
    base_url = https://oai.datacite.org/oai
    metadata_prefix = oai_datacite
    store_path = store
    archive_dir = pages
    report_dir = reports
    year_range = 1950-2020

    [registries]
    publishers = curation/publishers.csv
    data_centers = curation/data_centers.csv
    external_index = curation/known_dois.txt

    [cleaning]
    year_window = 1000-2099
    plausible_window = 1850-2031
    organization_tokens = university institute ...

    [language_overrides]
    castellano = es

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .cleaning import DEFAULT_CONFIG, CleaningConfig
from .errors import ConfigError
from .oai_client import DEFAULT_METADATA_PREFIX

ENV_VAR = "METAHARVEST_CONFIG"


def parse_year_range(value: str) -> tuple[int, int]:
    """``"1950-2020"`` or ``"1950,2020"`` -> ``(1950, 2020)``."""
    parts = value.replace(",", "-").split("-")
    if len(parts) != 2:
        raise ConfigError(f"year range must look like 1950-2020, got {value!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"year range must look like 1950-2020, got {value!r}") from None
    if lo > hi:
        raise ConfigError(f"year range {value!r} is empty")
    return lo, hi


@dataclass
class PipelineConfig:
    base_url: str | None = None
    metadata_prefix: str = DEFAULT_METADATA_PREFIX
    store_path: Path = Path("store")
    archive_dir: Path | None = None
    report_dir: Path = Path("reports")
    publishers: Path | None = None
    data_centers: Path | None = None
    external_index: Path | None = None
    year_range: tuple[int, int] = (1950, 2020)
    cleaning: CleaningConfig = field(default_factory=lambda: DEFAULT_CONFIG)
    source: Path | None = None

    @property
    def pages_dir(self) -> Path:
        return self.archive_dir if self.archive_dir is not None else self.store_path / "pages"

    def validate(self) -> None:
        lo, hi = self.year_range
        if lo > hi:
            raise ConfigError(f"year_range {lo}-{hi} is empty")
        for name in ("publishers", "data_centers", "external_index"):
            path = getattr(self, name)
            if path is not None and not path.is_file():
                raise ConfigError(f"{name} file not found: {path}")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "PipelineConfig":
        path = Path(path)
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keep language override keys as written
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base = path.parent

        def p(section: str, key: str) -> Path | None:
            value = parser.get(section, key, fallback="").strip()
            return (base / value) if value else None

        cfg = cls(source=path)
        cfg.base_url = parser.get("pipeline", "base_url", fallback=None) or None
        cfg.metadata_prefix = parser.get("pipeline", "metadata_prefix", fallback=DEFAULT_METADATA_PREFIX)
        cfg.store_path = p("pipeline", "store_path") or base / "store"
        cfg.archive_dir = p("pipeline", "archive_dir")
        cfg.report_dir = p("pipeline", "report_dir") or base / "reports"
        if parser.has_option("pipeline", "year_range"):
            cfg.year_range = parse_year_range(parser.get("pipeline", "year_range"))
        cfg.publishers = p("registries", "publishers")
        cfg.data_centers = p("registries", "data_centers")
        cfg.external_index = p("registries", "external_index")

        cleaning = DEFAULT_CONFIG
        if parser.has_option("cleaning", "year_window"):
            cleaning = replace(cleaning, year_window=parse_year_range(parser.get("cleaning", "year_window")))
        if parser.has_option("cleaning", "plausible_window"):
            cleaning = replace(cleaning,
                               plausible_window=parse_year_range(parser.get("cleaning", "plausible_window")))
        if parser.has_option("cleaning", "organization_tokens"):
            tokens = frozenset(t.casefold() for t in parser.get("cleaning", "organization_tokens").split())
            cleaning = replace(cleaning, organization_tokens=tokens)
        if parser.has_section("language_overrides"):
            overrides = tuple(sorted((k.casefold(), v.strip()) for k, v in parser.items("language_overrides")))
            cleaning = replace(cleaning, language_overrides=overrides)
        cfg.cleaning = cleaning
        return cfg


def load_config(path: str | os.PathLike | None = None) -> PipelineConfig:
    """Explicit path, else ``$METAHARVEST_CONFIG``, else built-in defaults."""
    path = path or os.environ.get(ENV_VAR)
    return PipelineConfig.from_file(path) if path else PipelineConfig()
