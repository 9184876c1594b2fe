# Package initializer for parsers

from .panel_parser import load_panel, write_panel
from .config_parser import parse_sidecar, write_sidecar, read_entries

__all__ = ['load_panel', 'write_panel', 'parse_sidecar', 'write_sidecar', 'read_entries']
