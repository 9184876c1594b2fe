import logging
from pathlib import Path
from typing import Union

# Configure logging
logger = logging.getLogger(__name__)

try:
    from config import MAX_INPUT_MB
except ImportError:
    import os
    MAX_INPUT_MB = int(os.getenv("RIDGECAST_MAX_INPUT_MB", "200"))

# Maximum file sizes (in bytes)
MAX_FILE_SIZE = MAX_INPUT_MB * 1024 * 1024
MAX_CONFIG_SIZE = 1 * 1024 * 1024    # 1MB

# Allowed file types
DATA_EXTENSIONS = {'.csv', '.txt'}
CONFIG_EXTENSIONS = {'.meta', '.plan', '.dgp', '.cfg', '.txt', '.ini'}
ALLOWED_MIME_TYPES = {
    'text/plain',
    'text/csv',
    'application/csv',
    'inode/x-empty',
}

try:
    import magic
    MAGIC_AVAILABLE = True
except ImportError:
    logger.warning("python-magic not available. MIME type validation will be skipped.")
    MAGIC_AVAILABLE = False


def validate_file(file_path: Union[str, Path], kind: str = "data") -> bool:
    """Validate an input file before parsing.

    Args:
        file_path: Path to the file to validate.
        kind: "data" for panel CSVs, "config" for sidecars, plans and DGP specs.

    Returns:
        bool: True if file is valid, False otherwise.
    """
    file_path = Path(file_path)
    allowed = DATA_EXTENSIONS if kind == "data" else CONFIG_EXTENSIONS
    size_limit = MAX_FILE_SIZE if kind == "data" else MAX_CONFIG_SIZE

    try:
        if not file_path.is_file():
            logger.warning(f"File does not exist: {file_path}")
            return False

        file_size = file_path.stat().st_size
        if file_size > size_limit:
            logger.warning(f"File too large ({file_size} bytes): {file_path}")
            return False

        if kind == "data" and file_path.suffix.lower() not in allowed:
            logger.warning(f"Invalid file extension: {file_path}")
            return False

        # Check MIME type if magic is available
        if MAGIC_AVAILABLE:
            try:
                mime = magic.Magic(mime=True)
                file_mime = mime.from_file(str(file_path))
                if file_mime not in ALLOWED_MIME_TYPES:
                    logger.warning(f"Invalid MIME type {file_mime}: {file_path}")
                    return False
            except Exception as e:
                logger.warning(f"Error checking MIME type for {file_path}: {str(e)}")
                return False

        return True

    except OSError as e:
        logger.error(f"Error validating file {file_path}: {str(e)}")
        return False


def validate_output_dir(directory: Union[str, Path]) -> Path:
    """Create the output directory if needed and check it is writable.

    Raises:
        OSError: If the directory cannot be created or written to.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    marker = directory / ".write_check"
    marker.write_text("")
    marker.unlink()
    return directory
