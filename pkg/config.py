import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Worker parallelism (the CLI --threads flag wins over this)
RIDGECAST_THREADS = int(os.getenv("RIDGECAST_THREADS", "1"))

# Logging
LOG_LEVEL = os.getenv("RIDGECAST_LOG_LEVEL", "INFO")
LOG_FORMAT = os.getenv("RIDGECAST_LOG_FORMAT", "%(asctime)s - %(name)s - %(levelname)s - %(message)s")

# Output configuration
OUTPUT_DIR = os.getenv("RIDGECAST_OUT_DIR", "results")
FLOAT_FORMAT = os.getenv("RIDGECAST_FLOAT_FORMAT", "%.12g")

# Ingestion
MISSING_TOKEN = os.getenv("RIDGECAST_MISSING_TOKEN", "NA")
MAX_INPUT_MB = int(os.getenv("RIDGECAST_MAX_INPUT_MB", "200"))

# CI overrides
if os.getenv("CI"):
    LOG_LEVEL = os.getenv("RIDGECAST_LOG_LEVEL", "WARNING")
