#!/usr/bin/env python3
"""
Entry point for the hybrid long document extraction pipeline.

Usage:
    python run_extraction.py segment corpus/docs/acme_corp.json --max-tokens 64
    python run_extraction.py extract corpus/docs/acme_corp.json Revenue --config corpus/config.json
    python run_extraction.py evaluate corpus/tasks.jsonl --config corpus/config.json --baseline naive
    python run_extraction.py cache stats --cache .cache/llm.jsonl
"""

import logging
import sys

from src.cli import main
from src.config import Config

# Configure logging; stdout is reserved for command output
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[
        logging.StreamHandler(sys.stderr)
    ]
)


if __name__ == "__main__":
    sys.exit(main())
