"""
Process-level settings for PBGLab.
Values are read from the environment (and an optional .env file at the project root).
"""
import logging
import os

from dotenv import load_dotenv

# Load .env file from project root, then the current directory as fallback
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
load_dotenv(dotenv_path=os.path.join(project_root, ".env"))
load_dotenv()

LOG_LEVEL = os.getenv("PBG_LOG_LEVEL", "INFO")

# Upper bound on cells in a rasterized grid or simulation domain
MAX_GRID_CELLS = int(os.getenv("PBG_MAX_GRID_CELLS", "4000000"))

# Worker count used when --jobs is not given
DEFAULT_JOBS = int(os.getenv("PBG_JOBS", "1"))

LOG_FORMAT = "[%(name)s] %(levelname)s %(message)s"


def configure_logging(level: str = None) -> None:
    """Configure root logging once for CLI and workflow entry points."""
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)
