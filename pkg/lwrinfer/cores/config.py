import os

from dotenv import load_dotenv

load_dotenv()

# environment variables
DEFAULT_CONFIG_PATH = os.getenv("LWRINFER_CONFIG", "")
LOG_LEVEL = os.getenv("LWRINFER_LOG_LEVEL", "INFO").upper()
WORKERS = int(os.getenv("LWRINFER_WORKERS", 1))
CHECKPOINT_EVERY = int(os.getenv("LWRINFER_CHECKPOINT_EVERY", 1000))
DEBUG_CACHES = os.getenv("LWRINFER_DEBUG", "false").lower() == "true"
PROGRESS_EVERY = int(os.getenv("LWRINFER_PROGRESS_EVERY", 500))

# numerical floor on predicted flows before taking logs (veh/min)
FLOW_FLOOR = 1e-3
# absolute tolerance for branch inversion of a fundamental diagram
ROOT_XTOL = 1e-12
# slack allowed on the CFL number before a step is refused
CFL_SLACK = 1e-12
